#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ficabu/experiment.hpp"

namespace ficabu::cli {

namespace fs = std::filesystem;

inline const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const CacheMissError*>(&e)) return "cache_miss";
    if (dynamic_cast<const NonFiniteError*>(&e)) return "non_finite";
    if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
    if (dynamic_cast<const EmptyInputError*>(&e)) return "empty_input";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const UndefinedRprError*>(&e)) return "undefined_rpr";
    return "error";
}

inline void write_json_file(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

inline json read_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + " is not valid JSON: " + e.what());
    }
}

/// Outcome record shared by unlearn/simulate/report: accuracies on the
/// held-out retain/forget splits plus the machine-readable outcome.
struct UnlearnRecord {
    std::string mode;
    std::uint32_t stop_layer = 0;
    std::uint32_t batch_size = 0;
    std::uint32_t forget_class = 0;
    std::string ident;
    std::string model_path;  // updated checkpoint, relative to the record
    double baseline_retain = 0, baseline_forget = 0;
    double post_retain = 0, post_forget = 0;
    MacLedger ledger;
    json raw;  // full outcome json (trace, dampening, ...)
};

inline UnlearnRecord read_unlearn_record(const fs::path& path) {
    json j = read_json_file(path);
    UnlearnRecord r;
    r.raw = j;
    r.mode = j.at("mode").get<std::string>();
    r.stop_layer = j.at("stop_layer").get<std::uint32_t>();
    r.batch_size = j.at("batch_size").get<std::uint32_t>();
    r.forget_class = j.at("forget_class").get<std::uint32_t>();
    r.ident = j.at("ident").get<std::string>();
    r.model_path = j.at("model").get<std::string>();
    r.baseline_retain = j.at("baseline").at("retain_acc").get<double>();
    r.baseline_forget = j.at("baseline").at("forget_acc").get<double>();
    r.post_retain = j.at("post").at("retain_acc").get<double>();
    r.post_forget = j.at("post").at("forget_acc").get<double>();
    r.ledger = ledger_from_json(j.at("ledger"));
    return r;
}

inline int cmd_train(const std::string& config_path, std::string out) {
    ExperimentConfig cfg = load_config_file(config_path);
    Dataset ds = dataset_from(cfg);
    Model model = build_model(cfg, ds);
    model.init_random(cfg.trainer.seed);
    TrainStats stats = train_sgd(model, ds, cfg.trainer);

    fs::path out_path = out.empty() ? cfg.out_dir() / "model.fcbm" : fs::path(out);
    fs::create_directories(out_path.parent_path().empty() ? "." : out_path.parent_path());
    model.save_file(out_path.string());
    json j{{"model", out_path.string()},
           {"train_acc", stats.train_acc},
           {"test_acc", stats.test_acc},
           {"final_loss", stats.final_loss},
           {"epochs_run", stats.epochs_run}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

inline int cmd_importance(const std::string& config_path, const std::string& model_path,
                          std::string out) {
    ExperimentConfig cfg = load_config_file(config_path);
    Dataset ds = dataset_from(cfg);
    Model model = Model::load_file(model_path);
    ImportanceMap imp = estimate_importance(model, ds.train, SourceTag::global_data);
    fs::path out_path = out.empty() ? cfg.out_dir() / "importance.fcbi" : fs::path(out);
    fs::create_directories(out_path.parent_path().empty() ? "." : out_path.parent_path());
    save_importance(imp, out_path.string());
    json j{{"importance", out_path.string()}, {"sample_count", imp.sample_count}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

inline int cmd_unlearn(const std::string& config_path, const std::string& model_path,
                       const std::string& importance_path, const std::string& mode_name,
                       std::string out_model, std::string out_report,
                       const std::string& ssd_report) {
    ExperimentConfig cfg = load_config_file(config_path);
    Dataset ds = dataset_from(cfg);
    Model model = Model::load_file(model_path);
    if (cfg.int8) model.set_quantized_inference(true);
    ImportanceMap global_imp = load_importance(importance_path, model);

    UnlearnMode mode;
    if (mode_name == "ssd_full") {
        mode = UnlearnMode::ssd_full;
    } else if (mode_name == "cau") {
        mode = UnlearnMode::cau;
    } else if (mode_name == "cau_balanced") {
        mode = UnlearnMode::cau_balanced;
    } else {
        throw ConfigError("mode must be ssd_full, cau or cau_balanced");
    }

    Batch forget = forget_batch(ds, cfg.forget_class, cfg.batch_size);
    Batch retain_test = filter_class(ds.test, cfg.forget_class, false);
    Batch forget_test = filter_class(ds.test, cfg.forget_class, true);
    double baseline_retain = evaluate_accuracy(model, retain_test);
    double baseline_forget = evaluate_accuracy(model, forget_test);

    std::optional<UnlearnRecord> ssd_rec;
    if (!ssd_report.empty()) ssd_rec = read_unlearn_record(ssd_report);

    double c_m = cfg.c_m;
    if (mode == UnlearnMode::cau_balanced && std::isnan(c_m)) {
        std::vector<std::uint64_t> counts;
        if (ssd_rec) {
            for (const auto& layer : ssd_rec->raw.at("dampening").at("layers")) {
                counts.push_back(layer.at("selected").get<std::uint64_t>());
            }
        } else {
            counts = ssd_selection_counts(model, forget, global_imp, cfg.params);
        }
        c_m = derive_profile_midpoint(counts);
    }

    UnlearnOutcome outcome =
        run_unlearning(model, forget, global_imp, unlearn_config(cfg, model, mode, c_m));
    double post_retain = evaluate_accuracy(model, retain_test);
    double post_forget = evaluate_accuracy(model, forget_test);

    fs::path out_dir = cfg.out_dir();
    fs::path model_out =
        out_model.empty() ? out_dir / ("model_" + mode_name + ".fcbm") : fs::path(out_model);
    fs::create_directories(model_out.parent_path().empty() ? "." : model_out.parent_path());
    model.save_file(model_out.string());

    json j = outcome_to_json(outcome);
    j["batch_size"] = cfg.batch_size;
    j["forget_class"] = cfg.forget_class;
    j["ident"] = experiment_ident(cfg, ds);
    j["model"] = model_out.string();
    j["baseline"] = json{{"retain_acc", baseline_retain}, {"forget_acc", baseline_forget}};
    j["post"] = json{{"retain_acc", post_retain}, {"forget_acc", post_forget}};
    if (mode == UnlearnMode::cau_balanced) j["c_m"] = c_m;
    if (ssd_rec) {
        RunEval base_eval{ssd_rec->baseline_retain, ssd_rec->baseline_forget, 0, ssd_rec->ident};
        RunEval ssd_eval{ssd_rec->post_retain, ssd_rec->post_forget, ssd_rec->ledger.total(),
                         ssd_rec->ident};
        RunEval ours_eval{post_retain, post_forget, outcome.ledger.total(),
                          experiment_ident(cfg, ds)};
        ComparisonResult cmp = compare_runs(base_eval, ssd_eval, ours_eval);
        j["comparison"] = json{
            {"delta_retain_pp", cmp.ours.delta_retain_pp},
            {"mac_ratio_pct", cmp.ours.mac_ratio_pct},
            {"rpr_pct", cmp.ours.rpr_pct ? json(*cmp.ours.rpr_pct) : json(nullptr)}};
    }

    fs::path report_out = out_report.empty() ? out_dir / ("outcome_" + mode_name + ".json")
                                             : fs::path(out_report);
    write_json_file(report_out, j);
    fs::path damp_out = report_out;
    damp_out.replace_extension(".dampening.txt");
    std::ofstream damp_os(damp_out);
    damp_os << outcome.report.to_text();
    std::cout << j.dump(2) << "\n";
    return 0;
}

/// Standalone workload file: JSON array of {layer, patches, elements}.
inline Workload read_workload_file(const fs::path& path) {
    json j = read_json_file(path);
    Workload w;
    for (const auto& entry : j) {
        w.push_back({entry.at("layer").get<std::uint32_t>(),
                     entry.at("patches").get<std::uint64_t>(),
                     entry.at("elements").get<std::uint64_t>()});
    }
    return w;
}

inline int cmd_simulate(const std::string& config_path, const std::string& outcome_path,
                        const std::string& workload_path, std::string out) {
    ExperimentConfig cfg = load_config_file(config_path);

    if (!workload_path.empty()) {
        Workload w = read_workload_file(workload_path);
        SimReport rep = simulate_stream(w, cfg.pipeline);
        rep.energy_mj =
            estimate_energy(rep.total_cycles, cfg.pipeline, cfg.power, ficabu_components());
        json j = sim_report_to_json(rep);
        fs::path out_path = out.empty() ? cfg.out_dir() / "sim.json" : fs::path(out);
        write_json_file(out_path, j);
        std::cout << rep.to_text();
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    UnlearnRecord rec = read_unlearn_record(outcome_path);
    fs::path model_path(rec.model_path);
    if (!fs::exists(model_path) && !model_path.is_absolute()) {
        model_path = fs::path(outcome_path).parent_path() / model_path;
    }
    Model model = Model::load_file(model_path.string());

    UnlearnOutcome ours;
    ours.stop_layer = rec.stop_layer;
    ours.ledger = rec.ledger;

    // The SSD reference workload on the baseline processor: every layer
    // processed, no checkpoints.
    UnlearnOutcome ssd;
    ssd.stop_layer = model.depth();
    ssd.ledger.forward_pass = forward_macs(model, rec.batch_size);
    ssd.ledger.gradient_pass.assign(model.depth(), 0);
    for (std::uint32_t l = 1; l <= model.depth(); ++l) {
        ssd.ledger.gradient_pass[l - 1] = static_cast<std::uint64_t>(
            cfg.convention.gradient_cost_factor *
            static_cast<double>(count_macs_layer(model.param_layer(l).spec, rec.batch_size)));
    }

    json j;
    if (ours.ledger.total() == 0) {
        j = json{{"total_cycles", 0}, {"note", "empty ledger: zero-cycle report"}};
    } else {
        EnergyComparison cmp = compare_energy(model, ours, ssd, cfg.pipeline, cfg.power);
        j = sim_report_to_json(cmp.ficabu);
        j["ficabu_total_cycles"] = cmp.ficabu_total_cycles;
        j["baseline_total_cycles"] = cmp.baseline_total_cycles;
        j["ficabu_mj"] = cmp.ficabu_mj;
        j["baseline_mj"] = cmp.baseline_mj;
        j["energy_ratio_vs_baseline"] = cmp.ratio_pct;
        j["energy_saving_pct"] = 100.0 - cmp.ratio_pct;
        std::cout << cmp.ficabu.to_text();
    }
    fs::path out_path = out.empty() ? cfg.out_dir() / "sim.json" : fs::path(out);
    write_json_file(out_path, j);
    std::cout << j.dump(2) << "\n";
    return 0;
}

inline int cmd_report(const std::string& ssd_path, const std::string& ours_path,
                      const std::string& sim_path, std::string out) {
    UnlearnRecord ssd = read_unlearn_record(ssd_path);
    UnlearnRecord ours = read_unlearn_record(ours_path);

    RunEval baseline{ssd.baseline_retain, ssd.baseline_forget, 0, ssd.ident};
    RunEval ssd_eval{ssd.post_retain, ssd.post_forget, ssd.ledger.total(), ssd.ident};
    RunEval ours_eval{ours.post_retain, ours.post_forget, ours.ledger.total(), ours.ident};
    ComparisonResult cmp = compare_runs(baseline, ssd_eval, ours_eval);
    if (!sim_path.empty()) {
        json sim = read_json_file(sim_path);
        if (sim.contains("energy_saving_pct")) {
            cmp.ours.energy_saving_pct = sim.at("energy_saving_pct").get<double>();
        }
    }

    json j{{"ident", ssd.ident},
           {"baseline", {{"retain_acc", ssd.baseline_retain}, {"forget_acc", ssd.baseline_forget}}},
           {"ssd",
            {{"retain_acc", cmp.ssd.retain_acc},
             {"forget_acc", cmp.ssd.forget_acc},
             {"delta_retain_pp", cmp.ssd.delta_retain_pp},
             {"mac_ratio_pct", cmp.ssd.mac_ratio_pct},
             {"rpr_pct", nullptr},
             {"mia", nullptr}}},
           {"ours",
            {{"retain_acc", cmp.ours.retain_acc},
             {"forget_acc", cmp.ours.forget_acc},
             {"delta_retain_pp", cmp.ours.delta_retain_pp},
             {"mac_ratio_pct", cmp.ours.mac_ratio_pct},
             {"mia", nullptr}}}};
    j["ours"]["rpr_pct"] = cmp.ours.rpr_pct ? json(*cmp.ours.rpr_pct) : json(nullptr);
    j["ours"]["energy_saving_pct"] =
        cmp.ours.energy_saving_pct ? json(*cmp.ours.energy_saving_pct) : json(nullptr);

    std::string table = format_comparison_table(ssd.baseline_retain, ssd.baseline_forget, cmp);
    j["table"] = table;
    if (!out.empty()) write_json_file(out, j);
    std::cout << table;
    std::cout << j.dump(2) << "\n";
    return 0;
}

inline int cmd_sweep(const std::string& config_path, std::uint32_t seeds, std::string out) {
    ExperimentConfig cfg = load_config_file(config_path);
    json rows = json::array();
    std::uint32_t forgotten = 0, retained = 0, mac_wins = 0, rpr_wins = 0, trend_hits = 0;
    for (std::uint32_t seed = 0; seed < seeds; ++seed) {
        SeedRun run = run_seed_experiment(cfg, seed);
        bool forgot = run.cau_forget <= cfg.tau;
        bool kept = (run.baseline_retain - run.cau_retain) <= 0.05;
        bool cheaper = run.cau.ledger.ratio_vs_ssd < 100.0;
        bool balanced_kept = run.bal_retain >= run.cau_retain;
        forgotten += forgot;
        retained += kept;
        mac_wins += cheaper;
        rpr_wins += balanced_kept;
        trend_hits += forgot && kept && cheaper;
        std::uint64_t params = 0;
        for (std::uint32_t l = 1; l <= run.trained.depth(); ++l) {
            params += run.trained.param_layer(l).param_count();
        }
        rows.push_back(json{{"seed", seed},
                            {"train_acc", run.train_stats.test_acc},
                            {"baseline_retain", run.baseline_retain},
                            {"baseline_forget", run.baseline_forget},
                            {"ssd_retain", run.ssd_retain},
                            {"ssd_forget", run.ssd_forget},
                            {"ssd_modified_fraction",
                             static_cast<double>(run.ssd.report.total_modified()) /
                                 static_cast<double>(params)},
                            {"cau_retain", run.cau_retain},
                            {"cau_forget", run.cau_forget},
                            {"bal_retain", run.bal_retain},
                            {"bal_forget", run.bal_forget},
                            {"cau_stop_layer", run.cau.stop_layer},
                            {"bal_stop_layer", run.bal.stop_layer},
                            {"cau_mac_ratio", run.cau.ledger.ratio_vs_ssd},
                            {"bal_mac_ratio", run.bal.ledger.ratio_vs_ssd},
                            {"derived_c_m", run.derived_c_m}});
    }
    json j{{"seeds", seeds},
           {"forget_hits", forgotten},
           {"retain_hits", retained},
           {"mac_wins", mac_wins},
           {"trend_hits", trend_hits},
           {"balanced_retain_wins", rpr_wins},
           {"runs", rows}};
    fs::path out_path = out.empty() ? cfg.out_dir() / "sweep.json" : fs::path(out);
    write_json_file(out_path, j);
    std::cout << j.dump(2) << "\n";
    return 0;
}

/// Entry point shared by the binary and the tests. Failures leave a
/// machine-readable error record on stderr and a nonzero exit code.
inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"fisher-based context-adaptive balanced unlearning workbench"};
    app.require_subcommand(1);

    std::string config, model, importance, mode = "cau", out, out_model, out_report;
    std::string outcome, workload, ssd_report, ours_report, sim_report;
    std::uint32_t seeds = 10;

    CLI::App* train = app.add_subcommand("train", "train a toy model and write a checkpoint");
    train->add_option("--config", config)->required();
    train->add_option("--out", out);

    CLI::App* imp = app.add_subcommand("importance", "store the global diagonal Fisher");
    imp->add_option("--config", config)->required();
    imp->add_option("--model", model)->required();
    imp->add_option("--out", out);

    CLI::App* unl = app.add_subcommand("unlearn", "run ssd_full, cau or cau_balanced");
    unl->add_option("--config", config)->required();
    unl->add_option("--model", model)->required();
    unl->add_option("--importance", importance)->required();
    unl->add_option("--mode", mode);
    unl->add_option("--out-model", out_model);
    unl->add_option("--out-report", out_report);
    unl->add_option("--ssd-report", ssd_report);

    CLI::App* sim = app.add_subcommand("simulate", "cycle/energy model for an outcome");
    sim->add_option("--config", config)->required();
    sim->add_option("--outcome", outcome);
    sim->add_option("--workload", workload);
    sim->add_option("--out", out);

    CLI::App* rep = app.add_subcommand("report", "baseline/SSD/ours comparison table");
    rep->add_option("--ssd", ssd_report)->required();
    rep->add_option("--ours", ours_report)->required();
    rep->add_option("--sim", sim_report);
    rep->add_option("--out", out);

    CLI::App* sweep = app.add_subcommand("sweep", "seed sweep of the full pipeline");
    sweep->add_option("--config", config)->required();
    sweep->add_option("--seeds", seeds);
    sweep->add_option("--out", out);

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(config, out);
        if (imp->parsed()) return cmd_importance(config, model, out);
        if (unl->parsed()) {
            return cmd_unlearn(config, model, importance, mode, out_model, out_report,
                               ssd_report);
        }
        if (sim->parsed()) {
            if (outcome.empty() && workload.empty()) {
                throw ConfigError("simulate needs --outcome or --workload");
            }
            return cmd_simulate(config, outcome, workload, out);
        }
        if (rep->parsed()) return cmd_report(ssd_report, ours_report, sim_report, out);
        if (sweep->parsed()) return cmd_sweep(config, seeds, out);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        json err{{"error", error_kind(e)}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
}

}  // namespace ficabu::cli
