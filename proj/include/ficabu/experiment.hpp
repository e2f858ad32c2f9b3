#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ficabu/cau.hpp"
#include "ficabu/dataset.hpp"
#include "ficabu/errors.hpp"
#include "ficabu/metrics.hpp"
#include "ficabu/model.hpp"
#include "ficabu/pipeline.hpp"
#include "ficabu/trainer.hpp"

namespace ficabu {

using json = nlohmann::json;

/// One experiment: dataset synthesis, model, trainer, unlearning setup,
/// simulator calibration. Parsed from a JSON file; all paths are relative
/// to that file. FICABU_OUTPUT_DIR overrides output_dir only.
struct ExperimentConfig {
    // dataset
    BlobSpec blobs;
    std::string dataset_dir;  // non-empty selects the tiny-image directory loader

    // model
    std::string arch = "mlp";  // mlp | tinycnn
    std::vector<std::uint32_t> hidden = {128, 64};

    TrainerConfig trainer;

    // unlearning
    DampeningParams params{10.0f, 1.0f};
    double tau = 0.2;
    std::uint32_t forget_class = 0;
    std::uint32_t batch_size = 64;  // N
    std::optional<std::set<std::uint32_t>> checkpoints;  // absent = default placement
    double b_r = 10.0;
    double c_m = std::numeric_limits<double>::quiet_NaN();  // NaN = derive from SSD counts
    bool int8 = false;
    MacConvention convention;

    PipelineConfig pipeline;
    PowerTable power;

    std::string output_dir = "out";
    std::filesystem::path base_dir = ".";

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }
    std::filesystem::path out_dir() const {
        if (const char* env = std::getenv("FICABU_OUTPUT_DIR")) return env;
        return resolve(output_dir);
    }
};

namespace cfgio {

template <typename T>
void opt(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

inline PipelineConfig parse_pipeline(const json& j) {
    PipelineConfig p;
    opt(j, "patch_dim", p.patch_dim);
    opt(j, "gemm_cycles_per_patch", p.gemm_cycles_per_patch);
    if (j.contains("fimd_stage_latencies")) {
        auto v = j.at("fimd_stage_latencies").get<std::vector<std::uint32_t>>();
        if (v.size() != 4) throw ConfigError("fimd_stage_latencies needs 4 values");
        std::copy(v.begin(), v.end(), p.fimd_stage_latencies.begin());
    }
    if (j.contains("damp_stage_latencies")) {
        auto v = j.at("damp_stage_latencies").get<std::vector<std::uint32_t>>();
        if (v.size() != 5) throw ConfigError("damp_stage_latencies needs 5 values");
        std::copy(v.begin(), v.end(), p.damp_stage_latencies.begin());
    }
    opt(j, "elements_per_cycle", p.elements_per_cycle);
    opt(j, "core_cycles_per_element", p.core_cycles_per_element);
    opt(j, "clock_hz", p.clock_hz);
    opt(j, "vta_macs_per_cycle", p.vta_macs_per_cycle);
    opt(j, "calibration_elements", p.calibration_elements);
    p.validate();
    return p;
}

inline PowerTable parse_power(const json& j) {
    PowerTable p;
    opt(j, "total", p.total);
    opt(j, "core", p.core);
    opt(j, "sram", p.sram);
    opt(j, "dma", p.dma);
    opt(j, "peripherals", p.peripherals);
    opt(j, "ddr", p.ddr);
    opt(j, "interconnect", p.interconnect);
    opt(j, "unlearning_engine", p.unlearning_engine);
    opt(j, "vta", p.vta);
    opt(j, "specialized_ips", p.specialized_ips);
    p.validate();
    return p;
}

}  // namespace cfgio

inline ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
    using cfgio::opt;
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        std::string type = d.value("type", "blobs");
        if (type == "blobs") {
            opt(d, "classes", cfg.blobs.classes);
            opt(d, "dims", cfg.blobs.dims);
            if (d.contains("samples_per_class")) {
                if (d.at("samples_per_class").is_array()) {
                    cfg.blobs.class_samples =
                        d.at("samples_per_class").get<std::vector<std::uint32_t>>();
                } else {
                    cfg.blobs.samples_per_class = d.at("samples_per_class").get<std::uint32_t>();
                }
            }
            opt(d, "seed", cfg.blobs.seed);
            opt(d, "spread", cfg.blobs.spread);
            opt(d, "separation", cfg.blobs.separation);
        } else if (type == "tiny_image_dir") {
            cfg.dataset_dir = d.at("path").get<std::string>();
        } else {
            throw ConfigError("unknown dataset type: " + type);
        }
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        opt(m, "arch", cfg.arch);
        opt(m, "hidden", cfg.hidden);
        if (cfg.arch != "mlp" && cfg.arch != "tinycnn") {
            throw ConfigError("model arch must be mlp or tinycnn");
        }
    }
    if (j.contains("trainer")) {
        const json& t = j.at("trainer");
        opt(t, "epochs", cfg.trainer.epochs);
        opt(t, "lr", cfg.trainer.lr);
        opt(t, "batch", cfg.trainer.batch);
        opt(t, "seed", cfg.trainer.seed);
    }
    if (j.contains("unlearn")) {
        const json& u = j.at("unlearn");
        opt(u, "alpha", cfg.params.alpha);
        opt(u, "lambda", cfg.params.lambda);
        opt(u, "tau", cfg.tau);
        opt(u, "forget_class", cfg.forget_class);
        opt(u, "batch_size", cfg.batch_size);
        if (u.contains("checkpoints")) {
            auto v = u.at("checkpoints").get<std::vector<std::uint32_t>>();
            cfg.checkpoints = std::set<std::uint32_t>(v.begin(), v.end());
        }
        opt(u, "b_r", cfg.b_r);
        opt(u, "c_m", cfg.c_m);
        opt(u, "int8", cfg.int8);
        opt(u, "gradient_cost_factor", cfg.convention.gradient_cost_factor);
        opt(u, "count_elementwise", cfg.convention.count_elementwise);
    }
    if (j.contains("pipeline")) {
        if (j.at("pipeline").is_string()) {
            auto path = base_dir / j.at("pipeline").get<std::string>();
            std::ifstream is(path);
            if (!is) throw FormatError("cannot read pipeline config: " + path.string());
            cfg.pipeline = cfgio::parse_pipeline(json::parse(is));
        } else {
            cfg.pipeline = cfgio::parse_pipeline(j.at("pipeline"));
        }
    }
    if (j.contains("power")) cfg.power = cfgio::parse_power(j.at("power"));
    cfgio::opt(j, "output_dir", cfg.output_dir);
    return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read config: " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j, std::filesystem::path(path).parent_path());
}

// --- experiment pieces --------------------------------------------------------

inline Dataset dataset_from(const ExperimentConfig& cfg) {
    if (!cfg.dataset_dir.empty()) {
        return load_tiny_image_dir(cfg.resolve(cfg.dataset_dir).string());
    }
    return make_blobs(cfg.blobs, cfg.arch == "tinycnn");
}

inline Model build_model(const ExperimentConfig& cfg, const Dataset& ds) {
    Model m = cfg.arch == "tinycnn"
                  ? Model::tiny_cnn(ds.input_shape.at(1), ds.input_shape.at(2), ds.classes)
                  : Model::mlp(static_cast<std::uint32_t>(Tensor::numel_of(ds.input_shape)),
                               cfg.hidden, ds.classes);
    if (cfg.int8) m.set_quantized_inference(true);
    return m;
}

inline std::string experiment_ident(const ExperimentConfig& cfg, const Dataset& ds) {
    return ds.digest + "|" + cfg.arch + "|fc" + std::to_string(cfg.forget_class);
}

inline UnlearnConfig unlearn_config(const ExperimentConfig& cfg, const Model& model,
                                    UnlearnMode mode, double c_m_override) {
    UnlearnConfig u;
    u.params = cfg.params;
    u.tau = cfg.tau;
    u.batch_size = cfg.batch_size;
    u.mode = mode;
    u.convention = cfg.convention;
    if (mode != UnlearnMode::ssd_full) {
        u.checkpoints = cfg.checkpoints ? *cfg.checkpoints : default_checkpoints(model.depth());
    }
    if (mode == UnlearnMode::cau_balanced) {
        ProfileParams p;
        p.b_r = cfg.b_r;
        p.c_m = c_m_override;
        p.depth = model.depth();
        u.profile = p;
    }
    return u;
}

/// Selection-count distribution of a plain SSD pass without touching the
/// model (profiling input for the c_m derivation).
inline std::vector<std::uint64_t> ssd_selection_counts(const Model& model, const Batch& forget,
                                                       const ImportanceMap& global_imp,
                                                       const DampeningParams& params) {
    Model scratch = model;
    UnlearnOutcome out = run_ssd_baseline(scratch, forget, global_imp, params);
    std::vector<std::uint64_t> counts;
    for (const auto& layer : out.report.layers) counts.push_back(layer.selected);
    return counts;
}

// --- JSON report records ------------------------------------------------------

inline json ledger_to_json(const MacLedger& ledger) {
    return json{{"forward_pass", ledger.forward_pass},
                {"gradient_pass", ledger.gradient_pass},
                {"checkpoint_partial_inference", ledger.checkpoint_partial_inference},
                {"dampening_ops", ledger.dampening_ops},
                {"total", ledger.total()},
                {"ratio_vs_ssd", ledger.ratio_vs_ssd}};
}

inline MacLedger ledger_from_json(const json& j) {
    MacLedger ledger;
    ledger.forward_pass = j.at("forward_pass").get<std::uint64_t>();
    ledger.gradient_pass = j.at("gradient_pass").get<std::vector<std::uint64_t>>();
    ledger.checkpoint_partial_inference =
        j.at("checkpoint_partial_inference").get<std::uint64_t>();
    ledger.dampening_ops = j.at("dampening_ops").get<std::uint64_t>();
    ledger.ratio_vs_ssd = j.at("ratio_vs_ssd").get<double>();
    if (ledger.total() != j.at("total").get<std::uint64_t>()) {
        throw FormatError("ledger total does not equal the sum of its counters");
    }
    return ledger;
}

inline json report_to_json(const DampeningReport& rep) {
    json layers = json::array();
    for (const auto& l : rep.layers) {
        layers.push_back(json{{"layer", l.layer},
                              {"params", l.param_count},
                              {"selected", l.selected},
                              {"beta_min", l.beta_min},
                              {"beta_mean", l.beta_mean},
                              {"alpha_used", l.alpha_used},
                              {"lambda_used", l.lambda_used}});
    }
    return json{{"layers", layers}, {"total_modified", rep.total_modified()}};
}

inline json outcome_to_json(const UnlearnOutcome& out) {
    json trace = json::array();
    for (const auto& [l, acc] : out.forget_acc_trace) {
        trace.push_back(json{{"layer", l}, {"forget_acc", acc}});
    }
    return json{{"mode", unlearn_mode_name(out.mode)},
                {"stop_layer", out.stop_layer},
                {"forget_acc_trace", trace},
                {"ledger", ledger_to_json(out.ledger)},
                {"dampening", report_to_json(out.report)}};
}

inline json sim_report_to_json(const SimReport& rep) {
    json stages = json::array();
    const char* names[3] = {"gemm", "fimd", "dampening"};
    for (int s = 0; s < 3; ++s) {
        stages.push_back(json{{"stage", names[s]},
                              {"busy", rep.stages[s].busy},
                              {"stall", rep.stages[s].stall},
                              {"elements", rep.stages[s].elements}});
    }
    json j{{"total_cycles", rep.total_cycles},
           {"stages", stages},
           {"total_patches", rep.total_patches},
           {"total_elements", rep.total_elements},
           {"patches_per_cycle", rep.patches_per_cycle},
           {"steady_interval", rep.steady_interval},
           {"hidden", rep.hidden},
           {"calibrated_model", rep.calibrated_model}};
    if (!rep.energy_mj.empty()) {
        j["energy_mj"] = rep.energy_mj;
        j["energy_ratio_vs_baseline"] = rep.energy_ratio_vs_baseline;
    }
    return j;
}

// --- ledger -> simulator workload ----------------------------------------------

/// Gradient-stream workload of the layers an outcome actually processed:
/// per layer, stream elements = eligible parameter count, full patches of
/// patch_dim^2 elements plus a remainder patch.
inline Workload workload_from_outcome(const Model& model, const UnlearnOutcome& out,
                                      const PipelineConfig& cfg) {
    Workload w;
    const std::uint64_t pe = cfg.patch_elements();
    for (std::uint32_t l = 1; l <= out.stop_layer && l <= model.depth(); ++l) {
        const Layer& ly = model.param_layer(l);
        std::uint64_t elements = 0;
        if (ly.weight_eligible) elements += ly.weight.numel();
        if (ly.bias_eligible) elements += ly.bias.numel();
        if (!elements) continue;
        w.push_back({l, (elements + pe - 1) / pe, elements});
    }
    return w;
}

/// Inference-side cycles (forward pass + checkpoint partial inference) on
/// the GEMM engine, outside the 3-stage unlearning pipeline.
inline std::uint64_t inference_cycles(const MacLedger& ledger, const PipelineConfig& cfg) {
    std::uint64_t macs = ledger.forward_pass + ledger.checkpoint_partial_inference;
    return (macs + cfg.vta_macs_per_cycle - 1) / cfg.vta_macs_per_cycle;
}

struct EnergyComparison {
    SimReport ficabu;            // pipeline report for the given outcome
    std::uint64_t ficabu_total_cycles = 0;
    std::uint64_t baseline_total_cycles = 0;
    double ficabu_mj = 0.0;
    double baseline_mj = 0.0;
    double ratio_pct = 0.0;      // ficabu energy as percent of the SSD baseline
};

/// FiCABU processor (3-stage pipeline + GEMM inference work) against the
/// same outcome's SSD workload on a processor without the specialized IPs,
/// where Fisher and dampening run on the scalar core.
inline EnergyComparison compare_energy(const Model& model, const UnlearnOutcome& ours,
                                       const UnlearnOutcome& ssd, const PipelineConfig& cfg,
                                       const PowerTable& power) {
    EnergyComparison cmp;
    Workload ours_w = workload_from_outcome(model, ours, cfg);
    if (!ours_w.empty()) {
        cmp.ficabu = simulate_stream(ours_w, cfg);
    }
    cmp.ficabu_total_cycles = cmp.ficabu.total_cycles + inference_cycles(ours.ledger, cfg);

    // Baseline: same GEMM patch stream, Fisher + dampening at
    // core_cycles_per_element each, serialized.
    Workload ssd_w = workload_from_outcome(model, ssd, cfg);
    std::uint64_t ssd_patches = 0, ssd_elements = 0;
    for (const auto& e : ssd_w) {
        ssd_patches += e.patches;
        ssd_elements += e.elements;
    }
    double core_cycles = 2.0 * cfg.core_cycles_per_element * static_cast<double>(ssd_elements);
    cmp.baseline_total_cycles = ssd_patches * cfg.gemm_cycles_per_patch +
                                static_cast<std::uint64_t>(core_cycles) +
                                inference_cycles(ssd.ledger, cfg);

    auto fic = estimate_energy(cmp.ficabu_total_cycles, cfg, power, ficabu_components());
    auto base = estimate_energy(cmp.baseline_total_cycles, cfg, power, baseline_components());
    cmp.ficabu_mj = fic["total"];
    cmp.baseline_mj = base["total"];
    cmp.ratio_pct = cmp.baseline_mj > 0.0 ? 100.0 * cmp.ficabu_mj / cmp.baseline_mj : 0.0;
    cmp.ficabu.energy_mj = fic;
    cmp.ficabu.energy_ratio_vs_baseline = cmp.ratio_pct;
    return cmp;
}

// --- one full toy run (train -> importance -> SSD / CAU / balanced) ------------

struct SeedRun {
    Dataset dataset;
    Model trained;  // pre-unlearning model
    TrainStats train_stats;
    ImportanceMap global_imp;
    Batch forget;
    double baseline_retain = 0.0, baseline_forget = 0.0;

    Model ssd_model, cau_model, bal_model;
    UnlearnOutcome ssd, cau, bal;
    double ssd_retain = 0.0, ssd_forget = 0.0;
    double cau_retain = 0.0, cau_forget = 0.0;
    double bal_retain = 0.0, bal_forget = 0.0;
    double derived_c_m = 0.0;
    std::string ident;
};

/// Runs the whole comparison for one seed offset. Every randomized stage
/// (dataset, init, shuffling) derives from the config seeds plus the offset.
inline SeedRun run_seed_experiment(ExperimentConfig cfg, std::uint64_t seed_offset) {
    cfg.blobs.seed += seed_offset;
    cfg.trainer.seed += seed_offset;

    SeedRun run;
    run.dataset = dataset_from(cfg);
    run.trained = build_model(cfg, run.dataset);
    run.trained.init_random(cfg.trainer.seed);
    run.train_stats = train_sgd(run.trained, run.dataset, cfg.trainer);
    run.ident = experiment_ident(cfg, run.dataset);

    run.global_imp = estimate_importance(run.trained, run.dataset.train, SourceTag::global_data);
    run.forget = forget_batch(run.dataset, cfg.forget_class, cfg.batch_size);

    Batch retain_test = filter_class(run.dataset.test, cfg.forget_class, false);
    Batch forget_test = filter_class(run.dataset.test, cfg.forget_class, true);
    run.baseline_retain = evaluate_accuracy(run.trained, retain_test);
    run.baseline_forget = evaluate_accuracy(run.trained, forget_test);

    run.ssd_model = run.trained;
    run.ssd = run_ssd_baseline(run.ssd_model, run.forget, run.global_imp, cfg.params,
                               cfg.convention);
    run.ssd_retain = evaluate_accuracy(run.ssd_model, retain_test);
    run.ssd_forget = evaluate_accuracy(run.ssd_model, forget_test);

    run.cau_model = run.trained;
    run.cau = run_unlearning(run.cau_model, run.forget, run.global_imp,
                             unlearn_config(cfg, run.cau_model, UnlearnMode::cau, 0.0));
    run.cau_retain = evaluate_accuracy(run.cau_model, retain_test);
    run.cau_forget = evaluate_accuracy(run.cau_model, forget_test);

    std::vector<std::uint64_t> counts;
    for (const auto& layer : run.ssd.report.layers) counts.push_back(layer.selected);
    run.derived_c_m = std::isnan(cfg.c_m) ? derive_profile_midpoint(counts) : cfg.c_m;

    run.bal_model = run.trained;
    run.bal = run_unlearning(
        run.bal_model, run.forget, run.global_imp,
        unlearn_config(cfg, run.bal_model, UnlearnMode::cau_balanced, run.derived_c_m));
    run.bal_retain = evaluate_accuracy(run.bal_model, retain_test);
    run.bal_forget = evaluate_accuracy(run.bal_model, forget_test);
    return run;
}

}  // namespace ficabu
