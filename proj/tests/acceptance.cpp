// End-to-end acceptance suite. Each test covers one release criterion and
// prints a single [PASS]/[FAIL] line; thresholds are pinned in code.
#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

#include "fd_oracle.hpp"
#include "ficabu/cli.hpp"
#include "ficabu/experiment.hpp"

using namespace ficabu;

namespace {

void report_criterion(int n, const std::string& what) {
    std::printf("[%s] criterion %d: %s\n",
                ::testing::Test::HasFailure() ? "FAIL" : "PASS", n, what.c_str());
    std::fflush(stdout);
}

/// The shipped toy experiment: 5 blob classes in 16 dimensions with the
/// forget class held near 5% of the training data (the regime where the
/// alpha = 10 selection rule can fire; a class holding fraction q of the
/// data caps the importance ratio near 1/q).
ExperimentConfig toy_config() {
    ExperimentConfig cfg;
    cfg.blobs.classes = 5;
    cfg.blobs.dims = 16;
    cfg.blobs.class_samples = {80, 500, 500, 500, 500};
    cfg.blobs.spread = 1.0;
    cfg.blobs.separation = 7.5;
    cfg.blobs.seed = 1;
    cfg.hidden = {128, 64};
    cfg.trainer.epochs = 50;
    cfg.trainer.lr = 0.05;
    cfg.trainer.batch = 32;
    cfg.trainer.seed = 7;
    cfg.params = {10.0f, 1.0f};
    cfg.tau = 0.2;  // random-guess level for 5 classes
    cfg.batch_size = 64;
    cfg.forget_class = 0;
    cfg.b_r = 10.0;
    return cfg;
}

const std::vector<SeedRun>& sweep() {
    static std::vector<SeedRun> runs = [] {
        std::vector<SeedRun> r;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            r.push_back(run_seed_experiment(toy_config(), seed));
        }
        return r;
    }();
    return runs;
}

std::string model_bytes(const Model& m) {
    std::ostringstream os;
    m.save(os);
    return os.str();
}

}  // namespace

TEST(Acceptance, C01_FisherMatchesFiniteDifferenceOracle) {
    auto t0 = std::chrono::steady_clock::now();
    Model m = Model::mlp(16, {8}, 5);
    m.init_random(101);
    std::mt19937_64 gen(55);
    Batch batch;
    for (int i = 0; i < 8; ++i) {
        Sample s;
        s.x = Tensor({16});
        for (auto& v : s.x.data) v = static_cast<float>(gen() >> 40) / 8388608.0f - 1.0f;
        s.label = static_cast<std::uint32_t>(gen() % 5);
        batch.push_back(std::move(s));
    }
    ImportanceMap analytic = estimate_importance(m, batch);

    std::size_t total = 0, ok = 0;
    for (std::uint32_t l = 1; l <= m.depth(); ++l) {
        auto check = [&](bool in_bias, const Tensor& got) {
            for (std::size_t i = 0; i < got.numel(); ++i) {
                double acc = 0.0;
                for (const Sample& s : batch) {
                    double g = fdoracle::fd_gradient(m, s.x, s.label, l, in_bias, i);
                    acc += g * g;
                }
                double fd = acc / static_cast<double>(batch.size());
                double rel = std::fabs(static_cast<double>(got.data[i]) - fd) /
                             std::max({std::fabs(fd), std::fabs(double(got.data[i])), 1e-12});
                ++total;
                if (rel < 1e-4) ++ok;
            }
        };
        check(false, analytic.slice(l).weight);
        check(true, analytic.slice(l).bias);
    }
    double frac = static_cast<double>(ok) / static_cast<double>(total);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_GE(frac, 0.99) << ok << "/" << total;
    EXPECT_LT(secs, 10.0);
    report_criterion(1, "diagonal Fisher vs central-difference oracle: " +
                            std::to_string(100.0 * frac) + "% of parameters within 1e-4 in " +
                            std::to_string(secs) + " s");
}

TEST(Acceptance, C02_DampeningMatchesScalarOracleBitExactly) {
    std::mt19937_64 gen(202);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::uint32_t n = 1 + static_cast<std::uint32_t>(gen() % 4096);
        std::vector<float> theta(n), f(n), d(n);
        for (auto& v : theta) v = static_cast<float>(gen() >> 40) / 4194304.0f - 2.0f;
        for (auto& v : f) v = static_cast<float>(gen() >> 40) / 4194304.0f;
        for (auto& v : d) {
            v = static_cast<float>(gen() >> 40) / 16777216.0f;
            if ((gen() & 15) == 0) v = 0.0f;
        }
        DampeningParams p{0.25f + static_cast<float>(gen() % 80) / 10.0f,
                          0.05f + static_cast<float>(gen() % 40) / 10.0f};

        std::vector<float> expect = theta;
        for (std::uint32_t i = 0; i < n; ++i) {
            if (f[i] > p.alpha * d[i]) {
                float b = p.lambda * d[i] / f[i];
                if (b > 1.0f) b = 1.0f;
                expect[i] *= b;
            }
        }

        Model m = Model::mlp(n, {}, 1);
        m.param_layer(1).weight = Tensor({1, n}, theta);
        m.param_layer(1).bias_eligible = false;
        ImportanceSlice fs, ds;
        fs.weight = Tensor({1, n}, f);
        fs.bias = Tensor({1});
        ds.weight = Tensor({1, n}, d);
        ds.bias = Tensor({1});
        dampen_layer(m, 1, fs, ds, p);
        if (m.param_layer(1).weight.data != expect) ++mismatches;
    }
    EXPECT_EQ(mismatches, 0u);
    report_criterion(2, "vectorized dampening vs per-parameter scalar oracle, 1000 random "
                        "layers up to 4096 parameters, bit-exact");
}

TEST(Acceptance, C03_ProfileEndpointsAndMonotonicity) {
    for (std::uint32_t depth = 2; depth <= 32; ++depth) {
        for (double c_m = 0.0; c_m <= depth + 1.0; c_m += 0.5) {
            for (double b_r : {1.5, 2.0, 10.0, 64.0}) {
                ProfileParams p{b_r, c_m, depth};
                ASSERT_EQ(profile_scale(1, p), 1.0) << depth << " " << c_m << " " << b_r;
                ASSERT_EQ(profile_scale(depth, p), b_r) << depth << " " << c_m << " " << b_r;
                double prev = profile_scale(1, p);
                for (std::uint32_t l = 2; l <= depth; ++l) {
                    double cur = profile_scale(l, p);
                    ASSERT_GT(cur, prev) << depth << " " << c_m << " " << b_r << " l=" << l;
                    prev = cur;
                }
            }
        }
    }
    report_criterion(3, "S(1)=1 and S(L)=b_r exact, strictly increasing for b_r>1 across "
                        "L in 2..32 and c_m sweeps");
}

TEST(Acceptance, C04_ModeDegeneraciesAreByteIdentical) {
    const SeedRun& run = sweep()[0];
    ExperimentConfig cfg = toy_config();

    Model a = run.trained, b = run.trained;
    UnlearnConfig cau_cfg = unlearn_config(cfg, a, UnlearnMode::cau, 0.0);
    cau_cfg.checkpoints.clear();
    run_unlearning(a, run.forget, run.global_imp, cau_cfg);
    run_ssd_baseline(b, run.forget, run.global_imp, cfg.params);
    EXPECT_EQ(model_bytes(a), model_bytes(b));

    Model c = run.trained, d = run.trained;
    run_unlearning(c, run.forget, run.global_imp, unlearn_config(cfg, c, UnlearnMode::cau, 0.0));
    UnlearnConfig bal_cfg = unlearn_config(cfg, d, UnlearnMode::cau_balanced, run.derived_c_m);
    bal_cfg.profile->b_r = 1.0;
    run_unlearning(d, run.forget, run.global_imp, bal_cfg);
    EXPECT_EQ(model_bytes(c), model_bytes(d));
    report_criterion(4, "cau with empty checkpoint set == ssd_full and cau_balanced with "
                        "b_r=1 == cau, byte-identical checkpoints");
}

TEST(Acceptance, C05_UntouchedSuffixAndCheckpointConsistency) {
    std::size_t early_stopped = 0;
    for (const SeedRun& run : sweep()) {
        auto verify = [&](const Model& final_model, const UnlearnOutcome& out) {
            if (out.stop_layer >= final_model.depth()) return;
            ++early_stopped;
            for (std::uint32_t l = out.stop_layer + 1; l <= final_model.depth(); ++l) {
                ASSERT_EQ(final_model.param_layer(l).weight.data,
                          run.trained.param_layer(l).weight.data);
                ASSERT_EQ(final_model.param_layer(l).bias.data,
                          run.trained.param_layer(l).bias.data);
            }
            ASSERT_FALSE(out.forget_acc_trace.empty());
            ASSERT_EQ(out.forget_acc_trace.back().second,
                      evaluate_accuracy(final_model, run.forget));
        };
        verify(run.cau_model, run.cau);
        verify(run.bal_model, run.bal);
    }
    EXPECT_GT(early_stopped, 0u);
    report_criterion(5, "untouched suffix after early stop and stopping-checkpoint accuracy "
                        "== full forward, bit-exact, over " +
                            std::to_string(early_stopped) + " early-stopped runs");
}

TEST(Acceptance, C06_ToyUnlearningTrend) {
    int hits = 0;
    double min_test_acc = 1.0;
    for (const SeedRun& run : sweep()) {
        bool forgot = run.cau_forget <= 0.2;
        bool retained = (run.baseline_retain - run.cau_retain) <= 0.05;
        bool cheaper = run.cau.ledger.ratio_vs_ssd < 100.0;
        hits += forgot && retained && cheaper;
        min_test_acc = std::min(min_test_acc, run.train_stats.test_acc);
    }
    EXPECT_GE(hits, 8);
    EXPECT_GE(min_test_acc, 0.95);
    report_criterion(6, "alpha=10, lambda=1, tau=0.2 on 5-class blobs: forget<=tau, retain "
                        "drop<=5pp and MAC ratio<100% on " +
                            std::to_string(hits) + "/10 seeds");
}

TEST(Acceptance, C07_BalancedPreservesRetainAtLeastAsWell) {
    int wins = 0;
    for (const SeedRun& run : sweep()) {
        double cau_drop = run.baseline_retain - run.cau_retain;
        double bal_drop = run.baseline_retain - run.bal_retain;
        wins += bal_drop <= cau_drop;
    }
    EXPECT_GE(wins, 7);
    report_criterion(7, "depth-scaled dampening retain drop <= uniform dampening drop on " +
                            std::to_string(wins) + "/10 seeds");
}

TEST(Acceptance, C08_PipelineSteadyStateLaw) {
    std::mt19937_64 gen(808);
    for (int trial = 0; trial < 1000; ++trial) {
        PipelineConfig cfg;
        cfg.patch_dim = 2 + static_cast<std::uint32_t>(gen() % 15);
        cfg.gemm_cycles_per_patch = 1 + gen() % 3000;
        for (auto& v : cfg.fimd_stage_latencies) v = 1 + static_cast<std::uint32_t>(gen() % 300);
        for (auto& v : cfg.damp_stage_latencies) v = 1 + static_cast<std::uint32_t>(gen() % 300);
        cfg.elements_per_cycle = 0.25 * static_cast<double>(1 + gen() % 16);
        Workload w{{1, 4, 4 * cfg.patch_elements()}};
        SimReport rep = simulate_stream(w, cfg);
        std::uint64_t t_f = ip_cycles(cfg, IpKind::fimd, cfg.patch_elements());
        std::uint64_t t_d = ip_cycles(cfg, IpKind::dampening, cfg.patch_elements());
        ASSERT_EQ(rep.steady_interval,
                  std::max({cfg.gemm_cycles_per_patch, t_f, t_d}))
            << "trial " << trial;
        ASSERT_EQ(rep.hidden, t_f <= cfg.gemm_cycles_per_patch &&
                                  t_d <= cfg.gemm_cycles_per_patch)
            << "trial " << trial;
    }
    report_criterion(8, "steady-state patch interval == max(window, bottleneck IP latency) "
                        "and hidden iff IPs fit the window, 1000 random configs");
}

TEST(Acceptance, C09_CalibratedIpSpeedups) {
    PipelineConfig cfg;  // shipped defaults
    double fimd = speedup_vs_core(IpKind::fimd, cfg.calibration_elements, cfg);
    double damp = speedup_vs_core(IpKind::dampening, cfg.calibration_elements, cfg);
    EXPECT_NEAR(fimd, 11.7, 0.5);
    EXPECT_NEAR(damp, 7.9, 0.5);
    SimReport rep = simulate_stream({{1, 4, 4 * cfg.patch_elements()}}, cfg);
    EXPECT_TRUE(rep.calibrated_model);
    EXPECT_NE(rep.to_text().find("calibrated"), std::string::npos);
    std::ostringstream os;
    os << "calibrated speedups at " << cfg.calibration_elements << " elements: FIMD "
       << fimd << "x, dampening " << damp << "x (calibration targets 11.7x / 7.9x)";
    report_criterion(9, os.str());
}

TEST(Acceptance, C10_EnergyAccounting) {
    PipelineConfig cfg;
    PowerTable power;

    auto e = estimate_energy(static_cast<std::uint64_t>(cfg.clock_hz), cfg, power,
                             {"unlearning_engine"});
    EXPECT_DOUBLE_EQ(e["unlearning_engine"], 40.71);

    auto all = estimate_energy(987654321, cfg, power, ficabu_components());
    double sum = 0.0;
    for (const auto& name : ficabu_components()) sum += all[name];
    EXPECT_LE(std::fabs(all["total"] - sum), 1e-9 * std::max(1.0, std::fabs(sum)));

    int early_checked = 0;
    for (const SeedRun& run : sweep()) {
        if (run.cau.stop_layer >= run.trained.depth()) continue;
        EnergyComparison cmp =
            compare_energy(run.cau_model, run.cau, run.ssd, cfg, power);
        EXPECT_LT(cmp.ratio_pct, 100.0) << "stop layer " << run.cau.stop_layer;
        ++early_checked;
    }
    EXPECT_GT(early_checked, 0);
    report_criterion(10, "per-component energy sums to total within 1e-9, 40.71 mW for 1 s "
                         "is 40.71 mJ, and early-stopped runs cost <100% of the baseline "
                         "energy (" +
                             std::to_string(early_checked) + " runs)");
}

TEST(Acceptance, C11_FileFormatRoundtrips) {
    const SeedRun& run = sweep()[0];

    std::string m1 = model_bytes(run.cau_model);
    std::istringstream mis(m1);
    Model m_back = Model::load(mis);
    EXPECT_EQ(model_bytes(m_back), m1);

    std::ostringstream ios1;
    save_importance(run.global_imp, ios1);
    std::istringstream iis(ios1.str());
    ImportanceMap i_back = load_importance(iis, run.trained);
    std::ostringstream ios2;
    save_importance(i_back, ios2);
    EXPECT_EQ(ios1.str(), ios2.str());

    json rep1 = outcome_to_json(run.cau);
    json rep2 = json::parse(rep1.dump());
    EXPECT_EQ(rep1.dump(), rep2.dump());
    MacLedger ledger_back = ledger_from_json(rep2.at("ledger"));
    EXPECT_EQ(ledger_back.total(), run.cau.ledger.total());

    std::string corrupt_model = m1;
    corrupt_model[0] = 'Z';
    std::istringstream cm(corrupt_model);
    EXPECT_THROW(Model::load(cm), FormatError);
    std::string bad_version = m1;
    bad_version[4] = 0x7f;
    std::istringstream bv(bad_version);
    EXPECT_THROW(Model::load(bv), FormatError);

    std::string corrupt_imp = ios1.str();
    corrupt_imp[0] = 'Z';
    std::istringstream ci(corrupt_imp);
    EXPECT_THROW(load_importance(ci, run.trained), FormatError);
    std::string imp_version = ios1.str();
    imp_version[4] = 0x7f;
    std::istringstream iv(imp_version);
    EXPECT_THROW(load_importance(iv, run.trained), FormatError);

    report_criterion(11, "checkpoint, importance and report records survive save/load "
                         "byte-exactly; corrupted magic and version are rejected");
}
