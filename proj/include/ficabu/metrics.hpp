#pragma once

#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>

#include "ficabu/errors.hpp"

namespace ficabu {

/// One comparison row set versus the pre-unlearning baseline and the SSD
/// reference. Accuracies are fractions; deltas are percentage points.
struct EvalRecord {
    double retain_acc = 0.0;
    double forget_acc = 0.0;
    double delta_retain_pp = 0.0;            // baseline retain minus run retain, in pp
    double mac_ratio_pct = 100.0;            // vs SSD
    std::optional<double> rpr_pct;           // undefined when the SSD drop is zero
    std::optional<double> mia;               // reserved; attack unspecified, never filled
    std::optional<double> energy_saving_pct; // filled when a simulator run is attached
};

/// (1 - delta_ours / delta_ssd) * 100; deltas in percentage points.
inline double rpr(double delta_ssd_pp, double delta_ours_pp) {
    if (delta_ssd_pp == 0.0) {
        throw UndefinedRprError("RPR undefined: SSD retain drop is zero");
    }
    return (1.0 - delta_ours_pp / delta_ssd_pp) * 100.0;
}

/// Accuracy pair plus MAC total of one run, with an identity digest so
/// records from different models/datasets cannot be compared silently.
struct RunEval {
    double retain_acc = 0.0;
    double forget_acc = 0.0;
    std::uint64_t macs = 0;
    std::string ident;
};

struct ComparisonResult {
    EvalRecord ssd;
    EvalRecord ours;
};

inline ComparisonResult compare_runs(const RunEval& baseline, const RunEval& ssd,
                                     const RunEval& ours) {
    if (baseline.ident != ssd.ident || baseline.ident != ours.ident) {
        throw ConfigError("compare_runs: mismatched run configurations (" + baseline.ident +
                          " vs " + ssd.ident + " vs " + ours.ident + ")");
    }
    ComparisonResult r;
    r.ssd.retain_acc = ssd.retain_acc;
    r.ssd.forget_acc = ssd.forget_acc;
    r.ssd.delta_retain_pp = (baseline.retain_acc - ssd.retain_acc) * 100.0;
    r.ssd.mac_ratio_pct = 100.0;

    r.ours.retain_acc = ours.retain_acc;
    r.ours.forget_acc = ours.forget_acc;
    r.ours.delta_retain_pp = (baseline.retain_acc - ours.retain_acc) * 100.0;
    r.ours.mac_ratio_pct =
        ssd.macs ? 100.0 * static_cast<double>(ours.macs) / static_cast<double>(ssd.macs)
                 : 100.0;
    if (r.ssd.delta_retain_pp != 0.0) {
        r.ours.rpr_pct = rpr(r.ssd.delta_retain_pp, r.ours.delta_retain_pp);
    }
    return r;
}

namespace detail {
inline std::string fmt_pct(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}
inline std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt_pct(*v) : std::string("n/a");
}
}  // namespace detail

/// Plain-text Baseline / SSD / Ours table; every row present, absent values
/// marked n/a. All values in percent.
inline std::string format_comparison_table(double baseline_retain, double baseline_forget,
                                           const ComparisonResult& cmp) {
    using detail::fmt_opt;
    using detail::fmt_pct;
    std::ostringstream os;
    auto row = [&](const std::string& name, const std::string& b, const std::string& s,
                   const std::string& o) {
        os << std::left << std::setw(10) << name << std::right << std::setw(10) << b
           << std::setw(10) << s << std::setw(10) << o << "\n";
    };
    row("Metric", "Baseline", "SSD", "Ours");
    row("D_r", fmt_pct(baseline_retain * 100.0), fmt_pct(cmp.ssd.retain_acc * 100.0),
        fmt_pct(cmp.ours.retain_acc * 100.0));
    row("D_f", fmt_pct(baseline_forget * 100.0), fmt_pct(cmp.ssd.forget_acc * 100.0),
        fmt_pct(cmp.ours.forget_acc * 100.0));
    row("dD_r", "n/a", fmt_pct(cmp.ssd.delta_retain_pp), fmt_pct(cmp.ours.delta_retain_pp));
    row("MACs", "n/a", fmt_pct(cmp.ssd.mac_ratio_pct), fmt_pct(cmp.ours.mac_ratio_pct));
    row("RPR", "n/a", "n/a", fmt_opt(cmp.ours.rpr_pct));
    row("MIA", fmt_opt(std::nullopt), fmt_opt(cmp.ssd.mia), fmt_opt(cmp.ours.mia));
    row("ES", "n/a", fmt_opt(cmp.ssd.energy_saving_pct), fmt_opt(cmp.ours.energy_saving_pct));
    return os.str();
}

}  // namespace ficabu
