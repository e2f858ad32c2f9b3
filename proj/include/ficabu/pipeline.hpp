#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ficabu/errors.hpp"

namespace ficabu {

/// Cycle model of the unlearning engine. Approximate and calibrated, not
/// RTL-faithful: stage latencies are inputs, and the shipped defaults are
/// chosen so that the specialized-IP speedups over the scalar core land at
/// 11.7x (FIMD) and 7.9x (Dampening) at the representative layer size of
/// calibration_elements, with both IP per-patch latencies inside the GEMM
/// patch window. Reports carry a calibrated flag for this reason.
struct PipelineConfig {
    std::uint32_t patch_dim = 16;                  // GEMM tile edge, elements
    std::uint64_t gemm_cycles_per_patch = 800;     // the patch window
    std::array<std::uint32_t, 4> fimd_stage_latencies{8, 6, 6, 6};  // Load Square Accumulate Store
    std::array<std::uint32_t, 5> damp_stage_latencies{107, 106, 106, 106, 106};
    // Load Compare BetaCalc Multiply Store
    double elements_per_cycle = 1.0;               // IP throughput after fill
    double core_cycles_per_element = 12.0;         // scalar-core baseline cost
    double clock_hz = 50e6;
    std::uint64_t vta_macs_per_cycle = 256;        // MAC->cycle rate for plain GEMM work
    std::uint64_t calibration_elements = 1024;     // documented representative layer size

    std::uint64_t patch_elements() const {
        return static_cast<std::uint64_t>(patch_dim) * patch_dim;
    }

    void validate() const {
        if (patch_dim < 1) throw ConfigError("patch_dim must be >= 1");
        if (gemm_cycles_per_patch < 1) throw ConfigError("gemm_cycles_per_patch must be >= 1");
        for (auto v : fimd_stage_latencies) {
            if (v < 1) throw ConfigError("FIMD stage latencies must be >= 1");
        }
        for (auto v : damp_stage_latencies) {
            if (v < 1) throw ConfigError("dampening stage latencies must be >= 1");
        }
        if (!(elements_per_cycle > 0.0)) throw ConfigError("elements_per_cycle must be > 0");
        if (!(core_cycles_per_element > 0.0)) {
            throw ConfigError("core_cycles_per_element must be > 0");
        }
        if (!(clock_hz > 0.0)) throw ConfigError("clock_hz must be > 0");
        if (vta_macs_per_cycle < 1) throw ConfigError("vta_macs_per_cycle must be >= 1");
    }
};

enum class IpKind { fimd, dampening };

inline std::uint64_t ip_fill_cycles(const PipelineConfig& cfg, IpKind ip) {
    std::uint64_t fill = 0;
    if (ip == IpKind::fimd) {
        for (auto v : cfg.fimd_stage_latencies) fill += v;
    } else {
        for (auto v : cfg.damp_stage_latencies) fill += v;
    }
    return fill;
}

/// Cycles for an IP to push `elements` through its pipeline: fill plus the
/// post-fill streaming time.
inline std::uint64_t ip_cycles(const PipelineConfig& cfg, IpKind ip, std::uint64_t elements) {
    double stream = std::ceil(static_cast<double>(elements) / cfg.elements_per_cycle);
    return ip_fill_cycles(cfg, ip) + static_cast<std::uint64_t>(stream);
}

/// (core cycles for the same elements) / (pipelined IP cycles).
inline double speedup_vs_core(IpKind ip, std::uint64_t elements, const PipelineConfig& cfg) {
    if (elements < 1) throw ConfigError("speedup_vs_core: elements must be >= 1");
    double core = cfg.core_cycles_per_element * static_cast<double>(elements);
    return core / static_cast<double>(ip_cycles(cfg, ip, elements));
}

/// Per-component power in mW; defaults are the 45 nm synthesis estimates.
struct PowerTable {
    double total = 185.89;
    double core = 11.2;
    double sram = 1.71;
    double dma = 4.07;
    double peripherals = 5.68;
    double ddr = 88.62;
    double interconnect = 33.9;
    double unlearning_engine = 40.71;  // = vta + specialized_ips
    double vta = 39.9;
    double specialized_ips = 0.81;

    void validate() const {
        if (!(specialized_ips <= unlearning_engine && unlearning_engine <= total)) {
            throw ConfigError("power table violates specialized <= engine <= total");
        }
    }

    double lookup(const std::string& name) const {
        if (name == "total") return total;
        if (name == "core") return core;
        if (name == "sram") return sram;
        if (name == "dma") return dma;
        if (name == "peripherals") return peripherals;
        if (name == "ddr") return ddr;
        if (name == "interconnect") return interconnect;
        if (name == "unlearning_engine") return unlearning_engine;
        if (name == "vta") return vta;
        if (name == "specialized_ips") return specialized_ips;
        throw ConfigError("no power entry named '" + name + "'");
    }
};

/// Leaf components of the full processor; sums to the table's total.
inline std::vector<std::string> ficabu_components() {
    return {"core", "sram", "dma", "peripherals", "ddr", "interconnect", "vta",
            "specialized_ips"};
}

/// Baseline processor: same parts without the specialized IPs.
inline std::vector<std::string> baseline_components() {
    return {"core", "sram", "dma", "peripherals", "ddr", "interconnect", "vta"};
}

/// E_c = P_c * cycles / clock; mW * s = mJ. Returns one entry per active
/// component plus "total".
inline std::map<std::string, double> estimate_energy(std::uint64_t cycles,
                                                     const PipelineConfig& cfg,
                                                     const PowerTable& power,
                                                     const std::vector<std::string>& active) {
    power.validate();
    double seconds = static_cast<double>(cycles) / cfg.clock_hz;
    std::map<std::string, double> out;
    double total = 0.0;
    for (const auto& name : active) {
        double mj = power.lookup(name) * seconds;
        out[name] = mj;
        total += mj;
    }
    out["total"] = total;
    return out;
}

struct PatchWorkloadEntry {
    std::uint32_t layer = 0;
    std::uint64_t patches = 0;
    std::uint64_t elements = 0;
};
using Workload = std::vector<PatchWorkloadEntry>;

struct StageStats {
    std::uint64_t busy = 0;
    std::uint64_t stall = 0;      // idle gaps inside the stage's active span
    std::uint64_t elements = 0;   // work conservation counter
};

struct SimReport {
    std::uint64_t total_cycles = 0;
    std::array<StageStats, 3> stages{};  // gemm, fimd, dampening
    std::uint64_t total_patches = 0;
    std::uint64_t total_elements = 0;
    double patches_per_cycle = 0.0;
    std::uint64_t steady_interval = 0;   // inter-departure gap of the last full patches
    bool hidden = false;                 // IP latencies fit the GEMM patch window
    bool calibrated_model = true;

    std::map<std::string, double> energy_mj;  // filled by estimate_energy callers
    double energy_ratio_vs_baseline = 0.0;    // percent; 0 until a baseline is attached

    std::string to_text() const {
        std::ostringstream os;
        os << "total_cycles " << total_cycles << "\n";
        const char* names[3] = {"gemm", "fimd", "dampening"};
        for (int s = 0; s < 3; ++s) {
            os << names[s] << " busy " << stages[s].busy << " stall " << stages[s].stall
               << " elements " << stages[s].elements << "\n";
        }
        os << "patches " << total_patches << " elements " << total_elements << "\n";
        os << "steady_interval " << steady_interval << " hidden " << (hidden ? 1 : 0) << "\n";
        if (!energy_mj.empty()) {
            for (const auto& [k, v] : energy_mj) os << "energy_mj " << k << " " << v << "\n";
        }
        os << "cycle model: calibrated, not RTL-faithful\n";
        return os.str();
    }
};

/// Three-stage patch-level stream: GEMM produces a patch every
/// gemm_cycles_per_patch, FIMD consumes each GEMM output, Dampening each
/// FIMD output. Double buffering gives every stage one in-process slot plus
/// one waiting slot, so a stage starts its next patch as soon as it has
/// handed off the previous one. Event timestamps are integers; the schedule
/// is computed in dependency order (patch by patch, downstream last), which
/// fixes tie resolution deterministically.
inline SimReport simulate_stream(const Workload& workload, const PipelineConfig& cfg) {
    cfg.validate();
    if (workload.empty()) throw EmptyInputError("simulate_stream: empty workload");

    const std::uint64_t pe = cfg.patch_elements();
    std::vector<std::uint64_t> patch_elems;
    for (const auto& entry : workload) {
        if (entry.patches == 0 || entry.elements == 0) {
            throw ConfigError("zero-size patch in workload layer " + std::to_string(entry.layer));
        }
        if (entry.elements > entry.patches * pe ||
            entry.elements <= (entry.patches - 1) * pe) {
            throw ConfigError("workload layer " + std::to_string(entry.layer) +
                              ": element count does not fit its patch count");
        }
        for (std::uint64_t k = 0; k + 1 < entry.patches; ++k) patch_elems.push_back(pe);
        patch_elems.push_back(entry.elements - (entry.patches - 1) * pe);
    }

    SimReport rep;
    rep.total_patches = patch_elems.size();

    // Per-stage timeline: begin, complete, handoff of the previous patch.
    std::array<std::uint64_t, 3> prev_handoff{0, 0, 0};
    std::array<std::uint64_t, 3> prev_begin{0, 0, 0};
    std::array<std::uint64_t, 3> first_begin{0, 0, 0};
    std::array<std::uint64_t, 3> last_complete{0, 0, 0};
    std::uint64_t prev_depart = 0, prev_full_depart = 0, last_full_depart = 0;
    bool have_full_pair = false;

    for (std::size_t k = 0; k < patch_elems.size(); ++k) {
        const std::uint64_t e = patch_elems[k];
        const std::array<std::uint64_t, 3> lat{cfg.gemm_cycles_per_patch,
                                               ip_cycles(cfg, IpKind::fimd, e),
                                               ip_cycles(cfg, IpKind::dampening, e)};
        std::uint64_t upstream_handoff = 0;  // arrival time of patch k at stage 0
        for (int s = 0; s < 3; ++s) {
            std::uint64_t begin = std::max(upstream_handoff, k ? prev_handoff[s] : 0);
            std::uint64_t complete = begin + lat[s];
            // Handoff blocks until the downstream waiting slot is free,
            // i.e. until downstream began the previous patch.
            std::uint64_t handoff =
                s == 2 ? complete : std::max(complete, k ? prev_begin[s + 1] : 0);
            if (k == 0) first_begin[s] = begin;
            last_complete[s] = complete;
            rep.stages[s].busy += lat[s];
            rep.stages[s].elements += e;
            prev_begin[s] = begin;
            prev_handoff[s] = handoff;
            upstream_handoff = handoff;
        }
        const std::uint64_t depart = prev_handoff[2];
        if (k > 0 && e == pe && patch_elems[k - 1] == pe) {
            prev_full_depart = prev_depart;
            last_full_depart = depart;
            have_full_pair = true;
        }
        prev_depart = depart;
    }

    rep.total_cycles = last_complete[2];
    rep.total_elements = rep.stages[0].elements;
    for (int s = 0; s < 3; ++s) {
        std::uint64_t span = last_complete[s] - first_begin[s];
        rep.stages[s].stall = span - rep.stages[s].busy;
    }
    rep.patches_per_cycle = rep.total_cycles
                                ? static_cast<double>(rep.total_patches) /
                                      static_cast<double>(rep.total_cycles)
                                : 0.0;
    if (have_full_pair) {
        rep.steady_interval = last_full_depart - prev_full_depart;
    } else if (rep.total_patches >= 2) {
        rep.steady_interval = 0;  // no two consecutive full patches to measure
    }
    rep.hidden = ip_cycles(cfg, IpKind::fimd, pe) <= cfg.gemm_cycles_per_patch &&
                 ip_cycles(cfg, IpKind::dampening, pe) <= cfg.gemm_cycles_per_patch;
    return rep;
}

}  // namespace ficabu
