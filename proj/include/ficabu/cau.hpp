#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ficabu/dampening.hpp"
#include "ficabu/errors.hpp"
#include "ficabu/fisher.hpp"
#include "ficabu/model.hpp"

namespace ficabu {

enum class UnlearnMode : std::uint8_t { ssd_full = 0, cau = 1, cau_balanced = 2 };

inline const char* unlearn_mode_name(UnlearnMode m) {
    switch (m) {
        case UnlearnMode::ssd_full: return "ssd_full";
        case UnlearnMode::cau: return "cau";
        case UnlearnMode::cau_balanced: return "cau_balanced";
    }
    return "?";
}

/// MAC cost model. The ledger charges each layer's gradient pass at
/// gradient_cost_factor times its forward MACs (input-gradient plus
/// weight-gradient GEMMs). Elementwise Fisher squares and dampening
/// multiplies are not multiply-accumulates over GEMM operands and are
/// excluded unless count_elementwise is set.
struct MacConvention {
    double gradient_cost_factor = 2.0;
    bool count_elementwise = false;
};

/// Forward MACs of one layer over a batch of size n. Non-parameterized
/// layers cost zero.
inline std::uint64_t count_macs_layer(const LayerSpec& spec, std::uint32_t n) {
    switch (spec.kind) {
        case LayerKind::dense:
            return static_cast<std::uint64_t>(n) * spec.in_features * spec.out_features;
        case LayerKind::conv2d:
            return static_cast<std::uint64_t>(n) * spec.out_h * spec.out_w * spec.out_channels *
                   spec.in_channels * spec.kernel * spec.kernel;
        default: return 0;
    }
}

inline std::uint64_t forward_macs(const Model& model, std::uint32_t n) {
    std::uint64_t total = 0;
    for (std::uint32_t l = 1; l <= model.depth(); ++l) {
        total += count_macs_layer(model.param_layer(l).spec, n);
    }
    return total;
}

/// MACs of a partial inference pass over layers l..1 for a batch of size n.
inline std::uint64_t partial_inference_macs(const Model& model, std::uint32_t l,
                                            std::uint32_t n) {
    std::uint64_t total = 0;
    for (std::uint32_t k = 1; k <= l; ++k) {
        total += count_macs_layer(model.param_layer(k).spec, n);
    }
    return total;
}

struct MacLedger {
    std::uint64_t forward_pass = 0;
    std::vector<std::uint64_t> gradient_pass;  // [l-1] = MACs charged to layer l
    std::uint64_t checkpoint_partial_inference = 0;
    std::uint64_t dampening_ops = 0;
    double ratio_vs_ssd = 100.0;  // percent, against the full-SSD ledger

    std::uint64_t gradient_total() const {
        std::uint64_t t = 0;
        for (auto g : gradient_pass) t += g;
        return t;
    }
    std::uint64_t total() const {
        return forward_pass + gradient_total() + checkpoint_partial_inference + dampening_ops;
    }
};

struct UnlearnConfig {
    DampeningParams params;
    std::set<std::uint32_t> checkpoints;  // C, back-end-first indices
    double tau = 0.2;                     // target forget accuracy
    std::uint32_t batch_size = 64;        // N
    std::optional<ProfileParams> profile; // present only for cau_balanced
    UnlearnMode mode = UnlearnMode::cau;
    MacConvention convention;

    void validate(std::uint32_t depth) const {
        params.validate();
        if (tau < 0.0 || tau > 1.0) throw ConfigError("tau must be in [0,1]");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        for (auto l : checkpoints) {
            if (l < 1 || l > depth) {
                throw ConfigError("checkpoint " + std::to_string(l) + " outside 1.." +
                                  std::to_string(depth));
            }
        }
        switch (mode) {
            case UnlearnMode::ssd_full:
                if (!checkpoints.empty()) throw ConfigError("ssd_full takes no checkpoints");
                if (profile) throw ConfigError("ssd_full takes no profile");
                break;
            case UnlearnMode::cau:
                if (profile) throw ConfigError("cau takes no profile (use cau_balanced)");
                break;
            case UnlearnMode::cau_balanced:
                if (!profile) throw ConfigError("cau_balanced requires a profile");
                profile->validate();
                if (std::isnan(profile->c_m)) {
                    throw ConfigError("cau_balanced requires a concrete c_m");
                }
                if (profile->depth != depth) {
                    throw ConfigError("profile depth does not match model depth");
                }
                break;
        }
    }
};

/// First and last layers always, plus every ceil(L/4)-th.
inline std::set<std::uint32_t> default_checkpoints(std::uint32_t depth) {
    std::set<std::uint32_t> c{1, depth};
    std::uint32_t stride = (depth + 3) / 4;
    for (std::uint32_t l = stride; l <= depth; l += stride) c.insert(l);
    return c;
}

struct UnlearnOutcome {
    UnlearnMode mode = UnlearnMode::cau;
    std::uint32_t stop_layer = 0;  // layer where the early stop fired; L if none
    std::vector<std::pair<std::uint32_t, double>> forget_acc_trace;  // (checkpoint, acc)
    MacLedger ledger;
    DampeningReport report;
};

namespace detail {

inline double checkpoint_accuracy(const Model& model, const ActivationCache& cache,
                                  std::uint32_t l, const Batch& batch) {
    std::size_t correct = 0;
    for (std::uint32_t n = 0; n < batch.size(); ++n) {
        Tensor logits = model.partial_inference(cache, l, n);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < logits.numel(); ++i) {
            if (logits.data[i] > logits.data[arg]) arg = i;
        }
        if (arg == batch[n].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

inline void check_importance_shapes(const Model& model, const ImportanceMap& imp) {
    if (imp.slices.size() != model.depth()) {
        throw DimensionError("importance map depth does not match model");
    }
    for (std::uint32_t l = 1; l <= model.depth(); ++l) {
        const Layer& ly = model.param_layer(l);
        if (imp.slice(l).weight.shape != ly.weight.shape ||
            imp.slice(l).bias.shape != ly.bias.shape) {
            throw DimensionError("importance slice shape mismatch at layer " +
                                 std::to_string(l));
        }
    }
}

}  // namespace detail

/// Back-end-first unlearning loop: per layer, estimate the forget-set Fisher
/// slice, select and dampen in place, and at checkpoints evaluate batch-mean
/// forget accuracy by partial inference over cached activations; stop once
/// it reaches tau. Fisher slices are computed against a snapshot of the
/// pre-run parameters, so in-place edits never feed back into this
/// request's importance values.
inline UnlearnOutcome run_unlearning(Model& model, const Batch& forget_batch,
                                     const ImportanceMap& global_imp,
                                     const UnlearnConfig& cfg) {
    const std::uint32_t depth = model.depth();
    cfg.validate(depth);
    if (forget_batch.size() != cfg.batch_size) {
        throw ConfigError("forget batch size " + std::to_string(forget_batch.size()) +
                          " != configured N " + std::to_string(cfg.batch_size));
    }
    detail::check_importance_shapes(model, global_imp);
    const std::uint32_t n = cfg.batch_size;

    UnlearnOutcome out;
    out.mode = cfg.mode;
    out.ledger.gradient_pass.assign(depth, 0);

    // Step 0: one forward pass over the forget batch. The reverse-mode
    // streams run on a snapshot (f32 masters); checkpoint activations come
    // from the inference path so partial inference stays bit-consistent
    // with full forward even when weights are INT8-shadowed.
    const Model snapshot = model;
    FisherStream stream(snapshot, forget_batch);
    ActivationCache cache;
    if (!cfg.checkpoints.empty()) {
        if (model.quantized_inference()) {
            for (std::uint32_t i = 0; i < n; ++i) {
                model.forward_cached(forget_batch[i].x, cfg.checkpoints, i, cache);
            }
        } else {
            for (std::uint32_t i = 0; i < n; ++i) {
                for (auto l : cfg.checkpoints) {
                    cache.entries[{l, i}] = stream.pass(i).layer_input(l);
                }
            }
        }
    }
    out.ledger.forward_pass = forward_macs(model, n);

    out.stop_layer = depth;
    for (std::uint32_t l = 1; l <= depth; ++l) {
        ImportanceSlice imp_f = stream.next_slice();
        std::uint64_t fwd_l = count_macs_layer(model.param_layer(l).spec, n);
        out.ledger.gradient_pass[l - 1] =
            static_cast<std::uint64_t>(cfg.convention.gradient_cost_factor *
                                       static_cast<double>(fwd_l));
        if (cfg.convention.count_elementwise) {
            out.ledger.dampening_ops +=
                static_cast<std::uint64_t>(model.param_layer(l).param_count()) * n;
        }

        DampeningParams layer_params =
            cfg.mode == UnlearnMode::cau_balanced ? scaled_params(cfg.params, l, *cfg.profile)
                                                  : cfg.params;
        LayerDampeningReport rep =
            dampen_layer(model, l, imp_f, global_imp.slice(l), layer_params);
        out.report.layers.push_back(rep);
        if (cfg.convention.count_elementwise) out.ledger.dampening_ops += rep.selected;

        if (cfg.checkpoints.count(l)) {
            out.ledger.checkpoint_partial_inference += partial_inference_macs(model, l, n);
            double acc = detail::checkpoint_accuracy(model, cache, l, forget_batch);
            out.forget_acc_trace.emplace_back(l, acc);
            if (acc <= cfg.tau) {
                out.stop_layer = l;
                break;
            }
        }
    }

    // Full-SSD denominator for the same model and convention: one forward
    // plus every layer's gradient pass, no checkpoints. (Under
    // count_elementwise the denominator includes the Fisher squares but not
    // SSD's dampening multiplies, which are unknowable without that run.)
    double ssd_total = static_cast<double>(forward_macs(model, n));
    for (std::uint32_t l = 1; l <= depth; ++l) {
        std::uint64_t fwd_l = count_macs_layer(model.param_layer(l).spec, n);
        ssd_total += cfg.convention.gradient_cost_factor * static_cast<double>(fwd_l);
        if (cfg.convention.count_elementwise) {
            ssd_total += static_cast<double>(model.param_layer(l).param_count()) * n;
        }
    }
    out.ledger.ratio_vs_ssd = 100.0 * static_cast<double>(out.ledger.total()) / ssd_total;
    return out;
}

/// One-shot dampening of every layer: the 100% MAC denominator.
inline UnlearnOutcome run_ssd_baseline(Model& model, const Batch& forget_batch,
                                       const ImportanceMap& global_imp,
                                       const DampeningParams& params,
                                       MacConvention convention = {}) {
    UnlearnConfig cfg;
    cfg.params = params;
    cfg.mode = UnlearnMode::ssd_full;
    cfg.tau = 0.0;
    cfg.batch_size = static_cast<std::uint32_t>(forget_batch.size());
    cfg.convention = convention;
    return run_unlearning(model, forget_batch, global_imp, cfg);
}

}  // namespace ficabu
