#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ficabu/errors.hpp"
#include "ficabu/io.hpp"
#include "ficabu/model.hpp"

namespace ficabu {

enum class SourceTag : std::uint8_t {
    global_data = 0,  // computed once over the full training set and stored
    forget_set = 1,   // per unlearning request
};

/// Per-parameter diagonal Fisher scores for one layer; shapes mirror the
/// layer's weight and bias tensors.
struct ImportanceSlice {
    std::uint32_t layer = 0;  // back-end-first index
    Tensor weight;
    Tensor bias;
};

struct ImportanceMap {
    std::vector<ImportanceSlice> slices;  // slices[l-1] is layer l
    SourceTag source_tag = SourceTag::global_data;
    std::uint32_t sample_count = 0;

    const ImportanceSlice& slice(std::uint32_t l) const {
        if (l < 1 || l > slices.size()) {
            throw ConfigError("importance slice index " + std::to_string(l) + " out of range");
        }
        return slices[l - 1];
    }
    ImportanceSlice& slice(std::uint32_t l) {
        return const_cast<ImportanceSlice&>(static_cast<const ImportanceMap&>(*this).slice(l));
    }
};

/// Accumulates per-sample squared gradients in f64 (squared sums lose too
/// much in f32), emits the batch mean as f32. The mean realizes the
/// expectation for both the global and the forget-set map, so the 1/N
/// constants cancel in the selection ratio.
class FisherAccumulator {
public:
    explicit FisherAccumulator(const Model& model) {
        wacc_.resize(model.depth());
        bacc_.resize(model.depth());
        for (std::uint32_t l = 1; l <= model.depth(); ++l) {
            const Layer& ly = model.param_layer(l);
            wacc_[l - 1].assign(ly.weight.numel(), 0.0);
            bacc_[l - 1].assign(ly.bias.numel(), 0.0);
            shapes_.push_back({ly.weight.shape, ly.bias.shape});
        }
    }

    void add(const LayerGradients& g) {
        auto& wa = wacc_[g.layer - 1];
        auto& ba = bacc_[g.layer - 1];
        for (std::size_t i = 0; i < wa.size(); ++i) {
            double v = static_cast<double>(g.weight.data[i]);
            wa[i] += v * v;
        }
        for (std::size_t i = 0; i < ba.size(); ++i) {
            double v = static_cast<double>(g.bias.data[i]);
            ba[i] += v * v;
        }
    }

    ImportanceSlice finalize_layer(std::uint32_t l, std::uint32_t sample_count) const {
        ImportanceSlice s;
        s.layer = l;
        s.weight = Tensor(shapes_[l - 1].first);
        s.bias = Tensor(shapes_[l - 1].second);
        const double inv_n = 1.0 / static_cast<double>(sample_count);
        for (std::size_t i = 0; i < s.weight.numel(); ++i) {
            s.weight.data[i] = static_cast<float>(wacc_[l - 1][i] * inv_n);
        }
        for (std::size_t i = 0; i < s.bias.numel(); ++i) {
            s.bias.data[i] = static_cast<float>(bacc_[l - 1][i] * inv_n);
        }
        return s;
    }

    ImportanceMap finalize(SourceTag tag, std::uint32_t sample_count) const {
        ImportanceMap map;
        map.source_tag = tag;
        map.sample_count = sample_count;
        for (std::uint32_t l = 1; l <= wacc_.size(); ++l) {
            map.slices.push_back(finalize_layer(l, sample_count));
        }
        return map;
    }

private:
    std::vector<std::vector<double>> wacc_, bacc_;
    std::vector<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>> shapes_;
};

/// score_i = (1/N) * sum_n (d ln p(y_n|x_n,theta) / d theta_i)^2,
/// samples processed in batch order.
inline ImportanceMap estimate_importance(const Model& model, const Batch& batch,
                                         SourceTag tag = SourceTag::forget_set) {
    if (batch.empty()) throw EmptyInputError("estimate_importance: empty batch");
    FisherAccumulator acc(model);
    for (const Sample& s : batch) {
        BackwardPass pass(model, s.x, s.label);
        while (pass.has_next()) acc.add(pass.next());
    }
    return acc.finalize(tag, static_cast<std::uint32_t>(batch.size()));
}

/// Single-layer slice; values are bit-identical to the corresponding slice
/// of estimate_importance (same additions in the same sample order).
inline ImportanceSlice estimate_importance_layer(const Model& model, const Batch& batch,
                                                 std::uint32_t l) {
    if (batch.empty()) throw EmptyInputError("estimate_importance_layer: empty batch");
    if (l < 1 || l > model.depth()) {
        throw ConfigError("layer index " + std::to_string(l) + " out of range");
    }
    FisherAccumulator acc(model);
    for (const Sample& s : batch) {
        BackwardPass pass(model, s.x, s.label);
        for (std::uint32_t k = 1; k <= l; ++k) {
            LayerGradients g = pass.next();
            if (g.layer == l) acc.add(g);
        }
    }
    return acc.finalize_layer(l, static_cast<std::uint32_t>(batch.size()));
}

/// Incremental per-layer Fisher over a fixed batch: one forward per sample
/// up front, then slices surface as the reverse passes stream 1, 2, ..., L.
/// Front-end layers beyond the last next_slice() call never cost a gradient.
class FisherStream {
public:
    FisherStream(const Model& model, const Batch& batch) : model_(model) {
        if (batch.empty()) throw EmptyInputError("FisherStream: empty batch");
        passes_.reserve(batch.size());
        for (const Sample& s : batch) passes_.emplace_back(model, s.x, s.label);
    }

    std::uint32_t next_layer() const { return next_; }
    bool exhausted() const { return next_ > model_.depth(); }
    std::size_t sample_count() const { return passes_.size(); }
    BackwardPass& pass(std::size_t n) { return passes_[n]; }

    ImportanceSlice next_slice() {
        if (exhausted()) throw ConfigError("FisherStream drained past layer L");
        FisherAccumulator acc(model_);
        for (auto& pass : passes_) {
            LayerGradients g = pass.next();
            acc.add(g);
        }
        return acc.finalize_layer(next_++, static_cast<std::uint32_t>(passes_.size()));
    }

private:
    const Model& model_;
    std::vector<BackwardPass> passes_;
    std::uint32_t next_ = 1;
};

// --- persistence -------------------------------------------------------------

inline constexpr std::uint16_t kImportanceVersion = 1;

/// "FCBI", u16 version, u8 source_tag, u32 sample_count, then weight/bias
/// tensor records per parameterized layer in checkpoint (forward) order.
inline void save_importance(const ImportanceMap& map, std::ostream& os) {
    os.write("FCBI", 4);
    io::write_u16(os, kImportanceVersion);
    io::write_u8(os, static_cast<std::uint8_t>(map.source_tag));
    io::write_u32(os, map.sample_count);
    for (std::size_t i = map.slices.size(); i > 0; --i) {  // forward order = l descending
        io::write_tensor(os, map.slices[i - 1].weight);
        io::write_tensor(os, map.slices[i - 1].bias);
    }
}

inline void save_importance(const ImportanceMap& map, const std::string& path) {
    auto os = io::open_out(path);
    save_importance(map, os);
}

inline ImportanceMap load_importance(std::istream& is, const Model& model) {
    io::expect_magic(is, "FCBI");
    std::uint16_t version = io::read_u16(is);
    if (version != kImportanceVersion) {
        throw FormatError("unsupported importance version " + std::to_string(version));
    }
    ImportanceMap map;
    std::uint8_t tag = io::read_u8(is);
    if (tag > 1) throw FormatError("unknown importance source tag");
    map.source_tag = static_cast<SourceTag>(tag);
    map.sample_count = io::read_u32(is);
    map.slices.resize(model.depth());
    for (std::uint32_t l = model.depth(); l >= 1; --l) {  // file is in forward order
        ImportanceSlice& s = map.slices[l - 1];
        s.layer = l;
        s.weight = io::read_tensor_f32(is);
        s.bias = io::read_tensor_f32(is);
        const Layer& ly = model.param_layer(l);
        if (s.weight.shape != ly.weight.shape || s.bias.shape != ly.bias.shape) {
            throw DimensionError("importance shapes do not match model layer " +
                                 std::to_string(l));
        }
    }
    return map;
}

inline ImportanceMap load_importance(const std::string& path, const Model& model) {
    auto is = io::open_in(path);
    return load_importance(is, model);
}

}  // namespace ficabu
