#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ficabu/errors.hpp"
#include "ficabu/io.hpp"
#include "ficabu/numerics.hpp"
#include "ficabu/tensor.hpp"

namespace ficabu {

enum class LayerKind : std::uint8_t {
    dense = 0,
    conv2d = 1,
    relu = 2,
    maxpool2d = 3,
    flatten = 4,
    softmax_head = 5,
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::flatten: return "flatten";
        case LayerKind::softmax_head: return "softmax_head";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::uint32_t in_features = 0, out_features = 0;           // dense
    std::uint32_t in_channels = 0, out_channels = 0;           // conv2d
    std::uint32_t kernel = 0, stride = 1;                      // conv2d / maxpool2d
    std::uint32_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;    // filled by shape propagation

    bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

    static LayerSpec dense_layer(std::uint32_t in, std::uint32_t out) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.in_features = in;
        s.out_features = out;
        return s;
    }
    static LayerSpec conv_layer(std::uint32_t in_c, std::uint32_t out_c, std::uint32_t k,
                                std::uint32_t stride = 1) {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.in_channels = in_c;
        s.out_channels = out_c;
        s.kernel = k;
        s.stride = stride;
        return s;
    }
    static LayerSpec relu_layer() { return LayerSpec{LayerKind::relu}; }
    static LayerSpec maxpool_layer(std::uint32_t k, std::uint32_t stride) {
        LayerSpec s;
        s.kind = LayerKind::maxpool2d;
        s.kernel = k;
        s.stride = stride;
        return s;
    }
    static LayerSpec flatten_layer() { return LayerSpec{LayerKind::flatten}; }
    static LayerSpec softmax_head_layer() { return LayerSpec{LayerKind::softmax_head}; }
};

struct Layer {
    LayerSpec spec;
    Tensor weight;  // dense: [out,in]; conv2d: [out_c,in_c,k,k]
    Tensor bias;    // dense: [out];    conv2d: [out_c]
    bool weight_eligible = true;  // dampening eligibility per parameter tensor
    bool bias_eligible = true;

    // INT8 shadow used by inference when weight quantization is enabled.
    // Master weights stay f32; importance estimation and dampening always
    // read and write the masters.
    QuantizedTensor qweight;
    Tensor qweight_dequant;

    std::size_t param_count() const { return weight.numel() + bias.numel(); }
};

struct Sample {
    Tensor x;
    std::uint32_t label = 0;
};
using Batch = std::vector<Sample>;

/// (layer index l, sample index n) -> input tensor to parameterized layer l.
struct ActivationCache {
    std::map<std::pair<std::uint32_t, std::uint32_t>, Tensor> entries;

    bool contains(std::uint32_t l, std::uint32_t n) const {
        return entries.count({l, n}) != 0;
    }
    const Tensor& get(std::uint32_t l, std::uint32_t n) const {
        auto it = entries.find({l, n});
        if (it == entries.end()) {
            throw CacheMissError("no cached activation for layer " + std::to_string(l) +
                                 ", sample " + std::to_string(n));
        }
        return it->second;
    }
};

/// Probabilities from logits; f64 internals with deterministic exp, f32 out.
inline std::vector<float> softmax(const Tensor& logits) {
    double m = -1e300;
    for (float v : logits.data) m = std::max(m, static_cast<double>(v));
    std::vector<double> e(logits.numel());
    double sum = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] = det_exp(static_cast<double>(logits.data[i]) - m);
        sum += e[i];
    }
    std::vector<float> p(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) p[i] = static_cast<float>(e[i] / sum);
    return p;
}

/// ln p(label | logits) under the softmax head.
inline double log_likelihood(const Tensor& logits, std::uint32_t label) {
    double m = -1e300;
    for (float v : logits.data) m = std::max(m, static_cast<double>(v));
    double sum = 0.0;
    for (float v : logits.data) sum += det_exp(static_cast<double>(v) - m);
    return static_cast<double>(logits.data[label]) - m - det_log(sum);
}

/// Layer-indexed network. Parameterized layers carry back-end-first indices
/// l = 1..L: l = 1 is the layer nearest the classifier output, l = L the one
/// nearest the input. Non-parameterized layers (relu, pool, flatten, head)
/// are not indexed.
class Model {
public:
    Model() = default;

    Model(std::vector<LayerSpec> specs, std::vector<std::uint32_t> input_shape)
        : input_shape_(std::move(input_shape)) {
        layers_.reserve(specs.size());
        for (auto& s : specs) {
            Layer ly;
            ly.spec = s;
            layers_.push_back(std::move(ly));
        }
        propagate_shapes();
        for (std::size_t pos = 0; pos < layers_.size(); ++pos) {
            if (layers_[pos].spec.has_params()) param_pos_.push_back(pos);
        }
        if (param_pos_.empty()) throw ConfigError("model has no parameterized layers");
        allocate_params();
    }

    /// dense(in->h1) relu ... dense(hk->classes) softmax head.
    static Model mlp(std::uint32_t in, const std::vector<std::uint32_t>& hidden,
                     std::uint32_t classes) {
        std::vector<LayerSpec> specs;
        std::uint32_t prev = in;
        for (auto h : hidden) {
            specs.push_back(LayerSpec::dense_layer(prev, h));
            specs.push_back(LayerSpec::relu_layer());
            prev = h;
        }
        specs.push_back(LayerSpec::dense_layer(prev, classes));
        specs.push_back(LayerSpec::softmax_head_layer());
        return Model(std::move(specs), {in});
    }

    /// conv(1->c1,3) relu pool2 conv(c1->c2,3) relu flatten dense relu dense.
    static Model tiny_cnn(std::uint32_t in_h, std::uint32_t in_w, std::uint32_t classes,
                          std::uint32_t c1 = 8, std::uint32_t c2 = 16,
                          std::uint32_t fc = 32) {
        std::vector<LayerSpec> specs;
        specs.push_back(LayerSpec::conv_layer(1, c1, 3));
        specs.push_back(LayerSpec::relu_layer());
        specs.push_back(LayerSpec::maxpool_layer(2, 2));
        specs.push_back(LayerSpec::conv_layer(c1, c2, 3));
        specs.push_back(LayerSpec::relu_layer());
        specs.push_back(LayerSpec::flatten_layer());
        std::uint32_t conv_h = (in_h - 2) / 2 - 2, conv_w = (in_w - 2) / 2 - 2;
        specs.push_back(LayerSpec::dense_layer(c2 * conv_h * conv_w, fc));
        specs.push_back(LayerSpec::relu_layer());
        specs.push_back(LayerSpec::dense_layer(fc, classes));
        specs.push_back(LayerSpec::softmax_head_layer());
        return Model(std::move(specs), {1, in_h, in_w});
    }

    std::uint32_t depth() const { return static_cast<std::uint32_t>(param_pos_.size()); }
    std::size_t layer_count() const { return layers_.size(); }
    const std::vector<std::uint32_t>& input_shape() const { return input_shape_; }
    const Layer& layer_at(std::size_t pos) const { return layers_[pos]; }

    std::size_t param_pos(std::uint32_t l) const {
        if (l < 1 || l > depth()) {
            throw ConfigError("layer index " + std::to_string(l) + " outside 1.." +
                              std::to_string(depth()));
        }
        return param_pos_[depth() - l];
    }
    Layer& param_layer(std::uint32_t l) { return layers_[param_pos(l)]; }
    const Layer& param_layer(std::uint32_t l) const { return layers_[param_pos(l)]; }

    std::uint32_t classes() const {
        const Layer& head = layers_[param_pos_.back()];
        return head.spec.kind == LayerKind::dense ? head.spec.out_features
                                                  : head.spec.out_channels;
    }

    /// Glorot-uniform parameters from a fully specified RNG stream.
    void init_random(std::uint64_t seed) {
        std::mt19937_64 gen(seed);
        for (auto pos : param_pos_) {
            Layer& ly = layers_[pos];
            double fan_in, fan_out;
            if (ly.spec.kind == LayerKind::dense) {
                fan_in = ly.spec.in_features;
                fan_out = ly.spec.out_features;
            } else {
                fan_in = static_cast<double>(ly.spec.in_channels) * ly.spec.kernel * ly.spec.kernel;
                fan_out = static_cast<double>(ly.spec.out_channels) * ly.spec.kernel * ly.spec.kernel;
            }
            double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (auto& w : ly.weight.data) {
                w = static_cast<float>((2.0 * uniform01(gen) - 1.0) * bound);
            }
            for (auto& b : ly.bias.data) b = 0.0f;
        }
        if (quantized_inference_) refresh_all_quantized();
    }

    // --- inference ----------------------------------------------------------

    Tensor forward(const Tensor& x) const { return run_from(0, x); }

    /// Forward pass that also caches the input to each layer l in cache_at
    /// under sample index n.
    Tensor forward_cached(const Tensor& x, const std::set<std::uint32_t>& cache_at,
                          std::uint32_t n, ActivationCache& cache) const {
        check_input(x);
        Tensor cur = x;
        for (std::size_t pos = 0; pos < layers_.size(); ++pos) {
            std::uint32_t l = backend_index_of_pos(pos);
            if (l != 0 && cache_at.count(l)) cache.entries[{l, n}] = cur;
            cur = apply_layer(layers_[pos], cur);
        }
        return cur;
    }

    /// Resume the forward pass at parameterized layer l from its cached
    /// input; runs layers l down to 1 plus any trailing non-parameterized
    /// layers.
    Tensor partial_inference(const ActivationCache& cache, std::uint32_t l,
                             std::uint32_t n) const {
        const Tensor& input = cache.get(l, n);
        return run_from(param_pos(l), input);
    }

    /// Inference uses the INT8 shadow of each weight tensor when enabled.
    void set_quantized_inference(bool on) {
        quantized_inference_ = on;
        if (on) refresh_all_quantized();
    }
    bool quantized_inference() const { return quantized_inference_; }

    /// Re-derive layer l's INT8 shadow after its master weights changed.
    void refresh_quantized(std::uint32_t l) {
        if (!quantized_inference_) return;
        Layer& ly = param_layer(l);
        ly.qweight = quantize_symmetric(ly.weight);
        ly.qweight_dequant = dequantize(ly.qweight);
    }

    // --- serialization ------------------------------------------------------

    static constexpr std::uint16_t kVersion = 1;

    void save(std::ostream& os) const {
        os.write("FCBM", 4);
        io::write_u16(os, kVersion);
        io::write_u16(os, static_cast<std::uint16_t>(layers_.size()));
        io::write_u8(os, static_cast<std::uint8_t>(input_shape_.size()));
        for (auto d : input_shape_) io::write_u32(os, d);
        for (const Layer& ly : layers_) {
            io::write_u8(os, static_cast<std::uint8_t>(ly.spec.kind));
            std::uint8_t flags = (ly.weight_eligible ? 1 : 0) | (ly.bias_eligible ? 2 : 0);
            io::write_u8(os, flags);
            const LayerSpec& s = ly.spec;
            for (std::uint32_t v : {s.in_features, s.out_features, s.in_channels, s.out_channels,
                                    s.kernel, s.stride, s.in_h, s.in_w, s.out_h, s.out_w}) {
                io::write_u32(os, v);
            }
            if (ly.spec.has_params()) {
                io::write_tensor(os, ly.weight);
                io::write_tensor(os, ly.bias);
            }
        }
    }

    static Model load(std::istream& is) {
        io::expect_magic(is, "FCBM");
        std::uint16_t version = io::read_u16(is);
        if (version != kVersion) {
            throw FormatError("unsupported model version " + std::to_string(version));
        }
        std::uint16_t layer_count = io::read_u16(is);
        std::uint8_t in_rank = io::read_u8(is);
        std::vector<std::uint32_t> input_shape(in_rank);
        for (auto& d : input_shape) d = io::read_u32(is);

        std::vector<LayerSpec> specs(layer_count);
        std::vector<std::uint8_t> flags(layer_count);
        std::vector<std::pair<Tensor, Tensor>> params(layer_count);
        for (std::uint16_t i = 0; i < layer_count; ++i) {
            std::uint8_t kind = io::read_u8(is);
            if (kind > static_cast<std::uint8_t>(LayerKind::softmax_head)) {
                throw FormatError("unknown layer kind " + std::to_string(kind));
            }
            specs[i].kind = static_cast<LayerKind>(kind);
            flags[i] = io::read_u8(is);
            std::uint32_t* fields[] = {&specs[i].in_features, &specs[i].out_features,
                                       &specs[i].in_channels, &specs[i].out_channels,
                                       &specs[i].kernel,      &specs[i].stride,
                                       &specs[i].in_h,        &specs[i].in_w,
                                       &specs[i].out_h,       &specs[i].out_w};
            for (auto* f : fields) *f = io::read_u32(is);
            if (specs[i].has_params()) {
                params[i].first = io::read_tensor_f32(is);
                params[i].second = io::read_tensor_f32(is);
            }
        }
        Model m(specs, input_shape);
        for (std::uint16_t i = 0; i < layer_count; ++i) {
            Layer& ly = m.layers_[i];
            ly.weight_eligible = flags[i] & 1;
            ly.bias_eligible = flags[i] & 2;
            if (ly.spec.has_params()) {
                if (params[i].first.shape != ly.weight.shape ||
                    params[i].second.shape != ly.bias.shape) {
                    throw FormatError("parameter tensor shape disagrees with layer geometry");
                }
                ly.weight = std::move(params[i].first);
                ly.bias = std::move(params[i].second);
            }
        }
        return m;
    }

    void save_file(const std::string& path) const {
        auto os = io::open_out(path);
        save(os);
    }
    static Model load_file(const std::string& path) {
        auto is = io::open_in(path);
        return load(is);
    }

    // --- internals shared with the backward pass ----------------------------

    /// Back-end-first index of a forward position; 0 if non-parameterized.
    std::uint32_t backend_index_of_pos(std::size_t pos) const {
        if (!layers_[pos].spec.has_params()) return 0;
        auto it = std::find(param_pos_.begin(), param_pos_.end(), pos);
        return depth() - static_cast<std::uint32_t>(it - param_pos_.begin());
    }

    Tensor apply_layer(const Layer& ly, const Tensor& x) const {
        switch (ly.spec.kind) {
            case LayerKind::dense: return apply_dense(ly, x);
            case LayerKind::conv2d: return apply_conv(ly, x);
            case LayerKind::relu: {
                Tensor y = x;
                for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
                return y;
            }
            case LayerKind::maxpool2d: return apply_maxpool(ly.spec, x);
            case LayerKind::flatten: {
                Tensor y = x;
                y.shape = {static_cast<std::uint32_t>(x.numel())};
                return y;
            }
            case LayerKind::softmax_head: return x;  // logits pass through
        }
        throw ConfigError("unreachable layer kind");
    }

    const Tensor& effective_weight(const Layer& ly) const {
        return quantized_inference_ ? ly.qweight_dequant : ly.weight;
    }

private:
    std::vector<Layer> layers_;            // forward order
    std::vector<std::size_t> param_pos_;   // forward positions of parameterized layers
    std::vector<std::uint32_t> input_shape_;
    bool quantized_inference_ = false;

    void check_input(const Tensor& x) const {
        if (x.shape != input_shape_) {
            throw DimensionError("input shape " + x.shape_str() + " does not match model input");
        }
    }

    Tensor run_from(std::size_t pos, const Tensor& input) const {
        Tensor cur = input;
        if (pos == 0) check_input(cur);
        for (std::size_t p = pos; p < layers_.size(); ++p) cur = apply_layer(layers_[p], cur);
        return cur;
    }

    Tensor apply_dense(const Layer& ly, const Tensor& x) const {
        if (x.numel() != ly.spec.in_features || x.shape.size() != 1) {
            throw DimensionError("dense layer expects [" + std::to_string(ly.spec.in_features) +
                                 "], got " + x.shape_str());
        }
        Tensor xcol({ly.spec.in_features, 1}, x.data);
        Tensor y = gemm(effective_weight(ly), xcol);
        y.shape = {ly.spec.out_features};
        for (std::uint32_t o = 0; o < ly.spec.out_features; ++o) y.data[o] += ly.bias.data[o];
        return y;
    }

    Tensor apply_conv(const Layer& ly, const Tensor& x) const {
        const LayerSpec& s = ly.spec;
        if (x.shape.size() != 3 || x.shape[0] != s.in_channels || x.shape[1] != s.in_h ||
            x.shape[2] != s.in_w) {
            throw DimensionError("conv2d input mismatch: got " + x.shape_str());
        }
        const Tensor& w = effective_weight(ly);
        Tensor y({s.out_channels, s.out_h, s.out_w});
        const std::uint32_t k = s.kernel;
        for (std::uint32_t oc = 0; oc < s.out_channels; ++oc) {
            for (std::uint32_t oh = 0; oh < s.out_h; ++oh) {
                for (std::uint32_t ow = 0; ow < s.out_w; ++ow) {
                    float acc = ly.bias.data[oc];
                    for (std::uint32_t ic = 0; ic < s.in_channels; ++ic) {
                        for (std::uint32_t kh = 0; kh < k; ++kh) {
                            for (std::uint32_t kw = 0; kw < k; ++kw) {
                                float xv = x.data[(ic * s.in_h + oh * s.stride + kh) * s.in_w +
                                                  ow * s.stride + kw];
                                float wv = w.data[((oc * s.in_channels + ic) * k + kh) * k + kw];
                                acc += xv * wv;
                            }
                        }
                    }
                    y.data[(oc * s.out_h + oh) * s.out_w + ow] = acc;
                }
            }
        }
        return y;
    }

    static Tensor apply_maxpool(const LayerSpec& s, const Tensor& x) {
        if (x.shape.size() != 3) throw DimensionError("maxpool2d expects rank-3 input");
        const std::uint32_t c = x.shape[0];
        Tensor y({c, s.out_h, s.out_w});
        for (std::uint32_t ch = 0; ch < c; ++ch) {
            for (std::uint32_t oh = 0; oh < s.out_h; ++oh) {
                for (std::uint32_t ow = 0; ow < s.out_w; ++ow) {
                    float best = -3.4e38f;
                    for (std::uint32_t kh = 0; kh < s.kernel; ++kh) {
                        for (std::uint32_t kw = 0; kw < s.kernel; ++kw) {
                            float v = x.data[(ch * s.in_h + oh * s.stride + kh) * s.in_w +
                                             ow * s.stride + kw];
                            if (v > best) best = v;
                        }
                    }
                    y.data[(ch * s.out_h + oh) * s.out_w + ow] = best;
                }
            }
        }
        return y;
    }

    void propagate_shapes() {
        std::vector<std::uint32_t> cur = input_shape_;
        for (Layer& ly : layers_) {
            LayerSpec& s = ly.spec;
            switch (s.kind) {
                case LayerKind::dense: {
                    std::uint32_t flat = static_cast<std::uint32_t>(Tensor::numel_of(cur));
                    if (cur.size() != 1 || flat != s.in_features) {
                        throw DimensionError("dense in_features " +
                                             std::to_string(s.in_features) +
                                             " incompatible with upstream output");
                    }
                    cur = {s.out_features};
                    break;
                }
                case LayerKind::conv2d: {
                    if (cur.size() != 3 || cur[0] != s.in_channels) {
                        throw DimensionError("conv2d in_channels incompatible with upstream");
                    }
                    s.in_h = cur[1];
                    s.in_w = cur[2];
                    if (s.in_h < s.kernel || s.in_w < s.kernel) {
                        throw DimensionError("conv2d kernel larger than input");
                    }
                    s.out_h = (s.in_h - s.kernel) / s.stride + 1;
                    s.out_w = (s.in_w - s.kernel) / s.stride + 1;
                    cur = {s.out_channels, s.out_h, s.out_w};
                    break;
                }
                case LayerKind::relu: break;
                case LayerKind::maxpool2d: {
                    if (cur.size() != 3) throw DimensionError("maxpool2d expects rank-3 input");
                    s.in_channels = cur[0];
                    s.out_channels = cur[0];
                    s.in_h = cur[1];
                    s.in_w = cur[2];
                    if (s.in_h < s.kernel || s.in_w < s.kernel) {
                        throw DimensionError("maxpool2d kernel larger than input");
                    }
                    s.out_h = (s.in_h - s.kernel) / s.stride + 1;
                    s.out_w = (s.in_w - s.kernel) / s.stride + 1;
                    cur = {cur[0], s.out_h, s.out_w};
                    break;
                }
                case LayerKind::flatten:
                    cur = {static_cast<std::uint32_t>(Tensor::numel_of(cur))};
                    break;
                case LayerKind::softmax_head: break;
            }
        }
    }

    void allocate_params() {
        for (auto pos : param_pos_) {
            Layer& ly = layers_[pos];
            if (ly.spec.kind == LayerKind::dense) {
                ly.weight = Tensor({ly.spec.out_features, ly.spec.in_features});
                ly.bias = Tensor({ly.spec.out_features});
            } else {
                ly.weight = Tensor(
                    {ly.spec.out_channels, ly.spec.in_channels, ly.spec.kernel, ly.spec.kernel});
                ly.bias = Tensor({ly.spec.out_channels});
            }
        }
    }

    void refresh_all_quantized() {
        for (std::uint32_t l = 1; l <= depth(); ++l) refresh_quantized(l);
    }
};

/// Gradients of ln p(label | x, theta) for one parameterized layer.
struct LayerGradients {
    std::uint32_t layer = 0;  // back-end-first index
    Tensor weight;
    Tensor bias;
};

/// Streaming reverse pass: gradients surface in back-end-first order
/// 1, 2, ..., L, so a consumer can act on layer l before any deeper work
/// happens. Propagation always reads the f32 master weights; the pass keeps
/// no reference to INT8 shadows.
class BackwardPass {
public:
    BackwardPass(const Model& model, const Tensor& x, std::uint32_t label)
        : model_(model), label_(label) {
        if (label >= model.classes()) {
            throw DimensionError("label " + std::to_string(label) + " >= class count");
        }
        inputs_.reserve(model.layer_count());
        Tensor cur = x;
        for (std::size_t pos = 0; pos < model.layer_count(); ++pos) {
            inputs_.push_back(cur);
            cur = apply_layer_master(model.layer_at(pos), cur);
        }
        logits_ = cur;
        std::vector<float> p = softmax(logits_);
        delta_ = Tensor(logits_.shape);
        for (std::size_t i = 0; i < p.size(); ++i) {
            delta_.data[i] = (i == label ? 1.0f : 0.0f) - p[i];
        }
        pos_ = static_cast<std::ptrdiff_t>(model.layer_count()) - 1;
    }

    const Tensor& logits() const { return logits_; }

    /// Input to parameterized layer l as seen by this pass's forward sweep.
    const Tensor& layer_input(std::uint32_t l) const { return inputs_[model_.param_pos(l)]; }

    bool has_next() const { return emitted_ < model_.depth(); }

    LayerGradients next() {
        while (pos_ >= 0) {
            const Layer& ly = model_.layer_at(static_cast<std::size_t>(pos_));
            const Tensor& input = inputs_[static_cast<std::size_t>(pos_)];
            if (ly.spec.has_params()) {
                LayerGradients g;
                g.layer = ++emitted_;
                param_gradients(ly, input, delta_, g);
                delta_ = input_gradient(ly, input, delta_);
                --pos_;
                return g;
            }
            delta_ = input_gradient(ly, input, delta_);
            --pos_;
        }
        throw ConfigError("backward pass already drained");
    }

private:
    const Model& model_;
    std::uint32_t label_;
    std::vector<Tensor> inputs_;
    Tensor logits_;
    Tensor delta_;
    std::ptrdiff_t pos_ = -1;
    std::uint32_t emitted_ = 0;

    // Same kernels as inference, but never through the INT8 shadow.
    Tensor apply_layer_master(const Layer& ly, const Tensor& x) const;

    static void param_gradients(const Layer& ly, const Tensor& x, const Tensor& delta,
                                LayerGradients& out);
    static Tensor input_gradient(const Layer& ly, const Tensor& x, const Tensor& delta);
};

inline Tensor BackwardPass::apply_layer_master(const Layer& ly, const Tensor& x) const {
    if (!ly.spec.has_params()) return model_.apply_layer(ly, x);
    const LayerSpec& s = ly.spec;
    if (s.kind == LayerKind::dense) {
        Tensor xcol({s.in_features, 1}, x.data);
        Tensor y = gemm(ly.weight, xcol);
        y.shape = {s.out_features};
        for (std::uint32_t o = 0; o < s.out_features; ++o) y.data[o] += ly.bias.data[o];
        return y;
    }
    // conv2d
    Tensor y({s.out_channels, s.out_h, s.out_w});
    const std::uint32_t k = s.kernel;
    for (std::uint32_t oc = 0; oc < s.out_channels; ++oc) {
        for (std::uint32_t oh = 0; oh < s.out_h; ++oh) {
            for (std::uint32_t ow = 0; ow < s.out_w; ++ow) {
                float acc = ly.bias.data[oc];
                for (std::uint32_t ic = 0; ic < s.in_channels; ++ic) {
                    for (std::uint32_t kh = 0; kh < k; ++kh) {
                        for (std::uint32_t kw = 0; kw < k; ++kw) {
                            acc += x.data[(ic * s.in_h + oh * s.stride + kh) * s.in_w +
                                          ow * s.stride + kw] *
                                   ly.weight.data[((oc * s.in_channels + ic) * k + kh) * k + kw];
                        }
                    }
                }
                y.data[(oc * s.out_h + oh) * s.out_w + ow] = acc;
            }
        }
    }
    return y;
}

inline void BackwardPass::param_gradients(const Layer& ly, const Tensor& x, const Tensor& delta,
                                          LayerGradients& out) {
    const LayerSpec& s = ly.spec;
    if (s.kind == LayerKind::dense) {
        out.weight = Tensor({s.out_features, s.in_features});
        out.bias = Tensor({s.out_features});
        for (std::uint32_t o = 0; o < s.out_features; ++o) {
            for (std::uint32_t i = 0; i < s.in_features; ++i) {
                out.weight.data[o * s.in_features + i] = delta.data[o] * x.data[i];
            }
            out.bias.data[o] = delta.data[o];
        }
        return;
    }
    const std::uint32_t k = s.kernel;
    out.weight = Tensor({s.out_channels, s.in_channels, k, k});
    out.bias = Tensor({s.out_channels});
    for (std::uint32_t oc = 0; oc < s.out_channels; ++oc) {
        float bacc = 0.0f;
        for (std::uint32_t oh = 0; oh < s.out_h; ++oh) {
            for (std::uint32_t ow = 0; ow < s.out_w; ++ow) {
                bacc += delta.data[(oc * s.out_h + oh) * s.out_w + ow];
            }
        }
        out.bias.data[oc] = bacc;
        for (std::uint32_t ic = 0; ic < s.in_channels; ++ic) {
            for (std::uint32_t kh = 0; kh < k; ++kh) {
                for (std::uint32_t kw = 0; kw < k; ++kw) {
                    float acc = 0.0f;
                    for (std::uint32_t oh = 0; oh < s.out_h; ++oh) {
                        for (std::uint32_t ow = 0; ow < s.out_w; ++ow) {
                            acc += delta.data[(oc * s.out_h + oh) * s.out_w + ow] *
                                   x.data[(ic * s.in_h + oh * s.stride + kh) * s.in_w +
                                          ow * s.stride + kw];
                        }
                    }
                    out.weight.data[((oc * s.in_channels + ic) * k + kh) * k + kw] = acc;
                }
            }
        }
    }
}

inline Tensor BackwardPass::input_gradient(const Layer& ly, const Tensor& x,
                                           const Tensor& delta) {
    const LayerSpec& s = ly.spec;
    switch (s.kind) {
        case LayerKind::dense: {
            Tensor dx({s.in_features});
            for (std::uint32_t i = 0; i < s.in_features; ++i) {
                float acc = 0.0f;
                for (std::uint32_t o = 0; o < s.out_features; ++o) {
                    acc += ly.weight.data[o * s.in_features + i] * delta.data[o];
                }
                dx.data[i] = acc;
            }
            return dx;
        }
        case LayerKind::conv2d: {
            Tensor dx({s.in_channels, s.in_h, s.in_w});
            const std::uint32_t k = s.kernel;
            for (std::uint32_t oc = 0; oc < s.out_channels; ++oc) {
                for (std::uint32_t oh = 0; oh < s.out_h; ++oh) {
                    for (std::uint32_t ow = 0; ow < s.out_w; ++ow) {
                        float d = delta.data[(oc * s.out_h + oh) * s.out_w + ow];
                        for (std::uint32_t ic = 0; ic < s.in_channels; ++ic) {
                            for (std::uint32_t kh = 0; kh < k; ++kh) {
                                for (std::uint32_t kw = 0; kw < k; ++kw) {
                                    dx.data[(ic * s.in_h + oh * s.stride + kh) * s.in_w +
                                            ow * s.stride + kw] +=
                                        d * ly.weight.data[((oc * s.in_channels + ic) * k + kh) * k +
                                                           kw];
                                }
                            }
                        }
                    }
                }
            }
            return dx;
        }
        case LayerKind::relu: {
            Tensor dx = delta;
            for (std::size_t i = 0; i < dx.numel(); ++i) {
                if (x.data[i] <= 0.0f) dx.data[i] = 0.0f;
            }
            return dx;
        }
        case LayerKind::maxpool2d: {
            Tensor dx({s.in_channels, s.in_h, s.in_w});
            for (std::uint32_t ch = 0; ch < s.in_channels; ++ch) {
                for (std::uint32_t oh = 0; oh < s.out_h; ++oh) {
                    for (std::uint32_t ow = 0; ow < s.out_w; ++ow) {
                        // Route to the first maximum in scan order.
                        float best = -3.4e38f;
                        std::size_t best_idx = 0;
                        for (std::uint32_t kh = 0; kh < s.kernel; ++kh) {
                            for (std::uint32_t kw = 0; kw < s.kernel; ++kw) {
                                std::size_t idx = (ch * s.in_h + oh * s.stride + kh) * s.in_w +
                                                  ow * s.stride + kw;
                                if (x.data[idx] > best) {
                                    best = x.data[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        dx.data[best_idx] += delta.data[(ch * s.out_h + oh) * s.out_w + ow];
                    }
                }
            }
            return dx;
        }
        case LayerKind::flatten: {
            Tensor dx = delta;
            dx.shape = x.shape;
            return dx;
        }
        case LayerKind::softmax_head: return delta;
    }
    throw ConfigError("unreachable layer kind");
}

/// All parameter gradients of ln p(label | x), back-end-first order.
inline std::vector<LayerGradients> backward_loglik(const Model& model, const Tensor& x,
                                                   std::uint32_t label) {
    BackwardPass pass(model, x, label);
    std::vector<LayerGradients> grads;
    grads.reserve(model.depth());
    while (pass.has_next()) grads.push_back(pass.next());
    return grads;
}

/// Fraction of samples whose argmax logit equals the label; argmax ties
/// break toward the lowest class index.
inline double evaluate_accuracy(const Model& model, const Batch& batch) {
    if (batch.empty()) throw EmptyInputError("evaluate_accuracy: empty batch");
    std::size_t correct = 0;
    for (const Sample& s : batch) {
        Tensor logits = model.forward(s.x);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < logits.numel(); ++i) {
            if (logits.data[i] > logits.data[arg]) arg = i;
        }
        if (arg == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

}  // namespace ficabu
