#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ficabu/errors.hpp"
#include "ficabu/fisher.hpp"
#include "ficabu/model.hpp"
#include "ficabu/numerics.hpp"

namespace ficabu {

struct DampeningParams {
    float alpha = 10.0f;   // selection threshold
    float lambda = 1.0f;   // strength weight

    void validate() const {
        if (!(alpha > 0.0f)) throw ConfigError("alpha must be > 0");
        if (!(lambda > 0.0f)) throw ConfigError("lambda must be > 0");
    }
};

/// Depth profile for balanced dampening. c_m is the sigmoid midpoint in
/// layer-index units; NaN means "derive from the SSD selection counts".
struct ProfileParams {
    double b_r = 10.0;   // front-end bound, >= 1
    double c_m = std::numeric_limits<double>::quiet_NaN();
    std::uint32_t depth = 0;  // L

    void validate() const {
        if (!(b_r >= 1.0)) throw ConfigError("b_r must be >= 1");
        if (depth < 2) throw ConfigError("profile needs depth L >= 2");
    }
};

/// mask_i = imp_f_i > alpha * imp_d_i, strict.
inline std::vector<std::uint8_t> select_mask(const Tensor& imp_f, const Tensor& imp_d,
                                             float alpha) {
    if (!imp_f.same_shape(imp_d)) {
        throw DimensionError("select_mask: importance slices differ in shape");
    }
    std::vector<std::uint8_t> mask(imp_f.numel());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = imp_f.data[i] > alpha * imp_d.data[i] ? 1 : 0;
    }
    return mask;
}

/// beta = min(lambda * imp_d / imp_f, 1). Selection guarantees imp_f > 0
/// here (imp_f > alpha*imp_d >= 0); imp_d == 0 collapses to full zeroing.
inline float beta(float imp_f_i, float imp_d_i, float lambda) {
    if (!(imp_f_i > 0.0f)) {
        throw std::logic_error("beta: selected parameter with zero forget importance");
    }
    float b = lambda * imp_d_i / imp_f_i;
    return b < 1.0f ? b : 1.0f;
}

struct LayerDampeningReport {
    std::uint32_t layer = 0;
    std::uint64_t param_count = 0;
    std::uint64_t selected = 0;
    float beta_min = 1.0f;     // 1 when nothing selected
    double beta_mean = 1.0;

    // dampening params actually applied (after any profile scaling)
    float alpha_used = 0.0f;
    float lambda_used = 0.0f;
};

struct DampeningReport {
    std::vector<LayerDampeningReport> layers;

    std::uint64_t total_modified() const {
        std::uint64_t n = 0;
        for (const auto& l : layers) n += l.selected;
        return n;
    }

    /// One record per layer: index, selected count, min/mean beta.
    std::string to_text() const {
        std::ostringstream os;
        os << "layer selected params beta_min beta_mean\n";
        for (const auto& l : layers) {
            os << l.layer << " " << l.selected << " " << l.param_count << " " << l.beta_min
               << " " << l.beta_mean << "\n";
        }
        os << "total_modified " << total_modified() << "\n";
        return os.str();
    }
};

namespace detail {

/// Returns the sum of applied betas; updates selected count and min.
inline double dampen_tensor(Tensor& theta, const Tensor& imp_f, const Tensor& imp_d,
                            const DampeningParams& p, LayerDampeningReport& rep) {
    if (!theta.same_shape(imp_f) || !theta.same_shape(imp_d)) {
        throw DimensionError("dampen_layer: importance slices do not match parameters");
    }
    double beta_sum = 0.0;
    for (std::size_t i = 0; i < theta.numel(); ++i) {
        if (!(imp_f.data[i] > p.alpha * imp_d.data[i])) continue;  // unselected: untouched
        float b = beta(imp_f.data[i], imp_d.data[i], p.lambda);
        theta.data[i] *= b;
        ++rep.selected;
        beta_sum += b;
        if (b < rep.beta_min) rep.beta_min = b;
    }
    return beta_sum;
}

}  // namespace detail

/// Applies theta_i <- beta_i * theta_i to selected parameters of layer l,
/// in place; unselected parameters are left bit-identical. Ineligible
/// parameter tensors are skipped entirely.
inline LayerDampeningReport dampen_layer(Model& model, std::uint32_t l,
                                         const ImportanceSlice& imp_f,
                                         const ImportanceSlice& imp_d,
                                         const DampeningParams& params) {
    params.validate();
    Layer& ly = model.param_layer(l);
    LayerDampeningReport rep;
    rep.layer = l;
    rep.param_count = ly.param_count();
    rep.alpha_used = params.alpha;
    rep.lambda_used = params.lambda;
    double beta_sum = 0.0;
    if (ly.weight_eligible) {
        beta_sum += detail::dampen_tensor(ly.weight, imp_f.weight, imp_d.weight, params, rep);
    }
    if (ly.bias_eligible) {
        beta_sum += detail::dampen_tensor(ly.bias, imp_f.bias, imp_d.bias, params, rep);
    }
    rep.beta_mean = rep.selected ? beta_sum / static_cast<double>(rep.selected) : 1.0;
    if (rep.selected) model.refresh_quantized(l);
    return rep;
}

/// S(l) = 1 + (b_r - 1) * (sigma(l) - sigma(1)) / (sigma(L) - sigma(1)),
/// sigma(l) = 1 / (1 + exp(-(l - c_m))). Endpoints are exact in floating
/// point: the ratio is 0/x at l=1 and x/x = 1 at l=L, and both b_r - 1 and
/// the add-back of 1 are exact for any representable b_r >= 1.
inline double profile_scale(std::uint32_t l, const ProfileParams& p) {
    p.validate();
    if (std::isnan(p.c_m)) throw ConfigError("profile midpoint c_m not set");
    if (l < 1 || l > p.depth) {
        throw ConfigError("profile_scale: layer " + std::to_string(l) + " outside 1..L");
    }
    auto sigma = [&](double x) { return 1.0 / (1.0 + det_exp(-(x - p.c_m))); };
    const double s1 = sigma(1.0), sl = sigma(static_cast<double>(l)),
                 sL = sigma(static_cast<double>(p.depth));
    return 1.0 + (p.b_r - 1.0) * ((sl - s1) / (sL - s1));
}

/// (alpha, lambda) -> S(l) * (alpha, lambda).
inline DampeningParams scaled_params(const DampeningParams& base, std::uint32_t l,
                                     const ProfileParams& p) {
    double s = profile_scale(l, p);
    DampeningParams out;
    out.alpha = static_cast<float>(s * static_cast<double>(base.alpha));
    out.lambda = static_cast<float>(s * static_cast<double>(base.lambda));
    return out;
}

/// Midpoint between the first and last layer indices whose selection counts
/// exceed 10% of the per-layer maximum, after 3-point moving-average
/// smoothing. counts[i] is the selected-parameter count of layer i+1.
inline double derive_profile_midpoint(const std::vector<std::uint64_t>& counts) {
    if (counts.empty()) throw EmptyInputError("derive_profile_midpoint: no counts");
    const std::size_t n = counts.size();
    std::vector<double> smooth(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = static_cast<double>(counts[i]);
        double m = 1.0;
        if (i > 0) {
            s += static_cast<double>(counts[i - 1]);
            m += 1.0;
        }
        if (i + 1 < n) {
            s += static_cast<double>(counts[i + 1]);
            m += 1.0;
        }
        smooth[i] = s / m;
    }
    double peak = 0.0;
    for (double v : smooth) peak = std::max(peak, v);
    if (peak <= 0.0) return (1.0 + static_cast<double>(n)) / 2.0;  // nothing selected anywhere
    std::size_t first = n, last = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (smooth[i] > 0.1 * peak) {
            first = std::min(first, i);
            last = std::max(last, i);
        }
    }
    return (static_cast<double>(first + 1) + static_cast<double>(last + 1)) / 2.0;
}

}  // namespace ficabu
