#pragma once

#include <cstdint>
#include <vector>

#include "ficabu/dataset.hpp"
#include "ficabu/errors.hpp"
#include "ficabu/model.hpp"
#include "ficabu/numerics.hpp"

namespace ficabu {

struct TrainerConfig {
    std::uint32_t epochs = 50;
    double lr = 0.05;
    std::uint32_t batch = 32;
    std::uint64_t seed = 7;
};

struct TrainStats {
    double train_acc = 0.0;
    double test_acc = 0.0;
    double final_loss = 0.0;  // mean NLL over the training split
    std::uint32_t epochs_run = 0;
};

namespace detail {

inline void sgd_epoch(Model& model, const Dataset& data, const TrainerConfig& cfg,
                      const std::vector<std::size_t>& order) {
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
        std::size_t end = std::min(order.size(), start + cfg.batch);
        std::vector<LayerGradients> sum;
        for (std::size_t k = start; k < end; ++k) {
            const Sample& s = data.train[order[k]];
            std::vector<LayerGradients> g = backward_loglik(model, s.x, s.label);
            if (sum.empty()) {
                sum = std::move(g);
            } else {
                for (std::size_t l = 0; l < sum.size(); ++l) {
                    for (std::size_t i = 0; i < sum[l].weight.numel(); ++i) {
                        sum[l].weight.data[i] += g[l].weight.data[i];
                    }
                    for (std::size_t i = 0; i < sum[l].bias.numel(); ++i) {
                        sum[l].bias.data[i] += g[l].bias.data[i];
                    }
                }
            }
        }
        // Gradient ascent on the mean log-likelihood.
        const float step = static_cast<float>(cfg.lr / static_cast<double>(end - start));
        for (auto& g : sum) {
            Layer& ly = model.param_layer(g.layer);
            for (std::size_t i = 0; i < ly.weight.numel(); ++i) {
                ly.weight.data[i] += step * g.weight.data[i];
            }
            for (std::size_t i = 0; i < ly.bias.numel(); ++i) {
                ly.bias.data[i] += step * g.bias.data[i];
            }
        }
    }
}

}  // namespace detail

/// Plain SGD on mean cross-entropy. The model must already be initialized;
/// an epoch cap of zero leaves it untouched. Divergence surfaces as the
/// non-finite-loss error.
inline TrainStats train_sgd(Model& model, const Dataset& data, const TrainerConfig& cfg) {
    if (data.train.empty()) throw EmptyInputError("train_sgd: empty training split");
    std::mt19937_64 gen(cfg.seed);
    std::vector<std::size_t> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainStats stats;
    try {
        for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            for (std::size_t i = order.size(); i > 1; --i) {
                std::size_t j = static_cast<std::size_t>(gen() % i);
                std::swap(order[i - 1], order[j]);
            }
            detail::sgd_epoch(model, data, cfg, order);
            stats.epochs_run = epoch + 1;
        }
        if (model.quantized_inference()) model.set_quantized_inference(true);  // fresh shadows

        double nll = 0.0;
        for (const Sample& s : data.train) {
            nll -= log_likelihood(model.forward(s.x), s.label);
        }
        stats.final_loss = nll / static_cast<double>(data.train.size());
    } catch (const NonFiniteError&) {
        throw ConfigError("training diverged: non-finite loss");
    }
    if (!std::isfinite(stats.final_loss)) {
        throw ConfigError("training diverged: non-finite loss");
    }
    stats.train_acc = evaluate_accuracy(model, data.train);
    stats.test_acc = data.test.empty() ? 0.0 : evaluate_accuracy(model, data.test);
    return stats;
}

}  // namespace ficabu
