#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "ficabu/errors.hpp"
#include "ficabu/io.hpp"
#include "ficabu/model.hpp"
#include "ficabu/numerics.hpp"

namespace ficabu {

/// Gaussian blob synthesis. Class centers sit on random directions at
/// radius `separation`; lowering it raises inter-class similarity. Features
/// are snapped to a 2^-12 grid so generation is pure arithmetic end to end.
///
/// class_samples overrides samples_per_class per class. The default toy
/// setup keeps the forget class near 5% of the training data: selection
/// compares the forget-set mean against the full-set mean, so a class
/// holding fraction q of the data caps imp_f/imp_d near 1/q, and alpha = 10
/// can only ever fire when the forget class is well under 10% of the set.
struct BlobSpec {
    std::uint32_t classes = 5;
    std::uint32_t dims = 16;
    std::uint32_t samples_per_class = 400;
    std::vector<std::uint32_t> class_samples;  // optional per-class override
    std::uint64_t seed = 1;
    double spread = 1.0;
    double separation = 3.0;

    std::uint32_t samples_of(std::uint32_t cls) const {
        if (class_samples.empty()) return samples_per_class;
        if (class_samples.size() != classes) {
            throw ConfigError("class_samples must list one count per class");
        }
        return class_samples[cls];
    }
};

struct Dataset {
    Batch train;
    Batch test;
    std::uint32_t classes = 0;
    std::vector<std::uint32_t> input_shape;
    std::string digest;  // identity string carried into comparison records
};

namespace detail {

inline float snap_grid(double v) {
    return static_cast<float>(std::nearbyint(v * 4096.0) / 4096.0);
}

inline void shuffle_batch(Batch& b, std::mt19937_64& gen) {
    for (std::size_t i = b.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(gen() % i);
        std::swap(b[i - 1], b[j]);
    }
}

}  // namespace detail

/// 80/20 train/test split, seed-controlled throughout.
inline Dataset make_blobs(const BlobSpec& spec, bool as_image = false) {
    if (spec.classes < 2) throw ConfigError("blobs need at least 2 classes");
    for (std::uint32_t cls = 0; cls < spec.classes; ++cls) {
        if (spec.samples_of(cls) < 5) throw ConfigError("need >= 5 samples per class");
    }
    std::vector<std::uint32_t> shape;
    if (as_image) {
        auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(double(spec.dims))));
        if (side * side != spec.dims) {
            throw ConfigError("image datasets need a square dims value");
        }
        shape = {1, side, side};
    } else {
        shape = {spec.dims};
    }

    std::mt19937_64 gen(spec.seed);
    std::vector<std::vector<double>> centers(spec.classes, std::vector<double>(spec.dims));
    for (auto& c : centers) {
        double norm2 = 0.0;
        for (auto& v : c) {
            v = gaussian(gen);
            norm2 += v * v;
        }
        double scale = spec.separation / std::sqrt(norm2);
        for (auto& v : c) v *= scale;
    }

    Dataset ds;
    ds.classes = spec.classes;
    ds.input_shape = shape;
    for (std::uint32_t cls = 0; cls < spec.classes; ++cls) {
        const std::uint32_t count = spec.samples_of(cls);
        const std::uint32_t train_count = (count * 4) / 5;
        for (std::uint32_t i = 0; i < count; ++i) {
            Sample s;
            s.label = cls;
            s.x = Tensor(shape);
            for (std::uint32_t d = 0; d < spec.dims; ++d) {
                s.x.data[d] = detail::snap_grid(centers[cls][d] + spec.spread * gaussian(gen));
            }
            (i < train_count ? ds.train : ds.test).push_back(std::move(s));
        }
    }
    detail::shuffle_batch(ds.train, gen);
    detail::shuffle_batch(ds.test, gen);

    std::ostringstream digest;
    digest << "blobs:c" << spec.classes << ":d" << spec.dims << ":n";
    for (std::uint32_t cls = 0; cls < spec.classes; ++cls) digest << spec.samples_of(cls) << ",";
    digest << ":s" << spec.seed << ":sp" << spec.spread << ":sep" << spec.separation
           << (as_image ? ":img" : "");
    ds.digest = digest.str();
    return ds;
}

/// Directory of f32 tensor records named "<label>_<anything>", e.g.
/// "3_0042.fcbu"; deterministic 80/20 split over the sorted file list.
inline Dataset load_tiny_image_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw EmptyInputError("no files in " + dir);

    Dataset ds;
    std::uint32_t max_label = 0;
    Batch all;
    for (const auto& p : files) {
        std::string name = p.filename().string();
        auto underscore = name.find('_');
        if (underscore == std::string::npos) {
            throw FormatError("file name lacks a <label>_ prefix: " + name);
        }
        Sample s;
        try {
            s.label = static_cast<std::uint32_t>(std::stoul(name.substr(0, underscore)));
        } catch (const std::exception&) {
            throw FormatError("file name label is not a number: " + name);
        }
        max_label = std::max(max_label, s.label);
        auto is = io::open_in(p.string());
        s.x = io::read_tensor_f32(is);
        if (all.empty()) {
            ds.input_shape = s.x.shape;
        } else if (s.x.shape != ds.input_shape) {
            throw DimensionError("tensor shapes differ across dataset files");
        }
        all.push_back(std::move(s));
    }
    ds.classes = max_label + 1;
    const std::size_t train_n = (all.size() * 4) / 5;
    ds.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(train_n));
    ds.test.assign(all.begin() + static_cast<std::ptrdiff_t>(train_n), all.end());
    if (ds.test.empty()) throw EmptyInputError("dataset too small for an 80/20 split");
    ds.digest = "dir:" + fs::path(dir).filename().string() + ":n" + std::to_string(all.size());
    return ds;
}

/// Retain/forget views of the held-out test split.
inline Batch filter_class(const Batch& b, std::uint32_t cls, bool keep) {
    Batch out;
    for (const auto& s : b) {
        if ((s.label == cls) == keep) out.push_back(s);
    }
    return out;
}

/// The N forget samples used for both Fisher estimation and checkpoint
/// accuracy: the first N training samples of the forget class.
inline Batch forget_batch(const Dataset& ds, std::uint32_t cls, std::uint32_t n) {
    Batch out;
    for (const auto& s : ds.train) {
        if (s.label == cls) {
            out.push_back(s);
            if (out.size() == n) break;
        }
    }
    if (out.size() < n) {
        throw ConfigError("training split has only " + std::to_string(out.size()) +
                          " samples of class " + std::to_string(cls) + ", need " +
                          std::to_string(n));
    }
    return out;
}

}  // namespace ficabu
