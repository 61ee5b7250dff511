#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "twinsync/nn.hpp"

namespace testsupport {

using twinsync::nn::LayerSpec;
using twinsync::nn::ModelWeights;
using twinsync::nn::Sample;

inline ModelWeights random_weights(const LayerSpec& spec, std::uint64_t seed, double scale = 0.7) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    ModelWeights w{spec, std::vector<double>(spec.parameter_count())};
    for (auto& v : w.values) v = normal(rng);
    return w;
}

inline std::vector<Sample> random_samples(std::size_t n, std::size_t width, std::size_t classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Sample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < width; ++d) out[i].x.push_back(unit(rng));
        out[i].y = i % classes;
    }
    return out;
}

// Plain loops over the flat layout, independent of the Eigen kernels.
inline std::vector<double> naive_logits(const ModelWeights& w, const std::vector<double>& x) {
    const auto& sizes = w.spec.sizes;
    std::vector<double> a = x;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t in = sizes[l], out = sizes[l + 1];
        std::vector<double> z(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += w.values[off + o * in + i] * a[i];
            z[o] = acc + w.values[off + out * in + o];
        }
        off += out * in + out;
        if (l + 2 < sizes.size())
            for (auto& v : z) v = std::max(v, 0.0);
        a = std::move(z);
    }
    return a;
}

inline std::vector<double> naive_probs(const ModelWeights& w, const std::vector<double>& x) {
    auto z = naive_logits(w, x);
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (auto& v : z) s += (v = std::exp(v - m));
    for (auto& v : z) v /= s;
    return z;
}

inline double naive_loss(const ModelWeights& w, const std::vector<Sample>& data) {
    double total = 0.0;
    for (const auto& s : data) total -= std::log(naive_probs(w, s.x)[s.y]);
    return total / static_cast<double>(data.size());
}

inline std::vector<double> central_difference(const std::function<double(const ModelWeights&)>& f, const ModelWeights& w,
                                              double h) {
    std::vector<double> g(w.values.size());
    ModelWeights probe = w;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double orig = probe.values[i];
        probe.values[i] = orig + h;
        const double up = f(probe);
        probe.values[i] = orig - h;
        const double down = f(probe);
        probe.values[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Largest coordinatewise |a-b| / max(|a|, |b|, floor * max(1, |a|_inf, |b|_inf)).
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
    double scale = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::max({std::abs(a[i]), std::abs(b[i]), floor * scale});
        worst = std::max(worst, std::abs(a[i] - b[i]) / d);
    }
    return worst;
}

}  // namespace testsupport
