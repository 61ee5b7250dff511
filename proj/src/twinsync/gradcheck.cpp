#include "twinsync/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "twinsync/errors.hpp"
#include "twinsync/nn.hpp"
#include "twinsync/strategies.hpp"

namespace twinsync::gradcheck {
namespace {

using nn::ModelWeights;

struct Problem {
    ModelWeights w;
    std::vector<nn::Sample> samples;
};

// Smallest |pre-activation| over every hidden unit and sample. Finite
// differences are only meaningful away from the ReLU kink.
double kink_distance(const Problem& p) {
    const auto& spec = p.w.spec;
    double nearest = INFINITY;
    for (const auto& s : p.samples) {
        std::vector<double> a = s.x;
        for (std::size_t l = 0; l + 1 < spec.layer_count(); ++l) {
            const std::size_t in = spec.sizes[l], out = spec.sizes[l + 1];
            std::vector<double> z(out);
            for (std::size_t o = 0; o < out; ++o) {
                double acc = p.w.values[spec.bias_offset(l) + o];
                for (std::size_t i = 0; i < in; ++i) acc += p.w.values[spec.weight_offset(l) + o * in + i] * a[i];
                nearest = std::min(nearest, std::abs(acc));
                z[o] = std::max(acc, 0.0);
            }
            a = std::move(z);
        }
    }
    return nearest;
}

Problem random_problem(std::mt19937_64& rng, std::size_t max_parameters) {
    std::uniform_int_distribution<std::size_t> width(1, 8), depth(1, 2), classes(2, 5), inputs(1, 6), count(3, 8);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    while (true) {
        nn::LayerSpec spec;
        spec.sizes.push_back(inputs(rng));
        for (std::size_t d = depth(rng); d > 0; --d) spec.sizes.push_back(width(rng));
        spec.sizes.push_back(classes(rng));
        if (spec.parameter_count() > max_parameters) continue;

        Problem p{nn::zero_weights(spec), {}};
        for (auto& v : p.w.values) v = 0.7 * normal(rng);
        const std::size_t n = count(rng);
        for (std::size_t i = 0; i < n; ++i) {
            nn::Sample s;
            for (std::size_t d = 0; d < spec.input_width(); ++d) s.x.push_back(unit(rng));
            s.y = i % spec.classes();
            p.samples.push_back(std::move(s));
        }
        if (kink_distance(p) > 1e-2) return p;
    }
}

double check(const ModelWeights& w, const std::vector<double>& analytic,
             const std::function<double(const ModelWeights&)>& f, const Options& opt) {
    std::vector<double> numeric(w.values.size());
    ModelWeights probe = w;
    double scale = 1.0;
    for (std::size_t i = 0; i < w.values.size(); ++i) {
        const double orig = probe.values[i];
        probe.values[i] = orig + opt.step;
        const double up = f(probe);
        probe.values[i] = orig - opt.step;
        const double down = f(probe);
        probe.values[i] = orig;
        numeric[i] = (up - down) / (2.0 * opt.step);
        scale = std::max({scale, std::abs(numeric[i]), std::abs(analytic[i])});
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i)
        worst = std::max(worst, relative_error(analytic[i], numeric[i], opt.floor * scale));
    return worst;
}

strategies::AnchorSet random_anchors(const ModelWeights& w, std::size_t count, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 0.3);
    std::uniform_real_distribution<double> fisher(0.0, 1.0);
    strategies::AnchorSet set;
    for (std::size_t j = 0; j < count; ++j) {
        strategies::Anchor a{w, {std::vector<double>(w.values.size()), j, strategies::FisherKind::PerEpisode}};
        for (auto& v : a.weights.values) v += normal(rng);
        for (auto& f : a.fisher.values) f = fisher(rng);
        set.anchors.push_back(std::move(a));
    }
    return set;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

std::vector<SuiteResult> run(const Options& opt) {
    require(opt.step > 0.0 && opt.floor > 0.0, ErrorKind::InvalidArgument, "gradcheck step and floor must be > 0");
    require(opt.networks >= 1, ErrorKind::InvalidArgument, "gradcheck needs at least one network");
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32), 0x6763u};
    std::mt19937_64 rng(seq);

    std::vector<SuiteResult> out;

    {
        SuiteResult toy{"toy", 1, 0, 0.0};
        Problem p{nn::init_weights(nn::LayerSpec{{1, 1, 2}}, opt.seed), {}};
        for (auto& v : p.w.values) v += 0.25;
        p.samples = {{{0.8}, 0}, {{-0.3}, 1}, {{0.5}, 1}};
        const nn::Batch batch = nn::make_batch(p.samples, p.w.spec);
        const auto lg = nn::loss_and_grad(p.w, batch);
        toy.coordinates = lg.grad.size();
        toy.max_relative_error =
            check(p.w, lg.grad, [&](const ModelWeights& m) { return nn::loss_only(m, batch); }, opt);
        out.push_back(toy);
    }

    SuiteResult data{"data_loss", opt.networks, 0, 0.0};
    SuiteResult ewc{"ewc_penalty", opt.networks, 0, 0.0};
    SuiteResult ewcpp{"ewcpp_penalty", opt.networks, 0, 0.0};
    std::uniform_real_distribution<double> lambda(0.1, 10.0), gamma(0.0, 1.0);
    for (std::size_t net = 0; net < opt.networks; ++net) {
        const Problem p = random_problem(rng, opt.max_parameters);
        const nn::Batch batch = nn::make_batch(p.samples, p.w.spec);
        const std::size_t n = p.w.values.size();

        const auto lg = nn::loss_and_grad(p.w, batch);
        data.coordinates += n;
        data.max_relative_error = std::max(
            data.max_relative_error, check(p.w, lg.grad, [&](const ModelWeights& m) { return nn::loss_only(m, batch); }, opt));

        const double lam = lambda(rng);
        const auto anchors = random_anchors(p.w, 1 + net % 3, rng);
        const auto pen = strategies::ewc_penalty(p.w, anchors, lam);
        ewc.coordinates += n;
        ewc.max_relative_error = std::max(
            ewc.max_relative_error,
            check(p.w, pen.grad, [&](const ModelWeights& m) { return strategies::ewc_penalty(m, anchors, lam).value; }, opt));

        // Moving-average anchor built from Fisher diagonals of real data.
        auto prev = strategies::fisher_diagonal(anchors.anchors.front().weights, batch, 0);
        auto cur = strategies::fisher_diagonal(p.w, batch, 1);
        strategies::AnchorSet single;
        single.anchors.push_back({anchors.anchors.back().weights, strategies::ewcpp_fisher_update(cur, prev, gamma(rng))});
        const auto pen2 = strategies::ewc_penalty(p.w, single, lam);
        ewcpp.coordinates += n;
        ewcpp.max_relative_error = std::max(
            ewcpp.max_relative_error,
            check(p.w, pen2.grad, [&](const ModelWeights& m) { return strategies::ewc_penalty(m, single, lam).value; }, opt));
    }
    out.push_back(data);
    out.push_back(ewc);
    out.push_back(ewcpp);
    return out;
}

}  // namespace twinsync::gradcheck
