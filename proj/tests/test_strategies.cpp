#include <doctest.h>

#include <cmath>
#include <variant>

#include "support.hpp"
#include "twinsync/errors.hpp"
#include "twinsync/strategies.hpp"

using namespace twinsync;
using namespace twinsync::strategies;
using nn::ModelWeights;
using nn::Sample;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an exception");
    return ErrorKind::InvalidArgument;
}

episodes::EpisodeDataset episode(std::size_t k, std::size_t n, std::size_t width, std::size_t classes, std::uint64_t seed) {
    episodes::EpisodeDataset e;
    e.index = k;
    e.samples = testsupport::random_samples(n, width, classes, seed);
    e.permutation = episodes::Permutation::identity(width);
    return e;
}

double log_likelihood(const ModelWeights& w, const Sample& s) { return std::log(testsupport::naive_probs(w, s.x)[s.y]); }

ModelWeights scalar_weights(double v) { return ModelWeights{{}, {v}}; }

}  // namespace

TEST_CASE("strategy names round-trip") {
    for (Strategy s : kAllStrategies) CHECK(parse_strategy(to_string(s)) == s);
    CHECK(kind_of([] { parse_strategy("replay"); }) == ErrorKind::Config);
}

TEST_CASE("Fisher diagonal is nonnegative and duplication-invariant") {
    const nn::LayerSpec spec{{4, 5, 3}};
    const auto w = testsupport::random_weights(spec, 2);
    auto e = episode(0, 11, 4, 3, 3);
    const auto f = fisher_diagonal(w, e);
    REQUIRE(f.values.size() == spec.parameter_count());
    for (double v : f.values) CHECK(v >= 0.0);

    auto doubled = e;
    doubled.samples.insert(doubled.samples.end(), e.samples.begin(), e.samples.end());
    CHECK(testsupport::max_relative_error(fisher_diagonal(w, doubled).values, f.values, 1e-12) < 1e-12);

    e.samples.clear();
    CHECK(kind_of([&] { fisher_diagonal(w, e); }) == ErrorKind::EmptyInput);
}

TEST_CASE("Fisher diagonal matches squared finite-difference scores") {
    const nn::LayerSpec spec{{1, 1, 2}};
    ModelWeights w{spec, {0.8, 0.3, 1.2, -0.7, 0.1, 0.2}};
    SUBCASE("single sample") {
        const Sample s{{0.6}, 1};
        auto e = episode(0, 1, 1, 2, 1);
        e.samples = {s};
        const auto fd = testsupport::central_difference([&](const ModelWeights& m) { return log_likelihood(m, s); }, w, 1e-5);
        std::vector<double> want;
        for (double g : fd) want.push_back(g * g);
        CHECK(testsupport::max_relative_error(fisher_diagonal(w, e).values, want) < 1e-8);
    }
    SUBCASE("mean over samples") {
        auto e = episode(0, 5, 1, 2, 6);
        for (auto& s : e.samples) s.x[0] += 0.2;
        std::vector<double> want(6, 0.0);
        for (const auto& s : e.samples) {
            const auto fd =
                testsupport::central_difference([&](const ModelWeights& m) { return log_likelihood(m, s); }, w, 1e-5);
            for (std::size_t i = 0; i < 6; ++i) want[i] += fd[i] * fd[i] / 5.0;
        }
        CHECK(testsupport::max_relative_error(fisher_diagonal(w, e).values, want) < 1e-8);
    }
}

TEST_CASE("EWC penalty hand values") {
    AnchorSet one{{Anchor{scalar_weights(1.0), {{2.0}, 0, FisherKind::PerEpisode}}}};
    const auto p = ewc_penalty(scalar_weights(4.0), one, 4.0);
    CHECK(p.value == 36.0);
    CHECK(p.grad == std::vector<double>{24.0});

    const auto zero = ewc_penalty(scalar_weights(4.0), one, 0.0);
    CHECK(zero.value == 0.0);
    CHECK(zero.grad == std::vector<double>{0.0});

    CHECK(ewc_penalty(scalar_weights(1.0), one, 4.0).value == 0.0);

    // Zero Fisher coordinates do not count.
    AnchorSet flat{{Anchor{ModelWeights{{}, {1.0, 2.0}}, {{0.0, 3.0}, 0, FisherKind::PerEpisode}}}};
    CHECK(ewc_penalty(ModelWeights{{}, {5.0, 2.0}}, flat, 10.0).value == 0.0);

    AnchorSet bad{{Anchor{ModelWeights{{}, {1.0, 2.0}}, {{1.0}, 0, FisherKind::PerEpisode}}}};
    CHECK(kind_of([&] { ewc_penalty(ModelWeights{{}, {1.0, 2.0}}, bad, 1.0); }) == ErrorKind::Shape);
}

TEST_CASE("EWC penalty sums over anchors and matches finite differences") {
    const nn::LayerSpec spec{{3, 4, 2}};
    const auto w = testsupport::random_weights(spec, 4);
    AnchorSet set;
    for (std::uint64_t j = 0; j < 3; ++j) {
        Anchor a{testsupport::random_weights(spec, 10 + j), {testsupport::random_weights(spec, 20 + j).values, j,
                                                             FisherKind::PerEpisode}};
        for (auto& f : a.fisher.values) f = std::abs(f);
        set.anchors.push_back(a);
    }
    const double lambda = 3.5;
    double want = 0.0;
    for (const auto& a : set.anchors)
        for (std::size_t d = 0; d < w.values.size(); ++d) {
            const double diff = w.values[d] - a.weights.values[d];
            want += 0.5 * lambda * a.fisher.values[d] * diff * diff;
        }
    const auto p = ewc_penalty(w, set, lambda);
    CHECK(p.value == doctest::Approx(want).epsilon(1e-13));
    const auto fd =
        testsupport::central_difference([&](const ModelWeights& m) { return ewc_penalty(m, set, lambda).value; }, w, 1e-4);
    CHECK(testsupport::max_relative_error(p.grad, fd) < 1e-6);
}

TEST_CASE("moving-average Fisher update") {
    const FisherDiagonal cur{{2.0, 4.0}, 1, FisherKind::PerEpisode};
    const FisherDiagonal prev{{0.0, 2.0}, 0, FisherKind::MovingAverage};
    CHECK(ewcpp_fisher_update(cur, prev, 0.5).values == std::vector<double>{1.0, 3.0});
    CHECK(ewcpp_fisher_update(cur, prev, 1.0).values == cur.values);
    CHECK(ewcpp_fisher_update(cur, prev, 0.0).values == prev.values);
    CHECK(ewcpp_fisher_update(cur, prev, 0.5).kind == FisherKind::MovingAverage);
    CHECK(kind_of([&] { ewcpp_fisher_update(cur, {{1.0}, 0, FisherKind::PerEpisode}, 0.5); }) == ErrorKind::Shape);

    const auto a = testsupport::random_weights(nn::LayerSpec{{5, 5, 5}}, 1).values;
    const auto b = testsupport::random_weights(nn::LayerSpec{{5, 5, 5}}, 2).values;
    FisherDiagonal fa{{}, 1, FisherKind::PerEpisode}, fb{{}, 0, FisherKind::MovingAverage};
    for (std::size_t i = 0; i < a.size(); ++i) {
        fa.values.push_back(std::abs(a[i]));
        fb.values.push_back(std::abs(b[i]));
    }
    for (double g : {0.1, 0.37, 0.9}) {
        const auto m = ewcpp_fisher_update(fa, fb, g);
        for (std::size_t i = 0; i < m.values.size(); ++i) {
            CHECK(m.values[i] >= std::min(fa.values[i], fb.values[i]));
            CHECK(m.values[i] <= std::max(fa.values[i], fb.values[i]));
        }
    }
}

TEST_CASE("episode 0 loss is the same for every strategy") {
    const nn::LayerSpec spec{{4, 6, 3}};
    const auto w = testsupport::random_weights(spec, 8);
    const auto e0 = episode(0, 20, 4, 3, 9);
    const RegConfig reg{50.0, 0.5};
    const auto ref = episode_loss(Strategy::SingleTask, w, e0, empty_history(Strategy::SingleTask), reg);
    for (Strategy s : kAllStrategies) {
        const auto lb = episode_loss(s, w, e0, empty_history(s), reg);
        CHECK(lb.total == ref.total);
        CHECK(lb.grad == ref.grad);
        CHECK(lb.penalty == 0.0);
    }
}

TEST_CASE("EWC with lambda 0 equals single-task exactly") {
    const nn::LayerSpec spec{{4, 6, 3}};
    const auto w0 = testsupport::random_weights(spec, 10);
    const auto e0 = episode(0, 20, 4, 3, 11);
    const auto e1 = episode(1, 20, 4, 3, 12);
    const RegConfig reg{0.0, 0.5};
    auto hist = end_of_episode(Strategy::Ewc, w0, e0, empty_history(Strategy::Ewc), reg);
    const auto w1 = testsupport::random_weights(spec, 13);
    const auto ewc = episode_loss(Strategy::Ewc, w1, e1, hist, reg);
    const auto single = episode_loss(Strategy::SingleTask, w1, e1, empty_history(Strategy::SingleTask), reg);
    CHECK(ewc.total == single.total);
    CHECK(ewc.grad == single.grad);
}

TEST_CASE("exhaustive loss over two equal episodes is the mean of their losses") {
    const nn::LayerSpec spec{{4, 6, 3}};
    const auto w = testsupport::random_weights(spec, 14);
    const auto e0 = episode(0, 15, 4, 3, 15);
    const auto e1 = episode(1, 15, 4, 3, 16);
    const RegConfig reg;
    const auto hist = end_of_episode(Strategy::Exhaustive, w, e0, empty_history(Strategy::Exhaustive), reg);
    const auto both = episode_loss(Strategy::Exhaustive, w, e1, hist, reg);
    const double l0 = nn::loss_and_grad(w, e0.samples).loss;
    const double l1 = nn::loss_and_grad(w, e1.samples).loss;
    CHECK(both.total == doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-13));
}

TEST_CASE("history that does not fit the strategy is a configuration error") {
    const nn::LayerSpec spec{{2, 2, 2}};
    const auto w = nn::zero_weights(spec);
    const auto e = episode(0, 4, 2, 2, 1);
    CHECK(kind_of([&] { episode_loss(Strategy::Ewc, w, e, episodes::AccumulatedDataset{}, {}); }) == ErrorKind::Config);
    CHECK(kind_of([&] { episode_loss(Strategy::Exhaustive, w, e, AnchorSet{}, {}); }) == ErrorKind::Config);
    CHECK(kind_of([&] { episode_loss(Strategy::SingleTask, w, e, AnchorSet{}, {}); }) == ErrorKind::Config);
}

TEST_CASE("end_of_episode bookkeeping per strategy") {
    const nn::LayerSpec spec{{3, 4, 2}};
    const RegConfig reg{10.0, 0.5};
    History ewc = empty_history(Strategy::Ewc), ewcpp = empty_history(Strategy::EwcPlusPlus),
            exh = empty_history(Strategy::Exhaustive), single = empty_history(Strategy::SingleTask);
    std::vector<FisherDiagonal> per_episode;
    for (std::size_t k = 0; k < 4; ++k) {
        const auto w = testsupport::random_weights(spec, 30 + k);
        const auto e = episode(k, 12, 3, 2, 40 + k);
        per_episode.push_back(fisher_diagonal(w, e));
        ewc = end_of_episode(Strategy::Ewc, w, e, std::move(ewc), reg);
        ewcpp = end_of_episode(Strategy::EwcPlusPlus, w, e, std::move(ewcpp), reg);
        exh = end_of_episode(Strategy::Exhaustive, w, e, std::move(exh), reg);
        single = end_of_episode(Strategy::SingleTask, w, e, std::move(single), reg);

        CHECK(std::get<AnchorSet>(ewc).anchors.size() == k + 1);
        REQUIRE(std::get<AnchorSet>(ewcpp).anchors.size() == 1);
        CHECK(std::get<AnchorSet>(ewcpp).anchors[0].weights.values == w.values);
        CHECK(std::get<episodes::AccumulatedDataset>(exh).total_size() == 12 * (k + 1));
        CHECK(std::holds_alternative<std::monostate>(single));
        CHECK(history_footprint(ewcpp) == 2 * spec.parameter_count());
        CHECK(history_footprint(ewc) == 2 * spec.parameter_count() * (k + 1));
    }
    // The moving average starts from the first episode's Fisher.
    std::vector<double> avg = per_episode[0].values;
    for (std::size_t k = 1; k < 4; ++k)
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = 0.5 * per_episode[k].values[i] + 0.5 * avg[i];
    CHECK(testsupport::max_relative_error(std::get<AnchorSet>(ewcpp).anchors[0].fisher.values, avg, 1e-15) < 1e-14);
    CHECK(history_footprint(exh) == 4 * 12 * 3);
}

TEST_CASE("EWC++ with gamma 1 equals EWC on the latest anchor") {
    const nn::LayerSpec spec{{3, 5, 3}};
    const RegConfig reg{7.0, 1.0};
    History ewc = empty_history(Strategy::Ewc), ewcpp = empty_history(Strategy::EwcPlusPlus);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto w = testsupport::random_weights(spec, 50 + k);
        const auto e = episode(k, 10, 3, 3, 60 + k);
        ewc = end_of_episode(Strategy::Ewc, w, e, std::move(ewc), reg);
        ewcpp = end_of_episode(Strategy::EwcPlusPlus, w, e, std::move(ewcpp), reg);
    }
    AnchorSet latest{{std::get<AnchorSet>(ewc).anchors.back()}};
    const auto probe = testsupport::random_weights(spec, 99);
    const auto a = ewc_penalty(probe, std::get<AnchorSet>(ewcpp), reg.lambda);
    const auto b = ewc_penalty(probe, latest, reg.lambda);
    CHECK(std::abs(a.value - b.value) <= 1e-12 * std::abs(b.value));
}
