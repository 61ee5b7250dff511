#include "twinsync/strategies.hpp"

#include <chrono>
#include <cmath>

#include "twinsync/errors.hpp"

namespace twinsync::strategies {
namespace {

void check_anchor(const nn::ModelWeights& w, const Anchor& a) {
    require(a.weights.values.size() == w.values.size() && a.fisher.values.size() == w.values.size(), ErrorKind::Shape,
            "anchor dimension does not match model parameter count");
}

const char* history_name(const History& h) {
    switch (h.index()) {
        case 0: return "none";
        case 1: return "accumulated dataset";
        default: return "anchor set";
    }
}

void check_history(Strategy s, const History& h) {
    const bool ok = (s == Strategy::SingleTask && std::holds_alternative<std::monostate>(h)) ||
                    (s == Strategy::Exhaustive && std::holds_alternative<episodes::AccumulatedDataset>(h)) ||
                    ((s == Strategy::Ewc || s == Strategy::EwcPlusPlus) && std::holds_alternative<AnchorSet>(h));
    require(ok, ErrorKind::Config,
            std::string("strategy ") + std::string(to_string(s)) + " cannot use history of kind " + history_name(h));
    if (s == Strategy::EwcPlusPlus) {
        require(std::get<AnchorSet>(h).anchors.size() <= 1, ErrorKind::Config, "EWC++ history holds more than one anchor");
    }
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::Exhaustive: return "exhaustive";
        case Strategy::SingleTask: return "single_task";
        case Strategy::Ewc: return "ewc";
        case Strategy::EwcPlusPlus: return "ewcpp";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    for (auto s : kAllStrategies)
        if (to_string(s) == name) return s;
    fail(ErrorKind::Config, "unknown strategy '" + std::string(name) + "'");
}

void RegConfig::validate() const {
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::InvalidArgument, "lambda must be >= 0");
    require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::InvalidArgument, "gamma must lie in [0, 1]");
}

History empty_history(Strategy s) {
    switch (s) {
        case Strategy::Exhaustive: return episodes::AccumulatedDataset{};
        case Strategy::SingleTask: return std::monostate{};
        case Strategy::Ewc:
        case Strategy::EwcPlusPlus: return AnchorSet{};
    }
    return std::monostate{};
}

FisherDiagonal fisher_diagonal(const nn::ModelWeights& w, const episodes::EpisodeDataset& data) {
    require(!data.samples.empty(), ErrorKind::EmptyInput, "Fisher estimate needs at least one sample");
    return fisher_diagonal(w, nn::make_batch(data.samples, w.spec), data.index);
}

FisherDiagonal fisher_diagonal(const nn::ModelWeights& w, const nn::Batch& data, std::size_t episode_index) {
    require(data.size() > 0, ErrorKind::EmptyInput, "Fisher estimate needs at least one sample");
    for (double v : w.values) require(std::isfinite(v), ErrorKind::Numeric, "Fisher estimate at non-finite weights");
    return FisherDiagonal{nn::mean_squared_score(w, data), episode_index, FisherKind::PerEpisode};
}

Penalty ewc_penalty(const nn::ModelWeights& w, const AnchorSet& anchors, double lambda) {
    Penalty p{0.0, std::vector<double>(w.values.size(), 0.0)};
    for (const auto& a : anchors.anchors) check_anchor(w, a);
    if (lambda == 0.0) return p;
    for (const auto& a : anchors.anchors) {
        const auto& f = a.fisher.values;
        const auto& ref = a.weights.values;
        double sum = 0.0;
        for (std::size_t d = 0; d < w.values.size(); ++d) {
            const double diff = w.values[d] - ref[d];
            sum += f[d] * diff * diff;
            p.grad[d] += lambda * f[d] * diff;
        }
        p.value += 0.5 * lambda * sum;
    }
    return p;
}

FisherDiagonal ewcpp_fisher_update(const FisherDiagonal& current, const FisherDiagonal& previous, double gamma) {
    require(current.values.size() == previous.values.size(), ErrorKind::Shape, "Fisher vectors differ in length");
    require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::InvalidArgument, "gamma must lie in [0, 1]");
    FisherDiagonal out{std::vector<double>(current.values.size()), current.episode_index, FisherKind::MovingAverage};
    for (std::size_t d = 0; d < out.values.size(); ++d)
        out.values[d] = gamma * current.values[d] + (1.0 - gamma) * previous.values[d];
    return out;
}

EpisodeObjective::EpisodeObjective(Strategy strategy, const episodes::EpisodeDataset& current, const History& history,
                                   const nn::LayerSpec& spec, RegConfig reg)
    : strategy_(strategy), reg_(reg) {
    reg_.validate();
    check_history(strategy, history);
    require(!current.samples.empty(), ErrorKind::EmptyInput, "episode has no samples");

    std::vector<std::span<const nn::Sample>> parts;
    if (strategy == Strategy::Exhaustive) {
        for (const auto& e : std::get<episodes::AccumulatedDataset>(history).episodes) parts.emplace_back(e.samples);
    }
    parts.emplace_back(current.samples);
    data_ = nn::make_batch(parts, spec);

    if (strategy == Strategy::Ewc || strategy == Strategy::EwcPlusPlus) {
        const auto& set = std::get<AnchorSet>(history);
        if (!set.anchors.empty() && reg_.lambda > 0.0) anchors_ = set;
    }
}

LossBreakdown EpisodeObjective::evaluate(const nn::ModelWeights& w, const nn::Batch& data) const {
    auto lg = nn::loss_and_grad(w, data);
    LossBreakdown out{lg.loss, lg.loss, 0.0, std::move(lg.grad)};
    if (anchors_) {
        const auto t0 = std::chrono::steady_clock::now();
        const Penalty p = ewc_penalty(w, *anchors_, reg_.lambda);
        out.penalty = p.value;
        out.total = out.data + p.value;
        for (std::size_t d = 0; d < out.grad.size(); ++d) out.grad[d] += p.grad[d];
        out.penalty_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return out;
}

LossBreakdown episode_loss(Strategy strategy, const nn::ModelWeights& w, const episodes::EpisodeDataset& current,
                           const History& history, const RegConfig& reg) {
    return EpisodeObjective(strategy, current, history, w.spec, reg).evaluate(w);
}

History end_of_episode(Strategy strategy, const nn::ModelWeights& w_star, const episodes::EpisodeDataset& current,
                       History history, const RegConfig& reg) {
    check_history(strategy, history);
    switch (strategy) {
        case Strategy::SingleTask:
            return std::monostate{};
        case Strategy::Exhaustive: {
            auto acc = std::get<episodes::AccumulatedDataset>(std::move(history));
            acc.episodes.push_back(current);
            return episodes::accumulate(std::move(acc.episodes));
        }
        case Strategy::Ewc: {
            auto set = std::get<AnchorSet>(std::move(history));
            set.anchors.push_back(Anchor{w_star, fisher_diagonal(w_star, current)});
            return set;
        }
        case Strategy::EwcPlusPlus: {
            auto set = std::get<AnchorSet>(std::move(history));
            FisherDiagonal f = fisher_diagonal(w_star, current);
            // The first episode seeds the running average.
            FisherDiagonal avg = set.anchors.empty() ? FisherDiagonal{f.values, f.episode_index, FisherKind::MovingAverage}
                                                     : ewcpp_fisher_update(f, set.anchors.front().fisher, reg.gamma);
            set.anchors.assign(1, Anchor{w_star, std::move(avg)});
            return set;
        }
    }
    return history;
}

std::size_t history_footprint(const History& history) {
    if (const auto* acc = std::get_if<episodes::AccumulatedDataset>(&history)) {
        std::size_t n = 0;
        for (const auto& e : acc->episodes)
            for (const auto& s : e.samples) n += s.x.size();
        return n;
    }
    if (const auto* set = std::get_if<AnchorSet>(&history)) {
        std::size_t n = 0;
        for (const auto& a : set->anchors) n += a.weights.values.size() + a.fisher.values.size();
        return n;
    }
    return 0;
}

}  // namespace twinsync::strategies
