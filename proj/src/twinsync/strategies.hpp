#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "twinsync/episodes.hpp"
#include "twinsync/nn.hpp"

namespace twinsync::strategies {

enum class Strategy {
    Exhaustive,  // trains on every episode seen so far
    SingleTask,  // trains on the current episode only
    Ewc,         // current episode + one quadratic anchor per past episode
    EwcPlusPlus, // current episode + one anchor with moving-average Fisher
};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);
inline constexpr Strategy kAllStrategies[] = {Strategy::Exhaustive, Strategy::SingleTask, Strategy::Ewc,
                                              Strategy::EwcPlusPlus};

enum class FisherKind { PerEpisode, MovingAverage };

struct FisherDiagonal {
    std::vector<double> values;
    std::size_t episode_index = 0;
    FisherKind kind = FisherKind::PerEpisode;
};

struct Anchor {
    nn::ModelWeights weights;
    FisherDiagonal fisher;
};

struct AnchorSet {
    std::vector<Anchor> anchors;
};

struct RegConfig {
    double lambda = 75000.0;
    double gamma = 0.5;

    void validate() const;
};

// Exhaustive keeps the accumulated episodes, EWC variants keep anchors,
// single-task keeps nothing.
using History = std::variant<std::monostate, episodes::AccumulatedDataset, AnchorSet>;

History empty_history(Strategy s);

// Empirical diagonal Fisher: mean squared gradient of log p(y|x, w) over the
// episode's samples, at the labels actually observed.
FisherDiagonal fisher_diagonal(const nn::ModelWeights& w, const episodes::EpisodeDataset& data);
FisherDiagonal fisher_diagonal(const nn::ModelWeights& w, const nn::Batch& data, std::size_t episode_index);

struct Penalty {
    double value = 0.0;
    std::vector<double> grad;
};

// sum_j sum_d (lambda/2) F_j,d (w_d - w*_j,d)^2 and its gradient.
Penalty ewc_penalty(const nn::ModelWeights& w, const AnchorSet& anchors, double lambda);

// gamma * current + (1 - gamma) * previous, elementwise.
FisherDiagonal ewcpp_fisher_update(const FisherDiagonal& current, const FisherDiagonal& previous, double gamma);

struct LossBreakdown {
    double total = 0.0;
    double data = 0.0;
    double penalty = 0.0;
    std::vector<double> grad;
    double penalty_seconds = 0.0;  // wall time spent on the regularizer
};

// The strategy's training loss for one episode, with the training batch
// assembled once up front.
class EpisodeObjective {
public:
    EpisodeObjective(Strategy strategy, const episodes::EpisodeDataset& current, const History& history,
                     const nn::LayerSpec& spec, RegConfig reg);

    LossBreakdown evaluate(const nn::ModelWeights& w) const { return evaluate(w, data_); }
    LossBreakdown evaluate(const nn::ModelWeights& w, const nn::Batch& data) const;

    const nn::Batch& data() const { return data_; }
    // Samples visited by one full-batch iteration.
    std::size_t training_size() const { return data_.size(); }
    Strategy strategy() const { return strategy_; }

private:
    Strategy strategy_;
    RegConfig reg_;
    nn::Batch data_;
    std::optional<AnchorSet> anchors_;
};

LossBreakdown episode_loss(Strategy strategy, const nn::ModelWeights& w, const episodes::EpisodeDataset& current,
                           const History& history, const RegConfig& reg);

// Folds the finished episode into the strategy's history.
History end_of_episode(Strategy strategy, const nn::ModelWeights& w_star, const episodes::EpisodeDataset& current,
                       History history, const RegConfig& reg);

// Storage footprint of a history, in doubles (weights, Fisher entries or
// feature values).
std::size_t history_footprint(const History& history);

}  // namespace twinsync::strategies
