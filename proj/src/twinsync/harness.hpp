#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "twinsync/episodes.hpp"
#include "twinsync/nn.hpp"
#include "twinsync/strategies.hpp"
#include "twinsync/sync.hpp"

namespace twinsync::harness {

struct DataSource {
    enum class Kind { Synthetic, Idx };

    Kind kind = Kind::Synthetic;
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    std::size_t synthetic_dim = 64;
    std::size_t synthetic_classes = 10;
    std::size_t synthetic_train_count = 10000;
    std::size_t synthetic_test_count = 2000;
};

struct ExperimentConfig {
    std::string preset = "desk";
    std::uint64_t seed = 1;
    std::size_t episodes = 4;
    std::size_t samples_per_episode = 2000;
    // Size of the combined test set; each episode contributes test_size / episodes.
    std::size_t test_size = 1000;
    std::vector<strategies::Strategy> strategies{std::begin(strategies::kAllStrategies),
                                                 std::end(strategies::kAllStrategies)};
    std::vector<std::size_t> hidden{100, 100};
    double learning_rate = 0.01;
    std::size_t iterations = 100;
    std::size_t batch_size = 0;
    std::size_t eval_every = 10;
    sync::IterationMode mode = sync::IterationMode::Fixed;
    double alpha = 1.0;
    sync::TimeScale time_scale = sync::TimeScale::Normalized;
    strategies::RegConfig reg;
    sync::SyncParams sync;
    DataSource data;

    void validate() const;
    std::size_t test_per_episode() const { return test_size / episodes; }
};

ExperimentConfig paper_preset();
ExperimentConfig desk_preset();
ExperimentConfig preset_by_name(const std::string& name);

// Base train/test pools for an experiment.
struct BaseData {
    std::vector<nn::Sample> train;
    std::vector<nn::Sample> test;
    std::size_t classes = 0;
};

// Fills empty IDX paths from TWINSYNC_DATA_DIR when it is set.
DataSource resolve_data_paths(DataSource data);
BaseData load_base_data(const ExperimentConfig& cfg);

// One evaluation of the whole combined test set, broken down by episode split.
struct EvalPoint {
    std::size_t episode = 0;
    std::size_t iteration = 0;
    bool episode_end = false;  // evaluated on the episode's selected weights
    std::vector<std::size_t> correct;  // per test split
};

struct EpisodeResult {
    sync::TrainReport report;
    std::vector<EvalPoint> evals;  // cadence points, then the episode-end point
};

struct HistoryAnchorSummary {
    std::size_t episode = 0;
    double weights_l2 = 0.0;
    double fisher_sum = 0.0;
    double fisher_max = 0.0;
};

struct StrategyRun {
    strategies::Strategy strategy = strategies::Strategy::SingleTask;
    std::vector<EpisodeResult> episodes;
    std::vector<HistoryAnchorSummary> anchors;  // final history, EWC variants only
    std::size_t history_footprint = 0;

    double cumulative_delta_t() const;
    const EvalPoint& end_point(std::size_t k) const { return episodes.at(k).evals.back(); }
};

struct RunRecord {
    ExperimentConfig config;
    std::size_t parameter_count = 0;
    std::size_t classes = 0;
    std::vector<std::size_t> split_sizes;
    std::vector<StrategyRun> runs;

    std::string run_id() const;
    const StrategyRun& run(strategies::Strategy s) const;
    std::size_t combined_size() const;
    double combined_accuracy(const EvalPoint& p) const;
    double split_accuracy(const EvalPoint& p, std::size_t split) const;
    // Accuracy of every split after episode k; entries with e > k are NaN.
    std::vector<std::vector<double>> retention_matrix(strategies::Strategy s) const;
};

RunRecord run_experiment(const ExperimentConfig& cfg);
RunRecord run_experiment(const ExperimentConfig& cfg, const BaseData& data);

struct RetentionPoint {
    std::size_t episode = 0;
    std::size_t iteration = 0;
    std::size_t global_iteration = 0;
    double accuracy = 0.0;
};

// Accuracy on episode e's test split from the end of episode e onwards.
std::vector<RetentionPoint> retention_curve(const RunRecord& record, strategies::Strategy s, std::size_t e);

struct SweepRow {
    double alpha = 0.0;
    std::size_t chosen_iterations = 0;
    double loss = 0.0;
    double delta_t = 0.0;
    double objective = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;  // sorted by alpha
    sync::TrainReport trajectory;  // the single-episode run the rows select from
};

// Single-episode optimized runs, one per alpha, of the continual-learning
// update on the first episode.
SweepResult sweep_alpha(const ExperimentConfig& cfg, std::vector<double> alphas);
SweepResult sweep_alpha(const ExperimentConfig& cfg, const BaseData& data, std::vector<double> alphas);

struct LambdaRow {
    double lambda = 0.0;
    strategies::Strategy strategy = strategies::Strategy::EwcPlusPlus;
    double final_combined_accuracy = 0.0;
    double final_retention_ep0 = 0.0;
};

// Full runs of the EWC variants listed in cfg, one per lambda. The Fisher
// scale is not pinned down by the model, so lambda is a free knob.
std::vector<LambdaRow> sweep_lambda(const ExperimentConfig& cfg, const BaseData& data, std::vector<double> lambdas);

}  // namespace twinsync::harness
