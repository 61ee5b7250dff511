#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "twinsync/episodes.hpp"
#include "twinsync/nn.hpp"
#include "twinsync/strategies.hpp"

namespace twinsync::sync {

// Compute model of the edge server hosting the twin.
struct SyncParams {
    double cycles_per_sample = 125440.0;
    double frequency_hz = 4.0e9;

    void validate() const;
};

enum class TimeScale {
    Normalized,  // time term divided by the reference time
    Raw,         // seconds added to the loss as-is
};

struct ObjectiveConfig {
    double alpha = 1.0;
    std::size_t max_iterations = 100;
    // Reference time for the normalized scale. Zero means "derive it from
    // the episode": desync_time(training size, params, max_iterations).
    double reference_time = 0.0;
    TimeScale scale = TimeScale::Normalized;

    void validate() const;
};

enum class IterationMode {
    Fixed,      // always run max_iterations and keep the last iterate
    Optimized,  // keep the iterate minimising the scalarized objective
};

struct IterationRecord {
    std::size_t iteration = 0;
    double total_loss = 0.0;
    double data_loss = 0.0;
    double penalty_loss = 0.0;
    double delta_t = 0.0;
    double objective = 0.0;
};

struct TrainReport {
    std::size_t chosen_iterations = 0;
    nn::ModelWeights final_weights;
    std::vector<IterationRecord> trajectory;  // entries for n = 0..max_iterations
    std::size_t training_size = 0;
    double delta_t = 0.0;
    double objective = 0.0;
    double reference_time = 0.0;
    // Diagnostics only; never written to reports.
    std::vector<double> wall_seconds;
    double penalty_seconds = 0.0;
};

// Out-of-service time for n iterations over `training_set_size` samples.
double desync_time(std::size_t training_set_size, const SyncParams& params, std::size_t n);

double scalarized_objective(double loss, double delta_t, const ObjectiveConfig& cfg);

// Argmin of the scalarized objective over a recorded trajectory; ties go to
// the smallest iteration count.
std::size_t select_iteration(std::span<const double> losses, std::span<const double> delta_ts, const ObjectiveConfig& cfg);

// Called with every iterate w^n, n = 0..max_iterations, before the step.
using IterationObserver = std::function<void(std::size_t iteration, const nn::ModelWeights& w)>;

struct EpisodeContext {
    strategies::Strategy strategy = strategies::Strategy::SingleTask;
    const episodes::EpisodeDataset* episode = nullptr;
    const strategies::History* history = nullptr;
};

TrainReport train_episode(const EpisodeContext& ctx, const nn::ModelWeights& start, const nn::TrainConfig& train,
                          const strategies::RegConfig& reg, ObjectiveConfig cfg, const SyncParams& params,
                          IterationMode mode, const IterationObserver& observer = {});

}  // namespace twinsync::sync
