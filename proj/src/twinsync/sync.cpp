#include "twinsync/sync.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "twinsync/errors.hpp"

namespace twinsync::sync {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Row indices for mini-batch n: a cyclic walk over one seeded shuffle.
std::vector<std::size_t> minibatch_rows(const std::vector<std::size_t>& order, std::size_t batch, std::size_t n) {
    std::vector<std::size_t> rows(batch);
    for (std::size_t i = 0; i < batch; ++i) rows[i] = order[(n * batch + i) % order.size()];
    return rows;
}

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

void SyncParams::validate() const {
    require(cycles_per_sample > 0.0 && std::isfinite(cycles_per_sample), ErrorKind::InvalidArgument,
            "cycles per sample must be > 0");
    require(frequency_hz > 0.0 && std::isfinite(frequency_hz), ErrorKind::InvalidArgument, "frequency must be > 0");
}

void ObjectiveConfig::validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
    require(reference_time >= 0.0 && std::isfinite(reference_time), ErrorKind::InvalidArgument,
            "reference time must be >= 0 (0 = derived)");
}

double desync_time(std::size_t training_set_size, const SyncParams& params, std::size_t n) {
    params.validate();
    // Integer-valued product first so the single rounding happens in the
    // final division.
    return static_cast<double>(training_set_size) * params.cycles_per_sample * static_cast<double>(n) /
           params.frequency_hz;
}

double scalarized_objective(double loss, double delta_t, const ObjectiveConfig& cfg) {
    double time_term = delta_t;
    if (cfg.scale == TimeScale::Normalized) time_term = delta_t == 0.0 ? 0.0 : delta_t / cfg.reference_time;
    return cfg.alpha * loss + (1.0 - cfg.alpha) * time_term;
}

std::size_t select_iteration(std::span<const double> losses, std::span<const double> delta_ts, const ObjectiveConfig& cfg) {
    require(!losses.empty() && losses.size() == delta_ts.size(), ErrorKind::Shape,
            "loss and time trajectories must be nonempty and equally long");
    std::size_t best = 0;
    double best_value = scalarized_objective(losses[0], delta_ts[0], cfg);
    for (std::size_t n = 1; n < losses.size(); ++n) {
        const double v = scalarized_objective(losses[n], delta_ts[n], cfg);
        if (v < best_value) {
            best_value = v;
            best = n;
        }
    }
    return best;
}

TrainReport train_episode(const EpisodeContext& ctx, const nn::ModelWeights& start, const nn::TrainConfig& train,
                          const strategies::RegConfig& reg, ObjectiveConfig cfg, const SyncParams& params,
                          IterationMode mode, const IterationObserver& observer) {
    require(ctx.episode != nullptr && ctx.history != nullptr, ErrorKind::InvalidArgument, "episode context is incomplete");
    train.validate();
    params.validate();
    cfg.validate();
    start.validate();

    const strategies::EpisodeObjective objective(ctx.strategy, *ctx.episode, *ctx.history, start.spec, reg);
    const nn::Batch& full = objective.data();
    const bool minibatch = train.batch_size > 0 && train.batch_size < full.size();

    TrainReport report;
    report.training_size = minibatch ? train.batch_size : objective.training_size();
    if (cfg.reference_time == 0.0) cfg.reference_time = desync_time(report.training_size, params, cfg.max_iterations);
    report.reference_time = cfg.reference_time;

    std::vector<std::size_t> order;
    if (minibatch) {
        order.resize(full.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(episodes::episode_seed(train.seed, ctx.episode->index, 3));
        std::shuffle(order.begin(), order.end(), rng);
    }

    nn::ModelWeights w = start;
    double best = 0.0;
    report.trajectory.reserve(cfg.max_iterations + 1);
    for (std::size_t n = 0; n <= cfg.max_iterations; ++n) {
        const auto t0 = Clock::now();
        strategies::LossBreakdown lb =
            minibatch ? objective.evaluate(w, nn::slice_batch(full, minibatch_rows(order, train.batch_size, n)))
                      : objective.evaluate(w);
        if (!std::isfinite(lb.total)) {
            fail(ErrorKind::Numeric, "non-finite loss for strategy " + std::string(strategies::to_string(ctx.strategy)) +
                                         " in episode " + std::to_string(ctx.episode->index + 1) + " at iteration " +
                                         std::to_string(n) + " (data " + short_number(lb.data) + ", penalty " +
                                         short_number(lb.penalty) + ")");
        }
        report.penalty_seconds += lb.penalty_seconds;
        IterationRecord rec{n, lb.total, lb.data, lb.penalty, desync_time(report.training_size, params, n), 0.0};
        rec.objective = scalarized_objective(rec.total_loss, rec.delta_t, cfg);
        report.trajectory.push_back(rec);
        if (observer) observer(n, w);

        if (mode == IterationMode::Optimized && (n == 0 || rec.objective < best)) {
            best = rec.objective;
            report.chosen_iterations = n;
            report.final_weights = w;
        }
        if (n < cfg.max_iterations) {
            try {
                w = nn::gd_step(w, lb.grad, train.learning_rate);
            } catch (const Error& e) {
                fail(e.kind(), std::string(e.what()) + " (strategy " + std::string(strategies::to_string(ctx.strategy)) +
                                   ", episode " + std::to_string(ctx.episode->index + 1) + ", iteration " +
                                   std::to_string(n) + ")");
            }
        }
        report.wall_seconds.push_back(seconds_since(t0));
    }

    if (mode == IterationMode::Fixed) {
        report.chosen_iterations = cfg.max_iterations;
        report.final_weights = std::move(w);
    }
    const auto& chosen = report.trajectory[report.chosen_iterations];
    report.delta_t = chosen.delta_t;
    report.objective = chosen.objective;
    return report;
}

}  // namespace twinsync::sync
