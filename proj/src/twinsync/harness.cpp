#include "twinsync/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <limits>
#include <thread>

#include "twinsync/errors.hpp"

namespace twinsync::harness {
namespace {

namespace fs = std::filesystem;
using strategies::Strategy;

constexpr std::uint64_t kInitStream = 9;
constexpr std::uint64_t kDataStream = 11;

nn::LayerSpec layer_spec(const ExperimentConfig& cfg, std::size_t width, std::size_t classes) {
    nn::LayerSpec spec;
    spec.sizes.push_back(width);
    spec.sizes.insert(spec.sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    spec.sizes.push_back(classes);
    spec.validate();
    return spec;
}

std::string find_in_dir(const fs::path& dir, const std::string& stem) {
    for (const std::string& name : {stem, stem + ".gz"})
        if (fs::exists(dir / name)) return (dir / name).string();
    return {};
}

std::size_t class_count(const std::vector<nn::Sample>& samples) {
    std::size_t c = 0;
    for (const auto& s : samples) c = std::max(c, s.y + 1);
    return c;
}

// Evaluates every test split with one pass over the combined test batch.
EvalPoint evaluate(const nn::ModelWeights& w, const nn::Batch& combined, const std::vector<std::size_t>& split_sizes,
                   std::size_t episode, std::size_t iteration, bool end) {
    const auto pred = nn::predict(w, combined);
    EvalPoint p{episode, iteration, end, std::vector<std::size_t>(split_sizes.size(), 0)};
    std::size_t row = 0;
    for (std::size_t s = 0; s < split_sizes.size(); ++s)
        for (std::size_t i = 0; i < split_sizes[s]; ++i, ++row) p.correct[s] += pred[row] == combined.labels[row];
    return p;
}

struct Prepared {
    std::vector<episodes::EpisodeDataset> train;
    std::vector<episodes::EpisodeDataset> test;
    nn::LayerSpec spec;
};

Prepared prepare(const ExperimentConfig& cfg, const BaseData& data) {
    require(!data.train.empty() && !data.test.empty(), ErrorKind::InsufficientData, "base data is empty");
    Prepared p;
    p.spec = layer_spec(cfg, data.train.front().x.size(), data.classes);
    for (std::size_t k = 0; k < cfg.episodes; ++k) {
        p.train.push_back(episodes::make_episode(data.train, k, cfg.seed, cfg.samples_per_episode));
        p.test.push_back(episodes::make_test_split(data.test, k, cfg.seed, cfg.test_per_episode()));
    }
    return p;
}

StrategyRun run_strategy(const ExperimentConfig& cfg, Strategy strategy, const Prepared& prep,
                         const nn::ModelWeights& init, const nn::Batch& test_batch,
                         const std::vector<std::size_t>& split_sizes) {
    StrategyRun run;
    run.strategy = strategy;
    strategies::History history = strategies::empty_history(strategy);
    nn::ModelWeights w = init;

    nn::TrainConfig train{cfg.learning_rate, cfg.iterations, cfg.seed, cfg.batch_size};
    sync::ObjectiveConfig objective{cfg.alpha, cfg.iterations, 0.0, cfg.time_scale};

    for (std::size_t k = 0; k < cfg.episodes; ++k) {
        EpisodeResult result;
        auto observer = [&](std::size_t n, const nn::ModelWeights& iterate) {
            if (n % cfg.eval_every == 0 || n == cfg.iterations)
                result.evals.push_back(evaluate(iterate, test_batch, split_sizes, k, n, false));
        };
        sync::EpisodeContext ctx{strategy, &prep.train[k], &history};
        result.report = sync::train_episode(ctx, w, train, cfg.reg, objective, cfg.sync, cfg.mode, observer);
        w = result.report.final_weights;
        result.evals.push_back(evaluate(w, test_batch, split_sizes, k, result.report.chosen_iterations, true));
        history = strategies::end_of_episode(strategy, w, prep.train[k], std::move(history), cfg.reg);
        run.episodes.push_back(std::move(result));
    }

    run.history_footprint = strategies::history_footprint(history);
    if (const auto* set = std::get_if<strategies::AnchorSet>(&history)) {
        for (const auto& a : set->anchors) {
            HistoryAnchorSummary s;
            s.episode = a.fisher.episode_index;
            for (double v : a.weights.values) s.weights_l2 += v * v;
            s.weights_l2 = std::sqrt(s.weights_l2);
            for (double f : a.fisher.values) {
                s.fisher_sum += f;
                s.fisher_max = std::max(s.fisher_max, f);
            }
            run.anchors.push_back(s);
        }
    }
    return run;
}

}  // namespace

void ExperimentConfig::validate() const {
    require(episodes >= 1, ErrorKind::Config, "episodes must be >= 1");
    require(samples_per_episode >= 1, ErrorKind::Config, "samples_per_episode must be >= 1");
    require(test_size >= episodes, ErrorKind::Config, "test_size must give every episode at least one test sample");
    require(!strategies.empty(), ErrorKind::Config, "strategy list is empty");
    require(!hidden.empty(), ErrorKind::Config, "network needs at least one hidden layer");
    for (auto h : hidden) require(h >= 1, ErrorKind::Config, "hidden widths must be >= 1");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::Config, "learning_rate must be > 0");
    require(eval_every >= 1, ErrorKind::Config, "eval_every must be >= 1");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Config, "alpha must lie in [0, 1]");
    require(reg.lambda >= 0.0 && std::isfinite(reg.lambda), ErrorKind::Config, "lambda must be >= 0");
    require(reg.gamma >= 0.0 && reg.gamma <= 1.0, ErrorKind::Config, "gamma must lie in [0, 1]");
    require(sync.cycles_per_sample > 0.0 && sync.frequency_hz > 0.0, ErrorKind::Config,
            "cycles_per_sample and frequency_hz must be > 0");
    if (data.kind == DataSource::Kind::Synthetic) {
        require(data.synthetic_classes >= 2 && data.synthetic_dim >= 1, ErrorKind::Config,
                "synthetic data needs >= 2 classes and dim >= 1");
    }
}

ExperimentConfig paper_preset() {
    ExperimentConfig cfg;
    cfg.preset = "paper";
    cfg.samples_per_episode = 15000;
    cfg.test_size = 10000;
    cfg.hidden = {256, 256};
    cfg.learning_rate = 0.01;
    cfg.reg = {75000.0, 0.5};
    cfg.data.kind = DataSource::Kind::Idx;
    cfg.data.synthetic_train_count = 60000;
    cfg.data.synthetic_test_count = 10000;
    return cfg;
}

ExperimentConfig desk_preset() {
    ExperimentConfig cfg;
    cfg.preset = "desk";
    cfg.samples_per_episode = 2000;
    cfg.hidden = {100, 100};
    cfg.learning_rate = 0.3;
    cfg.reg = {20.0, 0.5};
    cfg.data.kind = DataSource::Kind::Synthetic;
    return cfg;
}

ExperimentConfig preset_by_name(const std::string& name) {
    if (name == "paper") return paper_preset();
    if (name == "desk") return desk_preset();
    fail(ErrorKind::Config, "unknown preset '" + name + "' (expected paper or desk)");
}

DataSource resolve_data_paths(DataSource data) {
    const char* env = std::getenv("TWINSYNC_DATA_DIR");
    if (data.kind != DataSource::Kind::Idx || env == nullptr || *env == '\0') return data;
    const fs::path dir(env);
    auto fill = [&](std::string& field, const char* stem) {
        if (field.empty()) field = find_in_dir(dir, stem);
    };
    fill(data.train_images, "train-images-idx3-ubyte");
    fill(data.train_labels, "train-labels-idx1-ubyte");
    fill(data.test_images, "t10k-images-idx3-ubyte");
    fill(data.test_labels, "t10k-labels-idx1-ubyte");
    return data;
}

BaseData load_base_data(const ExperimentConfig& cfg) {
    cfg.validate();
    BaseData out;
    if (cfg.data.kind == DataSource::Kind::Synthetic) {
        const auto& d = cfg.data;
        auto pool = episodes::make_synthetic(episodes::episode_seed(cfg.seed, 0, kDataStream), d.synthetic_classes,
                                             d.synthetic_dim, d.synthetic_train_count + d.synthetic_test_count);
        out.test.assign(pool.begin() + static_cast<std::ptrdiff_t>(d.synthetic_train_count), pool.end());
        pool.resize(d.synthetic_train_count);
        out.train = std::move(pool);
        out.classes = d.synthetic_classes;
        return out;
    }
    const DataSource d = resolve_data_paths(cfg.data);
    require(!d.train_images.empty() && !d.train_labels.empty() && !d.test_images.empty() && !d.test_labels.empty(),
            ErrorKind::Io, "IDX dataset paths are not configured and TWINSYNC_DATA_DIR does not provide them");
    out.train = episodes::load_idx(d.train_images, d.train_labels);
    out.test = episodes::load_idx(d.test_images, d.test_labels);
    out.classes = std::max(class_count(out.train), class_count(out.test));
    return out;
}

double StrategyRun::cumulative_delta_t() const {
    double total = 0.0;
    for (const auto& e : episodes) total += e.report.delta_t;
    return total;
}

std::string RunRecord::run_id() const { return config.preset + "-s" + std::to_string(config.seed); }

const StrategyRun& RunRecord::run(Strategy s) const {
    for (const auto& r : runs)
        if (r.strategy == s) return r;
    fail(ErrorKind::Config, "strategy " + std::string(strategies::to_string(s)) + " was not part of this run");
}

std::size_t RunRecord::combined_size() const {
    std::size_t n = 0;
    for (auto s : split_sizes) n += s;
    return n;
}

double RunRecord::combined_accuracy(const EvalPoint& p) const {
    std::size_t hits = 0;
    for (auto c : p.correct) hits += c;
    return static_cast<double>(hits) / static_cast<double>(combined_size());
}

double RunRecord::split_accuracy(const EvalPoint& p, std::size_t split) const {
    return static_cast<double>(p.correct.at(split)) / static_cast<double>(split_sizes.at(split));
}

std::vector<std::vector<double>> RunRecord::retention_matrix(Strategy s) const {
    const auto& r = run(s);
    std::vector<std::vector<double>> m(r.episodes.size(),
                                       std::vector<double>(split_sizes.size(), std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t k = 0; k < r.episodes.size(); ++k)
        for (std::size_t e = 0; e <= k && e < split_sizes.size(); ++e) m[k][e] = split_accuracy(r.end_point(k), e);
    return m;
}

RunRecord run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, load_base_data(cfg)); }

RunRecord run_experiment(const ExperimentConfig& cfg, const BaseData& data) {
    cfg.validate();
    const Prepared prep = prepare(cfg, data);

    RunRecord record;
    record.config = cfg;
    record.parameter_count = prep.spec.parameter_count();
    record.classes = data.classes;
    std::vector<std::span<const nn::Sample>> parts;
    for (const auto& t : prep.test) {
        record.split_sizes.push_back(t.size());
        parts.emplace_back(t.samples);
    }
    const nn::Batch test_batch = nn::make_batch(parts, prep.spec);

    const nn::ModelWeights init = nn::init_weights(prep.spec, episodes::episode_seed(cfg.seed, 0, kInitStream));
    // Strategies are independent given the shared initial weights; results
    // are collected in configuration order whatever the scheduling.
    const auto policy = std::thread::hardware_concurrency() > 1 ? std::launch::async : std::launch::deferred;
    std::vector<std::future<StrategyRun>> pending;
    for (Strategy s : cfg.strategies)
        pending.push_back(std::async(policy, [&, s] { return run_strategy(cfg, s, prep, init, test_batch, record.split_sizes); }));
    for (auto& f : pending) record.runs.push_back(f.get());
    return record;
}

std::vector<RetentionPoint> retention_curve(const RunRecord& record, Strategy s, std::size_t e) {
    const auto& r = record.run(s);
    require(e < r.episodes.size(), ErrorKind::InvalidArgument,
            "episode " + std::to_string(e) + " out of range (run has " + std::to_string(r.episodes.size()) + ")");
    std::vector<RetentionPoint> out;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < e; ++k) offset += r.episodes[k].report.chosen_iterations;
    for (std::size_t k = e; k < r.episodes.size(); ++k) {
        const auto& ep = r.episodes[k];
        if (k > e) {
            for (const auto& p : ep.evals) {
                if (p.episode_end || p.iteration == 0 || p.iteration >= ep.report.chosen_iterations) continue;
                out.push_back({k, p.iteration, offset + p.iteration, record.split_accuracy(p, e)});
            }
        }
        offset += ep.report.chosen_iterations;
        out.push_back({k, ep.report.chosen_iterations, offset, record.split_accuracy(ep.evals.back(), e)});
    }
    return out;
}

SweepResult sweep_alpha(const ExperimentConfig& cfg, std::vector<double> alphas) {
    return sweep_alpha(cfg, load_base_data(cfg), std::move(alphas));
}

SweepResult sweep_alpha(const ExperimentConfig& cfg, const BaseData& data, std::vector<double> alphas) {
    cfg.validate();
    for (double a : alphas) require(a >= 0.0 && a <= 1.0, ErrorKind::InvalidArgument, "alpha values must lie in [0, 1]");
    std::sort(alphas.begin(), alphas.end());

    require(!data.train.empty(), ErrorKind::InsufficientData, "base data is empty");
    const nn::LayerSpec spec = layer_spec(cfg, data.train.front().x.size(), data.classes);
    const auto episode = episodes::make_episode(data.train, 0, cfg.seed, cfg.samples_per_episode);
    const nn::ModelWeights init = nn::init_weights(spec, episodes::episode_seed(cfg.seed, 0, kInitStream));
    const strategies::History history = strategies::empty_history(Strategy::EwcPlusPlus);

    // The gradient path does not depend on alpha, so one recorded trajectory
    // serves every row; only the selection differs.
    SweepResult out;
    nn::TrainConfig train{cfg.learning_rate, cfg.iterations, cfg.seed, cfg.batch_size};
    sync::ObjectiveConfig objective{1.0, cfg.iterations, 0.0, cfg.time_scale};
    out.trajectory = sync::train_episode({Strategy::EwcPlusPlus, &episode, &history}, init, train, cfg.reg, objective,
                                         cfg.sync, sync::IterationMode::Fixed);

    std::vector<double> losses;
    std::vector<double> times;
    for (const auto& rec : out.trajectory.trajectory) {
        losses.push_back(rec.total_loss);
        times.push_back(rec.delta_t);
    }
    for (double a : alphas) {
        sync::ObjectiveConfig oc{a, cfg.iterations, out.trajectory.reference_time, cfg.time_scale};
        const std::size_t n = sync::select_iteration(losses, times, oc);
        const auto& rec = out.trajectory.trajectory[n];
        out.rows.push_back({a, n, rec.total_loss, rec.delta_t, sync::scalarized_objective(rec.total_loss, rec.delta_t, oc)});
    }
    return out;
}

std::vector<LambdaRow> sweep_lambda(const ExperimentConfig& cfg, const BaseData& data, std::vector<double> lambdas) {
    ExperimentConfig c = cfg;
    c.strategies.clear();
    for (Strategy s : cfg.strategies)
        if (s == Strategy::Ewc || s == Strategy::EwcPlusPlus) c.strategies.push_back(s);
    require(!c.strategies.empty(), ErrorKind::Config, "lambda sweep needs ewc or ewcpp in the strategy list");
    for (double l : lambdas) require(l >= 0.0 && std::isfinite(l), ErrorKind::InvalidArgument, "lambda values must be >= 0");
    std::sort(lambdas.begin(), lambdas.end());

    std::vector<LambdaRow> rows;
    for (double l : lambdas) {
        c.reg.lambda = l;
        const RunRecord rec = run_experiment(c, data);
        for (const auto& r : rec.runs) {
            const auto& end = r.end_point(r.episodes.size() - 1);
            rows.push_back({l, r.strategy, rec.combined_accuracy(end), rec.split_accuracy(end, 0)});
        }
    }
    return rows;
}

}  // namespace twinsync::harness
