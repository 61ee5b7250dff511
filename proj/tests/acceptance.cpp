// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// required criterion fails. `--paper` adds the full-scale MNIST tier.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "support.hpp"
#include "twinsync/config.hpp"
#include "twinsync/errors.hpp"
#include "twinsync/harness.hpp"
#include "twinsync/report.hpp"
#include "twinsync/strategies.hpp"
#include "twinsync/sync.hpp"

using namespace twinsync;
using harness::ExperimentConfig;
using strategies::Strategy;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kReportedDesyncSmall = 47.0;
constexpr double kReportedDesyncLarge = 190.0;
constexpr double kDesyncRelTol = 0.05;
constexpr double kGradRelTol = 1e-5;
constexpr std::size_t kGradNetworks = 20;
constexpr std::size_t kGradMaxParams = 200;
constexpr double kGradStep = 1e-4;
constexpr double kEquivTol = 1e-12;
constexpr double kRetentionMargin = 0.10;
constexpr double kExhaustiveGap = 0.10;
constexpr std::size_t kDeskSeeds[] = {1, 2, 3};
constexpr std::size_t kTrajectories = 100;
constexpr double kPaperExhaustive = 0.95, kPaperExhaustiveTol = 0.03;
constexpr double kPaperEwcpp = 0.90, kPaperEwcppTol = 0.05;
constexpr double kPaperSingle = 0.50, kPaperSingleTol = 0.10;

int failures = 0;

void verdict(bool ok, const std::string& id, const std::string& detail, bool required = true) {
    std::printf("%s  %-4s %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok && required) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

bool have_mnist() {
    const char* dir = std::getenv("TWINSYNC_DATA_DIR");
    if (dir == nullptr || *dir == '\0') return false;
    auto d = harness::resolve_data_paths(harness::paper_preset().data);
    return !d.train_images.empty() && !d.train_labels.empty() && !d.test_images.empty() && !d.test_labels.empty();
}

// ---------------------------------------------------------------- C1
void desync_reference() {
    const sync::SyncParams p;
    const double small = sync::desync_time(15000, p, 100);
    const double large = sync::desync_time(60000, p, 100);
    const bool exact = small == 47.04 && large == 188.16;
    const bool near = std::abs(small - kReportedDesyncSmall) <= kDesyncRelTol * kReportedDesyncSmall &&
                      std::abs(large - kReportedDesyncLarge) <= kDesyncRelTol * kReportedDesyncLarge;
    verdict(exact && near, "C1",
            "desync 15000x100 = " + report::format_number(small) + " s, 60000x100 = " + report::format_number(large) +
                " s (exact 47.04/188.16; within 5% of 47/190)");
}

// ---------------------------------------------------------------- C2
nn::LayerSpec random_spec(std::mt19937_64& rng) {
    while (true) {
        std::vector<std::size_t> sizes{2 + rng() % 5};
        const std::size_t hidden = 1 + rng() % 2;
        for (std::size_t l = 0; l < hidden; ++l) sizes.push_back(2 + rng() % 7);
        sizes.push_back(2 + rng() % 4);
        nn::LayerSpec spec{sizes};
        if (spec.parameter_count() <= kGradMaxParams) return spec;
    }
}

// Pre-activations away from the ReLU kink, so differences stay on one side.
bool away_from_kinks(const nn::ModelWeights& w, const std::vector<nn::Sample>& data) {
    const auto& sizes = w.spec.sizes;
    for (const auto& s : data) {
        std::vector<double> a = s.x;
        std::size_t off = 0;
        for (std::size_t l = 0; l + 2 < sizes.size(); ++l) {
            const std::size_t in = sizes[l], out = sizes[l + 1];
            std::vector<double> z(out);
            for (std::size_t o = 0; o < out; ++o) {
                double acc = w.values[off + out * in + o];
                for (std::size_t i = 0; i < in; ++i) acc += w.values[off + o * in + i] * a[i];
                if (std::abs(acc) < 1e-2) return false;
                z[o] = std::max(acc, 0.0);
            }
            off += out * in + out;
            a = std::move(z);
        }
    }
    return true;
}

void gradient_check() {
    std::mt19937_64 rng(20240501);
    double worst_data = 0.0, worst_ewc = 0.0, worst_ewcpp = 0.0;
    std::size_t nets = 0, params = 0;
    for (std::uint64_t seed = 1; nets < kGradNetworks; ++seed) {
        const auto spec = random_spec(rng);
        const auto w = testsupport::random_weights(spec, seed, 0.6);
        const auto data = testsupport::random_samples(5, spec.input_width(), spec.classes(), seed + 1000);
        if (!away_from_kinks(w, data)) continue;
        ++nets;
        params = std::max(params, spec.parameter_count());

        const auto lg = nn::loss_and_grad(w, data);
        const auto fd = testsupport::central_difference(
            [&](const nn::ModelWeights& m) { return testsupport::naive_loss(m, data); }, w, kGradStep);
        worst_data = std::max(worst_data, testsupport::max_relative_error(lg.grad, fd));

        // Anchors with Fisher values from real episodes at two other points.
        episodes::EpisodeDataset e0, e1;
        e0.samples = testsupport::random_samples(7, spec.input_width(), spec.classes(), seed + 2000);
        e1.samples = testsupport::random_samples(7, spec.input_width(), spec.classes(), seed + 3000);
        e1.index = 1;
        const auto a0 = testsupport::random_weights(spec, seed + 4000, 0.6);
        const auto a1 = testsupport::random_weights(spec, seed + 5000, 0.6);
        const double lambda = 0.5 + static_cast<double>(rng() % 1000) / 10.0;
        strategies::AnchorSet ewc{{{a0, strategies::fisher_diagonal(a0, e0)}, {a1, strategies::fisher_diagonal(a1, e1)}}};
        auto ewcpp_fisher = strategies::ewcpp_fisher_update(strategies::fisher_diagonal(a1, e1),
                                                            strategies::fisher_diagonal(a0, e0), 0.5);
        strategies::AnchorSet ewcpp{{{a1, ewcpp_fisher}}};

        for (auto* pair : {&ewc, &ewcpp}) {
            const auto p = strategies::ewc_penalty(w, *pair, lambda);
            // Oracle: the penalty written out directly.
            auto value = [&](const nn::ModelWeights& m) {
                double total = 0.0;
                for (const auto& a : pair->anchors)
                    for (std::size_t d = 0; d < m.values.size(); ++d) {
                        const double diff = m.values[d] - a.weights.values[d];
                        total += 0.5 * lambda * a.fisher.values[d] * diff * diff;
                    }
                return total;
            };
            const double err = testsupport::max_relative_error(p.grad, testsupport::central_difference(value, w, kGradStep));
            (pair == &ewc ? worst_ewc : worst_ewcpp) = std::max(pair == &ewc ? worst_ewc : worst_ewcpp, err);
        }
    }
    const bool ok = worst_data < kGradRelTol && worst_ewc < kGradRelTol && worst_ewcpp < kGradRelTol;
    verdict(ok, "C2",
            std::to_string(nets) + " nets (<= " + std::to_string(params) + " params): max rel err data " +
                fmt("%.2e", worst_data) + ", ewc " + fmt("%.2e", worst_ewc) + ", ewcpp " + fmt("%.2e", worst_ewcpp) +
                " (< 1e-5)");
}

// ---------------------------------------------------------------- C3
ExperimentConfig small_config() {
    auto cfg = harness::desk_preset();
    cfg.episodes = 3;
    cfg.samples_per_episode = 300;
    cfg.test_size = 300;
    cfg.hidden = {32, 32};
    cfg.iterations = 40;
    cfg.data.synthetic_train_count = 1000;
    cfg.data.synthetic_test_count = 400;
    return cfg;
}

bool same_episode(const harness::EpisodeResult& a, const harness::EpisodeResult& b) {
    if (a.report.final_weights.values != b.report.final_weights.values) return false;
    if (a.report.trajectory.size() != b.report.trajectory.size()) return false;
    for (std::size_t n = 0; n < a.report.trajectory.size(); ++n)
        if (a.report.trajectory[n].total_loss != b.report.trajectory[n].total_loss) return false;
    if (a.evals.size() != b.evals.size()) return false;
    for (std::size_t i = 0; i < a.evals.size(); ++i)
        if (a.evals[i].correct != b.evals[i].correct) return false;
    return true;
}

void equivalences() {
    auto cfg = small_config();
    const auto data = harness::load_base_data(cfg);

    {
        const auto rec = harness::run_experiment(cfg, data);
        bool ok = true;
        for (const auto& r : rec.runs) ok = ok && same_episode(r.episodes[0], rec.runs[0].episodes[0]);
        verdict(ok, "C3a", "episode 0 bitwise identical across all four strategies");
    }
    {
        auto c = cfg;
        c.reg.lambda = 0.0;
        c.strategies = {Strategy::SingleTask, Strategy::Ewc};
        const auto rec = harness::run_experiment(c, data);
        bool ok = true;
        for (std::size_t k = 0; k < c.episodes; ++k)
            ok = ok && same_episode(rec.run(Strategy::Ewc).episodes[k], rec.run(Strategy::SingleTask).episodes[k]);
        verdict(ok, "C3b", "EWC with lambda = 0 bitwise identical to single-task over " + std::to_string(c.episodes) +
                               " episodes");
    }
    {
        // Oracle: per episode, plain EWC whose only anchor is the previous
        // episode's solution with its own per-episode Fisher.
        auto c = cfg;
        c.reg.gamma = 1.0;
        c.strategies = {Strategy::EwcPlusPlus};
        const auto rec = harness::run_experiment(c, data);
        const auto& run = rec.run(Strategy::EwcPlusPlus);
        double worst = 0.0;
        for (std::size_t k = 1; k < c.episodes; ++k) {
            const auto prev_ep = episodes::make_episode(data.train, k - 1, c.seed, c.samples_per_episode);
            const auto cur_ep = episodes::make_episode(data.train, k, c.seed, c.samples_per_episode);
            const auto& w_prev = run.episodes[k - 1].report.final_weights;
            strategies::History hist =
                strategies::AnchorSet{{{w_prev, strategies::fisher_diagonal(w_prev, prev_ep)}}};
            const auto oracle = sync::train_episode(
                {Strategy::Ewc, &cur_ep, &hist}, w_prev, {c.learning_rate, c.iterations, c.seed, c.batch_size}, c.reg,
                {c.alpha, c.iterations, 0.0, c.time_scale}, c.sync, c.mode);
            const auto& got = run.episodes[k].report;
            for (std::size_t n = 0; n < got.trajectory.size(); ++n) {
                const double a = got.trajectory[n].total_loss, b = oracle.trajectory[n].total_loss;
                worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
            }
            worst = std::max(worst, testsupport::max_relative_error(got.final_weights.values, oracle.final_weights.values,
                                                                    1.0));
        }
        verdict(worst <= kEquivTol, "C3c",
                "EWC++ with gamma = 1 vs EWC on the latest anchor: max rel diff " + fmt("%.2e", worst) + " (<= 1e-12)");
    }
}

// ---------------------------------------------------------------- C4
double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

void desk_tier() {
    const bool mnist = have_mnist();
    std::vector<double> acc_exh, acc_single, acc_ewcpp, ret_single, ret_ewcpp;
    for (std::size_t seed : kDeskSeeds) {
        auto cfg = harness::desk_preset();
        cfg.seed = seed;
        cfg.strategies = {Strategy::Exhaustive, Strategy::SingleTask, Strategy::EwcPlusPlus};
        if (mnist) cfg.data.kind = harness::DataSource::Kind::Idx;
        const auto rec = harness::run_experiment(cfg);
        auto final_point = [&](Strategy s) { return rec.run(s).end_point(cfg.episodes - 1); };
        acc_exh.push_back(rec.combined_accuracy(final_point(Strategy::Exhaustive)));
        acc_single.push_back(rec.combined_accuracy(final_point(Strategy::SingleTask)));
        acc_ewcpp.push_back(rec.combined_accuracy(final_point(Strategy::EwcPlusPlus)));
        ret_single.push_back(rec.split_accuracy(final_point(Strategy::SingleTask), 0));
        ret_ewcpp.push_back(rec.split_accuracy(final_point(Strategy::EwcPlusPlus), 0));
        std::printf("      desk seed %zu (%s): exhaustive %.3f, single-task %.3f (ep1 %.3f), ewcpp %.3f (ep1 %.3f)\n",
                    seed, mnist ? "MNIST" : "synthetic", acc_exh.back(), acc_single.back(), ret_single.back(),
                    acc_ewcpp.back(), ret_ewcpp.back());
        std::fflush(stdout);
    }
    const double e = median3(acc_exh), s = median3(acc_single), p = median3(acc_ewcpp);
    const double rs = median3(ret_single), rp = median3(ret_ewcpp);
    const std::string src = mnist ? "MNIST" : "synthetic (TWINSYNC_DATA_DIR unset)";
    verdict(rp >= rs + kRetentionMargin, "C4a",
            "desk/" + src + " median episode-1 retention: ewcpp " + fmt("%.3f", rp) + " vs single-task " +
                fmt("%.3f", rs) + " (need +0.10)");
    verdict(e >= p && p >= s, "C4b",
            "desk median accuracy ordering: exhaustive " + fmt("%.3f", e) + " >= ewcpp " + fmt("%.3f", p) +
                " >= single-task " + fmt("%.3f", s));
    verdict(p >= e - kExhaustiveGap, "C4c",
            "desk median ewcpp within 0.10 of exhaustive: gap " + fmt("%.3f", e - p));
}

// ---------------------------------------------------------------- C5
void paper_tier() {
    const auto cfg = harness::paper_preset();
    const auto data = harness::load_base_data(cfg);
    const double step_dt = sync::desync_time(cfg.samples_per_episode, cfg.sync, cfg.iterations);

    // One run per strategy, so a diverging strategy does not hide the others.
    struct Outcome {
        bool ok = false;
        double accuracy = 0.0;
        bool pattern = false;
        std::string error;
    };
    auto run_one = [&](Strategy s) {
        Outcome o;
        auto c = cfg;
        c.strategies = {s};
        try {
            const auto rec = harness::run_experiment(c, data);
            const auto& run = rec.runs.front();
            o.ok = true;
            o.accuracy = rec.combined_accuracy(run.end_point(c.episodes - 1));
            o.pattern = true;
            for (std::size_t k = 0; k < c.episodes; ++k) {
                const std::size_t size = s == Strategy::Exhaustive ? c.samples_per_episode * (k + 1) : c.samples_per_episode;
                o.pattern = o.pattern && run.episodes[k].report.delta_t == sync::desync_time(size, c.sync, c.iterations);
            }
            if (s == Strategy::SingleTask) {
                // Largest Fisher entry after episode 1 bounds the stable lambda: eta * lambda * max F < 2.
                const auto ep0 = episodes::make_episode(data.train, 0, c.seed, c.samples_per_episode);
                const auto f = strategies::fisher_diagonal(run.episodes[0].report.final_weights, ep0);
                const double fmax = *std::max_element(f.values.begin(), f.values.end());
                std::printf("      paper: max Fisher entry after episode 1 = %.4g, stable lambda < %.4g at eta %.3g\n",
                            fmax, 2.0 / (c.learning_rate * fmax), c.learning_rate);
            }
        } catch (const Error& e) {
            o.error = e.what();
        }
        std::printf("      paper %s: %s\n", std::string(strategies::to_string(s)).c_str(),
                    o.ok ? fmt("%.3f", o.accuracy).c_str() : ("aborted, " + o.error).c_str());
        std::fflush(stdout);
        return o;
    };
    auto describe = [](const Outcome& o) { return o.ok ? fmt("%.3f", o.accuracy) : std::string("diverged"); };

    const auto single = run_one(Strategy::SingleTask);
    const auto ewcpp = run_one(Strategy::EwcPlusPlus);
    const auto exhaustive = run_one(Strategy::Exhaustive);

    verdict(exhaustive.ok && std::abs(exhaustive.accuracy - kPaperExhaustive) <= kPaperExhaustiveTol, "C5a",
            "paper exhaustive " + describe(exhaustive) + " (0.95 +- 0.03)");
    verdict(ewcpp.ok && std::abs(ewcpp.accuracy - kPaperEwcpp) <= kPaperEwcppTol, "C5b",
            "paper ewcpp " + describe(ewcpp) + " (0.90 +- 0.05)");
    verdict(single.ok && std::abs(single.accuracy - kPaperSingle) <= kPaperSingleTol, "C5c",
            "paper single-task " + describe(single) + " (0.50 +- 0.10)");
    auto status = [](const Outcome& o) { return o.ok ? (o.pattern ? "ok" : "mismatch") : "not measured"; };
    verdict(exhaustive.pattern && ewcpp.pattern && single.pattern, "C5d",
            "paper desync pattern (exhaustive " + report::format_number(step_dt) + "*k s, others " +
                report::format_number(step_dt) + " s): exhaustive " + status(exhaustive) + ", ewcpp " + status(ewcpp) +
                ", single-task " + status(single));
}

// ---------------------------------------------------------------- C6
void iteration_selection() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t agree = 0, zero_ok = 0, one_ok = 0;
    for (std::size_t t = 0; t < kTrajectories; ++t) {
        const std::size_t len = 2 + rng() % 150;
        std::vector<double> losses(len), times(len);
        double l = 1.0 + 2.0 * unit(rng);
        const double rate = 0.1 + unit(rng);
        for (std::size_t n = 0; n < len; ++n) {
            losses[n] = l;
            l = std::max(0.0, l - 0.05 * unit(rng) + 0.02 * (unit(rng) - 0.5));
            times[n] = rate * static_cast<double>(n);
        }
        sync::ObjectiveConfig cfg;
        cfg.reference_time = times.back();
        cfg.alpha = unit(rng);
        std::size_t brute = 0;
        double best = INFINITY;
        for (std::size_t n = 0; n < len; ++n) {
            const double v = cfg.alpha * losses[n] + (1.0 - cfg.alpha) * times[n] / cfg.reference_time;
            if (v < best) {
                best = v;
                brute = n;
            }
        }
        agree += sync::select_iteration(losses, times, cfg) == brute;
        cfg.alpha = 0.0;
        zero_ok += sync::select_iteration(losses, times, cfg) == 0;
        cfg.alpha = 1.0;
        one_ok += sync::select_iteration(losses, times, cfg) ==
                  static_cast<std::size_t>(std::min_element(losses.begin(), losses.end()) - losses.begin());
    }
    const bool ok = agree == kTrajectories && zero_ok == kTrajectories && one_ok == kTrajectories;
    verdict(ok, "C6",
            std::to_string(kTrajectories) + " trajectories: argmin " + std::to_string(agree) + ", alpha=0 -> n*=0 " +
                std::to_string(zero_ok) + ", alpha=1 -> loss argmin " + std::to_string(one_ok));
}

// ---------------------------------------------------------------- C7
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void determinism() {
    auto cfg = small_config();
    cfg.mode = sync::IterationMode::Optimized;
    cfg.alpha = 0.9;
    const fs::path root = fs::temp_directory_path() / ("twinsync-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(root);
    report::write_run(harness::run_experiment(cfg), root / "a");
    report::write_run(harness::run_experiment(cfg), root / "b");
    const auto replay = config::parse(slurp(root / "a" / report::kSummaryFile));
    report::write_run(harness::run_experiment(replay), root / "c");
    std::size_t identical = 0, total = 0;
    for (const char* f : {report::kAccuracyFile, report::kDesyncFile, report::kRetentionFile, report::kTradeoffFile,
                          report::kSummaryFile}) {
        const auto a = slurp(root / "a" / f);
        ++total;
        identical += !a.empty() && a == slurp(root / "b" / f) && a == slurp(root / "c" / f);
    }
    fs::remove_all(root);
    verdict(identical == total, "C7",
            std::to_string(identical) + "/" + std::to_string(total) +
                " output files byte-identical across two runs and a replay from summary.json");
}

}  // namespace

int main(int argc, char** argv) {
    bool paper = false;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--paper") {
            paper = true;
        } else {
            std::fprintf(stderr, "usage: %s [--paper]\n", argv[0]);
            return 2;
        }
    }
    try {
        if (paper) {
            const char* opt_in = std::getenv("TWINSYNC_ACCEPTANCE_PAPER");
            if (opt_in == nullptr || std::string(opt_in) != "1" || !have_mnist()) {
                std::printf("SKIP  C5   paper tier: set TWINSYNC_ACCEPTANCE_PAPER=1 and TWINSYNC_DATA_DIR to run it\n");
                return 77;
            }
            paper_tier();
            return failures == 0 ? 0 : 1;
        }
        desync_reference();
        gradient_check();
        equivalences();
        iteration_selection();
        determinism();
        desk_tier();
    } catch (const std::exception& e) {
        std::printf("FAIL  ---  aborted: %s\n", e.what());
        return 1;
    }
    return failures == 0 ? 0 : 1;
}
