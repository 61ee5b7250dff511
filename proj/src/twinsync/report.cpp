#include "twinsync/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <system_error>

#include <unistd.h>

#include "twinsync/config.hpp"
#include "twinsync/errors.hpp"

namespace twinsync::report {
namespace {

namespace fs = std::filesystem;
using harness::EvalPoint;
using harness::RunRecord;
using strategies::Strategy;

class CsvWriter {
public:
    explicit CsvWriter(std::initializer_list<std::string_view> header) {
        for (auto h : header) field(h);
        end_row();
    }

    CsvWriter& field(std::string_view s) {
        if (!first_) out_ += ',';
        out_ += s;
        first_ = false;
        return *this;
    }
    CsvWriter& field(double v) { return field(format_number(v)); }
    CsvWriter& field(std::size_t v) { return field(std::string_view(std::to_string(v))); }
    CsvWriter& empty() { return field(std::string_view{}); }

    void end_row() {
        out_ += '\n';
        first_ = true;
    }

    const std::string& str() const { return out_; }

private:
    std::string out_;
    bool first_ = true;
};

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string name_of(Strategy s) { return std::string(strategies::to_string(s)); }

const EvalPoint* eval_at(const harness::EpisodeResult& ep, std::size_t iteration) {
    for (const auto& p : ep.evals)
        if (p.iteration == iteration) return &p;
    return nullptr;
}

const harness::StrategyRun& tradeoff_run(const RunRecord& record) {
    for (const auto& r : record.runs)
        if (r.strategy == Strategy::EwcPlusPlus) return r;
    return record.runs.front();
}

std::string mode_name(sync::IterationMode m) { return m == sync::IterationMode::Fixed ? "fixed" : "optimized"; }
std::string scale_name(sync::TimeScale s) { return s == sync::TimeScale::Normalized ? "normalized" : "raw"; }

}  // namespace

std::string format_number(double v) {
    if (!std::isfinite(v)) return {};
    if (v == 0.0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_atomic(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        require(!ec, ErrorKind::Io, path.parent_path().string() + ": cannot create directory: " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::Io, tmp.string() + ": cannot open for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            fail(ErrorKind::Io, tmp.string() + ": write failed");
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        fail(ErrorKind::Io, path.string() + ": rename failed: " + ec.message());
    }
}

std::string accuracy_csv(const RunRecord& record) {
    CsvWriter csv{"run_id",       "strategy", "episode",           "iteration", "train_loss", "data_loss",
                  "penalty_loss", "test_acc", "retention_acc_ep0", "delta_t_s", "objective"};
    const std::string id = record.run_id();
    for (const auto& run : record.runs) {
        for (std::size_t k = 0; k < run.episodes.size(); ++k) {
            const auto& ep = run.episodes[k];
            for (const auto& rec : ep.report.trajectory) {
                csv.field(id).field(name_of(run.strategy)).field(k + 1).field(rec.iteration);
                csv.field(rec.total_loss).field(rec.data_loss).field(rec.penalty_loss);
                if (const EvalPoint* p = eval_at(ep, rec.iteration)) {
                    csv.field(record.combined_accuracy(*p)).field(record.split_accuracy(*p, 0));
                } else {
                    csv.empty().empty();
                }
                csv.field(rec.delta_t).field(rec.objective);
                csv.end_row();
            }
        }
    }
    return csv.str();
}

std::string desync_csv(const RunRecord& record) {
    CsvWriter csv{"run_id",        "strategy",  "episode", "chosen_iterations",
                  "training_size", "delta_t_s", "cumulative_delta_t_s"};
    const std::string id = record.run_id();
    for (const auto& run : record.runs) {
        double cumulative = 0.0;
        for (std::size_t k = 0; k < run.episodes.size(); ++k) {
            const auto& r = run.episodes[k].report;
            cumulative += r.delta_t;
            csv.field(id).field(name_of(run.strategy)).field(k + 1).field(r.chosen_iterations);
            csv.field(r.training_size).field(r.delta_t).field(cumulative);
            csv.end_row();
        }
    }
    return csv.str();
}

std::string retention_csv(const RunRecord& record) {
    CsvWriter csv{"run_id", "strategy", "episode", "iteration", "global_iteration", "retention_acc_ep0"};
    const std::string id = record.run_id();
    for (const auto& run : record.runs) {
        for (const auto& p : harness::retention_curve(record, run.strategy, 0)) {
            csv.field(id).field(name_of(run.strategy)).field(p.episode + 1).field(p.iteration);
            csv.field(p.global_iteration).field(p.accuracy);
            csv.end_row();
        }
    }
    return csv.str();
}

std::string tradeoff_csv(const RunRecord& record) {
    const auto& run = tradeoff_run(record);
    return tradeoff_csv(record.run_id(), run.strategy, run.episodes.front().report);
}

std::string tradeoff_csv(const std::string& run_id, Strategy s, const sync::TrainReport& report) {
    CsvWriter csv{"run_id", "strategy", "iteration", "train_loss", "data_loss", "penalty_loss", "delta_t_s", "objective"};
    for (const auto& rec : report.trajectory) {
        csv.field(run_id).field(name_of(s)).field(rec.iteration).field(rec.total_loss).field(rec.data_loss);
        csv.field(rec.penalty_loss).field(rec.delta_t).field(rec.objective);
        csv.end_row();
    }
    return csv.str();
}

std::string sweep_csv(const std::string& run_id, const harness::SweepResult& sweep) {
    CsvWriter csv{"run_id", "alpha", "chosen_iterations", "train_loss", "delta_t_s", "objective"};
    for (const auto& row : sweep.rows) {
        csv.field(run_id).field(row.alpha).field(row.chosen_iterations).field(row.loss).field(row.delta_t);
        csv.field(row.objective);
        csv.end_row();
    }
    return csv.str();
}

Json summary(const RunRecord& record) {
    const auto& cfg = record.config;
    Json j;
    j["config"] = config::to_json(cfg);
    j["provenance"] = {{"run_id", record.run_id()},
                       {"preset", cfg.preset},
                       {"seed", cfg.seed},
                       {"mode", mode_name(cfg.mode)},
                       {"time_scale", scale_name(cfg.time_scale)},
                       {"parameter_count", record.parameter_count},
                       {"classes", record.classes}};
    j["test_split_sizes"] = record.split_sizes;

    Json runs = Json::object();
    for (const auto& run : record.runs) {
        Json r;
        const std::size_t last = run.episodes.size() - 1;
        r["final_combined_accuracy"] = record.combined_accuracy(run.end_point(last));
        r["final_retention_ep0"] = record.split_accuracy(run.end_point(last), 0);

        Json matrix = Json::array();
        for (const auto& row : record.retention_matrix(run.strategy)) {
            Json cells = Json::array();
            for (double v : row) cells.push_back(number_or_null(v));
            matrix.push_back(std::move(cells));
        }
        r["retention_matrix"] = std::move(matrix);

        Json eps = Json::array();
        for (std::size_t k = 0; k < run.episodes.size(); ++k) {
            const auto& rep = run.episodes[k].report;
            const auto& chosen = rep.trajectory.at(rep.chosen_iterations);
            eps.push_back({{"episode", k + 1},
                           {"chosen_iterations", rep.chosen_iterations},
                           {"training_size", rep.training_size},
                           {"train_loss", chosen.total_loss},
                           {"delta_t_s", rep.delta_t},
                           {"objective", rep.objective},
                           {"combined_accuracy", record.combined_accuracy(run.end_point(k))}});
        }
        r["episodes"] = std::move(eps);
        r["cumulative_delta_t_s"] = run.cumulative_delta_t();
        r["history_footprint"] = run.history_footprint;

        Json anchors = Json::array();
        for (const auto& a : run.anchors)
            anchors.push_back({{"episode", a.episode + 1},
                               {"weights_l2", a.weights_l2},
                               {"fisher_sum", a.fisher_sum},
                               {"fisher_max", a.fisher_max}});
        r["anchors"] = std::move(anchors);
        runs[name_of(run.strategy)] = std::move(r);
    }
    j["strategies"] = std::move(runs);
    return j;
}

Json sweep_summary(const harness::ExperimentConfig& cfg, const harness::SweepResult& sweep) {
    Json j;
    j["config"] = config::to_json(cfg);
    j["provenance"] = {{"run_id", cfg.preset + "-s" + std::to_string(cfg.seed)},
                       {"preset", cfg.preset},
                       {"seed", cfg.seed},
                       {"mode", "optimized"},
                       {"time_scale", scale_name(cfg.time_scale)},
                       {"reference_time_s", sweep.trajectory.reference_time}};
    Json rows = Json::array();
    for (const auto& row : sweep.rows)
        rows.push_back({{"alpha", row.alpha},
                        {"chosen_iterations", row.chosen_iterations},
                        {"train_loss", row.loss},
                        {"delta_t_s", row.delta_t},
                        {"objective", row.objective}});
    j["sweep"] = std::move(rows);
    return j;
}

void write_run(const RunRecord& record, const fs::path& dir) {
    require(!record.runs.empty(), ErrorKind::InvalidArgument, "run record holds no strategies");
    write_atomic(dir / kAccuracyFile, accuracy_csv(record));
    write_atomic(dir / kDesyncFile, desync_csv(record));
    write_atomic(dir / kRetentionFile, retention_csv(record));
    write_atomic(dir / kTradeoffFile, tradeoff_csv(record));
    write_atomic(dir / kSummaryFile, summary(record).dump(2) + "\n");
}

void write_sweep(const harness::ExperimentConfig& cfg, const harness::SweepResult& sweep, const fs::path& dir) {
    const std::string id = cfg.preset + "-s" + std::to_string(cfg.seed);
    write_atomic(dir / kSweepFile, sweep_csv(id, sweep));
    write_atomic(dir / kTradeoffFile, tradeoff_csv(id, Strategy::EwcPlusPlus, sweep.trajectory));
    write_atomic(dir / kSummaryFile, sweep_summary(cfg, sweep).dump(2) + "\n");
}

}  // namespace twinsync::report
