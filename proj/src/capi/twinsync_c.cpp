#include "twinsync/twinsync.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <cstdio>
#include <string>
#include <vector>

#include "twinsync/config.hpp"
#include "twinsync/errors.hpp"
#include "twinsync/gradcheck.hpp"
#include "twinsync/harness.hpp"
#include "twinsync/report.hpp"

struct ts_config {
    twinsync::harness::ExperimentConfig cfg;
};

struct ts_run {
    twinsync::harness::RunRecord record;
};

namespace {

using twinsync::ErrorKind;
using Json = twinsync::config::Json;

thread_local std::string g_last_error;

ts_status status_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config: return TS_ERR_CONFIG;
        case ErrorKind::Numeric: return TS_ERR_NUMERIC;
        case ErrorKind::Format:
        case ErrorKind::InsufficientData: return TS_ERR_DATASET;
        case ErrorKind::Io: return TS_ERR_IO;
        case ErrorKind::InvalidArgument:
        case ErrorKind::EmptyInput: return TS_ERR_INVALID_ARGUMENT;
        case ErrorKind::Shape:
        case ErrorKind::Sequencing: return TS_ERR_STATE;
    }
    return TS_ERR_INTERNAL;
}

ts_status set_error(ts_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

// Runs `body`, translating exceptions into a status. `io_status` replaces
// TS_ERR_IO where the caller knows what the file was (config, dataset).
template <typename F>
ts_status guarded(F&& body, ts_status io_status = TS_ERR_IO) {
    try {
        body();
        return TS_OK;
    } catch (const twinsync::Error& e) {
        ts_status s = status_for(e.kind());
        if (s == TS_ERR_IO) s = io_status;
        return set_error(s, e.what());
    } catch (const std::bad_alloc&) {
        return set_error(TS_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return set_error(TS_ERR_INTERNAL, e.what());
    } catch (...) {
        return set_error(TS_ERR_INTERNAL, "unknown error");
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void need(const void* p, const char* what) {
    twinsync::require(p != nullptr, ErrorKind::InvalidArgument, std::string(what) + " is NULL");
}

const twinsync::harness::StrategyRun& find_run(const ts_run* run, const char* strategy) {
    need(run, "run");
    need(strategy, "strategy");
    return run->record.run(twinsync::strategies::parse_strategy(strategy));
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", static_cast<unsigned>(v));
    return buf;
}

Json idx_json(const std::string& path) {
    const auto h = twinsync::episodes::inspect_idx(path);
    const char* kind = h.magic == twinsync::episodes::kIdxImagesMagic   ? "images"
                       : h.magic == twinsync::episodes::kIdxLabelsMagic ? "labels"
                                                                        : "other";
    return {{"path", path},          {"kind", kind},
            {"magic", hex32(h.magic)}, {"dims", h.dims},
            {"payload_bytes", h.payload_bytes}, {"crc32", hex32(h.crc32)}};
}

}  // namespace

extern "C" {

const char* ts_version(void) { return "0.1.0"; }

const char* ts_status_name(ts_status status) {
    switch (status) {
        case TS_OK: return "ok";
        case TS_ERR_INTERNAL: return "internal error";
        case TS_ERR_CONFIG: return "configuration error";
        case TS_ERR_DATASET: return "dataset error";
        case TS_ERR_NUMERIC: return "numeric error";
        case TS_ERR_IO: return "i/o error";
        case TS_ERR_INVALID_ARGUMENT: return "invalid argument";
        case TS_ERR_STATE: return "invalid state";
    }
    return "unknown status";
}

const char* ts_last_error(void) { return g_last_error.c_str(); }

void ts_string_free(char* s) { std::free(s); }

ts_status ts_config_from_preset(const char* name, ts_config** out) {
    return guarded([&] {
        need(name, "preset name");
        need(out, "out");
        *out = new ts_config{twinsync::harness::preset_by_name(name)};
    });
}

ts_status ts_config_from_file(const char* path, ts_config** out) {
    return guarded(
        [&] {
            need(path, "path");
            need(out, "out");
            *out = new ts_config{twinsync::config::load_file(path)};
        },
        TS_ERR_CONFIG);
}

ts_status ts_config_from_json(const char* text, ts_config** out) {
    return guarded([&] {
        need(text, "text");
        need(out, "out");
        *out = new ts_config{twinsync::config::parse(text)};
    });
}

ts_status ts_config_clone(const ts_config* cfg, ts_config** out) {
    return guarded([&] {
        need(cfg, "config");
        need(out, "out");
        *out = new ts_config{cfg->cfg};
    });
}

ts_status ts_config_set(ts_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        need(cfg, "config");
        need(key, "key");
        need(value, "value");
        auto updated = cfg->cfg;
        twinsync::config::apply_override(updated, key, value);
        cfg->cfg = std::move(updated);
    });
}

ts_status ts_config_to_json(const ts_config* cfg, char** out) {
    return guarded([&] {
        need(cfg, "config");
        need(out, "out");
        *out = dup_string(twinsync::config::to_json(cfg->cfg).dump(2));
    });
}

void ts_config_free(ts_config* cfg) { delete cfg; }

ts_status ts_run_experiment(const ts_config* cfg, ts_run** out) {
    twinsync::harness::BaseData data;
    ts_status s = guarded(
        [&] {
            need(cfg, "config");
            need(out, "out");
            cfg->cfg.validate();
            data = twinsync::harness::load_base_data(cfg->cfg);
        },
        TS_ERR_DATASET);
    if (s != TS_OK) return s;
    return guarded([&] { *out = new ts_run{twinsync::harness::run_experiment(cfg->cfg, data)}; }, TS_ERR_DATASET);
}

ts_status ts_run_write_outputs(const ts_run* run, const char* dir) {
    return guarded([&] {
        need(run, "run");
        need(dir, "dir");
        twinsync::report::write_run(run->record, dir);
    });
}

ts_status ts_run_summary_json(const ts_run* run, char** out) {
    return guarded([&] {
        need(run, "run");
        need(out, "out");
        *out = dup_string(twinsync::report::summary(run->record).dump(2));
    });
}

size_t ts_run_strategy_count(const ts_run* run) { return run ? run->record.runs.size() : 0; }

size_t ts_run_episode_count(const ts_run* run) { return run ? run->record.config.episodes : 0; }

ts_status ts_run_final_accuracy(const ts_run* run, const char* strategy, double* combined, double* first_episode) {
    return guarded([&] {
        const auto& r = find_run(run, strategy);
        const auto& end = r.end_point(r.episodes.size() - 1);
        if (combined) *combined = run->record.combined_accuracy(end);
        if (first_episode) *first_episode = run->record.split_accuracy(end, 0);
    });
}

ts_status ts_run_episode(const ts_run* run, const char* strategy, size_t episode, size_t* chosen_iterations,
                         double* delta_t_s) {
    return guarded([&] {
        const auto& r = find_run(run, strategy);
        twinsync::require(episode < r.episodes.size(), ErrorKind::InvalidArgument,
                          "episode " + std::to_string(episode) + " out of range");
        const auto& rep = r.episodes[episode].report;
        if (chosen_iterations) *chosen_iterations = rep.chosen_iterations;
        if (delta_t_s) *delta_t_s = rep.delta_t;
    });
}

void ts_run_free(ts_run* run) { delete run; }

ts_status ts_sweep_alpha(const ts_config* cfg, const double* alphas, size_t count, const char* out_dir,
                         char** summary_json) {
    twinsync::harness::BaseData data;
    ts_status s = guarded(
        [&] {
            need(cfg, "config");
            twinsync::require(count == 0 || alphas != nullptr, ErrorKind::InvalidArgument, "alphas is NULL");
            twinsync::require(count > 0, ErrorKind::InvalidArgument, "alpha list is empty");
            data = twinsync::harness::load_base_data(cfg->cfg);
        },
        TS_ERR_DATASET);
    if (s != TS_OK) return s;
    return guarded([&] {
        auto sweep = twinsync::harness::sweep_alpha(cfg->cfg, data, std::vector<double>(alphas, alphas + count));
        if (out_dir) twinsync::report::write_sweep(cfg->cfg, sweep, out_dir);
        if (summary_json) *summary_json = dup_string(twinsync::report::sweep_summary(cfg->cfg, sweep).dump(2));
    });
}

ts_status ts_sweep_lambda(const ts_config* cfg, const double* lambdas, size_t count, char** report_json) {
    twinsync::harness::BaseData data;
    ts_status s = guarded(
        [&] {
            need(cfg, "config");
            need(report_json, "out");
            twinsync::require(count > 0 && lambdas != nullptr, ErrorKind::InvalidArgument, "lambda list is empty");
            data = twinsync::harness::load_base_data(cfg->cfg);
        },
        TS_ERR_DATASET);
    if (s != TS_OK) return s;
    return guarded([&] {
        const auto rows = twinsync::harness::sweep_lambda(cfg->cfg, data, std::vector<double>(lambdas, lambdas + count));
        Json arr = Json::array();
        for (const auto& r : rows)
            arr.push_back({{"lambda", r.lambda},
                           {"strategy", std::string(twinsync::strategies::to_string(r.strategy))},
                           {"final_combined_accuracy", r.final_combined_accuracy},
                           {"final_retention_ep0", r.final_retention_ep0}});
        *report_json = dup_string(Json{{"rows", arr}}.dump(2));
    });
}

ts_status ts_gradcheck(uint64_t seed, size_t networks, char** report_json) {
    return guarded([&] {
        need(report_json, "out");
        twinsync::gradcheck::Options opt;
        opt.seed = seed;
        opt.networks = networks;
        Json suites = Json::array();
        for (const auto& r : twinsync::gradcheck::run(opt))
            suites.push_back({{"suite", r.name},
                              {"networks", r.networks},
                              {"coordinates", r.coordinates},
                              {"max_relative_error", r.max_relative_error}});
        *report_json = dup_string(
            Json{{"seed", seed}, {"step", opt.step}, {"floor", opt.floor}, {"suites", suites}}.dump(2));
    });
}

ts_status ts_inspect_idx(const char* path, char** report_json) {
    return guarded(
        [&] {
            need(path, "path");
            need(report_json, "out");
            *report_json = dup_string(idx_json(path).dump(2));
        },
        TS_ERR_DATASET);
}

ts_status ts_inspect_dataset(const ts_config* cfg, char** report_json) {
    return guarded(
        [&] {
            need(cfg, "config");
            need(report_json, "out");
            auto src = cfg->cfg.data;
            src.kind = twinsync::harness::DataSource::Kind::Idx;
            src = twinsync::harness::resolve_data_paths(src);
            twinsync::require(!src.train_images.empty() && !src.train_labels.empty() && !src.test_images.empty() &&
                                  !src.test_labels.empty(),
                              ErrorKind::Io,
                              "IDX dataset paths are not configured and TWINSYNC_DATA_DIR does not provide them");
            Json files = Json::array();
            for (const auto* p : {&src.train_images, &src.train_labels, &src.test_images, &src.test_labels})
                files.push_back(idx_json(*p));
            Json splits = Json::object();
            auto describe = [](const std::vector<twinsync::nn::Sample>& samples) {
                std::vector<std::size_t> hist;
                for (const auto& s : samples) {
                    if (s.y >= hist.size()) hist.resize(s.y + 1, 0);
                    ++hist[s.y];
                }
                return Json{{"samples", samples.size()},
                            {"features", samples.empty() ? 0 : samples.front().x.size()},
                            {"label_histogram", hist}};
            };
            splits["train"] = describe(twinsync::episodes::load_idx(src.train_images, src.train_labels));
            splits["test"] = describe(twinsync::episodes::load_idx(src.test_images, src.test_labels));
            *report_json = dup_string(Json{{"files", files}, {"splits", splits}}.dump(2));
        },
        TS_ERR_DATASET);
}

ts_status ts_desync_time(size_t training_size, double cycles_per_sample, double frequency_hz, size_t iterations,
                         double* out_seconds) {
    return guarded([&] {
        need(out_seconds, "out");
        twinsync::sync::SyncParams p{cycles_per_sample, frequency_hz};
        *out_seconds = twinsync::sync::desync_time(training_size, p, iterations);
    });
}

}  // extern "C"
