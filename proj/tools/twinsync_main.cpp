#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "twinsync/twinsync.h"

namespace {

constexpr int kExitUsage = 2;
constexpr double kGradTolerance = 1e-5;

struct ConfigDeleter {
    void operator()(ts_config* c) const { ts_config_free(c); }
};
struct RunDeleter {
    void operator()(ts_run* r) const { ts_run_free(r); }
};
using ConfigPtr = std::unique_ptr<ts_config, ConfigDeleter>;
using RunPtr = std::unique_ptr<ts_run, RunDeleter>;

struct OwnedString {
    char* p = nullptr;
    ~OwnedString() { ts_string_free(p); }
    std::string str() const { return p ? p : ""; }
};

// Thrown with the process exit code once the error has been reported.
struct Exit {
    int code;
};

int exit_code(ts_status s) {
    switch (s) {
        case TS_OK: return 0;
        case TS_ERR_CONFIG:
        case TS_ERR_INVALID_ARGUMENT: return kExitUsage;
        case TS_ERR_DATASET: return 3;
        case TS_ERR_NUMERIC: return 4;
        case TS_ERR_IO: return 5;
        default: return 1;
    }
}

void check(ts_status s, const std::string& context) {
    if (s == TS_OK) return;
    std::cerr << "twinsync: " << context << ": " << ts_last_error() << " (" << ts_status_name(s) << ")\n";
    throw Exit{exit_code(s)};
}

[[noreturn]] void usage_error(const std::string& msg) {
    std::cerr << "twinsync: " << msg << "\n";
    throw Exit{kExitUsage};
}

struct CommonOptions {
    std::string config;
    std::string preset;
    std::string out = "results";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, CommonOptions& o, bool with_preset) {
    auto* cfg = cmd->add_option("--config", o.config, "JSON config file (or a summary.json from an earlier run)");
    if (with_preset) {
        auto* preset = cmd->add_option("--preset", o.preset, "Built-in preset")->check(CLI::IsMember({"paper", "desk"}));
        cfg->excludes(preset);
    }
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--set", o.overrides, "Override a config value, KEY=VALUE with a dotted key (repeatable)");
}

ConfigPtr build_config(const CommonOptions& o, const char* fallback_preset) {
    ts_config* raw = nullptr;
    if (!o.config.empty()) {
        check(ts_config_from_file(o.config.c_str(), &raw), "loading " + o.config);
    } else if (!o.preset.empty()) {
        check(ts_config_from_preset(o.preset.c_str(), &raw), "preset");
    } else if (fallback_preset != nullptr) {
        check(ts_config_from_preset(fallback_preset, &raw), "preset");
    } else {
        usage_error("a config is required: pass --config PATH or --preset {paper,desk}");
    }
    ConfigPtr cfg(raw);
    if (o.seed) check(ts_config_set(cfg.get(), "seed", std::to_string(*o.seed).c_str()), "--seed");
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) usage_error("--set expects KEY=VALUE, got '" + kv + "'");
        check(ts_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
    }
    return cfg;
}

void print_run(const ts_run* run) {
    std::printf("%-12s %10s %12s %14s\n", "strategy", "accuracy", "first_ep", "cum_delta_t_s");
    for (const char* name : {"exhaustive", "single_task", "ewc", "ewcpp"}) {
        double combined = 0.0, first = 0.0;
        if (ts_run_final_accuracy(run, name, &combined, &first) != TS_OK) continue;
        double total = 0.0;
        for (size_t k = 0; k < ts_run_episode_count(run); ++k) {
            double dt = 0.0;
            check(ts_run_episode(run, name, k, nullptr, &dt), "reading results");
            total += dt;
        }
        std::printf("%-12s %10.4f %12.4f %14.6g\n", name, combined, first, total);
    }
}

void run_and_write(ts_config* cfg, const std::string& out) {
    ts_run* raw = nullptr;
    check(ts_run_experiment(cfg, &raw), "run");
    RunPtr run(raw);
    check(ts_run_write_outputs(run.get(), out.c_str()), "writing outputs to " + out);
    print_run(run.get());
    std::cout << "outputs written to " << out << "\n";
}

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            usage_error(std::string("bad ") + what + " value '" + item + "'");
        }
    }
    if (out.empty()) usage_error(std::string("empty ") + what + " list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Edge continual-learning simulator for digital-twin synchronization"};
    app.set_version_flag("--version", std::string(ts_version()));
    app.require_subcommand(1);

    CommonOptions run_opts;
    auto* run_cmd = app.add_subcommand("run", "Run every configured strategy over the episode sequence");
    add_config_options(run_cmd, run_opts, true);
    run_cmd->add_option("--out", run_opts.out, "Output directory")->capture_default_str();

    CommonOptions paper_opts;
    auto* paper_cmd = app.add_subcommand("reproduce-paper", "Paper-scale run of all four strategies");
    add_config_options(paper_cmd, paper_opts, false);
    paper_cmd->add_option("--out", paper_opts.out, "Output directory")->capture_default_str();

    CommonOptions sweep_opts;
    std::string alphas = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
    auto* sweep_cmd = app.add_subcommand("sweep-alpha", "Select n for a list of alpha values on one episode");
    add_config_options(sweep_cmd, sweep_opts, true);
    sweep_cmd->add_option("--out", sweep_opts.out, "Output directory")->capture_default_str();
    sweep_cmd->add_option("--alphas", alphas, "Comma-separated alpha values in [0,1]")->capture_default_str();

    std::uint64_t grad_seed = 1;
    std::size_t grad_networks = 20;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central finite differences");
    grad_cmd->add_option("--seed", grad_seed, "Seed for the random networks")->capture_default_str();
    grad_cmd->add_option("--networks", grad_networks, "Number of random networks")->capture_default_str()
        ->check(CLI::PositiveNumber);

    CommonOptions inspect_opts;
    std::vector<std::string> idx_files;
    auto* inspect_cmd = app.add_subcommand("inspect-data", "Print IDX headers and checksums, then load the dataset");
    add_config_options(inspect_cmd, inspect_opts, true);
    inspect_cmd->add_option("files", idx_files, "IDX files to inspect instead of the configured dataset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*run_cmd) {
            auto cfg = build_config(run_opts, nullptr);
            run_and_write(cfg.get(), run_opts.out);
        } else if (*paper_cmd) {
            auto cfg = build_config(paper_opts, "paper");
            check(ts_config_set(cfg.get(), "strategies", "exhaustive,single_task,ewc,ewcpp"), "strategies");
            run_and_write(cfg.get(), paper_opts.out);
        } else if (*sweep_cmd) {
            auto cfg = build_config(sweep_opts, nullptr);
            const auto values = parse_list(alphas, "alpha");
            OwnedString summary;
            check(ts_sweep_alpha(cfg.get(), values.data(), values.size(), sweep_opts.out.c_str(), &summary.p),
                  "sweep-alpha");
            const auto doc = nlohmann::json::parse(summary.str());
            std::printf("%8s %8s %14s %12s\n", "alpha", "n*", "loss", "delta_t_s");
            for (const auto& row : doc["sweep"])
                std::printf("%8.3f %8zu %14.6g %12.6g\n", row["alpha"].get<double>(),
                            row["chosen_iterations"].get<std::size_t>(), row["train_loss"].get<double>(),
                            row["delta_t_s"].get<double>());
            std::cout << "outputs written to " << sweep_opts.out << "\n";
        } else if (*grad_cmd) {
            OwnedString report;
            check(ts_gradcheck(grad_seed, grad_networks, &report.p), "gradcheck");
            const auto doc = nlohmann::json::parse(report.str());
            bool ok = true;
            for (const auto& s : doc["suites"]) {
                const double err = s["max_relative_error"].get<double>();
                ok = ok && err < kGradTolerance;
                std::printf("%-14s networks=%-3zu coords=%-5zu max_rel_err=%.3e %s\n",
                            s["suite"].get<std::string>().c_str(), s["networks"].get<std::size_t>(),
                            s["coordinates"].get<std::size_t>(), err, err < kGradTolerance ? "ok" : "FAIL");
            }
            return ok ? 0 : 4;
        } else if (*inspect_cmd) {
            if (!idx_files.empty()) {
                for (const auto& f : idx_files) {
                    OwnedString report;
                    check(ts_inspect_idx(f.c_str(), &report.p), f);
                    std::cout << report.str() << "\n";
                }
            } else {
                auto cfg = build_config(inspect_opts, "paper");
                OwnedString report;
                check(ts_inspect_dataset(cfg.get(), &report.p), "inspect-data");
                std::cout << report.str() << "\n";
            }
        }
    } catch (const Exit& e) {
        return e.code;
    }
    return 0;
}
