#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "twinsync/harness.hpp"

namespace twinsync::report {

using Json = nlohmann::ordered_json;

inline constexpr const char* kAccuracyFile = "fig2a_accuracy.csv";
inline constexpr const char* kDesyncFile = "fig2b_desync.csv";
inline constexpr const char* kRetentionFile = "fig3_retention.csv";
inline constexpr const char* kTradeoffFile = "fig4_tradeoff.csv";
inline constexpr const char* kSweepFile = "alpha_sweep.csv";
inline constexpr const char* kSummaryFile = "summary.json";

// Shortest decimal that parses back to the same double; empty for NaN/Inf.
std::string format_number(double v);

// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

// One row per (strategy, episode, iteration). Episodes are numbered from 1.
std::string accuracy_csv(const harness::RunRecord& record);
std::string desync_csv(const harness::RunRecord& record);
// First-episode retention after every evaluated iteration of later episodes.
std::string retention_csv(const harness::RunRecord& record);
// Loss and desync time against n for the first episode of one strategy:
// EWC++ when it was run, otherwise the first strategy of the run.
std::string tradeoff_csv(const harness::RunRecord& record);
std::string tradeoff_csv(const std::string& run_id, strategies::Strategy s, const sync::TrainReport& report);
std::string sweep_csv(const std::string& run_id, const harness::SweepResult& sweep);

Json summary(const harness::RunRecord& record);
Json sweep_summary(const harness::ExperimentConfig& cfg, const harness::SweepResult& sweep);

// Emits the five figure/summary files into `dir`, creating it if needed.
void write_run(const harness::RunRecord& record, const std::filesystem::path& dir);
// alpha_sweep.csv, fig4_tradeoff.csv and summary.json.
void write_sweep(const harness::ExperimentConfig& cfg, const harness::SweepResult& sweep,
                 const std::filesystem::path& dir);

}  // namespace twinsync::report
