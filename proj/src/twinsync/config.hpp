#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "twinsync/harness.hpp"

namespace twinsync::config {

using Json = nlohmann::ordered_json;

Json to_json(const harness::ExperimentConfig& cfg);

// Strict: unknown keys and ill-typed values raise ErrorKind::Config. Keys
// missing from the document keep the values of the document's preset.
harness::ExperimentConfig from_json(const Json& doc);

// Accepts either a bare config document or a run summary with an echoed
// "config" member.
harness::ExperimentConfig parse(std::string_view text);
harness::ExperimentConfig load_file(const std::string& path);

// Applies one dotted-path override such as "reg.lambda=75000".
void apply_override(harness::ExperimentConfig& cfg, std::string_view assignment);
void apply_override(harness::ExperimentConfig& cfg, std::string_view key, std::string_view value);

}  // namespace twinsync::config
