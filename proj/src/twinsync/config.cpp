#include "twinsync/config.hpp"

#include <fstream>
#include <sstream>

#include "twinsync/errors.hpp"

namespace twinsync::config {
namespace {

using harness::DataSource;
using harness::ExperimentConfig;

std::string mode_name(sync::IterationMode m) { return m == sync::IterationMode::Fixed ? "fixed" : "optimized"; }
std::string scale_name(sync::TimeScale s) { return s == sync::TimeScale::Normalized ? "normalized" : "raw"; }
std::string source_name(DataSource::Kind k) { return k == DataSource::Kind::Synthetic ? "synthetic" : "idx"; }

sync::IterationMode parse_mode(const std::string& s) {
    if (s == "fixed") return sync::IterationMode::Fixed;
    if (s == "optimized") return sync::IterationMode::Optimized;
    fail(ErrorKind::Config, "objective.mode must be 'fixed' or 'optimized', got '" + s + "'");
}

sync::TimeScale parse_scale(const std::string& s) {
    if (s == "normalized") return sync::TimeScale::Normalized;
    if (s == "raw") return sync::TimeScale::Raw;
    fail(ErrorKind::Config, "objective.time_scale must be 'normalized' or 'raw', got '" + s + "'");
}

DataSource::Kind parse_source(const std::string& s) {
    if (s == "synthetic") return DataSource::Kind::Synthetic;
    if (s == "idx") return DataSource::Kind::Idx;
    fail(ErrorKind::Config, "data.source must be 'synthetic' or 'idx', got '" + s + "'");
}

// Every key of `doc` must exist in `schema`, recursively through objects.
void reject_unknown(const Json& doc, const Json& schema, const std::string& prefix) {
    require(doc.is_object(), ErrorKind::Config, (prefix.empty() ? std::string("config") : prefix) + " must be an object");
    for (const auto& [key, value] : doc.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        require(schema.contains(key), ErrorKind::Config, "unknown config key '" + path + "'");
        if (schema[key].is_object()) reject_unknown(value, schema[key], path);
    }
}

template <typename T>
void read(const Json& obj, const char* key, T& out, const std::string& path) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, "config key '" + path + key + "': " + e.what());
    }
}

// Unsigned fields reject negative and fractional numbers rather than wrapping.
std::size_t as_count(const Json& v, const std::string& name) {
    bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    if (v.is_number_float()) {
        const double d = v.get<double>();
        ok = d >= 0.0 && d < 1e18 && d == static_cast<double>(static_cast<std::size_t>(d));
        if (ok) return static_cast<std::size_t>(d);
    }
    require(ok, ErrorKind::Config, "config key '" + name + "' must be a nonnegative integer");
    return v.get<std::size_t>();
}

void read_count(const Json& obj, const char* key, std::size_t& out, const std::string& path) {
    if (obj.contains(key)) out = as_count(obj.at(key), path + key);
}

Json parse_value(std::string_view raw) {
    try {
        return Json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        return Json(std::string(raw));
    }
}

}  // namespace

Json to_json(const ExperimentConfig& cfg) {
    Json strategies = Json::array();
    for (auto s : cfg.strategies) strategies.push_back(std::string(strategies::to_string(s)));
    Json j;
    j["preset"] = cfg.preset;
    j["seed"] = cfg.seed;
    j["episodes"] = cfg.episodes;
    j["samples_per_episode"] = cfg.samples_per_episode;
    j["test_size"] = cfg.test_size;
    j["strategies"] = strategies;
    j["network"] = {{"hidden", cfg.hidden}};
    j["train"] = {{"learning_rate", cfg.learning_rate},
                  {"iterations", cfg.iterations},
                  {"batch_size", cfg.batch_size},
                  {"eval_every", cfg.eval_every}};
    j["objective"] = {{"mode", mode_name(cfg.mode)}, {"alpha", cfg.alpha}, {"time_scale", scale_name(cfg.time_scale)}};
    j["reg"] = {{"lambda", cfg.reg.lambda}, {"gamma", cfg.reg.gamma}};
    j["sync"] = {{"cycles_per_sample", cfg.sync.cycles_per_sample}, {"frequency_hz", cfg.sync.frequency_hz}};
    j["data"] = {{"source", source_name(cfg.data.kind)},
                 {"train_images", cfg.data.train_images},
                 {"train_labels", cfg.data.train_labels},
                 {"test_images", cfg.data.test_images},
                 {"test_labels", cfg.data.test_labels},
                 {"synthetic_dim", cfg.data.synthetic_dim},
                 {"synthetic_classes", cfg.data.synthetic_classes},
                 {"synthetic_train_count", cfg.data.synthetic_train_count},
                 {"synthetic_test_count", cfg.data.synthetic_test_count}};
    return j;
}

ExperimentConfig from_json(const Json& doc) {
    reject_unknown(doc, to_json(ExperimentConfig{}), "");
    std::string preset = "desk";
    read(doc, "preset", preset, "");
    ExperimentConfig cfg = harness::preset_by_name(preset);

    read(doc, "seed", cfg.seed, "");
    read_count(doc, "episodes", cfg.episodes, "");
    read_count(doc, "samples_per_episode", cfg.samples_per_episode, "");
    read_count(doc, "test_size", cfg.test_size, "");
    if (doc.contains("strategies")) {
        std::vector<std::string> names;
        read(doc, "strategies", names, "");
        cfg.strategies.clear();
        for (const auto& n : names) cfg.strategies.push_back(strategies::parse_strategy(n));
    }
    if (doc.contains("network")) {
        const Json& n = doc["network"];
        if (n.contains("hidden")) {
            require(n["hidden"].is_array(), ErrorKind::Config, "config key 'network.hidden' must be an array");
            cfg.hidden.clear();
            for (const auto& width : n["hidden"]) cfg.hidden.push_back(as_count(width, "network.hidden"));
        }
    }
    if (doc.contains("train")) {
        const Json& t = doc["train"];
        read(t, "learning_rate", cfg.learning_rate, "train.");
        read_count(t, "iterations", cfg.iterations, "train.");
        read_count(t, "batch_size", cfg.batch_size, "train.");
        read_count(t, "eval_every", cfg.eval_every, "train.");
    }
    if (doc.contains("objective")) {
        const Json& o = doc["objective"];
        std::string mode = mode_name(cfg.mode);
        std::string scale = scale_name(cfg.time_scale);
        read(o, "mode", mode, "objective.");
        read(o, "alpha", cfg.alpha, "objective.");
        read(o, "time_scale", scale, "objective.");
        cfg.mode = parse_mode(mode);
        cfg.time_scale = parse_scale(scale);
    }
    if (doc.contains("reg")) {
        read(doc["reg"], "lambda", cfg.reg.lambda, "reg.");
        read(doc["reg"], "gamma", cfg.reg.gamma, "reg.");
    }
    if (doc.contains("sync")) {
        read(doc["sync"], "cycles_per_sample", cfg.sync.cycles_per_sample, "sync.");
        read(doc["sync"], "frequency_hz", cfg.sync.frequency_hz, "sync.");
    }
    if (doc.contains("data")) {
        const Json& d = doc["data"];
        std::string source = source_name(cfg.data.kind);
        read(d, "source", source, "data.");
        cfg.data.kind = parse_source(source);
        read(d, "train_images", cfg.data.train_images, "data.");
        read(d, "train_labels", cfg.data.train_labels, "data.");
        read(d, "test_images", cfg.data.test_images, "data.");
        read(d, "test_labels", cfg.data.test_labels, "data.");
        read_count(d, "synthetic_dim", cfg.data.synthetic_dim, "data.");
        read_count(d, "synthetic_classes", cfg.data.synthetic_classes, "data.");
        read_count(d, "synthetic_train_count", cfg.data.synthetic_train_count, "data.");
        read_count(d, "synthetic_test_count", cfg.data.synthetic_test_count, "data.");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
    if (doc.is_object() && doc.contains("config") && doc.contains("provenance")) return from_json(doc["config"]);
    return from_json(doc);
}

ExperimentConfig load_file(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, path + ": cannot open config");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string_view::npos && eq > 0, ErrorKind::Config,
            "override '" + std::string(assignment) + "' is not of the form key=value");
    apply_override(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_override(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
    Json doc = to_json(cfg);
    Json* node = &doc;
    std::string path;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part(key.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
        path += (path.empty() ? "" : ".") + part;
        require(node->is_object() && node->contains(part), ErrorKind::Config, "unknown config key '" + path + "'");
        node = &(*node)[part];
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }
    require(!node->is_object(), ErrorKind::Config, "config key '" + path + "' is a section, not a value");

    Json parsed = parse_value(value);
    if (node->is_array() && !parsed.is_array()) {
        // Comma-separated shorthand: strategies=ewc,ewcpp or network.hidden=100,100
        Json arr = Json::array();
        std::string_view rest = value;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            arr.push_back(parse_value(rest.substr(0, comma)));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        parsed = std::move(arr);
    } else if (node->is_string() && !parsed.is_string()) {
        parsed = std::string(value);
    }
    *node = std::move(parsed);
    cfg = from_json(doc);
}

}  // namespace twinsync::config
