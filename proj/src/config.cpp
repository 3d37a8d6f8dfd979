#include "gtaseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gtaseg/error.hpp"

namespace gtaseg {

namespace {

using nlohmann::json;

int line_of_offset(const std::string& text, std::size_t offset) {
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

double require_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return v.get<double>();
}

int require_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
    return v.get<int>();
}

bool require_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
    return v.get<bool>();
}

std::string require_string(const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

}  // namespace

RunSetup parse_config(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ":" + std::to_string(line_of_offset(text, e.byte)) +
                          ": malformed config: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(origin + ": config must be a flat JSON object");

    static const std::set<std::string> kKnown = {
        "method",        "gta_data",        "student_data",  "ema_scope",       "alpha",
        "tau",           "quantile",        "mu",            "reweight_enabled", "laplace_enabled",
        "lr_init",       "weight_decay",    "epochs",        "warmup_epochs",   "batch_labeled",
        "batch_unlabeled", "seed",          "fixed_gamma",   "hidden",          "classes",
        "partition_boundary", "dataset",    "data_seed",     "data_n",          "n_labeled",
        "n_heldout",     "image_size",
    };
    for (const auto& [key, value] : doc.items()) {
        if (!kKnown.count(key)) {
            throw ConfigError(origin + ": unknown config key '" + key + "'");
        }
    }
    if (!doc.contains("method")) {
        throw ConfigError(origin + ": missing required key 'method'");
    }

    RunSetup setup;
    TrainConfig& cfg = setup.train;
    cfg.method = method_from_string(require_string(doc["method"], "method"));
    if (doc.contains("gta_data")) cfg.gta_data = data_source_from_string(require_string(doc["gta_data"], "gta_data"));
    if (doc.contains("student_data")) {
        cfg.student_data = data_source_from_string(require_string(doc["student_data"], "student_data"));
    }
    if (doc.contains("ema_scope")) cfg.ema_scope = scope_from_string(require_string(doc["ema_scope"], "ema_scope"));
    if (doc.contains("alpha")) cfg.alpha = static_cast<float>(require_number(doc["alpha"], "alpha"));
    if (doc.contains("tau")) cfg.tau = static_cast<float>(require_number(doc["tau"], "tau"));
    if (doc.contains("quantile")) cfg.quantile = static_cast<float>(require_number(doc["quantile"], "quantile"));
    if (doc.contains("mu")) cfg.mu = static_cast<float>(require_number(doc["mu"], "mu"));
    if (doc.contains("reweight_enabled")) cfg.reweight_enabled = require_bool(doc["reweight_enabled"], "reweight_enabled");
    if (doc.contains("laplace_enabled")) cfg.laplace_enabled = require_bool(doc["laplace_enabled"], "laplace_enabled");
    if (doc.contains("lr_init")) cfg.lr_init = static_cast<float>(require_number(doc["lr_init"], "lr_init"));
    if (doc.contains("weight_decay")) cfg.weight_decay = static_cast<float>(require_number(doc["weight_decay"], "weight_decay"));
    if (doc.contains("epochs")) cfg.epochs = require_int(doc["epochs"], "epochs");
    if (doc.contains("warmup_epochs")) cfg.warmup_epochs = require_int(doc["warmup_epochs"], "warmup_epochs");
    if (doc.contains("batch_labeled")) cfg.batch_labeled = require_int(doc["batch_labeled"], "batch_labeled");
    if (doc.contains("batch_unlabeled")) cfg.batch_unlabeled = require_int(doc["batch_unlabeled"], "batch_unlabeled");
    if (doc.contains("seed")) cfg.seed = static_cast<std::uint64_t>(require_int(doc["seed"], "seed"));
    if (doc.contains("fixed_gamma")) cfg.fixed_gamma = static_cast<float>(require_number(doc["fixed_gamma"], "fixed_gamma"));
    if (doc.contains("hidden")) {
        if (!doc["hidden"].is_array()) throw ConfigError("config key 'hidden' must be an integer array");
        cfg.model.hidden.clear();
        for (const auto& v : doc["hidden"]) cfg.model.hidden.push_back(require_int(v, "hidden"));
    }
    if (doc.contains("classes")) cfg.model.classes = require_int(doc["classes"], "classes");
    if (doc.contains("partition_boundary")) {
        cfg.model.partition_boundary = require_int(doc["partition_boundary"], "partition_boundary");
    }

    if (doc.contains("dataset")) setup.dataset_path = require_string(doc["dataset"], "dataset");
    if (doc.contains("data_seed")) setup.data_seed = static_cast<std::uint64_t>(require_int(doc["data_seed"], "data_seed"));
    if (doc.contains("data_n")) setup.data_n = require_int(doc["data_n"], "data_n");
    if (doc.contains("n_labeled")) setup.n_labeled = require_int(doc["n_labeled"], "n_labeled");
    if (doc.contains("n_heldout")) setup.n_heldout = require_int(doc["n_heldout"], "n_heldout");
    if (doc.contains("image_size")) setup.image_size = require_int(doc["image_size"], "image_size");

    validate(cfg);
    return setup;
}

RunSetup load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

std::string setup_to_json(const RunSetup& setup) {
    const TrainConfig& cfg = setup.train;
    json doc;
    doc["method"] = to_string(cfg.method);
    doc["gta_data"] = to_string(cfg.gta_data);
    doc["student_data"] = to_string(cfg.student_data);
    doc["ema_scope"] = to_string(cfg.ema_scope);
    doc["alpha"] = cfg.alpha;
    doc["tau"] = cfg.tau;
    doc["quantile"] = cfg.quantile;
    doc["mu"] = cfg.mu;
    doc["reweight_enabled"] = cfg.reweight_enabled;
    doc["laplace_enabled"] = cfg.laplace_enabled;
    doc["lr_init"] = cfg.lr_init;
    doc["weight_decay"] = cfg.weight_decay;
    doc["epochs"] = cfg.epochs;
    doc["warmup_epochs"] = cfg.warmup_epochs;
    doc["batch_labeled"] = cfg.batch_labeled;
    doc["batch_unlabeled"] = cfg.batch_unlabeled;
    doc["seed"] = cfg.seed;
    if (cfg.fixed_gamma) doc["fixed_gamma"] = *cfg.fixed_gamma;
    doc["hidden"] = cfg.model.hidden;
    doc["classes"] = cfg.model.classes;
    doc["partition_boundary"] = cfg.model.effective_boundary();
    if (setup.dataset_path) {
        doc["dataset"] = *setup.dataset_path;
    } else {
        doc["data_seed"] = setup.data_seed;
        doc["data_n"] = setup.data_n;
        doc["n_labeled"] = setup.n_labeled;
        doc["n_heldout"] = setup.n_heldout;
        doc["image_size"] = setup.image_size;
    }
    return doc.dump(2);
}

}  // namespace gtaseg
