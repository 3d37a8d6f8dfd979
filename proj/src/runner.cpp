#include "gtaseg/runner.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gtaseg/error.hpp"
#include "gtaseg/io.hpp"

namespace gtaseg {

namespace fs = std::filesystem;

namespace {

int log_level() {
    // 0 quiet, 1 info, 2 debug
    static const int level = [] {
        const char* env = std::getenv("GTASEG_LOG");
        if (!env) return 1;
        const std::string v(env);
        if (v == "quiet") return 0;
        if (v == "debug") return 2;
        return 1;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "[gtaseg] %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::fprintf(stderr, "[gtaseg] %s\n", msg.c_str());
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    return buf;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    out.close();
    if (!out) throw IoError("write failed: " + path.string());
}

void write_manifest(const fs::path& dir, const RunSetup& setup, const std::string& started,
                    const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& artifacts) {
    nlohmann::json doc;
    doc["tool_version"] = kToolVersion;
    doc["started"] = started;
    doc["finished"] = iso_now();
    doc["seeds"] = seeds;
    doc["config"] = nlohmann::json::parse(setup_to_json(setup));
    doc["artifacts"] = artifacts;
    write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

int run_guarded(const char* what, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s: config error: %s\n", what, e.what());
        return kExitConfig;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "%s: numeric failure: %s\n", what, e.what());
        return kExitNumeric;
    } catch (const IoError& e) {
        std::fprintf(stderr, "%s: i/o error: %s\n", what, e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s: error: %s\n", what, e.what());
        return kExitFailure;
    }
}

std::string sanitize_label(const std::string& label) {
    std::string out = label;
    for (char& c : out) {
        if (c == ',' || c == ';' || c == '/') c = '+';
    }
    return out;
}

std::vector<GridEntry> preset_grid(const TrainConfig& base, const std::string& name) {
    auto with = [&base](std::string label, const std::function<void(TrainConfig&)>& apply) {
        GridEntry e{std::move(label), base};
        apply(e.config);
        validate(e.config);
        return e;
    };
    if (name == "components") {
        return {
            with("suponly", [](TrainConfig& c) { c.method = Method::SupOnly; }),
            with("mean_teacher", [](TrainConfig& c) { c.method = Method::MeanTeacher; }),
            with("gta", [](TrainConfig& c) {
                c.method = Method::Gta;
                c.reweight_enabled = false;
            }),
            with("gta_reweight", [](TrainConfig& c) {
                c.method = Method::Gta;
                c.reweight_enabled = true;
                c.laplace_enabled = true;
            }),
        };
    }
    if (name == "ema-scope") {
        return {
            with("ema_all", [](TrainConfig& c) {
                c.method = Method::Gta;
                c.reweight_enabled = false;
                c.ema_scope = Scope::All;
            }),
            with("ema_extractor", [](TrainConfig& c) {
                c.method = Method::Gta;
                c.reweight_enabled = false;
                c.ema_scope = Scope::Extractor;
            }),
        };
    }
    if (name == "method-design") {
        auto design = [&](const char* label, DataSource gta_src, DataSource student_src) {
            return with(label, [=](TrainConfig& c) {
                c.method = Method::Gta;
                c.gta_data = gta_src;
                c.student_data = student_src;
            });
        };
        return {
            design("gta_labeled+student_pseudo", DataSource::Labeled, DataSource::Pseudo),
            design("gta_both+student_labeled", DataSource::Both, DataSource::Labeled),
            design("gta_pseudo+student_labeled", DataSource::Pseudo, DataSource::Labeled),
        };
    }
    if (name == "reweighting") {
        return {
            with("no_reweight", [](TrainConfig& c) {
                c.method = Method::Gta;
                c.reweight_enabled = false;
            }),
            with("confidence_only", [](TrainConfig& c) {
                c.method = Method::Gta;
                c.reweight_enabled = true;
                c.laplace_enabled = false;
            }),
            with("confidence+laplace", [](TrainConfig& c) {
                c.method = Method::Gta;
                c.reweight_enabled = true;
                c.laplace_enabled = true;
            }),
        };
    }
    if (name == "ema-alpha") {
        std::vector<GridEntry> out;
        for (float a : {0.99f, 0.999f, 0.9999f}) {
            out.push_back(with("alpha=" + std::to_string(a).substr(0, 6), [a](TrainConfig& c) {
                c.method = Method::Gta;
                c.alpha = a;
            }));
        }
        return out;
    }
    if (name == "warmup") {
        std::vector<GridEntry> out;
        for (int wu : {1, 2, 3}) {
            out.push_back(with("warmup=" + std::to_string(wu), [wu](TrainConfig& c) {
                c.method = Method::Gta;
                c.warmup_epochs = wu;
            }));
        }
        return out;
    }
    if (name == "partition-boundary") {
        std::vector<GridEntry> out;
        const int layers = base.model.layer_count();
        for (int b = 1; b <= layers; ++b) {
            out.push_back(with("boundary=" + std::to_string(b), [b](TrainConfig& c) {
                c.method = Method::Gta;
                c.model.partition_boundary = b;
            }));
        }
        return out;
    }
    if (name == "three-models") {
        return {with("gta_reweight", [](TrainConfig& c) { c.method = Method::Gta; })};
    }
    throw ConfigError("unknown preset '" + name +
                      "' (components|ema-scope|method-design|reweighting|ema-alpha|warmup|"
                      "partition-boundary|three-models)");
}

}  // namespace

DatasetSplit build_dataset(const RunSetup& setup) {
    if (setup.dataset_path) {
        return load_dataset(*setup.dataset_path);
    }
    auto samples = generate(setup.data_seed, setup.data_n, setup.train.model.classes, setup.image_size);
    return split(samples, setup.n_labeled, setup.n_heldout, setup.data_seed, setup.train.model.classes,
                 setup.image_size);
}

std::string metrics_csv(const RunReport& report) {
    std::string csv = "epoch,model,miou,loss_l,loss_u,lr,kept_fraction,mean_weight\n";
    for (const EpochRecord& rec : report.records) {
        for (const auto& [model, miou] : rec.model_miou) {
            csv += std::to_string(rec.epoch) + "," + model + "," + fmt(miou) + "," + fmt(rec.loss_l) +
                   "," + fmt(rec.loss_u) + "," + fmt(rec.lr) + "," + fmt(rec.kept_fraction) + "," +
                   fmt(rec.mean_weight) + "\n";
        }
    }
    return csv;
}

std::vector<GridEntry> resolve_axes(const TrainConfig& base, const std::string& axes_spec) {
    if (axes_spec.rfind("preset:", 0) == 0) {
        return preset_grid(base, axes_spec.substr(7));
    }
    std::vector<Axis> axes;
    std::size_t pos = 0;
    while (pos < axes_spec.size()) {
        const std::size_t semi = axes_spec.find(';', pos);
        const std::string part =
            axes_spec.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos);
        pos = semi == std::string::npos ? axes_spec.size() : semi + 1;
        if (part.empty()) continue;
        const std::size_t eq = part.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("axes spec entry '" + part + "' is not field=v1,v2,...");
        }
        Axis axis;
        axis.field = axis_field_from_string(part.substr(0, eq));
        std::size_t vpos = eq + 1;
        while (vpos <= part.size()) {
            const std::size_t comma = part.find(',', vpos);
            const std::string value =
                part.substr(vpos, comma == std::string::npos ? std::string::npos : comma - vpos);
            if (!value.empty()) axis.values.push_back(value);
            if (comma == std::string::npos) break;
            vpos = comma + 1;
        }
        axes.push_back(std::move(axis));
    }
    return ablation_grid(base, axes);
}

std::vector<VariantSummary> run_grid(const DatasetSplit& data, const std::vector<GridEntry>& grid,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::string& out_dir) {
    if (seeds.empty()) throw ConfigError("grid run needs at least one seed");
    std::vector<VariantSummary> summaries;
    for (const GridEntry& entry : grid) {
        VariantSummary summary;
        summary.label = entry.label;
        summary.n_seeds = static_cast<int>(seeds.size());
        const fs::path variant_dir = fs::path(out_dir) / sanitize_label(entry.label);
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = entry.config;
            cfg.seed = seed;
            RunReport report = train_run(data, cfg);
            if (!out_dir.empty()) {
                const fs::path seed_dir = variant_dir / ("seed" + std::to_string(seed));
                fs::create_directories(seed_dir);
                write_text(seed_dir / "metrics.csv", metrics_csv(report));
            }
            summary.mean_final_miou += report.final_model_miou;
            for (const auto& [name, miou] : report.final_miou) {
                summary.mean_model_miou[name] += miou;
            }
            log_debug(entry.label + " seed " + std::to_string(seed) + ": final miou " +
                      fmt(report.final_model_miou));
        }
        summary.mean_final_miou /= static_cast<double>(seeds.size());
        for (auto& [name, v] : summary.mean_model_miou) v /= static_cast<double>(seeds.size());
        log_info("variant " + entry.label + ": mean final miou " + fmt(summary.mean_final_miou));
        summaries.push_back(std::move(summary));
    }
    return summaries;
}

int cli_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override) {
    return run_guarded("run", [&] {
        const std::string started = iso_now();
        RunSetup setup = load_config(config_path);
        if (seed_override) setup.train.seed = *seed_override;
        fs::create_directories(out_dir);

        DatasetSplit data = build_dataset(setup);
        log_info("run: method=" + to_string(setup.train.method) + " seed=" +
                 std::to_string(setup.train.seed) + " (" + std::to_string(data.labeled.size()) + "/" +
                 std::to_string(data.unlabeled.size()) + "/" + std::to_string(data.heldout.size()) +
                 " labeled/unlabeled/heldout)");

        ModelsState models;
        RunReport report = train_run(data, setup.train, models);

        std::vector<std::string> artifacts{"metrics.csv"};
        write_text(fs::path(out_dir) / "metrics.csv", metrics_csv(report));
        for (const auto& [name, params] : models.live()) {
            const std::string file = "checkpoint_" + name + ".gtas";
            save_checkpoint(*params, (fs::path(out_dir) / file).string());
            artifacts.push_back(file);
        }
        write_manifest(out_dir, setup, started, {setup.train.seed}, artifacts);

        for (const auto& [name, miou] : report.final_miou) {
            log_info("final " + name + " miou: " + fmt(miou));
        }
        return kExitOk;
    });
}

int cli_ablate(const std::string& config_path, const std::string& axes_spec,
               const std::string& out_dir, const std::vector<std::uint64_t>& seeds) {
    return run_guarded("ablate", [&] {
        const std::string started = iso_now();
        RunSetup setup = load_config(config_path);
        fs::create_directories(out_dir);

        const std::vector<GridEntry> grid = resolve_axes(setup.train, axes_spec);
        DatasetSplit data = build_dataset(setup);
        log_info("ablate: " + std::to_string(grid.size()) + " variants x " +
                 std::to_string(seeds.size()) + " seeds");

        const auto summaries = run_grid(data, grid, seeds, out_dir);

        std::string csv = "variant,n_seeds,mean_final_miou,mean_gta_miou,mean_student_miou,mean_teacher_miou\n";
        for (const auto& s : summaries) {
            auto model_col = [&](const char* name) {
                auto it = s.mean_model_miou.find(name);
                return it == s.mean_model_miou.end() ? std::string() : fmt(it->second);
            };
            csv += sanitize_label(s.label) + "," + std::to_string(s.n_seeds) + "," +
                   fmt(s.mean_final_miou) + "," + model_col("gta") + "," + model_col("student") + "," +
                   model_col("teacher") + "\n";
        }
        write_text(fs::path(out_dir) / "summary.csv", csv);
        write_manifest(out_dir, setup, started, seeds, {"summary.csv"});
        return kExitOk;
    });
}

int cli_eval(const std::string& checkpoint_path, const std::string& dataset_path,
             const std::string& split_name) {
    return run_guarded("eval", [&] {
        ParamStore params = load_checkpoint(checkpoint_path);
        DatasetSplit data = load_dataset(dataset_path);
        const std::vector<SegSample>* samples = nullptr;
        if (split_name == "heldout") samples = &data.heldout;
        else if (split_name == "labeled") samples = &data.labeled;
        else if (split_name == "unlabeled") samples = &data.unlabeled;
        else throw ConfigError("unknown split '" + split_name + "' (labeled|unlabeled|heldout)");
        if (samples->empty()) throw DataError("split '" + split_name + "' is empty");

        IouReport rep = evaluate_model(params, *samples, data.classes);
        for (std::size_t c = 0; c < rep.per_class_iou.size(); ++c) {
            if (rep.class_defined[c]) {
                std::printf("class %zu iou: %.4f\n", c, rep.per_class_iou[c]);
            } else {
                std::printf("class %zu iou: undefined (absent)\n", c);
            }
        }
        std::printf("miou: %.4f\n", rep.miou);
        return kExitOk;
    });
}

int cli_gen_data(std::uint64_t seed, int n, int classes, int size, int n_labeled, int n_heldout,
                 const std::string& out_path) {
    return run_guarded("gen-data", [&] {
        auto samples = generate(seed, n, classes, size);
        DatasetSplit data = split(samples, n_labeled, n_heldout, seed, classes, size);
        if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty()) {
            fs::create_directories(parent);
        }
        save_dataset(data, out_path);
        log_info("wrote " + out_path + " (" + std::to_string(data.labeled.size()) + "/" +
                 std::to_string(data.unlabeled.size()) + "/" + std::to_string(data.heldout.size()) +
                 " labeled/unlabeled/heldout)");
        return kExitOk;
    });
}

}  // namespace gtaseg
