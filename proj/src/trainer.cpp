#include "gtaseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtaseg/error.hpp"
#include "gtaseg/graph.hpp"
#include "gtaseg/rng.hpp"
#include "gtaseg/transmission.hpp"

namespace gtaseg {

namespace {

std::vector<int> permutation(int n, std::uint64_t seed) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    return order;
}

// Labeled batches for one epoch: batches cycle through reshuffled passes, a
// pure function of (seed, epoch).
class LabeledCycler {
public:
    LabeledCycler(int n, std::uint64_t seed, int epoch)
        : n_(n), base_(mix_seed(mix_seed(seed, 0x1abe1ULL), static_cast<std::uint64_t>(epoch))) {
        reshuffle();
    }

    std::vector<int> next(int count) {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(count));
        while (static_cast<int>(out.size()) < count) {
            if (pos_ == n_) {
                ++pass_;
                reshuffle();
            }
            out.push_back(order_[static_cast<std::size_t>(pos_++)]);
        }
        return out;
    }

private:
    void reshuffle() {
        order_ = permutation(n_, mix_seed(base_, static_cast<std::uint64_t>(pass_)));
        pos_ = 0;
    }

    int n_;
    std::uint64_t base_;
    int pass_ = 0;
    int pos_ = 0;
    std::vector<int> order_;
};

void check_finite(double loss, int t) {
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at iteration " + std::to_string(t));
    }
}

// Forward + supervised CE + SGD on one model; returns the loss value.
double supervised_step(ParamStore& model, const Batch& batch, const SgdState& sgd, int t) {
    Graph g;
    NodeId loss = supervised_loss(g, forward_graph(g, model, batch.images), batch.masks);
    const double lv = g.value(loss)[0];
    auto grads = g.backward(loss);
    sgd_step(model, grads, sgd, t);
    return lv;
}

std::vector<std::string> live_names(Method method) {
    switch (method) {
        case Method::SupOnly:
            return {"student"};
        case Method::MeanTeacher:
            return {"student", "teacher"};
        default:
            return {"gta", "student", "teacher"};
    }
}

}  // namespace

void validate(const TrainConfig& cfg) {
    if (cfg.alpha < 0.0f || cfg.alpha > 1.0f) throw ConfigError("alpha must lie in [0,1]");
    if (cfg.quantile < 0.0f || cfg.quantile >= 1.0f) throw ConfigError("quantile must lie in [0,1)");
    if (cfg.tau < 0.0f) throw ConfigError("tau must be >= 0");
    if (cfg.mu < 0.0f) throw ConfigError("mu must be >= 0");
    if (cfg.lr_init <= 0.0f) throw ConfigError("lr_init must be > 0");
    if (cfg.weight_decay < 0.0f) throw ConfigError("weight_decay must be >= 0");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.warmup_epochs < 0 || cfg.warmup_epochs > cfg.epochs) {
        throw ConfigError("warmup_epochs must lie in [0, epochs]");
    }
    if (cfg.batch_labeled < 1 || cfg.batch_unlabeled < 1) throw ConfigError("batch sizes must be >= 1");
    if (cfg.student_data == DataSource::Both) {
        throw ConfigError("student_data must be labeled or pseudo");
    }
    if (cfg.model.classes < 2) throw ConfigError("classes must be >= 2");
    const int boundary = cfg.model.effective_boundary();
    if (boundary < 1 || boundary > cfg.model.layer_count()) {
        throw ConfigError("partition_boundary outside [1, layer count]");
    }
}

ReweightConfig reweight_config(const TrainConfig& cfg) {
    return ReweightConfig{cfg.reweight_enabled, cfg.laplace_enabled ? cfg.tau : 0.0f, cfg.quantile};
}

std::vector<std::pair<std::string, const ParamStore*>> ModelsState::live() const {
    std::vector<std::pair<std::string, const ParamStore*>> out;
    if (has_gta) out.emplace_back("gta", &gta);
    out.emplace_back("student", &student);
    if (has_teacher) out.emplace_back("teacher", &teacher);
    return out;
}

Batch make_batch(const std::vector<SegSample>& samples, const std::vector<int>& indices,
                 bool with_masks) {
    if (indices.empty()) throw DataError("make_batch: empty index list");
    const Tensor& first = samples[static_cast<std::size_t>(indices[0])].image;
    const int c = first.dim(0), h = first.dim(1), w = first.dim(2);
    Batch batch;
    batch.images = Tensor({static_cast<int>(indices.size()), c, h, w});
    if (with_masks) batch.masks.reserve(indices.size() * static_cast<std::size_t>(h) * w);
    const std::int64_t stride = static_cast<std::int64_t>(c) * h * w;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const SegSample& s = samples[static_cast<std::size_t>(indices[i])];
        std::copy(s.image.data(), s.image.data() + stride,
                  batch.images.data() + static_cast<std::int64_t>(i) * stride);
        if (with_masks) batch.masks.insert(batch.masks.end(), s.mask.begin(), s.mask.end());
    }
    return batch;
}

StepMetrics gta_train_step(const Batch& batch_l, const Batch& batch_u, ModelsState& models,
                           const TrainConfig& cfg, const SgdState& sgd, int t) {
    StepMetrics sm;
    const bool need_pseudo =
        cfg.gta_data != DataSource::Labeled || cfg.student_data == DataSource::Pseudo;

    PseudoLabelMap map;
    if (need_pseudo) {
        map = make_pseudo_labels(forward(models.teacher, batch_u.images), reweight_config(cfg),
                                 cfg.fixed_gamma);
        sm.kept_fraction = map.kept_fraction;
        sm.mean_weight = map.mean_kept_weight();
    }

    // assistant update
    {
        Graph g;
        GraphModel gm = register_model(g, models.gta);
        NodeId loss = -1;
        const bool use_pseudo = cfg.gta_data != DataSource::Labeled && map.kept_count() > 0;
        const bool use_labeled = cfg.gta_data != DataSource::Pseudo;
        if (use_pseudo) {
            loss = unsupervised_loss(g, model_forward(g, gm, batch_u.images), map);
            sm.loss_u += g.value(loss)[0];
        }
        if (use_labeled) {
            NodeId sup = supervised_loss(g, model_forward(g, gm, batch_l.images), batch_l.masks);
            sm.loss_l += g.value(sup)[0];
            loss = loss >= 0 ? add(g, loss, sup) : sup;
        }
        if (loss >= 0) {
            check_finite(g.value(loss)[0], t);
            auto grads = g.backward(loss);
            sgd_step(models.gta, grads, sgd, t);
        } else {
            sm.gta_grad_skipped = true;  // nothing survived the threshold
        }
    }

    // student update from the pre-transmission state
    {
        Graph g;
        GraphModel stm = register_model(g, models.student);
        if (cfg.student_data == DataSource::Labeled) {
            NodeId loss = supervised_loss(g, model_forward(g, stm, batch_l.images), batch_l.masks);
            sm.loss_l += g.value(loss)[0];
            check_finite(g.value(loss)[0], t);
            auto grads = g.backward(loss);
            sgd_step(models.student, grads, sgd, t);
        } else if (map.kept_count() > 0) {
            NodeId loss = unsupervised_loss(g, model_forward(g, stm, batch_u.images), map);
            sm.loss_u += g.value(loss)[0];
            check_finite(g.value(loss)[0], t);
            auto grads = g.backward(loss);
            sgd_step(models.student, grads, sgd, t);
        }
    }

    // representation transmission, then the teacher follows the student
    ema_update(models.student, models.gta, EmaConfig{cfg.alpha, cfg.ema_scope});
    update_teacher(models.teacher, models.student, cfg.alpha);
    return sm;
}

StepMetrics mt_train_step(const Batch& batch_l, const Batch& batch_u, ModelsState& models,
                          const TrainConfig& cfg, const SgdState& sgd, int t) {
    StepMetrics sm;
    // same threshold pipeline as the three-model method, but unit weights
    ReweightConfig rw = reweight_config(cfg);
    rw.enabled = false;
    PseudoLabelMap map =
        make_pseudo_labels(forward(models.teacher, batch_u.images), rw, cfg.fixed_gamma);
    sm.kept_fraction = map.kept_fraction;
    sm.mean_weight = map.mean_kept_weight();

    Graph g;
    GraphModel stm = register_model(g, models.student);
    NodeId loss = supervised_loss(g, model_forward(g, stm, batch_l.images), batch_l.masks);
    sm.loss_l = g.value(loss)[0];
    if (cfg.mu != 0.0f && map.kept_count() > 0) {
        NodeId unsup = unsupervised_loss(g, model_forward(g, stm, batch_u.images), map);
        sm.loss_u = g.value(unsup)[0];
        loss = add(g, loss, scale(g, unsup, cfg.mu));
    }
    check_finite(g.value(loss)[0], t);
    auto grads = g.backward(loss);
    sgd_step(models.student, grads, sgd, t);

    update_teacher(models.teacher, models.student, cfg.alpha);
    return sm;
}

StepMetrics suponly_train_step(const Batch& batch_l, ModelsState& models, const TrainConfig& cfg,
                               const SgdState& sgd, int t) {
    (void)cfg;
    StepMetrics sm;
    sm.loss_l = supervised_step(models.student, batch_l, sgd, t);
    check_finite(sm.loss_l, t);
    return sm;
}

ModelsState warmup(const std::vector<SegSample>& labeled, const TrainConfig& cfg, const SgdState& sgd,
                   int iters_per_epoch, int& t, const WarmupHook& hook) {
    if (labeled.empty()) throw DataError("warmup: empty labeled set");

    ParamStore model = init_model(cfg.model, cfg.seed);
    for (int epoch = 0; epoch < cfg.warmup_epochs; ++epoch) {
        const double lr = poly_lr(t, sgd);
        LabeledCycler cycler(static_cast<int>(labeled.size()), cfg.seed, epoch);
        double acc = 0.0;
        for (int it = 0; it < iters_per_epoch; ++it) {
            Batch batch = make_batch(labeled, cycler.next(cfg.batch_labeled), true);
            const double lv = supervised_step(model, batch, sgd, t);
            check_finite(lv, t);
            acc += lv;
            ++t;
        }
        if (hook) hook(epoch, model, acc / iters_per_epoch, lr);
    }

    ModelsState models;
    models.student = std::move(model);
    if (cfg.method != Method::SupOnly) {
        models.teacher = models.student.clone();
        models.has_teacher = true;
    }
    if (cfg.method == Method::Gta) {
        models.gta = models.student.clone();
        models.has_gta = true;
    }
    return models;
}

IouReport evaluate_model(const ParamStore& params, const std::vector<SegSample>& samples, int classes,
                         int eval_batch) {
    ConfusionMatrix cm(classes);
    std::vector<int> indices;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(eval_batch)) {
        indices.clear();
        const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(eval_batch));
        for (std::size_t i = start; i < end; ++i) indices.push_back(static_cast<int>(i));
        Batch batch = make_batch(samples, indices, true);
        Prediction pred = predict_confidence(forward(params, batch.images));
        cm.add(pred.pred, batch.masks);
    }
    return cm.iou();
}

RunReport train_run(const DatasetSplit& data, const TrainConfig& cfg) {
    ModelsState models;
    return train_run(data, cfg, models);
}

RunReport train_run(const DatasetSplit& data, const TrainConfig& cfg, ModelsState& models_out) {
    validate(cfg);
    if (data.labeled.empty()) throw DataError("train_run: empty labeled set");
    const int nl = static_cast<int>(data.labeled.size());
    const int nu = static_cast<int>(data.unlabeled.size());
    if (cfg.method != Method::SupOnly && nu == 0) {
        throw DataError("train_run: method needs unlabeled data");
    }

    const int iters = nu > 0 ? (nu + cfg.batch_unlabeled - 1) / cfg.batch_unlabeled
                             : (nl + cfg.batch_labeled - 1) / cfg.batch_labeled;
    SgdState sgd{cfg.lr_init, cfg.weight_decay, cfg.epochs * iters, 0.9f};

    RunReport report;
    report.config = cfg;
    const auto names = live_names(cfg.method);

    auto record_epoch = [&](int epoch, double loss_l, double loss_u, double lr, double kept,
                            double mean_w, const std::vector<std::pair<std::string, double>>& mious) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_l = loss_l;
        rec.loss_u = loss_u;
        rec.lr = lr;
        rec.kept_fraction = kept;
        rec.mean_weight = mean_w;
        rec.model_miou = mious;
        report.records.push_back(std::move(rec));
    };

    int t = 0;
    ModelsState models = warmup(
        data.labeled, cfg, sgd, iters, t,
        [&](int epoch, const ParamStore& model, double mean_loss, double lr) {
            const double m = evaluate_model(model, data.heldout, data.classes).miou;
            std::vector<std::pair<std::string, double>> mious;
            for (const auto& n : names) mious.emplace_back(n, m);
            record_epoch(epoch, mean_loss, 0.0, lr, 0.0, 0.0, mious);
        });

    for (int epoch = cfg.warmup_epochs; epoch < cfg.epochs; ++epoch) {
        const double lr = poly_lr(t, sgd);
        LabeledCycler cycler(nl, cfg.seed, epoch);
        std::vector<int> uorder =
            nu > 0 ? permutation(nu, mix_seed(mix_seed(cfg.seed, 0xbac4eULL), static_cast<std::uint64_t>(epoch)))
                   : std::vector<int>{};
        StepMetrics acc;
        for (int it = 0; it < iters; ++it) {
            StepMetrics sm;
            if (cfg.method == Method::SupOnly) {
                Batch batch_l = make_batch(data.labeled, cycler.next(cfg.batch_labeled), true);
                sm = suponly_train_step(batch_l, models, cfg, sgd, t);
            } else {
                Batch batch_l = make_batch(data.labeled, cycler.next(cfg.batch_labeled), true);
                const int lo = it * cfg.batch_unlabeled;
                const int hi = std::min(nu, lo + cfg.batch_unlabeled);
                std::vector<int> uidx(uorder.begin() + lo, uorder.begin() + hi);
                Batch batch_u = make_batch(data.unlabeled, uidx, false);
                sm = cfg.method == Method::MeanTeacher
                         ? mt_train_step(batch_l, batch_u, models, cfg, sgd, t)
                         : gta_train_step(batch_l, batch_u, models, cfg, sgd, t);
            }
            acc.loss_l += sm.loss_l;
            acc.loss_u += sm.loss_u;
            acc.kept_fraction += sm.kept_fraction;
            acc.mean_weight += sm.mean_weight;
            ++t;
        }
        std::vector<std::pair<std::string, double>> mious;
        for (const auto& [name, params] : models.live()) {
            mious.emplace_back(name, evaluate_model(*params, data.heldout, data.classes).miou);
        }
        record_epoch(epoch, acc.loss_l / iters, acc.loss_u / iters, lr, acc.kept_fraction / iters,
                     acc.mean_weight / iters, mious);
    }

    if (!report.records.empty()) {
        for (const auto& [name, m] : report.records.back().model_miou) report.final_miou[name] = m;
    }
    report.final_model_miou =
        models.has_teacher ? report.final_miou["teacher"] : report.final_miou["student"];
    models_out = std::move(models);
    return report;
}

// --- ablation grid -----------------------------------------------------------

namespace {

const char* axis_name(AxisField field) {
    switch (field) {
        case AxisField::Method: return "method";
        case AxisField::EmaScope: return "ema_scope";
        case AxisField::GtaData: return "gta_data";
        case AxisField::StudentData: return "student_data";
        case AxisField::ReweightEnabled: return "reweight_enabled";
        case AxisField::LaplaceEnabled: return "laplace_enabled";
        case AxisField::Alpha: return "alpha";
        case AxisField::WarmupEpochs: return "warmup_epochs";
        case AxisField::PartitionBoundary: return "partition_boundary";
        case AxisField::Tau: return "tau";
        case AxisField::Quantile: return "quantile";
        default: return "mu";
    }
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("expected boolean, got '" + v + "'");
}

float parse_float(const std::string& v) {
    try {
        std::size_t pos = 0;
        const float f = std::stof(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return f;
    } catch (const std::exception&) {
        throw ConfigError("expected number, got '" + v + "'");
    }
}

int parse_int(const std::string& v) {
    try {
        std::size_t pos = 0;
        const int i = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("expected integer, got '" + v + "'");
    }
}

// Axes a method's code path never reads; varying them would duplicate runs.
bool conflicts(Method method, AxisField field) {
    switch (method) {
        case Method::SupOnly:
            switch (field) {
                case AxisField::EmaScope:
                case AxisField::GtaData:
                case AxisField::StudentData:
                case AxisField::ReweightEnabled:
                case AxisField::LaplaceEnabled:
                case AxisField::Alpha:
                case AxisField::Tau:
                case AxisField::Quantile:
                case AxisField::Mu:
                    return true;
                default:
                    return false;
            }
        case Method::MeanTeacher:
            switch (field) {
                case AxisField::EmaScope:
                case AxisField::GtaData:
                case AxisField::StudentData:
                case AxisField::ReweightEnabled:
                case AxisField::LaplaceEnabled:
                case AxisField::Tau:
                    return true;
                default:
                    return false;
            }
        default:
            return field == AxisField::Mu;
    }
}

}  // namespace

Method method_from_string(const std::string& v) {
    if (v == "suponly") return Method::SupOnly;
    if (v == "mean_teacher") return Method::MeanTeacher;
    if (v == "gta") return Method::Gta;
    throw ConfigError("unknown method '" + v + "' (expected suponly|mean_teacher|gta)");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::SupOnly: return "suponly";
        case Method::MeanTeacher: return "mean_teacher";
        default: return "gta";
    }
}

Scope scope_from_string(const std::string& v) {
    if (v == "all") return Scope::All;
    if (v == "extractor") return Scope::Extractor;
    if (v == "predictor") return Scope::Predictor;
    throw ConfigError("unknown scope '" + v + "' (expected all|extractor|predictor)");
}

std::string to_string(Scope s) {
    switch (s) {
        case Scope::All: return "all";
        case Scope::Extractor: return "extractor";
        default: return "predictor";
    }
}

DataSource data_source_from_string(const std::string& v) {
    if (v == "pseudo") return DataSource::Pseudo;
    if (v == "labeled") return DataSource::Labeled;
    if (v == "both") return DataSource::Both;
    throw ConfigError("unknown data source '" + v + "' (expected pseudo|labeled|both)");
}

std::string to_string(DataSource d) {
    switch (d) {
        case DataSource::Pseudo: return "pseudo";
        case DataSource::Labeled: return "labeled";
        default: return "both";
    }
}

AxisField axis_field_from_string(const std::string& name) {
    static const std::pair<const char*, AxisField> kFields[] = {
        {"method", AxisField::Method},
        {"ema_scope", AxisField::EmaScope},
        {"gta_data", AxisField::GtaData},
        {"student_data", AxisField::StudentData},
        {"reweight_enabled", AxisField::ReweightEnabled},
        {"laplace_enabled", AxisField::LaplaceEnabled},
        {"alpha", AxisField::Alpha},
        {"warmup_epochs", AxisField::WarmupEpochs},
        {"partition_boundary", AxisField::PartitionBoundary},
        {"tau", AxisField::Tau},
        {"quantile", AxisField::Quantile},
        {"mu", AxisField::Mu},
    };
    for (const auto& [n, f] : kFields) {
        if (name == n) return f;
    }
    throw ConfigError("unknown ablation axis '" + name + "'");
}

void apply_axis_value(TrainConfig& cfg, AxisField field, const std::string& value) {
    switch (field) {
        case AxisField::Method: cfg.method = method_from_string(value); break;
        case AxisField::EmaScope: cfg.ema_scope = scope_from_string(value); break;
        case AxisField::GtaData: cfg.gta_data = data_source_from_string(value); break;
        case AxisField::StudentData: cfg.student_data = data_source_from_string(value); break;
        case AxisField::ReweightEnabled: cfg.reweight_enabled = parse_bool(value); break;
        case AxisField::LaplaceEnabled: cfg.laplace_enabled = parse_bool(value); break;
        case AxisField::Alpha: cfg.alpha = parse_float(value); break;
        case AxisField::WarmupEpochs: cfg.warmup_epochs = parse_int(value); break;
        case AxisField::PartitionBoundary: cfg.model.partition_boundary = parse_int(value); break;
        case AxisField::Tau: cfg.tau = parse_float(value); break;
        case AxisField::Quantile: cfg.quantile = parse_float(value); break;
        case AxisField::Mu: cfg.mu = parse_float(value); break;
    }
}

std::vector<GridEntry> ablation_grid(const TrainConfig& base, const std::vector<Axis>& axes) {
    if (axes.empty()) throw ConfigError("ablation_grid: no axes given");
    std::vector<GridEntry> combos{{"", base}};
    for (const Axis& axis : axes) {
        if (axis.values.empty()) {
            throw ConfigError(std::string("ablation_grid: axis '") + axis_name(axis.field) +
                              "' has no values");
        }
        std::vector<GridEntry> next;
        for (const GridEntry& combo : combos) {
            for (const std::string& value : axis.values) {
                GridEntry e = combo;
                apply_axis_value(e.config, axis.field, value);
                e.label += (e.label.empty() ? "" : ",") + std::string(axis_name(axis.field)) + "=" + value;
                next.push_back(std::move(e));
            }
        }
        combos = std::move(next);
    }
    for (const GridEntry& combo : combos) {
        for (const Axis& axis : axes) {
            if (axis.field == AxisField::Method) continue;
            if (conflicts(combo.config.method, axis.field)) {
                throw ConfigError(std::string("ablation axis '") + axis_name(axis.field) +
                                  "' conflicts with method=" + to_string(combo.config.method) +
                                  " (that method never reads it)");
            }
        }
        validate(combo.config);
    }
    return combos;
}

}  // namespace gtaseg
