#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gtaseg/optim.hpp"
#include "gtaseg/params.hpp"
#include "gtaseg/pseudolabel.hpp"
#include "gtaseg/segnet.hpp"
#include "gtaseg/synthdata.hpp"

namespace gtaseg {

enum class Method { SupOnly, MeanTeacher, Gta };

enum class DataSource { Pseudo, Labeled, Both };

struct TrainConfig {
    Method method = Method::Gta;
    DataSource gta_data = DataSource::Pseudo;
    DataSource student_data = DataSource::Labeled;  // Both is invalid here
    Scope ema_scope = Scope::Extractor;             // GTA -> student transmission
    float alpha = 0.99f;
    float tau = 1.0f;
    float quantile = 0.2f;
    float mu = 1.0f;
    bool reweight_enabled = true;
    bool laplace_enabled = true;
    float lr_init = 0.05f;
    float weight_decay = 1e-4f;
    int epochs = 30;
    int warmup_epochs = 1;
    int batch_labeled = 8;
    int batch_unlabeled = 8;
    std::uint64_t seed = 0;
    SegNetConfig model;
    // Overrides the per-batch quantile threshold with a constant.
    std::optional<float> fixed_gamma;
};

// Throws ConfigError on out-of-range fields or impossible combinations.
void validate(const TrainConfig& cfg);

// Threshold/re-weighting knobs as the pseudo-label pipeline sees them
// (laplace_enabled=false zeroes the smoothing term).
ReweightConfig reweight_config(const TrainConfig& cfg);

// The models a run owns. SupOnly has only the student; MeanTeacher adds the
// teacher; Gta adds the teaching assistant.
struct ModelsState {
    ParamStore teacher;
    ParamStore gta;
    ParamStore student;
    bool has_teacher = false;
    bool has_gta = false;

    std::vector<std::pair<std::string, const ParamStore*>> live() const;
    // teacher when present, else the student
    const ParamStore& final_model() const { return has_teacher ? teacher : student; }
};

struct Batch {
    Tensor images;                    // [B,3,H,W]
    std::vector<std::int32_t> masks;  // B*H*W (empty for unlabeled)
};

Batch make_batch(const std::vector<SegSample>& samples, const std::vector<int>& indices,
                 bool with_masks);

struct StepMetrics {
    double loss_l = 0.0;        // cross-entropy terms against ground truth
    double loss_u = 0.0;        // cross-entropy terms against pseudo labels
    double kept_fraction = 0.0;
    double mean_weight = 0.0;
    bool gta_grad_skipped = false;
};

// One Algorithm-style iteration of the three-model method:
//   1. teacher -> thresholded, re-weighted pseudo labels on the unlabeled batch
//   2. assistant SGD step on its configured data
//   3. student SGD step on its configured data (from the pre-transmission state)
//   4. extractor-scoped EMA from assistant into student
//   5. full EMA from student into teacher
// The student's gradient step deliberately precedes the transmission so its
// predictor update never depends on the unlabeled batch.
StepMetrics gta_train_step(const Batch& batch_l, const Batch& batch_u, ModelsState& models,
                           const TrainConfig& cfg, const SgdState& sgd, int t);

// Mean-Teacher baseline step: student minimizes L_l + mu * L_u with unit
// pseudo-label weights; teacher is the full-parameter EMA of the student.
StepMetrics mt_train_step(const Batch& batch_l, const Batch& batch_u, ModelsState& models,
                          const TrainConfig& cfg, const SgdState& sgd, int t);

StepMetrics suponly_train_step(const Batch& batch_l, ModelsState& models, const TrainConfig& cfg,
                               const SgdState& sgd, int t);

using WarmupHook = std::function<void(int epoch, const ParamStore& model, double mean_loss, double lr)>;

// Supervised warmup of a single model, then a bit-identical clone into every
// role the method needs. t advances by warmup_epochs * iters_per_epoch.
ModelsState warmup(const std::vector<SegSample>& labeled, const TrainConfig& cfg, const SgdState& sgd,
                   int iters_per_epoch, int& t, const WarmupHook& hook = nullptr);

struct EpochRecord {
    int epoch = 0;
    double loss_l = 0.0;
    double loss_u = 0.0;
    double lr = 0.0;
    double kept_fraction = 0.0;
    double mean_weight = 0.0;
    // (model name, mIoU) for each live model, in gta/student/teacher order
    std::vector<std::pair<std::string, double>> model_miou;
};

struct RunReport {
    TrainConfig config;
    std::vector<EpochRecord> records;
    std::map<std::string, double> final_miou;
    double final_model_miou = 0.0;  // teacher when present, else student
};

// Full schedule: warmup epochs then method steps, one held-out evaluation of
// every live model per epoch. Deterministic given (config, seed).
RunReport train_run(const DatasetSplit& data, const TrainConfig& cfg);

// Returns the run's trained models as well (for checkpointing).
RunReport train_run(const DatasetSplit& data, const TrainConfig& cfg, ModelsState& models_out);

IouReport evaluate_model(const ParamStore& params, const std::vector<SegSample>& samples, int classes,
                         int eval_batch = 25);

// --- ablation grid ----------------------------------------------------------

enum class AxisField {
    Method,
    EmaScope,
    GtaData,
    StudentData,
    ReweightEnabled,
    LaplaceEnabled,
    Alpha,
    WarmupEpochs,
    PartitionBoundary,
    Tau,
    Quantile,
    Mu,
};

struct Axis {
    AxisField field;
    std::vector<std::string> values;  // parsed per field
};

struct GridEntry {
    std::string label;  // "field=value,..." in axis order
    TrainConfig config;
};

// Cross product of axis values over the base config. Combinations that vary a
// field the method never reads are rejected with a ConfigError naming the
// conflict.
std::vector<GridEntry> ablation_grid(const TrainConfig& base, const std::vector<Axis>& axes);

AxisField axis_field_from_string(const std::string& name);
void apply_axis_value(TrainConfig& cfg, AxisField field, const std::string& value);

Method method_from_string(const std::string& v);
Scope scope_from_string(const std::string& v);
DataSource data_source_from_string(const std::string& v);
std::string to_string(Method m);
std::string to_string(Scope s);
std::string to_string(DataSource d);

}  // namespace gtaseg
