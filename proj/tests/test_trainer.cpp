#include <cmath>
#include <doctest.h>

#include "gtaseg/error.hpp"
#include "gtaseg/rng.hpp"
#include "gtaseg/trainer.hpp"
#include "gtaseg/transmission.hpp"

using namespace gtaseg;

namespace {

TrainConfig tiny_config(Method method) {
    TrainConfig cfg;
    cfg.method = method;
    cfg.model.hidden = {4, 6};
    cfg.model.classes = 4;
    cfg.epochs = 2;
    cfg.warmup_epochs = 1;
    cfg.batch_labeled = 4;
    cfg.batch_unlabeled = 4;
    cfg.lr_init = 0.05f;
    cfg.seed = 0;
    return cfg;
}

DatasetSplit tiny_data(std::uint64_t seed = 0) {
    auto samples = generate(seed, 40, 4, 16);
    return split(samples, 8, 8, seed, 4, 16);
}

struct StepFixture {
    DatasetSplit data = tiny_data();
    TrainConfig cfg;
    SgdState sgd;
    ModelsState models;
    Batch batch_l, batch_u, batch_u_alt;

    explicit StepFixture(Method method) : cfg(tiny_config(method)) {
        sgd = SgdState{cfg.lr_init, cfg.weight_decay, 100, 0.9f};
        int t = 0;
        models = warmup(data.labeled, cfg, sgd, 4, t);
        batch_l = make_batch(data.labeled, {0, 1, 2, 3}, true);
        batch_u = make_batch(data.unlabeled, {0, 1, 2, 3}, false);
        batch_u_alt = make_batch(data.unlabeled, {4, 5, 6, 7}, false);
    }
};

}  // namespace

TEST_CASE("validate rejects bad configs") {
    TrainConfig cfg = tiny_config(Method::Gta);
    SUBCASE("alpha") {
        cfg.alpha = 1.5f;
        CHECK_THROWS_AS(validate(cfg), ConfigError);
    }
    SUBCASE("quantile") {
        cfg.quantile = 1.0f;
        CHECK_THROWS_AS(validate(cfg), ConfigError);
    }
    SUBCASE("student_data both") {
        cfg.student_data = DataSource::Both;
        CHECK_THROWS_AS(validate(cfg), ConfigError);
    }
    SUBCASE("warmup longer than the run") {
        cfg.warmup_epochs = 3;
        CHECK_THROWS_AS(validate(cfg), ConfigError);
    }
}

TEST_CASE("warmup produces identical clones") {
    DatasetSplit data = tiny_data();
    TrainConfig cfg = tiny_config(Method::Gta);
    SgdState sgd{cfg.lr_init, cfg.weight_decay, 100, 0.9f};

    SUBCASE("zero warmup epochs leave fresh init") {
        cfg.warmup_epochs = 0;
        int t = 0;
        ModelsState models = warmup(data.labeled, cfg, sgd, 5, t);
        CHECK(t == 0);
        CHECK(bit_identical(models.student, init_model(cfg.model, cfg.seed)));
        CHECK(bit_identical(models.student, models.teacher));
        CHECK(bit_identical(models.student, models.gta));
    }
    SUBCASE("after warmup all three roles are bit-identical") {
        int t = 0;
        ModelsState models = warmup(data.labeled, cfg, sgd, 5, t);
        CHECK(t == 5);
        CHECK(bit_identical(models.student, models.teacher));
        CHECK(bit_identical(models.student, models.gta));
        CHECK_FALSE(bit_identical(models.student, init_model(cfg.model, cfg.seed)));
    }
    SUBCASE("empty labeled set is a data error") {
        int t = 0;
        CHECK_THROWS_AS(warmup({}, cfg, sgd, 5, t), DataError);
    }
    SUBCASE("warmup loss decreases on average over epochs") {
        TrainConfig longer = cfg;
        longer.epochs = 6;
        longer.warmup_epochs = 5;
        double sum_first = 0.0, sum_last = 0.0;
        int trials = 0;
        for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
            longer.seed = seed;
            std::vector<double> losses;
            int t = 0;
            SgdState s{longer.lr_init, longer.weight_decay, 60, 0.9f};
            warmup(data.labeled, longer, s, 10, t,
                   [&](int, const ParamStore&, double mean_loss, double) { losses.push_back(mean_loss); });
            sum_first += losses.front();
            sum_last += losses.back();
            ++trials;
        }
        CHECK(sum_last / trials < sum_first / trials);
    }
}

TEST_CASE("gta step contracts") {
    StepFixture fx(Method::Gta);

    SUBCASE("teacher predictor follows the student by EMA") {
        ParamStore teacher_before = fx.models.teacher.clone();
        gta_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, 0);
        for (std::size_t i = 0; i < fx.models.teacher.size(); ++i) {
            const ParamEntry& e = fx.models.teacher.entries()[i];
            if (e.role != Role::Predictor) continue;
            for (std::int64_t j = 0; j < e.tensor.size(); ++j) {
                const double expect = 0.99 * teacher_before.entries()[i].tensor[j] +
                                      0.01 * fx.models.student.entries()[i].tensor[j];
                CHECK(std::abs(e.tensor[j] - expect) < 1e-6);
            }
        }
    }
    SUBCASE("student predictor is bit-independent of the unlabeled batch") {
        StepFixture fx2(Method::Gta);
        gta_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, 0);
        gta_train_step(fx2.batch_l, fx2.batch_u_alt, fx2.models, fx2.cfg, fx2.sgd, 0);
        CHECK(bit_identical(fx.models.student, fx2.models.student, Scope::Predictor));
        // while the extractor (transmission) and the assistant do differ
        CHECK_FALSE(bit_identical(fx.models.gta, fx2.models.gta));
    }
    SUBCASE("assistant is unaffected by the labeled batch") {
        StepFixture fx2(Method::Gta);
        Batch other_labeled = make_batch(fx2.data.labeled, {4, 5, 6, 7}, true);
        gta_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, 0);
        gta_train_step(other_labeled, fx2.batch_u, fx2.models, fx2.cfg, fx2.sgd, 0);
        CHECK(bit_identical(fx.models.gta, fx2.models.gta));
    }
    SUBCASE("alpha = 1 freezes the teacher") {
        fx.cfg.alpha = 1.0f;
        ParamStore teacher_before = fx.models.teacher.clone();
        for (int t = 0; t < 3; ++t) {
            gta_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, t);
        }
        CHECK(bit_identical(fx.models.teacher, teacher_before));
    }
    SUBCASE("zero kept pixels skip the assistant update but not the rest") {
        fx.cfg.fixed_gamma = 2.0f;  // confidence can never exceed 1
        ParamStore gta_before = fx.models.gta.clone();
        ParamStore student_before = fx.models.student.clone();
        StepMetrics sm = gta_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, 0);
        CHECK(sm.gta_grad_skipped);
        CHECK(sm.loss_u == 0.0);
        CHECK(bit_identical(fx.models.gta, gta_before));
        CHECK_FALSE(bit_identical(fx.models.student, student_before));
    }
}

TEST_CASE("mean-teacher step contracts") {
    SUBCASE("mu = 0 reduces to supervised student plus EMA teacher") {
        StepFixture fx(Method::MeanTeacher);
        StepFixture fx2(Method::MeanTeacher);
        fx.cfg.mu = 0.0f;
        fx2.cfg.mu = 0.0f;
        StepMetrics sm = mt_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, 0);
        CHECK(sm.loss_u == 0.0);
        // same update as a supervised-only step on the student
        suponly_train_step(fx2.batch_l, fx2.models, fx2.cfg, fx2.sgd, 0);
        CHECK(bit_identical(fx.models.student, fx2.models.student));
    }
    SUBCASE("with pseudo supervision both halves of the student move with the unlabeled batch") {
        StepFixture fx(Method::MeanTeacher);
        StepFixture fx2(Method::MeanTeacher);
        mt_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, 0);
        StepMetrics sm = mt_train_step(fx2.batch_l, fx2.batch_u_alt, fx2.models, fx2.cfg, fx2.sgd, 0);
        CHECK(sm.loss_u > 0.0);
        CHECK_FALSE(bit_identical(fx.models.student, fx2.models.student, Scope::Predictor));
        CHECK_FALSE(bit_identical(fx.models.student, fx2.models.student, Scope::Extractor));
    }
    SUBCASE("loss is L_l plus mu L_u") {
        StepFixture fx(Method::MeanTeacher);
        fx.cfg.mu = 1.0f;
        StepMetrics sm = mt_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, 0);
        CHECK(sm.loss_l > 0.0);
        CHECK(sm.loss_u > 0.0);
        CHECK(sm.mean_weight == doctest::Approx(1.0));  // unit weights in this baseline
    }
}

TEST_CASE("train_run") {
    DatasetSplit data = tiny_data();

    SUBCASE("suponly never touches unlabeled data") {
        TrainConfig cfg = tiny_config(Method::SupOnly);
        RunReport rep = train_run(data, cfg);
        REQUIRE(rep.records.size() == 2);
        for (const auto& rec : rep.records) {
            CHECK(rec.loss_u == 0.0);
            CHECK(rec.model_miou.size() == 1);
            CHECK(rec.model_miou[0].first == "student");
        }
    }
    SUBCASE("deterministic for a fixed seed") {
        TrainConfig cfg = tiny_config(Method::Gta);
        RunReport a = train_run(data, cfg);
        RunReport b = train_run(data, cfg);
        REQUIRE(a.records.size() == b.records.size());
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            CHECK(a.records[i].loss_l == b.records[i].loss_l);
            CHECK(a.records[i].loss_u == b.records[i].loss_u);
            for (std::size_t m = 0; m < a.records[i].model_miou.size(); ++m) {
                CHECK(a.records[i].model_miou[m].second == b.records[i].model_miou[m].second);
            }
        }
        TrainConfig other = cfg;
        other.seed = 1;
        RunReport c = train_run(data, other);
        CHECK(a.records.back().loss_l != c.records.back().loss_l);
    }
    SUBCASE("gta run reports three models per epoch") {
        TrainConfig cfg = tiny_config(Method::Gta);
        RunReport rep = train_run(data, cfg);
        for (const auto& rec : rep.records) {
            REQUIRE(rec.model_miou.size() == 3);
            CHECK(rec.model_miou[0].first == "gta");
            CHECK(rec.model_miou[1].first == "student");
            CHECK(rec.model_miou[2].first == "teacher");
            for (const auto& [name, miou] : rec.model_miou) {
                CHECK(miou >= 0.0);
                CHECK(miou <= 1.0);
            }
        }
        CHECK(rep.final_model_miou == rep.final_miou.at("teacher"));
    }
    SUBCASE("all pseudo labels dropped degrades to supervised student plus EMA teacher") {
        TrainConfig cfg = tiny_config(Method::Gta);
        cfg.fixed_gamma = 2.0f;
        ModelsState models;
        RunReport rep = train_run(data, cfg, models);
        // the assistant never left its warmup state
        TrainConfig warm_probe = cfg;
        SgdState sgd{cfg.lr_init, cfg.weight_decay,
                     cfg.epochs * static_cast<int>((data.unlabeled.size() + 3) / 4), 0.9f};
        int t = 0;
        ModelsState warm = warmup(data.labeled, warm_probe, sgd, static_cast<int>((data.unlabeled.size() + 3) / 4), t);
        CHECK(bit_identical(models.gta, warm.gta));
        CHECK(rep.records.back().kept_fraction == 0.0);
        CHECK(rep.records.back().loss_u == 0.0);
    }
    SUBCASE("methods needing unlabeled data reject an empty unlabeled split") {
        auto samples = generate(0, 20, 4, 16);
        DatasetSplit no_unlabeled = split(samples, 12, 8, 0, 4, 16);
        TrainConfig cfg = tiny_config(Method::Gta);
        CHECK_THROWS_AS(train_run(no_unlabeled, cfg), DataError);
    }
}

TEST_CASE("ablation grid") {
    TrainConfig base = tiny_config(Method::Gta);

    SUBCASE("cross product and labels") {
        auto grid = ablation_grid(base, {Axis{AxisField::Alpha, {"0.99", "0.999"}},
                                         Axis{AxisField::WarmupEpochs, {"1", "2"}}});
        REQUIRE(grid.size() == 4);
        CHECK(grid[0].label == "alpha=0.99,warmup_epochs=1");
        CHECK(grid[3].config.alpha == doctest::Approx(0.999f));
        CHECK(grid[3].config.warmup_epochs == 2);
    }
    SUBCASE("method axis alone is fine") {
        auto grid = ablation_grid(base, {Axis{AxisField::Method, {"suponly", "mean_teacher", "gta"}}});
        CHECK(grid.size() == 3);
    }
    SUBCASE("suponly crossed with ema_scope is a config error") {
        CHECK_THROWS_AS(ablation_grid(base, {Axis{AxisField::Method, {"suponly", "gta"}},
                                             Axis{AxisField::EmaScope, {"all", "extractor"}}}),
                        ConfigError);
    }
    SUBCASE("partition boundary axis applies to the model") {
        auto grid = ablation_grid(base, {Axis{AxisField::PartitionBoundary, {"1", "2", "3"}}});
        CHECK(grid[0].config.model.effective_boundary() == 1);
        CHECK(grid[2].config.model.effective_boundary() == 3);
    }
    SUBCASE("bad values are config errors") {
        CHECK_THROWS_AS(ablation_grid(base, {Axis{AxisField::Alpha, {"abc"}}}), ConfigError);
        CHECK_THROWS_AS(ablation_grid(base, {Axis{AxisField::Method, {"nope"}}}), ConfigError);
    }
}

TEST_CASE("ema scope switch changes only the transmission path") {
    // Table-style hook: ALL vs EXTRACTOR run through the same step code.
    StepFixture fx(Method::Gta);
    StepFixture fx2(Method::Gta);
    fx.cfg.ema_scope = Scope::All;
    fx2.cfg.ema_scope = Scope::Extractor;
    gta_train_step(fx.batch_l, fx.batch_u, fx.models, fx.cfg, fx.sgd, 0);
    gta_train_step(fx2.batch_l, fx2.batch_u, fx2.models, fx2.cfg, fx2.sgd, 0);
    // same assistant either way; students differ in the predictor only
    CHECK(bit_identical(fx.models.gta, fx2.models.gta));
    CHECK_FALSE(bit_identical(fx.models.student, fx2.models.student, Scope::Predictor));
    CHECK(bit_identical(fx.models.student, fx2.models.student, Scope::Extractor));
}
