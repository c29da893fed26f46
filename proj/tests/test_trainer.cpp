// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/phantom/phantom.hpp"
#include "mrrecon/train/dataset.hpp"
#include "mrrecon/train/trainer.hpp"

using namespace mrrecon;
using namespace mrrecon::train;

namespace {

std::vector<SubjectRecord> tiny_subjects(int64_t count, int64_t h = 16, int64_t w = 16,
                                         int64_t frames = 2, int64_t coils = 2) {
    std::vector<SubjectRecord> subjects;
    for (int64_t i = 0; i < count; ++i) {
        PhantomSpec spec;
        spec.height = h;
        spec.width = w;
        spec.frames = frames;
        spec.coils = coils;
        spec.seed = 900 + static_cast<uint64_t>(i);
        spec.ellipses = default_ellipses(h, w, ContrastTag::cine, spec.seed);
        subjects.push_back(simulate_subject(spec, ContrastTag::cine));
    }
    return subjects;
}

std::vector<TrainExample> tiny_dataset(const std::vector<SubjectRecord>& subjects,
                                       double acceleration = 2.0, uint64_t seed = 5) {
    std::vector<MaskSpec> grid = {MaskSpec{Trajectory::uniform, acceleration, 6}};
    return build_dataset(subjects, grid, 3, seed);
}

TrainConfig fast_config() {
    TrainConfig tc;
    tc.seed = 11;
    tc.epochs = 1;
    return tc;
}

std::vector<double> snapshot(const ad::ParamStore& store, const std::string& prefix) {
    std::vector<double> vals;
    for (const ad::Param* p : store.all())
        if (p->name.rfind(prefix, 0) == 0)
            for (int64_t i = 0; i < p->value.size(); ++i) vals.push_back(p->value[i]);
    return vals;
}

} // namespace

TEST_CASE("dataset examples carry consistent data", "[dataset]") {
    auto subjects = tiny_subjects(2);
    auto ds = tiny_dataset(subjects);
    REQUIRE(ds.size() == 4);  // 2 subjects x 2 frames
    for (const auto& ex : ds) {
        REQUIRE(ex.masked.data.same_shape(ex.full.data));
        REQUIRE(ex.k_gt_central.shape() == std::vector<int64_t>{2, 16, 16, 2});
        REQUIRE(ex.img_gt.shape() == std::vector<int64_t>{16, 16});
        REQUIRE(ex.volume_max > 0.0);
        REQUIRE(ex.contrast == "cine");
        REQUIRE(ex.acceleration == 2.0);
        // The masked stack really is the full stack with lines removed.
        double removed = 0.0;
        for (int64_t i = 0; i < ex.masked.data.size(); ++i)
            removed += std::abs(ex.full.data[i] - ex.masked.data[i]);
        REQUIRE(removed > 0.0);
    }
    // Same inputs rebuild the same masks and examples.
    auto ds2 = tiny_dataset(subjects);
    for (size_t i = 0; i < ds.size(); ++i)
        for (int64_t j = 0; j < ds[i].masked.data.size(); ++j)
            REQUIRE(ds[i].masked.data[j] == ds2[i].masked.data[j]);
}

TEST_CASE("mixed grids draw different specs across examples", "[dataset]") {
    auto subjects = tiny_subjects(3, 16, 16, 4);
    std::vector<MaskSpec> grid;
    for (double af : {2.0, 3.0, 4.0}) grid.push_back(MaskSpec{Trajectory::uniform, af, 4});
    auto ds = build_dataset(subjects, grid, 3, 7);
    std::set<double> seen;
    for (const auto& ex : ds) seen.insert(ex.acceleration);
    REQUIRE(seen.size() > 1);
}

TEST_CASE("epoch order is a seeded permutation", "[dataset]") {
    auto o1 = epoch_order(10, 3, 0);
    auto o2 = epoch_order(10, 3, 0);
    REQUIRE(o1 == o2);
    std::set<size_t> unique(o1.begin(), o1.end());
    REQUIRE(unique.size() == 10);
    auto other_epoch = epoch_order(10, 3, 1);
    REQUIRE(o1 != other_epoch);
}

TEST_CASE("train step produces finite losses and updates both networks", "[trainer]") {
    auto subjects = tiny_subjects(1);
    auto ds = tiny_dataset(subjects);
    TrainingSession session(ModelConfig::tiny(), fast_config());

    auto gen_before = snapshot(session.store(), "generator.");
    auto eta_before = snapshot(session.store(), "eta.");
    auto disc_before = snapshot(session.store(), "disc.");

    LossReport rep = session.train_step(ds[0]);
    REQUIRE(rep.physical.size() == 2);
    REQUIRE(rep.ssim.size() == 2);
    REQUIRE(rep.disc.size() == 2);
    REQUIRE(std::isfinite(rep.total));
    REQUIRE(rep.total == Catch::Approx(rep.lambda * rep.stepwise_sum + rep.adversarial)
                             .margin(1e-12));
    REQUIRE_FALSE(rep.skipped);

    REQUIRE(snapshot(session.store(), "generator.") != gen_before);
    REQUIRE(snapshot(session.store(), "disc.") != disc_before);
    // eta.1 is live from the first step; eta.0 only becomes so once the
    // first step's output differs from its input.
    auto eta_after = snapshot(session.store(), "eta.");
    REQUIRE(eta_after != eta_before);
    REQUIRE(session.generator_optimizer().steps_taken() == 1);
    REQUIRE(session.discriminator_optimizer().steps_taken() == 2);
}

TEST_CASE("training is bit-exact across identical runs", "[trainer]") {
    auto subjects = tiny_subjects(1);
    auto ds = tiny_dataset(subjects);

    auto run = [&] {
        TrainConfig tc = fast_config();
        tc.max_steps_per_epoch = 3;
        TrainingSession session(ModelConfig::tiny(), tc);
        auto records = session.run_epoch(ds, 0);
        std::vector<double> stream;
        for (const auto& r : records) {
            stream.push_back(r.losses.total);
            stream.push_back(r.losses.adversarial);
            stream.push_back(r.grad_norm);
            for (double v : r.losses.physical) stream.push_back(v);
            for (double v : r.losses.ssim) stream.push_back(v);
            for (double v : r.losses.disc) stream.push_back(v);
            for (double v : r.etas) stream.push_back(v);
        }
        for (double v : snapshot(session.store(), "generator.")) stream.push_back(v);
        for (double v : snapshot(session.store(), "disc.")) stream.push_back(v);
        return stream;
    };
    auto s1 = run();
    auto s2 = run();
    REQUIRE(s1.size() == s2.size());
    for (size_t i = 0; i < s1.size(); ++i) REQUIRE(s1[i] == s2[i]);
}

TEST_CASE("generator optimizer cannot move discriminator weights", "[trainer]") {
    // Two sessions differing only in lambda: the generator update changes,
    // the discriminator update sequence within the first step does not.
    auto subjects = tiny_subjects(1);
    auto ds = tiny_dataset(subjects);

    auto disc_after_one_step = [&](double lambda) {
        TrainConfig tc = fast_config();
        tc.lambda = lambda;
        TrainingSession session(ModelConfig::tiny(), tc);
        session.train_step(ds[0]);
        return std::pair(snapshot(session.store(), "disc."),
                         snapshot(session.store(), "generator."));
    };
    auto [disc1, gen1] = disc_after_one_step(1.0);
    auto [disc2, gen2] = disc_after_one_step(2.0);
    REQUIRE(disc1 == disc2);
    REQUIRE(gen1 != gen2);
}

TEST_CASE("non-finite data aborts with the offending term named", "[trainer]") {
    auto subjects = tiny_subjects(1);
    auto ds = tiny_dataset(subjects);
    TrainingSession session(ModelConfig::tiny(), fast_config());
    TrainExample bad = ds[0];
    bad.k_gt_central[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        session.train_step(bad);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        REQUIRE(std::string(e.what()).find("physical") != std::string::npos);
    }
}

TEST_CASE("divergence guard skips the generator update on spikes", "[trainer]") {
    auto subjects = tiny_subjects(1);
    auto ds = tiny_dataset(subjects);
    TrainingSession session(ModelConfig::tiny(), fast_config());
    session.train_step(ds[0]);  // establishes the moving average

    // Blowing up the target makes the losses explode without non-finites.
    TrainExample spike = ds[0];
    for (int64_t i = 0; i < spike.k_gt_central.size(); ++i) spike.k_gt_central[i] *= 1e4;
    for (int64_t i = 0; i < spike.img_gt.size(); ++i) spike.img_gt[i] *= 1e4;

    auto gen_before = snapshot(session.store(), "generator.");
    LossReport rep = session.train_step(spike);
    REQUIRE(rep.skipped);
    REQUIRE(snapshot(session.store(), "generator.") == gen_before);

    // With the guard off the same spike is applied.
    TrainConfig tc = fast_config();
    tc.divergence_guard = false;
    TrainingSession unguarded(ModelConfig::tiny(), tc);
    unguarded.train_step(ds[0]);
    auto before = snapshot(unguarded.store(), "generator.");
    LossReport rep2 = unguarded.train_step(spike);
    REQUIRE_FALSE(rep2.skipped);
    REQUIRE(snapshot(unguarded.store(), "generator.") != before);
}

TEST_CASE("learning rate steps down after the decay boundary", "[trainer]") {
    auto subjects = tiny_subjects(1);
    auto ds = tiny_dataset(subjects);
    TrainConfig tc = fast_config();
    tc.epochs = 13;
    tc.max_steps_per_epoch = 0;  // schedule bookkeeping only
    TrainingSession session(ModelConfig::tiny(), tc);
    session.run_training(ds);
    REQUIRE(session.generator_optimizer().lr() == 0.002 * 0.1);
    REQUIRE(session.discriminator_optimizer().lr() == 0.002 * 0.1);

    StepLR sched(0.002, 11, 0.1);
    REQUIRE(sched.lr_for_epoch(10) == 0.002);
    REQUIRE(sched.lr_for_epoch(11) == 0.002 * 0.1);
}

TEST_CASE("checkpoint round trip reproduces evaluation metrics exactly", "[trainer]") {
    auto subjects = tiny_subjects(1);
    auto ds = tiny_dataset(subjects);
    TrainConfig tc = fast_config();
    tc.max_steps_per_epoch = 2;
    TrainingSession session(ModelConfig::tiny(), tc);
    session.run_epoch(ds, 0);
    MetricsReport before = session.evaluate(ds);

    auto path = std::filesystem::temp_directory_path() / "trainer_roundtrip.mrck";
    session.save(path.string(), {{"stage", "unit"}});

    TrainingSession restored(ModelConfig::tiny(), fast_config());
    restored.load(path.string());
    MetricsReport after = restored.evaluate(ds);
    REQUIRE(before.examples.size() == after.examples.size());
    for (size_t i = 0; i < before.examples.size(); ++i) {
        REQUIRE(before.examples[i].ssim == after.examples[i].ssim);
        REQUIRE(before.examples[i].psnr == after.examples[i].psnr);
        REQUIRE(before.examples[i].nmse == after.examples[i].nmse);
    }
    std::filesystem::remove(path);
}

TEST_CASE("transfer between incompatible models names the tensors", "[trainer]") {
    TrainingSession small(ModelConfig::tiny(), fast_config());
    auto path = std::filesystem::temp_directory_path() / "trainer_mismatch.mrck";
    small.save(path.string());

    ModelConfig bigger = ModelConfig::tiny();
    bigger.generator.apunet.base_channels = 16;
    TrainingSession other(bigger, fast_config());
    try {
        other.load(path.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("shape mismatch") != std::string::npos);
        REQUIRE(msg.find("generator.") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("zeroed generator on a full mask evaluates as the identity", "[trainer]") {
    auto subjects = tiny_subjects(1);
    std::vector<MaskSpec> grid = {MaskSpec{Trajectory::uniform, 1.0, 16}};
    auto ds = build_dataset(subjects, grid, 3, 5);
    TrainingSession session(ModelConfig::tiny(), fast_config());
    for (ad::Param* p : session.store().with_prefix("generator."))
        std::fill(p->value.data(), p->value.data() + p->value.size(), 0.0);
    for (ad::Param* p : session.store().with_prefix("sme."))
        std::fill(p->value.data(), p->value.data() + p->value.size(), 0.0);

    MetricsReport rep = session.evaluate(ds);
    for (const auto& m : rep.examples) {
        REQUIRE(m.nmse < 1e-20);
        REQUIRE(m.ssim == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(m.psnr > 200.0);
    }
}

TEST_CASE("zero-filled baseline is strictly worse under acceleration", "[trainer]") {
    auto subjects = tiny_subjects(1, 32, 32, 2, 2);
    std::vector<MaskSpec> grid = {MaskSpec{Trajectory::uniform, 4.0, 8}};
    auto ds = build_dataset(subjects, grid, 3, 5);
    TrainingSession session(ModelConfig::tiny(), fast_config());
    MetricsReport rep = session.evaluate(ds);
    for (const auto& m : rep.examples) {
        REQUIRE(m.baseline_nmse > 0.0);
        REQUIRE(m.baseline_ssim < 1.0);
        REQUIRE(std::isfinite(m.baseline_psnr));
    }
    REQUIRE_FALSE(rep.examples.empty());
    REQUIRE(rep.by_contrast().count("cine") == 1);
    REQUIRE(rep.by_acceleration().count("af4") == 1);
}

TEST_CASE("discriminator-only steps leave the generator untouched", "[trainer]") {
    auto subjects = tiny_subjects(1, 32, 32, 2, 2);
    std::vector<MaskSpec> grid = {MaskSpec{Trajectory::uniform, 4.0, 8}};
    auto ds = build_dataset(subjects, grid, 3, 5);
    TrainingSession session(ModelConfig::tiny(), fast_config());
    auto gen_before = snapshot(session.store(), "generator.");
    auto sme_before = snapshot(session.store(), "sme.");

    double first = 0.0, last = 0.0;
    for (int i = 0; i < 40; ++i) {
        const double loss = session.discriminator_step(ds[static_cast<size_t>(i) % ds.size()]);
        if (i == 0) first = loss;
        last = loss;
    }
    REQUIRE(last < first);  // it learns to tell the pairs apart
    REQUIRE(snapshot(session.store(), "generator.") == gen_before);
    REQUIRE(snapshot(session.store(), "sme.") == sme_before);
    REQUIRE(session.generator_optimizer().steps_taken() == 0);
}

TEST_CASE("curriculum emits one checkpoint per stage and chains them", "[trainer][curriculum]") {
    auto subjects = tiny_subjects(1);
    TrainConfig tc = fast_config();
    tc.max_steps_per_epoch = 1;

    std::vector<CurriculumStage> schedule;
    for (double af : {2.0, 3.0}) {
        CurriculumStage st;
        st.name = "af" + std::to_string(static_cast<int>(af));
        st.grid = {MaskSpec{Trajectory::uniform, af, 6}};
        st.epochs = 1;
        schedule.push_back(st);
    }

    auto out_dir = std::filesystem::temp_directory_path() / "curriculum_unit";
    std::filesystem::create_directories(out_dir);
    auto results = run_curriculum(subjects, schedule, ModelConfig::tiny(), tc, out_dir.string());
    REQUIRE(results.size() == 2);
    for (const auto& res : results) {
        REQUIRE(std::filesystem::exists(res.checkpoint_path));
        REQUIRE_FALSE(res.records.empty());
        REQUIRE_FALSE(res.metrics.examples.empty());
        Checkpoint ck = load_checkpoint(res.checkpoint_path);
        REQUIRE(ck.metadata.at("format") == "model-checkpoint");
        REQUIRE(ck.metadata.count("stage") == 1);
    }
    std::filesystem::remove_all(out_dir);
}

TEST_CASE("task schedules cover the documented acceleration ladders", "[trainer][curriculum]") {
    auto t1 = task1_schedule(12, 16);
    REQUIRE(t1.size() == 3);
    REQUIRE(t1[0].grid.size() == 1);
    REQUIRE(t1[0].grid[0].acceleration == 4.0);
    REQUIRE(t1[1].grid[0].acceleration == 8.0);
    REQUIRE(t1[2].grid[0].acceleration == 10.0);

    auto t2 = task2_schedule(12, 16);
    REQUIRE(t2.size() == 1);
    REQUIRE(t2[0].grid.size() == 21);  // 3 trajectories x 7 accelerations
    double lo = 1e9, hi = 0.0;
    for (const auto& ms : t2[0].grid) {
        lo = std::min(lo, ms.acceleration);
        hi = std::max(hi, ms.acceleration);
    }
    REQUIRE(lo == 4.0);
    REQUIRE(hi == 24.0);
}
