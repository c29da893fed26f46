// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mrrecon/autodiff/tape.hpp"
#include "mrrecon/core/errors.hpp"
#include "mrrecon/nn/discriminator.hpp"
#include "mrrecon/recon/generator.hpp"
#include "mrrecon/train/checkpoint.hpp"
#include "mrrecon/train/dataset.hpp"
#include "mrrecon/train/losses.hpp"
#include "mrrecon/train/metrics.hpp"
#include "mrrecon/train/optimizer.hpp"

// Adversarial training loop. One training step runs the unrolled generator,
// scores every reconstructor step against the fully sampled target, updates
// the discriminator once per step on (target, current-step) pairs with the
// candidate detached, then takes a single clipped generator update through
// the post-update discriminator. Real patches carry label 0 and fakes
// label 1; the generator's adversarial term pushes fakes toward label 0.

namespace mrrecon::train {

using nn::DiscriminatorConfig;
using nn::PatchDiscriminator;
using recon::Generator;
using recon::GeneratorConfig;

struct ModelConfig {
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;

    static ModelConfig tiny(int64_t adjacent = 3, int64_t steps = 2) {
        ModelConfig mc;
        mc.generator = GeneratorConfig::tiny(adjacent, steps);
        mc.discriminator = DiscriminatorConfig::tiny();
        return mc;
    }
};

struct TrainConfig {
    AdamWConfig optimizer;            // lr 0.002, weight decay 0.1
    double grad_clip = 0.1;
    int64_t lr_step_size = 11;        // epochs per decay step
    double lr_gamma = 0.1;
    int64_t epochs = 12;
    int64_t batch = 1;
    uint64_t seed = 0;
    double lambda = 1.0;              // stepwise loss adjustment coefficient
    bool wrap_aware_phase = false;
    bool divergence_guard = true;     // skip generator steps on loss spikes
    double divergence_factor = 10.0;
    int64_t max_steps_per_epoch = -1; // -1 means the whole dataset

    void validate() const {
        require(optimizer.lr > 0.0, "TrainConfig: lr must be positive");
        require(grad_clip > 0.0, "TrainConfig: grad_clip must be positive");
        require(lr_step_size >= 1, "TrainConfig: lr_step_size must be >= 1");
        require(lr_gamma > 0.0, "TrainConfig: lr_gamma must be positive");
        require(epochs >= 1, "TrainConfig: epochs must be >= 1");
        require(batch >= 1, "TrainConfig: batch must be >= 1");
        require(lambda >= 0.0, "TrainConfig: negative lambda");
        require(divergence_factor > 1.0, "TrainConfig: divergence_factor must exceed 1");
    }
};

/// One log line's worth of training state.
struct TrainRecord {
    int64_t epoch = 0;
    int64_t step = 0;   // global step index
    LossReport losses;
    double lr = 0.0;
    double grad_norm = 0.0;           // generator group, before clipping
    std::vector<double> etas;
};

class TrainingSession {
public:
    TrainingSession(ModelConfig mc, TrainConfig tc)
        : model_cfg_(mc),
          cfg_(tc),
          store_(tc.seed),
          generator_(store_, mc.generator),
          discriminator_(store_, "disc.", with_two_inputs(mc.discriminator)) {
        cfg_.validate();
        require(mc.generator.num_reconstructors >= 1,
                "TrainingSession: training needs at least one reconstructor step");
        gen_params_ = store_.with_prefix("generator.");
        for (Param* p : store_.with_prefix("sme.")) gen_params_.push_back(p);
        for (Param* p : store_.with_prefix("eta.")) gen_params_.push_back(p);
        disc_params_ = store_.with_prefix("disc.");
        gen_opt_ = std::make_unique<AdamW>(gen_params_, cfg_.optimizer);
        disc_opt_ = std::make_unique<AdamW>(disc_params_, cfg_.optimizer);
    }

    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    Generator& generator() { return generator_; }
    PatchDiscriminator& discriminator() { return discriminator_; }
    AdamW& generator_optimizer() { return *gen_opt_; }
    AdamW& discriminator_optimizer() { return *disc_opt_; }
    const ModelConfig& model_config() const { return model_cfg_; }
    const TrainConfig& config() const { return cfg_; }

    /// One Algorithm-and-optimizer step on a single example.
    LossReport train_step(const TrainExample& ex) {
        LossReport rep;
        rep.lambda = cfg_.lambda;
        const double inv_max = 1.0 / ex.volume_max;
        Tensor real_img = scaled(ex.img_gt, inv_max);
        Tensor zf_img = scaled(ex.img_zf, inv_max);

        Tape t;
        recon::GeneratorForward fwd = generator_.forward(t, ex.masked, ex.mask);
        std::vector<Var> step_losses;
        step_losses.reserve(fwd.steps.size());
        for (size_t s = 0; s < fwd.steps.size(); ++s) {
            Var phys = physical_loss(t, fwd.steps[s].k_central, ex.k_gt_central,
                                     cfg_.wrap_aware_phase);
            Var ssim = ssim_loss(t, fwd.steps[s].image, ex.img_gt);
            rep.physical.push_back(t.val(phys)[0]);
            rep.ssim.push_back(t.val(ssim)[0]);
            check_finite(rep.physical.back(), "physical", s);
            check_finite(rep.ssim.back(), "ssim", s);
            step_losses.push_back(ad::add(t, phys, ssim));
            rep.stepwise_sum += rep.physical.back() + rep.ssim.back();

            // Discriminator update on this step's candidate, detached.
            Tensor fake_img = scaled(t.val(fwd.steps[s].image), inv_max);
            rep.disc.push_back(update_discriminator(real_img, fake_img, zf_img, s));
        }

        // Final candidate through the updated discriminator; gradients flow
        // into the generator only (its own optimizer never sees disc params).
        Var candidate = ad::mul_scalar(t, fwd.steps.back().image, inv_max);
        Var d_in = make_conditioned_input(t, candidate, t.constant(zf_img));
        Var adv = generator_adversarial_loss(t, discriminator_.forward(t, d_in));
        rep.adversarial = t.val(adv)[0];
        check_finite(rep.adversarial, "adversarial", fwd.steps.size() - 1);

        Var total = generator_loss(t, step_losses, adv, cfg_.lambda);
        rep.total = t.val(total)[0];
        check_finite(rep.total, "total", fwd.steps.size() - 1);

        if (cfg_.divergence_guard && ma_ready_ && rep.total > cfg_.divergence_factor * ma_) {
            rep.skipped = true;
            return rep;
        }

        for (Param* p : gen_params_) p->zero_grad();
        for (Param* p : disc_params_) p->zero_grad();
        t.backward(total);
        last_grad_norm_ = clip_global_norm(gen_params_, cfg_.grad_clip);
        gen_opt_->step();
        // The tape backward also filled discriminator grads through the
        // adversarial term; they must not leak into its next update.
        for (Param* p : disc_params_) p->zero_grad();

        ma_ = ma_ready_ ? 0.9 * ma_ + 0.1 * rep.total : rep.total;
        ma_ready_ = true;
        return rep;
    }

    /// One pass over the dataset in the epoch's seeded order. The learning
    /// rate for both optimizers follows the step schedule.
    std::vector<TrainRecord> run_epoch(const std::vector<TrainExample>& dataset, int64_t epoch) {
        require(!dataset.empty(), "run_epoch: empty dataset");
        StepLR sched(cfg_.optimizer.lr, cfg_.lr_step_size, cfg_.lr_gamma);
        sched.apply(*gen_opt_, epoch);
        sched.apply(*disc_opt_, epoch);
        ma_ready_ = false;  // the divergence guard baselines each epoch

        std::vector<TrainRecord> records;
        const auto order = epoch_order(dataset.size(), cfg_.seed, epoch);
        int64_t taken = 0;
        for (size_t pos : order) {
            if (cfg_.max_steps_per_epoch >= 0 && taken >= cfg_.max_steps_per_epoch) break;
            TrainRecord r;
            r.epoch = epoch;
            r.step = global_step_++;
            r.losses = train_step(dataset[pos]);
            r.lr = gen_opt_->lr();
            r.grad_norm = r.losses.skipped ? 0.0 : last_grad_norm_;
            for (int64_t s = 0; s < model_cfg_.generator.num_reconstructors; ++s)
                r.etas.push_back(generator_.eta(s));
            records.push_back(std::move(r));
            ++taken;
        }
        return records;
    }

    std::vector<TrainRecord> run_training(const std::vector<TrainExample>& dataset) {
        std::vector<TrainRecord> all;
        for (int64_t e = 0; e < cfg_.epochs; ++e) {
            auto recs = run_epoch(dataset, e);
            all.insert(all.end(), recs.begin(), recs.end());
        }
        return all;
    }

    /// Scores every example against its ground truth and the zero-filled
    /// baseline, images normalized by the subject's volume maximum.
    MetricsReport evaluate(const std::vector<TrainExample>& dataset) {
        MetricsReport report;
        for (const TrainExample& ex : dataset) {
            Tape t;
            recon::GeneratorForward fwd = generator_.forward(t, ex.masked, ex.mask);
            const Tensor& recon_img =
                fwd.steps.empty() ? ex.img_zf : t.val(fwd.steps.back().image);
            const double inv_max = 1.0 / ex.volume_max;
            Tensor gt = scaled(ex.img_gt, inv_max);
            Tensor pred = scaled(recon_img, inv_max);
            Tensor zf = scaled(ex.img_zf, inv_max);

            ExampleMetrics m;
            m.contrast = ex.contrast;
            m.acceleration = ex.acceleration;
            m.ssim = metric_ssim(pred, gt);
            m.psnr = metric_psnr(pred, gt);
            m.nmse = metric_nmse(pred, gt);
            m.baseline_ssim = metric_ssim(zf, gt);
            m.baseline_psnr = metric_psnr(zf, gt);
            m.baseline_nmse = metric_nmse(zf, gt);
            report.examples.push_back(std::move(m));
        }
        report.finalize();
        return report;
    }

    /// Discriminator-only update: real target versus the zero-filled
    /// baseline as the fake candidate. Generator parameters are not touched.
    double discriminator_step(const TrainExample& ex) {
        const double inv_max = 1.0 / ex.volume_max;
        return update_discriminator(scaled(ex.img_gt, inv_max), scaled(ex.img_zf, inv_max),
                                    scaled(ex.img_zf, inv_max), 0);
    }

    void save(const std::string& path,
              std::map<std::string, std::string> metadata = {}) const {
        metadata.emplace("format", "model-checkpoint");
        save_checkpoint(path, store_, metadata);
    }

    /// Strict weight transfer; optimizer moments restart from zero.
    void load(const std::string& path) { load_into(path, store_); }

    double last_grad_norm() const { return last_grad_norm_; }

private:
    static DiscriminatorConfig with_two_inputs(DiscriminatorConfig dc) {
        dc.in_channels = 2;  // candidate plus zero-filled conditioning
        return dc;
    }

    static Tensor scaled(const Tensor& t, double factor) {
        Tensor out = t;
        for (int64_t i = 0; i < out.size(); ++i) out[i] *= factor;
        return out;
    }

    static void check_finite(double v, const char* term, size_t step) {
        if (!std::isfinite(v))
            throw NumericalError(std::string("non-finite ") + term + " loss at step " +
                                 std::to_string(step));
    }

    double update_discriminator(const Tensor& real_img, const Tensor& fake_img,
                                const Tensor& zf_img, size_t step) {
        Tape t;
        Var real_in = make_conditioned_input(t, t.constant(real_img), t.constant(zf_img));
        Var fake_in = make_conditioned_input(t, t.constant(fake_img), t.constant(zf_img));
        Var loss = discriminator_loss(t, discriminator_.forward(t, real_in),
                                      discriminator_.forward(t, fake_in));
        const double value = t.val(loss)[0];
        check_finite(value, "discriminator", step);
        for (Param* p : disc_params_) p->zero_grad();
        t.backward(loss);
        disc_opt_->step();
        return value;
    }

    ModelConfig model_cfg_;
    TrainConfig cfg_;
    ParamStore store_;
    Generator generator_;
    PatchDiscriminator discriminator_;
    std::vector<Param*> gen_params_, disc_params_;
    std::unique_ptr<AdamW> gen_opt_, disc_opt_;
    int64_t global_step_ = 0;
    double ma_ = 0.0;
    bool ma_ready_ = false;
    double last_grad_norm_ = 0.0;
};

// Curriculum: ordered stages over mask grids. Every stage after the first
// starts from the previous stage's checkpoint, discriminator included.

struct CurriculumStage {
    std::string name;
    std::vector<MaskSpec> grid;
    int64_t epochs = 12;
};

/// Three single-AF uniform-mask stages at accelerations 4, 8, 10.
inline std::vector<CurriculumStage> task1_schedule(int64_t epochs, int64_t acs_lines) {
    std::vector<CurriculumStage> stages;
    for (double af : {4.0, 8.0, 10.0}) {
        CurriculumStage st;
        st.name = "af" + std::to_string(static_cast<int>(af));
        st.grid = {MaskSpec{Trajectory::uniform, af, acs_lines}};
        st.epochs = epochs;
        stages.push_back(std::move(st));
    }
    return stages;
}

/// One mixed stage over all trajectories and accelerations 4 through 24.
inline std::vector<CurriculumStage> task2_schedule(int64_t epochs, int64_t acs_lines) {
    CurriculumStage st;
    st.name = "mixed";
    st.epochs = epochs;
    for (Trajectory tr : {Trajectory::uniform, Trajectory::gaussian, Trajectory::pseudo_radial})
        for (double af : {4.0, 8.0, 10.0, 12.0, 16.0, 20.0, 24.0})
            st.grid.push_back(MaskSpec{tr, af, acs_lines});
    return {st};
}

struct StageResult {
    std::string name;
    std::string checkpoint_path;
    std::vector<TrainRecord> records;
    MetricsReport metrics;
};

/// Runs the stages in order, rebuilding the session per stage and seeding it
/// from the previous stage's checkpoint. Returns one result per stage.
inline std::vector<StageResult> run_curriculum(const std::vector<SubjectRecord>& subjects,
                                               const std::vector<CurriculumStage>& schedule,
                                               const ModelConfig& mc, TrainConfig tc,
                                               const std::string& out_dir) {
    require(!schedule.empty(), "run_curriculum: empty schedule");
    std::vector<StageResult> results;
    std::string previous;
    for (size_t i = 0; i < schedule.size(); ++i) {
        const CurriculumStage& stage = schedule[i];
        TrainConfig stage_cfg = tc;
        stage_cfg.epochs = stage.epochs;
        TrainingSession session(mc, stage_cfg);
        if (!previous.empty()) session.load(previous);

        std::vector<TrainExample> dataset =
            build_dataset(subjects, stage.grid, mc.generator.adjacent,
                          mix_seed(tc.seed, static_cast<uint64_t>(i)));

        StageResult res;
        res.name = stage.name;
        res.records = session.run_training(dataset);
        res.metrics = session.evaluate(dataset);
        res.checkpoint_path = out_dir + "/stage_" + std::to_string(i) + "_" + stage.name + ".mrck";
        session.save(res.checkpoint_path,
                     {{"stage", stage.name}, {"stage_index", std::to_string(i)}});
        previous = res.checkpoint_path;
        results.push_back(std::move(res));
    }
    return results;
}

} // namespace mrrecon::train
