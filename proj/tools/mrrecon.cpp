// SPDX-License-Identifier: Apache-2.0
//
// Single-binary command line for the reconstruction framework.
//
//   simulate     synthesize multi-coil phantom subjects to a dataset directory
//   mask         emit one sampling mask as image + raw array + sidecar
//   train        run the staged curriculum, write checkpoints and logs
//   eval         score a checkpoint over a dataset, print metric tables
//   reconstruct  write ground-truth / zero-filled / reconstructed triptychs
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure. Relative --out paths are resolved under $MRRECON_OUTPUT_ROOT when
// that variable is set. Every command validates its full configuration before
// touching the filesystem, and all outputs are deterministic under fixed
// seeds (no timestamps, single-threaded math).

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/io/checksum.hpp"
#include "mrrecon/io/experiment_config.hpp"
#include "mrrecon/io/image_io.hpp"
#include "mrrecon/phantom/phantom.hpp"
#include "mrrecon/phantom/subject_io.hpp"
#include "mrrecon/train/dataset.hpp"
#include "mrrecon/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mrrecon;

namespace {

fs::path resolve_out(const std::string& out) {
    fs::path p(out);
    if (p.is_relative())
        if (const char* root = std::getenv("MRRECON_OUTPUT_ROOT"))
            if (*root != '\0') return fs::path(root) / p;
    return p;
}

void prepare_outdir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir))
            throw DataError("output path exists and is not a directory: " + dir.string());
        if (!fs::is_empty(dir) && !force)
            throw DataError("output directory not empty: " + dir.string() +
                            " (pass --force to write into it)");
    }
    fs::create_directories(dir);
}

std::pair<int64_t, int64_t> parse_size(const std::string& s) {
    const auto sep = s.find('x');
    if (sep == std::string::npos || sep == 0 || sep + 1 >= s.size())
        throw ConfigError("--size expects HxW (e.g. 64x64), got: " + s);
    try {
        size_t hl = 0, wl = 0;
        const int64_t h = std::stoll(s.substr(0, sep), &hl);
        const int64_t w = std::stoll(s.substr(sep + 1), &wl);
        if (hl != sep || wl != s.size() - sep - 1) throw std::invalid_argument(s);
        return {h, w};
    } catch (const std::exception&) {
        throw ConfigError("--size expects HxW (e.g. 64x64), got: " + s);
    }
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path.string());
    os << j.dump(2) << "\n";
    if (!os) throw DataError("short write: " + path.string());
}

std::vector<SubjectRecord> load_subjects(const std::string& data_dir) {
    const fs::path dir(data_dir);
    if (!fs::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".h5") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no subject files (*.h5) in " + dir.string());
    std::vector<SubjectRecord> subjects;
    subjects.reserve(files.size());
    for (const auto& f : files) subjects.push_back(read_subject(f.string()));
    return subjects;
}

// Flags-over-file precedence: the config file (when given) fills cfg first,
// then every flag the user actually passed overwrites its field.
struct TrainFlags {
    std::string config_path, data_dir, out_dir, trajectory;
    uint64_t seed = 0;
    int64_t task = 1, epochs = 12, max_steps = -1, cascades = 12, adjacent = 5;
    double lr = 0.002, lambda = 1.0, acceleration = 4.0;
    int64_t acs = 16;
    bool force = false;

    void attach(CLI::App* cmd, bool with_training_knobs) {
        cmd->add_option("--config", config_path, "Experiment config file (JSON)");
        cmd->add_option("--data", data_dir, "Dataset directory of subject .h5 files")
            ->required();
        cmd->add_option("--seed", seed, "Experiment seed");
        cmd->add_option("--trajectory", trajectory, "Sampling trajectory");
        cmd->add_option("--acceleration", acceleration, "Acceleration factor");
        cmd->add_option("--acs", acs, "Fully sampled calibration lines");
        cmd->add_option("--cascades", cascades, "Unrolled reconstructor count");
        cmd->add_option("--adjacent", adjacent, "Adjacent frame stack height (odd)");
        if (with_training_knobs) {
            cmd->add_option("--out", out_dir, "Output directory")->required();
            cmd->add_option("--task", task,
                            "0: one stage on the sampling spec; 1: AF 4/8/10 stages; 2: mixed");
            cmd->add_option("--epochs", epochs, "Epochs per stage");
            cmd->add_option("--max-steps", max_steps, "Cap on optimizer steps per epoch");
            cmd->add_option("--lr", lr, "Base learning rate");
            cmd->add_option("--lambda", lambda, "Stepwise loss weight");
            cmd->add_flag("--force", force, "Write into a non-empty output directory");
        }
    }

    io::ExperimentConfig resolve(const CLI::App* cmd) const {
        auto passed = [cmd](const std::string& name) {
            const CLI::Option* opt = cmd->get_option_no_throw(name);
            return opt != nullptr && opt->count() > 0;
        };
        io::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = io::load_experiment_config(config_path);
        if (passed("--seed")) cfg.seed = seed;
        if (passed("--task")) cfg.task = task;
        if (passed("--trajectory")) cfg.sampling.trajectory = trajectory;
        if (passed("--acceleration")) cfg.sampling.acceleration = acceleration;
        if (passed("--acs")) cfg.sampling.acs_lines = acs;
        if (passed("--epochs")) cfg.train.epochs = epochs;
        if (passed("--max-steps")) cfg.train.max_steps_per_epoch = max_steps;
        if (passed("--cascades")) cfg.model.generator.num_reconstructors = cascades;
        if (passed("--adjacent")) cfg.model.generator.adjacent = adjacent;
        if (passed("--lr")) cfg.train.optimizer.lr = lr;
        if (passed("--lambda")) cfg.train.lambda = lambda;
        cfg.train.seed = cfg.seed;
        cfg.validate();
        return cfg;
    }
};

std::vector<train::CurriculumStage> schedule_for(const io::ExperimentConfig& cfg) {
    if (cfg.task == 1) return train::task1_schedule(cfg.train.epochs, cfg.sampling.acs_lines);
    if (cfg.task == 2) return train::task2_schedule(cfg.train.epochs, cfg.sampling.acs_lines);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_af%g", cfg.sampling.trajectory.c_str(),
                  cfg.sampling.acceleration);
    train::CurriculumStage st;
    st.name = buf;
    st.grid = {train::MaskSpec{cfg.sampling.trajectory_enum(), cfg.sampling.acceleration,
                               cfg.sampling.acs_lines}};
    st.epochs = cfg.train.epochs;
    return {st};
}

json metrics_to_json(const train::MetricsReport& report) {
    auto agg = [](const train::MetricAggregate& a) {
        return json{{"mean", a.mean}, {"stddev", a.stddev}};
    };
    auto summarize = [&](const train::MetricsReport& r) {
        return json{{"count", r.examples.size()},
                    {"nmse", agg(r.nmse)},
                    {"psnr", agg(r.psnr)},
                    {"ssim", agg(r.ssim)},
                    {"baseline_nmse", agg(r.baseline_nmse)},
                    {"baseline_psnr", agg(r.baseline_psnr)},
                    {"baseline_ssim", agg(r.baseline_ssim)}};
    };
    json examples = json::array();
    for (const auto& e : report.examples)
        examples.push_back({{"contrast", e.contrast},
                            {"acceleration", e.acceleration},
                            {"nmse", e.nmse},
                            {"psnr", e.psnr},
                            {"ssim", e.ssim},
                            {"baseline_nmse", e.baseline_nmse},
                            {"baseline_psnr", e.baseline_psnr},
                            {"baseline_ssim", e.baseline_ssim}});
    json by_contrast = json::object(), by_acceleration = json::object();
    for (const auto& [key, sub] : report.by_contrast()) by_contrast[key] = summarize(sub);
    for (const auto& [key, sub] : report.by_acceleration()) by_acceleration[key] = summarize(sub);
    return json{{"examples", examples},
                {"aggregate", summarize(report)},
                {"by_contrast", by_contrast},
                {"by_acceleration", by_acceleration}};
}

// One NMSE/PSNR/SSIM triple per row, reconstruction next to the zero-filled
// baseline.
void print_metric_row(const std::string& label, const train::MetricsReport& r) {
    std::printf("  %-14s n=%-3zu  recon %.4f/%.2f/%.4f   zero-filled %.4f/%.2f/%.4f\n",
                label.c_str(), r.examples.size(), r.nmse.mean, r.psnr.mean, r.ssim.mean,
                r.baseline_nmse.mean, r.baseline_psnr.mean, r.baseline_ssim.mean);
}

void print_metric_table(const train::MetricsReport& report) {
    std::printf("  %-14s %-5s  %s\n", "group", "", "NMSE/PSNR/SSIM");
    print_metric_row("all", report);
    for (const auto& [key, sub] : report.by_contrast()) print_metric_row(key, sub);
    for (const auto& [key, sub] : report.by_acceleration()) print_metric_row(key, sub);
}

void zero_generator_params(ad::ParamStore& store) {
    for (const std::string& prefix : {std::string("generator."), std::string("sme.")})
        for (ad::Param* p : store.with_prefix(prefix))
            for (int64_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.0;
}

int cmd_simulate(int64_t subjects, int64_t frames, int64_t coils, const std::string& size,
                 double noise_std, uint64_t seed, const std::vector<std::string>& contrasts,
                 const std::string& out, bool force) {
    const auto [h, w] = parse_size(size);
    io::DataConfig dc;
    dc.subjects = subjects;
    dc.frames = frames;
    dc.coils = coils;
    dc.height = h;
    dc.width = w;
    dc.noise_std = noise_std;
    dc.contrasts = contrasts;
    dc.validate();

    const fs::path dir = resolve_out(out);
    prepare_outdir(dir, force);

    json rows = json::array();
    for (int64_t s = 0; s < subjects; ++s) {
        const ContrastTag tag =
            contrast_from_name(contrasts[static_cast<size_t>(s) % contrasts.size()]);
        PhantomSpec spec;
        spec.height = h;
        spec.width = w;
        spec.frames = frames;
        spec.coils = coils;
        spec.noise_std = noise_std;
        spec.seed = mix_seed(seed, static_cast<uint64_t>(s));
        spec.ellipses = default_ellipses(h, w, tag, spec.seed);
        const SubjectRecord rec = simulate_subject(spec, tag);

        char name[32];
        std::snprintf(name, sizeof(name), "subject_%03" PRId64 ".h5", s);
        const fs::path file = dir / name;
        write_subject(rec, file.string());
        rows.push_back({{"file", name},
                        {"contrast", contrast_name(tag)},
                        {"seed", spec.seed},
                        {"sha256", io::sha256_file(file.string())}});
        std::printf("  %s  %s  sha256=%s\n", name, contrast_name(tag),
                    rows.back()["sha256"].get<std::string>().c_str());
    }
    const json manifest = {{"format", "mrrecon-dataset"}, {"version", 1},
                           {"seed", seed},               {"subjects", rows},
                           {"frames", frames},           {"coils", coils},
                           {"height", h},                {"width", w},
                           {"noise_std", noise_std}};
    write_json_file(dir / "manifest.json", manifest);
    std::printf("wrote %" PRId64 " subjects and manifest.json to %s\n", subjects,
                dir.string().c_str());
    return 0;
}

int cmd_mask(const std::string& size, const std::string& trajectory, double acceleration,
             int64_t acs, uint64_t seed, const std::string& out, bool force) {
    const auto [h, w] = parse_size(size);
    const Trajectory traj = trajectory_from_name(trajectory);
    require(acceleration >= 1.0, "--acceleration must be >= 1");

    const fs::path dir = resolve_out(out);
    prepare_outdir(dir, force);

    const SamplingMask mask =
        train::make_mask_from_spec(train::MaskSpec{traj, acceleration, acs}, h, w, seed);
    io::write_pgm16((dir / "mask.pgm").string(), mask.data);

    std::ofstream raw(dir / "mask.bin", std::ios::binary);
    if (!raw) throw DataError("cannot open for writing: " + (dir / "mask.bin").string());
    for (int64_t i = 0; i < mask.data.size(); ++i)
        raw.put(mask.data[i] != 0.0 ? '\x01' : '\x00');
    raw.close();

    const json sidecar = {{"height", h},
                          {"width", w},
                          {"trajectory", trajectory_name(traj)},
                          {"acceleration", acceleration},
                          {"achieved_acceleration", mask.achieved_acceleration()},
                          {"acs_lines", acs},
                          {"seed", seed},
                          {"sampled_points", mask.ones()},
                          {"files",
                           {{"image", "mask.pgm"},
                            {"raw", "mask.bin"},
                            {"raw_encoding", "row-major uint8, 1 = sampled"}}}};
    write_json_file(dir / "mask.json", sidecar);
    std::printf("mask %" PRId64 "x%" PRId64 " %s AF %.3g (achieved %.4f) -> %s\n", h, w,
                trajectory_name(traj), acceleration, mask.achieved_acceleration(),
                dir.string().c_str());
    return 0;
}

int cmd_train(const TrainFlags& flags, const CLI::App* cmd) {
    const io::ExperimentConfig cfg = flags.resolve(cmd);
    const std::vector<train::CurriculumStage> schedule = schedule_for(cfg);
    const std::vector<SubjectRecord> subjects = load_subjects(flags.data_dir);

    const fs::path dir = resolve_out(flags.out_dir);
    prepare_outdir(dir, flags.force);
    write_json_file(dir / "config.json", io::experiment_config_to_json(cfg));

    const std::vector<train::StageResult> results =
        train::run_curriculum(subjects, schedule, cfg.model, cfg.train, dir.string());

    std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw DataError("cannot open for writing: " + (dir / "train_log.jsonl").string());
    for (const auto& stage : results)
        for (const auto& r : stage.records) {
            const json line = {{"stage", stage.name},
                               {"epoch", r.epoch},
                               {"step", r.step},
                               {"lr", r.lr},
                               {"grad_norm", r.grad_norm},
                               {"total", r.losses.total},
                               {"stepwise", r.losses.stepwise_sum},
                               {"adversarial", r.losses.adversarial},
                               {"physical", r.losses.physical},
                               {"ssim", r.losses.ssim},
                               {"disc", r.losses.disc},
                               {"etas", r.etas},
                               {"skipped", r.losses.skipped}};
            log << line.dump() << "\n";
        }
    log.close();

    json stage_metrics = json::array();
    for (const auto& stage : results) {
        const std::string ck_name = fs::path(stage.checkpoint_path).filename().string();
        stage_metrics.push_back({{"stage", stage.name},
                                 {"checkpoint", ck_name},
                                 {"metrics", metrics_to_json(stage.metrics)}});
        std::printf("stage %-12s %4zu steps  checkpoint %s\n", stage.name.c_str(),
                    stage.records.size(), ck_name.c_str());
        print_metric_table(stage.metrics);
    }
    write_json_file(dir / "metrics.json", stage_metrics);
    std::printf("wrote %zu stage checkpoints, train_log.jsonl, metrics.json to %s\n",
                results.size(), dir.string().c_str());
    return 0;
}

int cmd_eval(const TrainFlags& flags, const CLI::App* cmd, const std::string& checkpoint,
             bool zero_model, const std::string& report_path) {
    io::ExperimentConfig cfg = flags.resolve(cmd);
    if (checkpoint.empty() && !zero_model)
        throw ConfigError("eval needs --checkpoint, or --zero-model for the "
                          "data-consistency-only baseline");

    const std::vector<SubjectRecord> subjects = load_subjects(flags.data_dir);
    const std::vector<train::TrainExample> dataset =
        train::build_dataset(subjects,
                             {train::MaskSpec{cfg.sampling.trajectory_enum(),
                                              cfg.sampling.acceleration, cfg.sampling.acs_lines}},
                             cfg.model.generator.adjacent, cfg.seed);

    train::TrainingSession session(cfg.model, cfg.train);
    if (!checkpoint.empty()) session.load(checkpoint);
    if (zero_model) zero_generator_params(session.store());

    const train::MetricsReport report = session.evaluate(dataset);
    std::printf("eval %s AF %.3g, %zu examples\n", cfg.sampling.trajectory.c_str(),
                cfg.sampling.acceleration, report.examples.size());
    print_metric_table(report);

    if (!report_path.empty()) {
        const fs::path rp = resolve_out(report_path);
        if (rp.has_parent_path()) fs::create_directories(rp.parent_path());
        write_json_file(rp, metrics_to_json(report));
        std::printf("wrote report to %s\n", rp.string().c_str());
    }
    return 0;
}

int cmd_reconstruct(const TrainFlags& flags, const CLI::App* cmd, const std::string& checkpoint,
                    bool zero_model, int64_t subject, int64_t frame, const std::string& out,
                    bool force) {
    io::ExperimentConfig cfg = flags.resolve(cmd);
    if (checkpoint.empty() && !zero_model)
        throw ConfigError("reconstruct needs --checkpoint, or --zero-model for the "
                          "data-consistency-only baseline");

    const std::vector<SubjectRecord> subjects = load_subjects(flags.data_dir);
    require(subject >= 0 && subject < static_cast<int64_t>(subjects.size()),
            "--subject out of range for this dataset");
    const SubjectRecord& rec = subjects[static_cast<size_t>(subject)];
    require(frame < rec.frames(), "--frame out of range for this subject");

    train::TrainingSession session(cfg.model, cfg.train);
    if (!checkpoint.empty()) session.load(checkpoint);
    if (zero_model) zero_generator_params(session.store());

    const fs::path dir = resolve_out(out);
    prepare_outdir(dir, force);

    std::vector<int64_t> frames;
    if (frame >= 0)
        frames.push_back(frame);
    else
        for (int64_t f = 0; f < rec.frames(); ++f) frames.push_back(f);

    const train::MaskSpec spec{cfg.sampling.trajectory_enum(), cfg.sampling.acceleration,
                               cfg.sampling.acs_lines};
    for (int64_t f : frames) {
        // Same per-example seed rule as build_dataset, so a reconstruction
        // reproduces the mask an evaluation run would draw.
        const uint64_t ex_seed =
            mix_seed(cfg.seed, (static_cast<uint64_t>(subject) << 24) ^ static_cast<uint64_t>(f));
        const SamplingMask mask =
            train::make_mask_from_spec(spec, rec.height(), rec.width(), ex_seed);
        const train::TrainExample ex =
            train::make_example(rec, subject, f, mask, cfg.model.generator.adjacent);

        ad::Tape t;
        recon::GeneratorForward fwd = session.generator().forward(t, ex.masked, ex.mask);
        const Tensor& recon_img =
            fwd.steps.empty() ? ex.img_zf : t.val(fwd.steps.back().image);

        // Pixels are value/volume_max clamped to [0,1], quantized to 16 bits.
        const double inv_max = 1.0 / ex.volume_max;
        auto normalized = [&](const Tensor& img) {
            Tensor s(img.shape());
            for (int64_t i = 0; i < img.size(); ++i) s[i] = img[i] * inv_max;
            return s;
        };
        char stem[32];
        std::snprintf(stem, sizeof(stem), "frame_%03" PRId64, f);
        const std::string gt_file = std::string(stem) + "_gt.pgm";
        const std::string zf_file = std::string(stem) + "_zero_filled.pgm";
        const std::string rc_file = std::string(stem) + "_reconstructed.pgm";
        io::write_pgm16((dir / gt_file).string(), normalized(ex.img_gt));
        io::write_pgm16((dir / zf_file).string(), normalized(ex.img_zf));
        io::write_pgm16((dir / rc_file).string(), normalized(recon_img));

        // Metrics are computed on the quantized images as stored, so reading
        // the three files back reproduces these numbers exactly.
        const Tensor gt_q = io::read_pgm16((dir / gt_file).string());
        const Tensor zf_q = io::read_pgm16((dir / zf_file).string());
        const Tensor rc_q = io::read_pgm16((dir / rc_file).string());
        const double ssim = train::metric_ssim(rc_q, gt_q);
        const double baseline_ssim = train::metric_ssim(zf_q, gt_q);

        const json sidecar = {
            {"subject", subject},
            {"frame", f},
            {"contrast", ex.contrast},
            {"trajectory", cfg.sampling.trajectory},
            {"acceleration", cfg.sampling.acceleration},
            {"achieved_acceleration", mask.achieved_acceleration()},
            {"acs_lines", cfg.sampling.acs_lines},
            {"mask_seed", ex_seed},
            {"normalization",
             {{"scale", ex.volume_max},
              {"mapping", "pixel = round(65535 * clamp(value / scale, 0, 1))"}}},
            {"files", {{"gt", gt_file}, {"zero_filled", zf_file}, {"reconstructed", rc_file}}},
            {"metrics",
             {{"ssim", ssim},
              {"psnr", train::metric_psnr(rc_q, gt_q)},
              {"nmse", train::metric_nmse(rc_q, gt_q)},
              {"baseline_ssim", baseline_ssim},
              {"baseline_psnr", train::metric_psnr(zf_q, gt_q)},
              {"baseline_nmse", train::metric_nmse(zf_q, gt_q)}}}};
        write_json_file(dir / (std::string(stem) + ".json"), sidecar);
        std::printf("subject %" PRId64 " frame %" PRId64 ": SSIM %.12f (zero-filled %.12f)\n",
                    subject, f, ssim, baseline_ssim);
    }
    std::printf("wrote %zu frame triptychs to %s\n", frames.size(), dir.string().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Accelerated multi-coil MRI reconstruction: phantom simulation, sampling "
                 "masks, adversarial unrolled training, evaluation, and reconstruction."};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Synthesize phantom subjects into a dataset dir");
    int64_t sim_subjects = 4, sim_frames = 8, sim_coils = 4;
    std::string sim_size = "64x64";
    double sim_noise = 0.0;
    uint64_t sim_seed = 0;
    std::vector<std::string> sim_contrasts = {"cine"};
    std::string sim_out;
    bool sim_force = false;
    sim->add_option("--subjects", sim_subjects, "Subject count")->capture_default_str();
    sim->add_option("--frames", sim_frames, "Temporal frames per subject")->capture_default_str();
    sim->add_option("--coils", sim_coils, "Receive coils")->capture_default_str();
    sim->add_option("--size", sim_size, "Grid as HxW")->capture_default_str();
    sim->add_option("--noise-std", sim_noise, "K-space noise std")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Dataset seed")->capture_default_str();
    sim->add_option("--contrast", sim_contrasts, "Contrast tags, cycled over subjects")
        ->delimiter(',')
        ->capture_default_str();
    sim->add_option("--out", sim_out, "Output directory")->required();
    sim->add_flag("--force", sim_force, "Write into a non-empty output directory");

    // mask
    auto* msk = app.add_subcommand("mask", "Emit one sampling mask (image + raw + sidecar)");
    std::string msk_size = "128x128", msk_traj = "uniform", msk_out;
    double msk_accel = 4.0;
    int64_t msk_acs = 16;
    uint64_t msk_seed = 0;
    bool msk_force = false;
    msk->add_option("--size", msk_size, "Grid as HxW")->capture_default_str();
    msk->add_option("--trajectory", msk_traj, "uniform | gaussian | pseudo_radial")
        ->capture_default_str();
    msk->add_option("--acceleration", msk_accel, "Declared acceleration factor")
        ->capture_default_str();
    msk->add_option("--acs", msk_acs, "Fully sampled calibration lines")->capture_default_str();
    msk->add_option("--seed", msk_seed, "Mask seed")->capture_default_str();
    msk->add_option("--out", msk_out, "Output directory")->required();
    msk->add_flag("--force", msk_force, "Write into a non-empty output directory");

    // train
    auto* trn = app.add_subcommand("train", "Run the staged curriculum on a dataset");
    TrainFlags trn_flags;
    trn_flags.attach(trn, /*with_training_knobs=*/true);

    // eval
    auto* evl = app.add_subcommand("eval", "Score a checkpoint over a dataset");
    TrainFlags evl_flags;
    evl_flags.attach(evl, /*with_training_knobs=*/false);
    std::string evl_checkpoint, evl_report;
    bool evl_zero = false;
    evl->add_option("--checkpoint", evl_checkpoint, "Model checkpoint (.mrck)");
    evl->add_flag("--zero-model", evl_zero,
                  "Zero the generator: data-consistency-only pass-through");
    evl->add_option("--report", evl_report, "Write the full metric report to this JSON file");

    // reconstruct
    auto* rcn = app.add_subcommand("reconstruct",
                                   "Write gt / zero-filled / reconstructed image triptychs");
    TrainFlags rcn_flags;
    rcn_flags.attach(rcn, /*with_training_knobs=*/false);
    std::string rcn_checkpoint, rcn_out;
    bool rcn_zero = false, rcn_force = false;
    int64_t rcn_subject = 0, rcn_frame = -1;
    rcn->add_option("--checkpoint", rcn_checkpoint, "Model checkpoint (.mrck)");
    rcn->add_flag("--zero-model", rcn_zero,
                  "Zero the generator: data-consistency-only pass-through");
    rcn->add_option("--subject", rcn_subject, "Subject index in the dataset")
        ->capture_default_str();
    rcn->add_option("--frame", rcn_frame, "Frame index; -1 writes every frame")
        ->capture_default_str();
    rcn->add_option("--out", rcn_out, "Output directory")->required();
    rcn->add_flag("--force", rcn_force, "Write into a non-empty output directory");

    try {
        app.parse(argc, argv);
        if (sim->parsed())
            return cmd_simulate(sim_subjects, sim_frames, sim_coils, sim_size, sim_noise,
                                sim_seed, sim_contrasts, sim_out, sim_force);
        if (msk->parsed())
            return cmd_mask(msk_size, msk_traj, msk_accel, msk_acs, msk_seed, msk_out, msk_force);
        if (trn->parsed()) return cmd_train(trn_flags, trn);
        if (evl->parsed()) return cmd_eval(evl_flags, evl, evl_checkpoint, evl_zero, evl_report);
        if (rcn->parsed())
            return cmd_reconstruct(rcn_flags, rcn, rcn_checkpoint, rcn_zero, rcn_subject,
                                   rcn_frame, rcn_out, rcn_force);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const CLI::Error& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
