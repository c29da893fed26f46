// SPDX-License-Identifier: Apache-2.0
//
// Drives the command-line binary end to end: every case runs the real
// executable through a shell and inspects exit codes, stdout, and the files
// left on disk.
#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrrecon/io/checksum.hpp"
#include "mrrecon/io/experiment_config.hpp"
#include "mrrecon/io/image_io.hpp"
#include "mrrecon/phantom/subject_io.hpp"
#include "mrrecon/train/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mrrecon;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(MRRECON_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult res;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) res.output.append(buf, n);
    const int status = pclose(pipe);
    REQUIRE(WIFEXITED(status));
    res.exit_code = WEXITSTATUS(status);
    return res;
}

CmdResult run_shell(const std::string& full_command) {
    FILE* pipe = popen((full_command + " 2>&1").c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult res;
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) res.output.append(buf, n);
    const int status = pclose(pipe);
    REQUIRE(WIFEXITED(status));
    res.exit_code = WEXITSTATUS(status);
    return res;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

json read_json(const fs::path& path) { return json::parse(read_bytes(path)); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    REQUIRE(os.good());
    os << text;
}

// Scratch tree shared by all cases; removed when the process exits.
struct Scratch {
    fs::path root;
    fs::path data16;      // 2 subjects, 16x16, 2 frames, 2 coils
    fs::path tiny_config; // 2 cascades, 2-level base-8 bodies
    fs::path smoke_run;   // finished tiny training run

    Scratch() {
        std::string templ = (fs::temp_directory_path() / "mrrecon_cli_XXXXXX").string();
        std::vector<char> buf(templ.begin(), templ.end());
        buf.push_back('\0');
        REQUIRE(mkdtemp(buf.data()) != nullptr);
        root = fs::path(buf.data());

        data16 = root / "data16";
        CmdResult sim = run_cli("simulate --subjects 2 --frames 2 --coils 2 --size 16x16"
                                " --seed 7 --out " +
                                data16.string());
        REQUIRE(sim.exit_code == 0);

        tiny_config = root / "tiny.json";
        write_text(tiny_config, R"({
  "seed": 3,
  "task": 0,
  "sampling": {"acceleration": 2.0, "acs_lines": 6},
  "model": {
    "cascades": 2,
    "adjacent": 3,
    "apunet": {"levels": 2, "base_channels": 8, "channel_mult": [1, 2],
               "attention_reduction": 8, "prompt_components": 2, "prompt_size": 4},
    "sme": {"levels": 2, "base_channels": 8, "channel_mult": [1, 2],
            "attention_reduction": 8, "prompt_components": 2, "prompt_size": 4},
    "discriminator": {"layers": 3, "base_channels": 8}
  },
  "train": {"epochs": 5, "max_steps_per_epoch": 4}
})");

        smoke_run = root / "smoke_run";
        CmdResult trn = run_cli("train --config " + tiny_config.string() + " --data " +
                                data16.string() + " --out " + smoke_run.string());
        REQUIRE(trn.exit_code == 0);
    }

    ~Scratch() {
        std::error_code ec;
        fs::remove_all(root, ec);
    }
};

Scratch& scratch() {
    static Scratch s;
    return s;
}

} // namespace

TEST_CASE("simulate writes declared shapes and a checksum manifest", "[cli]") {
    Scratch& s = scratch();
    const json manifest = read_json(s.data16 / "manifest.json");
    REQUIRE(manifest.at("subjects").size() == 2);
    CHECK(manifest.at("format") == "mrrecon-dataset");

    for (const auto& row : manifest.at("subjects")) {
        const fs::path file = s.data16 / row.at("file").get<std::string>();
        REQUIRE(fs::exists(file));
        // Checksum oracle: recompute over the actual bytes.
        CHECK(row.at("sha256").get<std::string>() == io::sha256_file(file.string()));
        const SubjectRecord rec = read_subject(file.string());
        CHECK(rec.kspace_full.shape() == std::vector<int64_t>{2, 2, 16, 16, 2});
        CHECK(rec.image_rss.shape() == std::vector<int64_t>{2, 16, 16});
        CHECK(row.at("contrast").get<std::string>() == "cine");
    }
}

TEST_CASE("simulate is bit-identical under a repeated seed", "[cli]") {
    Scratch& s = scratch();
    const fs::path again = s.root / "data16_again";
    CmdResult sim = run_cli("simulate --subjects 2 --frames 2 --coils 2 --size 16x16"
                            " --seed 7 --out " +
                            again.string());
    REQUIRE(sim.exit_code == 0);
    for (const char* name : {"subject_000.h5", "subject_001.h5", "manifest.json"})
        CHECK(read_bytes(s.data16 / name) == read_bytes(again / name));
}

TEST_CASE("non-empty output directories need --force", "[cli]") {
    Scratch& s = scratch();
    CmdResult refuse = run_cli("simulate --subjects 1 --size 16x16 --out " + s.data16.string());
    CHECK(refuse.exit_code == 3);
    CHECK(refuse.output.find("--force") != std::string::npos);

    const fs::path dir = s.root / "forced";
    fs::create_directories(dir);
    write_text(dir / "existing.txt", "keep");
    CmdResult ok = run_cli("simulate --subjects 1 --frames 1 --coils 1 --size 16x16 --force"
                           " --out " +
                           dir.string());
    CHECK(ok.exit_code == 0);
    CHECK(fs::exists(dir / "existing.txt"));
    CHECK(fs::exists(dir / "subject_000.h5"));
}

TEST_CASE("mask emits consistent image, raw array, and sidecar", "[cli]") {
    Scratch& s = scratch();
    const fs::path dir = s.root / "mask_out";
    CmdResult res = run_cli("mask --size 32x32 --trajectory uniform --acceleration 4"
                            " --acs 4 --seed 9 --out " +
                            dir.string());
    REQUIRE(res.exit_code == 0);

    const Tensor img = io::read_pgm16((dir / "mask.pgm").string());
    REQUIRE(img.shape() == std::vector<int64_t>{32, 32});
    const std::string raw = read_bytes(dir / "mask.bin");
    REQUIRE(raw.size() == 32 * 32);
    for (int64_t i = 0; i < img.size(); ++i) {
        const bool sampled = raw[static_cast<size_t>(i)] == '\x01';
        CHECK(img[i] == (sampled ? 1.0 : 0.0));
    }

    const json side = read_json(dir / "mask.json");
    CHECK(side.at("trajectory") == "uniform");
    CHECK(side.at("acceleration") == 4.0);
    CHECK(side.at("acs_lines") == 4);
    CHECK(side.at("seed") == 9);
    const double achieved = side.at("achieved_acceleration").get<double>();
    CHECK(std::abs(achieved - 4.0) <= 0.15 * 4.0);
    // Sidecar count oracle.
    int64_t ones = 0;
    for (char c : raw) ones += (c == '\x01');
    CHECK(side.at("sampled_points") == ones);
}

TEST_CASE("tiny training run exits 0 with checkpoint, logs, and resolved config", "[cli]") {
    Scratch& s = scratch();
    REQUIRE(fs::exists(s.smoke_run / "stage_0_uniform_af2.mrck"));
    REQUIRE(fs::exists(s.smoke_run / "train_log.jsonl"));
    REQUIRE(fs::exists(s.smoke_run / "metrics.json"));

    // 2 subjects x 2 frames, capped at 4 steps/epoch, 5 epochs.
    std::ifstream log(s.smoke_run / "train_log.jsonl");
    std::string line;
    int64_t lines = 0;
    json last;
    while (std::getline(log, line)) {
        last = json::parse(line);
        ++lines;
    }
    CHECK(lines == 20);
    CHECK(last.at("stage") == "uniform_af2");
    CHECK(last.at("step") == 19);
    CHECK(last.at("etas").size() == 2);
    CHECK(std::isfinite(last.at("total").get<double>()));

    // The resolved config written next to the checkpoints parses back.
    const io::ExperimentConfig cfg =
        io::load_experiment_config((s.smoke_run / "config.json").string());
    CHECK(cfg.model.generator.num_reconstructors == 2);
    CHECK(cfg.train.epochs == 5);

    const json metrics = read_json(s.smoke_run / "metrics.json");
    REQUIRE(metrics.size() == 1);
    CHECK(metrics[0].at("stage") == "uniform_af2");
    CHECK(metrics[0].at("metrics").at("aggregate").at("count") == 4);
}

TEST_CASE("unknown config keys fail with the dotted key named", "[cli]") {
    Scratch& s = scratch();
    const fs::path bad1 = s.root / "bad1.json";
    write_text(bad1, R"({"trian": {}})");
    CmdResult r1 = run_cli("train --config " + bad1.string() + " --data " + s.data16.string() +
                           " --out " + (s.root / "never1").string());
    CHECK(r1.exit_code == 2);
    CHECK(r1.output.find("trian") != std::string::npos);
    CHECK_FALSE(fs::exists(s.root / "never1"));  // no partial output

    const fs::path bad2 = s.root / "bad2.json";
    write_text(bad2, R"({"train": {"epoch": 3}})");
    CmdResult r2 = run_cli("train --config " + bad2.string() + " --data " + s.data16.string() +
                           " --out " + (s.root / "never2").string());
    CHECK(r2.exit_code == 2);
    CHECK(r2.output.find("train.epoch") != std::string::npos);
    CHECK_FALSE(fs::exists(s.root / "never2"));
}

TEST_CASE("task 1 writes three stage checkpoints, task 2 writes one", "[cli]") {
    Scratch& s = scratch();
    const fs::path data96 = s.root / "data96";
    CmdResult sim = run_cli("simulate --subjects 1 --frames 2 --coils 2 --size 96x96"
                            " --seed 2 --out " +
                            data96.string());
    REQUIRE(sim.exit_code == 0);

    const fs::path run_t1 = s.root / "run_task1";
    CmdResult t1 = run_cli("train --config " + s.tiny_config.string() + " --data " +
                           data96.string() + " --out " + run_t1.string() +
                           " --task 1 --acs 4 --epochs 1 --max-steps 1");
    REQUIRE(t1.exit_code == 0);
    CHECK(fs::exists(run_t1 / "stage_0_af4.mrck"));
    CHECK(fs::exists(run_t1 / "stage_1_af8.mrck"));
    CHECK(fs::exists(run_t1 / "stage_2_af10.mrck"));

    const fs::path run_t2 = s.root / "run_task2";
    CmdResult t2 = run_cli("train --config " + s.tiny_config.string() + " --data " +
                           data96.string() + " --out " + run_t2.string() +
                           " --task 2 --acs 4 --epochs 1 --max-steps 1");
    REQUIRE(t2.exit_code == 0);
    int64_t checkpoints = 0;
    for (const auto& entry : fs::directory_iterator(run_t2))
        checkpoints += (entry.path().extension() == ".mrck");
    CHECK(checkpoints == 1);
    CHECK(fs::exists(run_t2 / "stage_0_mixed.mrck"));
}

TEST_CASE("training outputs are bit-identical across same-seed runs", "[cli]") {
    Scratch& s = scratch();
    const fs::path rerun = s.root / "smoke_rerun";
    CmdResult trn = run_cli("train --config " + s.tiny_config.string() + " --data " +
                            s.data16.string() + " --out " + rerun.string());
    REQUIRE(trn.exit_code == 0);
    for (const char* name :
         {"stage_0_uniform_af2.mrck", "train_log.jsonl", "metrics.json", "config.json"})
        CHECK(read_bytes(s.smoke_run / name) == read_bytes(rerun / name));
}

TEST_CASE("identity evaluation scores NMSE 0 and reports baseline columns", "[cli]") {
    Scratch& s = scratch();
    const fs::path report = s.root / "identity_report.json";
    CmdResult res = run_cli("eval --config " + s.tiny_config.string() + " --data " +
                            s.data16.string() +
                            " --zero-model --acceleration 1 --acs 16 --report " +
                            report.string());
    REQUIRE(res.exit_code == 0);
    CHECK(res.output.find("NMSE/PSNR/SSIM") != std::string::npos);
    CHECK(res.output.find("zero-filled") != std::string::npos);

    const json r = read_json(report);
    CHECK(r.at("aggregate").at("nmse").at("mean") == 0.0);
    CHECK(r.at("aggregate").at("ssim").at("mean") == 1.0);
    REQUIRE(r.at("examples").size() == 4);
    for (const auto& e : r.at("examples")) {
        CHECK(e.at("nmse") == 0.0);
        CHECK(e.contains("baseline_nmse"));
        CHECK(e.contains("baseline_ssim"));
    }
}

TEST_CASE("evaluation aggregates match per-example recomputation", "[cli]") {
    Scratch& s = scratch();
    const fs::path report = s.root / "smoke_report.json";
    CmdResult res = run_cli("eval --config " + s.tiny_config.string() + " --data " +
                            s.data16.string() + " --checkpoint " +
                            (s.smoke_run / "stage_0_uniform_af2.mrck").string() + " --report " +
                            report.string());
    REQUIRE(res.exit_code == 0);

    const json r = read_json(report);
    for (const char* metric : {"nmse", "psnr", "ssim", "baseline_nmse", "baseline_ssim"}) {
        double sum = 0.0;
        for (const auto& e : r.at("examples")) sum += e.at(metric).get<double>();
        const double mean = sum / static_cast<double>(r.at("examples").size());
        CHECK(r.at("aggregate").at(metric).at("mean").get<double>() ==
              Catch::Approx(mean).margin(1e-12));
    }
}

TEST_CASE("reconstruct writes a triptych whose printed SSIM is reproducible", "[cli]") {
    Scratch& s = scratch();
    const fs::path dir = s.root / "recon_out";
    CmdResult res = run_cli("reconstruct --config " + s.tiny_config.string() + " --data " +
                            s.data16.string() + " --checkpoint " +
                            (s.smoke_run / "stage_0_uniform_af2.mrck").string() +
                            " --subject 0 --frame 1 --out " + dir.string());
    REQUIRE(res.exit_code == 0);

    // Exactly 3 images plus one sidecar for the requested frame.
    int64_t pgms = 0;
    for (const auto& entry : fs::directory_iterator(dir))
        pgms += (entry.path().extension() == ".pgm");
    CHECK(pgms == 3);
    REQUIRE(fs::exists(dir / "frame_001_gt.pgm"));
    REQUIRE(fs::exists(dir / "frame_001_zero_filled.pgm"));
    REQUIRE(fs::exists(dir / "frame_001_reconstructed.pgm"));

    // Declared format: binary PGM, 16-bit range, values within [0, 65535].
    const std::string raw = read_bytes(dir / "frame_001_gt.pgm");
    CHECK(raw.rfind("P5\n16 16\n65535\n", 0) == 0);
    CHECK(raw.size() == std::string("P5\n16 16\n65535\n").size() + 2 * 16 * 16);

    const Tensor gt = io::read_pgm16((dir / "frame_001_gt.pgm").string());
    const Tensor rc = io::read_pgm16((dir / "frame_001_reconstructed.pgm").string());
    for (int64_t i = 0; i < gt.size(); ++i) {
        CHECK(gt[i] >= 0.0);
        CHECK(gt[i] <= 1.0);
    }

    // The printed SSIM is the metric over the stored quantized images.
    const double expected = train::metric_ssim(rc, gt);
    const std::string needle = "SSIM ";
    const auto pos = res.output.find(needle);
    REQUIRE(pos != std::string::npos);
    const double printed = std::stod(res.output.substr(pos + needle.size()));
    CHECK(printed == Catch::Approx(expected).margin(5e-13));

    const json side = read_json(dir / "frame_001.json");
    CHECK(side.at("metrics").at("ssim").get<double>() == expected);
    CHECK(side.at("normalization").contains("scale"));
    CHECK(side.at("files").at("reconstructed") == "frame_001_reconstructed.pgm");
}

TEST_CASE("data problems and bad flags map to their exit codes", "[cli]") {
    Scratch& s = scratch();
    CmdResult missing = run_cli("train --config " + s.tiny_config.string() +
                                " --data /nonexistent_dir_xyz --out " +
                                (s.root / "never3").string());
    CHECK(missing.exit_code == 3);
    CHECK(missing.output.find("data") != std::string::npos);

    CmdResult badtraj = run_cli("mask --trajectory spiral --out " + (s.root / "m2").string());
    CHECK(badtraj.exit_code == 2);
    CHECK(badtraj.output.find("spiral") != std::string::npos);

    CmdResult badflag = run_cli("train --no-such-flag");
    CHECK(badflag.exit_code == 2);

    CmdResult badsize = run_cli("simulate --size 16by16 --out " + (s.root / "m3").string());
    CHECK(badsize.exit_code == 2);

    // Incompatible checkpoint: model shape from flags differs from the file.
    CmdResult mismatch = run_cli("eval --config " + s.tiny_config.string() + " --data " +
                                 s.data16.string() + " --cascades 3 --checkpoint " +
                                 (s.smoke_run / "stage_0_uniform_af2.mrck").string());
    CHECK(mismatch.exit_code == 3);
    CHECK(mismatch.output.find("checkpoint incompatible") != std::string::npos);
}

TEST_CASE("relative outputs resolve under the output-root variable", "[cli]") {
    Scratch& s = scratch();
    const fs::path rootenv = s.root / "rootenv";
    CmdResult res = run_shell("env MRRECON_OUTPUT_ROOT=" + rootenv.string() + " " +
                              MRRECON_CLI_PATH + " mask --size 16x16 --acceleration 2 --acs 4"
                              " --out relmask");
    REQUIRE(res.exit_code == 0);
    CHECK(fs::exists(rootenv / "relmask" / "mask.json"));
    CHECK_FALSE(fs::exists("relmask"));
}
