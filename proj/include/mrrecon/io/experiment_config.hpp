// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/phantom/phantom.hpp"
#include "mrrecon/sampling/masks.hpp"
#include "mrrecon/train/trainer.hpp"

// Experiment configuration: one JSON document controlling simulation,
// sampling, model shape, and training. Parsing is strict: unknown keys and
// wrong types are configuration errors naming the offending key, and
// everything is validated before any command touches the filesystem.

namespace mrrecon::io {

using nlohmann::json;

struct DataConfig {
    int64_t subjects = 4;
    int64_t frames = 8;
    int64_t coils = 4;
    int64_t height = 64;
    int64_t width = 64;
    double noise_std = 0.0;
    std::vector<std::string> contrasts = {"cine"};

    void validate() const {
        require(subjects >= 1, "data.subjects must be >= 1");
        require(frames >= 1, "data.frames must be >= 1");
        require(coils >= 1, "data.coils must be >= 1");
        require(height >= 8 && width >= 8, "data dimensions must be >= 8");
        require(noise_std >= 0.0, "data.noise_std must be >= 0");
        require(!contrasts.empty(), "data.contrasts must not be empty");
        for (const auto& c : contrasts) contrast_from_name(c);  // throws on bad names
    }
};

struct SamplingConfig {
    std::string trajectory = "uniform";
    double acceleration = 4.0;
    int64_t acs_lines = 16;

    Trajectory trajectory_enum() const { return trajectory_from_name(trajectory); }

    void validate() const {
        trajectory_from_name(trajectory);
        require(acceleration >= 1.0, "sampling.acceleration must be >= 1");
        require(acs_lines >= 0, "sampling.acs_lines must be >= 0");
    }
};

struct ExperimentConfig {
    uint64_t seed = 0;
    // 1: three uniform-mask stages (AF 4, 8, 10), each seeded from the last.
    // 2: one stage mixing all trajectories over AF 4..24.
    // 0: one stage on the configured sampling spec (smoke runs, ablations).
    int64_t task = 1;
    DataConfig data;
    SamplingConfig sampling;
    train::ModelConfig model;
    train::TrainConfig train;

    void validate() const {
        require(task >= 0 && task <= 2, "task must be 0, 1, or 2");
        data.validate();
        sampling.validate();
        model.generator.validate();
        model.discriminator.validate();
        train.validate();
    }
};

namespace detail {

[[noreturn]] inline void bad_key(const std::string& path, const std::string& why) {
    throw ConfigError("config key " + path + ": " + why);
}

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) bad_key(path.empty() ? "<root>" : path, "expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw ConfigError("unknown config key: " + (path.empty() ? key : path + "." + key));
    }
}

template <typename T>
void read_field(const json& j, const std::string& path, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        bad_key(path.empty() ? key : path + "." + std::string(key), "wrong type");
    }
}

inline void parse_apunet(const json& j, const std::string& path, nn::APUNetConfig& cfg) {
    check_keys(j, path, {"levels", "base_channels", "channel_mult", "attention_reduction",
                         "prompt_components", "prompt_size", "encoder_prompts"});
    read_field(j, path, "levels", cfg.levels);
    read_field(j, path, "base_channels", cfg.base_channels);
    read_field(j, path, "channel_mult", cfg.channel_mult);
    read_field(j, path, "attention_reduction", cfg.attention_reduction);
    read_field(j, path, "prompt_components", cfg.prompt.components);
    read_field(j, path, "prompt_size", cfg.prompt.prompt_size);
    read_field(j, path, "encoder_prompts", cfg.encoder_prompts);
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const json& j) {
    ExperimentConfig cfg;
    detail::check_keys(j, "", {"seed", "task", "data", "sampling", "model", "train"});
    detail::read_field(j, "", "seed", cfg.seed);
    detail::read_field(j, "", "task", cfg.task);

    if (j.contains("data")) {
        const json& d = j.at("data");
        detail::check_keys(d, "data", {"subjects", "frames", "coils", "height", "width",
                                       "noise_std", "contrasts"});
        detail::read_field(d, "data", "subjects", cfg.data.subjects);
        detail::read_field(d, "data", "frames", cfg.data.frames);
        detail::read_field(d, "data", "coils", cfg.data.coils);
        detail::read_field(d, "data", "height", cfg.data.height);
        detail::read_field(d, "data", "width", cfg.data.width);
        detail::read_field(d, "data", "noise_std", cfg.data.noise_std);
        detail::read_field(d, "data", "contrasts", cfg.data.contrasts);
    }
    if (j.contains("sampling")) {
        const json& s = j.at("sampling");
        detail::check_keys(s, "sampling", {"trajectory", "acceleration", "acs_lines"});
        detail::read_field(s, "sampling", "trajectory", cfg.sampling.trajectory);
        detail::read_field(s, "sampling", "acceleration", cfg.sampling.acceleration);
        detail::read_field(s, "sampling", "acs_lines", cfg.sampling.acs_lines);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        detail::check_keys(m, "model",
                           {"cascades", "adjacent", "acs_lines", "eta_init",
                            "share_step_weights", "zero_init_steps", "apunet", "sme",
                            "discriminator"});
        detail::read_field(m, "model", "cascades", cfg.model.generator.num_reconstructors);
        detail::read_field(m, "model", "adjacent", cfg.model.generator.adjacent);
        detail::read_field(m, "model", "acs_lines", cfg.model.generator.acs_lines);
        detail::read_field(m, "model", "eta_init", cfg.model.generator.eta_init);
        detail::read_field(m, "model", "share_step_weights",
                           cfg.model.generator.share_step_weights);
        detail::read_field(m, "model", "zero_init_steps", cfg.model.generator.zero_init_steps);
        if (m.contains("apunet"))
            detail::parse_apunet(m.at("apunet"), "model.apunet", cfg.model.generator.apunet);
        if (m.contains("sme"))
            detail::parse_apunet(m.at("sme"), "model.sme", cfg.model.generator.sme);
        if (m.contains("discriminator")) {
            const json& d = m.at("discriminator");
            detail::check_keys(d, "model.discriminator",
                               {"layers", "base_channels", "kernel", "stride", "leaky_slope",
                                "use_norm"});
            detail::read_field(d, "model.discriminator", "layers",
                               cfg.model.discriminator.layers);
            detail::read_field(d, "model.discriminator", "base_channels",
                               cfg.model.discriminator.base_channels);
            detail::read_field(d, "model.discriminator", "kernel",
                               cfg.model.discriminator.kernel);
            detail::read_field(d, "model.discriminator", "stride",
                               cfg.model.discriminator.stride);
            detail::read_field(d, "model.discriminator", "leaky_slope",
                               cfg.model.discriminator.leaky_slope);
            detail::read_field(d, "model.discriminator", "use_norm",
                               cfg.model.discriminator.use_norm);
        }
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        detail::check_keys(t, "train",
                           {"epochs", "batch", "lr", "weight_decay", "grad_clip", "lr_step_size",
                            "lr_gamma", "lambda", "max_steps_per_epoch", "divergence_guard",
                            "divergence_factor", "wrap_aware_phase"});
        detail::read_field(t, "train", "epochs", cfg.train.epochs);
        detail::read_field(t, "train", "batch", cfg.train.batch);
        detail::read_field(t, "train", "lr", cfg.train.optimizer.lr);
        detail::read_field(t, "train", "weight_decay", cfg.train.optimizer.weight_decay);
        detail::read_field(t, "train", "grad_clip", cfg.train.grad_clip);
        detail::read_field(t, "train", "lr_step_size", cfg.train.lr_step_size);
        detail::read_field(t, "train", "lr_gamma", cfg.train.lr_gamma);
        detail::read_field(t, "train", "lambda", cfg.train.lambda);
        detail::read_field(t, "train", "max_steps_per_epoch", cfg.train.max_steps_per_epoch);
        detail::read_field(t, "train", "divergence_guard", cfg.train.divergence_guard);
        detail::read_field(t, "train", "divergence_factor", cfg.train.divergence_factor);
        detail::read_field(t, "train", "wrap_aware_phase", cfg.train.wrap_aware_phase);
    }
    cfg.train.seed = cfg.seed;
    return cfg;
}

/// Full resolved tree; parse_experiment_config(experiment_config_to_json(c))
/// round-trips every field.
inline json experiment_config_to_json(const ExperimentConfig& c) {
    json apunet_a = {{"levels", c.model.generator.apunet.levels},
                     {"base_channels", c.model.generator.apunet.base_channels},
                     {"channel_mult", c.model.generator.apunet.channel_mult},
                     {"attention_reduction", c.model.generator.apunet.attention_reduction},
                     {"prompt_components", c.model.generator.apunet.prompt.components},
                     {"prompt_size", c.model.generator.apunet.prompt.prompt_size},
                     {"encoder_prompts", c.model.generator.apunet.encoder_prompts}};
    json apunet_s = apunet_a;
    apunet_s["levels"] = c.model.generator.sme.levels;
    apunet_s["base_channels"] = c.model.generator.sme.base_channels;
    apunet_s["channel_mult"] = c.model.generator.sme.channel_mult;
    apunet_s["attention_reduction"] = c.model.generator.sme.attention_reduction;
    apunet_s["prompt_components"] = c.model.generator.sme.prompt.components;
    apunet_s["prompt_size"] = c.model.generator.sme.prompt.prompt_size;
    apunet_s["encoder_prompts"] = c.model.generator.sme.encoder_prompts;
    return json{
        {"seed", c.seed},
        {"task", c.task},
        {"data",
         {{"subjects", c.data.subjects},
          {"frames", c.data.frames},
          {"coils", c.data.coils},
          {"height", c.data.height},
          {"width", c.data.width},
          {"noise_std", c.data.noise_std},
          {"contrasts", c.data.contrasts}}},
        {"sampling",
         {{"trajectory", c.sampling.trajectory},
          {"acceleration", c.sampling.acceleration},
          {"acs_lines", c.sampling.acs_lines}}},
        {"model",
         {{"cascades", c.model.generator.num_reconstructors},
          {"adjacent", c.model.generator.adjacent},
          {"acs_lines", c.model.generator.acs_lines},
          {"eta_init", c.model.generator.eta_init},
          {"share_step_weights", c.model.generator.share_step_weights},
          {"zero_init_steps", c.model.generator.zero_init_steps},
          {"apunet", apunet_a},
          {"sme", apunet_s},
          {"discriminator",
           {{"layers", c.model.discriminator.layers},
            {"base_channels", c.model.discriminator.base_channels},
            {"kernel", c.model.discriminator.kernel},
            {"stride", c.model.discriminator.stride},
            {"leaky_slope", c.model.discriminator.leaky_slope},
            {"use_norm", c.model.discriminator.use_norm}}}}},
        {"train",
         {{"epochs", c.train.epochs},
          {"batch", c.train.batch},
          {"lr", c.train.optimizer.lr},
          {"weight_decay", c.train.optimizer.weight_decay},
          {"grad_clip", c.train.grad_clip},
          {"lr_step_size", c.train.lr_step_size},
          {"lr_gamma", c.train.lr_gamma},
          {"lambda", c.train.lambda},
          {"max_steps_per_epoch", c.train.max_steps_per_epoch},
          {"divergence_guard", c.train.divergence_guard},
          {"divergence_factor", c.train.divergence_factor},
          {"wrap_aware_phase", c.train.wrap_aware_phase}}}};
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

} // namespace mrrecon::io
