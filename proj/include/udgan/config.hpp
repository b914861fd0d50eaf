#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "udgan/errors.hpp"
#include "udgan/losses.hpp"
#include "udgan/networks.hpp"

namespace udgan {

struct Stage1Config {
    int epochs = 100;
    int batch_size = 32;
    double lr = 1.5e-4;
    int warmup_epochs = 20;  // only the classifier layer trains
    std::string optimizer = "amsgrad";
    double beta1 = 0.9;
    double beta2 = 0.999;
};

struct Stage2Config {
    int epochs = 200;
    int batch_size = 16;  // images; must be even (8 pairs)
    double lr = 2e-4;
    std::string generator_optimizer = "adam";
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::string discriminator_optimizer = "sgd";
    double momentum = 0.9;
};

struct Stage3Config {
    int epochs = 400;  // counted on the source dataset
    double lr = 2e-5;
    int source_batch_size = 32;
    int target_batch_size = 16;
};

// Everything the trainer needs; dataset locations live in RunConfig.
struct TrainConfig {
    NetworkConfig net;
    LossWeights loss;
    ReconTargetMode recon_mode = ReconTargetMode::content_source;
    Stage1Config stage1;
    Stage2Config stage2;
    Stage3Config stage3;
    int miner_k = 5;
    std::uint64_t seed = 0;
    int eval_batch_size = 32;
};

struct DataConfig {
    std::string source_root;
    std::string target_root;
    std::string pattern = R"(^(-?\d+)_c(\d+))";
    std::string train_dir = "train";
    std::string query_dir = "query";
    std::string gallery_dir = "gallery";
};

struct RunConfig {
    TrainConfig train;
    DataConfig data;
};

// Defaults follow the published training recipe.
RunConfig default_run_config();

// Strict parse: unknown keys are rejected at every level, types are
// checked, missing keys fall back to defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Deterministic (alphabetically keyed) serialization of the effective
// config; written verbatim into each run's output directory.
std::string serialize_run_config(const RunConfig& cfg);

void validate(const RunConfig& cfg);

LabelPattern label_pattern(const RunConfig& cfg);
SplitLayout split_layout(const RunConfig& cfg);

}  // namespace udgan
