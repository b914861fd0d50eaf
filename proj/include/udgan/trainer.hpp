#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "udgan/config.hpp"
#include "udgan/core_data.hpp"
#include "udgan/networks.hpp"
#include "udgan/pair_miner.hpp"

namespace udgan {

enum class StepDomain { source, target };

// One row of the training metric log; fields that a step does not produce
// stay empty in the CSV.
struct MetricRow {
    int stage = 0;
    int epoch = 0;
    char step_domain = 'S';
    std::optional<double> loss_id;
    std::optional<double> loss_rec;
    std::optional<double> loss_kl;
    std::optional<double> loss_adv_g;
    std::optional<double> loss_adv_d;
    double lr = 0.0;
};

void write_metric_csv(const std::filesystem::path& path,
                      const std::vector<MetricRow>& rows);

// lr0 * (1 + cos(pi * t / T)) / 2
double cosine_lr(int epoch, int total, double lr0);

// Strict S,T,S,T,... interleave; one schedule epoch spans the source
// batches, the shorter target stream cycles.
std::vector<StepDomain> make_alternating_schedule(int num_source_batches,
                                                  int num_target_batches);

struct StageResult {
    std::vector<MetricRow> metrics;
    // checksum of the frozen parameter group, sampled before epoch 0 and
    // after every epoch of the frozen phase
    std::vector<std::uint64_t> frozen_checksums;
    double final_train_accuracy = 0.0;            // stage 1
    std::vector<double> epoch_recon_loss;         // stages 2/3
    std::vector<MinedPair> pairs;                 // stage 2/3 input pairs
    MiningReport mining_report;
    std::vector<char> step_domains;               // stage 3 step log
};

// Stage 1: identity branch on the labelled source domain, cosine-annealed
// AMSGrad, classifier-only warmup.
StageResult run_stage1(UdganModel& model, const TrainConfig& cfg,
                       const DatasetManifest& source, ImageStore& store);

// Stage 2: mines pairs with the frozen encoder, then trains content head,
// generator and discriminator on the target objective.
StageResult run_stage2(UdganModel& model, const TrainConfig& cfg,
                       const DatasetManifest& target, ImageStore& store);

// Stage 3: joint training, batches strictly alternating between domains.
StageResult run_stage3(UdganModel& model, const TrainConfig& cfg,
                       const DatasetManifest& source, ImageStore& source_store,
                       const DatasetManifest& target, ImageStore& target_store);

// Classification accuracy of the identity branch over the train split.
double evaluate_train_accuracy(UdganModel& model,
                               const DatasetManifest& manifest,
                               ImageStore& store, int batch_size);

// Embeds a manifest split with the identity encoder, graph-free.
Tensor embed_split(UdganModel& model, const DatasetManifest& manifest,
                   ImageStore& store, const std::vector<std::size_t>& indices,
                   int batch_size);

// Held-out swap check: the judge encoder must place v_Id of the
// identity-swapped generation closer to its identity source than to a
// random different identity. Returns the success fraction over the
// query/gallery same-identity pairs (both orders).
double identity_preservation_score(UdganModel& trained, UdganModel& judge,
                                   const DatasetManifest& manifest,
                                   ImageStore& store, std::uint64_t seed);

}  // namespace udgan
