#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "udgan/errors.hpp"
#include "udgan/tensor.hpp"

namespace udgan {

// One mined same-identity candidate pair; exactly one per target image.
struct MinedPair {
    std::size_t query_index = 0;
    std::size_t match_index = 0;
    bool is_self_pair = false;
    double distance = 0.0;
};

struct MiningReport {
    std::size_t total_queries = 0;
    std::size_t kept_pairs = 0;
    std::size_t self_pairs = 0;
    double kept_fraction = 0.0;
    // only computable when ground-truth labels are supplied for validation
    std::optional<double> precision;
};

// Euclidean distance between L2-normalized vectors. Scale invariant,
// symmetric, zero iff the directions coincide.
double reid_distance(const std::vector<double>& a,
                     const std::vector<double>& b);
double reid_distance(const Tensor& embeddings, std::size_t i, std::size_t j);

// For each row of [M,d], every other index sorted by ascending
// reid_distance, ties broken toward the smaller index.
std::vector<std::vector<std::size_t>> rank_all(const Tensor& embeddings);

// Mutual top-k filter: query q with top-1 match m is kept iff q appears in
// the top-k list of m; rejected queries fall back to a self-pair.
std::pair<std::vector<MinedPair>, MiningReport> mine_pairs(
    const Tensor& embeddings, int k = 5);

// Fills in precision over non-self pairs; self-pairs counted separately.
MiningReport validate_mining(const std::vector<MinedPair>& pairs,
                             const std::vector<int>& true_labels);

void export_pairs_csv(const std::vector<MinedPair>& pairs,
                      const std::vector<std::string>& paths,
                      const std::filesystem::path& csv_path);

std::string format_mining_report(const MiningReport& report);

}  // namespace udgan
