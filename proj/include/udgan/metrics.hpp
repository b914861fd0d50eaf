#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "udgan/core_data.hpp"
#include "udgan/tensor.hpp"

namespace udgan {

struct IdCam {
    int identity = 0;
    int camera = 1;
};

struct QueryRecord {
    std::size_t query_index = 0;
    double average_precision = 0.0;
    int first_match_rank = 0;  // 1-based
};

struct EvalReport {
    std::vector<double> cmc;  // cmc[k-1] = cmc@k
    double map = 0.0;
    int num_valid_queries = 0;
    int num_skipped_queries = 0;
    std::vector<QueryRecord> per_query;

    double cmc_at(int k) const;  // clamps k beyond the curve length
};

// Cross-camera protocol: gallery items sharing both identity and camera
// with the query are excluded from its ranking.
std::vector<char> valid_gallery_mask(const IdCam& query,
                                     const std::vector<IdCam>& gallery);

// Unmasked gallery indices by ascending reid_distance, ties by index.
// Throws DataError when the mask leaves nothing to rank.
std::vector<std::size_t> rank_gallery(const std::vector<double>& query_vec,
                                      const Tensor& gallery_vecs,
                                      const std::vector<char>& mask);

// Fraction of queries with at least one true match among their top k flags.
double cmc_at_k(const std::vector<std::vector<char>>& flags_per_query, int k);

// (1/R) * sum over hit positions of precision-at-hit.
double average_precision(const std::vector<char>& flags);

// Embeds nothing itself: operates on precomputed embeddings.
EvalReport evaluate_embeddings(const std::vector<IdCam>& query_meta,
                               const Tensor& query_vecs,
                               const std::vector<IdCam>& gallery_meta,
                               const Tensor& gallery_vecs);

// Batched embedding of manifest splits followed by evaluate_embeddings.
using EncoderFn = std::function<Tensor(const Tensor& images)>;
EvalReport evaluate(const DatasetManifest& manifest, ImageStore& store,
                    const EncoderFn& encoder, int batch_size = 32);

void export_eval_report_csv(const EvalReport& report, const std::string& tag,
                            const std::filesystem::path& csv_path);
void export_per_query_csv(const EvalReport& report,
                          const std::filesystem::path& csv_path);

}  // namespace udgan
