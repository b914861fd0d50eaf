#include "udgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "udgan/pair_miner.hpp"

namespace udgan {

double EvalReport::cmc_at(int k) const {
    if (cmc.empty() || k < 1) return 0.0;
    const std::size_t i = std::min<std::size_t>(k, cmc.size());
    return cmc[i - 1];
}

std::vector<char> valid_gallery_mask(const IdCam& query,
                                     const std::vector<IdCam>& gallery) {
    std::vector<char> mask(gallery.size(), 1);
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        if (gallery[i].identity == query.identity &&
            gallery[i].camera == query.camera) {
            mask[i] = 0;
        }
    }
    return mask;
}

namespace {

std::vector<double> l2_normalized_row(const double* v, std::size_t d) {
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += v[i] * v[i];
    norm = std::sqrt(norm);
    if (norm == 0.0 || !std::isfinite(norm)) {
        throw NumericError("evaluate: zero or non-finite embedding");
    }
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = v[i] / norm;
    return out;
}

}  // namespace

std::vector<std::size_t> rank_gallery(const std::vector<double>& query_vec,
                                      const Tensor& gallery_vecs,
                                      const std::vector<char>& mask) {
    if (gallery_vecs.ndim() != 2 ||
        mask.size() != static_cast<std::size_t>(gallery_vecs.dim(0))) {
        throw ShapeError("rank_gallery: mask/gallery mismatch");
    }
    const std::size_t g = mask.size();
    const std::size_t d = static_cast<std::size_t>(gallery_vecs.dim(1));
    const auto q = l2_normalized_row(query_vec.data(), query_vec.size());
    std::vector<std::pair<double, std::size_t>> cands;
    for (std::size_t i = 0; i < g; ++i) {
        if (!mask[i]) continue;
        const auto row = l2_normalized_row(gallery_vecs.data() + i * d, d);
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = q[k] - row[k];
            s += diff * diff;
        }
        cands.emplace_back(std::sqrt(s), i);
    }
    if (cands.empty()) {
        throw DataError("rank_gallery: no valid gallery items for query");
    }
    std::sort(cands.begin(), cands.end());
    std::vector<std::size_t> out;
    out.reserve(cands.size());
    for (const auto& [dist, i] : cands) out.push_back(i);
    return out;
}

double cmc_at_k(const std::vector<std::vector<char>>& flags_per_query, int k) {
    if (flags_per_query.empty()) {
        throw DataError("cmc_at_k: no valid queries");
    }
    if (k < 1) throw NumericError("cmc_at_k: k must be >= 1");
    std::size_t hits = 0;
    for (const auto& flags : flags_per_query) {
        const std::size_t limit =
            std::min<std::size_t>(static_cast<std::size_t>(k), flags.size());
        for (std::size_t i = 0; i < limit; ++i) {
            if (flags[i]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) /
           static_cast<double>(flags_per_query.size());
}

double average_precision(const std::vector<char>& flags) {
    std::size_t total = 0;
    for (char f : flags) total += f ? 1 : 0;
    if (total == 0) throw DataError("average_precision: query has no match");
    double acc = 0.0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (flags[i]) {
            ++seen;
            acc += static_cast<double>(seen) / static_cast<double>(i + 1);
        }
    }
    return acc / static_cast<double>(total);
}

EvalReport evaluate_embeddings(const std::vector<IdCam>& query_meta,
                               const Tensor& query_vecs,
                               const std::vector<IdCam>& gallery_meta,
                               const Tensor& gallery_vecs) {
    if (query_meta.empty() || gallery_meta.empty()) {
        throw DataError("evaluate: empty query or gallery set");
    }
    if (query_vecs.dim(0) != static_cast<std::int64_t>(query_meta.size()) ||
        gallery_vecs.dim(0) != static_cast<std::int64_t>(gallery_meta.size())) {
        throw ShapeError("evaluate: meta/embedding count mismatch");
    }
    const std::size_t d = static_cast<std::size_t>(query_vecs.dim(1));

    EvalReport report;
    std::vector<std::vector<char>> flags_per_query;
    std::size_t max_len = 0;
    for (std::size_t qi = 0; qi < query_meta.size(); ++qi) {
        const auto& q = query_meta[qi];
        const auto mask = valid_gallery_mask(q, gallery_meta);
        // does any true match survive the mask?
        bool has_match = false;
        for (std::size_t gi = 0; gi < gallery_meta.size(); ++gi) {
            if (mask[gi] && gallery_meta[gi].identity == q.identity &&
                q.identity >= 0) {
                has_match = true;
                break;
            }
        }
        if (!has_match) {
            ++report.num_skipped_queries;
            continue;
        }
        std::vector<double> qv(query_vecs.data() + qi * d,
                               query_vecs.data() + (qi + 1) * d);
        const auto ranked = rank_gallery(qv, gallery_vecs, mask);
        std::vector<char> flags(ranked.size());
        int first = 0;
        double ap = 0.0;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            flags[r] =
                gallery_meta[ranked[r]].identity == q.identity ? 1 : 0;
            if (flags[r] && first == 0) first = static_cast<int>(r) + 1;
        }
        ap = average_precision(flags);
        report.per_query.push_back({qi, ap, first});
        max_len = std::max(max_len, flags.size());
        flags_per_query.push_back(std::move(flags));
    }
    if (flags_per_query.empty()) {
        throw DataError("evaluate: no valid queries under the protocol");
    }
    report.num_valid_queries = static_cast<int>(flags_per_query.size());
    report.cmc.resize(max_len);
    for (std::size_t k = 1; k <= max_len; ++k) {
        report.cmc[k - 1] = cmc_at_k(flags_per_query, static_cast<int>(k));
    }
    double sum_ap = 0.0;
    for (const auto& r : report.per_query) sum_ap += r.average_precision;
    report.map = sum_ap / static_cast<double>(report.num_valid_queries);
    return report;
}

EvalReport evaluate(const DatasetManifest& manifest, ImageStore& store,
                    const EncoderFn& encoder, int batch_size) {
    const auto query_idx = manifest.split_indices(Split::query);
    const auto gallery_idx = manifest.split_indices(Split::gallery);
    if (query_idx.empty() || gallery_idx.empty()) {
        throw DataError("evaluate: empty query or gallery split");
    }
    for (auto i : query_idx) {
        if (manifest.entries[i].identity < 0) {
            throw DataError("evaluate: distractor found in query split: " +
                            manifest.entries[i].path);
        }
    }

    auto embed_split = [&](const std::vector<std::size_t>& indices) {
        std::vector<Tensor> chunks;
        for (std::size_t off = 0; off < indices.size();
             off += static_cast<std::size_t>(batch_size)) {
            const std::size_t end = std::min(
                indices.size(), off + static_cast<std::size_t>(batch_size));
            std::vector<std::size_t> batch(indices.begin() + off,
                                           indices.begin() + end);
            chunks.push_back(encoder(stack_images(store, manifest, batch)));
        }
        return concat_rows(chunks);
    };

    auto meta_of = [&](const std::vector<std::size_t>& indices) {
        std::vector<IdCam> meta;
        meta.reserve(indices.size());
        for (auto i : indices) {
            meta.push_back(
                {manifest.entries[i].identity, manifest.entries[i].camera});
        }
        return meta;
    };

    return evaluate_embeddings(meta_of(query_idx), embed_split(query_idx),
                               meta_of(gallery_idx), embed_split(gallery_idx));
}

void export_eval_report_csv(const EvalReport& report, const std::string& tag,
                            const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot write " + csv_path.string());
    out << "tag,rank1,rank5,rank10,mAP,num_valid_queries\n";
    out.precision(17);
    out << tag << ',' << report.cmc_at(1) << ',' << report.cmc_at(5) << ','
        << report.cmc_at(10) << ',' << report.map << ','
        << report.num_valid_queries << '\n';
}

void export_per_query_csv(const EvalReport& report,
                          const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot write " + csv_path.string());
    out << "query_index,average_precision,first_match_rank\n";
    out.precision(17);
    for (const auto& r : report.per_query) {
        out << r.query_index << ',' << r.average_precision << ','
            << r.first_match_rank << '\n';
    }
}

}  // namespace udgan
