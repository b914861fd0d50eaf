#include "udgan/pair_miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "udgan/image.hpp"

namespace udgan {

namespace {

std::vector<double> l2_normalize(const double* v, std::size_t d) {
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += v[i] * v[i];
    norm = std::sqrt(norm);
    if (norm == 0.0 || !std::isfinite(norm)) {
        throw NumericError("reid_distance: zero or non-finite vector");
    }
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = v[i] / norm;
    return out;
}

// rows normalized once; distances computed on demand
struct NormalizedSet {
    std::size_t m, d;
    std::vector<double> rows;

    explicit NormalizedSet(const Tensor& embeddings) {
        if (embeddings.ndim() != 2) {
            throw ShapeError("embeddings must be [M,d]");
        }
        m = static_cast<std::size_t>(embeddings.dim(0));
        d = static_cast<std::size_t>(embeddings.dim(1));
        rows.resize(m * d);
        for (std::size_t i = 0; i < m; ++i) {
            auto n = l2_normalize(embeddings.data() + i * d, d);
            std::copy(n.begin(), n.end(), rows.begin() + i * d);
        }
    }

    double dist(std::size_t i, std::size_t j) const {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = rows[i * d + k] - rows[j * d + k];
            s += diff * diff;
        }
        return std::sqrt(s);
    }
};

}  // namespace

double reid_distance(const std::vector<double>& a,
                     const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw ShapeError("reid_distance: dimension mismatch");
    }
    const auto na = l2_normalize(a.data(), a.size());
    const auto nb = l2_normalize(b.data(), b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = na[i] - nb[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double reid_distance(const Tensor& embeddings, std::size_t i, std::size_t j) {
    NormalizedSet set(embeddings);
    return set.dist(i, j);
}

std::vector<std::vector<std::size_t>> rank_all(const Tensor& embeddings) {
    const NormalizedSet set(embeddings);
    if (set.m < 2) throw ShapeError("rank_all: need at least two embeddings");
    std::vector<std::vector<std::size_t>> ranked(set.m);
    for (std::size_t i = 0; i < set.m; ++i) {
        std::vector<std::pair<double, std::size_t>> cands;
        cands.reserve(set.m - 1);
        for (std::size_t j = 0; j < set.m; ++j) {
            if (j != i) cands.emplace_back(set.dist(i, j), j);
        }
        std::sort(cands.begin(), cands.end());
        ranked[i].reserve(cands.size());
        for (const auto& [d, j] : cands) ranked[i].push_back(j);
    }
    return ranked;
}

std::pair<std::vector<MinedPair>, MiningReport> mine_pairs(
    const Tensor& embeddings, int k) {
    if (k < 1) throw NumericError("mine_pairs: k must be >= 1");
    const auto ranked = rank_all(embeddings);
    const NormalizedSet set(embeddings);
    std::vector<MinedPair> pairs;
    pairs.reserve(ranked.size());
    MiningReport report;
    report.total_queries = ranked.size();
    for (std::size_t q = 0; q < ranked.size(); ++q) {
        const std::size_t m = ranked[q][0];
        const auto& of_match = ranked[m];
        const std::size_t limit =
            std::min<std::size_t>(static_cast<std::size_t>(k), of_match.size());
        const bool mutual =
            std::find(of_match.begin(), of_match.begin() + limit, q) !=
            of_match.begin() + limit;
        if (mutual) {
            pairs.push_back({q, m, false, set.dist(q, m)});
            ++report.kept_pairs;
        } else {
            pairs.push_back({q, q, true, 0.0});
            ++report.self_pairs;
        }
    }
    report.kept_fraction = static_cast<double>(report.kept_pairs) /
                           static_cast<double>(report.total_queries);
    return {std::move(pairs), report};
}

MiningReport validate_mining(const std::vector<MinedPair>& pairs,
                             const std::vector<int>& true_labels) {
    MiningReport report;
    report.total_queries = pairs.size();
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        if (p.query_index >= true_labels.size() ||
            p.match_index >= true_labels.size()) {
            throw DataError("validate_mining: missing label for pair index");
        }
        if (p.is_self_pair) {
            ++report.self_pairs;
        } else {
            ++report.kept_pairs;
            if (true_labels[p.query_index] == true_labels[p.match_index]) {
                ++correct;
            }
        }
    }
    report.kept_fraction =
        report.total_queries == 0
            ? 0.0
            : static_cast<double>(report.kept_pairs) /
                  static_cast<double>(report.total_queries);
    if (report.kept_pairs > 0) {
        report.precision = static_cast<double>(correct) /
                           static_cast<double>(report.kept_pairs);
    }
    return report;
}

void export_pairs_csv(const std::vector<MinedPair>& pairs,
                      const std::vector<std::string>& paths,
                      const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot write " + csv_path.string());
    out << "query_path,match_path,is_self_pair,distance\n";
    out.precision(17);
    for (const auto& p : pairs) {
        out << paths.at(p.query_index) << ',' << paths.at(p.match_index) << ','
            << (p.is_self_pair ? 1 : 0) << ',' << p.distance << '\n';
    }
}

std::string format_mining_report(const MiningReport& report) {
    std::ostringstream os;
    os << "mined pairs: " << report.total_queries << " queries, "
       << report.kept_pairs << " kept (" << report.kept_fraction * 100.0
       << "%), " << report.self_pairs << " self-pairs";
    if (report.precision) {
        os << ", precision " << *report.precision * 100.0 << "%";
    }
    os << "\n";
    return os.str();
}

}  // namespace udgan
