#pragma once

// Independent reference implementations used as oracles. These deliberately
// share no code with the library: distances, sorting, masking and the
// KL estimate are all re-derived from first principles here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "udgan/rng.hpp"

namespace udgan::test {

// --- Monte-Carlo KL(q || N(0,1)) for a diagonal Gaussian batch ---------------

// Samples x ~ q and averages log q(x) - log p(x). mu/logvar are row-major
// [n][d]; returns the batch mean of the per-row KL.
inline double mc_kl_estimate(const std::vector<std::vector<double>>& mu,
                             const std::vector<std::vector<double>>& logvar,
                             int num_samples, Rng& rng) {
    double batch_acc = 0.0;
    for (std::size_t r = 0; r < mu.size(); ++r) {
        double acc = 0.0;
        for (int s = 0; s < num_samples; ++s) {
            double log_ratio = 0.0;
            for (std::size_t j = 0; j < mu[r].size(); ++j) {
                const double sigma = std::exp(0.5 * logvar[r][j]);
                const double z = rng.normal();
                const double x = mu[r][j] + sigma * z;
                // log q = -0.5 log(2 pi sigma^2) - z^2 / 2
                // log p = -0.5 log(2 pi) - x^2 / 2
                log_ratio += -0.5 * logvar[r][j] - 0.5 * z * z + 0.5 * x * x;
            }
            acc += log_ratio;
        }
        batch_acc += acc / num_samples;
    }
    return batch_acc / static_cast<double>(mu.size());
}

// --- brute-force retrieval evaluation ----------------------------------

struct OracleItem {
    int identity;
    int camera;
    std::vector<double> vec;
};

struct OracleEval {
    std::vector<double> cmc;
    double map = 0.0;
    int num_valid = 0;
};

inline std::vector<double> oracle_normalize(const std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

inline OracleEval brute_force_eval(const std::vector<OracleItem>& queries,
                                   const std::vector<OracleItem>& gallery) {
    OracleEval result;
    std::vector<std::vector<int>> all_flags;
    std::size_t longest = 0;
    for (const auto& q : queries) {
        const auto qn = oracle_normalize(q.vec);
        // protocol: drop same-id same-camera items
        std::vector<std::pair<double, std::size_t>> order;
        bool any_match = false;
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            if (gallery[g].identity == q.identity &&
                gallery[g].camera == q.camera) {
                continue;
            }
            const auto gn = oracle_normalize(gallery[g].vec);
            double s = 0.0;
            for (std::size_t k = 0; k < gn.size(); ++k) {
                s += (qn[k] - gn[k]) * (qn[k] - gn[k]);
            }
            order.emplace_back(std::sqrt(s), g);
            if (gallery[g].identity == q.identity && q.identity >= 0) {
                any_match = true;
            }
        }
        if (!any_match) continue;  // invalid query
        std::sort(order.begin(), order.end());
        std::vector<int> flags;
        flags.reserve(order.size());
        for (const auto& [d, g] : order) {
            flags.push_back(gallery[g].identity == q.identity ? 1 : 0);
        }
        longest = std::max(longest, flags.size());
        all_flags.push_back(std::move(flags));
    }
    if (all_flags.empty()) {
        throw std::runtime_error("oracle: no valid query");
    }
    result.num_valid = static_cast<int>(all_flags.size());
    result.cmc.assign(longest, 0.0);
    double map_acc = 0.0;
    for (const auto& flags : all_flags) {
        // CMC contribution
        std::size_t first = longest + 1;
        for (std::size_t i = 0; i < flags.size(); ++i) {
            if (flags[i]) {
                first = i;
                break;
            }
        }
        for (std::size_t k = first; k < longest; ++k) result.cmc[k] += 1.0;
        // AP
        int total = 0;
        for (int f : flags) total += f;
        double ap = 0.0;
        int hit = 0;
        for (std::size_t i = 0; i < flags.size(); ++i) {
            if (flags[i]) {
                ++hit;
                ap += static_cast<double>(hit) / static_cast<double>(i + 1);
            }
        }
        map_acc += ap / total;
    }
    for (auto& v : result.cmc) v /= result.num_valid;
    result.map = map_acc / result.num_valid;
    return result;
}

// --- brute-force pair miner --------------------------------------------------

struct OraclePair {
    std::size_t query;
    std::size_t match;
    bool self_pair;
};

inline std::vector<OraclePair> brute_force_mine(
    const std::vector<std::vector<double>>& embeddings, int k) {
    const std::size_t m = embeddings.size();
    std::vector<std::vector<double>> normed;
    normed.reserve(m);
    for (const auto& e : embeddings) normed.push_back(oracle_normalize(e));
    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t t = 0; t < normed[i].size(); ++t) {
            s += (normed[i][t] - normed[j][t]) * (normed[i][t] - normed[j][t]);
        }
        return std::sqrt(s);
    };
    // full ranked lists for every point
    std::vector<std::vector<std::size_t>> lists(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t j = 0; j < m; ++j) {
            if (j != i) order.emplace_back(dist(i, j), j);
        }
        std::sort(order.begin(), order.end());
        for (const auto& [d, j] : order) lists[i].push_back(j);
    }
    std::vector<OraclePair> pairs;
    for (std::size_t q = 0; q < m; ++q) {
        const std::size_t top = lists[q][0];
        bool mutual = false;
        for (std::size_t r = 0;
             r < std::min<std::size_t>(k, lists[top].size()); ++r) {
            if (lists[top][r] == q) {
                mutual = true;
                break;
            }
        }
        if (mutual) {
            pairs.push_back({q, top, false});
        } else {
            pairs.push_back({q, q, true});
        }
    }
    return pairs;
}

// Raw top-1 pairing precision (no filter), for the filter-precision property.
inline double raw_top1_precision(
    const std::vector<std::vector<double>>& embeddings,
    const std::vector<int>& labels) {
    const auto pairs = brute_force_mine(embeddings, static_cast<int>(1e9));
    // with k = inf every pair is mutual, giving plain top-1 pairing
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        if (labels[p.query] == labels[p.match]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace udgan::test
