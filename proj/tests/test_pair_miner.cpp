#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "udgan/pair_miner.hpp"

using namespace udgan;

namespace {

Tensor embeddings_from(const std::vector<std::vector<double>>& rows) {
    const std::int64_t m = static_cast<std::int64_t>(rows.size());
    const std::int64_t d = static_cast<std::int64_t>(rows[0].size());
    std::vector<double> flat;
    flat.reserve(m * d);
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor::from_vector({m, d}, std::move(flat));
}

// Gaussian clusters: `ids` identities, `per` points each.
std::pair<std::vector<std::vector<double>>, std::vector<int>> clustered(
    int ids, int per, double spread, Rng& rng) {
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    const int d = 8;
    for (int c = 0; c < ids; ++c) {
        std::vector<double> center(d);
        for (auto& v : center) v = rng.normal();
        for (int p = 0; p < per; ++p) {
            std::vector<double> row(d);
            for (int j = 0; j < d; ++j) {
                row[j] = center[j] + spread * rng.normal();
            }
            rows.push_back(row);
            labels.push_back(c);
        }
    }
    return {rows, labels};
}

}  // namespace

TEST_CASE("reid_distance basics") {
    std::vector<double> a = {3.0, 0.0};
    CHECK(reid_distance(a, a) == 0.0);

    std::vector<double> e1 = {1.0, 0.0}, e2 = {0.0, 1.0};
    CHECK(reid_distance(e1, e2) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    std::vector<double> b = {0.2, 0.7};
    std::vector<double> b_scaled = {0.2 * 17.0, 0.7 * 17.0};
    CHECK(reid_distance(a, b) ==
          doctest::Approx(reid_distance(a, b_scaled)).epsilon(1e-12));

    std::vector<double> zero = {0.0, 0.0};
    CHECK_THROWS_AS(reid_distance(a, zero), NumericError);
}

TEST_CASE("rank_all orders the stated 2-d example") {
    auto emb = embeddings_from({{1.0, 0.0}, {0.99, 0.14}, {0.0, 1.0}});
    auto ranked = rank_all(emb);
    CHECK(ranked[0][0] == 1);
    CHECK(ranked[0][1] == 2);
    // brute-force agreement on the full lists
    auto oracle = test::brute_force_mine({{1.0, 0.0}, {0.99, 0.14}, {0.0, 1.0}},
                                         1);
    CHECK(oracle[0].match == 1);
}

TEST_CASE("rank_all is equivariant under row permutation") {
    Rng rng(50);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 6; ++i) {
        rows.push_back({rng.normal(), rng.normal(), rng.normal()});
    }
    auto ranked = rank_all(embeddings_from(rows));
    // swap rows 1 and 4
    auto swapped = rows;
    std::swap(swapped[1], swapped[4]);
    auto ranked_sw = rank_all(embeddings_from(swapped));
    auto map_idx = [](std::size_t i) {
        if (i == 1) return std::size_t{4};
        if (i == 4) return std::size_t{1};
        return i;
    };
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& a = ranked[i];
        const auto& b = ranked_sw[map_idx(i)];
        REQUIRE(a.size() == b.size());
        for (std::size_t r = 0; r < a.size(); ++r) {
            CHECK(map_idx(a[r]) == b[r]);
        }
    }
}

TEST_CASE("rank_all breaks ties toward the smaller index") {
    auto emb = embeddings_from({{1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}});
    // all three normalize to the same direction: every distance is zero
    auto ranked = rank_all(emb);
    CHECK(ranked[0] == std::vector<std::size_t>{1, 2});
    CHECK(ranked[1] == std::vector<std::size_t>{0, 2});
    CHECK(ranked[2] == std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(rank_all(embeddings_from({{1.0, 0.0}})), ShapeError);
}

TEST_CASE("mine_pairs: two mutually nearest clusters keep everything") {
    auto emb = embeddings_from({{1.0, 0.01},
                                {1.0, 0.02},
                                {0.01, 1.0},
                                {0.02, 1.0}});
    auto [pairs, report] = mine_pairs(emb, 5);
    CHECK(report.total_queries == 4);
    CHECK(report.kept_pairs == 4);
    CHECK(report.self_pairs == 0);
    CHECK(pairs[0].match_index == 1);
    CHECK(pairs[2].match_index == 3);
}

TEST_CASE("mine_pairs: the outlier falls back to a self-pair") {
    // points on a line, embedded as (x, 1) and implicitly normalized
    auto emb = embeddings_from(
        {{0.0, 1.0}, {0.1, 1.0}, {0.2, 1.0}, {5.0, 1.0}});
    auto [pairs, report] = mine_pairs(emb, 2);
    // the outlier's best match is 0.2, but it is not in the top-2 of 0.2
    CHECK(pairs[3].is_self_pair);
    CHECK(pairs[3].match_index == 3);
    CHECK(report.self_pairs == 1);
    CHECK(report.kept_pairs == 3);
    CHECK(report.kept_fraction == doctest::Approx(0.75));
}

TEST_CASE("mine_pairs: M=2 forces mutuality") {
    auto emb = embeddings_from({{1.0, 0.3}, {0.2, 1.0}});
    auto [pairs, report] = mine_pairs(emb, 5);
    CHECK(report.kept_pairs == 2);
    CHECK(pairs[0].match_index == 1);
    CHECK(pairs[1].match_index == 0);
}

TEST_CASE("mine_pairs partitions the query set") {
    Rng rng(51);
    auto [rows, labels] = clustered(5, 4, 0.3, rng);
    auto [pairs, report] = mine_pairs(embeddings_from(rows), 5);
    CHECK(pairs.size() == rows.size());
    CHECK(report.kept_pairs + report.self_pairs == report.total_queries);
    for (std::size_t q = 0; q < pairs.size(); ++q) {
        CHECK(pairs[q].query_index == q);
        CHECK((pairs[q].is_self_pair == (pairs[q].match_index == q)));
        CHECK(pairs[q].distance >= 0.0);
    }
}

TEST_CASE("mine_pairs is deterministic") {
    Rng rng(52);
    auto [rows, labels] = clustered(4, 3, 0.5, rng);
    auto emb = embeddings_from(rows);
    auto [p1, r1] = mine_pairs(emb, 3);
    auto [p2, r2] = mine_pairs(emb, 3);
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].match_index == p2[i].match_index);
        CHECK(p1[i].is_self_pair == p2[i].is_self_pair);
    }
}

TEST_CASE("mine_pairs matches the brute-force reference exactly") {
    Rng rng(53);
    auto [rows, labels] = clustered(20, 10, 0.6, rng);  // 200 points
    auto [pairs, report] = mine_pairs(embeddings_from(rows), 5);
    auto oracle = test::brute_force_mine(rows, 5);
    REQUIRE(pairs.size() == oracle.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs[i].query_index == oracle[i].query);
        CHECK(pairs[i].match_index == oracle[i].match);
        CHECK(pairs[i].is_self_pair == oracle[i].self_pair);
    }
}

TEST_CASE("filtering does not hurt precision on clustered data") {
    Rng rng(54);
    double filtered_acc = 0.0, raw_acc = 0.0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        auto [rows, labels] = clustered(20, 4, 0.8, rng);
        auto [pairs, report] = mine_pairs(embeddings_from(rows), 5);
        auto validated = validate_mining(pairs, labels);
        REQUIRE(validated.precision.has_value());
        filtered_acc += *validated.precision;
        raw_acc += test::raw_top1_precision(rows, labels);
    }
    CHECK(filtered_acc / trials >= raw_acc / trials);
}

TEST_CASE("validate_mining counts correctly") {
    std::vector<MinedPair> pairs = {
        {0, 1, false, 0.1},
        {1, 0, false, 0.1},
        {2, 3, false, 0.2},
        {3, 0, false, 0.5},
        {4, 4, true, 0.0},
    };
    std::vector<int> labels = {7, 7, 9, 9, 11};
    auto report = validate_mining(pairs, labels);
    REQUIRE(report.precision.has_value());
    CHECK(*report.precision == doctest::Approx(0.75));
    CHECK(report.self_pairs == 1);

    std::vector<MinedPair> all_correct = {{0, 1, false, 0.1},
                                          {1, 0, false, 0.1}};
    auto rep2 = validate_mining(all_correct, {3, 3});
    CHECK(*rep2.precision == 1.0);

    std::vector<MinedPair> only_self = {{0, 0, true, 0.0}, {1, 1, true, 0.0}};
    auto rep3 = validate_mining(only_self, {1, 2});
    CHECK_FALSE(rep3.precision.has_value());

    std::vector<MinedPair> unlabeled = {{0, 9, false, 0.1}};
    CHECK_THROWS_AS(validate_mining(unlabeled, {1, 2}), DataError);
}

TEST_CASE("pair CSV export carries the declared header") {
    std::vector<MinedPair> pairs = {{0, 1, false, 0.25}, {1, 1, true, 0.0}};
    std::vector<std::string> paths = {"train/a.png", "train/b.png"};
    auto csv = std::filesystem::temp_directory_path() / "udgan_pairs_test.csv";
    export_pairs_csv(pairs, paths, csv);
    std::ifstream in(csv);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "query_path,match_path,is_self_pair,distance");
    REQUIRE(std::getline(in, line));
    CHECK(line.rfind("train/a.png,train/b.png,0,", 0) == 0);
    REQUIRE(std::getline(in, line));
    CHECK(line.rfind("train/b.png,train/b.png,1,", 0) == 0);
}
