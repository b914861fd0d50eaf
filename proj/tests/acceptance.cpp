// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 5, 6 and 8 share the toy end-to-end runs.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "udgan/checkpoint.hpp"
#include "udgan/config.hpp"
#include "udgan/metrics.hpp"
#include "udgan/trainer.hpp"

#include <json.hpp>

using namespace udgan;
namespace fs = std::filesystem;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& what) {
    if (!cond) throw CheckFailure(what);
}

// --- toy end-to-end fixture ----------------------------------------------

// Repository fixtures for the desk-scale run; thresholds asserted below are
// properties of this setup, not claims about large-scale training.
TrainConfig toy_train_config() {
    TrainConfig cfg;
    cfg.net.image_h = 48;
    cfg.net.image_w = 16;
    cfg.net.latent_dim = 48;
    cfg.net.generator_blocks = 4;
    cfg.net.generator_channels = 96;
    cfg.net.discriminator_blocks = 4;
    cfg.net.discriminator_channels = 12;
    cfg.net.trunk_channels = {12, 24, 48};
    cfg.net.dropout_rate = 0.2;
    cfg.seed = 12345;
    cfg.stage1 = {60, 32, 1e-2, 3, "amsgrad", 0.9, 0.999};
    cfg.stage2 = {30, 16, 1e-3, "adam", 0.9, 0.999, "sgd", 0.9};
    cfg.stage3 = {10, 1e-4, 32, 16};
    cfg.miner_k = 5;
    cfg.eval_batch_size = 32;
    return cfg;
}

struct ToyRun {
    StageResult s1, s2, s3;
    double id_preservation = 0.0;
    std::string metrics_csv;  // all three stages concatenated
};

ToyRun run_toy_pipeline() {
    const TrainConfig cfg = toy_train_config();

    SyntheticSpec spec;
    spec.num_identities = 16;
    spec.images_per_identity = 8;
    spec.height = cfg.net.image_h;
    spec.width = cfg.net.image_w;

    const fs::path base = fs::temp_directory_path() / "udgan_acceptance";
    spec.seed = 501;
    const fs::path source_root = base / "source";
    fs::remove_all(source_root);
    auto source = make_synthetic(spec, source_root);
    spec.seed = 502;
    const fs::path target_root = base / "target";
    fs::remove_all(target_root);
    auto target = make_synthetic(spec, target_root);

    ImageStore sstore(source_root, cfg.net.image_h, cfg.net.image_w,
                      cfg.net.pixel);
    ImageStore tstore(target_root, cfg.net.image_h, cfg.net.image_w,
                      cfg.net.pixel);

    Rng init = Rng(cfg.seed).fork("model-init");
    UdganModel model =
        UdganModel::build(cfg.net, source.num_train_identities(), init);

    ToyRun run;
    run.s1 = run_stage1(model, cfg, source, sstore);
    Checkpoint stage1_ckpt = snapshot_model(model, 1, "");
    run.s2 = run_stage2(model, cfg, target, tstore);
    run.s3 = run_stage3(model, cfg, source, sstore, target, tstore);

    Rng judge_init = Rng(cfg.seed).fork("model-init");
    UdganModel judge =
        UdganModel::build(cfg.net, source.num_train_identities(), judge_init);
    restore_model(judge, stage1_ckpt);
    run.id_preservation =
        identity_preservation_score(model, judge, target, tstore, cfg.seed);

    std::vector<MetricRow> all_rows;
    for (const auto* r : {&run.s1, &run.s2, &run.s3}) {
        all_rows.insert(all_rows.end(), r->metrics.begin(), r->metrics.end());
    }
    const fs::path csv = base / "metrics.csv";
    write_metric_csv(csv, all_rows);
    std::ifstream in(csv);
    run.metrics_csv.assign((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    return run;
}

const ToyRun& toy_run() {
    static ToyRun run = run_toy_pipeline();
    return run;
}

double smoothed_mean(const std::vector<double>& values, std::size_t begin,
                     std::size_t count) {
    double acc = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i) acc += values[i];
    return acc / static_cast<double>(count);
}

// --- criterion bodies ---------------------------------------------------

void criterion_loss_gradients() {
    Rng rng(71);
    double worst = 0.0;

    auto logits = Tensor::randn({8, 8}, rng, 1.0, true);  // 64 elements
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) {
        labels.push_back(static_cast<int>(rng.uniform_index(8)));
    }
    worst = std::max(worst,
                     test::gradcheck([&] { return identity_loss(logits, labels,
                                                                0.1); },
                                     {logits})
                         .max_rel_err);

    auto mu = Tensor::randn({4, 8}, rng, 1.0, true);
    auto lv = Tensor::randn({4, 8}, rng, 0.5, true);
    worst = std::max(
        worst,
        test::gradcheck([&] { return kl_loss(mu, lv); }, {mu, lv}).max_rel_err);

    auto real = Tensor::randn({2, 1, 4, 4}, rng, 1.0, true);
    auto fake = Tensor::randn({2, 1, 4, 4}, rng, 1.0, true);
    worst = std::max(worst, test::gradcheck(
                                [&] { return adversarial_loss_d(real, fake); },
                                {real, fake})
                                .max_rel_err);
    worst = std::max(
        worst, test::gradcheck([&] { return adversarial_loss_g(fake); }, {fake})
                   .max_rel_err);

    auto g11 = Tensor::randn({1, 3, 2, 2}, rng, 1.0, true);
    auto g12 = Tensor::randn({1, 3, 2, 2}, rng, 1.0, true);
    auto g21 = Tensor::randn({1, 3, 2, 2}, rng, 1.0, true);
    auto g22 = Tensor::randn({1, 3, 2, 2}, rng, 1.0, true);
    auto t1 = Tensor::randn({1, 3, 2, 2}, rng);
    auto t2 = Tensor::randn({1, 3, 2, 2}, rng);
    worst = std::max(
        worst,
        test::gradcheck(
            [&] {
                GeneratedQuad quad{g11, g12, g21, g22};
                return reconstruction_loss(quad, t1, t2,
                                           ReconTargetMode::content_source);
            },
            {g11, g12, g21, g22})
            .max_rel_err);

    std::ostringstream os;
    os << "max relative error " << worst;
    expect(worst < 1e-4, "gradient mismatch: " + os.str());
    std::cout << "    " << os.str() << "\n";
}

void criterion_kl_oracle() {
    Rng rng(72);
    Rng mc(73);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 16;
        std::vector<std::vector<double>> mu(1), lv(1);
        for (int j = 0; j < d; ++j) {
            mu[0].push_back(rng.uniform(-2.0, 2.0));
            lv[0].push_back(rng.uniform(-1.0, 1.0));
        }
        const double closed =
            kl_loss(Tensor::from_vector({1, d}, mu[0]),
                    Tensor::from_vector({1, d}, lv[0]))
                .item();
        const double estimate = test::mc_kl_estimate(mu, lv, 100000, mc);
        worst = std::max(worst, std::abs(closed - estimate) / closed);
    }
    std::ostringstream os;
    os << "max relative deviation " << worst << " over 20 draws";
    expect(worst < 0.01, "KL Monte-Carlo deviation too large: " + os.str());
    std::cout << "    " << os.str() << "\n";
}

void criterion_metrics_oracle() {
    Rng rng(74);
    const int ids = 12;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<IdCam> qm, gm;
        std::vector<std::vector<double>> qv, gv;
        auto rand_vec = [&] {
            std::vector<double> v(6);
            for (auto& x : v) x = rng.normal();
            return v;
        };
        for (int i = 0; i < 30; ++i) {
            qm.push_back({static_cast<int>(rng.uniform_index(ids)),
                          1 + static_cast<int>(rng.uniform_index(4))});
            qv.push_back(rand_vec());
        }
        for (int i = 0; i < 70; ++i) {
            const int id = rng.uniform() < 0.2
                               ? -1  // distractor
                               : static_cast<int>(rng.uniform_index(ids));
            gm.push_back({id, 1 + static_cast<int>(rng.uniform_index(4))});
            gv.push_back(rand_vec());
        }
        // guarantee a cross-camera match for every query (gallery = 100)
        for (int i = 0; i < 30; ++i) {
            gm.push_back({qm[i].identity, 1 + (qm[i].camera % 4)});
            gv.push_back(rand_vec());
        }

        auto to_tensor = [](const std::vector<std::vector<double>>& rows) {
            std::vector<double> flat;
            for (const auto& r : rows) {
                flat.insert(flat.end(), r.begin(), r.end());
            }
            return Tensor::from_vector(
                {static_cast<std::int64_t>(rows.size()), 6}, std::move(flat));
        };
        auto report = evaluate_embeddings(qm, to_tensor(qv), gm, to_tensor(gv));

        std::vector<test::OracleItem> oq, og;
        for (std::size_t i = 0; i < qm.size(); ++i) {
            oq.push_back({qm[i].identity, qm[i].camera, qv[i]});
        }
        for (std::size_t i = 0; i < gm.size(); ++i) {
            og.push_back({gm[i].identity, gm[i].camera, gv[i]});
        }
        auto oracle = test::brute_force_eval(oq, og);

        expect(report.num_valid_queries == oracle.num_valid,
               "valid-query count differs from oracle");
        expect(report.cmc.size() == oracle.cmc.size(),
               "cmc curve length differs from oracle");
        worst = std::max(worst, std::abs(report.map - oracle.map));
        for (std::size_t k = 0; k < oracle.cmc.size(); ++k) {
            worst = std::max(worst, std::abs(report.cmc[k] - oracle.cmc[k]));
        }
    }
    std::ostringstream os;
    os << "max |difference| " << worst << " over 50 instances";
    expect(worst <= 1e-9, "metrics deviate from the oracle: " + os.str());
    std::cout << "    " << os.str() << "\n";
}

void criterion_miner_oracle() {
    Rng rng(75);
    // 200-point exact equality
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int c = 0; c < 20; ++c) {
        std::vector<double> center(8);
        for (auto& v : center) v = rng.normal();
        for (int p = 0; p < 10; ++p) {
            std::vector<double> row(8);
            for (int j = 0; j < 8; ++j) row[j] = center[j] + 0.6 * rng.normal();
            rows.push_back(row);
            labels.push_back(c);
        }
    }
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    auto emb = Tensor::from_vector({200, 8}, std::move(flat));
    auto [pairs, report] = mine_pairs(emb, 5);
    auto oracle = test::brute_force_mine(rows, 5);
    expect(pairs.size() == oracle.size(), "pair count differs from oracle");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        expect(pairs[i].query_index == oracle[i].query &&
                   pairs[i].match_index == oracle[i].match &&
                   pairs[i].is_self_pair == oracle[i].self_pair,
               "pair " + std::to_string(i) + " differs from oracle");
    }

    // filter precision over 20 clustered instances (20 ids x 4 points)
    double filtered_acc = 0.0, raw_acc = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> r2;
        std::vector<int> l2;
        for (int c = 0; c < 20; ++c) {
            std::vector<double> center(8);
            for (auto& v : center) v = rng.normal();
            for (int p = 0; p < 4; ++p) {
                std::vector<double> row(8);
                for (int j = 0; j < 8; ++j) {
                    row[j] = center[j] + 0.8 * rng.normal();
                }
                r2.push_back(row);
                l2.push_back(c);
            }
        }
        std::vector<double> f2;
        for (const auto& r : r2) f2.insert(f2.end(), r.begin(), r.end());
        auto [p2, rep2] = mine_pairs(
            Tensor::from_vector({static_cast<std::int64_t>(r2.size()), 8},
                                std::move(f2)),
            5);
        auto validated = validate_mining(p2, l2);
        expect(validated.precision.has_value(),
               "clustered instance produced no kept pairs");
        filtered_acc += *validated.precision;
        raw_acc += test::raw_top1_precision(r2, l2);
    }
    std::ostringstream os;
    os << "mean precision filtered " << filtered_acc / 20.0 << " vs raw top-1 "
       << raw_acc / 20.0;
    expect(filtered_acc >= raw_acc,
           "mutual filter reduced precision: " + os.str());
    std::cout << "    " << os.str() << "\n";
}

void criterion_toy_end_to_end() {
    const auto start = std::chrono::steady_clock::now();
    const auto& run = toy_run();
    const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();

    std::ostringstream os;
    os << "stage-1 accuracy " << run.s1.final_train_accuracy;
    expect(run.s1.final_train_accuracy >= 0.95,
           "stage-1 train accuracy below 0.95: " + os.str());

    const auto& rec = run.s2.epoch_recon_loss;
    const std::size_t window = std::min<std::size_t>(10, rec.size() / 2);
    const double head = smoothed_mean(rec, 0, window);
    const double tail = smoothed_mean(rec, rec.size() - window, window);
    os << ", stage-2 recon " << head << " -> " << tail;
    expect(tail < head, "smoothed reconstruction loss did not decrease");

    os << ", identity preservation " << run.id_preservation;
    expect(run.id_preservation >= 0.80,
           "identity preservation below 0.80: " + os.str());

    os << " (" << elapsed << "s)";
    std::cout << "    " << os.str() << "\n";
}

void criterion_schedule_and_freeze() {
    const auto& run = toy_run();
    expect(!run.s3.step_domains.empty(), "stage 3 recorded no steps");
    for (std::size_t i = 0; i < run.s3.step_domains.size(); ++i) {
        expect(run.s3.step_domains[i] == (i % 2 == 0 ? 'S' : 'T'),
               "stage-3 step " + std::to_string(i) + " breaks alternation");
    }
    expect(run.s1.frozen_checksums.size() >= 2,
           "stage 1 recorded no warmup checksums");
    for (auto sum : run.s1.frozen_checksums) {
        expect(sum == run.s1.frozen_checksums.front(),
               "backbone moved during stage-1 warmup");
    }
    expect(run.s2.frozen_checksums.size() >= 2,
           "stage 2 recorded no freeze checksums");
    for (auto sum : run.s2.frozen_checksums) {
        expect(sum == run.s2.frozen_checksums.front(),
               "identity encoder moved during stage 2");
    }
    std::cout << "    " << run.s3.step_domains.size()
              << " alternating steps, " << run.s2.frozen_checksums.size()
              << " frozen checksums stable\n";
}

void criterion_default_constants() {
    const auto text = serialize_run_config(default_run_config());
    const auto j = nlohmann::json::parse(text);
    expect(j.at("loss").at("lambda_rec").get<double>() == 10.0,
           "lambda_rec != 10");
    expect(j.at("loss").at("lambda_kl").get<double>() == 1e-4,
           "lambda_kl != 1e-4");
    expect(j.at("loss").at("lambda_adv").get<double>() == 1.0,
           "lambda_adv != 1");
    expect(j.at("model").at("latent_dim").get<int>() == 512, "d != 512");
    expect(j.at("image").at("height").get<int>() == 384, "height != 384");
    expect(j.at("image").at("width").get<int>() == 128, "width != 128");
    expect(j.at("stage1").at("lr").get<double>() == 1.5e-4,
           "stage1 lr != 1.5e-4");
    expect(j.at("stage2").at("lr").get<double>() == 2e-4, "stage2 lr != 2e-4");
    expect(j.at("stage3").at("lr").get<double>() == 2e-5, "stage3 lr != 2e-5");
    expect(j.at("stage1").at("epochs").get<int>() == 100,
           "stage1 epochs != 100");
    expect(j.at("stage2").at("epochs").get<int>() == 200,
           "stage2 epochs != 200");
    expect(j.at("stage3").at("epochs").get<int>() == 400,
           "stage3 epochs != 400");
    expect(j.at("stage1").at("batch_size").get<int>() == 32,
           "stage1 batch != 32");
    expect(j.at("stage2").at("batch_size").get<int>() == 16,
           "stage2 batch != 16");
    expect(j.at("miner").at("k").get<int>() == 5, "miner k != 5");
    std::cout << "    all audited defaults match the config snapshot\n";
}

void criterion_determinism() {
    const auto& first = toy_run();
    ToyRun second = run_toy_pipeline();
    expect(!first.metrics_csv.empty(), "first run produced no metrics");
    expect(first.metrics_csv == second.metrics_csv,
           "metric CSVs differ between seeded runs");
    std::cout << "    " << first.metrics_csv.size()
              << " bytes of metrics identical across runs\n";
}

struct Criterion {
    int number;
    const char* label;
    std::function<void()> body;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "loss gradients match central finite differences",
         criterion_loss_gradients},
        {2, "closed-form KL agrees with the Monte-Carlo oracle",
         criterion_kl_oracle},
        {3, "evaluate() equals the brute-force CMC/mAP oracle",
         criterion_metrics_oracle},
        {4, "mine_pairs equals the brute-force miner and the filter helps",
         criterion_miner_oracle},
        {5, "toy end-to-end training reaches the fixture thresholds",
         criterion_toy_end_to_end},
        {6, "stage-3 alternation and freeze invariants hold",
         criterion_schedule_and_freeze},
        {7, "default config serializes the documented default constants",
         criterion_default_constants},
        {8, "seeded runs produce identical metric CSVs",
         criterion_determinism},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        try {
            c.body();
            std::cout << "[PASS] criterion " << c.number << ": " << c.label
                      << "\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cout << "[FAIL] criterion " << c.number << ": " << c.label
                      << " -- " << e.what() << "\n";
        }
    }
    if (failures == 0) {
        std::cout << "acceptance: all " << criteria.size()
                  << " criteria passed\n";
    } else {
        std::cout << "acceptance: " << failures << " of " << criteria.size()
                  << " criteria FAILED\n";
    }
    return failures == 0 ? 0 : 1;
}
