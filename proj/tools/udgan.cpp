// udgan: desk-scale person re-identification domain adaptation pipeline.
// Subcommands: make-synthetic | train --stage N | mine-pairs | evaluate |
// generate-grid.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "udgan/checkpoint.hpp"
#include "udgan/config.hpp"
#include "udgan/core_data.hpp"
#include "udgan/metrics.hpp"
#include "udgan/pair_miner.hpp"
#include "udgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace udgan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

void check_device() {
    const char* dev = std::getenv("UDGAN_DEVICE");
    if (dev && *dev) {
        std::string d(dev);
        if (d != "cpu" && d != "CPU") {
            throw ConfigError("UDGAN_DEVICE=" + d +
                              " is not available; this build is CPU-only");
        }
    }
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
};

RunConfig effective_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty()
                        ? default_run_config()
                        : load_run_config(args.config_path);
    if (args.seed) cfg.train.seed = *args.seed;
    validate(cfg);
    return cfg;
}

// The effective config is written before any work starts.
void snapshot_config(const RunConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "config.json", std::ios::trunc);
    if (!out) throw DataError("cannot write config snapshot");
    out << serialize_run_config(cfg);
}

DatasetManifest load_domain_manifest(const RunConfig& cfg,
                                     const std::string& root,
                                     const char* which) {
    if (root.empty()) {
        throw ConfigError(std::string("config: data.") + which +
                          "_root is not set");
    }
    return load_manifest(root, label_pattern(cfg), split_layout(cfg));
}

ImageStore make_store(const RunConfig& cfg, const std::string& root) {
    return ImageStore(root, cfg.train.net.image_h, cfg.train.net.image_w,
                      cfg.train.net.pixel);
}

UdganModel build_model(const RunConfig& cfg, const DatasetManifest& source) {
    Rng rng = Rng(cfg.train.seed).fork("model-init");
    return UdganModel::build(cfg.train.net, source.num_train_identities(),
                             rng);
}

void restore_from(UdganModel& model, const fs::path& ckpt_path,
                  int expected_stage) {
    if (!fs::exists(ckpt_path)) {
        throw DataError("missing prerequisite checkpoint " +
                        ckpt_path.string() + " (run the earlier stage first)");
    }
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (ckpt.stage != expected_stage) {
        throw DataError("checkpoint " + ckpt_path.string() + " is stage " +
                        std::to_string(ckpt.stage) + ", expected stage " +
                        std::to_string(expected_stage));
    }
    restore_model(model, ckpt);
}

int cmd_make_synthetic(const CommonArgs& args, const SyntheticSpec& spec) {
    RunConfig cfg = effective_config(args);
    // the dataset must remain usable by the configured generator
    const std::int64_t down = std::int64_t{1}
                              << cfg.train.net.generator_blocks;
    if (spec.height % down != 0 || spec.width % down != 0) {
        throw ConfigError(
            "synthetic image size " + std::to_string(spec.height) + "x" +
            std::to_string(spec.width) +
            " is not divisible by 2^generator_blocks = " +
            std::to_string(down) +
            "; adjust --height/--width or model.generator_blocks");
    }
    if (args.dry_run) {
        std::cout << "would generate " << spec.num_identities << " x "
                  << spec.images_per_identity << " images ("
                  << spec.height << "x" << spec.width << ") under "
                  << args.out_dir << "\n";
        return kExitOk;
    }
    DatasetManifest manifest = make_synthetic(spec, args.out_dir);
    const auto summary = summarize_dataset(manifest);
    std::cout << "synthetic dataset: " << summary.images << " images, "
              << summary.identities << " identities, " << summary.cameras
              << " cameras -> " << args.out_dir << "\n";
    return kExitOk;
}

int cmd_train(const CommonArgs& args, int stage) {
    RunConfig cfg = effective_config(args);
    check_device();
    if (!args.dry_run) snapshot_config(cfg, args.out_dir);
    DatasetManifest source =
        load_domain_manifest(cfg, cfg.data.source_root, "source");

    if (args.dry_run) {
        std::cout << "config ok; stage " << stage << " plan:\n";
        const auto n_src = source.train_indices().size();
        if (stage == 1) {
            std::cout << "  " << cfg.train.stage1.epochs << " epochs, "
                      << (n_src + cfg.train.stage1.batch_size - 1) /
                             cfg.train.stage1.batch_size
                      << " source batches/epoch\n";
        } else if (stage == 2) {
            std::cout << "  " << cfg.train.stage2.epochs << " epochs of "
                      << cfg.train.stage2.batch_size / 2 << "-pair batches\n";
        } else {
            const int nb = static_cast<int>(
                (n_src + cfg.train.stage3.source_batch_size - 1) /
                cfg.train.stage3.source_batch_size);
            const auto schedule = make_alternating_schedule(nb, 1);
            std::cout << "  schedule head:";
            for (std::size_t i = 0; i < std::min<std::size_t>(8, schedule.size());
                 ++i) {
                std::cout << ' '
                          << (schedule[i] == StepDomain::source ? 'S' : 'T');
            }
            std::cout << " ... (" << schedule.size() << " steps/epoch, "
                      << cfg.train.stage3.epochs << " epochs)\n";
        }
        return kExitOk;
    }

    const fs::path out(args.out_dir);
    UdganModel model = build_model(cfg, source);
    ImageStore source_store = make_store(cfg, cfg.data.source_root);

    StageResult result;
    if (stage == 1) {
        result = run_stage1(model, cfg.train, source, source_store);
        std::cout << "stage 1 done; train accuracy "
                  << result.final_train_accuracy << "\n";
    } else if (stage == 2) {
        restore_from(model, out / "stage1.ckpt", 1);
        DatasetManifest target =
            load_domain_manifest(cfg, cfg.data.target_root, "target");
        ImageStore target_store = make_store(cfg, cfg.data.target_root);
        result = run_stage2(model, cfg.train, target, target_store);
        std::vector<std::string> paths;
        for (auto i : target.split_indices(Split::train)) {
            paths.push_back(target.entries[i].path);
        }
        export_pairs_csv(result.pairs, paths, out / "pairs.csv");
        std::ofstream rep(out / "mining_report.txt");
        rep << format_mining_report(result.mining_report);
        std::cout << format_mining_report(result.mining_report);
    } else {
        restore_from(model, out / "stage2.ckpt", 2);
        DatasetManifest target =
            load_domain_manifest(cfg, cfg.data.target_root, "target");
        ImageStore target_store = make_store(cfg, cfg.data.target_root);
        result = run_stage3(model, cfg.train, source, source_store, target,
                            target_store);
        std::cout << "stage 3 done\n";
    }

    const std::string tag = "stage" + std::to_string(stage);
    write_metric_csv(out / ("metrics_" + tag + ".csv"), result.metrics);
    Checkpoint ckpt =
        snapshot_model(model, stage, serialize_run_config(cfg));
    save_checkpoint(out / (tag + ".ckpt"), ckpt);
    std::cout << "wrote " << (out / (tag + ".ckpt")).string() << "\n";
    return kExitOk;
}

int cmd_mine_pairs(const CommonArgs& args, std::string ckpt_path,
                   bool with_labels) {
    RunConfig cfg = effective_config(args);
    check_device();
    if (!args.dry_run) snapshot_config(cfg, args.out_dir);
    DatasetManifest source =
        load_domain_manifest(cfg, cfg.data.source_root, "source");
    DatasetManifest target =
        load_domain_manifest(cfg, cfg.data.target_root, "target");
    const fs::path out(args.out_dir);
    if (ckpt_path.empty()) ckpt_path = (out / "stage1.ckpt").string();

    UdganModel model = build_model(cfg, source);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    restore_model(model, ckpt);

    if (args.dry_run) {
        std::cout << "would mine pairs over "
                  << target.split_indices(Split::train).size()
                  << " target train images (k=" << cfg.train.miner_k << ")\n";
        return kExitOk;
    }

    ImageStore store = make_store(cfg, cfg.data.target_root);
    const auto train_idx = target.split_indices(Split::train);
    Tensor embeddings = embed_split(model, target, store, train_idx,
                                    cfg.train.eval_batch_size);
    auto [pairs, report] = mine_pairs(embeddings, cfg.train.miner_k);

    if (with_labels) {
        std::vector<int> labels;
        for (auto i : train_idx) labels.push_back(target.entries[i].identity);
        report = validate_mining(pairs, labels);
    }

    std::vector<std::string> paths;
    for (auto i : train_idx) paths.push_back(target.entries[i].path);
    export_pairs_csv(pairs, paths, out / "pairs.csv");
    std::ofstream rep(out / "mining_report.txt");
    rep << format_mining_report(report);
    std::cout << format_mining_report(report);
    return kExitOk;
}

int cmd_evaluate(const CommonArgs& args, std::string ckpt_path,
                 std::string data_root, const std::string& tag,
                 bool per_query) {
    RunConfig cfg = effective_config(args);
    check_device();
    if (!args.dry_run) snapshot_config(cfg, args.out_dir);
    DatasetManifest source =
        load_domain_manifest(cfg, cfg.data.source_root, "source");
    if (data_root.empty()) data_root = cfg.data.target_root;
    DatasetManifest eval_set = load_domain_manifest(cfg, data_root, "target");
    const fs::path out(args.out_dir);
    if (ckpt_path.empty()) ckpt_path = (out / "stage3.ckpt").string();

    UdganModel model = build_model(cfg, source);
    restore_model(model, load_checkpoint(ckpt_path));
    for (auto& p : model.all_parameters()) p.set_requires_grad(false);

    if (args.dry_run) {
        std::cout << "would evaluate "
                  << eval_set.split_indices(Split::query).size()
                  << " queries against "
                  << eval_set.split_indices(Split::gallery).size()
                  << " gallery images\n";
        return kExitOk;
    }

    ImageStore store = make_store(cfg, data_root);
    EvalReport report = evaluate(
        eval_set, store,
        [&](const Tensor& images) { return model.encode_identity(images); },
        cfg.train.eval_batch_size);
    export_eval_report_csv(report, tag, out / "eval_report.csv");
    if (per_query) export_per_query_csv(report, out / "per_query.csv");
    std::cout << tag << ": rank1 " << report.cmc_at(1) << ", rank5 "
              << report.cmc_at(5) << ", rank10 " << report.cmc_at(10)
              << ", mAP " << report.map << " over "
              << report.num_valid_queries << " valid queries\n";
    return kExitOk;
}

int cmd_generate_grid(const CommonArgs& args, std::string ckpt_path,
                      int num_pairs) {
    RunConfig cfg = effective_config(args);
    check_device();
    if (!args.dry_run) snapshot_config(cfg, args.out_dir);
    DatasetManifest source =
        load_domain_manifest(cfg, cfg.data.source_root, "source");
    DatasetManifest target =
        load_domain_manifest(cfg, cfg.data.target_root, "target");
    const fs::path out(args.out_dir);
    if (ckpt_path.empty()) ckpt_path = (out / "stage3.ckpt").string();

    UdganModel model = build_model(cfg, source);
    restore_model(model, load_checkpoint(ckpt_path));

    if (args.dry_run) {
        std::cout << "would render a 3x" << num_pairs << " montage\n";
        return kExitOk;
    }

    ImageStore store = make_store(cfg, cfg.data.target_root);
    const auto train_idx = target.split_indices(Split::train);
    Tensor embeddings = embed_split(model, target, store, train_idx,
                                    cfg.train.eval_batch_size);
    auto [pairs, report] = mine_pairs(embeddings, cfg.train.miner_k);

    Rng rng = Rng(cfg.train.seed).fork("grid");
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const int n = std::min<int>(num_pairs, static_cast<int>(order.size()));
    if (n < 1) throw DataError("generate-grid: no pairs available");

    std::vector<Image> originals, recons, swaps;
    const auto& pix = cfg.train.net.pixel;
    for (int i = 0; i < n; ++i) {
        const auto& p = pairs[order[i]];
        Tensor x1 = stack_images(store, target,
                                 {train_idx.at(p.query_index)});
        Tensor x2 = stack_images(store, target,
                                 {train_idx.at(p.match_index)});
        GeneratedQuad quad = model.swap_generate(x1, x2, false, rng);
        auto tile = [&](const Tensor& batch) {
            return tensor_to_image(
                reshape(batch.detach(),
                        {3, batch.dim(2), batch.dim(3)}),
                pix.mean, pix.stddev);
        };
        originals.push_back(tile(x1));
        recons.push_back(tile(quad.x11));
        swaps.push_back(tile(quad.x12));
    }
    std::vector<Image> tiles;
    tiles.insert(tiles.end(), originals.begin(), originals.end());
    tiles.insert(tiles.end(), recons.begin(), recons.end());
    tiles.insert(tiles.end(), swaps.begin(), swaps.end());
    write_png(out / "montage.png", make_montage(tiles, 3, n));
    std::cout << "wrote " << (out / "montage.png").string() << " (3x" << n
              << " tiles)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"udgan: unsupervised domain adaptation for person ReID"};
    app.require_subcommand(1);

    CommonArgs common;
    SyntheticSpec spec;
    int stage = 1;
    std::string ckpt_path, data_root, tag = "eval";
    bool with_labels = false, per_query = false;
    int num_pairs = 6;

    auto add_common = [&](CLI::App* cmd, bool out_required = true) {
        cmd->add_option("--config", common.config_path,
                        "JSON config file (defaults when omitted)");
        auto* out =
            cmd->add_option("--out", common.out_dir, "output directory");
        if (out_required) out->required();
        cmd->add_option("--seed", [&common](const CLI::results_t& res) {
            common.seed = std::stoull(res[0]);
            return true;
        }, "seed override");
        cmd->add_flag("--dry-run", common.dry_run,
                      "validate and print the plan without running");
    };

    auto* mk = app.add_subcommand("make-synthetic",
                                  "generate a deterministic synthetic dataset");
    mk->add_option("--ids", spec.num_identities, "number of identities")
        ->required();
    mk->add_option("--per-id", spec.images_per_identity,
                   "images per identity")
        ->required();
    mk->add_option("--height", spec.height, "image height");
    mk->add_option("--width", spec.width, "image width");
    mk->add_option("--cams", spec.num_cameras, "camera count");
    mk->add_option("--data-seed", spec.seed, "dataset seed");
    add_common(mk);

    auto* tr = app.add_subcommand("train", "run one training stage");
    tr->add_option("--stage", stage, "training stage (1|2|3)")
        ->required()
        ->check(CLI::Range(1, 3));
    add_common(tr);

    auto* mp = app.add_subcommand("mine-pairs",
                                  "mine same-identity pairs in the target");
    mp->add_option("--checkpoint", ckpt_path, "encoder checkpoint");
    mp->add_flag("--with-labels", with_labels,
                 "report precision using manifest labels");
    add_common(mp);

    auto* ev = app.add_subcommand("evaluate", "cross-camera CMC/mAP");
    ev->add_option("--checkpoint", ckpt_path, "encoder checkpoint");
    ev->add_option("--data", data_root, "dataset root (target by default)");
    ev->add_option("--tag", tag, "report row tag");
    ev->add_flag("--per-query", per_query, "also write per-query CSV");
    add_common(ev);

    auto* gg = app.add_subcommand("generate-grid",
                                  "render originals/reconstructions/swaps");
    gg->add_option("--checkpoint", ckpt_path, "model checkpoint");
    gg->add_option("--pairs", num_pairs, "number of pair columns");
    add_common(gg);

    CLI11_PARSE(app, argc, argv);

    try {
        if (mk->parsed()) return cmd_make_synthetic(common, spec);
        if (tr->parsed()) return cmd_train(common, stage);
        if (mp->parsed()) return cmd_mine_pairs(common, ckpt_path, with_labels);
        if (ev->parsed()) {
            return cmd_evaluate(common, ckpt_path, data_root, tag, per_query);
        }
        if (gg->parsed()) return cmd_generate_grid(common, ckpt_path, num_pairs);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
