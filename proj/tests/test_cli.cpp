#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Drives the installed CLI binary end to end over a miniature dataset:
// exit codes, emitted files and idempotency.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#ifndef UDGAN_CLI_PATH
#error "UDGAN_CLI_PATH must point at the udgan binary"
#endif

namespace fs = std::filesystem;

namespace {

const fs::path kBase = fs::temp_directory_path() / "udgan_cli_test";

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd =
        env + (env.empty() ? "" : " ") + UDGAN_CLI_PATH + " " + args +
        " >" + (kBase / "stdout.txt").string() + " 2>" +
        (kBase / "stderr.txt").string();
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string last_stderr() {
    std::ifstream in(kBase / "stderr.txt");
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

std::string last_stdout() {
    std::ifstream in(kBase / "stdout.txt");
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

std::map<std::string, std::string> dir_digest(const fs::path& root) {
    std::map<std::string, std::string> digest;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        digest[e.path().lexically_relative(root).string()] = bytes;
    }
    return digest;
}

// miniature run config shared by the pipeline tests
fs::path write_tiny_config() {
    const fs::path cfg = kBase / "tiny.json";
    std::ofstream out(cfg);
    out << R"({
  "image": {"height": 24, "width": 8},
  "model": {"latent_dim": 12, "generator_blocks": 3, "generator_channels": 24,
            "discriminator_blocks": 2, "discriminator_channels": 6,
            "trunk_channels": [4, 6, 8], "dropout": 0.2},
  "stage1": {"epochs": 4, "batch_size": 8, "lr": 0.005, "warmup_epochs": 1},
  "stage2": {"epochs": 2, "batch_size": 4, "lr": 0.001},
  "stage3": {"epochs": 1, "lr": 0.0002, "source_batch_size": 8,
             "target_batch_size": 4},
  "data": {"source_root": ")" << (kBase / "src").string() << R"(",
           "target_root": ")" << (kBase / "tgt").string() << R"("},
  "seed": 7
})";
    return cfg;
}

struct Fixture {
    Fixture() {
        fs::remove_all(kBase);
        fs::create_directories(kBase);
        write_tiny_config();
        // datasets for the train/mine/evaluate flows
        REQUIRE(run("make-synthetic --ids 4 --per-id 6 --height 24 --width 8 "
                    "--config " + (kBase / "tiny.json").string() +
                    " --data-seed 31 --out " + (kBase / "src").string()) == 0);
        REQUIRE(run("make-synthetic --ids 4 --per-id 6 --height 24 --width 8 "
                    "--config " + (kBase / "tiny.json").string() +
                    " --data-seed 32 --out " + (kBase / "tgt").string()) == 0);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("make-synthetic writes the dataset and is idempotent") {
    fixture();
    const fs::path out = kBase / "synth";
    const std::string args =
        "make-synthetic --ids 16 --per-id 8 --height 24 --width 8 --config " +
        (kBase / "tiny.json").string() + " --data-seed 5 --out " + out.string();
    fs::remove_all(out);
    REQUIRE(run(args) == 0);

    int files = 0;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (e.is_regular_file() && e.path().extension() == ".png") ++files;
    }
    CHECK(files == 128);
    CHECK(fs::exists(out / "manifest.csv"));

    auto first = dir_digest(out);
    REQUIRE(run(args) == 0);  // rerun with the same seed
    CHECK(dir_digest(out) == first);
}

TEST_CASE("make-synthetic rejects sizes the generator cannot use") {
    fixture();
    const int rc = run(
        "make-synthetic --ids 4 --per-id 4 --height 30 --width 8 --config " +
        (kBase / "tiny.json").string() + " --out " +
        (kBase / "badsize").string());
    CHECK(rc == 2);
    CHECK(last_stderr().find("divisible") != std::string::npos);
}

TEST_CASE("config errors exit with code 2") {
    fixture();
    std::ofstream bad(kBase / "bad.json");
    bad << R"({"bananas": 1})";
    bad.close();
    CHECK(run("train --stage 1 --config " + (kBase / "bad.json").string() +
              " --out " + (kBase / "runx").string()) == 2);
    CHECK(last_stderr().find("unknown key") != std::string::npos);
}

TEST_CASE("unsupported device exits with code 2") {
    fixture();
    CHECK(run("train --stage 1 --config " + (kBase / "tiny.json").string() +
                  " --out " + (kBase / "runx").string(),
              "UDGAN_DEVICE=cuda") == 2);
}

TEST_CASE("stage 2 without the stage-1 checkpoint exits with code 3") {
    fixture();
    const fs::path out = kBase / "run_gate";
    fs::remove_all(out);
    const int rc = run("train --stage 2 --config " +
                       (kBase / "tiny.json").string() + " --out " +
                       out.string());
    CHECK(rc == 3);
    CHECK(last_stderr().find("stage1.ckpt") != std::string::npos);
}

TEST_CASE("dry run validates without touching the output directory") {
    fixture();
    const fs::path out = kBase / "run_dry";
    fs::remove_all(out);
    REQUIRE(run("train --stage 1 --dry-run --config " +
                (kBase / "tiny.json").string() + " --out " + out.string()) ==
            0);
    CHECK(last_stdout().find("plan") != std::string::npos);
    CHECK_FALSE(fs::exists(out));

    REQUIRE(run("train --stage 3 --dry-run --config " +
                (kBase / "tiny.json").string() + " --out " + out.string()) ==
            0);
    CHECK(last_stdout().find("S T") != std::string::npos);
}

TEST_CASE("full pipeline: train all stages, mine, evaluate, render") {
    fixture();
    const fs::path out = kBase / "run";
    fs::remove_all(out);
    const std::string common =
        " --config " + (kBase / "tiny.json").string() + " --out " +
        out.string();

    REQUIRE(run("train --stage 1" + common) == 0);
    CHECK(fs::exists(out / "config.json"));
    CHECK(fs::exists(out / "stage1.ckpt"));
    CHECK(fs::exists(out / "metrics_stage1.csv"));

    REQUIRE(run("train --stage 2" + common) == 0);
    CHECK(fs::exists(out / "stage2.ckpt"));
    CHECK(fs::exists(out / "pairs.csv"));
    CHECK(fs::exists(out / "mining_report.txt"));
    {
        std::ifstream pairs(out / "pairs.csv");
        std::string header;
        std::getline(pairs, header);
        CHECK(header == "query_path,match_path,is_self_pair,distance");
    }

    REQUIRE(run("train --stage 3" + common) == 0);
    CHECK(fs::exists(out / "stage3.ckpt"));
    CHECK(fs::exists(out / "metrics_stage3.csv"));

    REQUIRE(run("mine-pairs --with-labels" + common) == 0);
    CHECK(last_stdout().find("precision") != std::string::npos);

    REQUIRE(run("evaluate --tag tiny" + common) == 0);
    {
        std::ifstream rep(out / "eval_report.csv");
        std::string header, row;
        std::getline(rep, header);
        CHECK(header == "tag,rank1,rank5,rank10,mAP,num_valid_queries");
        REQUIRE(std::getline(rep, row));
        CHECK(row.rfind("tiny,", 0) == 0);
    }

    REQUIRE(run("generate-grid --pairs 3" + common) == 0);
    CHECK(fs::exists(out / "montage.png"));
    CHECK(last_stdout().find("3x3") != std::string::npos);
}

TEST_CASE("evaluate on a perfect-retrieval gallery reports rank1 = 1") {
    fixture();
    // gallery twins: every query image reappears pixel-identical under a
    // different camera name, so its distance is exactly zero under any
    // deterministic encoder
    const fs::path data = kBase / "perfect";
    fs::remove_all(data);
    fs::create_directories(data / "train");
    fs::create_directories(data / "query");
    fs::create_directories(data / "gallery");
    for (const auto& e : fs::directory_iterator(kBase / "src" / "train")) {
        fs::copy_file(e.path(), data / "train" / e.path().filename());
    }
    for (const auto& e : fs::directory_iterator(kBase / "src" / "query")) {
        const std::string name = e.path().filename().string();
        fs::copy_file(e.path(), data / "query" / name);
        // bump the camera digit: 0000_c1s1_... -> 0000_c2s1_...
        std::string twin = name;
        const auto cpos = twin.find("_c");
        twin[cpos + 2] = twin[cpos + 2] == '1' ? '2' : '1';
        fs::copy_file(e.path(), data / "gallery" / twin);
    }

    const fs::path out = kBase / "run";
    REQUIRE(fs::exists(out / "stage1.ckpt"));  // from the pipeline case
    REQUIRE(run("evaluate --tag perfect --checkpoint " +
                (out / "stage1.ckpt").string() + " --data " + data.string() +
                " --config " + (kBase / "tiny.json").string() + " --out " +
                out.string()) == 0);
    std::ifstream rep(out / "eval_report.csv");
    std::string header, row;
    std::getline(rep, header);
    REQUIRE(std::getline(rep, row));
    CHECK(row.rfind("perfect,1,", 0) == 0);
}
