#include "udgan/config.hpp"

#include <json.hpp>

#include <fstream>

namespace udgan {

using nlohmann::json;

namespace {

json to_json(const RunConfig& cfg) {
    const auto& t = cfg.train;
    json j;
    j["seed"] = t.seed;
    j["image"] = {{"height", t.net.image_h},
                  {"width", t.net.image_w},
                  {"mean", t.net.pixel.mean},
                  {"std", t.net.pixel.stddev}};
    j["model"] = {{"latent_dim", t.net.latent_dim},
                  {"generator_blocks", t.net.generator_blocks},
                  {"generator_channels", t.net.generator_channels},
                  {"discriminator_blocks", t.net.discriminator_blocks},
                  {"discriminator_channels", t.net.discriminator_channels},
                  {"trunk_channels", t.net.trunk_channels},
                  {"leaky_slope", t.net.leaky_slope},
                  {"dropout", t.net.dropout_rate}};
    j["loss"] = {{"lambda_rec", t.loss.lambda_rec},
                 {"lambda_kl", t.loss.lambda_kl},
                 {"lambda_adv", t.loss.lambda_adv},
                 {"label_smoothing", t.loss.label_smoothing},
                 {"recon_target_mode", to_string(t.recon_mode)}};
    j["stage1"] = {{"epochs", t.stage1.epochs},
                   {"batch_size", t.stage1.batch_size},
                   {"lr", t.stage1.lr},
                   {"warmup_epochs", t.stage1.warmup_epochs},
                   {"optimizer", t.stage1.optimizer},
                   {"beta1", t.stage1.beta1},
                   {"beta2", t.stage1.beta2}};
    j["stage2"] = {{"epochs", t.stage2.epochs},
                   {"batch_size", t.stage2.batch_size},
                   {"lr", t.stage2.lr},
                   {"generator_optimizer", t.stage2.generator_optimizer},
                   {"beta1", t.stage2.beta1},
                   {"beta2", t.stage2.beta2},
                   {"discriminator_optimizer", t.stage2.discriminator_optimizer},
                   {"momentum", t.stage2.momentum}};
    j["stage3"] = {{"epochs", t.stage3.epochs},
                   {"lr", t.stage3.lr},
                   {"source_batch_size", t.stage3.source_batch_size},
                   {"target_batch_size", t.stage3.target_batch_size}};
    j["miner"] = {{"k", t.miner_k}};
    j["eval"] = {{"batch_size", t.eval_batch_size}};
    j["data"] = {{"source_root", cfg.data.source_root},
                 {"target_root", cfg.data.target_root},
                 {"pattern", cfg.data.pattern},
                 {"train_dir", cfg.data.train_dir},
                 {"query_dir", cfg.data.query_dir},
                 {"gallery_dir", cfg.data.gallery_dir}};
    return j;
}

// Overlays `user` onto `base`, rejecting keys the schema does not know and
// values whose JSON kind differs from the default's.
void merge_strict(json& base, const json& user, const std::string& where) {
    if (!user.is_object()) {
        throw ConfigError("config: expected an object at " +
                          (where.empty() ? "top level" : where));
    }
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!base.contains(it.key())) {
            throw ConfigError("config: unknown key '" + path + "'");
        }
        json& slot = base[it.key()];
        const json& v = it.value();
        if (slot.is_object()) {
            merge_strict(slot, v, path);
            continue;
        }
        const bool num_ok = slot.is_number() && v.is_number();
        const bool same_kind = slot.type() == v.type() || num_ok;
        if (!same_kind) {
            throw ConfigError("config: wrong type for '" + path + "'");
        }
        slot = v;
    }
}

RunConfig from_json(const json& j) {
    RunConfig cfg;
    auto& t = cfg.train;
    t.seed = j.at("seed").get<std::uint64_t>();
    const auto& img = j.at("image");
    t.net.image_h = img.at("height").get<int>();
    t.net.image_w = img.at("width").get<int>();
    t.net.pixel.mean = img.at("mean").get<double>();
    t.net.pixel.stddev = img.at("std").get<double>();
    const auto& m = j.at("model");
    t.net.latent_dim = m.at("latent_dim").get<int>();
    t.net.generator_blocks = m.at("generator_blocks").get<int>();
    t.net.generator_channels = m.at("generator_channels").get<int>();
    t.net.discriminator_blocks = m.at("discriminator_blocks").get<int>();
    t.net.discriminator_channels = m.at("discriminator_channels").get<int>();
    t.net.trunk_channels = m.at("trunk_channels").get<std::vector<int>>();
    t.net.leaky_slope = m.at("leaky_slope").get<double>();
    t.net.dropout_rate = m.at("dropout").get<double>();
    const auto& l = j.at("loss");
    t.loss.lambda_rec = l.at("lambda_rec").get<double>();
    t.loss.lambda_kl = l.at("lambda_kl").get<double>();
    t.loss.lambda_adv = l.at("lambda_adv").get<double>();
    t.loss.label_smoothing = l.at("label_smoothing").get<double>();
    t.recon_mode = recon_target_mode_from_string(
        l.at("recon_target_mode").get<std::string>());
    const auto& s1 = j.at("stage1");
    t.stage1.epochs = s1.at("epochs").get<int>();
    t.stage1.batch_size = s1.at("batch_size").get<int>();
    t.stage1.lr = s1.at("lr").get<double>();
    t.stage1.warmup_epochs = s1.at("warmup_epochs").get<int>();
    t.stage1.optimizer = s1.at("optimizer").get<std::string>();
    t.stage1.beta1 = s1.at("beta1").get<double>();
    t.stage1.beta2 = s1.at("beta2").get<double>();
    const auto& s2 = j.at("stage2");
    t.stage2.epochs = s2.at("epochs").get<int>();
    t.stage2.batch_size = s2.at("batch_size").get<int>();
    t.stage2.lr = s2.at("lr").get<double>();
    t.stage2.generator_optimizer =
        s2.at("generator_optimizer").get<std::string>();
    t.stage2.beta1 = s2.at("beta1").get<double>();
    t.stage2.beta2 = s2.at("beta2").get<double>();
    t.stage2.discriminator_optimizer =
        s2.at("discriminator_optimizer").get<std::string>();
    t.stage2.momentum = s2.at("momentum").get<double>();
    const auto& s3 = j.at("stage3");
    t.stage3.epochs = s3.at("epochs").get<int>();
    t.stage3.lr = s3.at("lr").get<double>();
    t.stage3.source_batch_size = s3.at("source_batch_size").get<int>();
    t.stage3.target_batch_size = s3.at("target_batch_size").get<int>();
    t.miner_k = j.at("miner").at("k").get<int>();
    t.eval_batch_size = j.at("eval").at("batch_size").get<int>();
    const auto& d = j.at("data");
    cfg.data.source_root = d.at("source_root").get<std::string>();
    cfg.data.target_root = d.at("target_root").get<std::string>();
    cfg.data.pattern = d.at("pattern").get<std::string>();
    cfg.data.train_dir = d.at("train_dir").get<std::string>();
    cfg.data.query_dir = d.at("query_dir").get<std::string>();
    cfg.data.gallery_dir = d.at("gallery_dir").get<std::string>();
    return cfg;
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const std::string& json_text) {
    json user;
    try {
        user = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    json base = to_json(default_run_config());
    merge_strict(base, user, "");
    RunConfig cfg = from_json(base);
    validate(cfg);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string serialize_run_config(const RunConfig& cfg) {
    return to_json(cfg).dump(2) + "\n";
}

void validate(const RunConfig& cfg) {
    const auto& t = cfg.train;
    validate(t.net);
    validate(t.loss);
    if (t.stage1.epochs < 1 || t.stage2.epochs < 1 || t.stage3.epochs < 1) {
        throw ConfigError("epochs must be >= 1 in every stage");
    }
    if (t.stage1.lr <= 0 || t.stage2.lr <= 0 || t.stage3.lr <= 0) {
        throw ConfigError("learning rates must be positive");
    }
    if (t.stage1.batch_size < 2) {
        throw ConfigError("stage1 batch size must be >= 2");
    }
    if (t.stage2.batch_size < 2 || t.stage2.batch_size % 2 != 0) {
        throw ConfigError("stage2 batch size must be even (whole pairs)");
    }
    if (t.stage3.source_batch_size < 1 || t.stage3.target_batch_size < 2 ||
        t.stage3.target_batch_size % 2 != 0) {
        throw ConfigError("stage3 batch sizes invalid");
    }
    if (t.stage1.warmup_epochs < 0 || t.stage1.warmup_epochs > t.stage1.epochs) {
        throw ConfigError("warmup epochs must lie within stage1 epochs");
    }
    if (t.stage1.optimizer != "amsgrad" && t.stage1.optimizer != "adam") {
        throw ConfigError("stage1 optimizer must be amsgrad or adam");
    }
    if (t.stage2.generator_optimizer != "adam") {
        throw ConfigError("stage2 generator optimizer must be adam");
    }
    if (t.stage2.discriminator_optimizer != "sgd") {
        throw ConfigError("stage2 discriminator optimizer must be sgd");
    }
    if (t.miner_k < 1) throw ConfigError("miner k must be >= 1");
    if (t.eval_batch_size < 1) throw ConfigError("eval batch size must be >= 1");
}

LabelPattern label_pattern(const RunConfig& cfg) {
    return LabelPattern{cfg.data.pattern};
}

SplitLayout split_layout(const RunConfig& cfg) {
    return SplitLayout{cfg.data.train_dir, cfg.data.query_dir,
                       cfg.data.gallery_dir};
}

}  // namespace udgan
