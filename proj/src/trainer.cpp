#include "udgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "udgan/losses.hpp"
#include "udgan/metrics.hpp"

namespace udgan {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

void guard_finite(UdganModel& model, int stage, int epoch, const char* what) {
    for (const auto& nt : model.named_parameters()) {
        if (!nt.tensor.all_finite()) {
            throw NumericError("non-finite parameter " + nt.name +
                               " after " + what + " (stage " +
                               std::to_string(stage) + ", epoch " +
                               std::to_string(epoch) + ")");
        }
    }
}

std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& indices, int batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t off = 0; off < indices.size();
         off += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(indices.size(), off + static_cast<std::size_t>(batch_size));
        batches.emplace_back(indices.begin() + off, indices.begin() + end);
    }
    return batches;
}

std::vector<int> dense_labels(const DatasetManifest& manifest,
                              const std::vector<std::size_t>& indices) {
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (auto i : indices) {
        labels.push_back(manifest.id_index.at(manifest.entries[i].identity));
    }
    return labels;
}

// Temporarily drops requires_grad on every parameter so eval passes stay
// graph-free.
class NoGradGuard {
public:
    explicit NoGradGuard(UdganModel& model) : params_(model.all_parameters()) {
        flags_.reserve(params_.size());
        for (auto& p : params_) {
            flags_.push_back(p.requires_grad());
            p.set_requires_grad(false);
        }
    }
    ~NoGradGuard() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            params_[i].set_requires_grad(flags_[i]);
        }
    }

private:
    std::vector<Tensor> params_;
    std::vector<bool> flags_;
};

std::unique_ptr<nn::Optimizer> make_identity_optimizer(
    const Stage1Config& s1, std::vector<Tensor> params, double lr) {
    const bool amsgrad = s1.optimizer == "amsgrad";
    return std::make_unique<nn::Adam>(std::move(params), lr, s1.beta1,
                                      s1.beta2, 1e-8, amsgrad);
}

struct TargetStepLosses {
    double rec, kl, adv_g, adv_d;
};

// One target-domain step: discriminator update on detached generations,
// then the generator/encoder update on the weighted target loss.
TargetStepLosses target_step(UdganModel& model, const TrainConfig& cfg,
                             const Tensor& x1, const Tensor& x2,
                             nn::Optimizer& g_opt, nn::Optimizer& d_opt,
                             Rng& rng) {
    LatentCodes c1 = model.encode_content(x1, rng);
    LatentCodes c2 = model.encode_content(x2, rng);
    const std::int64_t n = x1.dim(0);
    Tensor ids = concat_rows({c1.v_id, c1.v_id, c2.v_id, c2.v_id});
    Tensor contents = concat_rows({c1.v_c, c2.v_c, c1.v_c, c2.v_c});
    Tensor all = model.generator.forward(ids, contents, true, rng);
    GeneratedQuad quad;
    quad.x11 = slice_rows(all, 0, n);
    quad.x12 = slice_rows(all, n, n);
    quad.x21 = slice_rows(all, 2 * n, n);
    quad.x22 = slice_rows(all, 3 * n, n);

    Tensor rec = reconstruction_loss(quad, x1, x2, cfg.recon_mode);
    Tensor kl = kl_loss(concat_rows({c1.mu, c2.mu}),
                        concat_rows({c1.logvar, c2.logvar}));

    // discriminator first; its fake inputs carry no gradient to the
    // generator
    d_opt.zero_grad();
    Tensor real = concat_rows({x1, x2});
    Tensor fake = all.detach();
    Tensor d_loss = adversarial_loss_d(model.discriminator.forward(real),
                                       model.discriminator.forward(fake));
    d_loss.backward();
    d_opt.step();

    // generator/encoder update against the freshly updated discriminator
    g_opt.zero_grad();
    Tensor adv_g = adversarial_loss_g(model.discriminator.forward(all));
    Tensor total = target_loss(rec, kl, adv_g, cfg.loss);
    total.backward();
    g_opt.step();

    return {rec.item(), kl.item(), adv_g.item(), d_loss.item()};
}

std::pair<std::vector<MinedPair>, MiningReport> mine_target_pairs(
    UdganModel& model, const TrainConfig& cfg, const DatasetManifest& target,
    ImageStore& store) {
    const auto train_idx = target.split_indices(Split::train);
    if (train_idx.size() < 2) {
        throw DataError("pair mining needs at least two target train images");
    }
    Tensor embeddings =
        embed_split(model, target, store, train_idx, cfg.eval_batch_size);
    return mine_pairs(embeddings, cfg.miner_k);
}

}  // namespace

void write_metric_csv(const std::filesystem::path& path,
                      const std::vector<MetricRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write metric log " + path.string());
    out << "stage,epoch,step_domain,loss_id,loss_rec,loss_kl,loss_adv_g,"
           "loss_adv_d,lr\n";
    for (const auto& r : rows) {
        out << r.stage << ',' << r.epoch << ',' << r.step_domain << ','
            << cell(r.loss_id) << ',' << cell(r.loss_rec) << ','
            << cell(r.loss_kl) << ',' << cell(r.loss_adv_g) << ','
            << cell(r.loss_adv_d) << ',' << format_double(r.lr) << '\n';
    }
}

double cosine_lr(int epoch, int total, double lr0) {
    if (total <= 0) throw ConfigError("cosine_lr: total must be positive");
    if (epoch < 0 || epoch > total) {
        throw ConfigError("cosine_lr: epoch outside [0, total]");
    }
    return lr0 * 0.5 *
           (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                           static_cast<double>(total)));
}

std::vector<StepDomain> make_alternating_schedule(int num_source_batches,
                                                  int num_target_batches) {
    if (num_source_batches < 1 || num_target_batches < 1) {
        throw DataError("alternating schedule needs batches in both domains");
    }
    std::vector<StepDomain> schedule;
    schedule.reserve(2 * static_cast<std::size_t>(num_source_batches));
    for (int i = 0; i < num_source_batches; ++i) {
        schedule.push_back(StepDomain::source);
        schedule.push_back(StepDomain::target);
    }
    return schedule;
}

Tensor embed_split(UdganModel& model, const DatasetManifest& manifest,
                   ImageStore& store, const std::vector<std::size_t>& indices,
                   int batch_size) {
    NoGradGuard guard(model);
    std::vector<Tensor> chunks;
    for (const auto& batch : make_batches(indices, batch_size)) {
        chunks.push_back(
            model.encode_identity(stack_images(store, manifest, batch)));
    }
    return concat_rows(chunks);
}

StageResult run_stage1(UdganModel& model, const TrainConfig& cfg,
                       const DatasetManifest& source, ImageStore& store) {
    const auto& s1 = cfg.stage1;
    const auto train_idx = source.train_indices();
    if (train_idx.empty()) throw DataError("stage 1: empty source train split");
    if (source.num_train_identities() < 2) {
        throw DataError("stage 1: need at least two source identities");
    }

    StageResult result;
    Rng rng = Rng(cfg.seed).fork("stage1");

    auto identity_params = model.identity_side_params();
    model.set_group_trainable(identity_params, true);
    auto opt = make_identity_optimizer(s1, identity_params, s1.lr);

    // during warmup only the classifier layer moves
    auto frozen_group = model.trunk_params();
    {
        auto head = model.id_head_params();
        frozen_group.insert(frozen_group.end(), head.begin(), head.end());
    }
    const bool has_warmup = s1.warmup_epochs > 0;
    if (has_warmup) {
        model.set_group_trainable(frozen_group, false);
        result.frozen_checksums.push_back(nn::checksum(frozen_group));
    }

    const int steps_per_epoch = static_cast<int>(
        (train_idx.size() + s1.batch_size - 1) / s1.batch_size);
    const int total_steps = s1.epochs * steps_per_epoch;
    int step = 0;
    for (int epoch = 0; epoch < s1.epochs; ++epoch) {
        if (epoch == s1.warmup_epochs && has_warmup) {
            model.set_group_trainable(frozen_group, true);
        }
        auto order = train_idx;
        rng.shuffle(order);
        for (const auto& batch : make_batches(order, s1.batch_size)) {
            const double lr = total_steps > 1
                                  ? cosine_lr(step, total_steps - 1, s1.lr)
                                  : s1.lr;
            opt->set_lr(lr);
            opt->zero_grad();
            Tensor images = stack_images(store, source, batch);
            Tensor logits =
                model.classifier.forward(model.encode_identity(images));
            Tensor loss = identity_loss(logits, dense_labels(source, batch),
                                        cfg.loss.label_smoothing);
            loss.backward();
            opt->step();
            result.metrics.push_back({1, epoch, 'S', loss.item(), {}, {}, {},
                                      {}, lr});
            ++step;
        }
        guard_finite(model, 1, epoch, "stage-1 epoch");
        if (epoch < s1.warmup_epochs) {
            const auto sum = nn::checksum(frozen_group);
            result.frozen_checksums.push_back(sum);
            if (sum != result.frozen_checksums.front()) {
                throw NumericError(
                    "stage 1: frozen backbone changed during warmup");
            }
        }
    }

    result.final_train_accuracy =
        evaluate_train_accuracy(model, source, store, s1.batch_size);
    return result;
}

StageResult run_stage2(UdganModel& model, const TrainConfig& cfg,
                       const DatasetManifest& target, ImageStore& store) {
    const auto& s2 = cfg.stage2;
    StageResult result;
    Rng rng = Rng(cfg.seed).fork("stage2");

    auto [pairs, report] = mine_target_pairs(model, cfg, target, store);
    if (pairs.empty()) throw DataError("stage 2: pair mining produced no pairs");
    result.pairs = pairs;
    result.mining_report = report;

    // the content head starts from a duplicate of the trained identity tail
    model.content_head.adopt_tail(*model.backbone);

    auto frozen = model.identity_side_params();
    model.set_group_trainable(frozen, false);
    result.frozen_checksums.push_back(nn::checksum(frozen));

    auto g_params = model.content_params();
    {
        auto gen = model.generator_params();
        g_params.insert(g_params.end(), gen.begin(), gen.end());
    }
    model.set_group_trainable(g_params, true);
    auto d_params = model.discriminator_params();
    model.set_group_trainable(d_params, true);

    nn::Adam g_opt(g_params, s2.lr, s2.beta1, s2.beta2);
    nn::Sgd d_opt(d_params, s2.lr, s2.momentum);

    const auto train_idx = target.split_indices(Split::train);
    const int pairs_per_batch = s2.batch_size / 2;
    for (int epoch = 0; epoch < s2.epochs; ++epoch) {
        std::vector<std::size_t> order(pairs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        double epoch_rec = 0.0;
        int epoch_steps = 0;
        for (const auto& batch : make_batches(order, pairs_per_batch)) {
            std::vector<std::size_t> q_idx, m_idx;
            for (auto pi : batch) {
                q_idx.push_back(train_idx.at(pairs[pi].query_index));
                m_idx.push_back(train_idx.at(pairs[pi].match_index));
            }
            Tensor x1 = stack_images(store, target, q_idx);
            Tensor x2 = stack_images(store, target, m_idx);
            const auto losses =
                target_step(model, cfg, x1, x2, g_opt, d_opt, rng);
            result.metrics.push_back({2, epoch, 'T', {}, losses.rec,
                                      losses.kl, losses.adv_g, losses.adv_d,
                                      s2.lr});
            epoch_rec += losses.rec;
            ++epoch_steps;
        }
        guard_finite(model, 2, epoch, "stage-2 epoch");
        result.epoch_recon_loss.push_back(epoch_rec / epoch_steps);
        const auto sum = nn::checksum(frozen);
        result.frozen_checksums.push_back(sum);
        if (sum != result.frozen_checksums.front()) {
            throw NumericError("stage 2: frozen identity encoder changed");
        }
    }

    model.set_group_trainable(frozen, true);
    return result;
}

StageResult run_stage3(UdganModel& model, const TrainConfig& cfg,
                       const DatasetManifest& source, ImageStore& source_store,
                       const DatasetManifest& target,
                       ImageStore& target_store) {
    const auto& s3 = cfg.stage3;
    StageResult result;
    Rng rng = Rng(cfg.seed).fork("stage3");

    auto [pairs, report] = mine_target_pairs(model, cfg, target, target_store);
    result.pairs = pairs;
    result.mining_report = report;

    const auto source_idx = source.train_indices();
    if (source_idx.empty()) throw DataError("stage 3: empty source train split");
    const auto target_train_idx = target.split_indices(Split::train);

    for (auto& p : model.all_parameters()) p.set_requires_grad(true);

    auto id_opt =
        make_identity_optimizer(cfg.stage1, model.identity_side_params(), s3.lr);
    // the generative update reaches both encoders in this stage
    auto g_params = model.content_params();
    for (auto& group : {model.generator_params(), model.trunk_params(),
                        model.id_head_params()}) {
        g_params.insert(g_params.end(), group.begin(), group.end());
    }
    nn::Adam g_opt(g_params, s3.lr, cfg.stage2.beta1, cfg.stage2.beta2);
    nn::Sgd d_opt(model.discriminator_params(), s3.lr, cfg.stage2.momentum);

    const int pairs_per_batch = s3.target_batch_size / 2;
    for (int epoch = 0; epoch < s3.epochs; ++epoch) {
        auto src_order = source_idx;
        rng.shuffle(src_order);
        const auto src_batches = make_batches(src_order, s3.source_batch_size);

        std::vector<std::size_t> pair_order(pairs.size());
        for (std::size_t i = 0; i < pair_order.size(); ++i) pair_order[i] = i;
        rng.shuffle(pair_order);
        const auto tgt_batches = make_batches(pair_order, pairs_per_batch);

        const auto schedule =
            make_alternating_schedule(static_cast<int>(src_batches.size()),
                                      static_cast<int>(tgt_batches.size()));
        std::size_t si = 0, ti = 0;
        double epoch_rec = 0.0;
        int rec_steps = 0;
        for (const auto domain : schedule) {
            if (domain == StepDomain::source) {
                const auto& batch = src_batches[si++];
                id_opt->zero_grad();
                Tensor images = stack_images(source_store, source, batch);
                Tensor logits =
                    model.classifier.forward(model.encode_identity(images));
                Tensor loss =
                    identity_loss(logits, dense_labels(source, batch),
                                  cfg.loss.label_smoothing);
                loss.backward();
                id_opt->step();
                result.metrics.push_back({3, epoch, 'S', loss.item(), {}, {},
                                          {}, {}, s3.lr});
                result.step_domains.push_back('S');
            } else {
                const auto& batch = tgt_batches[ti++ % tgt_batches.size()];
                std::vector<std::size_t> q_idx, m_idx;
                for (auto pi : batch) {
                    q_idx.push_back(target_train_idx.at(pairs[pi].query_index));
                    m_idx.push_back(target_train_idx.at(pairs[pi].match_index));
                }
                Tensor x1 = stack_images(target_store, target, q_idx);
                Tensor x2 = stack_images(target_store, target, m_idx);
                const auto losses =
                    target_step(model, cfg, x1, x2, g_opt, d_opt, rng);
                result.metrics.push_back({3, epoch, 'T', {}, losses.rec,
                                          losses.kl, losses.adv_g,
                                          losses.adv_d, s3.lr});
                result.step_domains.push_back('T');
                epoch_rec += losses.rec;
                ++rec_steps;
            }
        }
        guard_finite(model, 3, epoch, "stage-3 epoch");
        if (rec_steps > 0) {
            result.epoch_recon_loss.push_back(epoch_rec / rec_steps);
        }
    }
    return result;
}

double evaluate_train_accuracy(UdganModel& model,
                               const DatasetManifest& manifest,
                               ImageStore& store, int batch_size) {
    NoGradGuard guard(model);
    const auto train_idx = manifest.train_indices();
    if (train_idx.empty()) throw DataError("accuracy: empty train split");
    std::size_t correct = 0;
    for (const auto& batch : make_batches(train_idx, batch_size)) {
        Tensor logits =
            model.classifier.forward(model.encode_identity(
                stack_images(store, manifest, batch)));
        const auto labels = dense_labels(manifest, batch);
        const std::int64_t k = logits.dim(1);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const double* row = logits.data() + static_cast<std::int64_t>(i) * k;
            const int argmax = static_cast<int>(
                std::max_element(row, row + k) - row);
            if (argmax == labels[i]) ++correct;
        }
    }
    return static_cast<double>(correct) /
           static_cast<double>(train_idx.size());
}

double identity_preservation_score(UdganModel& trained, UdganModel& judge,
                                   const DatasetManifest& manifest,
                                   ImageStore& store, std::uint64_t seed) {
    const auto query_idx = manifest.split_indices(Split::query);
    const auto gallery_idx = manifest.split_indices(Split::gallery);
    if (query_idx.empty() || gallery_idx.empty()) {
        throw DataError("identity preservation: need held-out query/gallery");
    }

    // same-identity held-out pairs, both orders
    std::vector<std::pair<std::size_t, std::size_t>> held_out;
    for (auto qi : query_idx) {
        for (auto gi : gallery_idx) {
            if (manifest.entries[qi].identity == manifest.entries[gi].identity) {
                held_out.emplace_back(qi, gi);
                held_out.emplace_back(gi, qi);
            }
        }
    }
    if (held_out.empty()) {
        throw DataError("identity preservation: no same-identity pairs");
    }

    NoGradGuard guard_trained(trained);
    NoGradGuard guard_judge(judge);
    Rng rng = Rng(seed).fork("id-preservation");
    // posterior-mean content codes: the judged swap is deterministic
    const Tensor zero_noise =
        Tensor::zeros({1, trained.backbone->feature_dim()});
    std::size_t hits = 0;
    for (const auto& [ai, bi] : held_out) {
        Tensor xa = stack_images(store, manifest, {ai});
        Tensor xb = stack_images(store, manifest, {bi});
        GeneratedQuad quad =
            trained.swap_generate(xa, xb, false, rng, zero_noise, zero_noise);
        Tensor swapped_vid = judge.encode_identity(quad.x12);
        Tensor anchor_vid = judge.encode_identity(xa);

        // a random held-out image of a different identity
        const int own_id = manifest.entries[ai].identity;
        std::vector<std::size_t> others;
        for (auto gi : gallery_idx) {
            if (manifest.entries[gi].identity != own_id) others.push_back(gi);
        }
        const std::size_t oi = others[rng.uniform_index(others.size())];
        Tensor other_vid =
            judge.encode_identity(stack_images(store, manifest, {oi}));

        const auto row = [](const Tensor& t) {
            return std::vector<double>(t.data(), t.data() + t.numel());
        };
        const double d_anchor = reid_distance(row(swapped_vid), row(anchor_vid));
        const double d_other = reid_distance(row(swapped_vid), row(other_vid));
        if (d_anchor < d_other) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(held_out.size());
}

}  // namespace udgan
