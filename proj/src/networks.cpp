#include "udgan/networks.hpp"

#include <algorithm>
#include <cmath>

namespace udgan {

void validate(const NetworkConfig& cfg) {
    if (cfg.image_h < 8 || cfg.image_w < 8) {
        throw ConfigError("image size too small");
    }
    if (cfg.latent_dim < 1) throw ConfigError("latent_dim must be positive");
    if (cfg.generator_blocks < 1 || cfg.discriminator_blocks < 1) {
        throw ConfigError("block counts must be positive");
    }
    if (cfg.trunk_channels.size() != 3) {
        throw ConfigError("TinyTrunk expects exactly three stage widths");
    }
    const std::int64_t down = std::int64_t{1} << cfg.generator_blocks;
    if (cfg.image_h % down != 0 || cfg.image_w % down != 0) {
        throw ConfigError(
            "image size must be divisible by 2^generator_blocks (" +
            std::to_string(down) + ")");
    }
    if (cfg.image_h / down < 1 || cfg.image_w / down < 1) {
        throw ConfigError("generator initial map would be empty");
    }
    // discriminator stages: k4 s2 p1 halving, then a 3x3 patch head
    std::int64_t h = cfg.image_h, w = cfg.image_w;
    for (int i = 0; i < cfg.discriminator_blocks; ++i) {
        h = conv_out_dim(h, 4, 2, 1);
        w = conv_out_dim(w, 4, 2, 1);
        if (h < 1 || w < 1) {
            throw ConfigError("discriminator stage " + std::to_string(i + 1) +
                              " would be empty for this image size");
        }
    }
    if (h * w <= 1) {
        throw ConfigError(
            "patch logit map has no spatial extent; reduce "
            "discriminator_blocks for this image size");
    }
    if (cfg.pixel.stddev <= 0.0) throw ConfigError("pixel std must be > 0");
    if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) {
        throw ConfigError("dropout rate must be in [0,1)");
    }
}

// --- TinyTrunk ---------------------------------------------------------------

namespace {

class TinyTrunkTail final : public ContentTail {
public:
    TinyTrunkTail(const nn::Conv2d& c1, const nn::Conv2d& c2, double slope)
        : conv1_(c1), conv2_(c2), slope_(slope) {
        // independent copies; training must not alias the identity tail
        conv1_.weight = c1.weight.clone();
        conv2_.weight = c2.weight.clone();
        if (c1.bias.defined()) conv1_.bias = c1.bias.clone();
        if (c2.bias.defined()) conv2_.bias = c2.bias.clone();
    }

    Tensor forward(const Tensor& shared_map) const override {
        Tensor h = leaky_relu(conv1_.forward(shared_map), slope_);
        h = leaky_relu(conv2_.forward(h), slope_);
        return global_avg_pool(h);
    }

    int pooled_dim() const override {
        return static_cast<int>(conv2_.weight.dim(0));
    }

    void collect(const std::string& prefix,
                 std::vector<nn::NamedTensor>& params) override {
        conv1_.collect(prefix + ".conv1", params);
        conv2_.collect(prefix + ".conv2", params);
    }

private:
    nn::Conv2d conv1_, conv2_;
    double slope_;
};

}  // namespace

TinyTrunk::TinyTrunk(const NetworkConfig& cfg, Rng& rng)
    : slope_(cfg.leaky_slope), feature_dim_(cfg.latent_dim) {
    Rng init = rng.fork("tiny-trunk");
    const auto& ch = cfg.trunk_channels;
    shared_conv_ = nn::Conv2d(3, ch[0], 3, 2, 1, true, init);
    tail_conv1_ = nn::Conv2d(ch[0], ch[1], 3, 2, 1, true, init);
    tail_conv2_ = nn::Conv2d(ch[1], ch[2], 3, 2, 1, true, init);
    embed_ = nn::Linear(ch[2], cfg.latent_dim, init);
}

Tensor TinyTrunk::shared_features(const Tensor& images) const {
    return leaky_relu(shared_conv_.forward(images), slope_);
}

Tensor TinyTrunk::identity_embed(const Tensor& shared_map) const {
    Tensor h = leaky_relu(tail_conv1_.forward(shared_map), slope_);
    h = leaky_relu(tail_conv2_.forward(h), slope_);
    return embed_.forward(global_avg_pool(h));
}

std::unique_ptr<ContentTail> TinyTrunk::make_content_tail() const {
    return std::make_unique<TinyTrunkTail>(tail_conv1_, tail_conv2_, slope_);
}

void TinyTrunk::collect_trunk(const std::string& prefix,
                              std::vector<nn::NamedTensor>& params) {
    shared_conv_.collect(prefix + ".shared_conv", params);
}

void TinyTrunk::collect_head(const std::string& prefix,
                             std::vector<nn::NamedTensor>& params) {
    tail_conv1_.collect(prefix + ".tail_conv1", params);
    tail_conv2_.collect(prefix + ".tail_conv2", params);
    embed_.collect(prefix + ".embed", params);
}

// --- ContentHead -------------------------------------------------------------

ContentHead::ContentHead(const Backbone& backbone, int latent_dim, Rng& rng) {
    Rng init = rng.fork("content-head");
    tail_ = backbone.make_content_tail();
    fc_mu_ = nn::Linear(tail_->pooled_dim(), latent_dim, init);
    fc_logvar_ = nn::Linear(tail_->pooled_dim(), latent_dim, init);
}

std::pair<Tensor, Tensor> ContentHead::forward(const Tensor& shared_map) const {
    Tensor pooled = tail_->forward(shared_map);
    return {fc_mu_.forward(pooled), fc_logvar_.forward(pooled)};
}

void ContentHead::adopt_tail(const Backbone& backbone) {
    tail_ = backbone.make_content_tail();
}

void ContentHead::collect(const std::string& prefix,
                          std::vector<nn::NamedTensor>& params) {
    tail_->collect(prefix + ".tail", params);
    fc_mu_.collect(prefix + ".fc_mu", params);
    fc_logvar_.collect(prefix + ".fc_logvar", params);
}

// --- Generator ----------------------------------------------------------

Generator::Generator(const NetworkConfig& cfg, Rng& rng)
    : slope_(cfg.leaky_slope), dropout_(cfg.dropout_rate) {
    Rng init = rng.fork("generator");
    const std::int64_t down = std::int64_t{1} << cfg.generator_blocks;
    init_h_ = cfg.image_h / static_cast<int>(down);
    init_w_ = cfg.image_w / static_cast<int>(down);
    init_c_ = cfg.generator_channels;
    fusion_ = nn::Linear(2 * cfg.latent_dim, init_c_ * init_h_ * init_w_, init);
    int ch = init_c_;
    for (int b = 0; b < cfg.generator_blocks; ++b) {
        const int next = std::max(ch / 2, 8);
        // bias folds into the following batch norm, so the deconv skips it
        ups_.emplace_back(ch, next, 4, 2, 1, false, init);
        norms_.emplace_back(next);
        ch = next;
    }
    to_rgb_ = nn::Conv2d(ch, 3, 3, 1, 1, true, init);
    // map tanh's (-1,1) onto the normalized range of [0,1] pixels
    out_scale_ = 0.5 / cfg.pixel.stddev;
    out_shift_ = (0.5 - cfg.pixel.mean) / cfg.pixel.stddev;
}

Tensor Generator::forward(const Tensor& v_id, const Tensor& v_c, bool training,
                          Rng& dropout_rng) {
    if (v_id.ndim() != 2 || v_c.ndim() != 2 || v_id.dim(0) != v_c.dim(0) ||
        v_id.dim(1) != v_c.dim(1)) {
        throw ShapeError("generate: latent vectors must both be [N,d]");
    }
    Tensor z = concat_cols(v_id, v_c);
    Tensor h = fusion_.forward(z);
    h = reshape(h, {v_id.dim(0), init_c_, init_h_, init_w_});
    for (std::size_t b = 0; b < ups_.size(); ++b) {
        h = ups_[b].forward(h);
        h = norms_[b].forward(h, training);
        h = leaky_relu(h, slope_);
        h = dropout(h, dropout_, training, dropout_rng);
    }
    h = udgan::tanh(to_rgb_.forward(h));
    return out_scale_ * h + out_shift_;
}

void Generator::collect(const std::string& prefix,
                        std::vector<nn::NamedTensor>& params) {
    fusion_.collect(prefix + ".fusion", params);
    for (std::size_t b = 0; b < ups_.size(); ++b) {
        ups_[b].collect(prefix + ".up" + std::to_string(b), params);
        norms_[b].collect(prefix + ".bn" + std::to_string(b), params);
    }
    to_rgb_.collect(prefix + ".to_rgb", params);
}

void Generator::collect_buffers(const std::string& prefix,
                                std::vector<nn::NamedTensor>& buffers) {
    for (std::size_t b = 0; b < norms_.size(); ++b) {
        norms_[b].collect_buffers(prefix + ".bn" + std::to_string(b), buffers);
    }
}

// --- Discriminator -----------------------------------------------------------

Discriminator::Discriminator(const NetworkConfig& cfg, Rng& rng)
    : slope_(cfg.leaky_slope) {
    Rng init = rng.fork("discriminator");
    int ch = 3;
    for (int b = 0; b < cfg.discriminator_blocks; ++b) {
        const int next = std::min(cfg.discriminator_channels << b,
                                  cfg.discriminator_channels * 8);
        blocks_.emplace_back(ch, next, 4, 2, 1, false, init);
        ch = next;
    }
    patch_ = nn::Conv2d(ch, 1, 3, 1, 1, true, init);
}

Tensor Discriminator::forward(const Tensor& images) const {
    Tensor h = images;
    for (const auto& block : blocks_) {
        h = leaky_relu(instance_norm2d(block.forward(h), 1e-5), slope_);
    }
    return patch_.forward(h);
}

void Discriminator::collect(const std::string& prefix,
                            std::vector<nn::NamedTensor>& params) {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        blocks_[b].collect(prefix + ".block" + std::to_string(b), params);
    }
    patch_.collect(prefix + ".patch", params);
}

Tensor global_score(const Tensor& patch_logits) {
    if (patch_logits.ndim() != 4 || patch_logits.dim(1) != 1) {
        throw ShapeError("global_score: expects patch logits [N,1,h,w]");
    }
    Tensor pooled = global_avg_pool(patch_logits);  // [N,1]
    return reshape(pooled, {patch_logits.dim(0)});
}

// --- UdganModel --------------------------------------------------------------

UdganModel UdganModel::build(const NetworkConfig& cfg, int num_classes,
                             Rng& rng) {
    validate(cfg);
    if (num_classes < 2) {
        throw ConfigError("model needs at least two source classes");
    }
    UdganModel m;
    m.cfg = cfg;
    m.num_classes = num_classes;
    m.backbone = std::make_unique<TinyTrunk>(cfg, rng);
    Rng cls = rng.fork("classifier");
    m.classifier = nn::Linear(cfg.latent_dim, num_classes, cls);
    m.content_head = ContentHead(*m.backbone, cfg.latent_dim, rng);
    m.generator = Generator(cfg, rng);
    m.discriminator = Discriminator(cfg, rng);
    return m;
}

Tensor UdganModel::encode_identity(const Tensor& images) const {
    if (images.ndim() != 4 || images.dim(1) != 3 ||
        images.dim(2) != cfg.image_h || images.dim(3) != cfg.image_w) {
        throw ShapeError("encode_identity: expected [N,3," +
                         std::to_string(cfg.image_h) + "," +
                         std::to_string(cfg.image_w) + "]");
    }
    return backbone->identity_embed(backbone->shared_features(images));
}

LatentCodes UdganModel::encode_content(const Tensor& images, Rng& rng,
                                       const Tensor& noise) const {
    if (images.ndim() != 4 || images.dim(2) != cfg.image_h ||
        images.dim(3) != cfg.image_w) {
        throw ShapeError("encode_content: spatial size mismatch");
    }
    Tensor shared = backbone->shared_features(images);
    LatentCodes codes;
    codes.v_id = backbone->identity_embed(shared);
    auto [mu, logvar] = content_head.forward(shared);
    Tensor eps = noise;
    if (!eps.defined()) {
        eps = Tensor::randn({mu.dim(0), mu.dim(1)}, rng);
    }
    if (eps.shape() != mu.shape()) {
        throw ShapeError("encode_content: noise must be [N,d]");
    }
    codes.mu = mu;
    codes.logvar = logvar;
    codes.v_c = mu + exp(0.5 * logvar) * eps;
    return codes;
}

Tensor UdganModel::generate(const Tensor& v_id, const Tensor& v_c,
                            bool training, Rng& rng) {
    return generator.forward(v_id, v_c, training, rng);
}

GeneratedQuad UdganModel::swap_generate(const Tensor& x1, const Tensor& x2,
                                        bool training, Rng& rng,
                                        const Tensor& noise1,
                                        const Tensor& noise2) {
    if (x1.shape() != x2.shape()) {
        throw ShapeError("swap_generate: pair images must share a shape");
    }
    const std::int64_t n = x1.dim(0);
    LatentCodes c1 = encode_content(x1, rng, noise1);
    LatentCodes c2 = encode_content(x2, rng, noise2);
    // one generator pass for all four combinations; BN statistics then
    // cover the whole quad batch
    Tensor ids = concat_rows({c1.v_id, c1.v_id, c2.v_id, c2.v_id});
    Tensor contents = concat_rows({c1.v_c, c2.v_c, c1.v_c, c2.v_c});
    Tensor all = generator.forward(ids, contents, training, rng);
    GeneratedQuad quad;
    quad.x11 = slice_rows(all, 0, n);
    quad.x12 = slice_rows(all, n, n);
    quad.x21 = slice_rows(all, 2 * n, n);
    quad.x22 = slice_rows(all, 3 * n, n);
    return quad;
}

std::pair<Tensor, Tensor> UdganModel::discriminate(const Tensor& images) const {
    Tensor patches = discriminator.forward(images);
    return {patches, global_score(patches)};
}

namespace {
std::vector<Tensor> values_of(std::vector<nn::NamedTensor> named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& nt : named) out.push_back(nt.tensor);
    return out;
}
}  // namespace

std::vector<Tensor> UdganModel::trunk_params() {
    std::vector<nn::NamedTensor> named;
    backbone->collect_trunk("trunk", named);
    return values_of(std::move(named));
}

std::vector<Tensor> UdganModel::id_head_params() {
    std::vector<nn::NamedTensor> named;
    backbone->collect_head("id_head", named);
    return values_of(std::move(named));
}

std::vector<Tensor> UdganModel::classifier_params() {
    std::vector<nn::NamedTensor> named;
    classifier.collect("classifier", named);
    return values_of(std::move(named));
}

std::vector<Tensor> UdganModel::content_params() {
    std::vector<nn::NamedTensor> named;
    content_head.collect("content_head", named);
    return values_of(std::move(named));
}

std::vector<Tensor> UdganModel::generator_params() {
    std::vector<nn::NamedTensor> named;
    generator.collect("generator", named);
    return values_of(std::move(named));
}

std::vector<Tensor> UdganModel::discriminator_params() {
    std::vector<nn::NamedTensor> named;
    discriminator.collect("discriminator", named);
    return values_of(std::move(named));
}

std::vector<Tensor> UdganModel::identity_side_params() {
    auto out = trunk_params();
    auto head = id_head_params();
    auto cls = classifier_params();
    out.insert(out.end(), head.begin(), head.end());
    out.insert(out.end(), cls.begin(), cls.end());
    return out;
}

std::vector<nn::NamedTensor> UdganModel::named_parameters() {
    std::vector<nn::NamedTensor> named;
    backbone->collect_trunk("trunk", named);
    backbone->collect_head("id_head", named);
    classifier.collect("classifier", named);
    content_head.collect("content_head", named);
    generator.collect("generator", named);
    discriminator.collect("discriminator", named);
    return named;
}

std::vector<nn::NamedTensor> UdganModel::named_buffers() {
    std::vector<nn::NamedTensor> buffers;
    generator.collect_buffers("generator", buffers);
    return buffers;
}

std::vector<Tensor> UdganModel::all_parameters() {
    return values_of(named_parameters());
}

void UdganModel::set_group_trainable(std::vector<Tensor> group,
                                     bool trainable) {
    for (auto& t : group) t.set_requires_grad(trainable);
}

}  // namespace udgan
