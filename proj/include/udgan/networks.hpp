#pragma once

#include <memory>
#include <string>
#include <vector>

#include "udgan/core_data.hpp"
#include "udgan/errors.hpp"
#include "udgan/losses.hpp"
#include "udgan/nn.hpp"
#include "udgan/rng.hpp"
#include "udgan/tensor.hpp"

namespace udgan {

struct NetworkConfig {
    int image_h = 384;
    int image_w = 128;
    int latent_dim = 512;          // d, shared by v_Id and v_C
    int generator_blocks = 6;      // B upsampling blocks
    int generator_channels = 512;  // channels of the fused initial map
    int discriminator_blocks = 7;  // C strided conv blocks
    int discriminator_channels = 64;
    std::vector<int> trunk_channels = {32, 64, 128};
    double leaky_slope = 0.2;
    double dropout_rate = 0.5;
    PixelNorm pixel;
};

// Checks the shape algebra: image size divisible by 2^B, discriminator
// stages stay non-empty and the patch map keeps spatial extent > 1.
void validate(const NetworkConfig& cfg);

struct LatentCodes {
    Tensor v_id;    // [N,d]
    Tensor mu;      // [N,d]
    Tensor logvar;  // [N,d]
    Tensor v_c;     // [N,d]; equals mu exactly when the noise is zero
};

// Content tail: the backbone's duplicated final blocks plus global average
// pooling, mapping the shared feature map to a pooled vector.
class ContentTail {
public:
    virtual ~ContentTail() = default;
    virtual Tensor forward(const Tensor& shared_map) const = 0;
    virtual int pooled_dim() const = 0;
    virtual void collect(const std::string& prefix,
                         std::vector<nn::NamedTensor>& params) = 0;
};

// Pluggable ReID backbone: shared trunk + identity head. Retrieval and
// mining use identity_embed(shared_features(x)); the classifier on top
// exists only for source-domain training.
class Backbone {
public:
    virtual ~Backbone() = default;
    virtual Tensor shared_features(const Tensor& images) const = 0;
    virtual Tensor identity_embed(const Tensor& shared_map) const = 0;
    virtual int feature_dim() const = 0;
    // fresh tail whose weights duplicate the current identity tail
    virtual std::unique_ptr<ContentTail> make_content_tail() const = 0;
    virtual void collect_trunk(const std::string& prefix,
                               std::vector<nn::NamedTensor>& params) = 0;
    virtual void collect_head(const std::string& prefix,
                              std::vector<nn::NamedTensor>& params) = 0;
};

// Reference backbone: three small conv stages. The first stage is the
// shared trunk; the last two are the identity tail that the content head
// duplicates.
class TinyTrunk final : public Backbone {
public:
    TinyTrunk(const NetworkConfig& cfg, Rng& rng);
    Tensor shared_features(const Tensor& images) const override;
    Tensor identity_embed(const Tensor& shared_map) const override;
    int feature_dim() const override { return feature_dim_; }
    std::unique_ptr<ContentTail> make_content_tail() const override;
    void collect_trunk(const std::string& prefix,
                       std::vector<nn::NamedTensor>& params) override;
    void collect_head(const std::string& prefix,
                      std::vector<nn::NamedTensor>& params) override;

private:
    nn::Conv2d shared_conv_;
    nn::Conv2d tail_conv1_, tail_conv2_;
    nn::Linear embed_;
    double slope_;
    int feature_dim_;
};

// Variational content head: duplicated tail + two linear maps for the
// posterior parameters.
class ContentHead {
public:
    ContentHead() = default;
    ContentHead(const Backbone& backbone, int latent_dim, Rng& rng);
    // (mu, logvar) from the shared trunk feature map
    std::pair<Tensor, Tensor> forward(const Tensor& shared_map) const;
    // re-duplicates the (now trained) identity tail; posterior layers keep
    // their weights
    void adopt_tail(const Backbone& backbone);
    void collect(const std::string& prefix,
                 std::vector<nn::NamedTensor>& params);

private:
    std::unique_ptr<ContentTail> tail_;
    nn::Linear fc_mu_, fc_logvar_;
};

class Generator {
public:
    Generator() = default;
    Generator(const NetworkConfig& cfg, Rng& rng);
    // images in the normalized pixel range, shape [N,3,H,W]
    Tensor forward(const Tensor& v_id, const Tensor& v_c, bool training,
                   Rng& dropout_rng);
    void collect(const std::string& prefix,
                 std::vector<nn::NamedTensor>& params);
    void collect_buffers(const std::string& prefix,
                         std::vector<nn::NamedTensor>& buffers);

private:
    nn::Linear fusion_;
    std::vector<nn::ConvTranspose2d> ups_;
    std::vector<nn::BatchNorm2d> norms_;
    nn::Conv2d to_rgb_;
    int init_h_ = 0, init_w_ = 0, init_c_ = 0;
    double slope_ = 0.2, dropout_ = 0.5;
    double out_scale_ = 1.0, out_shift_ = 0.0;
};

class Discriminator {
public:
    Discriminator() = default;
    Discriminator(const NetworkConfig& cfg, Rng& rng);
    // patch logits [N,1,h',w']
    Tensor forward(const Tensor& images) const;
    void collect(const std::string& prefix,
                 std::vector<nn::NamedTensor>& params);

private:
    std::vector<nn::Conv2d> blocks_;
    nn::Conv2d patch_;
    double slope_ = 0.2;
};

// Spatial mean of the patch logits, one score per image.
Tensor global_score(const Tensor& patch_logits);

// The full model: backbone + classifier + content head + generator +
// discriminator, with named parameter groups for staging and checkpoints.
struct UdganModel {
    NetworkConfig cfg;
    int num_classes = 0;
    std::unique_ptr<Backbone> backbone;
    nn::Linear classifier;  // v_Id -> source-class logits
    ContentHead content_head;
    Generator generator;
    Discriminator discriminator;

    static UdganModel build(const NetworkConfig& cfg, int num_classes,
                            Rng& rng);

    Tensor encode_identity(const Tensor& images) const;
    // noise: optional [N,d]; freshly drawn from rng when undefined
    LatentCodes encode_content(const Tensor& images, Rng& rng,
                               const Tensor& noise = {}) const;
    Tensor generate(const Tensor& v_id, const Tensor& v_c, bool training,
                    Rng& rng);
    // X_ij = generate(v_Id from x_i, v_C from x_j); one content noise draw
    // per input image per call, shared across its two uses
    GeneratedQuad swap_generate(const Tensor& x1, const Tensor& x2,
                                bool training, Rng& rng,
                                const Tensor& noise1 = {},
                                const Tensor& noise2 = {});
    std::pair<Tensor, Tensor> discriminate(const Tensor& images) const;

    // parameter groups
    std::vector<Tensor> trunk_params();
    std::vector<Tensor> id_head_params();
    std::vector<Tensor> classifier_params();
    std::vector<Tensor> content_params();
    std::vector<Tensor> generator_params();
    std::vector<Tensor> discriminator_params();
    std::vector<Tensor> identity_side_params();  // trunk + head + classifier

    std::vector<nn::NamedTensor> named_parameters();
    std::vector<nn::NamedTensor> named_buffers();
    std::vector<Tensor> all_parameters();

    void set_group_trainable(std::vector<Tensor> group, bool trainable);
};

}  // namespace udgan
