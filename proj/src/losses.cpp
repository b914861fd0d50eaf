#include "udgan/losses.hpp"

namespace udgan {

void validate(const LossWeights& w) {
    if (w.lambda_rec < 0.0 || w.lambda_kl < 0.0 || w.lambda_adv < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (w.label_smoothing < 0.0 || w.label_smoothing >= 1.0) {
        throw ConfigError("label smoothing must be in [0,1)");
    }
}

ReconTargetMode recon_target_mode_from_string(const std::string& s) {
    if (s == "content_source") return ReconTargetMode::content_source;
    if (s == "identity_source") return ReconTargetMode::identity_source;
    throw ConfigError("unknown reconstruction target mode: " + s);
}

const char* to_string(ReconTargetMode m) {
    return m == ReconTargetMode::content_source ? "content_source"
                                                : "identity_source";
}

Tensor identity_loss(const Tensor& logits, const std::vector<int>& labels,
                     double label_smoothing) {
    return cross_entropy_smoothed(logits, labels, label_smoothing);
}

Tensor kl_loss(const Tensor& mu, const Tensor& logvar) {
    return kl_gaussian(mu, logvar);
}

Tensor adversarial_loss_d(const Tensor& real_patch_logits,
                          const Tensor& fake_patch_logits) {
    // -log D(real) - log(1 - D(fake)) in stable logit space
    return softplus_mean(real_patch_logits, true) +
           softplus_mean(fake_patch_logits, false);
}

Tensor adversarial_loss_g(const Tensor& fake_patch_logits) {
    // non-saturating -log D(fake)
    return softplus_mean(fake_patch_logits, true);
}

Tensor reconstruction_loss(const GeneratedQuad& quad, const Tensor& x1,
                           const Tensor& x2, ReconTargetMode mode) {
    const bool content = mode == ReconTargetMode::content_source;
    const Tensor& t12 = content ? x2 : x1;
    const Tensor& t21 = content ? x1 : x2;
    return l1_mean(quad.x11, x1) + l1_mean(quad.x12, t12) +
           l1_mean(quad.x21, t21) + l1_mean(quad.x22, x2);
}

Tensor target_loss(const Tensor& rec, const Tensor& kl, const Tensor& adv_g,
                   const LossWeights& w) {
    validate(w);
    return w.lambda_rec * rec + w.lambda_kl * kl + w.lambda_adv * adv_g;
}

}  // namespace udgan
