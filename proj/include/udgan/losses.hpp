#pragma once

#include <vector>

#include "udgan/errors.hpp"
#include "udgan/tensor.hpp"

namespace udgan {

struct LossWeights {
    double lambda_rec = 10.0;
    double lambda_kl = 1e-4;
    double lambda_adv = 1.0;
    double label_smoothing = 0.1;
};

void validate(const LossWeights& w);  // throws ConfigError on negatives

// The four generated images of one pair: x_ij carries the identity of
// image i and the content of image j.
struct GeneratedQuad {
    Tensor x11, x12, x21, x22;  // each [N,3,H,W]
};

// Which original image a swapped generation is compared against: the one
// that supplied its content, or the one that supplied its identity.
enum class ReconTargetMode { content_source, identity_source };

ReconTargetMode recon_target_mode_from_string(const std::string& s);
const char* to_string(ReconTargetMode m);

// Batch-mean cross entropy against label-smoothed targets.
Tensor identity_loss(const Tensor& logits, const std::vector<int>& labels,
                     double label_smoothing);

// Closed-form KL(N(mu, e^logvar) || N(0, 1)), batch mean.
Tensor kl_loss(const Tensor& mu, const Tensor& logvar);

// Discriminator side: fake logits must come from detached generations.
Tensor adversarial_loss_d(const Tensor& real_patch_logits,
                          const Tensor& fake_patch_logits);
// Generator/encoder side, non-saturating form.
Tensor adversarial_loss_g(const Tensor& fake_patch_logits);

// Per-image mean absolute error, summed over the four generated images.
Tensor reconstruction_loss(const GeneratedQuad& quad, const Tensor& x1,
                           const Tensor& x2, ReconTargetMode mode);

// lambda_rec * rec + lambda_kl * kl + lambda_adv * adv_g
Tensor target_loss(const Tensor& rec, const Tensor& kl, const Tensor& adv_g,
                   const LossWeights& w);

}  // namespace udgan
