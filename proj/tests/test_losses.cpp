#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "udgan/losses.hpp"

using namespace udgan;
using test::gradcheck;

TEST_CASE("identity loss: uniform logits give ln K") {
    for (int k : {2, 5, 16}) {
        auto logits = Tensor::zeros({3, k});
        for (double eps : {0.0, 0.1, 0.3}) {
            auto loss = identity_loss(logits, {0, k - 1, k / 2}, eps);
            CHECK(loss.item() == doctest::Approx(std::log(k)).epsilon(1e-12));
        }
    }
}

TEST_CASE("identity loss: frozen hand-computed smoothing example") {
    // K=2, logits (ln 9, 0), label 0, eps = 0.1:
    // softmax = (0.9, 0.1), targets = (0.95, 0.05)
    // loss = -(0.95 ln 0.9 + 0.05 ln 0.1) = 0.21522...
    auto logits = Tensor::from_vector({1, 2}, {std::log(9.0), 0.0});
    auto loss = identity_loss(logits, {0}, 0.1);
    CHECK(loss.item() == doctest::Approx(0.21522).epsilon(5e-4));
    CHECK(std::abs(loss.item() - 0.21522) < 1e-4);
}

TEST_CASE("identity loss: eps=0 reduces to plain cross entropy") {
    Rng rng(31);
    auto logits = Tensor::randn({4, 6}, rng);
    std::vector<int> labels = {1, 0, 5, 3};
    auto smoothed = identity_loss(logits, labels, 0.0);
    // independent plain CE
    double expect = 0.0;
    for (int i = 0; i < 4; ++i) {
        double z = 0.0;
        const double* row = logits.data() + i * 6;
        const double m = *std::max_element(row, row + 6);
        for (int j = 0; j < 6; ++j) z += std::exp(row[j] - m);
        expect += m + std::log(z) - row[labels[i]];
    }
    expect /= 4.0;
    CHECK(smoothed.item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("identity loss rejects bad labels") {
    auto logits = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(identity_loss(logits, {0, 3}, 0.1), std::out_of_range);
    CHECK_THROWS_AS(identity_loss(logits, {-1, 0}, 0.1), std::out_of_range);
}

TEST_CASE("kl loss closed forms") {
    auto mu0 = Tensor::zeros({1, 4});
    auto lv0 = Tensor::zeros({1, 4});
    CHECK(kl_loss(mu0, lv0).item() == 0.0);

    auto mu1 = Tensor::from_vector({1, 1}, {1.0});
    auto lv1 = Tensor::zeros({1, 1});
    CHECK(kl_loss(mu1, lv1).item() == doctest::Approx(0.5).epsilon(1e-12));

    Rng rng(32);
    auto mu = Tensor::randn({3, 8}, rng);
    auto lv = Tensor::randn({3, 8}, rng, 0.5);
    CHECK(kl_loss(mu, lv).item() >= 0.0);

    auto bad = Tensor::from_vector({1, 1}, {std::nan("")});
    CHECK_THROWS_AS(kl_loss(bad, lv1), NumericError);
}

TEST_CASE("kl loss agrees with the Monte-Carlo oracle") {
    Rng rng(33);
    Rng mc(34);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 16;
        std::vector<std::vector<double>> mu(1), lv(1);
        for (int j = 0; j < d; ++j) {
            mu[0].push_back(rng.uniform(-2.0, 2.0));
            lv[0].push_back(rng.uniform(-1.0, 1.0));
        }
        auto mu_t = Tensor::from_vector({1, d}, mu[0]);
        auto lv_t = Tensor::from_vector({1, d}, lv[0]);
        const double closed = kl_loss(mu_t, lv_t).item();
        const double estimate = test::mc_kl_estimate(mu, lv, 100000, mc);
        CHECK(std::abs(closed - estimate) / std::abs(closed) < 0.01);
    }
}

TEST_CASE("kl loss is convex in mu") {
    Rng rng(35);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = Tensor::randn({2, 6}, rng);
        auto b = Tensor::randn({2, 6}, rng);
        auto lv = Tensor::randn({2, 6}, rng, 0.3);
        std::vector<double> mid(a.numel());
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            mid[i] = 0.5 * (a.data()[i] + b.data()[i]);
        }
        auto m = Tensor::from_vector({2, 6}, mid);
        CHECK(kl_loss(m, lv).item() <=
              0.5 * (kl_loss(a, lv).item() + kl_loss(b, lv).item()) + 1e-12);
    }
}

TEST_CASE("adversarial losses at reference points") {
    auto zeros = Tensor::zeros({2, 1, 2, 3});
    CHECK(adversarial_loss_d(zeros, zeros).item() ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(adversarial_loss_g(zeros).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto real_win = Tensor::full({1, 1, 2, 2}, 40.0);
    auto fake_lose = Tensor::full({1, 1, 2, 2}, -40.0);
    CHECK(adversarial_loss_d(real_win, fake_lose).item() < 1e-10);
    CHECK(adversarial_loss_g(real_win).item() < 1e-10);
}

TEST_CASE("adversarial loss is invariant to patch permutation") {
    Rng rng(36);
    auto logits = Tensor::randn({1, 1, 3, 4}, rng);
    std::vector<double> shuffled(logits.values());
    Rng perm(37);
    perm.shuffle(shuffled);
    auto logits2 = Tensor::from_vector({1, 1, 3, 4}, shuffled);
    CHECK(adversarial_loss_g(logits).item() ==
          doctest::Approx(adversarial_loss_g(logits2).item()).epsilon(1e-12));
    auto real = Tensor::randn({1, 1, 3, 4}, rng);
    CHECK(adversarial_loss_d(real, logits).item() ==
          doctest::Approx(adversarial_loss_d(real, logits2).item())
              .epsilon(1e-12));
}

TEST_CASE("generator adversarial gradient matches the closed form") {
    Rng rng(38);
    auto fake = Tensor::randn({1, 1, 2, 3}, rng);
    fake.set_requires_grad(true);
    const std::int64_t patches = fake.numel();
    auto loss = adversarial_loss_g(fake);
    loss.backward();
    for (std::int64_t i = 0; i < patches; ++i) {
        const double logit = fake.values()[i];
        const double expect =
            -(1.0 / (1.0 + std::exp(logit))) / static_cast<double>(patches);
        CHECK(fake.grad()[i] == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("reconstruction loss semantics") {
    Rng rng(39);
    auto x1 = Tensor::randn({2, 3, 4, 4}, rng);
    auto x2 = Tensor::randn({2, 3, 4, 4}, rng);

    GeneratedQuad perfect{x1.detach(), x2.detach(), x1.detach(), x2.detach()};
    CHECK(reconstruction_loss(perfect, x1, x2,
                              ReconTargetMode::content_source)
              .item() == 0.0);

    // self-pair: both modes coincide
    GeneratedQuad q{x1.detach(), x1.detach(), x1.detach(), x1.detach()};
    const double a =
        reconstruction_loss(q, x1, x1, ReconTargetMode::content_source).item();
    const double b =
        reconstruction_loss(q, x1, x1, ReconTargetMode::identity_source).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-15));

    // a single-pixel delta contributes delta / (elements per image)
    auto bumped = x1.detach();
    const double delta = 0.7;
    bumped.values()[5] += delta;
    GeneratedQuad qb{bumped, x2.detach(), x1.detach(), x2.detach()};
    const double loss =
        reconstruction_loss(qb, x1, x2, ReconTargetMode::content_source).item();
    const double per_image = static_cast<double>(x1.numel());
    CHECK(loss == doctest::Approx(delta / per_image).epsilon(1e-10));

    // identity_source flips the swap targets
    GeneratedQuad qs{x1.detach(), x1.detach(), x2.detach(), x2.detach()};
    CHECK(reconstruction_loss(qs, x1, x2, ReconTargetMode::identity_source)
              .item() == 0.0);
    CHECK(reconstruction_loss(qs, x1, x2, ReconTargetMode::content_source)
              .item() > 0.0);
}

TEST_CASE("target loss is the stated weighted sum") {
    LossWeights w;  // default weights
    auto one = Tensor::scalar(1.0);
    CHECK(target_loss(one, one, one, w).item() ==
          doctest::Approx(11.0001).epsilon(1e-12));
    auto zero = Tensor::scalar(0.0);
    CHECK(target_loss(zero, zero, zero, w).item() == 0.0);

    LossWeights proj{0.0, 0.0, 1.0, 0.1};
    Rng rng(40);
    auto r = Tensor::scalar(rng.uniform());
    auto k = Tensor::scalar(rng.uniform());
    auto g = Tensor::scalar(rng.uniform());
    CHECK(target_loss(r, k, g, proj).item() == g.item());

    LossWeights bad{-1.0, 0.0, 0.0, 0.1};
    CHECK_THROWS_AS(target_loss(r, k, g, bad), ConfigError);
}

TEST_CASE("target loss is linear in each component") {
    Rng rng(41);
    LossWeights w;
    auto r1 = Tensor::scalar(rng.uniform());
    auto r2 = Tensor::scalar(rng.uniform());
    auto k = Tensor::scalar(rng.uniform());
    auto g = Tensor::scalar(rng.uniform());
    const double add = target_loss(r1 + r2, k, g, w).item();
    const double split = target_loss(r1, k, g, w).item() +
                         target_loss(r2, Tensor::scalar(0.0),
                                     Tensor::scalar(0.0), w)
                             .item();
    CHECK(add == doctest::Approx(split).epsilon(1e-12));
    const double homog = target_loss(3.0 * r1, k, g, w).item();
    const double base = target_loss(r1, k, g, w).item();
    CHECK(homog - base ==
          doctest::Approx(2.0 * w.lambda_rec * r1.item()).epsilon(1e-9));
}

TEST_CASE("loss gradient suite matches finite differences") {
    Rng rng(42);

    auto logits = Tensor::randn({4, 5}, rng, 1.0, true);
    std::vector<int> labels = {0, 2, 4, 1};
    auto r1 = gradcheck(
        [&] { return identity_loss(logits, labels, 0.1); }, {logits});
    CHECK(r1.max_rel_err < 1e-4);

    auto mu = Tensor::randn({3, 6}, rng, 1.0, true);
    auto lv = Tensor::randn({3, 6}, rng, 0.5, true);
    auto r2 = gradcheck([&] { return kl_loss(mu, lv); }, {mu, lv});
    CHECK(r2.max_rel_err < 1e-4);

    auto real = Tensor::randn({2, 1, 2, 3}, rng, 1.0, true);
    auto fake = Tensor::randn({2, 1, 2, 3}, rng, 1.0, true);
    auto r3 = gradcheck(
        [&] { return adversarial_loss_d(real, fake); }, {real, fake});
    CHECK(r3.max_rel_err < 1e-4);
    auto r4 = gradcheck([&] { return adversarial_loss_g(fake); }, {fake});
    CHECK(r4.max_rel_err < 1e-4);

    auto g11 = Tensor::randn({1, 3, 2, 2}, rng, 1.0, true);
    auto g12 = Tensor::randn({1, 3, 2, 2}, rng, 1.0, true);
    auto g21 = Tensor::randn({1, 3, 2, 2}, rng, 1.0, true);
    auto g22 = Tensor::randn({1, 3, 2, 2}, rng, 1.0, true);
    auto x1 = Tensor::randn({1, 3, 2, 2}, rng);
    auto x2 = Tensor::randn({1, 3, 2, 2}, rng);
    auto r5 = gradcheck(
        [&] {
            GeneratedQuad quad{g11, g12, g21, g22};
            return reconstruction_loss(quad, x1, x2,
                                       ReconTargetMode::content_source);
        },
        {g11, g12, g21, g22});
    CHECK(r5.max_rel_err < 1e-4);
}
