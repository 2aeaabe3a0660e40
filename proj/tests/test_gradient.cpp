#include <doctest.h>

#include "test_support.hpp"

using namespace conceptvae;

TEST_CASE("reverse-mode gradient matches long double central differences") {
    const auto check = testsupport::gradient_check(4, 3, 2, 11);
    REQUIRE(check.names.size() == check.max_rel_error.size());
    CHECK(check.names.size() == 22);
    for (std::size_t i = 0; i < check.names.size(); ++i) {
        INFO(check.names[i] << " max relative error " << static_cast<double>(check.max_rel_error[i]));
        CHECK(check.max_rel_error[i] < 1e-4L);
    }
}

TEST_CASE("gradient check holds for a second seed and longer sequence") {
    const auto check = testsupport::gradient_check(4, 5, 3, 29);
    CHECK(check.worst() < 1e-4L);
}

TEST_CASE("double and long double passes agree") {
    ArchConfig arch;
    arch.hidden = 6;
    LatentConfig latent;
    const auto params = init_params(arch, latent, 3);
    std::mt19937_64 rng(5);
    const auto in_ld = testsupport::random_batch(arch.input_dim, latent.total(), 4, 2, rng);
    BatchInput<double> in_d;
    for (const auto& x : in_ld.x) in_d.x.push_back(x.cast<double>());
    for (const auto& e : in_ld.eps) in_d.eps.push_back(e.cast<double>());
    in_d.prior_mean = in_ld.prior_mean.cast<double>();

    auto w_ld = params.weights.cast<long double>();
    auto g_ld = w_ld.zeros_like();
    auto g_d = params.weights.zeros_like();
    const auto t_ld = vae_objective<long double>(w_ld, in_ld, &g_ld);
    const auto t_d = vae_objective<double>(params.weights, in_d, &g_d);
    CHECK(static_cast<double>(t_ld.objective) == doctest::Approx(t_d.objective).epsilon(1e-10));

    std::vector<Mat<double>> a, b;
    g_d.for_each([&](const std::string&, const Mat<double>& m, TensorKind) { a.push_back(m); });
    g_ld.for_each([&](const std::string&, const Mat<long double>& m, TensorKind) {
        b.push_back(m.cast<double>());
    });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + b[i].cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("objective terms combine with the reconstruction weight") {
    ArchConfig arch;
    arch.hidden = 4;
    LatentConfig latent;
    const auto w = init_params(arch, latent, 1).weights.cast<long double>();
    std::mt19937_64 rng(2);
    auto in = testsupport::random_batch(arch.input_dim, latent.total(), 3, 2, rng);
    in.recon_weight = 3.0L;
    const auto t = vae_objective<long double>(w, in, nullptr);
    CHECK(static_cast<double>(t.objective) ==
          doctest::Approx(static_cast<double>(t.kl - 3.0L * t.loglik)).epsilon(1e-12));
    CHECK(t.kl >= 0.0L);
}

TEST_CASE("mismatched batch is rejected") {
    ArchConfig arch;
    arch.hidden = 4;
    LatentConfig latent;
    const auto w = init_params(arch, latent, 1).weights.cast<long double>();
    BatchInput<long double> in;
    CHECK_THROWS_AS(vae_objective<long double>(w, in, nullptr), std::invalid_argument);
}
