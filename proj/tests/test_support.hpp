#pragma once

// Independent oracles and fixtures shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conceptvae/concepts.hpp"
#include "conceptvae/data.hpp"
#include "conceptvae/network.hpp"
#include "conceptvae/vae.hpp"

namespace testsupport {

using conceptvae::KpiVector;
using conceptvae::kKpiCount;

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
            ++j;
        }
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    return pearson(ra, rb);
}

/// Exhaustive minimum inertia over every assignment of the points to at most
/// k non-empty groups (k^n enumeration, fine for n <= 8).
inline double brute_force_inertia(std::span<const conceptvae::ElementProfile> points,
                                  std::size_t k) {
    const std::size_t n = points.size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) {
        total *= k;
    }
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> label(n);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i) {
            label[i] = c % k;
            c /= k;
        }
        double inertia = 0.0;
        for (std::size_t g = 0; g < k; ++g) {
            KpiVector mean{};
            std::size_t size = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (label[i] == g) {
                    for (std::size_t d = 0; d < kKpiCount; ++d) mean[d] += points[i].profile[d];
                    ++size;
                }
            }
            if (size == 0) continue;
            for (auto& m : mean) m /= static_cast<double>(size);
            for (std::size_t i = 0; i < n; ++i) {
                if (label[i] == g) inertia += conceptvae::squared_distance(points[i].profile, mean);
            }
        }
        best = std::min(best, inertia);
    }
    return best;
}

/// Every k-subset of indices 0..n-1, in lexicographic order.
inline std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> cur;
    auto rec = [&](auto&& self, std::size_t start) -> void {
        if (cur.size() == k) {
            out.push_back(cur);
            return;
        }
        for (std::size_t i = start; i < n; ++i) {
            cur.push_back(i);
            self(self, i + 1);
            cur.pop_back();
        }
    };
    rec(rec, 0);
    return out;
}

/// Lowest inertia over Lloyd runs started from every k-subset of the points.
inline double best_of_all_seedings(std::span<const conceptvae::ElementProfile> points,
                                   std::size_t k) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& subset : combinations(points.size(), k)) {
        std::vector<KpiVector> init;
        for (auto i : subset) init.push_back(points[i].profile);
        best = std::min(best, conceptvae::kmeans_from(points, init, 1000, 0.0).inertia);
    }
    return best;
}

/// n random profiles in [0,1]^5.
inline std::vector<conceptvae::ElementProfile> random_profiles(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<conceptvae::ElementProfile> out;
    for (std::size_t i = 0; i < n; ++i) {
        conceptvae::ElementProfile p;
        p.element_id = "P" + std::to_string(i);
        for (auto& v : p.profile) v = u(rng);
        out.push_back(p);
    }
    return out;
}

/// Monte-Carlo estimate of KL(q || p) = E_q[log q(z) - log p(z)] for
/// diagonal Gaussians, by direct density evaluation.
inline double monte_carlo_kl(const std::vector<double>& mu_q, const std::vector<double>& sd_q,
                             const std::vector<double>& mu_p, double sd_p, std::size_t samples,
                             std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        double log_ratio = 0.0;
        for (std::size_t j = 0; j < mu_q.size(); ++j) {
            const double z = mu_q[j] + sd_q[j] * gauss(rng);
            const double uq = (z - mu_q[j]) / sd_q[j];
            const double up = (z - mu_p[j]) / sd_p;
            const double log_q = -half_log_2pi - std::log(sd_q[j]) - 0.5 * uq * uq;
            const double log_p = -half_log_2pi - std::log(sd_p) - 0.5 * up * up;
            log_ratio += log_q - log_p;
        }
        acc += log_ratio;
    }
    return acc / static_cast<double>(samples);
}

/// Window with uniform random values in [0, 1].
inline conceptvae::SequenceWindow random_window(std::size_t steps, std::mt19937_64& rng,
                                                std::string id = "W", std::int64_t start = 1) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    conceptvae::SequenceWindow w;
    w.element_id = std::move(id);
    w.start_date = start;
    w.values.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(kKpiCount));
    for (Eigen::Index t = 0; t < w.values.rows(); ++t) {
        KpiVector raw{};
        for (Eigen::Index k = 0; k < w.values.cols(); ++k) {
            w.values(t, k) = u(rng);
            raw[static_cast<std::size_t>(k)] = w.values(t, k);
        }
        w.raw.push_back(raw);
    }
    return w;
}


/// Per-tensor worst relative error between the analytic gradient and central
/// differences, all in long double.
struct GradientCheck {
    std::vector<std::string> names;
    std::vector<long double> max_rel_error;
    std::size_t checked = 0;
    long double worst() const {
        long double w = 0;
        for (auto e : max_rel_error) w = std::max(w, e);
        return w;
    }
};

inline conceptvae::BatchInput<long double> random_batch(std::size_t input_dim, std::size_t latent,
                                                        std::size_t steps, std::size_t batch,
                                                        std::mt19937_64& rng) {
    using LD = long double;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    conceptvae::BatchInput<LD> in;
    const auto D = static_cast<Eigen::Index>(input_dim);
    const auto L = static_cast<Eigen::Index>(latent);
    const auto B = static_cast<Eigen::Index>(batch);
    for (std::size_t t = 0; t < steps; ++t) {
        conceptvae::Mat<LD> x(D, B), e(L, B);
        for (Eigen::Index i = 0; i < D; ++i)
            for (Eigen::Index b = 0; b < B; ++b) x(i, b) = u(rng);
        for (Eigen::Index i = 0; i < L; ++i)
            for (Eigen::Index b = 0; b < B; ++b) e(i, b) = g(rng);
        in.x.push_back(x);
        in.eps.push_back(e);
    }
    in.prior_mean = conceptvae::Mat<LD>::Zero(L, B);
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(L, 5); ++i)
        for (Eigen::Index b = 0; b < B; ++b) in.prior_mean(i, b) = 2.0 * u(rng) - 1.0;
    in.prior_std = 1.0L;
    in.recon_weight = 10.0L;
    in.logvar_limit = 8.0L;
    return in;
}

inline GradientCheck gradient_check(std::size_t hidden, std::size_t steps, std::size_t batch,
                                    std::uint64_t seed, long double step = 1e-5L) {
    using LD = long double;
    conceptvae::ArchConfig arch;
    arch.hidden = hidden;
    conceptvae::LatentConfig latent;
    const auto params = conceptvae::init_params(arch, latent, seed);
    auto w = params.weights.template cast<LD>();
    // Move biases off zero so every gate path carries a generic gradient.
    std::mt19937_64 rng(seed + 101);
    std::normal_distribution<double> g(0.0, 0.1);
    w.for_each([&](const std::string&, conceptvae::Mat<LD>& m, conceptvae::TensorKind) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += static_cast<LD>(g(rng));
    });
    const auto in = random_batch(arch.input_dim, latent.total(), steps, batch, rng);

    auto grad = w.zeros_like();
    conceptvae::vae_objective<LD>(w, in, &grad);

    std::vector<conceptvae::Mat<LD>*> wt, gt;
    GradientCheck out;
    w.for_each([&](const std::string& name, conceptvae::Mat<LD>& m, conceptvae::TensorKind) {
        out.names.push_back(name);
        wt.push_back(&m);
    });
    grad.for_each([&](const std::string&, conceptvae::Mat<LD>& m, conceptvae::TensorKind) {
        gt.push_back(&m);
    });
    for (std::size_t k = 0; k < wt.size(); ++k) {
        long double worst = 0;
        for (Eigen::Index i = 0; i < wt[k]->size(); ++i) {
            LD& p = wt[k]->data()[i];
            const LD saved = p;
            p = saved + step;
            const LD up = conceptvae::vae_objective<LD>(w, in, nullptr).objective;
            p = saved - step;
            const LD down = conceptvae::vae_objective<LD>(w, in, nullptr).objective;
            p = saved;
            const LD numeric = (up - down) / (2 * step);
            const LD analytic = gt[k]->data()[i];
            const LD scale = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6L});
            worst = std::max(worst, std::fabs(numeric - analytic) / scale);
            ++out.checked;
        }
        out.max_rel_error.push_back(worst);
    }
    return out;
}

}  // namespace testsupport
