#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "conceptvae/data.hpp"
#include "conceptvae/network.hpp"

namespace conceptvae {

/// Latent layout: the first `concept_dims` coordinates carry the per-KPI
/// concept priors, the remaining `free_dims` a standard normal prior.
struct LatentConfig {
    std::size_t concept_dims = kKpiCount;
    std::size_t free_dims = 25;
    double prior_std = 1.0;

    std::size_t total() const { return concept_dims + free_dims; }
    void validate() const;
    bool operator==(const LatentConfig&) const = default;
};

struct ArchConfig {
    std::size_t input_dim = kKpiCount;
    std::size_t hidden = 64;
    std::size_t layers = 3;
    double logvar_limit = 8.0;

    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

struct VaeParams {
    ArchConfig arch;
    LatentConfig latent;
    std::uint64_t seed = 0;
    VaeWeights<double> weights;

    std::size_t parameter_count() const;
};

/// Number of scalars in a model with this architecture.
std::size_t parameter_count(const ArchConfig& arch, const LatentConfig& latent);

/// Semi-orthogonal weight matrices (QR of a Gaussian draw), zero biases.
VaeParams init_params(const ArchConfig& arch, const LatentConfig& latent, std::uint64_t seed);

/// Prior of one record: concept coordinates centered on its cluster's prior
/// means, free coordinates centered on 0; one shared standard deviation.
struct PriorSpec {
    Eigen::VectorXd mean;
    double std = 1.0;
};

PriorSpec make_prior(const KpiVector& cluster_prior_means, const LatentConfig& latent);
PriorSpec standard_prior(const LatentConfig& latent);

/// Raised when a forward pass produces NaN or infinity.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// T x L encoder means and log-variances.
struct Encoding {
    Eigen::MatrixXd mu;
    Eigen::MatrixXd logvar;
};

/// T x in decoder means (in (0,1)) and log-variances.
struct Reconstruction {
    Eigen::MatrixXd mu;
    Eigen::MatrixXd logvar;
};

Encoding encode(const VaeParams& params, const Eigen::MatrixXd& values);
inline Encoding encode(const VaeParams& params, const SequenceWindow& window) {
    return encode(params, window.values);
}

/// Encodes several windows of equal length in one batched pass.
std::vector<Encoding> encode_batch(const VaeParams& params,
                                   std::span<const SequenceWindow* const> windows);

/// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I).
Eigen::MatrixXd sample_latent(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar,
                              std::mt19937_64& rng);

Reconstruction decode(const VaeParams& params, const Eigen::MatrixXd& z);

/// Closed-form KL(q || prior) summed over dimensions, one value per timestep.
Eigen::VectorXd kl_per_step(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar,
                            const PriorSpec& prior);
/// Timestep average of kl_per_step.
double kl_loss(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar, const PriorSpec& prior);

/// Gaussian log density summed over KPIs, one value per timestep.
Eigen::VectorXd loglik_per_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu,
                                const Eigen::MatrixXd& logvar);
/// Timestep average of loglik_per_step.
double recon_loglik(const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu,
                    const Eigen::MatrixXd& logvar);

/// Unweighted evaluation loss: loss = kl - loglik, where loglik is averaged
/// over `samples` independent latent draws. Per-step vectors are included.
struct EvalResult {
    double loss = 0.0;
    double kl = 0.0;
    double loglik = 0.0;
    Eigen::VectorXd step_loss;
    Eigen::VectorXd step_kl;
    Eigen::VectorXd step_loglik;
    Encoding encoding;
};

EvalResult eval_loss(const VaeParams& params, const Eigen::MatrixXd& values,
                     const PriorSpec& prior, int samples, std::mt19937_64& rng);
inline EvalResult eval_loss(const VaeParams& params, const SequenceWindow& window,
                            const PriorSpec& prior, int samples, std::mt19937_64& rng) {
    return eval_loss(params, window.values, prior, samples, rng);
}

void write_checkpoint(std::ostream& out, const VaeParams& params);
VaeParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const VaeParams& params);
VaeParams load_checkpoint(const std::filesystem::path& path);

}  // namespace conceptvae
