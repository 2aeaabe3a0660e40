#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "conceptvae/concepts.hpp"
#include "conceptvae/data.hpp"
#include "conceptvae/vae.hpp"

namespace conceptvae {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    /// Weight of the reconstruction term in the training objective only.
    double recon_weight = 10.0;
    std::size_t batch_size = 64;
    int max_epochs = 200;
    int patience = 10;
    int eval_samples = 10;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Adam with bias-corrected moment estimates.
class Adam {
public:
    Adam(const VaeWeights<double>& shape, const TrainConfig& config);

    void step(VaeWeights<double>& weights, const VaeWeights<double>& grad);
    long steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    VaeWeights<double> m_;
    VaeWeights<double> v_;
};

/// Raised when the training objective becomes NaN or infinite.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Windows paired with the prior of their element's cluster.
struct TrainingItem {
    const SequenceWindow* window = nullptr;
    PriorSpec prior;
};

struct StepStats {
    double objective = 0.0;
    double kl = 0.0;
    double loglik = 0.0;
};

/// Packs equal-length windows and their priors into a network batch; `eps`
/// is drawn from `rng` (pass nullptr for zero noise).
BatchInput<double> make_batch(std::span<const TrainingItem> items, const VaeParams& params,
                              double recon_weight, std::mt19937_64* rng);

/// One Adam update on kl + recon_weight * (-loglik), one latent sample per window.
StepStats train_step(VaeParams& params, Adam& optimizer, std::span<const TrainingItem> batch,
                     const TrainConfig& config, std::mt19937_64& rng);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_kl = 0.0;
    double train_loglik = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    VaeParams params;  // best-validation parameters
    std::vector<EpochRecord> history;
    int best_epoch = 0;  // 0 means the initial parameters were never beaten
    double initial_val_loss = 0.0;
    double best_val_loss = 0.0;
};

/// Builds training items; throws std::invalid_argument listing windows whose
/// element has no cluster in `concepts`.
std::vector<TrainingItem> attach_priors(std::span<const SequenceWindow> windows,
                                        const ConceptModel& concepts,
                                        const LatentConfig& latent);

/// Unweighted kl - loglik averaged over windows with one latent draw from a
/// fixed seed, so successive epochs are compared on identical noise.
double validation_loss(const VaeParams& params, std::span<const TrainingItem> items,
                       std::uint64_t seed);

TrainResult train(std::span<const SequenceWindow> train_windows,
                  std::span<const SequenceWindow> val_windows, const ConceptModel& concepts,
                  const ArchConfig& arch, const LatentConfig& latent, const TrainConfig& config,
                  std::ostream* log = nullptr);

inline constexpr std::string_view kHistoryHeader = "epoch,train_loss,train_kl,train_loglik,val_loss";
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace conceptvae
