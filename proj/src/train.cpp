#include "conceptvae/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "conceptvae/text_io.hpp"

namespace conceptvae {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("train: learning_rate must be > 0");
    }
    if (eval_samples < 1) {
        throw std::invalid_argument("train: eval_samples must be >= 1");
    }
    if (batch_size == 0 || max_epochs < 1 || patience < 1) {
        throw std::invalid_argument("train: batch_size, max_epochs and patience must be >= 1");
    }
    if (!(recon_weight >= 0.0)) {
        throw std::invalid_argument("train: recon_weight must be >= 0");
    }
}

Adam::Adam(const VaeWeights<double>& shape, const TrainConfig& config)
    : lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps),
      m_(shape.zeros_like()),
      v_(shape.zeros_like()) {}

void Adam::step(VaeWeights<double>& weights, const VaeWeights<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::vector<Mat<double>*> w, m, v;
    std::vector<const Mat<double>*> g;
    weights.for_each([&w](const std::string&, Mat<double>& x, TensorKind) { w.push_back(&x); });
    m_.for_each([&m](const std::string&, Mat<double>& x, TensorKind) { m.push_back(&x); });
    v_.for_each([&v](const std::string&, Mat<double>& x, TensorKind) { v.push_back(&x); });
    grad.for_each([&g](const std::string&, const Mat<double>& x, TensorKind) { g.push_back(&x); });
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto gi = g[i]->array();
        m[i]->array() = beta1_ * m[i]->array() + (1.0 - beta1_) * gi;
        v[i]->array() = beta2_ * v[i]->array() + (1.0 - beta2_) * gi * gi;
        w[i]->array() -= lr_ * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps_);
    }
}

BatchInput<double> make_batch(std::span<const TrainingItem> items, const VaeParams& params,
                              double recon_weight, std::mt19937_64* rng) {
    if (items.empty()) {
        throw std::invalid_argument("make_batch: empty batch");
    }
    const Eigen::Index steps = items.front().window->values.rows();
    const auto B = static_cast<Eigen::Index>(items.size());
    const auto D = static_cast<Eigen::Index>(params.arch.input_dim);
    const auto L = static_cast<Eigen::Index>(params.latent.total());

    BatchInput<double> in;
    in.x.assign(static_cast<std::size_t>(steps), Mat<double>(D, B));
    in.eps.assign(static_cast<std::size_t>(steps), Mat<double>::Zero(L, B));
    in.prior_mean.resize(L, B);
    in.prior_std = params.latent.prior_std;
    in.recon_weight = recon_weight;
    in.logvar_limit = params.arch.logvar_limit;
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& item = items[static_cast<std::size_t>(b)];
        if (item.window->values.rows() != steps) {
            throw std::invalid_argument("make_batch: windows in a batch must share a length");
        }
        if (item.prior.mean.size() != L || item.prior.std != params.latent.prior_std) {
            throw std::invalid_argument("make_batch: prior does not match the latent layout");
        }
        in.prior_mean.col(b) = item.prior.mean;
        for (Eigen::Index t = 0; t < steps; ++t) {
            in.x[static_cast<std::size_t>(t)].col(b) = item.window->values.row(t).transpose();
        }
    }
    if (rng) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (auto& e : in.eps) {
            for (Eigen::Index j = 0; j < e.cols(); ++j) {
                for (Eigen::Index i = 0; i < e.rows(); ++i) {
                    e(i, j) = gauss(*rng);
                }
            }
        }
    }
    return in;
}

StepStats train_step(VaeParams& params, Adam& optimizer, std::span<const TrainingItem> batch,
                     const TrainConfig& config, std::mt19937_64& rng) {
    const auto in = make_batch(batch, params, config.recon_weight, &rng);
    VaeWeights<double> grad;
    const auto terms = vae_objective<double>(params.weights, in, &grad);
    if (!std::isfinite(terms.objective)) {
        throw TrainingError("training objective is not finite (kl=" +
                            text::format_double(terms.kl) +
                            ", loglik=" + text::format_double(terms.loglik) + ", step " +
                            std::to_string(optimizer.steps_taken() + 1) + ")");
    }
    bool grad_ok = true;
    grad.for_each([&grad_ok](const std::string&, const Mat<double>& m, TensorKind) {
        grad_ok = grad_ok && m.allFinite();
    });
    if (!grad_ok) {
        throw TrainingError("gradient is not finite at step " +
                            std::to_string(optimizer.steps_taken() + 1));
    }
    optimizer.step(params.weights, grad);
    return {terms.objective, terms.kl, terms.loglik};
}

std::vector<TrainingItem> attach_priors(std::span<const SequenceWindow> windows,
                                        const ConceptModel& concepts,
                                        const LatentConfig& latent) {
    std::vector<TrainingItem> items;
    std::vector<std::string> missing;
    for (const auto& w : windows) {
        const auto c = concepts.cluster_of(w.element_id);
        if (!c) {
            if (missing.empty() || missing.back() != w.element_id) {
                missing.push_back(w.element_id);
            }
            continue;
        }
        items.push_back({&w, make_prior(concepts.prior_means.at(*c), latent)});
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size(); ++i) {
            list += (i ? ", " : "") + missing[i];
        }
        throw std::invalid_argument("elements without a concept assignment: " + list);
    }
    return items;
}

double validation_loss(const VaeParams& params, std::span<const TrainingItem> items,
                       std::uint64_t seed) {
    if (items.empty()) {
        throw std::invalid_argument("validation_loss: no windows");
    }
    std::map<Eigen::Index, std::vector<TrainingItem>> by_length;
    for (const auto& item : items) {
        by_length[item.window->values.rows()].push_back(item);
    }
    std::mt19937_64 rng(seed);
    double total = 0.0;
    constexpr std::size_t kChunk = 256;
    for (const auto& [length, group] : by_length) {
        for (std::size_t start = 0; start < group.size(); start += kChunk) {
            const std::size_t n = std::min(kChunk, group.size() - start);
            const std::span<const TrainingItem> chunk(group.data() + start, n);
            const auto in = make_batch(chunk, params, 1.0, &rng);
            const auto terms = vae_objective<double>(params.weights, in, nullptr);
            total += terms.objective * static_cast<double>(n);
        }
    }
    return total / static_cast<double>(items.size());
}

TrainResult train(std::span<const SequenceWindow> train_windows,
                  std::span<const SequenceWindow> val_windows, const ConceptModel& concepts,
                  const ArchConfig& arch, const LatentConfig& latent, const TrainConfig& config,
                  std::ostream* log) {
    config.validate();
    if (train_windows.empty()) {
        throw std::invalid_argument("train: empty training set");
    }
    const auto steps = train_windows.front().values.rows();
    for (const auto& w : train_windows) {
        if (w.values.rows() != steps) {
            throw std::invalid_argument("train: training windows must share one length");
        }
    }
    const auto items = attach_priors(train_windows, concepts, latent);
    auto val_items = attach_priors(val_windows, concepts, latent);
    if (val_items.empty()) {
        val_items = items;
    }
    const std::uint64_t val_seed = config.seed ^ 0x5DEECE66DULL;

    TrainResult result;
    VaeParams params = init_params(arch, latent, config.seed);
    Adam optimizer(params.weights, config);
    result.initial_val_loss = validation_loss(params, val_items, val_seed);
    result.best_val_loss = result.initial_val_loss;
    result.params = params;

    std::mt19937_64 rng(config.seed + 1);
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    int since_best = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        std::vector<TrainingItem> batch;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            batch.clear();
            for (std::size_t i = 0; i < n; ++i) {
                batch.push_back(items[order[start + i]]);
            }
            const auto s = train_step(params, optimizer, batch, config, rng);
            const double weight = static_cast<double>(n) / static_cast<double>(order.size());
            rec.train_loss += s.objective * weight;
            rec.train_kl += s.kl * weight;
            rec.train_loglik += s.loglik * weight;
        }
        rec.val_loss = validation_loss(params, val_items, val_seed);
        result.history.push_back(rec);
        if (log) {
            *log << "epoch " << epoch << " train " << rec.train_loss << " kl " << rec.train_kl
                 << " loglik " << rec.train_loglik << " val " << rec.val_loss << '\n';
        }
        if (rec.val_loss < result.best_val_loss) {
            result.best_val_loss = rec.val_loss;
            result.best_epoch = epoch;
            result.params = params;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    return result;
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
    out << kHistoryHeader << '\n';
    for (const auto& r : history) {
        out << r.epoch << ',' << text::format_double(r.train_loss) << ','
            << text::format_double(r.train_kl) << ',' << text::format_double(r.train_loglik)
            << ',' << text::format_double(r.val_loss) << '\n';
    }
}

}  // namespace conceptvae
