#include "conceptvae/vae.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <Eigen/QR>

#include "conceptvae/text_io.hpp"

namespace conceptvae {

namespace {

constexpr std::string_view kCheckpointTag = "conceptvae-checkpoint v1";

Eigen::MatrixXd orthogonal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const bool tall = rows >= cols;
    const Eigen::Index r = tall ? rows : cols;
    const Eigen::Index c = tall ? cols : rows;
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd a(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
        for (Eigen::Index i = 0; i < r; ++i) {
            a(i, j) = gauss(rng);
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
    // Fixing the signs by diag(R) makes the draw uniform over the Stiefel manifold.
    const Eigen::VectorXd diag = qr.matrixQR().diagonal();
    for (Eigen::Index j = 0; j < c; ++j) {
        if (diag(j) < 0.0) {
            q.col(j) = -q.col(j);
        }
    }
    if (tall) {
        return q;
    }
    return q.transpose();
}

std::vector<Mat<double>> to_steps(const Eigen::MatrixXd& values) {
    std::vector<Mat<double>> steps(static_cast<std::size_t>(values.rows()));
    for (Eigen::Index t = 0; t < values.rows(); ++t) {
        steps[static_cast<std::size_t>(t)] = values.row(t).transpose();
    }
    return steps;
}

void check_finite(const std::vector<Mat<double>>& steps, const char* what) {
    for (std::size_t t = 0; t < steps.size(); ++t) {
        if (!steps[t].allFinite()) {
            throw NumericalError(std::string(what) + ": non-finite activation at timestep " +
                                 std::to_string(t));
        }
    }
}

}  // namespace

void LatentConfig::validate() const {
    if (concept_dims != kKpiCount) {
        throw std::invalid_argument("latent: concept_dims must equal the KPI count (5)");
    }
    if (!(prior_std > 0.0)) {
        throw std::invalid_argument("latent: prior_std must be > 0");
    }
}

void ArchConfig::validate() const {
    if (input_dim != kKpiCount || hidden == 0 || layers == 0) {
        throw std::invalid_argument("arch: input_dim must be 5, hidden and layers >= 1");
    }
    if (!(logvar_limit > 0.0)) {
        throw std::invalid_argument("arch: logvar_limit must be > 0");
    }
}

std::size_t parameter_count(const ArchConfig& arch, const LatentConfig& latent) {
    const std::size_t h = arch.hidden;
    const std::size_t L = latent.total();
    auto lstm_stack = [&](std::size_t in) {
        std::size_t n = 4 * h * (in + h + 1);
        n += (arch.layers - 1) * 4 * h * (h + h + 1);
        return n;
    };
    return lstm_stack(arch.input_dim) + 2 * L * (h + 1) + lstm_stack(L) +
           2 * arch.input_dim * (h + 1);
}

std::size_t VaeParams::parameter_count() const {
    std::size_t n = 0;
    weights.for_each([&n](const std::string&, const Mat<double>& m, TensorKind) {
        n += static_cast<std::size_t>(m.size());
    });
    return n;
}

VaeParams init_params(const ArchConfig& arch, const LatentConfig& latent, std::uint64_t seed) {
    arch.validate();
    latent.validate();
    const auto h = static_cast<Eigen::Index>(arch.hidden);
    const auto L = static_cast<Eigen::Index>(latent.total());
    const auto D = static_cast<Eigen::Index>(arch.input_dim);

    VaeParams p;
    p.arch = arch;
    p.latent = latent;
    p.seed = seed;
    auto stack = [&](Eigen::Index in) {
        std::vector<LstmWeights<double>> layers;
        for (std::size_t l = 0; l < arch.layers; ++l) {
            const Eigen::Index width = l == 0 ? in : h;
            layers.push_back({Mat<double>(4 * h, width), Mat<double>(4 * h, h),
                              Mat<double>(4 * h, 1)});
        }
        return layers;
    };
    p.weights.encoder = stack(D);
    p.weights.encoder_head = {Mat<double>(2 * L, h), Mat<double>(2 * L, 1)};
    p.weights.decoder = stack(L);
    p.weights.decoder_head = {Mat<double>(2 * D, h), Mat<double>(2 * D, 1)};

    std::mt19937_64 rng(seed);
    p.weights.for_each([&rng](const std::string&, Mat<double>& m, TensorKind kind) {
        if (kind == TensorKind::Bias) {
            m.setZero();
        } else {
            m = orthogonal(m.rows(), m.cols(), rng);
        }
    });
    return p;
}

PriorSpec make_prior(const KpiVector& cluster_prior_means, const LatentConfig& latent) {
    PriorSpec prior;
    prior.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(latent.total()));
    for (std::size_t k = 0; k < latent.concept_dims && k < kKpiCount; ++k) {
        prior.mean(static_cast<Eigen::Index>(k)) = cluster_prior_means[k];
    }
    prior.std = latent.prior_std;
    return prior;
}

PriorSpec standard_prior(const LatentConfig& latent) {
    return PriorSpec{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(latent.total())),
                     latent.prior_std};
}

Encoding encode(const VaeParams& params, const Eigen::MatrixXd& values) {
    if (values.cols() != static_cast<Eigen::Index>(params.arch.input_dim)) {
        throw std::invalid_argument("encode: window width does not match the model input");
    }
    const auto out = run_encoder<double>(params.weights, to_steps(values),
                                         params.arch.logvar_limit);
    check_finite(out.mu, "encode");
    check_finite(out.logvar, "encode");
    const auto L = static_cast<Eigen::Index>(params.latent.total());
    Encoding enc{Eigen::MatrixXd(values.rows(), L), Eigen::MatrixXd(values.rows(), L)};
    for (Eigen::Index t = 0; t < values.rows(); ++t) {
        enc.mu.row(t) = out.mu[static_cast<std::size_t>(t)].transpose();
        enc.logvar.row(t) = out.logvar[static_cast<std::size_t>(t)].transpose();
    }
    return enc;
}

std::vector<Encoding> encode_batch(const VaeParams& params,
                                   std::span<const SequenceWindow* const> windows) {
    std::vector<Encoding> result;
    if (windows.empty()) {
        return result;
    }
    const Eigen::Index steps = windows.front()->values.rows();
    const auto B = static_cast<Eigen::Index>(windows.size());
    const auto D = static_cast<Eigen::Index>(params.arch.input_dim);
    std::vector<Mat<double>> xs(static_cast<std::size_t>(steps), Mat<double>(D, B));
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& v = windows[static_cast<std::size_t>(b)]->values;
        if (v.rows() != steps || v.cols() != D) {
            throw std::invalid_argument("encode_batch: windows must share shape");
        }
        for (Eigen::Index t = 0; t < steps; ++t) {
            xs[static_cast<std::size_t>(t)].col(b) = v.row(t).transpose();
        }
    }
    const auto out = run_encoder<double>(params.weights, xs, params.arch.logvar_limit);
    check_finite(out.mu, "encode");
    check_finite(out.logvar, "encode");
    const auto L = static_cast<Eigen::Index>(params.latent.total());
    result.resize(windows.size());
    for (Eigen::Index b = 0; b < B; ++b) {
        auto& enc = result[static_cast<std::size_t>(b)];
        enc.mu.resize(steps, L);
        enc.logvar.resize(steps, L);
        for (Eigen::Index t = 0; t < steps; ++t) {
            enc.mu.row(t) = out.mu[static_cast<std::size_t>(t)].col(b).transpose();
            enc.logvar.row(t) = out.logvar[static_cast<std::size_t>(t)].col(b).transpose();
        }
    }
    return result;
}

Eigen::MatrixXd sample_latent(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar,
                              std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd z(mu.rows(), mu.cols());
    for (Eigen::Index t = 0; t < mu.rows(); ++t) {
        for (Eigen::Index j = 0; j < mu.cols(); ++j) {
            z(t, j) = mu(t, j) + std::exp(logvar(t, j) / 2.0) * gauss(rng);
        }
    }
    return z;
}

Reconstruction decode(const VaeParams& params, const Eigen::MatrixXd& z) {
    if (z.cols() != static_cast<Eigen::Index>(params.latent.total())) {
        throw std::invalid_argument("decode: latent width does not match the model");
    }
    const auto out = run_decoder<double>(params.weights, to_steps(z), params.arch.logvar_limit);
    check_finite(out.mu, "decode");
    check_finite(out.logvar, "decode");
    const auto D = static_cast<Eigen::Index>(params.arch.input_dim);
    Reconstruction rec{Eigen::MatrixXd(z.rows(), D), Eigen::MatrixXd(z.rows(), D)};
    for (Eigen::Index t = 0; t < z.rows(); ++t) {
        rec.mu.row(t) = out.mu[static_cast<std::size_t>(t)].transpose();
        rec.logvar.row(t) = out.logvar[static_cast<std::size_t>(t)].transpose();
    }
    return rec;
}

Eigen::VectorXd kl_per_step(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar,
                            const PriorSpec& prior) {
    if (!(prior.std > 0.0)) {
        throw std::invalid_argument("kl_loss: prior std must be > 0");
    }
    if (mu.cols() != prior.mean.size() || logvar.rows() != mu.rows() ||
        logvar.cols() != mu.cols()) {
        throw std::invalid_argument("kl_loss: dimension mismatch");
    }
    const double var_p = prior.std * prior.std;
    const double log_sp = std::log(prior.std);
    Eigen::VectorXd out(mu.rows());
    for (Eigen::Index t = 0; t < mu.rows(); ++t) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < mu.cols(); ++j) {
            const double d = mu(t, j) - prior.mean(j);
            s += log_sp - logvar(t, j) / 2.0 + (std::exp(logvar(t, j)) + d * d) / (2.0 * var_p) -
                 0.5;
        }
        out(t) = s;
    }
    return out;
}

double kl_loss(const Eigen::MatrixXd& mu, const Eigen::MatrixXd& logvar, const PriorSpec& prior) {
    return kl_per_step(mu, logvar, prior).mean();
}

Eigen::VectorXd loglik_per_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu,
                                const Eigen::MatrixXd& logvar) {
    if (x.rows() != mu.rows() || x.cols() != mu.cols() || logvar.rows() != mu.rows() ||
        logvar.cols() != mu.cols()) {
        throw std::invalid_argument("recon_loglik: shape mismatch");
    }
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < x.cols(); ++k) {
            const double r = x(t, k) - mu(t, k);
            s += -0.5 * (log_2pi + logvar(t, k) + r * r * std::exp(-logvar(t, k)));
        }
        out(t) = s;
    }
    return out;
}

double recon_loglik(const Eigen::MatrixXd& x, const Eigen::MatrixXd& mu,
                    const Eigen::MatrixXd& logvar) {
    return loglik_per_step(x, mu, logvar).mean();
}

EvalResult eval_loss(const VaeParams& params, const Eigen::MatrixXd& values,
                     const PriorSpec& prior, int samples, std::mt19937_64& rng) {
    if (samples < 1) {
        throw std::invalid_argument("eval_loss: samples must be >= 1");
    }
    EvalResult r;
    r.encoding = encode(params, values);
    r.step_kl = kl_per_step(r.encoding.mu, r.encoding.logvar, prior);
    r.step_loglik = Eigen::VectorXd::Zero(values.rows());
    for (int s = 0; s < samples; ++s) {
        const Eigen::MatrixXd z = sample_latent(r.encoding.mu, r.encoding.logvar, rng);
        const Reconstruction rec = decode(params, z);
        r.step_loglik += loglik_per_step(values, rec.mu, rec.logvar);
    }
    r.step_loglik /= static_cast<double>(samples);
    r.step_loss = r.step_kl - r.step_loglik;
    r.kl = r.step_kl.mean();
    r.loglik = r.step_loglik.mean();
    r.loss = r.kl - r.loglik;
    return r;
}

void write_checkpoint(std::ostream& out, const VaeParams& p) {
    out << kCheckpointTag << '\n';
    out << "arch " << p.arch.input_dim << ' ' << p.arch.hidden << ' ' << p.arch.layers << ' '
        << text::format_double(p.arch.logvar_limit) << '\n';
    out << "latent " << p.latent.concept_dims << ' ' << p.latent.free_dims << ' '
        << text::format_double(p.latent.prior_std) << '\n';
    out << "seed " << p.seed << '\n';
    std::size_t count = 0;
    p.weights.for_each([&count](const std::string&, const Mat<double>&, TensorKind) { ++count; });
    out << "tensors " << count << '\n';
    p.weights.for_each([&out](const std::string& name, const Mat<double>& m, TensorKind) {
        out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                out << (j ? " " : "") << text::format_double(m(i, j));
            }
            out << '\n';
        }
    });
}

VaeParams read_checkpoint(std::istream& in) {
    text::expect_header(in, kCheckpointTag, "checkpoint");
    std::string line;
    auto fields = [&](std::string_view key, std::size_t n) {
        if (!text::next_line(in, line)) {
            throw std::runtime_error("checkpoint: truncated before '" + std::string(key) + "'");
        }
        auto f = text::split(line, ' ');
        if (f.size() != n + 1 || f[0] != key) {
            throw std::runtime_error("checkpoint: malformed '" + std::string(key) + "' line");
        }
        return std::vector<std::string>(f.begin() + 1, f.end());
    };

    ArchConfig arch;
    auto a = fields("arch", 4);
    arch.input_dim = text::parse_uint(a[0]);
    arch.hidden = text::parse_uint(a[1]);
    arch.layers = text::parse_uint(a[2]);
    arch.logvar_limit = text::parse_double(a[3]);
    LatentConfig latent;
    auto l = fields("latent", 3);
    latent.concept_dims = text::parse_uint(l[0]);
    latent.free_dims = text::parse_uint(l[1]);
    latent.prior_std = text::parse_double(l[2]);
    const auto seed = text::parse_uint(fields("seed", 1)[0]);

    VaeParams p = init_params(arch, latent, 0);
    p.seed = seed;
    std::size_t expected = 0;
    p.weights.for_each([&expected](const std::string&, Mat<double>&, TensorKind) { ++expected; });
    if (text::parse_uint(fields("tensors", 1)[0]) != expected) {
        throw std::runtime_error("checkpoint: tensor count does not match the architecture");
    }
    p.weights.for_each([&](const std::string& name, Mat<double>& m, TensorKind) {
        auto h = fields(name, 2);
        if (text::parse_int(h[0]) != m.rows() || text::parse_int(h[1]) != m.cols()) {
            throw std::runtime_error("checkpoint: tensor " + name + " has the wrong shape");
        }
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if (!text::next_line(in, line)) {
                throw std::runtime_error("checkpoint: truncated tensor " + name);
            }
            const auto vals = text::split(line, ' ');
            if (static_cast<Eigen::Index>(vals.size()) != m.cols()) {
                throw std::runtime_error("checkpoint: bad row in tensor " + name);
            }
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                m(i, j) = text::parse_double(vals[static_cast<std::size_t>(j)]);
            }
        }
    });
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const VaeParams& params) {
    auto out = text::open_output(path);
    write_checkpoint(out, params);
}

VaeParams load_checkpoint(const std::filesystem::path& path) {
    auto in = text::open_input(path);
    return read_checkpoint(in);
}

}  // namespace conceptvae
