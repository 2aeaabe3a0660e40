#pragma once

// Recurrent encoder/decoder of the concept VAE with a hand-written reverse
// pass. Everything is templated on the scalar so the same code runs in double
// for training and in long double for finite-difference checks.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace conceptvae {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

enum class TensorKind { InputWeight, RecurrentWeight, HeadWeight, Bias };

/// Gate rows are stacked as [input, forget, cell, output], each `hidden` tall.
template <typename S>
struct LstmWeights {
    Mat<S> input;      // 4h x in
    Mat<S> recurrent;  // 4h x h
    Mat<S> bias;       // 4h x 1

    std::size_t hidden() const { return static_cast<std::size_t>(recurrent.cols()); }
};

template <typename S>
struct LinearWeights {
    Mat<S> weight;  // out x in
    Mat<S> bias;    // out x 1
};

template <typename S>
struct VaeWeights {
    std::vector<LstmWeights<S>> encoder;
    LinearWeights<S> encoder_head;  // 2L x h: rows [mu; logvar]
    std::vector<LstmWeights<S>> decoder;
    LinearWeights<S> decoder_head;  // 2*in x h: rows [mu_x logits; logvar_x]

    std::size_t latent_dim() const {
        return static_cast<std::size_t>(encoder_head.weight.rows()) / 2;
    }
    std::size_t input_dim() const {
        return static_cast<std::size_t>(decoder_head.weight.rows()) / 2;
    }

    /// Calls f(name, tensor, kind) for every tensor in a fixed order.
    template <typename F>
    void for_each(F&& f) {
        visit_impl(*this, f);
    }
    template <typename F>
    void for_each(F&& f) const {
        visit_impl(*this, f);
    }

    VaeWeights zeros_like() const {
        VaeWeights out = *this;
        out.for_each([](const std::string&, Mat<S>& m, TensorKind) { m.setZero(); });
        return out;
    }

    template <typename T>
    VaeWeights<T> cast() const {
        VaeWeights<T> out;
        auto lstm = [](const LstmWeights<S>& l) {
            return LstmWeights<T>{l.input.template cast<T>(), l.recurrent.template cast<T>(),
                                  l.bias.template cast<T>()};
        };
        for (const auto& l : encoder) out.encoder.push_back(lstm(l));
        for (const auto& l : decoder) out.decoder.push_back(lstm(l));
        out.encoder_head = {encoder_head.weight.template cast<T>(),
                            encoder_head.bias.template cast<T>()};
        out.decoder_head = {decoder_head.weight.template cast<T>(),
                            decoder_head.bias.template cast<T>()};
        return out;
    }

private:
    template <typename W, typename F>
    static void visit_impl(W& w, F& f) {
        auto lstm = [&f](const std::string& prefix, auto& layers) {
            for (std::size_t i = 0; i < layers.size(); ++i) {
                const std::string p = prefix + std::to_string(i);
                f(p + ".input", layers[i].input, TensorKind::InputWeight);
                f(p + ".recurrent", layers[i].recurrent, TensorKind::RecurrentWeight);
                f(p + ".bias", layers[i].bias, TensorKind::Bias);
            }
        };
        lstm("encoder.lstm", w.encoder);
        f(std::string("encoder.head.weight"), w.encoder_head.weight, TensorKind::HeadWeight);
        f(std::string("encoder.head.bias"), w.encoder_head.bias, TensorKind::Bias);
        lstm("decoder.lstm", w.decoder);
        f(std::string("decoder.head.weight"), w.decoder_head.weight, TensorKind::HeadWeight);
        f(std::string("decoder.head.bias"), w.decoder_head.bias, TensorKind::Bias);
    }
};

namespace detail {

template <typename S>
Mat<S> sigmoid(const Mat<S>& x) {
    return (S(1) + (-x.array()).exp()).inverse().matrix();
}

template <typename S>
Mat<S> clamp(const Mat<S>& x, S limit) {
    return x.array().max(-limit).min(limit).matrix();
}

/// 1 where the clamp is inactive, 0 where it saturates.
template <typename S>
Mat<S> clamp_mask(const Mat<S>& raw, S limit) {
    return (raw.array().abs() < limit).template cast<S>().matrix();
}

template <typename S>
struct LstmTrace {
    std::vector<Mat<S>> x, i, f, g, o, c, tc, h;
};

template <typename S>
std::vector<Mat<S>> lstm_forward(const LstmWeights<S>& w, const std::vector<Mat<S>>& xs,
                                 LstmTrace<S>* trace) {
    const auto h = static_cast<Eigen::Index>(w.hidden());
    const Eigen::Index batch = xs.empty() ? 0 : xs.front().cols();
    Mat<S> h_prev = Mat<S>::Zero(h, batch);
    Mat<S> c_prev = Mat<S>::Zero(h, batch);
    std::vector<Mat<S>> out;
    out.reserve(xs.size());
    for (const auto& x : xs) {
        Mat<S> pre = w.input * x + w.recurrent * h_prev;
        pre.colwise() += w.bias.col(0);
        Mat<S> i = sigmoid<S>(pre.topRows(h));
        Mat<S> f = sigmoid<S>(pre.middleRows(h, h));
        Mat<S> g = pre.middleRows(2 * h, h).array().tanh().matrix();
        Mat<S> o = sigmoid<S>(pre.bottomRows(h));
        Mat<S> c = (f.array() * c_prev.array() + i.array() * g.array()).matrix();
        Mat<S> tc = c.array().tanh().matrix();
        Mat<S> hs = (o.array() * tc.array()).matrix();
        if (trace) {
            trace->x.push_back(x);
            trace->i.push_back(i);
            trace->f.push_back(f);
            trace->g.push_back(g);
            trace->o.push_back(o);
            trace->c.push_back(c);
            trace->tc.push_back(tc);
            trace->h.push_back(hs);
        }
        c_prev = std::move(c);
        h_prev = hs;
        out.push_back(std::move(hs));
    }
    return out;
}

/// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
template <typename S>
std::vector<Mat<S>> lstm_backward(const LstmWeights<S>& w, const LstmTrace<S>& tr,
                                  const std::vector<Mat<S>>& dh_out, LstmWeights<S>& grad) {
    const auto h = static_cast<Eigen::Index>(w.hidden());
    const std::size_t steps = tr.h.size();
    std::vector<Mat<S>> dx(steps);
    if (steps == 0) {
        return dx;
    }
    const Eigen::Index batch = tr.h.front().cols();
    Mat<S> dh_next = Mat<S>::Zero(h, batch);
    Mat<S> dc_next = Mat<S>::Zero(h, batch);
    Mat<S> dpre(4 * h, batch);
    for (std::size_t s = steps; s-- > 0;) {
        const auto& i = tr.i[s].array();
        const auto& f = tr.f[s].array();
        const auto& g = tr.g[s].array();
        const auto& o = tr.o[s].array();
        const auto& tc = tr.tc[s].array();
        Mat<S> dh = dh_out[s] + dh_next;
        Mat<S> dc = (dh.array() * o * (S(1) - tc * tc)).matrix() + dc_next;
        const Mat<S> c_prev = s > 0 ? tr.c[s - 1] : Mat<S>(Mat<S>::Zero(h, batch));
        const Mat<S> h_prev = s > 0 ? tr.h[s - 1] : Mat<S>(Mat<S>::Zero(h, batch));

        dpre.topRows(h) = (dc.array() * g * i * (S(1) - i)).matrix();
        dpre.middleRows(h, h) = (dc.array() * c_prev.array() * f * (S(1) - f)).matrix();
        dpre.middleRows(2 * h, h) = (dc.array() * i * (S(1) - g * g)).matrix();
        dpre.bottomRows(h) = (dh.array() * tc * o * (S(1) - o)).matrix();
        dc_next = (dc.array() * f).matrix();

        grad.input.noalias() += dpre * tr.x[s].transpose();
        grad.recurrent.noalias() += dpre * h_prev.transpose();
        grad.bias.col(0) += dpre.rowwise().sum();
        dx[s].noalias() = w.input.transpose() * dpre;
        dh_next.noalias() = w.recurrent.transpose() * dpre;
    }
    return dx;
}

template <typename S>
std::vector<Mat<S>> stack_forward(const std::vector<LstmWeights<S>>& layers,
                                  std::vector<Mat<S>> xs, std::vector<LstmTrace<S>>* traces) {
    if (traces) {
        traces->assign(layers.size(), {});
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        xs = lstm_forward(layers[l], xs, traces ? &(*traces)[l] : nullptr);
    }
    return xs;
}

template <typename S>
std::vector<Mat<S>> stack_backward(const std::vector<LstmWeights<S>>& layers,
                                   const std::vector<LstmTrace<S>>& traces,
                                   std::vector<Mat<S>> dh, std::vector<LstmWeights<S>>& grads) {
    for (std::size_t l = layers.size(); l-- > 0;) {
        dh = lstm_backward(layers[l], traces[l], dh, grads[l]);
    }
    return dh;
}

template <typename S>
Mat<S> linear(const LinearWeights<S>& w, const Mat<S>& x) {
    Mat<S> y = w.weight * x;
    y.colwise() += w.bias.col(0);
    return y;
}

}  // namespace detail

/// Per-timestep encoder output for a batch: each matrix is L x B.
template <typename S>
struct EncoderOutput {
    std::vector<Mat<S>> mu;
    std::vector<Mat<S>> logvar;
};

/// Per-timestep decoder output for a batch: each matrix is in x B.
template <typename S>
struct DecoderOutput {
    std::vector<Mat<S>> mu;
    std::vector<Mat<S>> logvar;
};

template <typename S>
EncoderOutput<S> run_encoder(const VaeWeights<S>& w, const std::vector<Mat<S>>& xs,
                             S logvar_limit) {
    const auto top = detail::stack_forward<S>(w.encoder, xs, nullptr);
    const auto L = static_cast<Eigen::Index>(w.latent_dim());
    EncoderOutput<S> out;
    for (const auto& h : top) {
        Mat<S> a = detail::linear(w.encoder_head, h);
        out.mu.push_back(a.topRows(L));
        out.logvar.push_back(detail::clamp<S>(a.bottomRows(L), logvar_limit));
    }
    return out;
}

template <typename S>
DecoderOutput<S> run_decoder(const VaeWeights<S>& w, const std::vector<Mat<S>>& zs,
                             S logvar_limit) {
    const auto top = detail::stack_forward<S>(w.decoder, zs, nullptr);
    const auto D = static_cast<Eigen::Index>(w.input_dim());
    DecoderOutput<S> out;
    for (const auto& h : top) {
        Mat<S> a = detail::linear(w.decoder_head, h);
        out.mu.push_back(detail::sigmoid<S>(a.topRows(D)));
        out.logvar.push_back(detail::clamp<S>(a.bottomRows(D), logvar_limit));
    }
    return out;
}

/// One mini-batch of equal-length windows. `x[t]` is in x B, `eps[t]` is L x B
/// standard-normal noise for the reparameterized sample, `prior_mean` is L x B.
template <typename S>
struct BatchInput {
    std::vector<Mat<S>> x;
    std::vector<Mat<S>> eps;
    Mat<S> prior_mean;
    S prior_std = S(1);
    S recon_weight = S(10);
    S logvar_limit = S(8);
};

/// Batch means of the per-window timestep-averaged terms.
template <typename S>
struct ObjectiveTerms {
    S objective = S(0);  // kl + recon_weight * (-loglik)
    S kl = S(0);
    S loglik = S(0);
};

/// Training objective, and its gradient with respect to every weight when
/// `grad` is non-null (`grad` must be shaped like `w`; it is overwritten).
template <typename S>
ObjectiveTerms<S> vae_objective(const VaeWeights<S>& w, const BatchInput<S>& in,
                                VaeWeights<S>* grad) {
    using std::exp;
    using std::log;
    const std::size_t steps = in.x.size();
    if (steps == 0 || in.eps.size() != steps) {
        throw std::invalid_argument("vae_objective: empty or mismatched batch");
    }
    const Eigen::Index batch = in.x.front().cols();
    const auto L = static_cast<Eigen::Index>(w.latent_dim());
    const auto D = static_cast<Eigen::Index>(w.input_dim());
    const S limit = in.logvar_limit;
    const S var_p = in.prior_std * in.prior_std;
    const S log_2pi = log(S(2) * std::numbers::pi_v<S>);

    std::vector<detail::LstmTrace<S>> enc_tr, dec_tr;
    const bool need_grad = grad != nullptr;
    const auto enc_top = detail::stack_forward<S>(w.encoder, in.x, need_grad ? &enc_tr : nullptr);

    std::vector<Mat<S>> mu(steps), lv(steps), lv_raw(steps), zs(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        Mat<S> a = detail::linear(w.encoder_head, enc_top[t]);
        mu[t] = a.topRows(L);
        lv_raw[t] = a.bottomRows(L);
        lv[t] = detail::clamp<S>(lv_raw[t], limit);
        zs[t] = (mu[t].array() + (lv[t].array() / S(2)).exp() * in.eps[t].array()).matrix();
    }
    const auto dec_top = detail::stack_forward<S>(w.decoder, zs, need_grad ? &dec_tr : nullptr);

    ObjectiveTerms<S> terms;
    std::vector<Mat<S>> mux(steps), lvx(steps), lvx_raw(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        Mat<S> a = detail::linear(w.decoder_head, dec_top[t]);
        mux[t] = detail::sigmoid<S>(a.topRows(D));
        lvx_raw[t] = a.bottomRows(D);
        lvx[t] = detail::clamp<S>(lvx_raw[t], limit);

        const Mat<S> diff = mu[t] - in.prior_mean;
        terms.kl += (log(in.prior_std) - lv[t].array() / S(2) +
                     (lv[t].array().exp() + diff.array().square()) / (S(2) * var_p) - S(0.5))
                        .sum();
        const Mat<S> r = in.x[t] - mux[t];
        terms.loglik +=
            (S(-0.5) * (log_2pi + lvx[t].array() + r.array().square() * (-lvx[t].array()).exp()))
                .sum();
    }
    const S scale = S(1) / (static_cast<S>(steps) * static_cast<S>(batch));
    terms.kl *= scale;
    terms.loglik *= scale;
    terms.objective = terms.kl - in.recon_weight * terms.loglik;
    if (!need_grad) {
        return terms;
    }

    *grad = w.zeros_like();
    const S rw = in.recon_weight * scale;
    std::vector<Mat<S>> d_dec_top(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const Mat<S> r_mat = in.x[t] - mux[t];
        const Mat<S> inv_var_mat = (-lvx[t].array()).exp().matrix();
        const auto r = r_mat.array();
        const auto inv_var = inv_var_mat.array();
        Mat<S> da(2 * D, batch);
        // objective = ... - rw * loglik; chain through the sigmoid and the clamp.
        da.topRows(D) = (-rw * r * inv_var * mux[t].array() * (S(1) - mux[t].array())).matrix();
        da.bottomRows(D) = (-rw * (S(-0.5) + S(0.5) * r * r * inv_var) *
                            detail::clamp_mask<S>(lvx_raw[t], limit).array())
                               .matrix();
        grad->decoder_head.weight.noalias() += da * dec_top[t].transpose();
        grad->decoder_head.bias.col(0) += da.rowwise().sum();
        d_dec_top[t].noalias() = w.decoder_head.weight.transpose() * da;
    }
    const auto dz = detail::stack_backward<S>(w.decoder, dec_tr, std::move(d_dec_top), grad->decoder);

    std::vector<Mat<S>> d_enc_top(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const Mat<S> sigma_mat = (lv[t].array() / S(2)).exp().matrix();
        const auto sigma = sigma_mat.array();
        Mat<S> da(2 * L, batch);
        da.topRows(L) = (scale * (mu[t] - in.prior_mean).array() / var_p + dz[t].array()).matrix();
        da.bottomRows(L) =
            ((scale * (S(-0.5) + lv[t].array().exp() / (S(2) * var_p)) +
              dz[t].array() * S(0.5) * sigma * in.eps[t].array()) *
             detail::clamp_mask<S>(lv_raw[t], limit).array())
                .matrix();
        grad->encoder_head.weight.noalias() += da * enc_top[t].transpose();
        grad->encoder_head.bias.col(0) += da.rowwise().sum();
        d_enc_top[t].noalias() = w.encoder_head.weight.transpose() * da;
    }
    detail::stack_backward<S>(w.encoder, enc_tr, std::move(d_enc_top), grad->encoder);
    return terms;
}

}  // namespace conceptvae
