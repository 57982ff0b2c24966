#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "seg/tensor.hpp"

namespace seg {

enum class LossKind { bce, dice, focal, focal_tversky };
enum class DiceSmoothing { paper_literal, symmetric };

inline const char* loss_name(LossKind k) {
    switch (k) {
        case LossKind::bce: return "bce";
        case LossKind::dice: return "dice";
        case LossKind::focal: return "focal";
        case LossKind::focal_tversky: return "focal_tversky";
    }
    return "?";
}

struct LossConfig {
    LossKind kind = LossKind::bce;
    double alpha = 0.25;        // focal class weight
    double gamma_focal = 2.0;   // focal exponent
    double beta = 0.7;          // Tversky FP/FN weight
    double gamma_ftl = 4.0 / 3.0;
    double epsilon = 1e-7;      // probability clamp inside logs
    DiceSmoothing dice_smoothing = DiceSmoothing::paper_literal;

    void validate() const {
        if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("loss: alpha must be in (0,1)");
        if (!(gamma_focal >= 0)) throw std::invalid_argument("loss: gamma_focal must be >= 0");
        if (!(beta >= 0 && beta <= 1)) throw std::invalid_argument("loss: beta must be in [0,1]");
        if (!(gamma_ftl >= 1.0 && gamma_ftl <= 3.0))
            throw std::invalid_argument("loss: gamma_ftl must be in [1,3], got " +
                                        std::to_string(gamma_ftl));
        if (!(epsilon > 0)) throw std::invalid_argument("loss: epsilon must be positive");
    }
};

template <typename T>
struct LossResult {
    double value = 0;
    Tensor<T> grad;  // d loss / d prediction, same shape as the prediction
};

namespace detail {
template <typename T>
void check_loss_input(const Tensor<T>& truth, const Tensor<T>& pred) {
    require_same_shape(truth, pred, "loss");
    for (T v : truth.data)
        if (v != T(0) && v != T(1))
            throw std::invalid_argument("loss: truth mask must be binary");
    for (T v : pred.data)
        if (!(v >= T(0) && v <= T(1)))
            throw std::invalid_argument("loss: prediction outside [0,1]");
}
}  // namespace detail

// Mean of -(p log p_hat + (1-p) log(1-p_hat)) over all elements.
template <typename T>
LossResult<T> bce(const Tensor<T>& truth, const Tensor<T>& pred, const LossConfig& cfg = {}) {
    detail::check_loss_input(truth, pred);
    const double eps = cfg.epsilon;
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    LossResult<T> r{0.0, Tensor<T>::zeros_like(pred)};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = truth.data[i];
        double q = std::min(std::max(static_cast<double>(pred.data[i]), eps), 1.0 - eps);
        r.value += -(p * std::log(q) + (1.0 - p) * std::log(1.0 - q)) * inv_n;
        r.grad.data[i] = static_cast<T>(-(p / q - (1.0 - p) / (1.0 - q)) * inv_n);
    }
    return r;
}

// Global soft overlap over the whole batch; "+1" smoothing placed per cfg.
template <typename T>
LossResult<T> dice_loss(const Tensor<T>& truth, const Tensor<T>& pred, const LossConfig& cfg) {
    detail::check_loss_input(truth, pred);
    double inter = 0, sum_p = 0, sum_q = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += static_cast<double>(truth.data[i]) * pred.data[i];
        sum_p += truth.data[i];
        sum_q += pred.data[i];
    }
    const double den = sum_p + sum_q + 1.0;
    const double num =
        cfg.dice_smoothing == DiceSmoothing::symmetric ? 2.0 * inter + 1.0 : 2.0 * inter;
    LossResult<T> r{1.0 - num / den, Tensor<T>::zeros_like(pred)};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = truth.data[i];
        r.grad.data[i] = static_cast<T>(-(2.0 * p * den - num) / (den * den));
    }
    return r;
}

// Mean of -(alpha (1-q)^g p log q + (1-alpha) q^g (1-p) log(1-q)).
template <typename T>
LossResult<T> focal_loss(const Tensor<T>& truth, const Tensor<T>& pred, const LossConfig& cfg) {
    detail::check_loss_input(truth, pred);
    const double eps = cfg.epsilon, a = cfg.alpha, g = cfg.gamma_focal;
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    LossResult<T> r{0.0, Tensor<T>::zeros_like(pred)};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = truth.data[i];
        double q = std::min(std::max(static_cast<double>(pred.data[i]), eps), 1.0 - eps);
        double mod_pos = std::pow(1.0 - q, g);
        double mod_neg = std::pow(q, g);
        r.value += -(a * mod_pos * p * std::log(q) +
                     (1.0 - a) * mod_neg * (1.0 - p) * std::log(1.0 - q)) *
                   inv_n;
        double d = 0;
        if (p != 0.0) {
            double dm = g == 0.0 ? 0.0 : g * std::pow(1.0 - q, g - 1.0);
            d += a * p * (dm * std::log(q) - mod_pos / q);
        }
        if (p != 1.0) {
            double dm = g == 0.0 ? 0.0 : g * std::pow(q, g - 1.0);
            d += -(1.0 - a) * (1.0 - p) * (dm * std::log(1.0 - q) - mod_neg / (1.0 - q));
        }
        r.grad.data[i] = static_cast<T>(d * inv_n);
    }
    return r;
}

// Tversky index with sums over the whole batch; 1 when all sums vanish.
template <typename T>
double tversky_index(const Tensor<T>& truth, const Tensor<T>& pred, const LossConfig& cfg) {
    detail::check_loss_input(truth, pred);
    double inter = 0, p_not_q = 0, q_not_p = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = truth.data[i], q = pred.data[i];
        inter += p * q;
        p_not_q += p * (1.0 - q);
        q_not_p += q * (1.0 - p);
    }
    double den = inter + (1.0 - cfg.beta) * p_not_q + cfg.beta * q_not_p;
    if (den == 0.0) return 1.0;
    return inter / den;
}

// FTL = (1 - TI)^(1/gamma_ftl), single foreground class.
template <typename T>
LossResult<T> focal_tversky_loss(const Tensor<T>& truth, const Tensor<T>& pred,
                                 const LossConfig& cfg) {
    detail::check_loss_input(truth, pred);
    double inter = 0, p_not_q = 0, q_not_p = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = truth.data[i], q = pred.data[i];
        inter += p * q;
        p_not_q += p * (1.0 - q);
        q_not_p += q * (1.0 - p);
    }
    const double den = inter + (1.0 - cfg.beta) * p_not_q + cfg.beta * q_not_p;
    LossResult<T> r{0.0, Tensor<T>::zeros_like(pred)};
    if (den == 0.0) return r;  // empty truth and prediction: TI = 1, loss 0
    const double ti = inter / den;
    const double inv_g = 1.0 / cfg.gamma_ftl;
    const double one_minus = std::max(1.0 - ti, 0.0);
    r.value = std::pow(one_minus, inv_g);
    // d loss/dTI; the exponent makes this singular at TI = 1, where the loss is 0
    double dldti = one_minus > 0.0 ? -inv_g * std::pow(one_minus, inv_g - 1.0) : 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        double p = truth.data[i];
        double dti = (p * den - inter * cfg.beta) / (den * den);
        r.grad.data[i] = static_cast<T>(dldti * dti);
    }
    return r;
}

template <typename T>
LossResult<T> eval_loss(const Tensor<T>& truth, const Tensor<T>& pred, const LossConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
        case LossKind::bce: return bce(truth, pred, cfg);
        case LossKind::dice: return dice_loss(truth, pred, cfg);
        case LossKind::focal: return focal_loss(truth, pred, cfg);
        case LossKind::focal_tversky: return focal_tversky_loss(truth, pred, cfg);
    }
    throw std::logic_error("eval_loss: unknown kind");
}

}  // namespace seg
