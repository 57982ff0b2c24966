#pragma once

#include <cblas.h>

#include <functional>
#include <stdexcept>
#include <vector>

#include "seg/tensor.hpp"

namespace seg {

inline void gemm(int m, int n, int k, const float* a, const float* b, float* c, bool trans_a,
                 bool trans_b, float beta) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, trans_a ? m : k, b,
                trans_b ? k : n, beta, c, n);
}

inline void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool trans_a,
                 bool trans_b, double beta) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, trans_a ? m : k, b,
                trans_b ? k : n, beta, c, n);
}

// Convolution / transposed-convolution parameters.
// weight is [c_out, c_in, kh, kw]; bias has length c_out.
template <typename T>
struct KernelParams {
    Tensor<T> weight;
    std::vector<T> bias;
    int stride = 1;
    int padding = 0;

    int c_out() const { return weight.shape[0]; }
    int c_in() const { return weight.shape[1]; }
    int kh() const { return weight.shape[2]; }
    int kw() const { return weight.shape[3]; }
};

template <typename T>
struct ConvGrads {
    Tensor<T> grad_input;
    Tensor<T> grad_weight;
    std::vector<T> grad_bias;
};

namespace detail {

template <typename T>
void im2col(const Tensor<T>& x, int sample, int kh, int kw, int stride, int pad, int oh, int ow,
            std::vector<T>& col) {
    const int c = x.c(), h = x.h(), w = x.w();
    col.assign(static_cast<std::size_t>(c) * kh * kw * oh * ow, T(0));
    const T* src = x.data.data() + static_cast<std::size_t>(sample) * c * h * w;
    std::size_t row = 0;
    for (int ic = 0; ic < c; ++ic)
        for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj, ++row) {
                T* dst = col.data() + row * oh * ow;
                for (int oi = 0; oi < oh; ++oi) {
                    int ii = oi * stride + di - pad;
                    if (ii < 0 || ii >= h) continue;
                    for (int oj = 0; oj < ow; ++oj) {
                        int jj = oj * stride + dj - pad;
                        if (jj < 0 || jj >= w) continue;
                        dst[oi * ow + oj] = src[(static_cast<std::size_t>(ic) * h + ii) * w + jj];
                    }
                }
            }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int sample, int kh, int kw, int stride, int pad, int oh,
                int ow, Tensor<T>& x) {
    const int c = x.c(), h = x.h(), w = x.w();
    T* dst = x.data.data() + static_cast<std::size_t>(sample) * c * h * w;
    std::size_t row = 0;
    for (int ic = 0; ic < c; ++ic)
        for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj, ++row) {
                const T* src = col.data() + row * oh * ow;
                for (int oi = 0; oi < oh; ++oi) {
                    int ii = oi * stride + di - pad;
                    if (ii < 0 || ii >= h) continue;
                    for (int oj = 0; oj < ow; ++oj) {
                        int jj = oj * stride + dj - pad;
                        if (jj < 0 || jj >= w) continue;
                        dst[(static_cast<std::size_t>(ic) * h + ii) * w + jj] += src[oi * ow + oj];
                    }
                }
            }
}

template <typename T>
void check_conv_args(const Tensor<T>& input, const KernelParams<T>& k) {
    if (input.c() != k.c_in())
        throw std::invalid_argument("conv2d: input channels " + input.shape_str() +
                                    " do not match kernel " + k.weight.shape_str());
    if (k.kh() % 2 == 0 || k.kw() % 2 == 0)
        throw std::invalid_argument("conv2d: kernel dims must be odd");
    if (k.stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
    int num_h = input.h() + 2 * k.padding - k.kh();
    int num_w = input.w() + 2 * k.padding - k.kw();
    if (num_h < 0 || num_w < 0 || num_h % k.stride != 0 || num_w % k.stride != 0)
        throw std::invalid_argument("conv2d: non-integer output dim for input " +
                                    input.shape_str() + " kernel " + k.weight.shape_str());
}

}  // namespace detail

// Cross-correlation plus bias (no kernel flip).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const KernelParams<T>& k) {
    detail::check_conv_args(input, k);
    const int oh = (input.h() + 2 * k.padding - k.kh()) / k.stride + 1;
    const int ow = (input.w() + 2 * k.padding - k.kw()) / k.stride + 1;
    const int kdim = k.c_in() * k.kh() * k.kw();
    Tensor<T> out(input.n(), k.c_out(), oh, ow);
    std::vector<T> col;
    for (int s = 0; s < input.n(); ++s) {
        detail::im2col(input, s, k.kh(), k.kw(), k.stride, k.padding, oh, ow, col);
        T* dst = out.data.data() + static_cast<std::size_t>(s) * k.c_out() * oh * ow;
        gemm(k.c_out(), oh * ow, kdim, k.weight.data.data(), col.data(), dst, false, false, T(0));
        for (int oc = 0; oc < k.c_out(); ++oc) {
            T b = k.bias[oc];
            T* row = dst + static_cast<std::size_t>(oc) * oh * ow;
            for (int i = 0; i < oh * ow; ++i) row[i] += b;
        }
    }
    return out;
}

// Gradients of sum(upstream * conv2d_forward(input)) w.r.t. input, weight, bias.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const KernelParams<T>& k,
                             const Tensor<T>& upstream) {
    detail::check_conv_args(input, k);
    const int oh = (input.h() + 2 * k.padding - k.kh()) / k.stride + 1;
    const int ow = (input.w() + 2 * k.padding - k.kw()) / k.stride + 1;
    if (upstream.n() != input.n() || upstream.c() != k.c_out() || upstream.h() != oh ||
        upstream.w() != ow)
        throw std::invalid_argument("conv2d_backward: upstream shape " + upstream.shape_str() +
                                    " does not match output");
    const int kdim = k.c_in() * k.kh() * k.kw();
    ConvGrads<T> g{Tensor<T>::zeros_like(input), Tensor<T>::zeros_like(k.weight),
                   std::vector<T>(k.c_out(), T(0))};
    std::vector<T> col, grad_col(static_cast<std::size_t>(kdim) * oh * ow);
    for (int s = 0; s < input.n(); ++s) {
        detail::im2col(input, s, k.kh(), k.kw(), k.stride, k.padding, oh, ow, col);
        const T* up = upstream.data.data() + static_cast<std::size_t>(s) * k.c_out() * oh * ow;
        // dW += up . col^T ; d_col = W^T . up
        gemm(k.c_out(), kdim, oh * ow, up, col.data(), g.grad_weight.data.data(), false, true,
             T(1));
        gemm(kdim, oh * ow, k.c_out(), k.weight.data.data(), up, grad_col.data(), true, false,
             T(0));
        detail::col2im_add(grad_col, s, k.kh(), k.kw(), k.stride, k.padding, oh, ow, g.grad_input);
        for (int oc = 0; oc < k.c_out(); ++oc) {
            const T* row = up + static_cast<std::size_t>(oc) * oh * ow;
            T acc = 0;
            for (int i = 0; i < oh * ow; ++i) acc += row[i];
            g.grad_bias[oc] += acc;
        }
    }
    return g;
}

template <typename T>
struct MaxPoolResult {
    Tensor<T> output;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

// 2x2 window, stride 2. Ties resolve to the first index in row-major order.
template <typename T>
MaxPoolResult<T> maxpool2_forward(const Tensor<T>& input) {
    if (input.h() % 2 != 0 || input.w() % 2 != 0)
        throw std::invalid_argument("maxpool2: spatial dims of " + input.shape_str() +
                                    " must be even; pad the input first");
    const int n = input.n(), c = input.c(), h = input.h(), w = input.w();
    MaxPoolResult<T> r{Tensor<T>(n, c, h / 2, w / 2),
                       std::vector<std::size_t>(static_cast<std::size_t>(n) * c * (h / 2) * (w / 2))};
    std::size_t oidx = 0;
    for (int s = 0; s < n; ++s)
        for (int ic = 0; ic < c; ++ic) {
            const std::size_t plane = (static_cast<std::size_t>(s) * c + ic) * h * w;
            for (int oi = 0; oi < h / 2; ++oi)
                for (int oj = 0; oj < w / 2; ++oj, ++oidx) {
                    std::size_t best = plane + static_cast<std::size_t>(2 * oi) * w + 2 * oj;
                    T bv = input.data[best];
                    const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                    for (std::size_t idx : cand)
                        if (input.data[idx] > bv) {
                            bv = input.data[idx];
                            best = idx;
                        }
                    r.output.data[oidx] = bv;
                    r.argmax[oidx] = best;
                }
        }
    return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const std::vector<std::size_t>& argmax, const Tensor<T>& upstream,
                            const std::array<int, 4>& input_shape) {
    if (argmax.size() != upstream.size())
        throw std::invalid_argument("maxpool2_backward: upstream shape " + upstream.shape_str() +
                                    " does not match argmax map");
    Tensor<T> g(input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    for (std::size_t i = 0; i < argmax.size(); ++i) g.data[argmax[i]] += upstream.data[i];
    return g;
}

namespace detail {
template <typename T>
void check_convtranspose_args(const Tensor<T>& input, const KernelParams<T>& k) {
    if (k.stride != 2 || k.kh() != 2 || k.kw() != 2)
        throw std::invalid_argument("convtranspose2: only 2x2 stride-2 kernels are supported");
    if (input.c() != k.c_in())
        throw std::invalid_argument("convtranspose2: input channels of " + input.shape_str() +
                                    " do not match kernel " + k.weight.shape_str());
}
}  // namespace detail

// 2x upsampling: scatter-add of weighted input (gradient-of-convolution semantics).
template <typename T>
Tensor<T> convtranspose2_forward(const Tensor<T>& input, const KernelParams<T>& k) {
    detail::check_convtranspose_args(input, k);
    const int n = input.n(), ci = input.c(), h = input.h(), w = input.w(), co = k.c_out();
    Tensor<T> out(n, co, 2 * h, 2 * w);
    for (int s = 0; s < n; ++s)
        for (int oc = 0; oc < co; ++oc) {
            T* dst = out.data.data() + (static_cast<std::size_t>(s) * co + oc) * 4 * h * w;
            for (std::size_t i = 0; i < static_cast<std::size_t>(4) * h * w; ++i)
                dst[i] = k.bias[oc];
            for (int ic = 0; ic < ci; ++ic) {
                const T w00 = k.weight(oc, ic, 0, 0), w01 = k.weight(oc, ic, 0, 1);
                const T w10 = k.weight(oc, ic, 1, 0), w11 = k.weight(oc, ic, 1, 1);
                const T* src = input.data.data() + (static_cast<std::size_t>(s) * ci + ic) * h * w;
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        T v = src[i * w + j];
                        T* p = dst + static_cast<std::size_t>(2 * i) * 2 * w + 2 * j;
                        p[0] += v * w00;
                        p[1] += v * w01;
                        p[2 * w] += v * w10;
                        p[2 * w + 1] += v * w11;
                    }
            }
        }
    return out;
}

template <typename T>
ConvGrads<T> convtranspose2_backward(const Tensor<T>& input, const KernelParams<T>& k,
                                     const Tensor<T>& upstream) {
    detail::check_convtranspose_args(input, k);
    const int n = input.n(), ci = input.c(), h = input.h(), w = input.w(), co = k.c_out();
    if (upstream.n() != n || upstream.c() != co || upstream.h() != 2 * h || upstream.w() != 2 * w)
        throw std::invalid_argument("convtranspose2_backward: upstream shape " +
                                    upstream.shape_str() + " does not match output");
    ConvGrads<T> g{Tensor<T>::zeros_like(input), Tensor<T>::zeros_like(k.weight),
                   std::vector<T>(co, T(0))};
    for (int s = 0; s < n; ++s)
        for (int oc = 0; oc < co; ++oc) {
            const T* up = upstream.data.data() + (static_cast<std::size_t>(s) * co + oc) * 4 * h * w;
            T bacc = 0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(4) * h * w; ++i) bacc += up[i];
            g.grad_bias[oc] += bacc;
            for (int ic = 0; ic < ci; ++ic) {
                const T w00 = k.weight(oc, ic, 0, 0), w01 = k.weight(oc, ic, 0, 1);
                const T w10 = k.weight(oc, ic, 1, 0), w11 = k.weight(oc, ic, 1, 1);
                const T* src = input.data.data() + (static_cast<std::size_t>(s) * ci + ic) * h * w;
                T* gin = g.grad_input.data.data() + (static_cast<std::size_t>(s) * ci + ic) * h * w;
                T gw00 = 0, gw01 = 0, gw10 = 0, gw11 = 0;
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        const T* p = up + static_cast<std::size_t>(2 * i) * 2 * w + 2 * j;
                        const T u00 = p[0], u01 = p[1], u10 = p[2 * w], u11 = p[2 * w + 1];
                        gin[i * w + j] += u00 * w00 + u01 * w01 + u10 * w10 + u11 * w11;
                        const T v = src[i * w + j];
                        gw00 += v * u00;
                        gw01 += v * u01;
                        gw10 += v * u10;
                        gw11 += v * u11;
                    }
                g.grad_weight(oc, ic, 0, 0) += gw00;
                g.grad_weight(oc, ic, 0, 1) += gw01;
                g.grad_weight(oc, ic, 1, 0) += gw10;
                g.grad_weight(oc, ic, 1, 1) += gw11;
            }
        }
    return g;
}

// Channel concatenation, order preserved.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    int total_c = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor<T>& t = *inputs[i];
        if (t.n() != inputs[0]->n() || t.h() != inputs[0]->h() || t.w() != inputs[0]->w())
            throw std::invalid_argument("concat_channels: input " + std::to_string(i) +
                                        " has shape " + t.shape_str() + ", expected spatial dims of " +
                                        inputs[0]->shape_str());
        total_c += t.c();
    }
    const int n = inputs[0]->n(), h = inputs[0]->h(), w = inputs[0]->w();
    Tensor<T> out(n, total_c, h, w);
    for (int s = 0; s < n; ++s) {
        int coff = 0;
        for (const Tensor<T>* t : inputs) {
            const std::size_t plane = static_cast<std::size_t>(h) * w;
            std::copy(t->data.begin() + static_cast<std::size_t>(s) * t->c() * plane,
                      t->data.begin() + static_cast<std::size_t>(s + 1) * t->c() * plane,
                      out.data.begin() + (static_cast<std::size_t>(s) * total_c + coff) * plane);
            coff += t->c();
        }
    }
    return out;
}

// Backward of concat: split upstream back into the original channel blocks.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& upstream, const std::vector<int>& channels) {
    int total = 0;
    for (int c : channels) total += c;
    if (total != upstream.c())
        throw std::invalid_argument("split_channels: channel counts do not sum to " +
                                    std::to_string(upstream.c()));
    std::vector<Tensor<T>> parts;
    parts.reserve(channels.size());
    const int n = upstream.n(), h = upstream.h(), w = upstream.w();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    int coff = 0;
    for (int c : channels) {
        Tensor<T> part(n, c, h, w);
        for (int s = 0; s < n; ++s)
            std::copy(upstream.data.begin() + (static_cast<std::size_t>(s) * total + coff) * plane,
                      upstream.data.begin() + (static_cast<std::size_t>(s) * total + coff + c) * plane,
                      part.data.begin() + static_cast<std::size_t>(s) * c * plane);
        coff += c;
        parts.push_back(std::move(part));
    }
    return parts;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (T& v : out.data)
        if (v < T(0)) v = T(0);
    return out;
}

// relu' at exactly 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& upstream) {
    require_same_shape(input, upstream, "relu_backward");
    Tensor<T> g = Tensor<T>::zeros_like(input);
    for (std::size_t i = 0; i < input.size(); ++i)
        if (input.data[i] > T(0)) g.data[i] = upstream.data[i];
    return g;
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (T& v : out.data) v = sigmoid_scalar(v);
    return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output, const Tensor<T>& upstream) {
    require_same_shape(output, upstream, "sigmoid_backward");
    Tensor<T> g = Tensor<T>::zeros_like(output);
    for (std::size_t i = 0; i < output.size(); ++i)
        g.data[i] = upstream.data[i] * output.data[i] * (T(1) - output.data[i]);
    return g;
}

// Central-difference gradient of a scalar function; the ground-truth oracle
// every analytic backward pass is checked against.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                       const Tensor<double>& x, double step) {
    if (step <= 0) throw std::invalid_argument("finite_diff_grad: step must be positive");
    Tensor<double> g = Tensor<double>::zeros_like(x);
    Tensor<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe.data[i] = x.data[i] + step;
        double fp = f(probe);
        probe.data[i] = x.data[i] - step;
        double fm = f(probe);
        probe.data[i] = x.data[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite function value");
        g.data[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

// Normalized max deviation between an analytic gradient and the oracle.
inline double max_rel_error(const Tensor<double>& a, const Tensor<double>& b) {
    double scale = 1e-6, worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max({scale, std::abs(a.data[i]), std::abs(b.data[i])});
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst / scale;
}

}  // namespace seg
