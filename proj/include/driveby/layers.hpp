#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "driveby/blas.hpp"
#include "driveby/rng.hpp"
#include "driveby/tensor.hpp"

namespace driveby::nn {

// Weights plus gradient and momentum accumulators of mirrored shapes.
template <typename T>
struct LayerParams {
    Tensor<T> w, b;    // kernels Cout x Cin x k x k, or weights m x n
    Tensor<T> gw, gb;  // gradient accumulators
    Tensor<T> vw, vb;  // SGD momentum state

    void init_shapes(std::vector<int> wshape, std::vector<int> bshape) {
        w = Tensor<T>(wshape);
        gw = Tensor<T>(wshape);
        vw = Tensor<T>(wshape);
        b = Tensor<T>(std::move(bshape));
        gb = Tensor<T>(b.shape);
        vb = Tensor<T>(b.shape);
    }

    void zero_grad() {
        gw.zero();
        gb.zero();
    }

    std::size_t param_count() const { return w.numel() + b.numel(); }

    template <typename U>
    LayerParams<U> cast() const {
        LayerParams<U> out;
        out.init_shapes(w.shape, b.shape);
        out.w = w.template cast<U>();
        out.b = b.template cast<U>();
        return out;
    }
};

// Kaiming-style uniform fan-in init for ReLU stacks; biases zero.
template <typename T>
void kaiming_init(LayerParams<T>& p, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : p.w.data) v = static_cast<T>(rng.uniform(-bound, bound));
    p.b.zero();
}

// ---------------------------------------------------------------------------
// conv2d: valid (no padding), stride 1, cross-correlation semantics.
// Input Cin x Hin x Win, kernels Cout x Cin x k x k -> Cout x Hout x Wout
// with Hout = Hin-k+1. The unrolled patch matrix (im2col) is cached by the
// caller and reused by the backward pass.
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int k) { return in - k + 1; }

template <typename T>
void im2col(const Tensor<T>& input, int k, Tensor<T>& col) {
    const int C = input.shape[0], H = input.shape[1], W = input.shape[2];
    const int Ho = conv_out_dim(H, k), Wo = conv_out_dim(W, k);
    const int cols = Ho * Wo;
    if (col.shape != std::vector<int>{C * k * k, cols}) col = Tensor<T>({C * k * k, cols});
    T* dst = col.ptr();
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* src = input.ptr() + (static_cast<std::size_t>(c) * H + ky) * W + kx;
                for (int y = 0; y < Ho; ++y) {
                    const T* row = src + static_cast<std::size_t>(y) * W;
                    for (int x = 0; x < Wo; ++x) *dst++ = row[x];
                }
            }
}

template <typename T>
void col2im(const Tensor<T>& col, int C, int H, int W, int k, Tensor<T>& input_grad) {
    const int Ho = conv_out_dim(H, k), Wo = conv_out_dim(W, k);
    if (input_grad.shape != std::vector<int>{C, H, W}) input_grad = Tensor<T>({C, H, W});
    input_grad.zero();
    const T* src = col.ptr();
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* dst = input_grad.ptr() + (static_cast<std::size_t>(c) * H + ky) * W + kx;
                for (int y = 0; y < Ho; ++y) {
                    T* row = dst + static_cast<std::size_t>(y) * W;
                    for (int x = 0; x < Wo; ++x) row[x] += *src++;
                }
            }
}

template <typename T>
void conv2d_forward(const Tensor<T>& input, const LayerParams<T>& p, Tensor<T>& col,
                    Tensor<T>& out) {
    const int Cout = p.w.shape[0], Cin = p.w.shape[1], k = p.w.shape[2];
    if (input.shape[0] != Cin)
        throw DataError("conv2d: input channels " + std::to_string(input.shape[0]) +
                        ", kernel expects " + std::to_string(Cin));
    if (k > input.shape[1] || k > input.shape[2])
        throw DataError("conv2d: kernel larger than input " + shape_str(input.shape));
    const int Ho = conv_out_dim(input.shape[1], k), Wo = conv_out_dim(input.shape[2], k);
    im2col(input, k, col);
    if (out.shape != std::vector<int>{Cout, Ho, Wo}) out = Tensor<T>({Cout, Ho, Wo});
    // out[Cout x HoWo] = W[Cout x Cin k^2] * col
    gemm<T>(false, false, Cout, Ho * Wo, Cin * k * k, T(1), p.w.ptr(), col.ptr(), T(0),
            out.ptr());
    for (int co = 0; co < Cout; ++co) {
        T* row = out.ptr() + static_cast<std::size_t>(co) * Ho * Wo;
        const T bias = p.b[co];
        for (int i = 0; i < Ho * Wo; ++i) row[i] += bias;
    }
}

// Accumulates parameter gradients into p.gw/p.gb; writes input gradient when
// input_grad is non-null (the trunk's first layer skips it).
template <typename T>
void conv2d_backward(LayerParams<T>& p, const Tensor<T>& col, const Tensor<T>& grad_out,
                     int Hin, int Win, Tensor<T>* input_grad, Tensor<T>& col_grad) {
    const int Cout = p.w.shape[0], Cin = p.w.shape[1], k = p.w.shape[2];
    const int cols = grad_out.shape[1] * grad_out.shape[2];
    // dW += g * col^T
    gemm<T>(false, true, Cout, Cin * k * k, cols, T(1), grad_out.ptr(), col.ptr(), T(1),
            p.gw.ptr());
    for (int co = 0; co < Cout; ++co) {
        const T* row = grad_out.ptr() + static_cast<std::size_t>(co) * cols;
        T s = 0;
        for (int i = 0; i < cols; ++i) s += row[i];
        p.gb[co] += s;
    }
    if (input_grad) {
        if (col_grad.shape != col.shape) col_grad = Tensor<T>(col.shape);
        // dcol = W^T * g
        gemm<T>(true, false, Cin * k * k, cols, Cout, T(1), p.w.ptr(), grad_out.ptr(), T(0),
                col_grad.ptr());
        col2im(col_grad, Cin, Hin, Win, k, *input_grad);
    }
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2, floor semantics (odd trailing row/col dropped).
// Backward routes the gradient to the argmax position; ties break to the
// first element in window scan order.
// ---------------------------------------------------------------------------

template <typename T>
void maxpool2_forward(const Tensor<T>& input, Tensor<T>& out, std::vector<std::int32_t>& argmax) {
    const int C = input.shape[0], H = input.shape[1], W = input.shape[2];
    if (H < 2 || W < 2) throw DataError("maxpool2: spatial dims must be >= 2, got " + shape_str(input.shape));
    const int Ho = H / 2, Wo = W / 2;
    if (out.shape != std::vector<int>{C, Ho, Wo}) out = Tensor<T>({C, Ho, Wo});
    argmax.resize(out.numel());
    std::size_t oi = 0;
    for (int c = 0; c < C; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * H * W;
        for (int y = 0; y < Ho; ++y)
            for (int x = 0; x < Wo; ++x, ++oi) {
                const std::size_t i00 = base + static_cast<std::size_t>(2 * y) * W + 2 * x;
                std::size_t best = i00;
                T bv = input[i00];
                const std::size_t cand[3] = {i00 + 1, i00 + W, i00 + W + 1};
                for (std::size_t ci : cand)
                    if (input[ci] > bv) {
                        bv = input[ci];
                        best = ci;
                    }
                out[oi] = bv;
                argmax[oi] = static_cast<std::int32_t>(best);
            }
    }
}

template <typename T>
void maxpool2_backward(const Tensor<T>& grad_out, const std::vector<std::int32_t>& argmax,
                       const std::vector<int>& input_shape, Tensor<T>& input_grad) {
    if (input_grad.shape != input_shape) input_grad = Tensor<T>(input_shape);
    input_grad.zero();
    for (std::size_t i = 0; i < grad_out.numel(); ++i)
        input_grad[static_cast<std::size_t>(argmax[i])] += grad_out[i];
}

// ---------------------------------------------------------------------------
// linear / relu
// ---------------------------------------------------------------------------

template <typename T>
void linear_forward(const Tensor<T>& input, const LayerParams<T>& p, Tensor<T>& out) {
    const int m = p.w.shape[0], n = p.w.shape[1];
    if (static_cast<int>(input.numel()) != n)
        throw DataError("linear: input size " + std::to_string(input.numel()) + ", weights expect " +
                        std::to_string(n));
    if (out.shape != std::vector<int>{m}) out = Tensor<T>({m});
    gemm<T>(false, false, m, 1, n, T(1), p.w.ptr(), input.ptr(), T(0), out.ptr());
    for (int i = 0; i < m; ++i) out[i] += p.b[i];
}

template <typename T>
void linear_backward(LayerParams<T>& p, const Tensor<T>& input, const Tensor<T>& grad_out,
                     Tensor<T>* input_grad) {
    const int m = p.w.shape[0], n = p.w.shape[1];
    // dW += g x^T (rank-1)
    gemm<T>(false, true, m, n, 1, T(1), grad_out.ptr(), input.ptr(), T(1), p.gw.ptr());
    for (int i = 0; i < m; ++i) p.gb[i] += grad_out[i];
    if (input_grad) {
        if (input_grad->shape != std::vector<int>{n}) *input_grad = Tensor<T>({n});
        gemm<T>(true, false, n, 1, m, T(1), p.w.ptr(), grad_out.ptr(), T(0), input_grad->ptr());
    }
}

template <typename T>
void relu_forward(const Tensor<T>& input, Tensor<T>& out) {
    if (out.shape != input.shape) out = Tensor<T>(input.shape);
    for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
}

// gradient passes where pre-activation > 0 (zero at exactly 0)
template <typename T>
void relu_backward(const Tensor<T>& pre_act, const Tensor<T>& grad_out, Tensor<T>& input_grad) {
    if (input_grad.shape != pre_act.shape) input_grad = Tensor<T>(pre_act.shape);
    for (std::size_t i = 0; i < pre_act.numel(); ++i)
        input_grad[i] = pre_act[i] > T(0) ? grad_out[i] : T(0);
}

// ---------------------------------------------------------------------------
// softmax cross-entropy, log-sum-exp stabilized.
// Returns -log softmax(logits)[label]; grad = softmax(logits) - onehot(label).
// ---------------------------------------------------------------------------

template <typename T>
void softmax(const Tensor<T>& logits, Tensor<T>& probs) {
    if (probs.shape != logits.shape) probs = Tensor<T>(logits.shape);
    T mx = logits[0];
    for (std::size_t i = 1; i < logits.numel(); ++i) mx = std::max(mx, logits[i]);
    double sum = 0;
    for (std::size_t i = 0; i < logits.numel(); ++i) {
        const double e = std::exp(static_cast<double>(logits[i] - mx));
        probs[i] = static_cast<T>(e);
        sum += e;
    }
    for (std::size_t i = 0; i < logits.numel(); ++i)
        probs[i] = static_cast<T>(static_cast<double>(probs[i]) / sum);
}

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, int label, Tensor<T>& grad_logits) {
    const int K = static_cast<int>(logits.numel());
    if (K < 2 || label < 0 || label >= K)
        throw DataError("softmax_cross_entropy: label " + std::to_string(label) + " out of range for K=" +
                        std::to_string(K));
    T mx = logits[0];
    for (int i = 1; i < K; ++i) mx = std::max(mx, logits[i]);
    double sum = 0;
    for (int i = 0; i < K; ++i) sum += std::exp(static_cast<double>(logits[i] - mx));
    const double log_sum = std::log(sum) + static_cast<double>(mx);
    const double loss = log_sum - static_cast<double>(logits[label]);
    if (grad_logits.shape != logits.shape) grad_logits = Tensor<T>(logits.shape);
    for (int i = 0; i < K; ++i) {
        const double p = std::exp(static_cast<double>(logits[i]) - log_sum);
        grad_logits[i] = static_cast<T>(p - (i == label ? 1.0 : 0.0));
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Gradient reversal: identity forward; backward multiplies by -lambda.
// ---------------------------------------------------------------------------

template <typename T>
void grl_forward(const Tensor<T>& input, Tensor<T>& out) {
    out = input;  // exact identity
}

template <typename T>
void grl_backward(const Tensor<T>& grad_out, T lambda, Tensor<T>& input_grad) {
    if (input_grad.shape != grad_out.shape) input_grad = Tensor<T>(grad_out.shape);
    for (std::size_t i = 0; i < grad_out.numel(); ++i) input_grad[i] = -lambda * grad_out[i];
}

// ---------------------------------------------------------------------------
// SGD with momentum: v <- momentum*v + g; w <- w - lr*v; grads zeroed.
// ---------------------------------------------------------------------------

template <typename T>
void sgd_step(LayerParams<T>& p, T lr, T momentum) {
    for (std::size_t i = 0; i < p.w.numel(); ++i) {
        p.vw[i] = momentum * p.vw[i] + p.gw[i];
        p.w[i] -= lr * p.vw[i];
    }
    for (std::size_t i = 0; i < p.b.numel(); ++i) {
        p.vb[i] = momentum * p.vb[i] + p.gb[i];
        p.b[i] -= lr * p.vb[i];
    }
    p.zero_grad();
}

} // namespace driveby::nn
