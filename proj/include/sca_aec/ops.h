#pragma once

// Differentiable operations over Graph values. Each op computes its forward
// value eagerly and, on a recording graph, registers the matching
// vector-Jacobian product.

#include <memory>
#include <optional>
#include <vector>

#include "sca_aec/autograd.h"

namespace sca_aec::ops {

// --- elementwise / reductions ---
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);
Var Relu(Var a);
Var Sigmoid(Var a);
Var Tanh(Var a);
Var Sum(Var a);
Var SumSquares(Var a);
// sum |a|; sub-gradient 0 at the origin.
Var SumAbs(Var a);
// sum_i w[i] * a[i]; w is a constant of the same shape.
Var WeightedSum(Var a, const Tensor& w);

// --- linear algebra ---
Var MatMul(Var a, Var b);    // [m,k] x [k,n]
Var MatMulNT(Var a, Var b);  // [m,k] x [n,k]^T
// x[m,k] * w[k,n] + bias[n]; bias may be an invalid Var.
Var Linear(Var x, Var w, Var bias);

// --- normalization ---
// Normalizes over the last axis.
Var LayerNorm(Var x, Var gain, Var bias, double eps = 1e-5);

// Boolean allow-matrix for attention logits.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<unsigned char> allow;  // row-major, 1 = allowed

  bool allowed(std::size_t i, std::size_t j) const {
    return allow[i * cols + j] != 0;
  }
};

// Row-wise softmax over the last axis of a rank-2 tensor.
Var Softmax(Var logits);

// Row-wise softmax restricted to allowed entries; masked cells are exactly 0.
Var MaskedSoftmax(Var logits, std::shared_ptr<const AttentionMask> mask);

// --- shape manipulation ---
Var Reshape(Var a, Shape shape);
Var Concat(const std::vector<Var>& parts, std::size_t axis);
Var Slice(Var a, std::size_t axis, std::size_t begin, std::size_t length);
Var Select(Var a, std::size_t index);           // a[index, ...], drops axis 0
Var Stack(const std::vector<Var>& parts);       // new leading axis
Var Transpose01(Var a);                         // swaps the first two axes

// --- convolution blocks, layout [batch, channel, time, freq] ---
// Kernel [c_out, c_in, 2, 2], stride 1 in time / 2 in frequency, one zero
// frame of left padding so frame t reads input frames t-1 and t only.
Var CausalConv2d(Var x, Var kernel, Var bias);
// Kernel [c_in, c_out, 2, 2]; doubles the frequency extent; causal in time.
Var CausalConvTranspose2d(Var x, Var kernel, Var bias);
// Data-gradient of CausalConv2d: the exact adjoint for a fixed kernel.
Tensor CausalConv2dAdjoint(const Tensor& grad_out, const Tensor& kernel,
                           std::size_t freq_in);
// Splits channels in half: first * sigmoid(second).
Var Glu(Var x);

enum class BatchNormMode { kBatchStatistics, kFrozen };
struct BatchStatistics {
  std::vector<double> mean;
  std::vector<double> var;
};
// Per-channel normalization over (batch, time, freq). In batch-statistics
// mode the observed statistics are appended to `observed` when non-null.
Var BatchNorm(Var x, Var gamma, Var beta, const Tensor& running_mean,
              const Tensor& running_var, BatchNormMode mode, double eps = 1e-5,
              BatchStatistics* observed = nullptr);

// --- recurrence ---
struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};
// One step of the (i, f, g, o) LSTM recurrence. w_ih [d_in, 4h],
// w_hh [h, 4h], bias [4h]. `gates`, when non-null, receives the activated
// gate values (4h).
void LstmStep(const double* x, const LstmState& prev, const Tensor& w_ih,
              const Tensor& w_hh, const Tensor& bias, LstmState& next,
              double* gates = nullptr);
// x [t, d_in] -> [t, h]. Iterates LstmStep from `initial` (zeros if absent).
Var LstmSequence(Var x, Var w_ih, Var w_hh, Var bias,
                 const LstmState* initial = nullptr,
                 LstmState* final_state = nullptr);

// --- complex planes, layout [2, ...] = (real, imag) ---
// Magnitude-bounded phase-preserving gate: bound * tanh(rho) * (r, i) / rho.
Var ComplexGate(Var raw, double bound);
// (a_r b_r - a_i b_i, a_r b_i + a_i b_r)
Var ComplexMul(Var a, Var b);
// sum_{..., k} w[k] * |diff_r + j diff_i| over [2, rows, K]
Var WeightedComplexAbsSum(Var diff, const Tensor& weights);
// sum_{..., k} w[k] * |diff|^2 over [2, rows, K]
Var WeightedComplexSquareSum(Var diff, const Tensor& weights);

}  // namespace sca_aec::ops
