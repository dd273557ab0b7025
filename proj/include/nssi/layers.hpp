#pragma once

// Forward and backward kernels for the layer types used by the generator and
// the heads. Tensors are NCHW ([batch, maps, rows, time]) for the convolutional
// part and [batch, steps, features] for the recurrent part. All temporal
// convolutions are stride 1 with symmetric same padding (odd kernels).

#include "nssi/tensor.hpp"

#include <cstdint>
#include <vector>

namespace nssi::layers {

// ---------------------------------------------------------------------------
// Temporal convolution, kernel [1, K].
//   weight [Cout, Cin/groups, 1, K], bias [Cout]
//   out[b,o,r,t] = bias[o] + sum_{i,k} weight[o,i,0,k] * in[b, gi(o)+i, r, t + k - K/2]
// Transposed form takes weight [Cin, Cout/groups, 1, K] (the ConvTranspose2d
// layout) and is evaluated as a correlation with the flipped, swapped kernel.

struct ConvGrads {
  Tensor d_weight;
  Tensor d_bias;
  Tensor d_input;  // empty unless requested
};

Tensor conv_time(const Tensor& in, const Tensor& weight, const Tensor& bias, std::size_t groups);
ConvGrads conv_time_backward(const Tensor& in, const Tensor& weight, std::size_t groups, const Tensor& d_out,
                             bool need_input);

Tensor conv_time_transposed(const Tensor& in, const Tensor& weight, const Tensor& bias, std::size_t groups);
ConvGrads conv_time_transposed_backward(const Tensor& in, const Tensor& weight, std::size_t groups,
                                        const Tensor& d_out, bool need_input);

// ---------------------------------------------------------------------------
// Full-height convolution, kernel [R, 1], valid padding: [B,Cin,R,T] -> [B,Cout,1,T].
// With R = 1 this is the pointwise (1x1) convolution.
//   weight [Cout, Cin, R, 1]
Tensor conv_rows(const Tensor& in, const Tensor& weight, const Tensor& bias);
ConvGrads conv_rows_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out, bool need_input);

// Transposed counterpart: [B,Cin,1,T] -> [B,Cout,R,T], weight [Cin, Cout, R, 1].
Tensor conv_rows_transposed(const Tensor& in, const Tensor& weight, const Tensor& bias);
ConvGrads conv_rows_transposed_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out,
                                        bool need_input);

// ---------------------------------------------------------------------------
// BatchNorm2d: per-map statistics over (batch, rows, time).

struct BatchNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // biased
  std::size_t count = 0;          // elements per map
  bool training = false;
};

Tensor batchnorm_forward(const Tensor& in, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                         const Tensor& running_var, bool training, double eps, BatchNormCache& cache);

struct BatchNormGrads {
  Tensor d_input;
  Tensor d_gamma;
  Tensor d_beta;
};

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& d_out);

// running <- (1 - momentum) * running + momentum * batch (unbiased variance).
void batchnorm_update_running(const BatchNormCache& cache, double momentum, Tensor& running_mean,
                              Tensor& running_var);

// ---------------------------------------------------------------------------
// Max pooling along time with window = stride = width. Ties go to the lowest
// index. Indices are time positions within the input row.

struct PoolIndices {
  Shape input_shape;
  std::size_t width = 0;
  std::vector<std::uint32_t> argmax;  // one per output element
};

Tensor max_pool_time(const Tensor& in, std::size_t width, PoolIndices& indices);
Tensor max_pool_time_backward(const PoolIndices& indices, const Tensor& d_out);

// Scatters each value to its recorded argmax; zeros elsewhere. Throws if the
// indices do not belong to a pool of this shape and width.
Tensor max_unpool_time(const Tensor& in, const PoolIndices& indices);
Tensor max_unpool_time_backward(const PoolIndices& indices, const Tensor& d_out);

// ---------------------------------------------------------------------------
// Inverted dropout. The mask holds 0 or 1/(1-rate).

Tensor dropout_mask(const Shape& shape, double rate, std::uint64_t seed);
Tensor multiply(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Affine map over the last axis: [..., in] -> [..., out]; weight [out, in].

Tensor linear(const Tensor& in, const Tensor& weight, const Tensor& bias);

struct LinearGrads {
  Tensor d_weight;
  Tensor d_bias;
  Tensor d_input;
};

LinearGrads linear_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out);

Tensor relu(const Tensor& in);
Tensor relu_backward(const Tensor& pre_activation, const Tensor& d_out);

// [B, maps, 1, M] <-> [B, M, maps]
Tensor maps_to_sequence(const Tensor& in);
Tensor sequence_to_maps(const Tensor& in);

// ---------------------------------------------------------------------------
// Single-direction GRU with the gate order (reset, update, new):
//   r = s(W_ir x + b_ir + W_hr h + b_hr)
//   z = s(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//   h' = (1 - z) * n + z * h
// w_ih [3H, in], w_hh [3H, H], b_ih [3H], b_hh [3H]; zero initial state.

struct GruWeights {
  const Tensor& w_ih;
  const Tensor& w_hh;
  const Tensor& b_ih;
  const Tensor& b_hh;
};

struct GruCache {
  bool reverse = false;
  Tensor x;       // [B, M, in]
  Tensor h_prev;  // [B, M, H], state entering each time position
  Tensor r, z, n; // [B, M, H]
  Tensor hn;      // W_hn h + b_hn, [B, M, H]
};

// Output [B, M, H] aligned with input time; the reverse direction consumes
// the sequence back to front.
Tensor gru_forward(const Tensor& x, const GruWeights& w, bool reverse, GruCache& cache);

struct GruGrads {
  Tensor d_x;
  Tensor d_w_ih;
  Tensor d_w_hh;
  Tensor d_b_ih;
  Tensor d_b_hh;
};

GruGrads gru_backward(const GruCache& cache, const GruWeights& w, const Tensor& d_out);

// [B, M, H] + [B, M, H] -> [B, M, 2H] and back.
Tensor concat_features(const Tensor& a, const Tensor& b);
void split_features(const Tensor& ab, Tensor& a, Tensor& b);

}  // namespace nssi::layers
