#pragma once

// CNN-BiGRU encoder-decoder. The layer sequence and parameter shapes follow
// the 25-row architecture table: temporal conv -> BN -> spatial conv -> BN ->
// pool -> dropout -> depthwise conv -> pointwise conv -> BN -> pool -> linear ->
// BiGRU -> linear (latent) -> linear -> BiGRU -> linear -> unpool -> mirrored
// transposed convolutions back to [B, 1, C, P].

#include "nssi/layers.hpp"
#include "nssi/params.hpp"
#include "nssi/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nssi {

struct GeneratorConfig {
  std::size_t channels = 63;     // C
  std::size_t points = 384;      // P, samples per segment
  std::size_t f1 = 16;           // maps out of the temporal and pointwise convs
  std::size_t f2 = 32;           // maps out of the spatial conv
  std::size_t pool1 = 4;
  std::size_t pool2 = 8;
  std::size_t gru_hidden = 16;   // per direction
  std::size_t feature_width = 16;  // F
  double dropout = 0.25;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  std::size_t temporal_kernel_1() const { return points / 2 + 1; }
  std::size_t temporal_kernel_2() const { return points / 8 + 1; }
  std::size_t sequence_length() const { return points / (pool1 * pool2); }  // M
  std::size_t flat_size() const { return sequence_length() * feature_width; }
  std::size_t signal_size() const { return channels * points; }

  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

enum class Mode { train, eval };

// One row of the architecture summary.
struct LayerRow {
  std::string id;       // "1-1" ... "1-25"
  std::string type;     // Conv2d, BatchNorm2d, ...
  std::string kernel;   // "[1, 193]" or "--"
  Shape output;         // with the batch dimension first
  std::size_t params = 0;
  std::vector<std::string> tensors;  // trainable tensors owned by the row
};

std::vector<LayerRow> layer_table(const GeneratorConfig& config, std::size_t batch);

struct ForwardTrace {
  Mode mode = Mode::eval;
  std::uint64_t dropout_seed = 0;
  Tensor input;  // [B, 1, C, P]

  // encoder
  Tensor conv1_out;
  layers::BatchNormCache bn1;
  Tensor bn1_out;
  Tensor spatial_out;
  layers::BatchNormCache bn2;
  Tensor bn2_out;
  layers::PoolIndices pool1;
  Tensor pool1_out;
  Tensor drop1_mask;  // empty in eval mode
  Tensor drop1_out;
  Tensor depthwise_out;
  Tensor pointwise_out;
  layers::BatchNormCache bn3;
  Tensor bn3_out;
  layers::PoolIndices pool2;
  Tensor pool2_out;   // [B, f1, 1, M]
  Tensor sequence;    // [B, M, f1]
  Tensor features;    // X-cal: [B, M, F], sequence fed to the BiGRU
  layers::GruCache enc_forward, enc_backward;
  Tensor bigru;       // A-cal: [B, M, 2H]
  Tensor latent;      // Y-cal: [B, M, F]
  Tensor flat;        // O-cal: [B, M*F], row-major flatten of latent

  // decoder
  Tensor dec_in;      // [B, M, 2H]
  layers::GruCache dec_forward, dec_backward;
  Tensor dec_gru;     // [B, M, 2H]
  Tensor dec_seq;     // [B, M, f1]
  Tensor dec_maps;    // [B, f1, 1, M]
  Tensor unpool2_out;
  Tensor pointwise_t_out;
  Tensor depthwise_t_out;
  layers::BatchNormCache bn4;
  Tensor bn4_out;
  Tensor drop2_mask;
  Tensor drop2_out;
  Tensor unpool1_out;
  Tensor spatial_t_out;
  layers::BatchNormCache bn5;
  Tensor bn5_out;
  Tensor reconstruction;  // [B, 1, C, P]

  // Output shape of every table row, in order.
  std::vector<std::pair<std::string, Shape>> row_shapes;

  std::size_t batch() const { return input.dim(0); }
};

class Generator {
 public:
  Generator(const GeneratorConfig& config, std::uint64_t seed);  // build_generator

  const GeneratorConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t parameter_count() const { return params_.trainable_count(); }

  // x: [B, 1, C, P]. Does not mutate the generator; training-mode batch
  // statistics are folded into the running averages by commit_statistics().
  ForwardTrace forward(const Tensor& x, Mode mode, std::uint64_t dropout_seed = 0) const;
  void commit_statistics(const ForwardTrace& trace);

  // Reverse-mode gradients of a scalar loss given its partials with respect
  // to the reconstruction ([B,1,C,P]) and/or the flat features ([B, M*F]).
  // Either pointer may be null.
  GradientSet backward(const ForwardTrace& trace, const Tensor* d_reconstruction, const Tensor* d_flat) const;

 private:
  GeneratorConfig config_;
  ParamSet params_;
};

// Inverse of the row-major flatten: [B, M*F] -> [B, M, F].
Tensor unflatten_features(const Tensor& flat, std::size_t steps, std::size_t width);

}  // namespace nssi
