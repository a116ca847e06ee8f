#pragma once

// SCA-CRN echo canceller: complex projections, cross-attention alignment, a
// gated-convolution encoder/decoder around a recurrent bottleneck, and a
// bounded complex mask applied to the microphone spectrogram.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "sca_aec/attention.h"
#include "sca_aec/ops.h"
#include "sca_aec/projection.h"
#include "sca_aec/stft.h"

namespace sca_aec {

enum class AttentionMode { kSca, kNca, kNone };

std::string ToString(AttentionMode mode);
AttentionMode ParseAttentionMode(const std::string& text);

struct ModelConfig {
  std::size_t d = 16;
  std::size_t heads = 2;
  std::size_t lookahead = 0;
  std::size_t history = 1024;
  std::size_t lstm_hidden = 64;
  double mask_bound = 1.0;
  AttentionMode attention = AttentionMode::kSca;
  bool query_residual = false;
  std::array<std::size_t, 3> encoder_channels{8, 16, 16};
  std::array<std::size_t, 3> decoder_channels{16, 8, 2};
  StftConfig stft = StftConfig::Default();
  std::uint64_t seed = 0;

  void Validate() const;
  std::size_t bins() const { return stft.bins(); }
  // Frequency extent of the encoder input (2d) and of the bottleneck.
  std::size_t feature_dim() const { return 2 * d; }
  std::size_t bottleneck_dim() const { return feature_dim() / 8; }
  std::size_t recurrent_dim() const { return encoder_channels[2] * bottleneck_dim(); }
};

// conv (or transposed conv) -> GLU -> batch norm
struct GatedConvBlock {
  bool transposed = false;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  Parameter kernel;  // conv [2 c_out, c_in, 2, 2]; transposed [c_in, 2 c_out, 2, 2]
  Parameter bias;    // [2 c_out]
  Parameter bn_gamma, bn_beta;
  Tensor running_mean, running_var;
};

class ScaCrnModel {
 public:
  explicit ScaCrnModel(const ModelConfig& cfg);
  ScaCrnModel(const ScaCrnModel&) = delete;
  ScaCrnModel& operator=(const ScaCrnModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  bool has_attention() const { return cfg_.attention != AttentionMode::kNone; }

  // Every learnable tensor in a fixed order; names are unique.
  std::vector<Parameter*> Parameters();
  std::vector<const Parameter*> Parameters() const;
  // Batch-norm running statistics, named "<block>.bn.running_mean/var".
  std::vector<std::pair<std::string, Tensor*>> Buffers();
  std::size_t ParamCount() const;
  void ZeroGrad();

  // running <- momentum * running + (1 - momentum) * observed, per block in
  // encoder-then-decoder order.
  void UpdateBatchNormStatistics(const std::vector<ops::BatchStatistics>& observed,
                                 double momentum = 0.9);

  ComplexProjection proj_near, proj_far;
  CrossAttentionModule sca_lf, sca_fl;
  std::array<GatedConvBlock, 3> encoder, decoder;
  Parameter lstm_w_ih, lstm_w_hh, lstm_bias;  // [4d, 4h], [h, 4h], [4h] gate order i,f,g,o
  Parameter rec_out_w, rec_out_b;             // [h, c f'], [c f']
  Parameter out_w, out_b;                     // [2d, F], [F]

 private:
  ModelConfig cfg_;
};

// Closed-form scalar parameter count for a configuration.
std::size_t AnalyticParamCount(const ModelConfig& cfg);

struct ForwardOptions {
  ops::BatchNormMode bn_mode = ops::BatchNormMode::kFrozen;
  // Filled with per-block statistics in batch-statistics mode.
  std::vector<ops::BatchStatistics>* observed = nullptr;
  // Replaces the mask with zeros.
  bool zero_mask = false;
  std::vector<Tensor>* attention_weights = nullptr;
};

struct EncoderOutput {
  Var bottleneck;            // [1, c3, t, 2d/8]
  std::array<Var, 3> skips;  // block outputs
};

struct ModelOutput {
  Var features;  // [2, t, 2d] alignment output
  Var mask;      // [2, t, F]
  Var enhanced;  // [2, t, F]
};

// Stages, exposed for testing. Shapes follow [batch, channel, time, freq].
Var AlignFeatures(Graph& g, ScaCrnModel& m, Var l, Var f, const ForwardOptions& opt = {});
EncoderOutput Encode(Graph& g, ScaCrnModel& m, Var x, const ForwardOptions& opt = {});
Var RecurrentForward(Graph& g, ScaCrnModel& m, Var bottleneck);
Var Decode(Graph& g, ScaCrnModel& m, Var bottleneck, const std::array<Var, 3>& skips,
           const ForwardOptions& opt = {});
Var MaskHead(Graph& g, ScaCrnModel& m, Var decoded);

// mic, far: [2, t, F] spectrogram planes.
ModelOutput ModelForward(Graph& g, ScaCrnModel& m, Var mic, Var far,
                         const ForwardOptions& opt = {});

// Plain-value offline evaluation with frozen statistics.
Spectrogram EnhanceSpectrogram(ScaCrnModel& m, const Spectrogram& mic, const Spectrogram& far,
                               bool zero_mask = false);

// Frame-at-a-time model evaluation with frozen statistics. Output frame i is
// released once input frame i + lookahead has been pushed, or at Flush.
class StreamingModel {
 public:
  explicit StreamingModel(const ScaCrnModel& m, bool zero_mask = false);
  std::vector<SpectralFrame> Push(const SpectralFrame& mic, const SpectralFrame& far);
  std::vector<SpectralFrame> Flush();

 private:
  std::vector<SpectralFrame> Drain(std::vector<Tensor> lf, std::vector<Tensor> fl);
  SpectralFrame Process(const Tensor& features);
  Tensor ConvStep(const GatedConvBlock& b, std::optional<Tensor>& prev, const Tensor& x) const;

  const ScaCrnModel* m_;
  bool zero_mask_;
  std::optional<CrossAttentionStream> lf_stream_, fl_stream_;
  std::deque<Tensor> lf_ready_, fl_ready_;
  std::deque<SpectralFrame> mic_queue_;
  std::array<std::optional<Tensor>, 3> enc_prev_, dec_prev_;
  ops::LstmState lstm_;
};

}  // namespace sca_aec
