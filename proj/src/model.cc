#include "sca_aec/model.h"

#include <random>

#include "init.h"
#include "sca_aec/error.h"

namespace sca_aec {

std::string ToString(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::kSca: return "sca";
    case AttentionMode::kNca: return "nca";
    case AttentionMode::kNone: return "none";
  }
  return "?";
}

AttentionMode ParseAttentionMode(const std::string& text) {
  if (text == "sca") return AttentionMode::kSca;
  if (text == "nca") return AttentionMode::kNca;
  if (text == "none") return AttentionMode::kNone;
  FailUsage("unknown attention mode '" + text + "' (expected sca, nca or none)");
}

void ModelConfig::Validate() const {
  stft.Validate();
  if (d == 0 || d % 4 != 0) {
    FailUsage("model: d must be a positive multiple of 4 for three stride-2 halvings of 2d, got " +
              std::to_string(d));
  }
  if (attention != AttentionMode::kNone && (heads == 0 || d % heads != 0)) {
    FailUsage("model: d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
  }
  if (lstm_hidden == 0) FailUsage("model: lstm_hidden must be positive");
  if (!(mask_bound > 0.0)) FailUsage("model: mask_bound must be positive");
  if (history == 0) FailUsage("model: history must be positive");
  if (decoder_channels[2] != 2) FailUsage("model: last decoder block must have 2 channels");
  for (std::size_t c : encoder_channels)
    if (c == 0) FailUsage("model: zero encoder channels");
  for (std::size_t c : decoder_channels)
    if (c == 0) FailUsage("model: zero decoder channels");
}

namespace {

GatedConvBlock MakeBlock(const std::string& name, bool transposed, std::size_t c_in,
                         std::size_t c_out) {
  GatedConvBlock b;
  b.transposed = transposed;
  b.c_in = c_in;
  b.c_out = c_out;
  b.kernel = transposed ? MakeParam(name + ".kernel", {c_in, 2 * c_out, 2, 2})
                        : MakeParam(name + ".kernel", {2 * c_out, c_in, 2, 2});
  b.bias = MakeParam(name + ".bias", {2 * c_out});
  b.bn_gamma = MakeParam(name + ".bn.gamma", {c_out}, 1.0);
  b.bn_beta = MakeParam(name + ".bn.beta", {c_out});
  b.running_mean = Tensor({c_out}, 0.0);
  b.running_var = Tensor({c_out}, 1.0);
  return b;
}

std::size_t BlockCount(std::size_t c_in, std::size_t c_out) {
  return c_in * 2 * c_out * 4 + 2 * c_out + 2 * c_out;
}

// Input channels of decoder block k: previous stage output plus the mirrored skip.
std::array<std::size_t, 3> DecoderInputs(const ModelConfig& c) {
  return {c.encoder_channels[2] + c.encoder_channels[2],
          c.decoder_channels[0] + c.encoder_channels[1],
          c.decoder_channels[1] + c.encoder_channels[0]};
}

}  // namespace

ScaCrnModel::ScaCrnModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.Validate();
  const std::size_t F = cfg_.bins(), d = cfg_.d;
  proj_near = ComplexProjection("proj_near", F, d);
  proj_far = ComplexProjection("proj_far", F, d);
  if (has_attention()) {
    sca_lf = CrossAttentionModule("sca.lf", d, cfg_.heads);
    sca_fl = CrossAttentionModule("sca.fl", d, cfg_.heads);
  }
  std::size_t c_in = 2;
  for (std::size_t k = 0; k < 3; ++k) {
    encoder[k] = MakeBlock("encoder." + std::to_string(k), false, c_in, cfg_.encoder_channels[k]);
    c_in = cfg_.encoder_channels[k];
  }
  const auto dec_in = DecoderInputs(cfg_);
  for (std::size_t k = 0; k < 3; ++k)
    decoder[k] = MakeBlock("decoder." + std::to_string(k), true, dec_in[k], cfg_.decoder_channels[k]);
  const std::size_t r = cfg_.recurrent_dim(), h = cfg_.lstm_hidden;
  lstm_w_ih = MakeParam("recurrent.lstm.w_ih", {r, 4 * h});
  lstm_w_hh = MakeParam("recurrent.lstm.w_hh", {h, 4 * h});
  lstm_bias = MakeParam("recurrent.lstm.bias", {4 * h});
  rec_out_w = MakeParam("recurrent.out.weight", {h, r});
  rec_out_b = MakeParam("recurrent.out.bias", {r});
  out_w = MakeParam("mask_head.weight", {2 * d, F});
  out_b = MakeParam("mask_head.bias", {F});

  std::mt19937_64 rng(cfg_.seed);
  UniformInit(proj_near.weight, F, rng);
  UniformInit(proj_far.weight, F, rng);
  if (has_attention()) {
    sca_lf.Initialize(rng);
    sca_fl.Initialize(rng);
  }
  for (auto* blocks : {&encoder, &decoder})
    for (GatedConvBlock& b : *blocks) UniformInit(b.kernel, b.c_in * 4, rng);
  UniformInit(lstm_w_ih, r, rng);
  UniformInit(lstm_w_hh, h, rng);
  UniformInit(rec_out_w, h, rng);
  UniformInit(out_w, 2 * d, rng);
}

std::vector<Parameter*> ScaCrnModel::Parameters() {
  std::vector<Parameter*> out{&proj_near.weight, &proj_near.bias, &proj_far.weight, &proj_far.bias};
  if (has_attention()) {
    for (Parameter* p : sca_lf.Parameters()) out.push_back(p);
    for (Parameter* p : sca_fl.Parameters()) out.push_back(p);
  }
  for (GatedConvBlock& b : encoder)
    for (Parameter* p : {&b.kernel, &b.bias, &b.bn_gamma, &b.bn_beta}) out.push_back(p);
  for (Parameter* p : {&lstm_w_ih, &lstm_w_hh, &lstm_bias, &rec_out_w, &rec_out_b}) out.push_back(p);
  for (GatedConvBlock& b : decoder)
    for (Parameter* p : {&b.kernel, &b.bias, &b.bn_gamma, &b.bn_beta}) out.push_back(p);
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

std::vector<const Parameter*> ScaCrnModel::Parameters() const {
  std::vector<const Parameter*> out;
  for (Parameter* p : const_cast<ScaCrnModel*>(this)->Parameters()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ScaCrnModel::Buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto* blocks : {&encoder, &decoder})
    for (GatedConvBlock& b : *blocks) {
      const std::string prefix = b.kernel.name.substr(0, b.kernel.name.size() - 7);  // drop ".kernel"
      out.emplace_back(prefix + ".bn.running_mean", &b.running_mean);
      out.emplace_back(prefix + ".bn.running_var", &b.running_var);
    }
  return out;
}

std::size_t ScaCrnModel::ParamCount() const {
  std::size_t n = 0;
  for (const Parameter* p : Parameters()) n += p->value.size();
  return n;
}

void ScaCrnModel::ZeroGrad() {
  for (Parameter* p : Parameters()) p->ZeroGrad();
}

void ScaCrnModel::UpdateBatchNormStatistics(const std::vector<ops::BatchStatistics>& observed,
                                            double momentum) {
  if (observed.size() != 6) FailUsage("batch-norm update expects 6 blocks of statistics");
  for (std::size_t k = 0; k < 6; ++k) {
    GatedConvBlock& b = k < 3 ? encoder[k] : decoder[k - 3];
    const ops::BatchStatistics& s = observed[k];
    if (s.mean.size() != b.c_out || s.var.size() != b.c_out) {
      FailUsage("batch-norm update: channel mismatch");
    }
    for (std::size_t c = 0; c < b.c_out; ++c) {
      b.running_mean[c] = momentum * b.running_mean[c] + (1.0 - momentum) * s.mean[c];
      b.running_var[c] = momentum * b.running_var[c] + (1.0 - momentum) * s.var[c];
    }
  }
}

std::size_t AnalyticParamCount(const ModelConfig& c) {
  const std::size_t F = c.bins(), d = c.d, h = c.lstm_hidden, r = c.recurrent_dim();
  std::size_t n = 2 * (F * d + d);
  if (c.attention != AttentionMode::kNone) n += 2 * (12 * d * d + 11 * d);
  std::size_t c_in = 2;
  for (std::size_t k = 0; k < 3; ++k) {
    n += BlockCount(c_in, c.encoder_channels[k]);
    c_in = c.encoder_channels[k];
  }
  const auto dec_in = DecoderInputs(c);
  for (std::size_t k = 0; k < 3; ++k) n += BlockCount(dec_in[k], c.decoder_channels[k]);
  n += 4 * h * (r + h + 1) + h * r + r;
  n += 2 * d * F + F;
  return n;
}

// ---------------------------------------------------------------------------
// offline forward

namespace {

Var BlockForward(Graph& g, GatedConvBlock& b, Var x, const ForwardOptions& opt) {
  Var y = b.transposed ? ops::CausalConvTranspose2d(x, g.Param(b.kernel), g.Param(b.bias))
                       : ops::CausalConv2d(x, g.Param(b.kernel), g.Param(b.bias));
  y = ops::Glu(y);
  ops::BatchStatistics stats;
  Var out = ops::BatchNorm(y, g.Param(b.bn_gamma), g.Param(b.bn_beta), b.running_mean,
                           b.running_var, opt.bn_mode, 1e-5, opt.observed ? &stats : nullptr);
  if (opt.observed && opt.bn_mode == ops::BatchNormMode::kBatchStatistics) {
    opt.observed->push_back(std::move(stats));
  }
  return out;
}

void RequireFeatureMap(Var x, std::size_t channels, const char* what) {
  if (x.shape().size() != 4 || x.shape()[0] != 1 || x.shape()[1] != channels) {
    FailUsage(std::string(what) + ": expected [1, " + std::to_string(channels) +
              ", t, f], got " + ShapeString(x.shape()));
  }
}

}  // namespace

Var AlignFeatures(Graph& g, ScaCrnModel& m, Var l, Var f, const ForwardOptions& opt) {
  if (l.shape() != f.shape()) {
    FailUsage("align: near/far projection shapes differ " + ShapeString(l.shape()) + " vs " +
              ShapeString(f.shape()));
  }
  const ModelConfig& c = m.config();
  if (c.attention == AttentionMode::kNone) return ops::Concat({l, f}, 2);
  CrossAttendOptions ao;
  ao.query_residual = c.query_residual;
  ao.weights_out = opt.attention_weights;
  if (c.attention == AttentionMode::kNca) return ScaForward(g, m.sca_lf, m.sca_fl, l, f, nullptr, ao);
  const StreamingMask mask = BuildStreamingMask(l.shape()[1], c.lookahead, c.history);
  return ScaForward(g, m.sca_lf, m.sca_fl, l, f, &mask, ao);
}

EncoderOutput Encode(Graph& g, ScaCrnModel& m, Var x, const ForwardOptions& opt) {
  RequireFeatureMap(x, 2, "encode");
  const std::size_t fdim = x.shape()[3];
  if (fdim < 8 || fdim % 8 != 0) {
    FailUsage("encode: insufficient feature extent " + std::to_string(fdim) +
              " for three stride-2 halvings");
  }
  EncoderOutput out;
  for (std::size_t k = 0; k < 3; ++k) {
    x = BlockForward(g, m.encoder[k], x, opt);
    out.skips[k] = x;
  }
  out.bottleneck = x;
  return out;
}

Var RecurrentForward(Graph& g, ScaCrnModel& m, Var b) {
  const ModelConfig& c = m.config();
  RequireFeatureMap(b, c.encoder_channels[2], "recurrent");
  const std::size_t ch = b.shape()[1], t = b.shape()[2], fp = b.shape()[3];
  if (ch * fp != c.recurrent_dim()) FailUsage("recurrent: bottleneck extent mismatch");
  Var seq = ops::Reshape(ops::Transpose01(ops::Reshape(b, {ch, t, fp})), {t, ch * fp});
  Var h = ops::LstmSequence(seq, g.Param(m.lstm_w_ih), g.Param(m.lstm_w_hh), g.Param(m.lstm_bias));
  Var r = ops::Linear(h, g.Param(m.rec_out_w), g.Param(m.rec_out_b));
  return ops::Reshape(ops::Transpose01(ops::Reshape(r, {t, ch, fp})), {1, ch, t, fp});
}

Var Decode(Graph& g, ScaCrnModel& m, Var bottleneck, const std::array<Var, 3>& skips,
           const ForwardOptions& opt) {
  Var y = bottleneck;
  for (std::size_t k = 0; k < 3; ++k) {
    const Var& skip = skips[2 - k];
    const Shape& ys = y.shape();
    const Shape& ss = skip.shape();
    if (ys.size() != 4 || ss.size() != 4 || ys[0] != ss[0] || ys[2] != ss[2] || ys[3] != ss[3]) {
      FailUsage("decode: skip " + std::to_string(2 - k) + " shape " + ShapeString(ss) +
                " does not match decoder input " + ShapeString(ys));
    }
    Var x = ops::Concat({y, skip}, 1);
    if (x.shape()[1] != m.decoder[k].c_in) {
      FailUsage("decode: block " + std::to_string(k) + " expects " +
                std::to_string(m.decoder[k].c_in) + " channels, got " +
                std::to_string(x.shape()[1]));
    }
    y = BlockForward(g, m.decoder[k], x, opt);
  }
  return y;
}

Var MaskHead(Graph& g, ScaCrnModel& m, Var decoded) {
  RequireFeatureMap(decoded, 2, "mask head");
  const std::size_t t = decoded.shape()[2], fd = decoded.shape()[3];
  Var raw = ops::Linear(ops::Reshape(decoded, {2 * t, fd}), g.Param(m.out_w), g.Param(m.out_b));
  raw = ops::Reshape(raw, {2, t, m.config().bins()});
  return ops::ComplexGate(raw, m.config().mask_bound);
}

ModelOutput ModelForward(Graph& g, ScaCrnModel& m, Var mic, Var far, const ForwardOptions& opt) {
  const std::size_t F = m.config().bins();
  for (Var v : {mic, far}) {
    if (v.shape().size() != 3 || v.shape()[0] != 2 || v.shape()[2] != F) {
      FailUsage("model: expected spectrogram planes [2, t, " + std::to_string(F) + "], got " +
                ShapeString(v.shape()));
    }
  }
  if (mic.shape()[1] != far.shape()[1]) {
    FailData("model: frame-count mismatch, mic " + std::to_string(mic.shape()[1]) + " vs far " +
             std::to_string(far.shape()[1]));
  }
  const std::size_t t = mic.shape()[1];
  ModelOutput out;
  Var l = Project(g, m.proj_near, mic);
  Var f = Project(g, m.proj_far, far);
  out.features = AlignFeatures(g, m, l, f, opt);
  Var x = ops::Reshape(out.features, {1, 2, t, m.config().feature_dim()});
  EncoderOutput enc = Encode(g, m, x, opt);
  Var r = RecurrentForward(g, m, enc.bottleneck);
  Var y = Decode(g, m, r, enc.skips, opt);
  out.mask = opt.zero_mask ? g.Constant(Tensor({2, t, F})) : MaskHead(g, m, y);
  out.enhanced = ops::ComplexMul(out.mask, mic);
  return out;
}

Spectrogram EnhanceSpectrogram(ScaCrnModel& m, const Spectrogram& mic, const Spectrogram& far,
                               bool zero_mask) {
  if (!mic.config.SameFraming(m.config().stft) || !far.config.SameFraming(m.config().stft)) {
    FailUsage("enhance: spectrogram framing does not match the model");
  }
  Graph g(false);
  ForwardOptions opt;
  opt.zero_mask = zero_mask;
  ModelOutput out = ModelForward(g, m, g.Constant(mic.Planes()), g.Constant(far.Planes()), opt);
  return Spectrogram::FromPlanes(out.enhanced.value(), mic.config);
}

// ---------------------------------------------------------------------------
// streaming

namespace {

Tensor FrameTensor(const SpectralFrame& fr) {
  const std::size_t F = fr.re.size();
  Tensor t({2, 1, F});
  std::copy(fr.re.begin(), fr.re.end(), t.ptr());
  std::copy(fr.im.begin(), fr.im.end(), t.ptr() + F);
  return t;
}

Parameter& Mut(const Parameter& p) { return const_cast<Parameter&>(p); }

}  // namespace

StreamingModel::StreamingModel(const ScaCrnModel& m, bool zero_mask) : m_(&m), zero_mask_(zero_mask) {
  const ModelConfig& c = m.config();
  if (m.has_attention()) {
    const bool masked = c.attention == AttentionMode::kSca;
    const std::size_t la = masked ? c.lookahead : kUnbounded;
    const std::size_t hist = masked ? c.history : kUnbounded;
    lf_stream_.emplace(m.sca_lf, 2, la, hist, masked, c.query_residual);
    fl_stream_.emplace(m.sca_fl, 2, la, hist, masked, c.query_residual);
  }
  lstm_.h.assign(c.lstm_hidden, 0.0);
  lstm_.c.assign(c.lstm_hidden, 0.0);
}

std::vector<SpectralFrame> StreamingModel::Push(const SpectralFrame& mic, const SpectralFrame& far) {
  const std::size_t F = m_->config().bins();
  if (mic.re.size() != F || mic.im.size() != F || far.re.size() != F || far.im.size() != F) {
    FailUsage("streaming model: frame bin count mismatch");
  }
  mic_queue_.push_back(mic);
  Graph g(false);
  ScaCrnModel& m = const_cast<ScaCrnModel&>(*m_);
  const std::size_t d = m.config().d;
  Tensor l = Project(g, m.proj_near, g.Constant(FrameTensor(mic))).value().Reshaped({2, d});
  Tensor f = Project(g, m.proj_far, g.Constant(FrameTensor(far))).value().Reshaped({2, d});
  if (!m.has_attention()) {
    Graph g2(false);
    Tensor cat = ops::Concat({g2.Constant(l), g2.Constant(f)}, 1).value();
    return Drain({std::move(cat)}, {});
  }
  return Drain(lf_stream_->Push(f, l), fl_stream_->Push(l, f));
}

std::vector<SpectralFrame> StreamingModel::Flush() {
  if (!m_->has_attention()) return {};
  return Drain(lf_stream_->Flush(), fl_stream_->Flush());
}

std::vector<SpectralFrame> StreamingModel::Drain(std::vector<Tensor> lf, std::vector<Tensor> fl) {
  for (Tensor& t : lf) lf_ready_.push_back(std::move(t));
  for (Tensor& t : fl) fl_ready_.push_back(std::move(t));
  std::vector<SpectralFrame> out;
  const bool paired = m_->has_attention();
  while (!lf_ready_.empty() && (!paired || !fl_ready_.empty())) {
    Tensor features;
    if (paired) {
      Graph g(false);
      features = ops::Concat({g.Constant(lf_ready_.front()), g.Constant(fl_ready_.front())}, 1).value();
      fl_ready_.pop_front();
    } else {
      features = lf_ready_.front();
    }
    lf_ready_.pop_front();
    out.push_back(Process(features));
  }
  return out;
}

Tensor StreamingModel::ConvStep(const GatedConvBlock& b, std::optional<Tensor>& prev,
                                const Tensor& x) const {
  Graph g(false);
  Tensor before = prev ? *prev : Tensor(x.shape());
  Var in = ops::Concat({g.Constant(before), g.Constant(x)}, 2);
  Var y = b.transposed ? ops::CausalConvTranspose2d(in, g.Param(Mut(b.kernel)), g.Param(Mut(b.bias)))
                       : ops::CausalConv2d(in, g.Param(Mut(b.kernel)), g.Param(Mut(b.bias)));
  y = ops::Glu(ops::Slice(y, 2, 1, 1));
  y = ops::BatchNorm(y, g.Param(Mut(b.bn_gamma)), g.Param(Mut(b.bn_beta)), b.running_mean,
                     b.running_var, ops::BatchNormMode::kFrozen);
  prev = x;
  return y.value();
}

SpectralFrame StreamingModel::Process(const Tensor& features) {
  const ModelConfig& c = m_->config();
  ScaCrnModel& m = const_cast<ScaCrnModel&>(*m_);
  const std::size_t F = c.bins();
  SpectralFrame mic = std::move(mic_queue_.front());
  mic_queue_.pop_front();

  Tensor x = features.Reshaped({1, 2, 1, c.feature_dim()});
  std::array<Tensor, 3> skips;
  for (std::size_t k = 0; k < 3; ++k) {
    x = ConvStep(m.encoder[k], enc_prev_[k], x);
    skips[k] = x;
  }
  const std::size_t ch = x.dim(1), fp = x.dim(3);
  ops::LstmState next;
  ops::LstmStep(x.ptr(), lstm_, m.lstm_w_ih.value, m.lstm_w_hh.value, m.lstm_bias.value, next);
  lstm_ = std::move(next);

  Graph g(false);
  Tensor h({1, c.lstm_hidden}, lstm_.h);
  Tensor r = ops::Linear(g.Constant(std::move(h)), g.Param(m.rec_out_w), g.Param(m.rec_out_b))
                 .value()
                 .Reshaped({1, ch, 1, fp});
  Tensor y = r;
  for (std::size_t k = 0; k < 3; ++k) {
    Graph gc(false);
    Tensor in = ops::Concat({gc.Constant(y), gc.Constant(skips[2 - k])}, 1).value();
    y = ConvStep(m.decoder[k], dec_prev_[k], in);
  }

  Tensor mic_t = FrameTensor(mic);
  Tensor enhanced;
  Graph gm(false);
  if (zero_mask_) {
    enhanced = ops::ComplexMul(gm.Constant(Tensor({2, 1, F})), gm.Constant(mic_t)).value();
  } else {
    Var mask = MaskHead(gm, m, gm.Constant(y));
    enhanced = ops::ComplexMul(mask, gm.Constant(mic_t)).value();
  }
  SpectralFrame out;
  out.re.assign(enhanced.ptr(), enhanced.ptr() + F);
  out.im.assign(enhanced.ptr() + F, enhanced.ptr() + 2 * F);
  return out;
}

}  // namespace sca_aec
