#include "sca_aec/attention.h"

#include <algorithm>
#include <cmath>

#include "init.h"
#include "kernels.h"
#include "sca_aec/error.h"

namespace sca_aec {

std::shared_ptr<const ops::AttentionMask> StreamingMask::Matrix() const {
  auto m = std::make_shared<ops::AttentionMask>();
  m->rows = frames;
  m->cols = frames;
  m->allow.resize(frames * frames);
  for (std::size_t i = 0; i < frames; ++i)
    for (std::size_t j = 0; j < frames; ++j) m->allow[i * frames + j] = allowed(i, j) ? 1 : 0;
  return m;
}

StreamingMask BuildStreamingMask(std::size_t frames, std::size_t lookahead, std::size_t history) {
  if (frames == 0) FailUsage("streaming mask: need at least one frame");
  if (history == 0) FailUsage("streaming mask: history must be positive");
  StreamingMask m;
  m.frames = frames;
  m.lookahead = lookahead;
  m.history = lookahead == kUnbounded ? kUnbounded : history;
  return m;
}

CrossAttentionModule::CrossAttentionModule(const std::string& name, std::size_t d,
                                           std::size_t heads, std::size_t d_ff)
    : d_(d), heads_(heads) {
  if (heads == 0 || d == 0 || d % heads != 0) {
    FailUsage("cross attention: d = " + std::to_string(d) + " is not divisible by " +
              std::to_string(heads) + " heads");
  }
  if (d_ff == 0) d_ff = 4 * d;
  const std::size_t dh = d / heads;
  ln_q_gain = MakeParam(name + ".ln_q.gain", {d}, 1.0);
  ln_q_bias = MakeParam(name + ".ln_q.bias", {d});
  ln_kv_gain = MakeParam(name + ".ln_kv.gain", {d}, 1.0);
  ln_kv_bias = MakeParam(name + ".ln_kv.bias", {d});
  for (std::size_t h = 0; h < heads; ++h) {
    wq.push_back(MakeParam(name + ".wq.head" + std::to_string(h), {d, dh}));
    wk.push_back(MakeParam(name + ".wk.head" + std::to_string(h), {d, dh}));
    wv.push_back(MakeParam(name + ".wv.head" + std::to_string(h), {d, dh}));
  }
  wo = MakeParam(name + ".wo", {d, d});
  ffn1_w = MakeParam(name + ".ffn1.weight", {d, d_ff});
  ffn1_b = MakeParam(name + ".ffn1.bias", {d_ff});
  ffn2_w = MakeParam(name + ".ffn2.weight", {d_ff, d});
  ffn2_b = MakeParam(name + ".ffn2.bias", {d});
  ln_out_gain = MakeParam(name + ".ln_out.gain", {d}, 1.0);
  ln_out_bias = MakeParam(name + ".ln_out.bias", {d});
}

std::vector<Parameter*> CrossAttentionModule::Parameters() {
  std::vector<Parameter*> out{&ln_q_gain, &ln_q_bias, &ln_kv_gain, &ln_kv_bias};
  for (auto& p : wq) out.push_back(&p);
  for (auto& p : wk) out.push_back(&p);
  for (auto& p : wv) out.push_back(&p);
  for (Parameter* p : {&wo, &ffn1_w, &ffn1_b, &ffn2_w, &ffn2_b, &ln_out_gain, &ln_out_bias})
    out.push_back(p);
  return out;
}

void CrossAttentionModule::Initialize(std::mt19937_64& rng) {
  for (auto* group : {&wq, &wk, &wv})
    for (Parameter& p : *group) UniformInit(p, d_, rng);
  UniformInit(wo, d_, rng);
  UniformInit(ffn1_w, d_, rng);
  UniformInit(ffn2_w, ffn1_w.value.dim(1), rng);
}

namespace {

Var HeadsConcat(Graph& g, std::vector<Parameter>& heads) {
  std::vector<Var> parts;
  for (Parameter& p : heads) parts.push_back(g.Param(p));
  return parts.size() == 1 ? parts[0] : ops::Concat(parts, 1);
}

Tensor HeadsConcat(const std::vector<Parameter>& heads) {
  const std::size_t d = heads[0].value.dim(0), dh = heads[0].value.dim(1);
  Tensor out({d, dh * heads.size()});
  for (std::size_t h = 0; h < heads.size(); ++h)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < dh; ++c) out.at(r, h * dh + c) = heads[h].value.at(r, c);
  return out;
}

}  // namespace

Var CrossAttend(Graph& g, CrossAttentionModule& m, Var query_src, Var kv_src,
                const StreamingMask* mask, const CrossAttendOptions& opt) {
  const Shape& qs = query_src.shape();
  if (qs.size() != 3 || qs != kv_src.shape() || qs[2] != m.dim()) {
    FailUsage("cross attention: query " + ShapeString(qs) + " and key/value " +
              ShapeString(kv_src.shape()) + " must both be [P, t, " +
              std::to_string(m.dim()) + "]");
  }
  const std::size_t planes = qs[0], t = qs[1], d = qs[2];
  const std::size_t nh = m.heads(), dh = m.head_dim();
  std::shared_ptr<const ops::AttentionMask> matrix;
  if (mask != nullptr) {
    if (mask->frames != t) FailUsage("cross attention: mask frame count mismatch");
    matrix = mask->Matrix();
  }
  Var qflat = ops::Reshape(query_src, {planes * t, d});
  Var kvflat = ops::Reshape(kv_src, {planes * t, d});
  Var qn = ops::LayerNorm(qflat, g.Param(m.ln_q_gain), g.Param(m.ln_q_bias));
  Var kvn = ops::LayerNorm(kvflat, g.Param(m.ln_kv_gain), g.Param(m.ln_kv_bias));
  Var q = ops::MatMul(qn, HeadsConcat(g, m.wq));
  Var k = ops::MatMul(kvn, HeadsConcat(g, m.wk));
  Var v = ops::MatMul(kvn, HeadsConcat(g, m.wv));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> plane_out;
  for (std::size_t p = 0; p < planes; ++p) {
    Var qp = ops::Slice(q, 0, p * t, t);
    Var kp = ops::Slice(k, 0, p * t, t);
    Var vp = ops::Slice(v, 0, p * t, t);
    std::vector<Var> head_out;
    for (std::size_t h = 0; h < nh; ++h) {
      Var qh = nh == 1 ? qp : ops::Slice(qp, 1, h * dh, dh);
      Var kh = nh == 1 ? kp : ops::Slice(kp, 1, h * dh, dh);
      Var vh = nh == 1 ? vp : ops::Slice(vp, 1, h * dh, dh);
      Var logits = ops::Scale(ops::MatMulNT(qh, kh), scale);
      Var w = matrix ? ops::MaskedSoftmax(logits, matrix) : ops::Softmax(logits);
      if (opt.weights_out) opt.weights_out->push_back(w.value());
      head_out.push_back(ops::MatMul(w, vh));
    }
    plane_out.push_back(nh == 1 ? head_out[0] : ops::Concat(head_out, 1));
  }
  Var heads = planes == 1 ? plane_out[0] : ops::Concat(plane_out, 0);
  Var mha = ops::MatMul(heads, g.Param(m.wo));
  Var res = ops::Add(opt.query_residual ? qflat : kvflat, mha);
  Var hidden = ops::Relu(ops::Linear(res, g.Param(m.ffn1_w), g.Param(m.ffn1_b)));
  Var ffn = ops::Linear(hidden, g.Param(m.ffn2_w), g.Param(m.ffn2_b));
  Var out = ops::LayerNorm(ffn, g.Param(m.ln_out_gain), g.Param(m.ln_out_bias));
  return ops::Reshape(out, {planes, t, d});
}

Var ScaForward(Graph& g, CrossAttentionModule& lf, CrossAttentionModule& fl, Var l, Var f,
               const StreamingMask* mask, const CrossAttendOptions& opt) {
  if (l.shape() != f.shape() || l.shape().size() != 3 || l.shape()[0] != 2) {
    FailUsage("sca: near " + ShapeString(l.shape()) + " and far " + ShapeString(f.shape()) +
              " must both be [2, t, d]");
  }
  Var a_lf = CrossAttend(g, lf, f, l, mask, opt);
  Var a_fl = CrossAttend(g, fl, l, f, mask, opt);
  return ops::Concat({a_lf, a_fl}, 2);
}

// ---------------------------------------------------------------------------

CrossAttentionStream::CrossAttentionStream(const CrossAttentionModule& m, std::size_t planes,
                                           std::size_t lookahead, std::size_t history,
                                           bool masked, bool query_residual)
    : m_(&m),
      planes_(planes),
      lookahead_(masked ? lookahead : kUnbounded),
      history_(masked && lookahead != kUnbounded ? history : kUnbounded),
      masked_(masked),
      query_residual_(query_residual),
      wq_(HeadsConcat(m.wq)),
      wk_(HeadsConcat(m.wk)),
      wv_(HeadsConcat(m.wv)) {
  if (history_ == 0) FailUsage("attention stream: history must be positive");
}

std::vector<Tensor> CrossAttentionStream::Push(const Tensor& query_frame, const Tensor& kv_frame) {
  const std::size_t d = m_->dim();
  if (query_frame.shape() != Shape{planes_, d} || kv_frame.shape() != Shape{planes_, d}) {
    FailUsage("attention stream: frames must be [P, d]");
  }
  Graph g(false);
  Var qn = ops::LayerNorm(g.Constant(query_frame), g.Constant(m_->ln_q_gain.value),
                          g.Constant(m_->ln_q_bias.value));
  Var kvn = ops::LayerNorm(g.Constant(kv_frame), g.Constant(m_->ln_kv_gain.value),
                           g.Constant(m_->ln_kv_bias.value));
  Tensor q({planes_, d}), k({planes_, d}), v({planes_, d});
  kernels::GemmNN(qn.value().ptr(), wq_.ptr(), q.ptr(), planes_, d, d, false);
  kernels::GemmNN(kvn.value().ptr(), wk_.ptr(), k.ptr(), planes_, d, d, false);
  kernels::GemmNN(kvn.value().ptr(), wv_.ptr(), v.ptr(), planes_, d, d, false);
  keys_.push_back(std::move(k));
  values_.push_back(std::move(v));
  const std::size_t index = next_kv_++;
  queries_.push_back(Query{index, std::move(q), query_residual_ ? query_frame : kv_frame});

  std::vector<Tensor> done;
  const std::size_t newest = next_kv_ - 1;
  while (!queries_.empty() &&
         (lookahead_ != kUnbounded && queries_.front().index + lookahead_ <= newest)) {
    done.push_back(Finish(queries_.front()));
    queries_.pop_front();
  }
  Trim();
  return done;
}

std::vector<Tensor> CrossAttentionStream::Flush() {
  std::vector<Tensor> done;
  while (!queries_.empty()) {
    done.push_back(Finish(queries_.front()));
    queries_.pop_front();
  }
  Trim();
  return done;
}

void CrossAttentionStream::Trim() {
  if (history_ == kUnbounded) return;
  // the oldest key any future query can reach
  const std::size_t oldest_query = queries_.empty() ? next_kv_ : queries_.front().index;
  const std::size_t keep_from = oldest_query + 1 > history_ ? oldest_query + 1 - history_ : 0;
  while (first_kv_ < keep_from && !keys_.empty()) {
    keys_.pop_front();
    values_.pop_front();
    ++first_kv_;
  }
}

Tensor CrossAttentionStream::Finish(const Query& query) const {
  const std::size_t d = m_->dim(), nh = m_->heads(), dh = m_->head_dim();
  const std::size_t i = query.index;
  const std::size_t last = next_kv_ - 1;
  std::size_t hi = last;
  if (lookahead_ != kUnbounded) hi = std::min(hi, i + lookahead_);
  std::size_t lo = first_kv_;
  if (history_ != kUnbounded && i + 1 > history_) lo = std::max(lo, i + 1 - history_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t n = hi - lo + 1;
  Tensor heads({planes_, d});
  std::vector<double> w(n);
  for (std::size_t p = 0; p < planes_; ++p) {
    for (std::size_t h = 0; h < nh; ++h) {
      const double* qv = query.q.ptr() + p * d + h * dh;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        const double* kv = keys_[lo + j - first_kv_].ptr() + p * d + h * dh;
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += qv[c] * kv[c];
        w[j] = dot * scale;
        mx = std::max(mx, w[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        w[j] = std::exp(w[j] - mx);
        total += w[j];
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < n; ++j) w[j] *= inv;
      double* out = heads.ptr() + p * d + h * dh;
      for (std::size_t j = 0; j < n; ++j) {
        const double* vv = values_[lo + j - first_kv_].ptr() + p * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) out[c] += w[j] * vv[c];
      }
    }
  }
  Graph g(false);
  Var mha = ops::MatMul(g.Constant(std::move(heads)), g.Constant(m_->wo.value));
  Var res = ops::Add(g.Constant(query.residual), mha);
  Var hidden = ops::Relu(ops::Linear(res, g.Constant(m_->ffn1_w.value), g.Constant(m_->ffn1_b.value)));
  Var ffn = ops::Linear(hidden, g.Constant(m_->ffn2_w.value), g.Constant(m_->ffn2_b.value));
  return ops::LayerNorm(ffn, g.Constant(m_->ln_out_gain.value), g.Constant(m_->ln_out_bias.value))
      .value();
}

}  // namespace sca_aec
