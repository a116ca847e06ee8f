#pragma once

#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sca_aec/autograd.h"
#include "sca_aec/ops.h"

namespace sca_aec {

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

// allow[i, j] <=> i - history < j <= i + lookahead. kUnbounded lookahead is
// the non-streaming (NCA) setting; it also lifts the history bound.
struct StreamingMask {
  std::size_t frames = 0;
  std::size_t lookahead = 0;
  std::size_t history = kUnbounded;

  bool allowed(std::size_t i, std::size_t j) const {
    if (lookahead != kUnbounded && j > i + lookahead) return false;
    if (history != kUnbounded && j + history <= i) return false;
    return true;
  }
  std::shared_ptr<const ops::AttentionMask> Matrix() const;
};

StreamingMask BuildStreamingMask(std::size_t frames, std::size_t lookahead,
                                 std::size_t history = kUnbounded);

class CrossAttentionModule {
 public:
  CrossAttentionModule() = default;
  // d_ff = 0 selects 4 d.
  CrossAttentionModule(const std::string& name, std::size_t d, std::size_t heads,
                       std::size_t d_ff = 0);

  std::size_t dim() const { return d_; }
  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return d_ / heads_; }
  std::size_t ffn_dim() const { return ffn1_w.value.dim(1); }

  std::vector<Parameter*> Parameters();
  void Initialize(std::mt19937_64& rng);

  Parameter ln_q_gain, ln_q_bias;
  Parameter ln_kv_gain, ln_kv_bias;
  std::vector<Parameter> wq, wk, wv;  // per head [d, d_h]
  Parameter wo;                       // [d, d]
  Parameter ffn1_w, ffn1_b;           // [d, d_ff], [d_ff]
  Parameter ffn2_w, ffn2_b;           // [d_ff, d], [d]
  Parameter ln_out_gain, ln_out_bias;

 private:
  std::size_t d_ = 0;
  std::size_t heads_ = 0;
};

struct CrossAttendOptions {
  // Residual from the query source instead of the key/value source.
  bool query_residual = false;
  // Receives the attention matrices, plane-major then head-major.
  std::vector<Tensor>* weights_out = nullptr;
};

// query_src, kv_src: [P, t, d] where P planes share every weight and attend
// independently. mask == nullptr runs unmasked attention.
Var CrossAttend(Graph& g, CrossAttentionModule& m, Var query_src, Var kv_src,
                const StreamingMask* mask, const CrossAttendOptions& opt = {});

// l, f: [2, t, d] projections of mic and far end. Returns [2, t, 2d] with
// features concat(a_lf, a_fl); a_lf attends from f into l, a_fl from l into f.
Var ScaForward(Graph& g, CrossAttentionModule& lf, CrossAttentionModule& fl, Var l, Var f,
               const StreamingMask* mask, const CrossAttendOptions& opt = {});

// Frame-at-a-time evaluation of CrossAttend over frozen weights. Outputs for
// frame i become available once key/value frame i + lookahead has arrived,
// or at Flush.
class CrossAttentionStream {
 public:
  CrossAttentionStream(const CrossAttentionModule& m, std::size_t planes, std::size_t lookahead,
                       std::size_t history, bool masked = true, bool query_residual = false);

  // query_frame, kv_frame: [P, d]. Returns finished output frames [P, d].
  std::vector<Tensor> Push(const Tensor& query_frame, const Tensor& kv_frame);
  std::vector<Tensor> Flush();
  std::size_t pending() const { return queries_.size(); }

 private:
  struct Query {
    std::size_t index;
    Tensor q;         // [P, d] projected, heads side by side
    Tensor residual;  // [P, d]
  };
  Tensor Finish(const Query& q) const;
  void Trim();

  const CrossAttentionModule* m_;
  std::size_t planes_;
  std::size_t lookahead_;
  std::size_t history_;
  bool masked_;
  bool query_residual_;
  Tensor wq_, wk_, wv_;  // heads concatenated, [d, d]
  std::size_t next_kv_ = 0;
  std::size_t first_kv_ = 0;  // index of keys_.front()
  std::deque<Tensor> keys_;    // [P, d]
  std::deque<Tensor> values_;  // [P, d]
  std::deque<Query> queries_;
};

}  // namespace sca_aec
