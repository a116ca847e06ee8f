#include "sca_aec/trainer.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "sca_aec/config_io.h"
#include "sca_aec/enhancer.h"
#include "sca_aec/error.h"
#include "sca_aec/ops.h"
#include "sca_aec/synth.h"

namespace sca_aec {

namespace {

struct ClipResult {
  LossTerms terms;
  GradientMap grads;
  std::vector<ops::BatchStatistics> observed;
};

LossVars ClipForward(Graph& g, ScaCrnModel& m, const TrainClip& clip, const LossWeights& weights,
                     const ForwardOptions& opt) {
  if (clip.mic.size() != clip.far.size() || clip.mic.size() != clip.target.size()) {
    FailData("clip " + clip.id + ": mic, far and target lengths differ");
  }
  const StftConfig& cfg = m.config().stft;
  const Var mic = g.Constant(Stft(PadForAnalysis(clip.mic, cfg), cfg).Planes());
  const Var far = g.Constant(Stft(PadForAnalysis(clip.far, cfg), cfg).Planes());
  const ModelOutput out = ModelForward(g, m, mic, far, opt);
  const Var samples = IstftOp(out.enhanced, cfg);
  const Var est = ops::Slice(samples, 0, AnalysisFrontPad(cfg), clip.mic.size());
  return AecLoss(g, est, clip.target, weights, cfg);
}

std::vector<std::size_t> EpochOrder(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(DeriveSeed(seed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

nlohmann::json HistoryJson(const std::vector<EpochStats>& h) {
  nlohmann::json rows = nlohmann::json::array();
  for (const EpochStats& e : h) {
    nlohmann::json r = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"grad_norm", e.grad_norm}};
    if (std::isfinite(e.val_loss)) r["val_loss"] = e.val_loss;
    rows.push_back(r);
  }
  return rows;
}

std::string Num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

LossTerms ClipGradients(ScaCrnModel& m, const TrainClip& clip, const LossWeights& weights,
                        GradientMap& grads, std::vector<ops::BatchStatistics>& observed) {
  Graph g;
  ForwardOptions opt;
  opt.bn_mode = ops::BatchNormMode::kBatchStatistics;
  opt.observed = &observed;
  const LossVars loss = ClipForward(g, m, clip, weights, opt);
  LossTerms terms{loss.time.value()[0], loss.spectral.value()[0]};
  if (std::isfinite(terms.total())) g.Backward(loss.total, grads);
  return terms;
}

LossTerms ClipLoss(ScaCrnModel& m, const TrainClip& clip, const LossWeights& weights) {
  Graph g(false);
  const LossVars loss = ClipForward(g, m, clip, weights, {});
  return LossTerms{loss.time.value()[0], loss.spectral.value()[0]};
}

double MeanLoss(ScaCrnModel& m, const std::vector<TrainClip>& clips, const LossWeights& weights) {
  if (clips.empty()) return std::nan("");
  double total = 0.0;
  for (const TrainClip& c : clips) total += ClipLoss(m, c, weights).total();
  return total / static_cast<double>(clips.size());
}

Trainer::Trainer(ScaCrnModel& m, const TrainConfig& cfg)
    : m_(&m), cfg_(cfg), adam_(m.Parameters(), cfg.adam), best_val_(HUGE_VAL) {
  if (cfg_.batch == 0) FailUsage("train: batch must be positive");
  if (cfg_.epochs < 0) FailUsage("train: epochs must be non-negative");
  if (cfg_.threads == 0) cfg_.threads = 1;
}

CheckpointExtras Trainer::State() const {
  CheckpointExtras ex;
  ex.metadata = {{"epoch", epoch_},
                 {"adam_steps", adam_.steps()},
                 {"best_epoch", best_epoch_},
                 {"history", HistoryJson(history_)}};
  if (std::isfinite(best_val_)) ex.metadata["best_val"] = best_val_;
  Adam& adam = const_cast<Adam&>(adam_);
  for (std::size_t i = 0; i < adam.params().size(); ++i) {
    ex.tensors.push_back({"adam.m." + adam.params()[i]->name, adam.first_moments()[i]});
    ex.tensors.push_back({"adam.v." + adam.params()[i]->name, adam.second_moments()[i]});
  }
  return ex;
}

void Trainer::Restore(const CheckpointExtras& extras) {
  const nlohmann::json& meta = extras.metadata;
  if (!meta.contains("epoch") || !meta.contains("adam_steps")) {
    FailData("checkpoint carries no training state to resume from");
  }
  epoch_ = meta["epoch"].get<int>();
  adam_.set_steps(meta["adam_steps"].get<std::size_t>());
  best_epoch_ = meta.value("best_epoch", 0);
  best_val_ = meta.contains("best_val") ? meta["best_val"].get<double>() : HUGE_VAL;
  history_.clear();
  for (const auto& r : meta.value("history", nlohmann::json::array())) {
    EpochStats e;
    e.epoch = r.at("epoch").get<int>();
    e.train_loss = r.at("train_loss").get<double>();
    e.grad_norm = r.at("grad_norm").get<double>();
    e.val_loss = r.contains("val_loss") ? r["val_loss"].get<double>() : std::nan("");
    history_.push_back(e);
  }
  std::size_t found = 0;
  for (std::size_t i = 0; i < adam_.params().size(); ++i) {
    const std::string& name = adam_.params()[i]->name;
    for (const NamedTensor& t : extras.tensors) {
      Tensor* dst = nullptr;
      if (t.name == "adam.m." + name) dst = &adam_.first_moments()[i];
      if (t.name == "adam.v." + name) dst = &adam_.second_moments()[i];
      if (!dst) continue;
      if (t.value.shape() != dst->shape()) FailData("optimizer state for " + name + " has the wrong shape");
      *dst = t.value;
      ++found;
    }
  }
  if (found != 2 * adam_.params().size()) FailData("checkpoint optimizer state is incomplete");
}

void Trainer::DumpAndAbort(const std::string& why, const std::vector<const TrainClip*>& batch,
                           double loss, double grad_norm) {
  nlohmann::json dump = {{"reason", why}, {"epoch", epoch_ + 1}, {"adam_steps", adam_.steps()}};
  dump["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(Num(loss));
  dump["grad_norm"] = std::isfinite(grad_norm) ? nlohmann::json(grad_norm) : nlohmann::json(Num(grad_norm));
  nlohmann::json clips = nlohmann::json::array();
  for (const TrainClip* c : batch) {
    auto stats = [](const std::vector<double>& x) {
      double peak = 0, e = 0;
      bool finite = true;
      for (double v : x) {
        finite = finite && std::isfinite(v);
        peak = std::max(peak, std::abs(v));
        e += v * v;
      }
      return nlohmann::json{{"samples", x.size()}, {"peak", peak}, {"energy", e}, {"finite", finite}};
    };
    clips.push_back({{"id", c->id}, {"mic", stats(c->mic)}, {"far", stats(c->far)}, {"target", stats(c->target)}});
  }
  dump["batch"] = clips;
  nlohmann::json params = nlohmann::json::object();
  for (const Parameter* p : m_->Parameters()) {
    double peak = 0;
    bool finite = true;
    for (double v : p->value.storage()) {
      finite = finite && std::isfinite(v);
      peak = std::max(peak, std::abs(v));
    }
    params[p->name] = {{"max_abs", finite ? nlohmann::json(peak) : nlohmann::json("nan")}};
  }
  dump["parameters"] = params;
  std::string where;
  if (!cfg_.out_dir.empty()) {
    std::filesystem::create_directories(cfg_.out_dir);
    where = (std::filesystem::path(cfg_.out_dir) / "nan_dump.json").string();
    WriteJsonFile(where, dump);
    where = "; diagnostics in " + where;
  }
  FailNumerical("training diverged: " + why + where);
}

EpochStats Trainer::RunEpoch(const std::vector<TrainClip>& train, const std::vector<TrainClip>& val) {
  if (train.empty()) FailData("train: no training clips");
  const auto start = std::chrono::steady_clock::now();
  const std::vector<Parameter*> params = m_->Parameters();
  const std::vector<std::size_t> order = EpochOrder(train.size(), cfg_.seed, epoch_ + 1);
  double loss_sum = 0.0, norm_sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg_.batch) {
    std::vector<const TrainClip*> batch;
    for (std::size_t i = b0; i < std::min(order.size(), b0 + cfg_.batch); ++i) batch.push_back(&train[order[i]]);
    std::vector<ClipResult> results(batch.size());
    auto work = [&](std::size_t i) {
      results[i].terms = ClipGradients(*m_, *batch[i], cfg_.loss, results[i].grads, results[i].observed);
    };
    if (cfg_.threads > 1 && batch.size() > 1) {
      for (std::size_t lo = 0; lo < batch.size(); lo += cfg_.threads) {
        std::vector<std::thread> pool;
        for (std::size_t i = lo; i < std::min(batch.size(), lo + cfg_.threads); ++i) pool.emplace_back(work, i);
        for (std::thread& t : pool) t.join();
      }
    } else {
      for (std::size_t i = 0; i < batch.size(); ++i) work(i);
    }
    m_->ZeroGrad();
    double batch_loss = 0.0;
    for (ClipResult& r : results) {  // fixed reduction order
      batch_loss += r.terms.total();
      for (Parameter* p : params) {
        auto it = r.grads.find(p);
        if (it == r.grads.end()) continue;
        for (std::size_t k = 0; k < p->grad.size(); ++k) p->grad[k] += it->second[k];
      }
      m_->UpdateBatchNormStatistics(r.observed, cfg_.bn_momentum);
    }
    const double norm = ClipGradNorm(params, cfg_.adam.clip_norm);
    if (!std::isfinite(batch_loss)) DumpAndAbort("non-finite loss", batch, batch_loss, norm);
    if (!std::isfinite(norm)) DumpAndAbort("non-finite gradient", batch, batch_loss, norm);
    adam_.Step();
    loss_sum += batch_loss;
    norm_sum += norm;
    ++batches;
  }
  m_->ZeroGrad();
  ++epoch_;
  EpochStats s;
  s.epoch = epoch_;
  s.train_loss = loss_sum / static_cast<double>(train.size());
  s.grad_norm = norm_sum / static_cast<double>(batches);
  s.val_loss = MeanLoss(*m_, val, cfg_.loss);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history_.push_back(s);
  return s;
}

std::vector<EpochStats> Trainer::Fit(const std::vector<TrainClip>& train,
                                     const std::vector<TrainClip>& val) {
  namespace fs = std::filesystem;
  if (!cfg_.out_dir.empty()) fs::create_directories(cfg_.out_dir);
  std::vector<EpochStats> ran;
  while (epoch_ < cfg_.epochs) {
    const EpochStats s = RunEpoch(train, val);
    ran.push_back(s);
    const double score = std::isfinite(s.val_loss) ? s.val_loss : s.train_loss;
    const bool improved = score < best_val_;
    if (improved) {
      best_val_ = score;
      best_epoch_ = s.epoch;
    }
    if (cfg_.verbose) {
      std::fprintf(stderr, "epoch %d train %.6g val %.6g grad %.3g (%.1fs)%s\n", s.epoch,
                   s.train_loss, s.val_loss, s.grad_norm, s.seconds, improved ? " *" : "");
    }
    if (cfg_.out_dir.empty()) continue;
    const fs::path dir(cfg_.out_dir);
    const CheckpointExtras state = State();
    SaveCheckpoint((dir / "last.ckpt").string(), *m_, state);
    if (improved) SaveCheckpoint((dir / "best.ckpt").string(), *m_, state);
    std::ofstream csv(dir / "loss.csv", std::ios::trunc);
    csv << "epoch,train_loss,val_loss,grad_norm\n";
    for (const EpochStats& e : history_) {
      csv << e.epoch << ',' << Num(e.train_loss) << ',' << Num(e.val_loss) << ',' << Num(e.grad_norm) << '\n';
    }
  }
  return ran;
}

}  // namespace sca_aec
