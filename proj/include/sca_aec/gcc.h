#pragma once

// Generalized cross-correlation delay estimation. A positive delay means the
// microphone lags the far end: mic[n] ~ far[n - delay].

#include <optional>
#include <vector>

namespace sca_aec {

enum class GccWeighting { kPhat, kNone };

struct GccConfig {
  GccWeighting weighting = GccWeighting::kPhat;
  // Streaming update hop. Each update correlates the latest
  // block_len + 2 * max_delay samples of both signals.
  std::size_t block_len = 4096;
  long max_delay = 28800;
  double smoothing = 0.9;  // cross-spectrum recursion factor
  double epsilon = 1e-12;  // PHAT magnitude guard

  void Validate() const;
  std::size_t span() const { return block_len + 2 * static_cast<std::size_t>(max_delay); }
};

struct DelayEstimate {
  long delay_samples = 0;
  double confidence = 0.0;  // main peak over the largest value outside its +-1 neighbourhood
};

// Whole-clip estimate. Requires both clips >= 2 * max_delay samples and
// non-silent.
DelayEstimate GlobalGccDelay(const std::vector<double>& mic, const std::vector<double>& far,
                             const GccConfig& cfg = {});

class StreamingGcc {
 public:
  explicit StreamingGcc(const GccConfig& cfg = {});

  // Chunks must have equal length. Returns one estimate per block completed
  // by this chunk. Blocks where either side is silent leave the smoothed
  // state and the estimate untouched.
  std::vector<DelayEstimate> Push(const double* mic, const double* far, std::size_t n);
  std::vector<DelayEstimate> Push(const std::vector<double>& mic, const std::vector<double>& far);

  const std::optional<DelayEstimate>& current() const { return current_; }
  std::size_t blocks() const { return blocks_; }

 private:
  void Update();

  GccConfig cfg_;
  std::size_t fft_len_;
  std::vector<double> mic_hist_, far_hist_;  // last span() samples, oldest first
  std::vector<double> sre_, sim_;            // smoothed cross-spectrum
  bool primed_ = false;
  std::size_t pending_ = 0;
  std::size_t blocks_ = 0;
  std::optional<DelayEstimate> current_;
};

// Delays far by `delay` samples (advances when negative), zero fill, same length.
std::vector<double> AlignByShift(const std::vector<double>& far, long delay);

}  // namespace sca_aec
