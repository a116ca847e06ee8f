#pragma once

// Sample-domain echo cancellation around ScaCrnModel. Both paths prepend
// window_len - hop zeros and pad the end so that every input sample is covered
// by full overlap-add; outputs have the input length.

#include <vector>

#include "sca_aec/audio.h"
#include "sca_aec/model.h"

namespace sca_aec {

// Zero padding applied before analysis: front and total padded length.
std::size_t AnalysisFrontPad(const StftConfig& cfg);
std::vector<double> PadForAnalysis(const std::vector<double>& x, const StftConfig& cfg);

// Offline enhancement; mic and far must have equal length.
std::vector<double> EnhanceOffline(ScaCrnModel& m, const std::vector<double>& mic,
                                   const std::vector<double>& far, bool zero_mask = false);

class StreamingEnhancer {
 public:
  explicit StreamingEnhancer(const ScaCrnModel& m, bool zero_mask = false);
  // Equal-length chunks of both signals; returns any finished output samples.
  std::vector<double> Push(const double* mic, const double* far, std::size_t n);
  std::vector<double> Push(const std::vector<double>& mic, const std::vector<double>& far);
  // Drains the pipeline; total output then equals total input length.
  std::vector<double> Flush();

 private:
  void Emit(const std::vector<SpectralFrame>& frames, std::vector<double>& out);
  void Deliver(const std::vector<double>& samples, std::vector<double>& out);

  StftConfig cfg_;
  StreamingStft mic_stft_, far_stft_;
  StreamingModel model_;
  StreamingIstft istft_;
  std::size_t consumed_ = 0;   // input samples pushed
  std::size_t produced_ = 0;   // output samples delivered
  std::size_t skip_ = 0;       // leading synthesized samples still to drop
  bool flushed_ = false;
};

}  // namespace sca_aec
