#pragma once

#include <string>
#include <vector>

namespace sca_aec {

inline constexpr int kSampleRate = 48000;

struct AudioClip {
  std::vector<double> samples;  // full scale is +-1
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

enum class WavEncoding { kPcm16, kFloat32 };

// Reads a mono 48 kHz PCM16 or IEEE-float32 WAV. Any other layout is a data
// error; nothing is resampled.
AudioClip ReadWav(const std::string& path);
void WriteWav(const std::string& path, const AudioClip& clip,
              WavEncoding encoding = WavEncoding::kFloat32);

// Throws a data error unless the rate is 48 kHz and all samples are finite.
void RequirePipelineClip(const AudioClip& clip, const std::string& what);

double Energy(const std::vector<double>& x);

}  // namespace sca_aec
