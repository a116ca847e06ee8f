#include "sca_aec/audio.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sca_aec/error.h"

namespace sca_aec {
namespace {

std::uint32_t U32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t U16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void PutU32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void PutU16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

AudioClip ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) FailData("cannot open WAV file: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    FailData("not a RIFF/WAVE file: " + path);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* ck = buf.data() + pos;
    const std::uint32_t len = U32(ck + 4);
    if (pos + 8 + len > buf.size()) FailData("truncated WAV chunk in " + path);
    if (std::memcmp(ck, "fmt ", 4) == 0 && len >= 16) {
      format = U16(ck + 8);
      channels = U16(ck + 10);
      rate = U32(ck + 12);
      bits = U16(ck + 22);
      if (format == 0xFFFE && len >= 26) format = U16(ck + 32);  // extensible
    } else if (std::memcmp(ck, "data", 4) == 0) {
      data = ck + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (data == nullptr || channels == 0) FailData("WAV without fmt/data chunk: " + path);
  if (channels != 1) FailData("only mono WAV is supported: " + path);
  if (rate != kSampleRate) {
    FailData("sample rate " + std::to_string(rate) + " Hz is not 48000 Hz: " + path);
  }
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    clip.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
      const auto v = static_cast<std::int16_t>(U16(data + 2 * i));
      clip.samples[i] = v / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    clip.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
      const std::uint32_t u = U32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      clip.samples[i] = f;
    }
  } else {
    FailData("unsupported WAV encoding (need PCM16 or float32): " + path);
  }
  RequirePipelineClip(clip, path);
  return clip;
}

void WriteWav(const std::string& path, const AudioClip& clip, WavEncoding encoding) {
  RequirePipelineClip(clip, path);
  const bool f32 = encoding == WavEncoding::kFloat32;
  const std::uint16_t bytes = f32 ? 4 : 2;
  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * bytes);
  std::string s;
  s.reserve(44 + data_len);
  s += "RIFF";
  PutU32(s, 36 + data_len);
  s += "WAVEfmt ";
  PutU32(s, 16);
  PutU16(s, f32 ? 3 : 1);
  PutU16(s, 1);
  PutU32(s, kSampleRate);
  PutU32(s, kSampleRate * bytes);
  PutU16(s, bytes);
  PutU16(s, bytes * 8);
  s += "data";
  PutU32(s, data_len);
  for (double v : clip.samples) {
    if (f32) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      PutU32(s, u);
    } else {
      const double c = std::clamp(v, -1.0, 32767.0 / 32768.0);
      PutU16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lrint(c * 32768.0))));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) FailData("cannot write WAV file: " + path);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void RequirePipelineClip(const AudioClip& clip, const std::string& what) {
  if (clip.sample_rate != kSampleRate) {
    FailData(what + ": sample rate " + std::to_string(clip.sample_rate) +
             " Hz, expected 48000 Hz");
  }
  for (double v : clip.samples)
    if (!std::isfinite(v)) FailData(what + ": non-finite sample");
}

double Energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace sca_aec
