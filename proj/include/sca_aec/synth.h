#pragma once

// Synthetic stand-ins for speech and noise corpora.

#include <cstdint>
#include <random>
#include <vector>

namespace sca_aec {

// Voiced/unvoiced bursts: harmonic stacks with a gliding fundamental and
// three random formants, gaps of 50-300 ms. Normalized to `rms`.
std::vector<double> SynthSpeech(std::mt19937_64& rng, std::size_t n, double rms = 0.05);

// Gaussian noise with a first-order low-pass tilt (coefficient `tilt`).
std::vector<double> SynthNoise(std::mt19937_64& rng, std::size_t n, double rms = 0.05,
                               double tilt = 0.9);

// Deterministic stream seed from a master seed and an index (splitmix64).
std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t index);

}  // namespace sca_aec
