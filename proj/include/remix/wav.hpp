#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace remix {

enum class WavFormat { Pcm16, Pcm24, Float32 };

struct WavData {
  // rows = channels, cols = frames
  Eigen::MatrixXd samples;
  double sample_rate_hz = 0.0;
  WavFormat format = WavFormat::Float32;

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index frames() const { return samples.cols(); }
};

// RIFF/WAVE, integer PCM 16/24-bit or IEEE float 32-bit, any channel count.
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const WavData& data);

}  // namespace remix
