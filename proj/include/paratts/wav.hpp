#pragma once

#include <filesystem>
#include <vector>

namespace paratts {

struct Waveform {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// Mono 16-bit PCM RIFF/WAVE. Samples outside [-1, 1] are clipped on write.
void write_wav(const std::filesystem::path& path, const Waveform& wav);
Waveform read_wav(const std::filesystem::path& path);

}  // namespace paratts
