// PCM16 mono WAV reading/writing, the only audio container the tool uses.
#pragma once

#include <string>
#include <vector>

namespace gabornet {
namespace audio {

// Reads a 16-bit PCM mono WAV at the expected rate; samples scaled to
// [-1, 1] by 1/32768. Any deviation raises DataError naming the offender.
std::vector<double> read_wav_mono16(const std::string& path,
                                    int expected_rate = 16000);

void write_wav_mono16(const std::string& path,
                      const std::vector<double>& samples,
                      int sample_rate = 16000);

}  // namespace audio
}  // namespace gabornet
