#include "gabornet/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "gabornet/common.hpp"

namespace gabornet {
namespace audio {

namespace {
uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 24) & 0xff));
}
void put_u16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(static_cast<uint8_t>(x & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
}
}  // namespace

std::vector<double> read_wav_mono16(const std::string& path,
                                    int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError(path + ": not a RIFF/WAVE file");

  size_t pos = 12;
  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  uint32_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* chunk = bytes.data() + pos;
    uint32_t len = read_u32(chunk + 4);
    if (pos + 8 + len > bytes.size())
      throw DataError(path + ": truncated chunk '" +
                      std::string(reinterpret_cast<const char*>(chunk), 4) +
                      "'");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw DataError(path + ": malformed fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data == nullptr)
    throw DataError(path + ": missing fmt or data chunk");
  if (format != 1) throw DataError(path + ": not PCM (format tag " +
                                   std::to_string(format) + ")");
  if (channels != 1)
    throw DataError(path + ": expected mono, has " + std::to_string(channels) +
                    " channels");
  if (static_cast<int>(rate) != expected_rate)
    throw DataError(path + ": sample rate " + std::to_string(rate) + " != " +
                    std::to_string(expected_rate));
  if (bits != 16)
    throw DataError(path + ": expected 16-bit samples, has " +
                    std::to_string(bits));

  const size_t n = data_len / 2;
  std::vector<double> samples(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t s = static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    samples[i] = static_cast<double>(s) / 32768.0;
  }
  return samples;
}

void write_wav_mono16(const std::string& path,
                      const std::vector<double>& samples, int sample_rate) {
  std::vector<uint8_t> out;
  const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(sample_rate));
  put_u32(out, static_cast<uint32_t>(sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (double v : samples) {
    long s = std::lround(v * 32768.0);
    s = std::min(32767L, std::max(-32768L, s));
    out.push_back(static_cast<uint8_t>(s & 0xff));
    out.push_back(static_cast<uint8_t>((s >> 8) & 0xff));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write audio file " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to " + path);
}

}  // namespace audio
}  // namespace gabornet
