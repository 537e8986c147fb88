#include "remix/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "remix/types.hpp"

namespace remix {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p) {
  T v = 0;
  std::memcpy(&v, p, sizeof(T));
  return v;  // little-endian host assumed
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

std::int32_t sign_extend_24(std::uint32_t raw) {
  if (raw & 0x800000u) raw |= 0xFF000000u;
  return static_cast<std::int32_t>(raw);
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ConfigError("cannot open WAV file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ConfigError("not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = read_le<std::uint32_t>(bytes.data() + pos + 4);
    const std::uint8_t* body = bytes.data() + pos + 8;
    if (pos + 8 + len > bytes.size()) throw ConfigError("truncated WAV chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw ConfigError("malformed fmt chunk in " + path);
      format = read_le<std::uint16_t>(body + 0);
      channels = read_le<std::uint16_t>(body + 2);
      rate = read_le<std::uint32_t>(body + 4);
      bits = read_le<std::uint16_t>(body + 14);
      if (format == kFormatExtensible && len >= 26)
        format = read_le<std::uint16_t>(body + 24);  // sub-format GUID leading word
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);  // chunks are word-aligned
  }
  if (channels == 0 || rate == 0 || data == nullptr)
    throw ConfigError("missing fmt/data chunk in " + path);

  WavFormat wf;
  if (format == kFormatPcm && bits == 16)
    wf = WavFormat::Pcm16;
  else if (format == kFormatPcm && bits == 24)
    wf = WavFormat::Pcm24;
  else if (format == kFormatFloat && bits == 32)
    wf = WavFormat::Float32;
  else
    throw ConfigError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bit) in " + path);

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data_len / (bytes_per_sample * channels);

  WavData out;
  out.sample_rate_hz = static_cast<double>(rate);
  out.format = wf;
  out.samples.resize(channels, static_cast<Eigen::Index>(frames));
  const std::uint8_t* p = data;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      double v;
      switch (wf) {
        case WavFormat::Pcm16:
          v = read_le<std::int16_t>(p) / 32768.0;
          break;
        case WavFormat::Pcm24: {
          std::uint32_t raw = p[0] | (p[1] << 8) | (p[2] << 16);
          v = sign_extend_24(raw) / 8388608.0;
          break;
        }
        case WavFormat::Float32:
        default:
          v = read_le<float>(p);
          break;
      }
      out.samples(c, static_cast<Eigen::Index>(t)) = v;
      p += bytes_per_sample;
    }
  }
  return out;
}

void write_wav(const std::string& path, const WavData& data) {
  const auto channels = static_cast<std::uint16_t>(data.channels());
  const auto frames = static_cast<std::size_t>(data.frames());
  if (channels == 0) throw ConfigError("write_wav: no channels");

  std::uint16_t bits, fmt;
  switch (data.format) {
    case WavFormat::Pcm16:
      bits = 16;
      fmt = kFormatPcm;
      break;
    case WavFormat::Pcm24:
      bits = 24;
      fmt = kFormatPcm;
      break;
    case WavFormat::Float32:
    default:
      bits = 32;
      fmt = kFormatFloat;
      break;
  }
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(data.sample_rate_hz));
  const std::uint32_t block_align = channels * bits / 8;
  const std::uint32_t data_len = static_cast<std::uint32_t>(frames * block_align);

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  append_le<std::uint32_t>(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  append_le<std::uint32_t>(out, 16);
  append_le<std::uint16_t>(out, fmt);
  append_le<std::uint16_t>(out, channels);
  append_le<std::uint32_t>(out, rate);
  append_le<std::uint32_t>(out, rate * block_align);
  append_le<std::uint16_t>(out, static_cast<std::uint16_t>(block_align));
  append_le<std::uint16_t>(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  append_le<std::uint32_t>(out, data_len);

  for (std::size_t t = 0; t < frames; ++t) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const double v = data.samples(c, static_cast<Eigen::Index>(t));
      switch (data.format) {
        case WavFormat::Pcm16: {
          const double clamped = std::clamp(v, -1.0, 32767.0 / 32768.0);
          append_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(clamped * 32768.0)));
          break;
        }
        case WavFormat::Pcm24: {
          const double clamped = std::clamp(v, -1.0, 8388607.0 / 8388608.0);
          const auto s = static_cast<std::int32_t>(std::lround(clamped * 8388608.0));
          out.push_back(static_cast<std::uint8_t>(s & 0xFF));
          out.push_back(static_cast<std::uint8_t>((s >> 8) & 0xFF));
          out.push_back(static_cast<std::uint8_t>((s >> 16) & 0xFF));
          break;
        }
        case WavFormat::Float32:
        default:
          append_le<float>(out, static_cast<float>(v));
          break;
      }
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw ConfigError("cannot write WAV file: " + path);
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw ConfigError("short write to WAV file: " + path);
}

}  // namespace remix
