#include "dpt/lfr_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>

#include "dpt/errors.hpp"

namespace dpt {

namespace {

constexpr unsigned char kMagic[4] = {0x4C, 0x46, 0x52, 0x31};
constexpr std::size_t kHeaderBytes = 4 + 5 * 4;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace

std::vector<unsigned char> encode_lfr(const LightField& lf) {
  std::vector<unsigned char> out;
  out.reserve(kHeaderBytes + lf.tensor().numel() * 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  for (std::size_t e : lf.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw FormatError("extent exceeds 32 bits");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (double v : lf.tensor().data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

LightField decode_lfr(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("LFR: truncated header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw FormatError("LFR: bad magic");
  Shape shape(5);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < 5; ++i) {
    shape[i] = get_u32(bytes.data() + 4 + 4 * i);
    if (shape[i] != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / shape[i]) {
      throw FormatError("LFR: extent product overflows");
    }
    count *= shape[i];
  }
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (count == 0) throw FormatError("LFR: zero extent");
  if (payload < count * 4) throw FormatError("LFR: truncated payload");
  if (payload > count * 4) throw FormatError("LFR: trailing bytes after payload");
  std::vector<double> data(count);
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  return LightField(Tensor::from(std::move(shape), std::move(data)));
}

void write_lfr(const std::filesystem::path& path, const LightField& lf) { write_all(path, encode_lfr(lf)); }

LightField read_lfr(const std::filesystem::path& path) { return decode_lfr(read_all(path)); }

std::vector<std::filesystem::path> export_pgm(const LightField& lf, const std::filesystem::path& dir) {
  if (lf.channels() != 1) throw DimensionError("export_pgm expects a single-channel field");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const std::size_t h = lf.height(), w = lf.width();
  for (std::size_t u = 0; u < lf.angular_u(); ++u)
    for (std::size_t v = 0; v < lf.angular_v(); ++v) {
      std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
      std::vector<unsigned char> bytes(header.begin(), header.end());
      for (double x : lf.view(u, v)) {
        const auto q = static_cast<std::uint16_t>(std::clamp<long>(std::lround(x * 65535.0), 0, 65535));
        bytes.push_back(static_cast<unsigned char>(q >> 8));
        bytes.push_back(static_cast<unsigned char>(q & 0xFF));
      }
      auto path = dir / ("sai_u" + std::to_string(u) + "_v" + std::to_string(v) + ".pgm");
      write_all(path, bytes);
      written.push_back(path);
    }
  return written;
}

Tensor read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  std::size_t pos = 0;
  // Header tokens are separated by whitespace; comments are not emitted by
  // export_pgm and are rejected here.
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    if (t.empty()) throw FormatError("PGM: truncated header in " + path.string());
    return t;
  };
  if (token() != "P5") throw FormatError("PGM: not a binary greymap");
  std::size_t w = 0, h = 0;
  unsigned long maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw FormatError("PGM: malformed header in " + path.string());
  }
  ++pos;  // single whitespace byte before the raster
  if (maxval != 65535) throw FormatError("PGM: expected maxval 65535");
  if (bytes.size() < pos + 2 * w * h) throw FormatError("PGM: truncated raster");
  std::vector<double> data(w * h);
  for (std::size_t i = 0; i < w * h; ++i) {
    const unsigned q = static_cast<unsigned>(bytes[pos + 2 * i]) << 8 | bytes[pos + 2 * i + 1];
    data[i] = static_cast<double>(q) / 65535.0;
  }
  return Tensor::from({1, h, w}, std::move(data));
}

}  // namespace dpt
