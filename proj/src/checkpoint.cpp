#include "dpt/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "dpt/errors.hpp"

namespace dpt {

namespace {

constexpr unsigned char kBlobMagic[4] = {'L', 'F', 'T', '1'};
constexpr const char* kManifest = "manifest.txt";
constexpr const char* kFormatTag = "dpt-checkpoint-1";

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::uint64_t take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("tensor blob: truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::string take_string(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("tensor blob: truncated name");
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string blob_file(const std::string& name) { return name + ".tensor"; }

void restore(const ParamList& params, const std::filesystem::path& dir) {
  for (const auto& [name, tensor] : params) {
    auto [stored_name, stored] = decode_tensor_blob(read_bytes(dir / blob_file(name)));
    if (stored_name != name) throw FormatError("checkpoint blob " + blob_file(name) + " holds '" + stored_name + "'");
    if (stored.shape() != tensor.shape()) {
      throw FormatError("checkpoint parameter " + name + " has shape " + shape_str(stored.shape()) + ", model expects " +
                        shape_str(tensor.shape()));
    }
    Tensor target = tensor;
    std::copy(stored.data().begin(), stored.data().end(), target.mutable_data().begin());
  }
}

}  // namespace

std::vector<unsigned char> encode_tensor_blob(const std::string& name, const Tensor& t) {
  std::vector<unsigned char> out(std::begin(kBlobMagic), std::end(kBlobMagic));
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::pair<std::string, Tensor> decode_tensor_blob(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kBlobMagic), std::end(kBlobMagic), bytes.begin())) {
    throw FormatError("tensor blob: bad magic");
  }
  Reader r(bytes);
  r.take(4);
  std::string name = r.take_string(static_cast<std::size_t>(r.take(4)));
  const auto rank = static_cast<std::size_t>(r.take(4));
  if (rank > 8) throw FormatError("tensor blob: implausible rank");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& e : shape) {
    e = static_cast<std::size_t>(r.take(4));
    count *= e;
  }
  if (r.remaining() != count * 8) throw FormatError("tensor blob: payload size does not match shape");
  std::vector<double> data(count);
  for (double& v : data) v = std::bit_cast<double>(r.take(8));
  return {std::move(name), Tensor::from(std::move(shape), std::move(data))};
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed line in " + path.string() + ": " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_key_values(const std::filesystem::path& path, const std::map<std::string, std::string>& kv) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot create " + path.string());
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

void save_checkpoint(const std::filesystem::path& dir, const DptModel& model,
                     const std::map<std::string, std::string>& extra) {
  std::filesystem::create_directories(dir);
  auto kv = model.config().to_map();
  for (const auto& [k, v] : extra) kv.emplace(k, v);
  kv["format"] = kFormatTag;
  const ParamList params = model.parameters();
  kv["parameter_count"] = std::to_string(count_elements(params));
  for (const auto& [name, tensor] : params) {
    const auto bytes = encode_tensor_blob(name, tensor);
    std::ofstream out(dir / blob_file(name), std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot create " + (dir / blob_file(name)).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  write_key_values(dir / kManifest, kv);
}

DptModel load_checkpoint(const std::filesystem::path& dir) {
  auto kv = read_key_values(dir / kManifest);
  if (kv["format"] != kFormatTag) throw FormatError("not a checkpoint directory: " + dir.string());
  DptModel model(DptConfig::from_map(kv), 0);
  restore(model.parameters(), dir);
  return model;
}

void load_checkpoint_into(DptModel& model, const std::filesystem::path& dir) {
  auto kv = read_key_values(dir / kManifest);
  if (kv["format"] != kFormatTag) throw FormatError("not a checkpoint directory: " + dir.string());
  const DptConfig stored = DptConfig::from_map(kv);
  if (!(stored == model.config())) throw ConfigError("checkpoint config does not match the model config");
  restore(model.parameters(), dir);
}

}  // namespace dpt
