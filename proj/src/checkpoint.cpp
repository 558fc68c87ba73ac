// Checkpoint layout (all integers little-endian):
//   "DGNETv1"            7-byte magic
//   u32 format version   currently 1
//   u64 spec fingerprint
//   u64 header length, then a JSON header {spec, seed, tensors:[{name,shape,frozen}]}
//   float64 parameter data for each tensor in declaration order
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

#include "dgnet/error.hpp"
#include "dgnet/network.hpp"

namespace dgnet {

namespace {

constexpr std::string_view kMagic = "DGNETv1";
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
    std::string_view out(bytes_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T le() {
    const auto raw = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(raw[i])) << (8 * i);
    }
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  nlohmann::json header;
  header["spec"] = params.spec.to_json();
  header["seed"] = params.seed;
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    header["tensors"].push_back({{"name", params.names.at(i)},
                                 {"shape", params.tensors[i].shape()},
                                 {"frozen", static_cast<bool>(params.frozen.at(i))}});
  }
  const std::string json = header.dump();

  std::string out(kMagic);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, params.spec.fingerprint());
  put_le<std::uint64_t>(out, json.size());
  out += json;
  for (const auto& t : params.tensors) {
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path.string());
}

NetworkParams load_params(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}));

  if (r.take(kMagic.size()) != kMagic) throw FormatError("not a checkpoint (bad magic): " + path.string());
  const auto version = r.le<std::uint32_t>();
  if (version != kFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto fingerprint = r.le<std::uint64_t>();
  const auto header_len = r.le<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }

  NetworkParams params;
  try {
    params.spec = NetworkSpec::from_json(header.at("spec"));
    params.seed = header.at("seed").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (params.spec.fingerprint() != fingerprint) throw FormatError("checkpoint spec fingerprint does not match its header");

  const auto layout = layer_layout(params.spec);
  const auto& entries = header.at("tensors");
  if (entries.size() != 2 * layout.size()) throw FormatError("checkpoint tensor count does not match its spec");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& l = layout[i / 2];
    const Shape expected = i % 2 == 0 ? l.weight_shape : Shape{l.weight_shape[0]};
    Shape shape;
    try {
      shape = entries[i].at("shape").get<Shape>();
      params.names.push_back(entries[i].at("name").get<std::string>());
      params.frozen.push_back(entries[i].at("frozen").get<bool>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("corrupt checkpoint tensor entry: ") + e.what());
    }
    if (shape != expected) throw FormatError("checkpoint tensor " + std::to_string(i) + " has the wrong shape");
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = std::bit_cast<double>(r.le<std::uint64_t>());
    params.tensors.emplace_back(std::move(shape), std::move(data));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return params;
}

NetworkParams load_params(const std::filesystem::path& path, const NetworkSpec& expected) {
  NetworkParams params = load_params(path);
  if (params.spec.fingerprint() != expected.fingerprint()) {
    throw FormatError("checkpoint was saved for a different network spec (profile '" +
                      params.spec.profile + "', expected '" + expected.profile + "')");
  }
  return params;
}

}  // namespace dgnet
