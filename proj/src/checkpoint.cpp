#include "ptocluster/checkpoint.hpp"

#include "ptocluster/errors.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ptoc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'T', 'O', 'C', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw ParseError("checkpoint truncated");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t len) {
    if (pos_ + len > bytes_.size()) throw ParseError("checkpoint truncated");
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const PredictorParams& params) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto& s = params.shape;
  for (int v : {s.n, s.window, s.gcn_width, s.filters, s.fc1, s.fc2}) put<std::int32_t>(out, v);
  put<double>(out, params.input_scale);
  const auto tensors = params.value.tensors();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.append(t.name);
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols));
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index c = 0; c < t.cols; ++c) put<double>(out, t.at(r, c));
    }
  }
  return out;
}

PredictorParams decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ParseError("not a parameter checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  PredictorShape shape;
  shape.n = in.get<std::int32_t>();
  shape.window = in.get<std::int32_t>();
  shape.gcn_width = in.get<std::int32_t>();
  shape.filters = in.get<std::int32_t>();
  shape.fc1 = in.get<std::int32_t>();
  shape.fc2 = in.get<std::int32_t>();
  try {
    shape.validate();
  } catch (const ShapeMismatch& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  PredictorParams params{shape, in.get<double>(), ParamTensors::zeros(shape),
                         ParamTensors::zeros(shape)};
  auto tensors = params.value.tensors();
  if (in.get<std::uint32_t>() != tensors.size()) throw ParseError("checkpoint tensor count");
  for (auto& t : tensors) {
    const auto name = in.get_string(in.get<std::uint32_t>());
    if (name != t.name) throw ParseError("checkpoint: expected tensor " + std::string(t.name));
    if (in.get<std::uint32_t>() != 2) throw ParseError("checkpoint: tensor rank must be 2");
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(t.rows) || cols != static_cast<std::uint64_t>(t.cols)) {
      throw ParseError("checkpoint: tensor " + name + " has the wrong shape");
    }
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index c = 0; c < t.cols; ++c) t.at(r, c) = in.get<double>();
    }
  }
  if (!in.done()) throw ParseError("checkpoint has trailing bytes");
  return params;
}

void save_checkpoint(const PredictorParams& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const auto bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

PredictorParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace ptoc
