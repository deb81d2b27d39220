#include "sge/io_formats.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace sge {

static_assert(std::numeric_limits<float>::is_iec559,
              "file payloads assume IEEE 754 binary32");

namespace {

constexpr char kTensorMagic[4] = {'S', 'G', 'E', 'T'};
constexpr char kCheckpointMagic[4] = {'S', 'G', 'E', 'C'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void need(std::string_view buf, std::size_t pos, std::size_t count,
          const char* what) {
  if (pos + count > buf.size()) {
    throw TruncatedPayload(std::string("unexpected end of data while reading ") +
                               what,
                           pos);
  }
}

std::uint16_t get_u16(std::string_view buf, std::size_t& pos,
                      const char* what) {
  need(buf, pos, 2, what);
  const auto* b = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  pos += 2;
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::string_view buf, std::size_t& pos,
                      const char* what) {
  need(buf, pos, 4, what);
  const auto* b = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  pos += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::string_view buf, std::size_t& pos, const char* what) {
  const std::uint32_t bits = get_u32(buf, pos, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading", 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path + "'", 0);
  return std::move(buf).str();
}

void write_binary_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing", 0);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failure on '" + path + "'", 0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor container.

std::size_t TensorData::volume() const {
  std::size_t v = 1;
  for (std::uint32_t d : dims) v *= d;
  return dims.empty() ? 0 : v;
}

void TensorData::validate() const {
  if (dims.empty() || dims.size() > kMaxTensorRank) {
    throw BadHeader("tensor rank must be 1.." + std::to_string(kMaxTensorRank) +
                        ", got " + std::to_string(dims.size()),
                    0);
  }
  for (std::uint32_t d : dims) {
    if (d == 0) throw BadHeader("tensor dims must all be >= 1", 0);
  }
  if (values.size() != volume()) {
    throw BadHeader("tensor payload has " + std::to_string(values.size()) +
                        " values for volume " + std::to_string(volume()),
                    0);
  }
}

TensorData to_tensor_data(const Tensor4<float>& t) {
  const Shape4& s = t.shape();
  TensorData d;
  d.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
            static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  d.values.assign(t.data(), t.data() + t.size());
  return d;
}

TensorData to_tensor_data(const Tensor4<double>& t) {
  const Shape4& s = t.shape();
  TensorData d;
  d.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
            static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  d.values.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    d.values[i] = static_cast<float>(t.data()[i]);
  }
  return d;
}

template <typename T>
TensorData vector_tensor_data(const std::vector<T>& v) {
  if (v.empty()) {
    throw BadHeader("cannot serialize an empty vector as a tensor", 0);
  }
  TensorData d;
  d.dims = {static_cast<std::uint32_t>(v.size())};
  d.values.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    d.values[i] = static_cast<float>(v[i]);
  }
  return d;
}

template TensorData vector_tensor_data(const std::vector<float>&);
template TensorData vector_tensor_data(const std::vector<double>&);

Tensor4<float> tensor4_from_data(const TensorData& t) {
  t.validate();
  if (t.dims.size() != 4) {
    throw BadHeader("expected a rank-4 tensor, got rank " +
                        std::to_string(t.dims.size()),
                    0);
  }
  Shape4 s{static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
           static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3])};
  return Tensor4<float>(s, t.values);
}

std::string tensor_bytes(const TensorData& t) {
  t.validate();
  std::string out;
  out.reserve(4 + 2 + 1 + 4 * t.dims.size() + 4 * t.values.size());
  out.append(kTensorMagic, 4);
  put_u16(out, kTensorFileVersion);
  out.push_back(static_cast<char>(t.dims.size()));
  for (std::uint32_t d : t.dims) put_u32(out, d);
  for (float v : t.values) put_f32(out, v);
  return out;
}

TensorData tensor_from_buffer(std::string_view buf, std::size_t& pos) {
  const std::size_t start = pos;
  need(buf, pos, 4, "tensor magic");
  if (std::memcmp(buf.data() + pos, kTensorMagic, 4) != 0) {
    throw BadMagic("not a tensor container (bad magic)", start);
  }
  pos += 4;
  const std::uint16_t version = get_u16(buf, pos, "tensor version");
  if (version != kTensorFileVersion) {
    throw BadVersion("unsupported tensor container version " +
                         std::to_string(version),
                     start + 4);
  }
  need(buf, pos, 1, "tensor rank");
  const int rank = static_cast<unsigned char>(buf[pos]);
  const std::size_t rank_off = pos;
  ++pos;
  if (rank < 1 || rank > kMaxTensorRank) {
    throw BadHeader("tensor rank must be 1.." + std::to_string(kMaxTensorRank) +
                        ", got " + std::to_string(rank),
                    rank_off);
  }
  TensorData t;
  t.dims.resize(rank);
  std::size_t volume = 1;
  for (int i = 0; i < rank; ++i) {
    const std::size_t dim_off = pos;
    t.dims[i] = get_u32(buf, pos, "tensor dims");
    if (t.dims[i] == 0) {
      throw BadHeader("tensor dim " + std::to_string(i) + " is zero", dim_off);
    }
    volume *= t.dims[i];
  }
  t.values.resize(volume);
  for (std::size_t i = 0; i < volume; ++i) {
    t.values[i] = get_f32(buf, pos, "tensor payload");
  }
  return t;
}

TensorData tensor_from_bytes(std::string_view bytes) {
  std::size_t pos = 0;
  TensorData t = tensor_from_buffer(bytes, pos);
  if (pos != bytes.size()) {
    throw TrailingData(std::to_string(bytes.size() - pos) +
                           " unexpected bytes after the tensor payload",
                       pos);
  }
  return t;
}

void write_tensor_file(const std::string& path, const TensorData& t) {
  write_binary_file(path, tensor_bytes(t));
}

TensorData read_tensor_file(const std::string& path) {
  return tensor_from_bytes(read_binary_file(path));
}

// ---------------------------------------------------------------------------
// Checkpoint container.

std::string checkpoint_bytes(const CheckpointData& ck) {
  const std::string header = ck.header.dump();
  std::string out;
  out.append(kCheckpointMagic, 4);
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const CheckpointParam& p : ck.params) out += tensor_bytes(p.data);
  return out;
}

CheckpointData checkpoint_from_bytes(std::string_view bytes) {
  std::size_t pos = 0;
  need(bytes, pos, 4, "checkpoint magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw BadMagic("not a checkpoint container (bad magic)", 0);
  }
  pos += 4;
  const std::uint16_t version = get_u16(bytes, pos, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw BadVersion("unsupported checkpoint container version " +
                         std::to_string(version),
                     4);
  }
  const std::size_t len_off = pos;
  const std::uint32_t header_len = get_u32(bytes, pos, "checkpoint header length");
  need(bytes, pos, header_len, "checkpoint header");
  CheckpointData ck;
  try {
    ck.header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw BadHeader(std::string("checkpoint header is not valid JSON: ") +
                        e.what(),
                    pos);
  }
  pos += header_len;
  if (!ck.header.is_object() || !ck.header.contains("params") ||
      !ck.header["params"].is_array()) {
    throw BadHeader("checkpoint header lacks a params array", len_off);
  }
  for (const auto& meta : ck.header["params"]) {
    if (!meta.contains("name") || !meta["name"].is_string()) {
      throw BadHeader("checkpoint param entry lacks a name", len_off);
    }
    CheckpointParam p;
    p.name = meta["name"].get<std::string>();
    p.data = tensor_from_buffer(bytes, pos);
    ck.params.push_back(std::move(p));
  }
  if (pos != bytes.size()) {
    throw TrailingData(std::to_string(bytes.size() - pos) +
                           " unexpected bytes after the last parameter block",
                       pos);
  }
  return ck;
}

void write_checkpoint_file(const std::string& path, const CheckpointData& ck) {
  write_binary_file(path, checkpoint_bytes(ck));
}

CheckpointData read_checkpoint_file(const std::string& path) {
  return checkpoint_from_bytes(read_binary_file(path));
}

template <typename T>
CheckpointData make_checkpoint(Model<T>& model, std::uint64_t seed,
                               const nlohmann::json& config) {
  CheckpointData ck;
  ck.header["format"] = "sge-checkpoint";
  ck.header["version"] = kCheckpointVersion;
  ck.header["seed"] = seed;
  ck.header["config"] = config;
  auto layers = nlohmann::json::array();
  for (const auto& l : model.layers()) {
    layers.push_back({{"name", l->name()},
                      {"kind", layer_kind_name(l->kind())}});
  }
  ck.header["layers"] = std::move(layers);
  auto params_meta = nlohmann::json::array();
  for (ParamTensor<T>* p : model.parameters()) {
    params_meta.push_back({{"name", p->name}, {"dims", p->dims}});
    CheckpointParam cp;
    cp.name = p->name;
    cp.data.dims = p->dims;
    cp.data.values.resize(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      cp.data.values[i] = static_cast<float>(p->value[i]);
    }
    ck.params.push_back(std::move(cp));
  }
  ck.header["params"] = std::move(params_meta);
  return ck;
}

template <typename T>
void load_checkpoint(Model<T>& model, const CheckpointData& ck) {
  auto params = model.parameters();
  if (params.size() != ck.params.size()) {
    throw BadHeader("checkpoint carries " + std::to_string(ck.params.size()) +
                        " parameters, the model has " +
                        std::to_string(params.size()),
                    0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor<T>* p = params[i];
    const CheckpointParam& cp = ck.params[i];
    if (cp.name != p->name) {
      throw BadHeader("checkpoint parameter " + std::to_string(i) +
                          " is named '" + cp.name + "', the model expects '" +
                          p->name + "'",
                      0);
    }
    if (cp.data.dims != p->dims || cp.data.values.size() != p->value.size()) {
      throw ShapeMismatch("checkpoint parameter '" + cp.name +
                          "' does not match the model shape");
    }
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      p->value[j] = static_cast<T>(cp.data.values[j]);
    }
  }
}

template CheckpointData make_checkpoint(Model<float>&, std::uint64_t,
                                        const nlohmann::json&);
template CheckpointData make_checkpoint(Model<double>&, std::uint64_t,
                                        const nlohmann::json&);
template void load_checkpoint(Model<float>&, const CheckpointData&);
template void load_checkpoint(Model<double>&, const CheckpointData&);

// ---------------------------------------------------------------------------
// PGM rendering.

std::string pgm_bytes(int height, int width, const std::vector<float>& values,
                      int scale, const std::vector<std::string>& comments) {
  if (height <= 0 || width <= 0 || scale <= 0) {
    throw InvalidArgument("pgm: height, width, and scale must be > 0");
  }
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeMismatch("pgm: " + std::to_string(values.size()) +
                        " values for a " + std::to_string(height) + "x" +
                        std::to_string(width) + " image");
  }
  const int oh = height * scale;
  const int ow = width * scale;
  std::string out = "P5\n";
  for (const std::string& c : comments) {
    std::string line = c;
    for (char& ch : line) {
      if (ch == '\n' || ch == '\r') ch = ' ';  // a newline would split the header
    }
    out += "# " + line + "\n";
  }
  out += std::to_string(ow) + " " + std::to_string(oh) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    const float* row = values.data() + static_cast<std::size_t>(y / scale) * width;
    for (int x = 0; x < ow; ++x) {
      double v = row[x / scale];
      if (!(v >= 0.0)) v = 0.0;  // also catches NaN
      if (v > 1.0) v = 1.0;
      out.push_back(static_cast<char>(
          static_cast<unsigned char>(std::floor(v * 255.0 + 0.5))));
    }
  }
  return out;
}

void write_pgm(const std::string& path, int height, int width,
               const std::vector<float>& values, int scale,
               const std::vector<std::string>& comments) {
  write_binary_file(path, pgm_bytes(height, width, values, scale, comments));
}

// ---------------------------------------------------------------------------
// Text helpers.

void write_text_file(const std::string& path, std::string_view content) {
  write_binary_file(path, content);
}

std::string read_text_file(const std::string& path) {
  return read_binary_file(path);
}

std::string csv_with_metadata(
    const std::vector<std::pair<std::string, std::string>>& metadata,
    std::string_view body) {
  std::string out;
  for (const auto& [key, value] : metadata) {
    out += "# " + key + "=" + value + "\n";
  }
  out += body;
  return out;
}

}  // namespace sge
