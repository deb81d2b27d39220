// Binary tensor container, model checkpoint container, PGM rendering, and
// small text helpers. Both binary formats are little-endian with fixed
// headers, so files round-trip byte-identically across platforms.
//
// Tensor container ("SGET"):
//   magic 'S','G','E','T' | version u16 | rank u8 (1..8) | rank x dim u32
//   | volume x float32 payload
//
// Checkpoint container ("SGEC"):
//   magic 'S','G','E','C' | version u16 | header_len u32 | header_len bytes
//   of JSON | one tensor container image per parameter, in declaration order.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sge/errors.hpp"
#include "sge/nn.hpp"
#include "sge/tensor.hpp"

namespace sge {

inline constexpr std::uint16_t kTensorFileVersion = 1;
inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr int kMaxTensorRank = 8;

// Rank-generic tensor carrier used at the file boundary; payloads are always
// float32 regardless of the in-memory scalar type.
struct TensorData {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t volume() const;
  void validate() const;  // rank 1..8, all dims >= 1, values match volume
};

TensorData to_tensor_data(const Tensor4<float>& t);
TensorData to_tensor_data(const Tensor4<double>& t);
template <typename T>
TensorData vector_tensor_data(const std::vector<T>& v);  // rank 1
Tensor4<float> tensor4_from_data(const TensorData& t);   // requires rank 4

std::string tensor_bytes(const TensorData& t);
// Parses one tensor image starting at `pos` within `buf`, advancing `pos`;
// error offsets are absolute within `buf`.
TensorData tensor_from_buffer(std::string_view buf, std::size_t& pos);
// Whole-buffer parse; throws TrailingData when bytes remain.
TensorData tensor_from_bytes(std::string_view bytes);

void write_tensor_file(const std::string& path, const TensorData& t);
TensorData read_tensor_file(const std::string& path);

struct CheckpointParam {
  std::string name;
  TensorData data;
};

struct CheckpointData {
  nlohmann::json header;
  std::vector<CheckpointParam> params;  // order matches header["params"]
};

std::string checkpoint_bytes(const CheckpointData& ck);
CheckpointData checkpoint_from_bytes(std::string_view bytes);
void write_checkpoint_file(const std::string& path, const CheckpointData& ck);
CheckpointData read_checkpoint_file(const std::string& path);

// Snapshot of the model's parameters plus a JSON header echoing the run
// configuration; `config` is stored verbatim under header["config"].
template <typename T>
CheckpointData make_checkpoint(Model<T>& model, std::uint64_t seed,
                               const nlohmann::json& config);
// Restores parameter values; the checkpoint must list exactly the model's
// parameters, same names, same shapes, same order.
template <typename T>
void load_checkpoint(Model<T>& model, const CheckpointData& ck);

// 8-bit binary PGM (P5, maxval 255). `values` is h*w row-major in [0, 1]
// (clamped); pixel = floor(v * 255 + 0.5); `scale` applies nearest-neighbor
// integer upscaling. `comments` become "# ..." header lines, which viewers
// skip — used to embed run configuration in image artifacts.
std::string pgm_bytes(int height, int width, const std::vector<float>& values,
                      int scale = 1,
                      const std::vector<std::string>& comments = {});
void write_pgm(const std::string& path, int height, int width,
               const std::vector<float>& values, int scale = 1,
               const std::vector<std::string>& comments = {});

void write_text_file(const std::string& path, std::string_view content);
std::string read_text_file(const std::string& path);
// Prepends "# key=value" comment lines to a CSV body.
std::string csv_with_metadata(
    const std::vector<std::pair<std::string, std::string>>& metadata,
    std::string_view body);

}  // namespace sge
