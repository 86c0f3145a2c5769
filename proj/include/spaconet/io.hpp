#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spaconet/labels.hpp"
#include "spaconet/model.hpp"
#include "spaconet/synthetic.hpp"
#include "spaconet/tensor.hpp"
#include "spaconet/training.hpp"

namespace spaconet::io {

namespace fs = std::filesystem;

// ---- tensor files ------------------------------------------------------------
//
// "SPC1" | dtype u8 | ndim u8 | dims (u32 LE) x ndim | row-major LE payload

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u16 = 2 };

const char* to_string(DType d);
std::size_t element_size(DType d);

struct TensorFile {
  DType dtype = DType::f64;
  Shape shape;
  std::vector<double> values;  // decoded; exact for all three dtypes

  Tensor tensor() const { return Tensor(shape, values); }
};

/// Encodes `t` in the given dtype. f32 rounds to nearest; u16 requires
/// integral values in [0, 65535].
std::string encode(const Tensor& t, DType dtype);
std::string encode(const LabelMap& labels);
/// Parses one tensor record starting at `offset`; advances `offset` past it.
/// Errors report the byte offset of the offending field.
TensorFile decode(std::string_view bytes, std::size_t& offset);
TensorFile decode(std::string_view bytes);

LabelMap to_label_map(const TensorFile& file, std::size_t num_classes);

std::string read_file(const fs::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void atomic_write(const fs::path& path, std::string_view bytes);

void write_tensor(const fs::path& path, const Tensor& t, DType dtype);
void write_labels(const fs::path& path, const LabelMap& labels);
TensorFile read_tensor(const fs::path& path);

// ---- manifests ---------------------------------------------------------------

struct ManifestEntry {
  std::string image;
  std::string scores;
  SceneLabel label = 0;
  std::optional<std::string> image_features;    // optional precomputed F_I
  std::optional<std::string> spatial_features;  // optional precomputed F_S
};

struct Manifest {
  std::size_t classes = 0;
  std::size_t objects = 0;
  std::vector<ManifestEntry> entries;
  fs::path base_dir;  // relative paths resolve against this
};

Manifest parse_manifest(std::string_view text, const fs::path& base_dir = {});
Manifest read_manifest(const fs::path& path);
std::string format_manifest(const Manifest& manifest);

/// Loads every referenced file. Checks shapes, class indices and object counts.
Dataset load_dataset(const Manifest& manifest);

// ---- run configuration -------------------------------------------------------

RunConfig parse_run_config(std::string_view text);
RunConfig read_run_config(const fs::path& path);
/// Every key with its resolved value, one "key = value" line each.
std::string format_run_config(const RunConfig& config);
/// FNV-1a over the resolved model section, used to match checkpoints.
std::uint64_t model_config_hash(const ModelConfig& config);

struct GenerateOptions {
  SceneSpec spec = confounded_spec();
  std::size_t n_train = 400;
  std::size_t n_test = 200;
};

/// Keys: seed, noise, spread, n_train, n_test.
GenerateOptions parse_generate_options(std::string_view text);
std::string format_generate_options(const GenerateOptions& options);

/// Writes train/ and test/ tensor files plus train.manifest and test.manifest.
void write_generated(const fs::path& dir, const GeneratedDataset& data);

// ---- checkpoints -------------------------------------------------------------

struct Checkpoint {
  int stage = 0;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  RunConfig config;
  double last_gamma = 0.0;
  std::string rng_state;
  std::vector<std::string> names;
  std::vector<Tensor> values;
  std::vector<bool> frozen;
};

Checkpoint capture(SpacoNet& model, const RunConfig& config, int stage, std::size_t epoch, const TrainState& state);
/// Copies values and frozen flags into `model`, matching parameters by name.
void restore(SpacoNet& model, const Checkpoint& checkpoint);

std::string encode(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void write_checkpoint(const fs::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const fs::path& path);

}  // namespace spaconet::io
