#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lazydit/backbone.hpp"
#include "lazydit/dataset.hpp"
#include "lazydit/lazy_runtime.hpp"
#include "lazydit/linalg.hpp"

namespace lazydit {

// File layout: 8-byte magic "LZDTCKPT", little-endian u64 header length, JSON
// header, then the blob of little-endian f64 values in declared tensor order.
inline constexpr int kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;  // in bytes from the start of the blob
};

struct CheckpointHeader {
  int format_version = kCheckpointVersion;
  std::string kind;
  std::uint32_t crc32 = 0;
  std::size_t blob_bytes = 0;
  std::vector<TensorEntry> tensors;
  nlohmann::ordered_json meta;
};

struct NamedTensor {
  std::string name;
  Mat value;
};

struct Checkpoint {
  CheckpointHeader header;
  std::vector<NamedTensor> tensors;

  const Mat& tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<NamedTensor>& tensors, const nlohmann::ordered_json& meta);
// IoError on unreadable or malformed files, VersionError on a format mismatch,
// ChecksumError when the blob does not match the recorded CRC32.
Checkpoint load_checkpoint(const std::string& path);
// Reads the header without touching the blob.
CheckpointHeader inspect_checkpoint(const std::string& path);

std::string serialize_checkpoint(const std::string& kind, const std::vector<NamedTensor>& tensors,
                                 const nlohmann::ordered_json& meta);
Checkpoint parse_checkpoint(const std::string& bytes);

std::vector<NamedTensor> model_tensors(const ModelWeights& w);
std::vector<NamedTensor> bank_tensors(const PredictorBank& bank);

// Backbone plus optional predictors; the model config lives in meta["model"].
struct ModelCheckpoint {
  ModelWeights weights;
  std::optional<PredictorBank> bank;
  nlohmann::ordered_json meta;
};

void save_model_checkpoint(const std::string& path, const ModelWeights& w,
                           const PredictorBank* bank, nlohmann::ordered_json meta = {});
ModelCheckpoint load_model_checkpoint(const std::string& path);

void save_dataset(const std::string& path, const Dataset& ds, nlohmann::ordered_json meta = {});

}  // namespace lazydit
