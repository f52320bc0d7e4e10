#include "lazydit/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "lazydit/config.hpp"
#include "lazydit/error.hpp"
#include "lazydit/format.hpp"

namespace lazydit {

namespace {

constexpr char kMagic[8] = {'L', 'Z', 'D', 'T', 'C', 'K', 'P', 'T'};
constexpr std::size_t kPrefix = 16;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large blobs in chunks.
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

CheckpointHeader parse_header(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  CheckpointHeader h;
  try {
    h.format_version = j.at("format_version").get<int>();
    if (h.format_version != kCheckpointVersion) {
      throw VersionError("checkpoint format version " + std::to_string(h.format_version) +
                         " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    h.kind = j.at("kind").get<std::string>();
    h.crc32 = j.at("crc32").get<std::uint32_t>();
    h.blob_bytes = j.at("blob_bytes").get<std::size_t>();
    for (const auto& t : j.at("tensors")) {
      h.tensors.push_back({t.at("name").get<std::string>(), t.at("rows").get<std::size_t>(),
                           t.at("cols").get<std::size_t>(), t.at("offset").get<std::size_t>()});
    }
    h.meta = j.value("meta", nlohmann::ordered_json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }
  std::size_t expected = 0;
  for (const TensorEntry& t : h.tensors) {
    if (t.offset != expected) throw IoError("checkpoint tensor '" + t.name + "' has a bad offset");
    expected += t.rows * t.cols * sizeof(double);
  }
  if (expected != h.blob_bytes) throw IoError("checkpoint blob size does not match its tensors");
  return h;
}

std::size_t header_length(const std::string& prefix) {
  if (prefix.size() < kPrefix || std::memcmp(prefix.data(), kMagic, 8) != 0) {
    throw IoError("not a checkpoint file (bad magic)");
  }
  return static_cast<std::size_t>(get_u64(prefix.data() + 8));
}

}  // namespace

const Mat& Checkpoint::tensor(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw IoError("checkpoint has no tensor '" + name + "'");
}

std::string serialize_checkpoint(const std::string& kind, const std::vector<NamedTensor>& tensors,
                                 const nlohmann::ordered_json& meta) {
  std::string blob;
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const NamedTensor& t : tensors) {
    entries.push_back({{"name", t.name},
                       {"rows", t.value.rows()},
                       {"cols", t.value.cols()},
                       {"offset", blob.size()}});
    for (double v : t.value.data()) put_u64(blob, std::bit_cast<std::uint64_t>(v));
  }
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointVersion;
  header["kind"] = kind;
  header["crc32"] = crc_of(blob.data(), blob.size());
  header["blob_bytes"] = blob.size();
  header["tensors"] = std::move(entries);
  header["meta"] = meta.is_null() ? nlohmann::ordered_json::object() : meta;
  const std::string text = header.dump();

  std::string out(kMagic, 8);
  put_u64(out, text.size());
  out += text;
  out += blob;
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  const std::size_t len = header_length(bytes);
  if (bytes.size() < kPrefix + len) throw IoError("checkpoint truncated inside the header");
  Checkpoint ck;
  ck.header = parse_header(bytes.substr(kPrefix, len));
  const std::size_t start = kPrefix + len;
  if (bytes.size() != start + ck.header.blob_bytes) {
    throw IoError("checkpoint blob is " + std::to_string(bytes.size() - start) + " bytes, header says " +
                  std::to_string(ck.header.blob_bytes));
  }
  const char* blob = bytes.data() + start;
  if (crc_of(blob, ck.header.blob_bytes) != ck.header.crc32) {
    throw ChecksumError("checkpoint blob CRC32 mismatch");
  }
  for (const TensorEntry& t : ck.header.tensors) {
    Mat m(t.rows, t.cols);
    auto out = m.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::bit_cast<double>(get_u64(blob + t.offset + 8 * i));
    }
    ck.tensors.push_back({t.name, std::move(m)});
  }
  return ck;
}

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<NamedTensor>& tensors, const nlohmann::ordered_json& meta) {
  write_file_atomic(path, serialize_checkpoint(kind, tensors, meta));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

CheckpointHeader inspect_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string prefix(kPrefix, '\0');
  if (!in.read(prefix.data(), static_cast<std::streamsize>(kPrefix))) {
    throw IoError("'" + path + "' is too short to be a checkpoint");
  }
  const std::size_t len = header_length(prefix);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw IoError("'" + path + "' truncated inside the header");
  }
  return parse_header(text);
}

std::vector<NamedTensor> model_tensors(const ModelWeights& w) {
  std::vector<NamedTensor> out;
  for_each_tensor(w, [&](const std::string& name, std::span<const double> data, std::size_t rows,
                         std::size_t cols) {
    out.push_back({name, Mat(rows, cols, std::vector<double>(data.begin(), data.end()))});
  });
  return out;
}

std::vector<NamedTensor> bank_tensors(const PredictorBank& bank) {
  std::vector<NamedTensor> out;
  for (int l = 0; l < bank.layers(); ++l) {
    for (ModuleKind kind : kModuleKinds) {
      out.push_back({"predictor." + std::to_string(l) + "." + std::string(to_string(kind)),
                     Mat::row_vector(bank.weight(l, kind))});
    }
  }
  return out;
}

void save_model_checkpoint(const std::string& path, const ModelWeights& w,
                           const PredictorBank* bank, nlohmann::ordered_json meta) {
  std::vector<NamedTensor> tensors = model_tensors(w);
  if (bank) {
    for (NamedTensor& t : bank_tensors(*bank)) tensors.push_back(std::move(t));
  }
  if (meta.is_null()) meta = nlohmann::ordered_json::object();
  meta["model"] = to_json(w.config);
  meta["has_predictors"] = bank != nullptr;
  save_checkpoint(path, bank ? "model+predictors" : "model", tensors, meta);
}

ModelCheckpoint load_model_checkpoint(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.header.kind != "model" && ck.header.kind != "model+predictors") {
    throw IoError("'" + path + "' holds a " + ck.header.kind + " checkpoint, not a model");
  }
  ModelCheckpoint out;
  out.meta = ck.header.meta;
  ModelConfig mc;
  try {
    mc = model_config_from_json(nlohmann::json::parse(out.meta.at("model").dump()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint meta lacks a model config: ") + e.what());
  }
  // Shapes come from the config; every value is then overwritten from the file.
  mc.weight_clip.reset();
  out.weights = init_model(mc, 0);
  for_each_tensor(out.weights, [&](const std::string& name, std::span<double> data,
                                   std::size_t rows, std::size_t cols) {
    const Mat& t = ck.tensor(name);
    if (t.rows() != rows || t.cols() != cols) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + t.shape_string());
    }
    std::copy(t.data().begin(), t.data().end(), data.begin());
  });
  out.weights.config = model_config_from_json(nlohmann::json::parse(out.meta.at("model").dump()));
  if (ck.header.kind == "model+predictors") {
    PredictorBank bank(mc.layers, mc.hidden);
    for (int l = 0; l < mc.layers; ++l) {
      for (ModuleKind kind : kModuleKinds) {
        const Mat& t = ck.tensor("predictor." + std::to_string(l) + "." + std::string(to_string(kind)));
        if (t.size() != static_cast<std::size_t>(mc.hidden)) {
          throw IoError("predictor tensor has shape " + t.shape_string());
        }
        std::copy(t.data().begin(), t.data().end(), bank.weight(l, kind).begin());
      }
    }
    out.bank = std::move(bank);
  }
  return out;
}

void save_dataset(const std::string& path, const Dataset& ds, nlohmann::ordered_json meta) {
  std::vector<NamedTensor> tensors;
  std::vector<double> labels(ds.labels.begin(), ds.labels.end());
  tensors.push_back({"labels", Mat::row_vector(labels)});
  for (std::size_t i = 0; i < ds.tokens.size(); ++i) {
    tensors.push_back({"tokens." + std::to_string(i), ds.tokens[i]});
  }
  if (meta.is_null()) meta = nlohmann::ordered_json::object();
  meta["size"] = ds.tokens.size();
  save_checkpoint(path, "dataset", tensors, meta);
}

}  // namespace lazydit
