#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "synthdet/nn/parameter.hpp"

namespace synthdet {

/// Failure while reading or validating a weights file.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, corrupt, version_mismatch, backbone_mismatch, schema };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct StoredTensor {
  std::vector<int> shape;
  std::vector<double> values;
};

/// Versioned container for named tensors plus a JSON metadata block.
///
/// On-disk layout (little endian):
///   8 bytes  magic "SYNTHDET"
///   u32      container version
///   u64      header length, then the JSON header
///            {"kind", "meta", "tensors": [{"name", "shape", "offset", "count"}]}
///   u64      payload length, then the payload of float64 values
///   u64      FNV-1a digest of every preceding byte
struct TensorArchive {
  static constexpr std::uint32_t kContainerVersion = 1;

  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, StoredTensor> tensors;

  void store(const nn::ParameterList& params, const std::string& prefix = "");
  /// Copies stored values into `params`; every parameter must be present with a matching shape.
  void restore(const nn::ParameterList& params, const std::string& prefix = "") const;
};

void write_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive read_archive(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_archive(const TensorArchive& archive);
TensorArchive parse_archive(const std::vector<std::uint8_t>& bytes);

}  // namespace synthdet
