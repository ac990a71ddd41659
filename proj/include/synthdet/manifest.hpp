#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "synthdet/augmentation.hpp"

namespace synthdet {

inline constexpr int kManifestSchemaVersion = 1;

struct GenerationConfig {
  std::string model_name;
  int steps = 0;
  double guidance = 0.0;
  std::optional<int> jpeg_quality;
  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

enum class Split { train, val, test };
std::string to_string(Split split);
Split parse_split(std::string_view name);

struct ImageRecord {
  std::string path;  // relative to the manifest root, '/'-separated
  int label = 0;     // 0 = real, 1 = synthetic
  std::string source;
  std::optional<std::string> caption_dataset;
  std::optional<GenerationConfig> generation;
  std::vector<TransformSpec> applied_transforms;
  Split split = Split::train;
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
  int schema_version = kManifestSchemaVersion;
  /// Directory that record paths are relative to. Not serialized: a loaded
  /// manifest takes the directory containing the manifest file.
  std::filesystem::path root;
  std::vector<ImageRecord> records;

  std::filesystem::path resolve(const ImageRecord& record) const { return root / record.path; }
  std::vector<const ImageRecord*> in_split(Split split) const;
  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.schema_version == b.schema_version && a.records == b.records;
  }
};

struct LabelAssignment {
  int label = 0;
  std::string source;
};

/// Subdirectory (relative to the root, '/'-separated, "." for the root itself)
/// -> label and source. The deepest rule that contains an image's directory applies.
using LabelingRule = std::map<std::string, LabelAssignment>;

/// Parses `dir=label:source`, label being `real`, `synthetic`, `0` or `1`.
std::pair<std::string, LabelAssignment> parse_labeling_rule(std::string_view text);

struct BuildResult {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};

/// Scans `root` recursively for PNG/JPEG/WebP files. Every record starts in the
/// train split; use split_manifest to partition. A `<stem>.json` sidecar next to a
/// synthetic image supplies its generation config (model_name, steps, guidance,
/// optional jpeg_quality and caption_dataset).
BuildResult build_manifest(const std::filesystem::path& root, const LabelingRule& rule);

enum class ValidationProfile { none, benchmark };

struct Violation {
  std::optional<std::size_t> record;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate_manifest(const DatasetManifest& m, ValidationProfile profile);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Stratified, seeded split. Records are ordered so that within each label the
/// sources interleave evenly and the two labels interleave evenly; the first
/// share goes to train, the next to val, the rest to test.
DatasetManifest split_manifest(const DatasetManifest& m, const SplitFractions& fractions, std::uint64_t seed);

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace synthdet
