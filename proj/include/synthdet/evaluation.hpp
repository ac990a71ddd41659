#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "synthdet/augmentation.hpp"
#include "synthdet/detector.hpp"
#include "synthdet/manifest.hpp"
#include "synthdet/training.hpp"

namespace synthdet {

/// Metric tuple for one source. Rank metrics are absent when the evaluated set
/// lacks one of the classes.
struct SourceMetrics {
  std::optional<double> ap;
  std::optional<double> accuracy;
  std::optional<double> f1;
  std::optional<double> roc_auc;
  std::optional<double> tpr_at_10fpr;
  std::optional<double> tpr_at_1fpr;
  int n_real = 0;
  int n_synth = 0;
  friend bool operator==(const SourceMetrics&, const SourceMetrics&) = default;
};

/// One row per synthetic source, each scored against every real test image, plus
/// the unweighted mean over sources (undefined values excluded).
struct MetricsReport {
  double threshold = 0.5;
  std::map<std::string, SourceMetrics> per_source;
  SourceMetrics aggregate;
  std::vector<std::string> warnings;
  nlohmann::json metadata = nlohmann::json::object();
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline constexpr const char* kMetricNames[] = {"ap", "accuracy", "f1", "roc_auc", "tpr_at_10fpr", "tpr_at_1fpr"};

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
/// Flat CSV: `source,metric,value`, one row per source per metric; undefined values are empty.
std::string report_csv(const MetricsReport& report);

struct LabeledScore {
  std::string source;
  int label = 0;
  double score = 0.0;
};

MetricsReport build_report(const std::vector<LabeledScore>& scored, double threshold);

struct EvalOptions {
  Split split = Split::test;
  /// Post-processing applied to every image before scoring (at its stored resolution).
  std::optional<TransformSpec> transform;
  std::uint64_t seed = 0;
  /// Feed resized images at their new size instead of restoring 224x224.
  bool native_size = false;
  int workers = 1;
};

struct EvalItem {
  const ImageRecord* record = nullptr;
  Image image;
};

/// Loads the split, applying `options.transform` with a per-image seed derived from `options.seed`.
std::vector<EvalItem> load_eval_set(const DatasetManifest& manifest, const EvalOptions& options);

using Scorer = std::function<double(const ImageRecord&, const Image&)>;

/// Standard scorer: detector.predict_score (which resizes to 224x224).
Scorer detector_scorer(const Detector& detector, EmbeddingCache* cache = nullptr);
/// Scores at the image's own size, cropped to a multiple of 8 on each side.
Scorer detector_native_scorer(const Detector& detector);

std::vector<double> score_items(const Scorer& scorer, const std::vector<EvalItem>& items, int workers = 1);

MetricsReport evaluate_report(const Scorer& scorer, const DatasetManifest& manifest, double threshold = 0.5,
                              const EvalOptions& options = {});

struct CurvePoint {
  double param = 0.0;
  double accuracy = 0.0;
  bool identity = false;
};

struct RobustnessCurve {
  TransformKind kind = TransformKind::jpeg;
  std::vector<CurvePoint> points;
};

/// `lo:hi:n` -> n evenly spaced values (n = 1 gives lo).
std::vector<double> parse_grid(std::string_view text);

/// Accuracy at 0.5 on a transformed copy of the split for each grid value. Grid
/// values must lie in the evaluated range of the kind. With `include_identity`
/// an extra point at the identity parameter is appended, computed on the
/// untransformed split.
RobustnessCurve robustness_sweep(const Detector& detector, const DatasetManifest& manifest, TransformKind kind,
                                 const std::vector<double>& grid, const EvalOptions& options = {},
                                 bool include_identity = false);
RobustnessCurve robustness_sweep(const Scorer& scorer, const DatasetManifest& manifest, TransformKind kind,
                                 const std::vector<double>& grid, const EvalOptions& options = {},
                                 bool include_identity = false);

/// `kind,param,accuracy,identity`
std::string curve_csv(const RobustnessCurve& curve);

struct AblationRow {
  FusionMode mode = FusionMode::adaptive;
  double accuracy_clean = 0.0;
  double accuracy_corrupted = 0.0;
  std::optional<double> ap_clean;
  std::optional<double> ap_corrupted;
};

struct AblationReport {
  std::optional<TransformSpec> corruption;
  std::vector<AblationRow> rows;
  const AblationRow& row(FusionMode mode) const;
};

/// Trains adaptive, only_semantic, only_artifact and simple_concat models from
/// `base` (fusion mode overridden) and derives avg / max / min from the two
/// single-branch models. All are evaluated on the test split, clean and with
/// `corruption` applied.
AblationReport run_ablation(const DatasetManifest& manifest, const TrainConfig& base,
                            const std::optional<TransformSpec>& corruption, std::ostream* log = nullptr);

nlohmann::json to_json(const AblationReport& report);

}  // namespace synthdet
