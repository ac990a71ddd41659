#include "synthdet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "synthdet/metrics.hpp"

namespace synthdet {

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::optional<double> SourceMetrics::*metric_member(std::string_view name) {
  if (name == "ap") return &SourceMetrics::ap;
  if (name == "accuracy") return &SourceMetrics::accuracy;
  if (name == "f1") return &SourceMetrics::f1;
  if (name == "roc_auc") return &SourceMetrics::roc_auc;
  if (name == "tpr_at_10fpr") return &SourceMetrics::tpr_at_10fpr;
  return &SourceMetrics::tpr_at_1fpr;
}

nlohmann::json metrics_json(const SourceMetrics& m) {
  nlohmann::json j;
  for (const char* name : kMetricNames) j[name] = opt(m.*metric_member(name));
  j["n_real"] = m.n_real;
  j["n_synth"] = m.n_synth;
  return j;
}

SourceMetrics metrics_from_json(const nlohmann::json& j) {
  SourceMetrics m;
  for (const char* name : kMetricNames) m.*metric_member(name) = opt_from(j, name);
  m.n_real = j.value("n_real", 0);
  m.n_synth = j.value("n_synth", 0);
  return m;
}

SourceMetrics compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  SourceMetrics m;
  m.n_synth = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  m.n_real = static_cast<int>(labels.size()) - m.n_synth;
  if (labels.empty()) return m;
  m.accuracy = metrics::accuracy_at_threshold(scores, labels, threshold);
  m.f1 = metrics::f1_score(scores, labels, threshold);
  if (m.n_real > 0 && m.n_synth > 0) {
    m.ap = metrics::average_precision(scores, labels);
    m.roc_auc = metrics::roc_auc(scores, labels);
    m.tpr_at_10fpr = metrics::tpr_at_fpr(scores, labels, 0.10);
    m.tpr_at_1fpr = metrics::tpr_at_fpr(scores, labels, 0.01);
  }
  return m;
}

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t t = 0; t < w; ++t)
    threads.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += w) fn(i);
    });
  for (auto& th : threads) th.join();
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json per_source = nlohmann::json::object();
  for (const auto& [source, m] : report.per_source) per_source[source] = metrics_json(m);
  return {{"threshold", report.threshold},
          {"per_source", per_source},
          {"aggregate", metrics_json(report.aggregate)},
          {"warnings", report.warnings},
          {"metadata", report.metadata}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.threshold = j.at("threshold").get<double>();
  for (const auto& [source, m] : j.at("per_source").items()) r.per_source[source] = metrics_from_json(m);
  r.aggregate = metrics_from_json(j.at("aggregate"));
  r.warnings = j.value("warnings", std::vector<std::string>{});
  r.metadata = j.value("metadata", nlohmann::json::object());
  return r;
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "source,metric,value\n";
  auto rows = [&](const std::string& source, const SourceMetrics& m) {
    for (const char* name : kMetricNames) {
      const auto& v = m.*metric_member(name);
      os << source << ',' << name << ',' << (v ? format_number(*v) : "") << '\n';
    }
  };
  for (const auto& [source, m] : report.per_source) rows(source, m);
  rows("average", report.aggregate);
  return os.str();
}

MetricsReport build_report(const std::vector<LabeledScore>& scored, double threshold) {
  MetricsReport report;
  report.threshold = threshold;
  std::vector<double> real_scores;
  std::map<std::string, std::vector<double>> synth_scores;
  for (const auto& s : scored) {
    if (s.label == 0) {
      real_scores.push_back(s.score);
    } else {
      synth_scores[s.source].push_back(s.score);
    }
  }
  if (synth_scores.empty()) report.warnings.push_back("no synthetic images in the evaluated split");
  for (const auto& [source, synth] : synth_scores) {
    std::vector<double> scores = real_scores;
    std::vector<int> labels(real_scores.size(), 0);
    scores.insert(scores.end(), synth.begin(), synth.end());
    labels.insert(labels.end(), synth.size(), 1);
    auto m = compute_metrics(scores, labels, threshold);
    if (!m.ap)
      report.warnings.push_back("source '" + source + "' has no real images to rank against; rank metrics undefined and excluded from the average");
    report.per_source[source] = m;
  }

  auto& agg = report.aggregate;
  agg.n_real = static_cast<int>(real_scores.size());
  for (const auto& [source, synth] : synth_scores) agg.n_synth += static_cast<int>(synth.size());
  for (const char* name : kMetricNames) {
    const auto member = metric_member(name);
    double sum = 0.0;
    int count = 0;
    for (const auto& [source, m] : report.per_source)
      if (m.*member) {
        sum += *(m.*member);
        ++count;
      }
    if (count > 0) agg.*member = sum / count;
  }
  return report;
}

std::vector<EvalItem> load_eval_set(const DatasetManifest& manifest, const EvalOptions& options) {
  if (options.transform) validate_transform(*options.transform);
  const auto records = manifest.in_split(options.split);
  std::vector<EvalItem> items(records.size());
  parallel_for(records.size(), options.workers, [&](std::size_t i) {
    items[i].record = records[i];
    Image img = load_image(manifest.resolve(*records[i]));
    if (options.transform) {
      TransformOptions t;
      t.noise_seed = derive_seed(options.seed, 0x7E57, i);
      img = apply_transform(img, *options.transform, t);
    }
    items[i].image = std::move(img);
  });
  return items;
}

Scorer detector_scorer(const Detector& detector, EmbeddingCache* cache) {
  return [&detector, cache](const ImageRecord&, const Image& x) { return detector.predict_score(x, cache); };
}

Scorer detector_native_scorer(const Detector& detector) {
  return [&detector](const ImageRecord&, const Image& x) {
    const int h = x.height() / 8 * 8, w = x.width() / 8 * 8;
    if (h < 16 || w < 16) throw std::invalid_argument("image too small for native-size scoring");
    Image crop(h, w, x.channels());
    const int y0 = (x.height() - h) / 2, x0 = (x.width() - w) / 2;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int c = 0; c < x.channels(); ++c) crop.at(y, xx, c) = x.at(y0 + y, x0 + xx, c);
    crop.clamp01();
    return detector.features(crop).score;
  };
}

std::vector<double> score_items(const Scorer& scorer, const std::vector<EvalItem>& items, int workers) {
  std::vector<double> scores(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) { scores[i] = scorer(*items[i].record, items[i].image); });
  return scores;
}

MetricsReport evaluate_report(const Scorer& scorer, const DatasetManifest& manifest, double threshold,
                              const EvalOptions& options) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in [0, 1]");
  const auto items = load_eval_set(manifest, options);
  if (items.empty()) throw std::invalid_argument("the " + to_string(options.split) + " split is empty");
  const auto scores = score_items(scorer, items, options.workers);
  std::vector<LabeledScore> scored;
  for (std::size_t i = 0; i < items.size(); ++i) scored.push_back({items[i].record->source, items[i].record->label, scores[i]});
  auto report = build_report(scored, threshold);
  report.metadata["split"] = to_string(options.split);
  report.metadata["seed"] = options.seed;
  report.metadata["transform"] = options.transform ? nlohmann::json(to_string(*options.transform)) : nlohmann::json(nullptr);
  report.metadata["native_size"] = options.native_size;
  return report;
}

// --- robustness ----------------------------------------------------------------------

std::vector<double> parse_grid(std::string_view text) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == ':') {
      parts.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(current);
  if (parts.size() != 3) throw std::invalid_argument("grid must look like lo:hi:n, got '" + std::string(text) + "'");
  double lo, hi;
  long n;
  try {
    std::size_t used = 0;
    lo = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument("");
    hi = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument("");
    n = std::stol(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument("");
  } catch (const std::logic_error&) {
    throw std::invalid_argument("grid must look like lo:hi:n, got '" + std::string(text) + "'");
  }
  if (n < 1) throw std::invalid_argument("grid needs at least one point");
  if (hi < lo) throw std::invalid_argument("grid upper bound is below the lower bound");
  std::vector<double> grid;
  for (long i = 0; i < n; ++i) grid.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return grid;
}

RobustnessCurve robustness_sweep(const Scorer& scorer, const DatasetManifest& manifest, TransformKind kind,
                                 const std::vector<double>& grid, const EvalOptions& options, bool include_identity) {
  if (grid.empty()) throw std::invalid_argument("robustness grid is empty");
  const auto range = robustness_range(kind);
  for (double v : grid) {
    if (!(v >= range.lo - 1e-9 && v <= range.hi + 1e-9)) {
      std::ostringstream msg;
      msg << to_string(kind) << " parameter " << v << " is outside the evaluated range [" << range.lo << ", " << range.hi
          << "]";
      throw std::invalid_argument(msg.str());
    }
  }
  std::optional<double> identity;
  if (include_identity) {
    identity = identity_param(kind);
    if (!identity) throw std::invalid_argument(to_string(kind) + " has no identity parameter");
  }

  auto accuracy_for = [&](const std::optional<TransformSpec>& t) {
    EvalOptions o = options;
    o.transform = t;
    const auto items = load_eval_set(manifest, o);
    if (items.empty()) throw std::invalid_argument("the " + to_string(options.split) + " split is empty");
    const auto scores = score_items(scorer, items, options.workers);
    std::vector<int> labels;
    for (const auto& it : items) labels.push_back(it.record->label);
    return metrics::accuracy_at_threshold(scores, labels, 0.5);
  };

  RobustnessCurve curve;
  curve.kind = kind;
  for (double v : grid) {
    // JPEG quality is an integer; grid values are rounded to the nearest one.
    const double param = kind == TransformKind::jpeg ? std::round(v) : v;
    curve.points.push_back({param, accuracy_for(TransformSpec{kind, param}), false});
  }
  if (identity) curve.points.push_back({*identity, accuracy_for(std::nullopt), true});
  return curve;
}

RobustnessCurve robustness_sweep(const Detector& detector, const DatasetManifest& manifest, TransformKind kind,
                                 const std::vector<double>& grid, const EvalOptions& options, bool include_identity) {
  const auto scorer = options.native_size ? detector_native_scorer(detector) : detector_scorer(detector);
  return robustness_sweep(scorer, manifest, kind, grid, options, include_identity);
}

std::string curve_csv(const RobustnessCurve& curve) {
  std::ostringstream os;
  os << "kind,param,accuracy,identity\n";
  for (const auto& p : curve.points)
    os << to_string(curve.kind) << ',' << format_number(p.param) << ',' << format_number(p.accuracy) << ','
       << (p.identity ? 1 : 0) << '\n';
  return os.str();
}

// --- ablation ---------------------------------------------------------------------------

const AblationRow& AblationReport::row(FusionMode mode) const {
  for (const auto& r : rows)
    if (r.mode == mode) return r;
  throw std::out_of_range("ablation report has no row for " + to_string(mode));
}

AblationReport run_ablation(const DatasetManifest& manifest, const TrainConfig& base,
                            const std::optional<TransformSpec>& corruption, std::ostream* log) {
  AblationReport report;
  report.corruption = corruption;
  EvalOptions clean_options;
  clean_options.seed = base.seed;
  clean_options.workers = base.workers;
  const auto clean = load_eval_set(manifest, clean_options);
  if (clean.empty()) throw std::invalid_argument("ablation needs a non-empty test split");
  EvalOptions corrupt_options = clean_options;
  corrupt_options.transform = corruption;
  const auto corrupted = corruption ? load_eval_set(manifest, corrupt_options) : std::vector<EvalItem>{};
  std::vector<int> labels;
  for (const auto& it : clean) labels.push_back(it.record->label);
  const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;

  auto make_row = [&](FusionMode mode, const std::vector<double>& s_clean, const std::vector<double>& s_corrupt) {
    AblationRow row;
    row.mode = mode;
    row.accuracy_clean = metrics::accuracy_at_threshold(s_clean, labels);
    row.accuracy_corrupted = corruption ? metrics::accuracy_at_threshold(s_corrupt, labels) : row.accuracy_clean;
    if (both) {
      row.ap_clean = metrics::average_precision(s_clean, labels);
      row.ap_corrupted = corruption ? metrics::average_precision(s_corrupt, labels) : *row.ap_clean;
    }
    return row;
  };

  std::map<FusionMode, std::pair<std::vector<double>, std::vector<double>>> scores;
  for (auto mode : {FusionMode::adaptive, FusionMode::only_semantic, FusionMode::only_artifact, FusionMode::simple_concat}) {
    TrainConfig cfg = base;
    cfg.fusion_mode = mode;
    if (log != nullptr) *log << nlohmann::json{{"ablation_mode", to_string(mode)}}.dump() << '\n';
    auto trained = train_detector(manifest, cfg, log);
    const auto scorer = detector_scorer(trained.detector);
    auto& s = scores[mode];
    s.first = score_items(scorer, clean, base.workers);
    if (corruption) s.second = score_items(scorer, corrupted, base.workers);
    report.rows.push_back(make_row(mode, s.first, s.second));
  }
  const auto& sem = scores[FusionMode::only_semantic];
  const auto& art = scores[FusionMode::only_artifact];
  for (auto mode : {FusionMode::avg, FusionMode::max, FusionMode::min}) {
    std::vector<double> c(clean.size()), k(corrupted.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = ablation_fuse(mode, sem.first[i], art.first[i]);
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = ablation_fuse(mode, sem.second[i], art.second[i]);
    report.rows.push_back(make_row(mode, c, k));
  }
  return report;
}

nlohmann::json to_json(const AblationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"mode", to_string(r.mode)},
                    {"accuracy_clean", r.accuracy_clean},
                    {"accuracy_corrupted", r.accuracy_corrupted},
                    {"ap_clean", opt(r.ap_clean)},
                    {"ap_corrupted", opt(r.ap_corrupted)}});
  return {{"corruption", report.corruption ? nlohmann::json(to_string(*report.corruption)) : nlohmann::json(nullptr)},
          {"rows", rows}};
}

}  // namespace synthdet
