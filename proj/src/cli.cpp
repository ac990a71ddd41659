#include "synthdet/cli.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "synthdet/detector.hpp"
#include "synthdet/evaluation.hpp"
#include "synthdet/manifest.hpp"
#include "synthdet/plot.hpp"
#include "synthdet/spectrum.hpp"
#include "synthdet/toy_corpus.hpp"
#include "synthdet/training.hpp"

namespace fs = std::filesystem;

namespace synthdet::cli {

namespace {

/// Raised for flag combinations CLI11 cannot express; reported as a usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text, CommandResult& result) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  result.artifacts_written.push_back(path);
}

SplitFractions parse_fractions(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw UsageError("--split expects three comma-separated fractions, got '" + text + "'");
    }
  }
  if (v.size() != 3) throw UsageError("--split expects three comma-separated fractions, got '" + text + "'");
  return {v[0], v[1], v[2]};
}

TransformSpec transform_flag(const std::string& flag, const std::string& text) {
  try {
    auto spec = parse_transform(text);
    validate_transform(spec);
    return spec;
  } catch (const std::invalid_argument& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

std::unique_ptr<EmbeddingCache> cache_from_env() {
  if (auto dir = EmbeddingCache::directory_from_env()) return std::make_unique<EmbeddingCache>(*dir);
  return nullptr;
}

// --- manifest ---------------------------------------------------------------------

struct ManifestArgs {
  std::string root, out, split = "0.8,0.1,0.1", profile = "none", generate_toy;
  std::vector<std::string> rules;
  std::uint64_t seed = 0;
  bool no_split = false;
  int n_real = 2000, n_synth = 2000, size = 224;
};

CommandResult cmd_manifest(const ManifestArgs& a, std::ostream& out, std::ostream& err) {
  CommandResult result;
  const auto fractions = parse_fractions(a.split);
  if (!a.generate_toy.empty()) {
    toy::CorpusOptions options;
    options.n_real = a.n_real;
    options.n_synth = a.n_synth;
    options.size = a.size;
    options.seed = a.seed;
    options.fractions = fractions;
    const auto m = toy::write_corpus(a.generate_toy, options);
    result.artifacts_written.push_back(fs::path(a.generate_toy) / "manifest.json");
    result.summary = "wrote toy corpus with " + std::to_string(m.records.size()) + " images to " + a.generate_toy;
    out << result.summary << '\n';
    return result;
  }
  if (a.root.empty()) throw UsageError("manifest needs --root (or --generate-toy)");
  if (a.rules.empty()) throw UsageError("manifest needs at least one --rule dir=label:source");
  LabelingRule rule;
  for (const auto& r : a.rules) rule.insert(parse_labeling_rule(r));
  auto built = build_manifest(a.root, rule);
  for (const auto& w : built.warnings) err << "warning: " << w << '\n';
  auto manifest = a.no_split ? built.manifest : split_manifest(built.manifest, fractions, a.seed);
  const auto report = validate_manifest(manifest, a.profile == "benchmark" ? ValidationProfile::benchmark : ValidationProfile::none);
  for (const auto& v : report.violations)
    err << "violation" << (v.record ? " (record " + std::to_string(*v.record) + ")" : std::string()) << ": " << v.message << '\n';
  const fs::path out_path = a.out.empty() ? fs::path(a.root) / "manifest.json" : fs::path(a.out);
  save_manifest(manifest, out_path);
  result.artifacts_written.push_back(out_path);
  result.summary = "wrote " + std::to_string(manifest.records.size()) + " records to " + out_path.string();
  if (!report.ok()) {
    result.exit_code = 1;
    result.summary += " with " + std::to_string(report.violations.size()) + " violations";
  }
  out << result.summary << '\n';
  return result;
}

// --- train ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest, config, out, fusion_mode, log, corrupt, report, backbone, recon_backend;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers, epochs;
  bool ablation = false;
};

CommandResult cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  CommandResult result;
  TrainConfig cfg;
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw std::runtime_error("cannot open config " + a.config);
    cfg = train_config_from_json(nlohmann::json::parse(f));
  }
  if (!a.fusion_mode.empty()) cfg.fusion_mode = parse_fusion_mode(a.fusion_mode);
  if (a.seed) cfg.seed = *a.seed;
  if (a.workers) cfg.workers = *a.workers;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (!a.backbone.empty()) cfg.backbone = a.backbone;
  if (!a.recon_backend.empty()) cfg.recon_backend = a.recon_backend;
  validate_config(cfg);
  const auto manifest = load_manifest(a.manifest);

  std::ofstream log_file;
  std::ostream* log = nullptr;
  fs::path log_path = a.log;
  if (log_path.empty() && !a.out.empty()) log_path = a.out + ".log";
  if (!log_path.empty()) {
    if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
    log_file.open(log_path, std::ios::app);
    if (!log_file) throw std::runtime_error("cannot open log " + log_path.string());
    log = &log_file;
    result.artifacts_written.push_back(log_path);
  }

  if (a.ablation) {
    if (a.report.empty()) throw UsageError("--ablation needs --report PATH");
    std::optional<TransformSpec> corruption;
    if (!a.corrupt.empty()) corruption = transform_flag("--corrupt", a.corrupt);
    const auto report = run_ablation(manifest, cfg, corruption, log);
    write_text(a.report, to_json(report).dump(2) + "\n", result);
    std::ostringstream table;
    table << "mode            clean_acc  corrupted_acc\n";
    for (const auto& row : report.rows) {
      table << std::left << std::setw(16) << to_string(row.mode) << std::fixed << std::setprecision(4) << row.accuracy_clean
            << "     " << row.accuracy_corrupted << '\n';
    }
    out << table.str();
    result.summary = "ablation report written to " + a.report;
    return result;
  }

  if (a.out.empty()) throw UsageError("train needs --out PATH");
  auto trained = train_detector(manifest, cfg, log);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  trained.detector.save(a.out);
  result.artifacts_written.push_back(a.out);
  result.summary = "trained " + to_string(cfg.fusion_mode) + " model (best epoch " + std::to_string(trained.best_epoch) +
                   ") saved to " + a.out;
  out << result.summary << '\n';
  (void)err;
  return result;
}

// --- predict / eval / robustness -----------------------------------------------------------

CommandResult cmd_predict(const std::string& model, const std::vector<std::string>& inputs, std::ostream& out) {
  CommandResult result;
  const auto detector = Detector::load(model);
  auto cache = cache_from_env();
  for (const auto& path : inputs) {
    const double score = detector.predict_score(load_image(path), cache.get());
    out << nlohmann::json{{"path", path}, {"score", score}, {"label", score >= 0.5 ? 1 : 0}}.dump() << '\n';
  }
  result.summary = "scored " + std::to_string(inputs.size()) + " images";
  return result;
}

struct EvalArgs {
  std::string model, manifest, out, csv, transform, split = "test";
  double threshold = 0.5;
  std::uint64_t seed = 0;
  int workers = 1;
  bool native_size = false;
};

CommandResult cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  CommandResult result;
  const auto detector = Detector::load(a.model);
  const auto manifest = load_manifest(a.manifest);
  EvalOptions options;
  options.split = parse_split(a.split);
  options.seed = a.seed;
  options.workers = a.workers;
  options.native_size = a.native_size;
  if (!a.transform.empty()) options.transform = transform_flag("--transform", a.transform);
  auto cache = cache_from_env();
  const auto scorer = a.native_size ? detector_native_scorer(detector) : detector_scorer(detector, cache.get());
  const auto report = evaluate_report(scorer, manifest, a.threshold, options);
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  const auto text = to_json(report).dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text, result);
  }
  if (!a.csv.empty()) write_text(a.csv, report_csv(report), result);
  std::ostringstream summary;
  summary << "average accuracy "
          << (report.aggregate.accuracy ? std::to_string(*report.aggregate.accuracy) : std::string("n/a")) << ", AP "
          << (report.aggregate.ap ? std::to_string(*report.aggregate.ap) : std::string("n/a"));
  result.summary = summary.str();
  if (!a.out.empty()) out << result.summary << '\n';
  return result;
}

struct RobustnessArgs {
  std::string model, manifest, kind, grid, out, split = "test";
  std::uint64_t seed = 0;
  int workers = 1;
  bool include_identity = false, native_size = false;
};

CommandResult cmd_robustness(const RobustnessArgs& a, std::ostream& out) {
  CommandResult result;
  TransformKind kind;
  std::vector<double> grid;
  // Flag values are checked before any model or image is loaded.
  try {
    kind = parse_transform_kind(a.kind);
    const auto r = robustness_range(kind);
    if (a.grid.empty()) {
      std::ostringstream g;
      g << r.lo << ':' << r.hi << ":5";
      grid = parse_grid(g.str());
    } else {
      grid = parse_grid(a.grid);
    }
    for (double v : grid)
      if (v < r.lo - 1e-9 || v > r.hi + 1e-9) {
        std::ostringstream msg;
        msg << "--grid value " << v << " is outside the evaluated " << to_string(kind) << " range [" << r.lo << ", "
            << r.hi << "]";
        throw std::invalid_argument(msg.str());
      }
    if (a.include_identity && !identity_param(kind)) throw std::invalid_argument(to_string(kind) + " has no identity parameter");
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto detector = Detector::load(a.model);
  const auto manifest = load_manifest(a.manifest);
  EvalOptions options;
  options.split = parse_split(a.split);
  options.seed = a.seed;
  options.workers = a.workers;
  options.native_size = a.native_size;
  const auto curve = robustness_sweep(detector, manifest, kind, grid, options, a.include_identity);
  const auto csv = curve_csv(curve);
  if (a.out.empty()) {
    out << csv;
  } else {
    write_text(a.out, csv, result);
    out << "wrote " << curve.points.size() << " points to " << a.out << '\n';
  }
  result.summary = to_string(kind) + " sweep with " + std::to_string(curve.points.size()) + " points";
  return result;
}

// --- freq ----------------------------------------------------------------------------------

struct FreqArgs {
  std::string manifest, out_dir = "freq", split;
  int jpeg = 75, size = 256, limit = 500;
  bool power = false, no_denoise = false, residual = false;
};

CommandResult cmd_freq(const FreqArgs& a, std::ostream& out) {
  CommandResult result;
  const auto manifest = load_manifest(a.manifest);
  std::vector<Image> real, synth;
  for (const auto& r : manifest.records) {
    if (!a.split.empty() && r.split != parse_split(a.split)) continue;
    auto& bucket = r.label == 0 ? real : synth;
    if (static_cast<int>(bucket.size()) < a.limit) bucket.push_back(load_image(manifest.resolve(r)));
  }
  if (real.empty() || synth.empty()) throw std::runtime_error("frequency analysis needs real and synthetic images");
  SpectrumOptions options;
  options.size = a.size;
  options.power = a.power;
  if (a.no_denoise) options.denoiser = nullptr;
  options.residual = a.residual;

  auto compressed = [&](const std::vector<Image>& images) {
    std::vector<Image> outv;
    for (const auto& img : images) outv.push_back(jpeg_roundtrip(img, a.jpeg));
    return outv;
  };
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  nlohmann::json gaps;
  for (const bool jpeg : {false, true}) {
    const auto real_map = mean_spectrum(jpeg ? compressed(real) : real, options);
    const auto synth_map = mean_spectrum(jpeg ? compressed(synth) : synth, options);
    const auto gap = spectrum_gap_report(real_map, synth_map);
    const std::string tag = jpeg ? "_jpeg" + std::to_string(a.jpeg) : "";
    write_text(dir / ("real" + tag + ".csv"), spectrum_csv(real_map), result);
    write_text(dir / ("synthetic" + tag + ".csv"), spectrum_csv(synth_map), result);
    write_text(dir / ("difference" + tag + ".csv"), spectrum_csv(gap.difference), result);
    for (const auto& [name, map] : {std::pair{"real", &real_map}, {"synthetic", &synth_map}, {"difference", &gap.difference}}) {
      const auto png = dir / (std::string(name) + tag + ".png");
      save_spectrum_png(*map, png);
      result.artifacts_written.push_back(png);
    }
    gaps[jpeg ? "gap_after_jpeg" : "gap_before_jpeg"] = gap.gap;
  }
  gaps["jpeg_quality"] = a.jpeg;
  gaps["n_real"] = real.size();
  gaps["n_synthetic"] = synth.size();
  write_text(dir / "gap.json", gaps.dump(2) + "\n", result);
  result.summary = "high-band gap " + std::to_string(gaps["gap_before_jpeg"].get<double>()) + " before JPEG, " +
                   std::to_string(gaps["gap_after_jpeg"].get<double>()) + " after JPEG-" + std::to_string(a.jpeg);
  out << result.summary << '\n';
  return result;
}

}  // namespace

CommandResult run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Real/synthetic image detector: corpus tools, training, evaluation and diagnostics", "synthdet"};
  app.require_subcommand(1);

  ManifestArgs ma;
  auto* manifest = app.add_subcommand("manifest", "Build and split a dataset manifest, or generate the toy corpus");
  manifest->add_option("--root", ma.root, "Corpus root directory");
  manifest->add_option("--rule", ma.rules, "Labeling rule dir=label:source (label: real|synthetic)");
  manifest->add_option("--out", ma.out, "Manifest path (default ROOT/manifest.json)");
  manifest->add_option("--split", ma.split, "train,val,test fractions")->capture_default_str();
  manifest->add_flag("--no-split", ma.no_split, "Keep every record in train");
  manifest->add_option("--profile", ma.profile, "Validation profile")->check(CLI::IsMember({"none", "benchmark"}))->capture_default_str();
  manifest->add_option("--seed", ma.seed, "Split seed")->capture_default_str();
  manifest->add_option("--generate-toy", ma.generate_toy, "Write the toy corpus to this directory");
  manifest->add_option("--real", ma.n_real, "Toy real images")->capture_default_str();
  manifest->add_option("--synth", ma.n_synth, "Toy synthetic images")->capture_default_str();
  manifest->add_option("--size", ma.size, "Toy image size")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a detector (or run the fusion ablation)");
  train->add_option("--manifest", ta.manifest, "Manifest path")->required();
  train->add_option("--config", ta.config, "Training config (JSON)");
  train->add_option("--out", ta.out, "Checkpoint path");
  train->add_option("--fusion-mode", ta.fusion_mode, "Fusion mode")
      ->check(CLI::IsMember({"adaptive", "only_semantic", "only_artifact", "simple_concat"}));
  train->add_option("--backbone", ta.backbone, "toy|toy:<seed>|external:<path>");
  train->add_option("--recon-backend", ta.recon_backend, "identity|toy|external:<path>");
  train->add_option("--seed", ta.seed, "Seed for every random choice");
  train->add_option("--epochs", ta.epochs, "Override the configured epoch count");
  train->add_option("--workers", ta.workers, "Feature preparation threads");
  train->add_option("--log", ta.log, "Append-only JSON-lines training log (default OUT.log)");
  train->add_flag("--ablation", ta.ablation, "Train every fusion mode and compare them");
  train->add_option("--corrupt", ta.corrupt, "Test-set corruption for --ablation, e.g. jpeg:75");
  train->add_option("--report", ta.report, "Ablation report path (JSON)");

  std::string predict_model;
  std::vector<std::string> predict_inputs;
  auto* predict = app.add_subcommand("predict", "Score images; prints one JSON record per image");
  predict->add_option("--model", predict_model, "Checkpoint path")->required();
  predict->add_option("--input", predict_inputs, "Image path(s)")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Per-source metrics report");
  eval->add_option("--model", ea.model, "Checkpoint path")->required();
  eval->add_option("--manifest", ea.manifest, "Manifest path")->required();
  eval->add_option("--out", ea.out, "Report path (JSON); stdout when omitted");
  eval->add_option("--csv", ea.csv, "Flat CSV report path");
  eval->add_option("--transform", ea.transform, "Corruption applied to every image, e.g. jpeg:75");
  eval->add_option("--threshold", ea.threshold, "Decision threshold")->capture_default_str();
  eval->add_option("--split", ea.split, "Evaluated split")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  eval->add_option("--seed", ea.seed, "Seed for random transforms")->capture_default_str();
  eval->add_option("--workers", ea.workers, "Scoring threads")->capture_default_str();
  eval->add_flag("--native-size", ea.native_size, "Score images at their own size");

  RobustnessArgs ra;
  auto* robust = app.add_subcommand("robustness", "Accuracy under one transform over a parameter grid");
  robust->add_option("--model", ra.model, "Checkpoint path")->required();
  robust->add_option("--manifest", ra.manifest, "Manifest path")->required();
  robust->add_option("--kind", ra.kind, "jpeg|blur|resize|noise|brightness|saturation|contrast")->required();
  robust->add_option("--grid", ra.grid, "lo:hi:n (default: the full range, 5 points)");
  robust->add_option("--out", ra.out, "Curve CSV path; stdout when omitted");
  robust->add_option("--split", ra.split, "Evaluated split")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  robust->add_option("--seed", ra.seed, "Seed for random transforms")->capture_default_str();
  robust->add_option("--workers", ra.workers, "Scoring threads")->capture_default_str();
  robust->add_flag("--include-identity", ra.include_identity, "Append the untransformed point");
  robust->add_flag("--native-size", ra.native_size, "Feed resized images at their new size");

  FreqArgs fa;
  auto* freq = app.add_subcommand("freq", "Average frequency spectra of real vs synthetic, before and after JPEG");
  freq->add_option("--manifest", fa.manifest, "Manifest path")->required();
  freq->add_option("--split", fa.split, "Restrict to one split")->check(CLI::IsMember({"train", "val", "test"}));
  freq->add_option("--jpeg", fa.jpeg, "JPEG quality of the compressed pass")->check(CLI::Range(1, 100))->capture_default_str();
  freq->add_option("--out-dir", fa.out_dir, "Output directory")->capture_default_str();
  freq->add_option("--size", fa.size, "Analysis size (0 = native)")->capture_default_str();
  freq->add_option("--limit", fa.limit, "Images per class")->capture_default_str();
  freq->add_flag("--power", fa.power, "Average log power instead of log magnitude");
  freq->add_flag("--no-denoise", fa.no_denoise, "Skip the median denoiser");
  freq->add_flag("--residual", fa.residual, "Transform the noise residual instead of the denoised image");

  std::string plot_input, plot_out;
  auto* plot = app.add_subcommand("plot", "Render a robustness-curve or spectrum CSV as PNG");
  plot->add_option("--input", plot_input, "CSV path")->required();
  plot->add_option("--out", plot_out, "PNG path")->required();

  CommandResult result;
  if (args.empty()) {
    err << app.help();
    result.exit_code = 2;
    result.summary = "no subcommand given";
    return result;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    result.summary = "help";
    return result;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    result.exit_code = 2;
    result.summary = e.what();
    return result;
  }

  try {
    if (*manifest) return cmd_manifest(ma, out, err);
    if (*train) return cmd_train(ta, out, err);
    if (*predict) return cmd_predict(predict_model, predict_inputs, out);
    if (*eval) return cmd_eval(ea, out, err);
    if (*robust) return cmd_robustness(ra, out);
    if (*freq) return cmd_freq(fa, out);
    if (*plot) {
      plot_csv(plot_input, plot_out);
      result.artifacts_written.push_back(plot_out);
      result.summary = "wrote " + plot_out;
      out << result.summary << '\n';
      return result;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    result.exit_code = 2;
    result.summary = e.what();
    return result;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    result.exit_code = 1;
    result.summary = e.what();
    return result;
  }
  result.exit_code = 2;
  return result;
}

}  // namespace synthdet::cli
