#include "synthdet/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "synthdet/hash.hpp"
#include "synthdet/image.hpp"
#include "synthdet/random.hpp"

namespace fs = std::filesystem;

namespace synthdet {

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

std::vector<const ImageRecord*> DatasetManifest::in_split(Split split) const {
  std::vector<const ImageRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

std::pair<std::string, LabelAssignment> parse_labeling_rule(std::string_view text) {
  const auto eq = text.find('=');
  const auto colon = text.find(':', eq == std::string_view::npos ? 0 : eq);
  if (eq == std::string_view::npos || colon == std::string_view::npos || eq == 0 || colon + 1 == text.size())
    throw std::invalid_argument("labeling rule must look like dir=label:source, got '" + std::string(text) + "'");
  const auto label = text.substr(eq + 1, colon - eq - 1);
  LabelAssignment a;
  if (label == "real" || label == "0") {
    a.label = 0;
  } else if (label == "synthetic" || label == "1") {
    a.label = 1;
  } else {
    throw std::invalid_argument("labeling rule label must be real, synthetic, 0 or 1, got '" + std::string(label) + "'");
  }
  a.source = std::string(text.substr(colon + 1));
  auto dir = fs::path(std::string(text.substr(0, eq))).lexically_normal().generic_string();
  if (dir.size() > 1 && dir.back() == '/') dir.pop_back();
  return {dir, a};
}

// --- JSON ---------------------------------------------------------------------------

namespace {

nlohmann::json generation_to_json(const GenerationConfig& g) {
  nlohmann::json j = {{"model_name", g.model_name}, {"steps", g.steps}, {"guidance", g.guidance}};
  j["jpeg_quality"] = g.jpeg_quality ? nlohmann::json(*g.jpeg_quality) : nlohmann::json(nullptr);
  return j;
}

GenerationConfig generation_from_json(const nlohmann::json& j) {
  GenerationConfig g;
  g.model_name = j.at("model_name").get<std::string>();
  g.steps = j.at("steps").get<int>();
  g.guidance = j.at("guidance").get<double>();
  if (j.contains("jpeg_quality") && !j.at("jpeg_quality").is_null()) g.jpeg_quality = j.at("jpeg_quality").get<int>();
  return g;
}

}  // namespace

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) {
    nlohmann::json transforms = nlohmann::json::array();
    for (const auto& t : r.applied_transforms) transforms.push_back(to_string(t));
    records.push_back({{"path", r.path},
                       {"label", r.label},
                       {"source", r.source},
                       {"caption_dataset", r.caption_dataset ? nlohmann::json(*r.caption_dataset) : nlohmann::json(nullptr)},
                       {"generation", r.generation ? generation_to_json(*r.generation) : nlohmann::json(nullptr)},
                       {"applied_transforms", transforms},
                       {"split", to_string(r.split)}});
  }
  return {{"schema_version", m.schema_version}, {"records", records}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchemaVersion)
      throw std::runtime_error("unsupported manifest schema_version " + std::to_string(m.schema_version) +
                               " (this build reads version " + std::to_string(kManifestSchemaVersion) + ")");
    for (const auto& jr : j.at("records")) {
      ImageRecord r;
      r.path = jr.at("path").get<std::string>();
      r.label = jr.at("label").get<int>();
      r.source = jr.at("source").get<std::string>();
      if (jr.contains("caption_dataset") && !jr["caption_dataset"].is_null())
        r.caption_dataset = jr["caption_dataset"].get<std::string>();
      if (jr.contains("generation") && !jr["generation"].is_null()) r.generation = generation_from_json(jr["generation"]);
      if (jr.contains("applied_transforms"))
        for (const auto& t : jr["applied_transforms"]) r.applied_transforms.push_back(parse_transform(t.get<std::string>()));
      r.split = parse_split(jr.value("split", std::string("train")));
      m.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  DatasetManifest out = m;
  const auto target_root = fs::absolute(path).parent_path();
  if (!m.root.empty()) {
    const auto source_root = fs::absolute(m.root);
    if (source_root.lexically_normal() != target_root.lexically_normal())
      for (auto& r : out.records) r.path = (source_root / r.path).lexically_normal().lexically_relative(target_root).generic_string();
  }
  if (!target_root.empty()) fs::create_directories(target_root);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest " + path.string());
  f << to_json(out).dump(1) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  auto m = manifest_from_json(j);
  m.root = fs::absolute(path).parent_path();
  return m;
}

// --- build ----------------------------------------------------------------------------

namespace {

const LabelAssignment* match_rule(const LabelingRule& rule, const std::string& dir) {
  // Deepest rule whose directory contains `dir`.
  const LabelAssignment* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& [key, assignment] : rule) {
    const bool covers = key == "." || dir == key || (dir.size() > key.size() && dir.compare(0, key.size(), key) == 0 &&
                                                     dir[key.size()] == '/');
    const std::size_t len = key == "." ? 0 : key.size() + 1;
    if (covers && (best == nullptr || len > best_len)) {
      best = &assignment;
      best_len = len;
    }
  }
  return best;
}

}  // namespace

BuildResult build_manifest(const fs::path& root, const LabelingRule& rule) {
  if (!fs::is_directory(root)) throw std::invalid_argument("corpus root is not a directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && is_supported_image_extension(entry.path())) files.push_back(entry.path());
  if (files.empty()) throw std::runtime_error("no images found under " + root.string());
  std::sort(files.begin(), files.end());

  BuildResult result;
  result.manifest.root = fs::absolute(root);
  std::set<std::string> uncovered;
  for (const auto& file : files) {
    const auto rel = file.lexically_relative(root).generic_string();
    auto dir = fs::path(rel).parent_path().generic_string();
    if (dir.empty()) dir = ".";
    const auto* assignment = match_rule(rule, dir);
    if (assignment == nullptr) {
      uncovered.insert(dir);
      continue;
    }
    try {
      (void)load_image8(file);
    } catch (const std::exception& e) {
      result.warnings.push_back("skipped undecodable image " + rel + ": " + e.what());
      continue;
    }
    ImageRecord record;
    record.path = rel;
    record.label = assignment->label;
    record.source = assignment->source;

    auto sidecar = file;
    sidecar.replace_extension(".json");
    if (fs::exists(sidecar)) {
      if (record.label == 0) {
        result.warnings.push_back("ignored generation sidecar for real image " + rel);
      } else {
        try {
          std::ifstream f(sidecar);
          const auto j = nlohmann::json::parse(f);
          record.generation = generation_from_json(j);
          if (j.contains("caption_dataset") && !j["caption_dataset"].is_null())
            record.caption_dataset = j["caption_dataset"].get<std::string>();
        } catch (const std::exception& e) {
          result.warnings.push_back("ignored malformed sidecar " + sidecar.lexically_relative(root).generic_string() + ": " +
                                    e.what());
        }
      }
    }
    result.manifest.records.push_back(std::move(record));
  }
  if (!uncovered.empty()) {
    std::string dirs;
    for (const auto& d : uncovered) dirs += (dirs.empty() ? "" : ", ") + d;
    throw std::invalid_argument("no labeling rule covers image directories: " + dirs);
  }
  if (result.manifest.records.empty()) throw std::runtime_error("no images found under " + root.string());
  return result;
}

// --- validation ---------------------------------------------------------------------

ValidationReport validate_manifest(const DatasetManifest& m, ValidationProfile profile) {
  ValidationReport report;
  auto add = [&](std::optional<std::size_t> i, std::string msg) { report.violations.push_back({i, std::move(msg)}); };
  if (m.schema_version != kManifestSchemaVersion)
    add(std::nullopt, "unsupported schema_version " + std::to_string(m.schema_version));
  std::set<std::string> seen;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (r.path.empty()) add(i, "empty path");
    if (!seen.insert(r.path).second) add(i, "duplicate path " + r.path);
    if (r.label != 0 && r.label != 1) add(i, "label must be 0 or 1, got " + std::to_string(r.label));
    if (r.generation && r.label != 1) add(i, "generation config on a real image");
    for (const auto& t : r.applied_transforms) {
      try {
        validate_transform(t);
      } catch (const std::invalid_argument& e) {
        add(i, e.what());
      }
    }
    if (profile == ValidationProfile::benchmark && r.generation) {
      const auto& g = *r.generation;
      if (g.steps < 10 || g.steps > 50) add(i, "steps " + std::to_string(g.steps) + " outside [10, 50]");
      if (!(g.guidance >= 3.0 && g.guidance <= 7.0)) add(i, "guidance " + std::to_string(g.guidance) + " outside [3.0, 7.0]");
      if (g.jpeg_quality && (*g.jpeg_quality < 75 || *g.jpeg_quality > 95))
        add(i, "jpeg_quality " + std::to_string(*g.jpeg_quality) + " outside [75, 95]");
    }
  }
  return report;
}

// --- split -------------------------------------------------------------------------------

namespace {

struct Keyed {
  std::size_t index;
  double key;
  double tiebreak;
};

void sort_keyed(std::vector<Keyed>& v) {
  std::sort(v.begin(), v.end(), [](const Keyed& a, const Keyed& b) {
    if (a.key != b.key) return a.key < b.key;
    if (a.tiebreak != b.tiebreak) return a.tiebreak < b.tiebreak;
    return a.index < b.index;
  });
}

/// Evenly spread keys (k + 0.5) / n over `members` after a seeded shuffle.
std::vector<Keyed> spread(std::vector<std::size_t> members, Rng& rng) {
  rng.shuffle(std::span<std::size_t>(members));
  std::vector<Keyed> out;
  const double n = static_cast<double>(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) out.push_back({members[k], (static_cast<double>(k) + 0.5) / n, rng.uniform()});
  return out;
}

}  // namespace

DatasetManifest split_manifest(const DatasetManifest& m, const SplitFractions& fractions, std::uint64_t seed) {
  const double f[3] = {fractions.train, fractions.val, fractions.test};
  for (double x : f)
    if (!(x >= 0.0)) throw std::invalid_argument("split fractions must be non-negative");
  if (std::fabs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");

  DatasetManifest out = m;
  std::sort(out.records.begin(), out.records.end(), [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
  const std::size_t n = out.records.size();

  Rng rng(mix_seed(seed));
  std::vector<Keyed> global;
  for (int label : {0, 1}) {
    std::map<std::string, std::vector<std::size_t>> by_source;
    for (std::size_t i = 0; i < n; ++i)
      if (out.records[i].label == label) by_source[out.records[i].source].push_back(i);
    std::vector<Keyed> within;
    for (auto& [source, members] : by_source) {
      auto keyed = spread(std::move(members), rng);
      within.insert(within.end(), keyed.begin(), keyed.end());
    }
    sort_keyed(within);
    std::vector<std::size_t> order;
    for (const auto& k : within) order.push_back(k.index);
    // Keep the interleaved source order; re-key by rank within the label.
    const double nl = static_cast<double>(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) global.push_back({order[r], (static_cast<double>(r) + 0.5) / nl, rng.uniform()});
  }
  sort_keyed(global);

  // Largest-remainder split sizes.
  std::size_t counts[3];
  double remainders[3];
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = f[s] * static_cast<double>(n);
    counts[s] = static_cast<std::size_t>(std::floor(exact));
    remainders[s] = exact - static_cast<double>(counts[s]);
    assigned += counts[s];
  }
  while (assigned < n) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (remainders[s] > remainders[best]) best = s;
    ++counts[best];
    remainders[best] = -1.0;
    ++assigned;
  }

  std::size_t pos = 0;
  for (int s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < counts[s]; ++c, ++pos) out.records[global[pos].index].split = static_cast<Split>(s);
  return out;
}

}  // namespace synthdet
