#include "synthdet/toy_corpus.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace synthdet::toy {

namespace {

/// Sum of bilinearly upsampled random grids, coarse octaves weighted more.
void add_octave_noise(Image& img, Rng& rng, int coarsest_cells, int octaves, double amplitude, double falloff) {
  const int size = img.height();
  double amp = amplitude;
  int cells = coarsest_cells;
  for (int o = 0; o < octaves; ++o, cells *= 2, amp *= falloff) {
    Image grid(cells, cells, 3);
    for (auto& v : grid.pixels()) v = static_cast<float>(rng.normal() * amp);
    const auto up = resize_bilinear(grid, size, size);
    auto dst = img.pixels();
    auto src = up.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void add_blobs(Image& img, Rng& rng, int count, double saturation) {
  const int size = img.height();
  for (int b = 0; b < count; ++b) {
    const double cy = rng.uniform(0.1, 0.9) * size, cx = rng.uniform(0.1, 0.9) * size;
    const double ry = rng.uniform(0.08, 0.3) * size, rx = rng.uniform(0.08, 0.3) * size;
    float color[3];
    const double base = rng.uniform(0.2, 0.8);
    for (auto& c : color) c = static_cast<float>(std::clamp(base + saturation * rng.normal(), 0.0, 1.0));
    const double alpha = rng.uniform(0.4, 0.9);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d = std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2);
        if (d > 2.0) continue;
        const double w = alpha / (1.0 + std::exp((d - 1.0) * 8.0));
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>((1.0 - w) * img.at(y, x, c) + w * color[c]);
      }
  }
}

Image base_image(Rng& rng, int size, double tint_spread) {
  Image img(size, size, 3);
  const double level = rng.uniform(0.3, 0.7);
  float tint[3];
  for (auto& t : tint) t = static_cast<float>(level + tint_spread * rng.normal());
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = tint[c];
  return img;
}

}  // namespace

Image real_image(Rng& rng, int size) {
  Image img = base_image(rng, size, 0.04);
  add_octave_noise(img, rng, 4, 5, 0.10, 0.7);
  add_blobs(img, rng, static_cast<int>(rng.uniform_int(0, 2)), 0.05);
  for (auto& v : img.pixels()) v += static_cast<float>(0.015 * rng.normal());
  img.clamp01();
  return img;
}

Image synthetic_content(Rng& rng, int size) {
  Image img = base_image(rng, size, 0.12);
  add_octave_noise(img, rng, 4, 3, 0.08, 0.5);
  add_blobs(img, rng, static_cast<int>(rng.uniform_int(2, 6)), 0.35);
  img.clamp01();
  return img;
}

std::unique_ptr<PatchAutoencoder> make_generator(std::uint64_t seed) {
  auto gen = std::make_unique<PatchAutoencoder>(PatchAutoencoder::Config{4, 0, 6}, derive_seed(seed, 0x6E4));
  Rng rng(derive_seed(seed, 0x6E4, 1));
  std::vector<Image> content;
  for (int i = 0; i < 64; ++i) content.push_back(synthetic_content(rng, 112));
  PatchAutoencoder::TrainOptions options;
  options.steps = 2000;
  options.seed = derive_seed(seed, 0x6E4, 2);
  gen->train(content, options);
  return gen;
}

Image synthetic_image(const PatchAutoencoder& generator, Rng& rng, int size) {
  const int half = size / 2;
  const Image content = synthetic_content(rng, half);
  auto out = resize_bilinear(reconstruct(content, generator), size, size);
  out.clamp01();
  return out;
}

Image inject_checkerboard(const Image& image, double amplitude) {
  Image out = image;
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < out.channels(); ++c)
        out.at(y, x, c) += static_cast<float>(((x + y) % 2 == 0 ? amplitude : -amplitude));
  out.clamp01();
  return out;
}

DatasetManifest write_corpus(const std::filesystem::path& dir, const CorpusOptions& options) {
  if (options.n_real < 1 || options.n_synth < 1) throw std::invalid_argument("toy corpus needs at least one image per class");
  if (options.size < 16 || options.size % 8 != 0) throw std::invalid_argument("toy image size must be a multiple of 8, >= 16");
  std::filesystem::create_directories(dir / "real");
  std::filesystem::create_directories(dir / "synthetic");
  auto name = [](int i) {
    std::ostringstream os;
    os << std::setw(5) << std::setfill('0') << i << ".png";
    return os.str();
  };

  for (int i = 0; i < options.n_real; ++i) {
    Rng rng(derive_seed(options.seed, 0x4EA1, static_cast<std::uint64_t>(i)));
    save_image(dequantize(quantize(real_image(rng, options.size))), dir / "real" / name(i));
  }
  const auto generator = make_generator(options.seed);
  for (int i = 0; i < options.n_synth; ++i) {
    Rng rng(derive_seed(options.seed, 0x5E7, static_cast<std::uint64_t>(i)));
    const auto path = dir / "synthetic" / name(i);
    save_image(synthetic_image(*generator, rng, options.size), path);
    auto sidecar = path;
    sidecar.replace_extension(".json");
    std::ofstream(sidecar) << nlohmann::json{{"model_name", "toy-patch-ae"},
                                             {"steps", 10 + static_cast<int>(rng.uniform_int(0, 40))},
                                             {"guidance", std::round(rng.uniform(3.0, 7.0) * 10.0) / 10.0},
                                             {"jpeg_quality", nullptr}}
                                  .dump()
                           << '\n';
  }

  LabelingRule rule{{"real", {0, "toy-camera"}}, {"synthetic", {1, "toy-generator"}}};
  auto built = build_manifest(dir, rule);
  auto manifest = split_manifest(built.manifest, options.fractions, options.seed);
  save_manifest(manifest, dir / "manifest.json");
  return manifest;
}

}  // namespace synthdet::toy
