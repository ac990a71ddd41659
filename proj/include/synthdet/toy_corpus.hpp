#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "synthdet/artifact.hpp"
#include "synthdet/manifest.hpp"
#include "synthdet/random.hpp"

namespace synthdet::toy {

/// Stand-in for a camera photograph: multi-octave filtered noise, a few soft
/// blobs and per-pixel sensor noise.
Image real_image(Rng& rng, int size = 224);

/// Content drawn from the generator's own prior, rendered at half resolution.
Image synthetic_content(Rng& rng, int size);

/// Patch autoencoder playing the role of an image generator's decoder.
std::unique_ptr<PatchAutoencoder> make_generator(std::uint64_t seed);

/// Generated image: content at size / 2 passed through the generator's
/// encode/decode, then bilinearly upsampled by 2.
Image synthetic_image(const PatchAutoencoder& generator, Rng& rng, int size = 224);

/// Adds a +/- amplitude checkerboard (period 2), clamped to [0, 1].
Image inject_checkerboard(const Image& image, double amplitude);

struct CorpusOptions {
  int n_real = 2000;
  int n_synth = 2000;
  int size = 224;
  std::uint64_t seed = 0;
  SplitFractions fractions;
};

/// Writes `dir/real/*.png` and `dir/synthetic/*.png` (with generation sidecars)
/// and returns the split manifest, also saved as `dir/manifest.json`.
DatasetManifest write_corpus(const std::filesystem::path& dir, const CorpusOptions& options);

}  // namespace synthdet::toy
