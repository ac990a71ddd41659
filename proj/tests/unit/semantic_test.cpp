#include "synthdet/semantic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <thread>

using namespace synthdet;

namespace {

Image random_image(std::uint64_t seed, int size = 64) {
  Rng rng(seed);
  Image img(size, size, 3);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("synthdet_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * b[i];
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

SoftSample sample(std::vector<double> v, double score) { return {std::move(v), score}; }

}  // namespace

TEST(ToyBackbone, DeterministicAcrossInstances) {
  const auto a = ConvBackbone::toy(3), b = ConvBackbone::toy(3), c = ConvBackbone::toy(4);
  EXPECT_EQ(a->dim(), 64);
  EXPECT_EQ(a->id(), "toy-conv-v1-seed3");
  EXPECT_EQ(a->weights_checksum(), b->weights_checksum());
  EXPECT_NE(a->weights_checksum(), c->weights_checksum());
  const auto img = random_image(1, 224);
  EXPECT_EQ(a->embed(img), b->embed(img));
}

TEST(ToyBackbone, CosineRegression) {
  // Frozen on first run; guards the weight generator and forward pass against drift.
  const auto bb = ConvBackbone::toy(0);
  const auto e1 = bb->embed(random_image(11, 224));
  const auto e2 = bb->embed(random_image(12, 224));
  EXPECT_NEAR(cosine(e1, e2), 0.9999619901662572, 1e-6);
}

TEST(ToyBackbone, RejectsBadInput) {
  const auto bb = ConvBackbone::toy(0);
  EXPECT_THROW(bb->embed(Image(64, 64, 1)), std::invalid_argument);
  EXPECT_THROW(bb->embed(Image(8, 8, 3)), std::invalid_argument);
}

TEST(Backbone, SpecParsingAndExternalRoundTrip) {
  EXPECT_EQ(make_backbone("toy")->id(), "toy-conv-v1-seed0");
  EXPECT_EQ(make_backbone("toy:9")->id(), "toy-conv-v1-seed9");
  EXPECT_THROW(make_backbone("clip"), std::invalid_argument);
  const auto dir = fresh_dir("backbone");
  std::filesystem::create_directories(dir);
  ConvBackbone::toy(5)->save(dir / "bb.sdw");
  const auto ext = make_backbone("external:" + (dir / "bb.sdw").string());
  EXPECT_EQ(ext->weights_checksum(), ConvBackbone::toy(5)->weights_checksum());
  EXPECT_EQ(ext->embed(random_image(2)), ConvBackbone::toy(5)->embed(random_image(2)));
  const auto again = backbone_from_descriptor(ext->descriptor());
  EXPECT_EQ(again->id(), ext->id());
  std::filesystem::remove(dir / "bb.sdw");
  EXPECT_THROW(backbone_from_descriptor(ext->descriptor()), CheckpointError);
}

TEST(EmbeddingCache, HitReturnsStoredVectorAndPersists) {
  const auto dir = fresh_dir("cache");
  const auto bb = ConvBackbone::toy(0);
  const auto img = random_image(3);
  std::vector<float> first;
  {
    EmbeddingCache cache(dir);
    first = embed_image(img, *bb, &cache);
    EXPECT_EQ(cache.size(), 1u);
    EXPECT_EQ(*cache.get(content_hash(img), bb->id()), first);
    EXPECT_FALSE(cache.get(content_hash(img), "other-backbone").has_value());
  }
  EmbeddingCache reopened(dir);
  EXPECT_EQ(reopened.size(), 1u);
  EXPECT_EQ(embed_image(img, *bb, &reopened), first);
}

TEST(EmbeddingCache, ConcurrentWritersAndReaders) {
  const auto dir = fresh_dir("cache_mt");
  EmbeddingCache cache(dir);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&cache, t] {
      for (int i = 0; i < 50; ++i) {
        const std::vector<float> v{float(t), float(i)};
        cache.put(static_cast<std::uint64_t>(t * 1000 + i), "bb", v);
        EXPECT_TRUE(cache.get(static_cast<std::uint64_t>(t * 1000 + i), "bb").has_value());
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(cache.size(), 200u);
  EXPECT_EQ(EmbeddingCache(dir).size(), 200u);
}

TEST(EmbedImage, NormalizeGivesUnitNorm) {
  const auto e = embed_image(random_image(4), *ConvBackbone::toy(0), nullptr, true);
  double n = 0;
  for (float v : e) n += double(v) * v;
  EXPECT_NEAR(n, 1.0, 1e-5);
}

TEST(Interpolation, EndpointsAreExact) {
  const auto r = sample({1.5, -2.0, 0.25}, 0.0), s = sample({-0.5, 4.0, 1.0}, 1.0);
  const auto at0 = interpolate_features(r, s, 0.0), at1 = interpolate_features(r, s, 1.0);
  EXPECT_EQ(at0.embedding, r.embedding);
  EXPECT_EQ(at0.score, 0.0);
  EXPECT_EQ(at1.embedding, s.embedding);
  EXPECT_EQ(at1.score, 1.0);
}

TEST(Interpolation, LinearInDelta) {
  const auto r = sample({0.0, 2.0}, 0.0), s = sample({4.0, -2.0}, 1.0);
  const auto mid = interpolate_features(r, s, 0.25);
  EXPECT_EQ(mid.embedding, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(mid.score, 0.25);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double d = rng.uniform();
    const auto v = interpolate_features(r, s, d);
    EXPECT_NEAR(v.embedding[0], 4.0 * d, 1e-15);
    EXPECT_NEAR(v.embedding[1], 2.0 - 4.0 * d, 1e-15);
    EXPECT_EQ(v.score, d);
  }
}

TEST(Interpolation, InvalidInputsAreRejected) {
  const auto r = sample({0.0, 1.0}, 0.0), s = sample({1.0, 1.0}, 1.0);
  EXPECT_THROW(interpolate_features(r, sample({1.0}, 1.0), 0.5), std::invalid_argument);
  EXPECT_THROW(interpolate_features(r, s, 1.5), std::invalid_argument);
  EXPECT_THROW(interpolate_features(s, r, 0.5), std::invalid_argument);
}

TEST(Interpolation, ReplacedFractionMatchesRate) {
  Rng rng(6);
  std::size_t replaced = 0, total = 0;
  while (total < 10000) {
    std::vector<double> scores(32);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    scores[0] = 0.0;
    scores[1] = 1.0;
    const auto plan = plan_interpolation(scores, 0.5, rng);
    replaced += plan.entries.size();
    total += scores.size();
    for (const auto& e : plan.entries) {
      ASSERT_EQ(scores[e.real_index], 0.0);
      ASSERT_EQ(scores[e.synth_index], 1.0);
      ASSERT_TRUE(e.delta >= 0.0 && e.delta < 1.0);
    }
  }
  const double fraction = double(replaced) / double(total);
  EXPECT_GE(fraction, 0.47);
  EXPECT_LE(fraction, 0.53);
}

TEST(Interpolation, SingleClassBatchIsFlaggedAndUntouched) {
  Rng rng(7);
  const std::vector<SoftSample> batch{sample({1.0}, 0.0), sample({2.0}, 0.0)};
  const auto out = augment_batch_with_interpolation(batch, 0.5, rng);
  EXPECT_TRUE(out.single_class);
  EXPECT_EQ(out.samples[1].embedding, batch[1].embedding);
  EXPECT_FALSE(out.replaced[0]);
}

TEST(Interpolation, RateZeroAndOne) {
  Rng rng(8);
  std::vector<SoftSample> batch;
  for (int i = 0; i < 10; ++i) batch.push_back(sample({double(i)}, i % 2));
  EXPECT_EQ(augment_batch_with_interpolation(batch, 0.0, rng).samples[3].embedding, batch[3].embedding);
  const auto all = augment_batch_with_interpolation(batch, 1.0, rng);
  for (bool r : all.replaced) EXPECT_TRUE(r);
  EXPECT_THROW(augment_batch_with_interpolation(batch, 1.5, rng), std::invalid_argument);
}
