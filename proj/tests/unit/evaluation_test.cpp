#include "synthdet/evaluation.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "small_corpus.hpp"

using namespace synthdet;

namespace {

// Scores by mean brightness, so it depends on the transform applied.
Scorer brightness_scorer() {
  return [](const ImageRecord&, const Image& img) {
    double s = 0;
    for (float v : img.pixels()) s += v;
    return s / static_cast<double>(img.size());
  };
}

}  // namespace

TEST(Report, PerSourceRowsAgainstAllReals) {
  const std::vector<LabeledScore> scored{{"cam", 0, 0.1}, {"cam", 0, 0.6}, {"a", 1, 0.7}, {"a", 1, 0.2},
                                         {"b", 1, 0.9}, {"b", 1, 0.8}, {"b", 1, 0.4}};
  const auto r = build_report(scored, 0.5);
  ASSERT_EQ(r.per_source.size(), 2u);
  const auto& a = r.per_source.at("a");
  EXPECT_EQ(a.n_real, 2);
  EXPECT_EQ(a.n_synth, 2);
  const std::vector<double> sa{0.1, 0.6, 0.7, 0.2};
  const std::vector<int> la{0, 0, 1, 1};
  EXPECT_NEAR(*a.ap, oracle::average_precision(sa, la), 1e-12);
  EXPECT_NEAR(*a.roc_auc, oracle::roc_auc(sa, la), 1e-12);
  EXPECT_DOUBLE_EQ(*a.accuracy, 0.5);
  const auto& b = r.per_source.at("b");
  EXPECT_NEAR(*r.aggregate.ap, (*a.ap + *b.ap) / 2, 1e-12);
  EXPECT_EQ(r.aggregate.n_real, 2);
  EXPECT_EQ(r.aggregate.n_synth, 5);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Report, SourceWithoutRealsHasNullRankMetricsAndWarning) {
  const auto r = build_report({{"a", 1, 0.7}, {"a", 1, 0.2}}, 0.5);
  const auto& a = r.per_source.at("a");
  EXPECT_FALSE(a.ap.has_value());
  EXPECT_FALSE(a.roc_auc.has_value());
  EXPECT_TRUE(a.accuracy.has_value());
  EXPECT_FALSE(r.aggregate.ap.has_value());
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("'a'"), std::string::npos);
}

TEST(Report, JsonRoundTripAndCsv) {
  auto r = build_report({{"cam", 0, 0.1}, {"a", 1, 0.7}, {"b", 1, 0.3}}, 0.5);
  r.metadata = {{"seed", 3}};
  EXPECT_EQ(report_from_json(to_json(r)), r);
  const auto csv = report_csv(r);
  EXPECT_EQ(csv.rfind("source,metric,value\n", 0), 0u);
  EXPECT_NE(csv.find("a,ap,1\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("average,accuracy,"), std::string::npos);
  const auto j = to_json(build_report({{"a", 1, 0.7}}, 0.5));
  EXPECT_TRUE(j["per_source"]["a"]["ap"].is_null());
}

TEST(Grid, Parse) {
  EXPECT_EQ(parse_grid("0.5:2.5:5"), (std::vector<double>{0.5, 1.0, 1.5, 2.0, 2.5}));
  EXPECT_EQ(parse_grid("75:75:1"), std::vector<double>{75});
  EXPECT_THROW(parse_grid("1:2"), std::invalid_argument);
  EXPECT_THROW(parse_grid("2:1:3"), std::invalid_argument);
  EXPECT_THROW(parse_grid("1:2:x"), std::invalid_argument);
}

TEST(Robustness, OnePointPerGridValueAndReproducible) {
  const auto& m = small_corpus();
  const auto grid = parse_grid("0.05:0.25:3");
  EvalOptions opt;
  opt.seed = 4;
  const auto a = robustness_sweep(brightness_scorer(), m, TransformKind::noise, grid, opt, true);
  const auto b = robustness_sweep(brightness_scorer(), m, TransformKind::noise, grid, opt, true);
  ASSERT_EQ(a.points.size(), 4u);
  EXPECT_TRUE(a.points.back().identity);
  EXPECT_EQ(a.points.back().param, 0.0);
  EXPECT_EQ(curve_csv(a), curve_csv(b));
  for (const auto& p : a.points) EXPECT_TRUE(p.accuracy >= 0.0 && p.accuracy <= 1.0);
}

TEST(Robustness, OutOfRangeGridNamesTheRange) {
  try {
    robustness_sweep(brightness_scorer(), small_corpus(), TransformKind::blur, {0.5, 3.0});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("[0.5, 2.5]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(robustness_sweep(brightness_scorer(), small_corpus(), TransformKind::jpeg, {80}, {}, true),
               std::invalid_argument);
}

TEST(Robustness, JpegGridIsRounded) {
  const auto c = robustness_sweep(brightness_scorer(), small_corpus(), TransformKind::jpeg, {80.4});
  EXPECT_EQ(c.points[0].param, 80.0);
  EXPECT_EQ(curve_csv(c).substr(0, 32), "kind,param,accuracy,identity\njpe");
}

TEST(EvalSet, TransformIsSeededPerImage) {
  const auto& m = small_corpus();
  EvalOptions opt;
  opt.transform = TransformSpec{TransformKind::noise, 0.1};
  opt.seed = 1;
  const auto a = load_eval_set(m, opt), b = load_eval_set(m, opt);
  ASSERT_GE(a.size(), 2u);
  EXPECT_EQ(a[0].image, b[0].image);
  opt.seed = 2;
  EXPECT_NE(load_eval_set(m, opt)[0].image, a[0].image);
}

TEST(Evaluate, ReportCarriesMetadataAndParallelMatchesSerial) {
  const auto& m = small_corpus();
  EvalOptions opt;
  const auto serial = evaluate_report(brightness_scorer(), m, 0.5, opt);
  opt.workers = 3;
  const auto parallel = evaluate_report(brightness_scorer(), m, 0.5, opt);
  EXPECT_EQ(serial.per_source, parallel.per_source);
  EXPECT_EQ(serial.metadata["split"], "test");
  EXPECT_EQ(serial.per_source.size(), 1u);
}
