#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "kcnn/embed.hpp"
#include "kcnn/error.hpp"
#include "kcnn/eval.hpp"
#include "kcnn/pipeline.hpp"
#include "test_support.hpp"

using namespace kcnn;
using namespace kcnn::testing;

namespace {

// Global-descriptor similarity at t = 64 over synth_base_image seeds 1000..1009.
constexpr double kFrozenHalfWidthMean = 0.283614442949;

QueryTruth truth(const std::string& q, std::vector<std::string> rel, std::vector<std::string> junk = {},
                 bool count_self = false) {
  QueryTruth t{q, {}, count_self};
  for (auto& r : rel) t.labels[r] = Relevance::Relevant;
  for (auto& j : junk) t.labels[j] = Relevance::Junk;
  return t;
}

// Area under the stepwise precision-recall curve: sum over cut-offs of
// precision times the recall gained at that cut-off.
double oracle_ap(const std::vector<std::string>& ranked, const QueryTruth& t) {
  std::vector<std::string> kept;
  for (const auto& id : ranked) {
    const auto it = t.labels.find(id);
    if (it != t.labels.end() && it->second == Relevance::Junk) continue;
    if (!t.count_query_itself && id == t.query_id) continue;
    kept.push_back(id);
  }
  std::size_t relevant = 0;
  for (const auto& [id, lab] : t.labels) relevant += lab == Relevance::Relevant && id != t.query_id;
  if (t.count_query_itself) ++relevant;
  double area = 0.0, recall_prev = 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 1; n <= kept.size(); ++n) {
    const auto& id = kept[n - 1];
    const auto it = t.labels.find(id);
    const bool rel = (t.count_query_itself && id == t.query_id) ||
                     (it != t.labels.end() && it->second == Relevance::Relevant);
    hits += rel;
    const double precision = static_cast<double>(hits) / n;
    const double recall = static_cast<double>(hits) / relevant;
    area += precision * (recall - recall_prev);
    recall_prev = recall;
  }
  return area;
}

}  // namespace

TEST_CASE("average precision examples") {
  const std::vector<std::string> perfect{"a", "b", "c", "x", "y"};
  CHECK(average_precision(perfect, truth("q", {"a", "b", "c"})) == 1.0);

  const std::vector<std::string> gaps{"a", "x", "b", "y"};
  CHECK(average_precision(gaps, truth("q", {"a", "b"})) == doctest::Approx((1.0 + 2.0 / 3) / 2));

  const std::vector<std::string> junk_first{"j", "a", "x"};
  CHECK(average_precision(junk_first, truth("q", {"a"}, {"j"})) == 1.0);

  // The query is dropped from its own list unless it counts.
  const std::vector<std::string> with_self{"q", "a", "x"};
  CHECK(average_precision(with_self, truth("q", {"a"})) == 1.0);
  CHECK(average_precision(with_self, truth("q", {"a"}, {}, true)) == 1.0);

  // Relevant items missing from the ranking still count in R.
  const std::vector<std::string> partial{"a", "x"};
  CHECK(average_precision(partial, truth("q", {"a", "b"})) == 0.5);

  CHECK_THROWS_AS(average_precision(perfect, truth("q", {})), UndefinedError);
  const std::vector<std::string> dup{"a", "a"};
  CHECK_THROWS_AS(average_precision(dup, truth("q", {"a"})), ConfigError);
}

TEST_CASE("average precision equals the precision-recall oracle") {
  TestRng rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.integer(1, 20);
    std::vector<std::string> ranked;
    for (int i = 0; i < n; ++i) ranked.push_back("i" + std::to_string(i));
    std::shuffle(ranked.begin(), ranked.end(), rng.engine());
    QueryTruth t{"i0", {}, rng.integer(0, 1) == 1};
    for (int i = 0; i < n + 3; ++i) {
      const double u = rng.uniform();
      const std::string id = "i" + std::to_string(i);
      if (u < 0.3) t.labels[id] = Relevance::Relevant;
      else if (u < 0.4) t.labels[id] = Relevance::Junk;
      else if (u < 0.5) t.labels[id] = Relevance::NonRelevant;
    }
    if (t.relevant_count() == 0) t.labels["i" + std::to_string(n + 5)] = Relevance::Relevant;
    const double ap = average_precision(ranked, t);
    CHECK(std::abs(ap - oracle_ap(ranked, t)) < 1e-12);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);

    // Junk inserted anywhere never moves AP.
    auto with_junk = ranked;
    for (int j = 0; j < 3; ++j) {
      const std::string id = "junk" + std::to_string(j);
      t.labels[id] = Relevance::Junk;
      with_junk.insert(with_junk.begin() + rng.integer(0, static_cast<int>(with_junk.size())), id);
    }
    CHECK(average_precision(with_junk, t) == ap);
  }
}

TEST_CASE("AP ignores the order of non-relevant items after the last hit") {
  const QueryTruth t = truth("q", {"a", "b"});
  const std::vector<std::string> one{"a", "x", "b", "y", "z", "w"};
  const std::vector<std::string> two{"a", "x", "b", "w", "z", "y"};
  CHECK(average_precision(one, t) == average_precision(two, t));
}

TEST_CASE("mean AP and top-4") {
  const std::vector<double> single{0.25};
  CHECK(mean_ap(single) == 0.25);
  const std::vector<double> pair{1.0, 0.0};
  CHECK(mean_ap(pair) == 0.5);
  CHECK_THROWS_AS(mean_ap(std::span<const double>{}), UndefinedError);

  const QueryTruth group = truth("q", {"a", "b", "c"}, {}, true);
  const std::vector<std::string> all_in{"q", "c", "a", "b", "x"};
  CHECK(top4_score(all_in, group) == 4.0);
  const std::vector<std::string> none{"x", "y", "z", "w", "q"};
  CHECK(top4_score(none, group) == 0.0);
  const std::vector<std::string> some{"x", "a", "y", "q"};
  CHECK(top4_score(some, group) == 2.0);
  const std::vector<std::string> short_list{"a"};
  CHECK(top4_score(short_list, group) == 1.0);
}

TEST_CASE("ground-truth CSV") {
  const std::string text =
      "query_id,image_id,label\nq1,a,rel\nq1,b,junk\nq2,c,rel\nq1,d,nonrel\n";
  const auto gt = parse_ground_truth(text, false);
  REQUIRE(gt.size() == 2);
  CHECK(gt[0].query_id == "q1");
  CHECK(gt[0].relevant_count() == 1);
  CHECK(gt[0].is_junk("b"));
  CHECK_FALSE(gt[0].is_relevant("d"));
  CHECK(parse_ground_truth(ground_truth_to_csv(gt), false)[0].labels == gt[0].labels);
  CHECK(parse_ground_truth(text, true)[1].relevant_count() == 2);
  CHECK_THROWS_AS(parse_ground_truth("q,i,l\n", false), ParseError);
  CHECK_THROWS_AS(parse_ground_truth("query_id,image_id,label\nq,a,maybe\n", false), ParseError);
  CHECK_THROWS_AS(parse_ground_truth("query_id,image_id,label\nq,a\n", false), ParseError);
}

TEST_CASE("default grids") {
  const auto t = default_grid(TransformKind::Translate, 128);
  REQUIRE(t.size() == 17);
  CHECK(t.front() == 0.0);
  CHECK(t[8] == 64.0);
  CHECK(t.back() == 128.0);
  const auto s = default_grid(TransformKind::Scale, 128);
  REQUIRE(s.size() == 13);
  CHECK(s.front() == 0.5);
  CHECK(s[4] == 1.0);
  CHECK(s.back() == 2.0);
  const auto r = default_grid(TransformKind::Rotate, 128);
  REQUIRE(r.size() == 16);
  CHECK(r[1] == 22.5);
}

TEST_CASE("sensitivity study") {
  const FeatureFn global = [](const Image& im) { return embed_image_global(im).values; };
  TestRng rng(62);

  SUBCASE("reference points are exactly one") {
    std::vector<Image> corpus;
    for (int i = 0; i < 4; ++i) corpus.push_back(random_texture(64, 64, rng));
    for (auto kind : {TransformKind::Translate, TransformKind::Scale, TransformKind::Rotate}) {
      const auto grid = default_grid(kind, 64);
      const auto curve = sensitivity_study(corpus, kind, grid, global, 2);
      REQUIRE(curve.points.size() == grid.size());
      const double ref = kind == TransformKind::Scale ? 1.0 : 0.0;
      const auto it = std::find_if(curve.points.begin(), curve.points.end(),
                                   [&](const CurvePoint& p) { return p.param == ref; });
      REQUIRE(it != curve.points.end());
      CHECK(std::abs(it->mean - 1.0) <= 1e-9);
      CHECK(std::abs(it->stddev) <= 1e-9);
      CHECK(it->count == 4);
    }
  }

  SUBCASE("constant corpus is flat") {
    std::vector<Image> corpus{Image(64, 64, 0.3), Image(64, 64, 0.8)};
    for (auto kind : {TransformKind::Translate, TransformKind::Scale, TransformKind::Rotate}) {
      const auto curve = sensitivity_study(corpus, kind, default_grid(kind, 64), global);
      for (const auto& p : curve.points) CHECK(std::abs(p.mean - 1.0) <= 1e-9);
    }
  }

  SUBCASE("structured corpus decorrelates at half-width translation") {
    std::vector<Image> corpus;
    for (int i = 0; i < 10; ++i) corpus.push_back(synth_base_image(128, 1000 + i));
    const auto grid = default_grid(TransformKind::Translate, 128);
    const auto curve = sensitivity_study(corpus, TransformKind::Translate, grid, global);
    const auto& half = curve.points[8];
    REQUIRE(half.param == 64.0);
    CHECK(half.mean < 1.0);
    // Frozen from a fixed-seed run of this exact configuration.
    CHECK(half.mean == doctest::Approx(kFrozenHalfWidthMean).epsilon(1e-9));
    std::printf("translate t=64 mean similarity: %.12f\n", half.mean);
    const auto again = sensitivity_study(corpus, TransformKind::Translate, grid, global, 3);
    CHECK(curve_to_csv(again) == curve_to_csv(curve));
  }

  SUBCASE("invalid grids") {
    std::vector<Image> corpus{Image(32, 32, 0.5)};
    const std::vector<double> no_ref{4, 8};
    CHECK_THROWS_AS(sensitivity_study(corpus, TransformKind::Translate, no_ref, global), ConfigError);
    const std::vector<double> unsorted{0, 8, 4};
    CHECK_THROWS_AS(sensitivity_study(corpus, TransformKind::Translate, unsorted, global), ConfigError);
    const std::vector<double> fractional{0, 2.5};
    CHECK_THROWS_AS(sensitivity_study(corpus, TransformKind::Translate, fractional, global), ConfigError);
    const std::vector<double> scale_no_one{0.5, 2.0};
    CHECK_THROWS_AS(sensitivity_study(corpus, TransformKind::Scale, scale_no_one, global), ConfigError);
    CHECK_THROWS_AS(sensitivity_study(std::span<const Image>{}, TransformKind::Rotate,
                                      default_grid(TransformKind::Rotate, 32), global),
                    EmptyInputError);
  }

  SUBCASE("curve CSV") {
    SensitivityCurve c{TransformKind::Scale, {{1.0, 1.0, 0.0, 3}, {1.125, 0.5, 0.25, 3}}};
    CHECK(curve_to_csv(c) == "param,mean,std,count\n1.000000,1.000000,0.000000,3\n"
                             "1.125000,0.500000,0.250000,3\n");
  }
}
