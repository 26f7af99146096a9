#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kcnn/raster.hpp"

namespace kcnn {

enum class Relevance { Relevant, NonRelevant, Junk };

/// Annotations for one query. Ids absent from `labels` are non-relevant.
struct QueryTruth {
  std::string query_id;
  std::map<std::string, Relevance> labels;
  /// UKBench convention: the query stays in its own ranked list and counts
  /// as relevant. Otherwise it is dropped from the list before scoring.
  bool count_query_itself = false;

  std::size_t relevant_count() const;
  bool is_relevant(const std::string& id) const;
  bool is_junk(const std::string& id) const;
};

/// Queries in order of first appearance in the ground-truth file.
using GroundTruth = std::vector<QueryTruth>;

/// CSV `query_id,image_id,label` with label in {rel, nonrel, junk}.
GroundTruth parse_ground_truth(const std::string& text, bool count_query_itself);
GroundTruth load_ground_truth(const std::string& path, bool count_query_itself);
std::string ground_truth_to_csv(const GroundTruth& gt);

/// Sum of precision at each relevant hit divided by the number of relevant
/// items, after junk (and, unless counted, the query) is removed from the
/// ranking. Throws UndefinedError when nothing is relevant.
double average_precision(std::span<const std::string> ranked, const QueryTruth& truth);

/// Arithmetic mean; throws UndefinedError on an empty list.
double mean_ap(std::span<const double> aps);

/// Relevant ids among the first four entries of the ranking.
double top4_score(std::span<const std::string> ranked, const QueryTruth& truth);

struct CurvePoint {
  double param = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

struct SensitivityCurve {
  TransformKind kind = TransformKind::Translate;
  std::vector<CurvePoint> points;
};

/// Maps an image to a unit-norm feature vector.
using FeatureFn = std::function<std::vector<double>(const Image&)>;

/// Default parameter grids: translation in 16 equal steps over [0, width],
/// scale 0.5..2.0 in steps of 0.125, rotation in multiples of 22.5 degrees.
std::vector<double> default_grid(TransformKind kind, int width);

/// For each grid value, mean and population std of the cosine between the
/// feature of each image at the reference setting (t=0, s=1, theta=0) and
/// the feature of its transformed copy. The grid must be strictly increasing
/// and contain the reference value.
SensitivityCurve sensitivity_study(std::span<const Image> corpus, TransformKind kind,
                                   std::span<const double> grid, const FeatureFn& feature,
                                   int threads = 1);

/// CSV `param,mean,std,count`, six decimals.
std::string curve_to_csv(const SensitivityCurve& curve);

}  // namespace kcnn
