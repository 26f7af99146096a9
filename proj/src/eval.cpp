#include "kcnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "kcnn/detail/binio.hpp"
#include "kcnn/detail/parallel.hpp"
#include "kcnn/error.hpp"

namespace kcnn {

namespace {

// Drops junk ids and, unless it counts, the query itself.
std::vector<std::string> scored_ranking(std::span<const std::string> ranked,
                                        const QueryTruth& truth) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (const auto& id : ranked) {
    if (!seen.insert(id).second) {
      throw ConfigError("ranked list for query '" + truth.query_id + "' repeats id '" + id + "'");
    }
    if (truth.is_junk(id)) continue;
    if (!truth.count_query_itself && id == truth.query_id) continue;
    out.push_back(id);
  }
  return out;
}

double reference_value(TransformKind kind) { return kind == TransformKind::Scale ? 1.0 : 0.0; }

TransformSpec spec_for(TransformKind kind, double value) {
  TransformSpec s;
  s.kind = kind;
  switch (kind) {
    case TransformKind::Translate: s.t = static_cast<int>(std::lround(value)); break;
    case TransformKind::Scale: s.s = value; break;
    case TransformKind::Rotate: s.theta = value; break;
  }
  return s;
}

}  // namespace

std::size_t QueryTruth::relevant_count() const {
  std::size_t r = 0;
  for (const auto& [id, label] : labels) {
    if (label == Relevance::Relevant && id != query_id) ++r;
  }
  return r + (count_query_itself ? 1 : 0);
}

bool QueryTruth::is_relevant(const std::string& id) const {
  if (count_query_itself && id == query_id) return true;
  const auto it = labels.find(id);
  return it != labels.end() && it->second == Relevance::Relevant;
}

bool QueryTruth::is_junk(const std::string& id) const {
  const auto it = labels.find(id);
  return it != labels.end() && it->second == Relevance::Junk;
}

GroundTruth parse_ground_truth(const std::string& text, bool count_query_itself) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("query_id,image_id,label", 0) != 0) {
    throw ParseError("ground-truth header missing", 0);
  }
  GroundTruth gt;
  std::map<std::string, std::size_t> slot;
  std::uint64_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    const std::uint64_t row_at = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 3 || f[0].empty() || f[1].empty()) {
      throw ParseError("ground-truth row needs query_id,image_id,label", row_at);
    }
    Relevance label;
    if (f[2] == "rel") {
      label = Relevance::Relevant;
    } else if (f[2] == "nonrel") {
      label = Relevance::NonRelevant;
    } else if (f[2] == "junk") {
      label = Relevance::Junk;
    } else {
      throw ParseError("unknown ground-truth label '" + f[2] + "'", row_at);
    }
    auto [it, inserted] = slot.try_emplace(f[0], gt.size());
    if (inserted) gt.push_back(QueryTruth{f[0], {}, count_query_itself});
    gt[it->second].labels[f[1]] = label;
  }
  return gt;
}

GroundTruth load_ground_truth(const std::string& path, bool count_query_itself) {
  const auto bytes = detail::read_file(path);
  return parse_ground_truth(std::string(bytes.begin(), bytes.end()), count_query_itself);
}

std::string ground_truth_to_csv(const GroundTruth& gt) {
  std::string out = "query_id,image_id,label\n";
  for (const auto& q : gt) {
    for (const auto& [id, label] : q.labels) {
      const char* name = label == Relevance::Relevant      ? "rel"
                         : label == Relevance::NonRelevant ? "nonrel"
                                                           : "junk";
      out += q.query_id + "," + id + "," + name + "\n";
    }
  }
  return out;
}

double average_precision(std::span<const std::string> ranked, const QueryTruth& truth) {
  const std::size_t total_relevant = truth.relevant_count();
  if (total_relevant == 0) {
    throw UndefinedError("query '" + truth.query_id + "' has no relevant images");
  }
  const auto list = scored_ranking(ranked, truth);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!truth.is_relevant(list[i])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(total_relevant);
}

double mean_ap(std::span<const double> aps) {
  if (aps.empty()) throw UndefinedError("mean AP over zero queries");
  double s = 0.0;
  for (double a : aps) s += a;
  return s / static_cast<double>(aps.size());
}

double top4_score(std::span<const std::string> ranked, const QueryTruth& truth) {
  const auto list = scored_ranking(ranked, truth);
  const std::size_t n = std::min<std::size_t>(4, list.size());
  double count = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (truth.is_relevant(list[i])) count += 1.0;
  }
  return count;
}

std::vector<double> default_grid(TransformKind kind, int width) {
  std::vector<double> grid;
  switch (kind) {
    case TransformKind::Translate:
      for (int k = 0; k <= 16; ++k) {
        grid.push_back(static_cast<double>(std::lround(static_cast<double>(k) * width / 16.0)));
      }
      grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
      break;
    case TransformKind::Scale:
      for (int k = 0; k <= 12; ++k) grid.push_back(0.5 + 0.125 * k);
      break;
    case TransformKind::Rotate:
      for (int k = 0; k < 16; ++k) grid.push_back(22.5 * k);
      break;
  }
  return grid;
}

SensitivityCurve sensitivity_study(std::span<const Image> corpus, TransformKind kind,
                                   std::span<const double> grid, const FeatureFn& feature,
                                   int threads) {
  if (corpus.empty()) throw EmptyInputError("sensitivity study needs a non-empty corpus");
  if (grid.empty()) throw ConfigError("sensitivity grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("sensitivity grid must strictly increase");
  }
  const double ref = reference_value(kind);
  if (std::find(grid.begin(), grid.end(), ref) == grid.end()) {
    throw ConfigError(std::string("sensitivity grid for ") + to_string(kind) +
                      " must contain the reference value");
  }
  if (kind == TransformKind::Translate) {
    for (double g : grid) {
      if (g != std::floor(g)) throw ConfigError("translation grid values must be integers");
    }
  }

  const std::size_t n = corpus.size();
  const std::size_t m = grid.size();
  const int workers = detail::resolve_threads(threads);

  std::vector<std::vector<double>> reference(n);
  detail::parallel_for(n, workers, [&](std::size_t i) {
    reference[i] = feature(apply_transform(corpus[i], spec_for(kind, ref)));
  });
  std::vector<double> sims(n * m);
  detail::parallel_for(n * m, workers, [&](std::size_t job) {
    const std::size_t i = job / m;
    const std::size_t j = job % m;
    const auto f = feature(apply_transform(corpus[i], spec_for(kind, grid[j])));
    const auto& r = reference[i];
    if (f.size() != r.size()) throw ShapeError("feature dimension changed under transform");
    double s = 0.0;
    for (std::size_t d = 0; d < f.size(); ++d) s += r[d] * f[d];
    sims[job] = s;
  });

  SensitivityCurve curve;
  curve.kind = kind;
  for (std::size_t j = 0; j < m; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += sims[i * m + j];
    const double mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = sims[i * m + j] - mean;
      var += d * d;
    }
    curve.points.push_back({grid[j], mean, std::sqrt(var / static_cast<double>(n)), n});
  }
  return curve;
}

std::string curve_to_csv(const SensitivityCurve& curve) {
  std::string out = "param,mean,std,count\n";
  char buf[128];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%zu\n", p.param, p.mean, p.stddev, p.count);
    out += buf;
  }
  return out;
}

}  // namespace kcnn
