#pragma once

#include <span>
#include <string>
#include <vector>

#include "kcnn/encode.hpp"

namespace kcnn {

struct IndexEntry {
  std::string image_id;
  std::vector<float> vector;
};

struct ScoredId {
  std::string image_id;
  double score = 0.0;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// Ranked by descending score, ties by ascending image id.
using QueryResult = std::vector<ScoredId>;

/// Immutable linear-scan index over unit-norm image vectors. Entries are kept
/// sorted by id, so construction order never shows in results or files.
class Index {
 public:
  Index() = default;

  /// Throws BuildError on duplicate ids, mismatched lengths, non-finite
  /// values or vectors that are not unit length.
  static Index build(std::vector<IndexEntry> entries);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> vector(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  /// Position of `id`, or size() when absent.
  std::size_t find(const std::string& id) const;

  /// Exact top-k by inner product. `threads` only partitions the scan.
  QueryResult search(std::span<const float> query, std::size_t k, int threads = 1) const;
  QueryResult search(std::span<const double> query, std::size_t k, int threads = 1) const;

  std::vector<char> encode() const;
  static Index decode(std::span<const char> bytes);
  void save(const std::string& path) const;
  static Index load(const std::string& path);

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> values_;
};

/// Converts a normalized FisherVector to an index entry.
IndexEntry make_entry(std::string image_id, const FisherVector& fv);

}  // namespace kcnn
