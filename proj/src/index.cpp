#include "kcnn/index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kcnn/detail/binio.hpp"
#include "kcnn/detail/parallel.hpp"
#include "kcnn/error.hpp"

namespace kcnn {

namespace {

constexpr char kKidxMagic[] = "KIDX";
constexpr std::uint32_t kKidxVersion = 1;
constexpr double kUnitTolerance = 1e-5;

template <typename T>
QueryResult scan(const Index& index, std::span<const T> query, std::size_t k, int threads) {
  if (index.size() == 0) return {};
  if (query.size() != index.dim()) {
    throw ShapeError("query dimension " + std::to_string(query.size()) +
                     " does not match index dimension " + std::to_string(index.dim()));
  }
  if (k < 1) throw ConfigError("search k must be >= 1");
  for (T v : query) {
    if (!std::isfinite(v)) throw ShapeError("query contains non-finite values");
  }
  std::vector<double> scores(index.size());
  detail::parallel_for(index.size(), detail::resolve_threads(threads), [&](std::size_t i) {
    const auto v = index.vector(i);
    double s = 0.0;
    for (std::size_t d = 0; d < v.size(); ++d) {
      s += static_cast<double>(v[d]) * static_cast<double>(query[d]);
    }
    scores[i] = s;
  });
  // Ids are stored sorted, so position order is id order.
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t keep = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  QueryResult out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back({index.ids()[order[i]], scores[order[i]]});
  return out;
}

}  // namespace

IndexEntry make_entry(std::string image_id, const FisherVector& fv) {
  IndexEntry e{std::move(image_id), {}};
  e.vector.assign(fv.values.begin(), fv.values.end());
  return e;
}

Index Index::build(std::vector<IndexEntry> entries) {
  Index index;
  if (entries.empty()) return index;
  std::sort(entries.begin(), entries.end(),
            [](const IndexEntry& a, const IndexEntry& b) { return a.image_id < b.image_id; });
  index.dim_ = entries.front().vector.size();
  if (index.dim_ == 0) throw BuildError("entry '" + entries.front().image_id + "' has no values");
  index.ids_.reserve(entries.size());
  index.values_.reserve(entries.size() * index.dim_);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (i > 0 && e.image_id == entries[i - 1].image_id) {
      throw BuildError("duplicate image id '" + e.image_id + "'");
    }
    if (e.vector.size() != index.dim_) {
      throw BuildError("entry '" + e.image_id + "' has dimension " +
                       std::to_string(e.vector.size()) + ", expected " +
                       std::to_string(index.dim_));
    }
    double sq = 0.0;
    for (float v : e.vector) {
      if (!std::isfinite(v)) throw BuildError("entry '" + e.image_id + "' has non-finite values");
      sq += static_cast<double>(v) * v;
    }
    if (std::abs(std::sqrt(sq) - 1.0) > kUnitTolerance) {
      throw BuildError("entry '" + e.image_id + "' is not unit length");
    }
    index.ids_.push_back(e.image_id);
    index.values_.insert(index.values_.end(), e.vector.begin(), e.vector.end());
  }
  return index;
}

std::size_t Index::find(const std::string& id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return ids_.size();
  return static_cast<std::size_t>(it - ids_.begin());
}

QueryResult Index::search(std::span<const float> query, std::size_t k, int threads) const {
  return scan(*this, query, k, threads);
}

QueryResult Index::search(std::span<const double> query, std::size_t k, int threads) const {
  return scan(*this, query, k, threads);
}

std::vector<char> Index::encode() const {
  detail::ByteWriter w;
  w.magic(kKidxMagic);
  w.put<std::uint32_t>(kKidxVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim_));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ids_.size()));
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ids_[i].size()));
    w.put_bytes(ids_[i]);
    w.put_span<float>(vector(i));
  }
  return w.bytes();
}

Index Index::decode(std::span<const char> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kKidxMagic);
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kKidxVersion) throw UnsupportedVersionError(version, version_at);
  const auto dim = r.get<std::uint32_t>("dim");
  const auto count = r.get<std::uint32_t>("count");
  std::vector<IndexEntry> entries;
  entries.reserve(std::min<std::size_t>(count, bytes.size() / 8));
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len_at = r.offset();
    const auto len = r.get<std::uint32_t>("id length");
    if (len == 0) throw ParseError("empty image id", len_at);
    IndexEntry e;
    e.image_id = r.get_string(len, "image id");
    e.vector.resize(dim);
    r.get_into<float>(e.vector, "vector values");
    entries.push_back(std::move(e));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last entry", r.offset());
  const auto end = r.offset();
  try {
    return build(std::move(entries));
  } catch (const BuildError& e) {
    throw ParseError(e.what(), end);
  }
}

void Index::save(const std::string& path) const { detail::write_file(path, encode()); }

Index Index::load(const std::string& path) { return decode(detail::read_file(path)); }

}  // namespace kcnn
