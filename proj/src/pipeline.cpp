#include "kcnn/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "kcnn/detail/binio.hpp"
#include "kcnn/detail/parallel.hpp"
#include "kcnn/error.hpp"

namespace fs = std::filesystem;

namespace kcnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "' expects on/off, got '" + v + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

// Tags an error with the pipeline stage it escaped from. The innermost
// stage wins.
class StageError : public Error {
 public:
  using Error::Error;
};

template <typename Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  proposals.validate();
  if (pca_dim < 1) throw ConfigError("D must be >= 1");
  if (components < 1) throw ConfigError("V must be >= 1");
}

void PipelineConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "N") {
    proposals.count = static_cast<int>(parse_int(key, v));
  } else if (key == "D") {
    pca_dim = static_cast<std::size_t>(std::max(0LL, parse_int(key, v)));
  } else if (key == "V") {
    components = static_cast<std::size_t>(std::max(0LL, parse_int(key, v)));
  } else if (key == "rotations") {
    rotations = parse_bool(key, v);
    proposals.include_rotations = rotations;
  } else if (key == "normalization") {
    normalization = normalization_from_string(v);
  } else if (key == "whitening") {
    whitening = parse_bool(key, v);
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_int(key, v));
  } else if (key == "threads") {
    threads = static_cast<int>(parse_int(key, v));
  } else if (key == "proposer") {
    if (v == "objectness") {
      proposer = Proposer::Objectness;
    } else if (v == "global") {
      proposer = Proposer::Global;
    } else {
      throw ConfigError("unknown proposer '" + v + "'");
    }
  } else if (key == "nms_iou") {
    proposals.nms_iou = parse_double(key, v);
  } else if (key == "scales") {
    proposals.scales.clear();
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      proposals.scales.push_back(static_cast<int>(parse_int(key, trim(item))));
    }
  } else if (key == "full_side") {
    proposals.include_full_side = parse_bool(key, v);
  } else if (key == "gmm_train_samples") {
    gmm_train_samples = static_cast<std::size_t>(std::max(0LL, parse_int(key, v)));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

PipelineConfig load_config(const std::string& path, PipelineConfig base) {
  const auto bytes = detail::read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    base.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

int resolve_thread_count(int flag_value) {
  if (flag_value >= 1) return flag_value;
  if (const char* env = std::getenv("KCNN_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return detail::resolve_threads(0);
}

std::vector<Patch> proposals_for(const Image& img, const PipelineConfig& cfg) {
  if (cfg.proposer == Proposer::Global) return {full_frame_patch(img)};
  return propose(img, cfg.proposals);
}

DescriptorSet describe(const std::string& image_id, const Image& img, const PipelineConfig& cfg) {
  return describe_image(image_id, img, proposals_for(img, cfg), cfg.rotations);
}

FisherVector encode_descriptors(const EncoderModel& model, const DescriptorSet& set,
                                Normalization policy) {
  set.validate();
  SampleMatrix reduced;
  for (const auto& e : set.entries) reduced.push_back(pca_project(model.pca, e.descriptor.values));
  return aggregate(model.gmm, reduced, policy);
}

EncoderModel train_encoder(const std::vector<DescriptorSet>& sets, const PipelineConfig& cfg) {
  SampleMatrix all;
  for (const auto& s : sets) {
    for (const auto& e : s.entries) all.push_back(e.descriptor.values);
  }
  EncoderModel model;
  model.pca = staged("pca", [&] { return pca_train(all, cfg.pca_dim, cfg.whitening); });

  std::vector<std::size_t> pick(all.rows());
  std::iota(pick.begin(), pick.end(), 0);
  if (cfg.gmm_train_samples > 0 && pick.size() > cfg.gmm_train_samples) {
    // Seeded Fisher-Yates; written out so the subset is stdlib-independent.
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = pick.size() - 1; i > 0; --i) {
      std::swap(pick[i], pick[static_cast<std::size_t>(rng() % (i + 1))]);
    }
    pick.resize(cfg.gmm_train_samples);
    std::sort(pick.begin(), pick.end());
  }
  SampleMatrix train;
  for (std::size_t i : pick) train.push_back(pca_project(model.pca, all.row(i)));

  GmmTrainOptions opts;
  opts.threads = resolve_thread_count(cfg.threads);
  model.gmm = staged("gmm", [&] { return gmm_train(train, cfg.components, cfg.seed, opts).model; });
  return model;
}

std::vector<CorpusImage> list_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("corpus directory '" + dir + "' does not exist");
  std::vector<CorpusImage> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      out.push_back({entry.path().stem().string(), entry.path().string()});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const CorpusImage& a, const CorpusImage& b) { return a.id < b.id; });
  if (out.empty()) throw IoError("corpus directory '" + dir + "' has no .pgm images");
  return out;
}

PipelineOutputs run_pipeline(const PipelineConfig& cfg, const std::string& corpus_dir,
                             const std::string& out_dir) {
  staged("config", [&] { cfg.validate(); });
  const int threads = resolve_thread_count(cfg.threads);
  const auto corpus = staged("corpus", [&] { return list_corpus(corpus_dir); });
  staged("io", [&] {
    fs::create_directories(fs::path(out_dir) / "patches");
    fs::create_directories(fs::path(out_dir) / "descriptors");
  });

  std::vector<DescriptorSet> sets(corpus.size());
  staged("embed", [&] {
    detail::parallel_for(corpus.size(), threads, [&](std::size_t i) {
      const Image img = read_pgm(corpus[i].path);
      const auto patches = staged("propose", [&] { return proposals_for(img, cfg); });
      const auto csv = patches_to_csv(patches);
      detail::write_file((fs::path(out_dir) / "patches" / (corpus[i].id + ".csv")).string(),
                         std::span<const char>(csv.data(), csv.size()));
      // Continue from the persisted single-precision form so a step-by-step
      // run over the written files reproduces this index exactly.
      const auto bytes = encode_kdesc(describe_image(corpus[i].id, img, patches, cfg.rotations));
      detail::write_file((fs::path(out_dir) / "descriptors" / (corpus[i].id + ".kdesc")).string(),
                         bytes);
      sets[i] = decode_kdesc(bytes, corpus[i].id);
    });
  });

  PipelineOutputs out;
  out.model = staged("train", [&] { return train_encoder(sets, cfg); });
  staged("train", [&] { save_model(out.model, (fs::path(out_dir) / "model.kmdl").string()); });

  std::vector<IndexEntry> entries(corpus.size());
  staged("encode", [&] {
    detail::parallel_for(corpus.size(), threads, [&](std::size_t i) {
      entries[i] = make_entry(corpus[i].id, encode_descriptors(out.model, sets[i], cfg.normalization));
    });
  });
  out.index = staged("index", [&] { return Index::build(std::move(entries)); });
  out.index_path = (fs::path(out_dir) / "index.kidx").string();
  staged("index", [&] { out.index.save(out.index_path); });
  return out;
}

EvalMode eval_mode_from_string(const std::string& name) {
  if (name == "map") return EvalMode::MeanAP;
  if (name == "top4") return EvalMode::Top4;
  throw ConfigError("unknown eval mode '" + name + "'");
}

std::string EvalReport::to_csv() const {
  std::string out = mode == EvalMode::MeanAP ? "query_id,ap\n" : "query_id,top4\n";
  char buf[64];
  for (const auto& [id, v] : per_query) {
    std::snprintf(buf, sizeof buf, ",%.6f\n", v);
    out += id + buf;
  }
  std::snprintf(buf, sizeof buf, "ALL,%.6f\n", overall);
  out += buf;
  return out;
}

EvalReport evaluate(const Index& index, const GroundTruth& gt, EvalMode mode, int threads) {
  if (gt.empty()) throw UndefinedError("ground truth has no queries");
  for (const auto& q : gt) {
    if (index.find(q.query_id) == index.size()) {
      throw ConfigError("unknown query id '" + q.query_id + "'");
    }
  }
  EvalReport report;
  report.mode = mode;
  report.per_query.resize(gt.size());
  detail::parallel_for(gt.size(), detail::resolve_threads(threads), [&](std::size_t qi) {
    const auto& q = gt[qi];
    const auto result = index.search(index.vector(index.find(q.query_id)), index.size());
    std::vector<std::string> ranked;
    ranked.reserve(result.size());
    for (const auto& r : result) ranked.push_back(r.image_id);
    const double v =
        mode == EvalMode::MeanAP ? average_precision(ranked, q) : top4_score(ranked, q);
    report.per_query[qi] = {q.query_id, v};
  });
  std::vector<double> values;
  for (const auto& pq : report.per_query) values.push_back(pq.second);
  report.overall = mean_ap(values);
  return report;
}

}  // namespace kcnn
