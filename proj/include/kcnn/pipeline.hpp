#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kcnn/embed.hpp"
#include "kcnn/encode.hpp"
#include "kcnn/eval.hpp"
#include "kcnn/index.hpp"
#include "kcnn/proposals.hpp"

namespace kcnn {

enum class Proposer {
  Objectness,  // sliding-window contrast proposals
  Global,      // the full frame only (global-descriptor baseline)
};

struct PipelineConfig {
  ProposalConfig proposals;
  Proposer proposer = Proposer::Objectness;
  bool rotations = true;
  std::size_t pca_dim = 128;
  std::size_t components = 64;
  Normalization normalization = Normalization::Improved;
  bool whitening = false;
  std::uint64_t seed = 42;
  /// Cap on descriptors used for GMM fitting; a seeded subset is drawn when
  /// the corpus yields more. 0 disables the cap.
  std::size_t gmm_train_samples = 8192;
  /// < 1 means all cores. Never affects results.
  int threads = 0;

  void validate() const;
  /// Applies one `key=value` setting; throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
};

/// Reads a key=value file ('#' starts a comment) on top of `base`.
PipelineConfig load_config(const std::string& path, PipelineConfig base = {});

/// Thread count from the flag, else KCNN_THREADS, else all cores.
int resolve_thread_count(int flag_value);

/// The (patch-level) descriptor set of one image under `cfg`.
DescriptorSet describe(const std::string& image_id, const Image& img, const PipelineConfig& cfg);

/// Patches `cfg` would embed for `img`.
std::vector<Patch> proposals_for(const Image& img, const PipelineConfig& cfg);

/// Projects every descriptor through the PCA and aggregates them.
FisherVector encode_descriptors(const EncoderModel& model, const DescriptorSet& set,
                                Normalization policy);

/// Trains PCA on all descriptors, then the GMM on a seeded subset capped at
/// `cfg.gmm_train_samples`.
EncoderModel train_encoder(const std::vector<DescriptorSet>& sets, const PipelineConfig& cfg);

struct CorpusImage {
  std::string id;
  std::string path;
};

/// Every *.pgm directly inside `dir`, sorted by id (the file stem).
std::vector<CorpusImage> list_corpus(const std::string& dir);

struct PipelineOutputs {
  EncoderModel model;
  Index index;
  std::string index_path;
};

/// propose -> augment -> embed -> PCA/GMM training on the corpus ->
/// aggregate -> index. Writes `patches/<id>.csv`, `descriptors/<id>.kdesc`,
/// `model.kmdl` and `index.kidx` under `out_dir`. Errors carry the failing
/// stage name.
PipelineOutputs run_pipeline(const PipelineConfig& cfg, const std::string& corpus_dir,
                             const std::string& out_dir);

enum class EvalMode { MeanAP, Top4 };

EvalMode eval_mode_from_string(const std::string& name);

struct EvalReport {
  EvalMode mode = EvalMode::MeanAP;
  std::vector<std::pair<std::string, double>> per_query;
  double overall = 0.0;

  /// `query_id,ap` (or `query_id,top4`) rows and a final `ALL,...` row.
  std::string to_csv() const;
};

/// Runs every ground-truth query (looked up inside the index) against the
/// index. Top-4 mode counts the query itself as relevant.
EvalReport evaluate(const Index& index, const GroundTruth& gt, EvalMode mode, int threads = 1);

struct SynthOptions {
  int n_base = 20;
  int side = 128;
  std::uint64_t seed = 42;
};

/// Writes n_base structured base images plus four transformed relatives of
/// each (quarter-turn rotation, translation, scale, combination) as PGM, and
/// `groundtruth.csv` marking the relatives relevant to their base.
void generate_corpus(const std::string& out_dir, const SynthOptions& options);

/// One structured synthetic image (blobs, textured shapes, edges).
Image synth_base_image(int side, std::uint64_t seed);

}  // namespace kcnn
