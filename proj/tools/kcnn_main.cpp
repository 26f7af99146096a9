// kcnn: batch command-line front end for the retrieval pipeline.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "kcnn/detail/binio.hpp"
#include "kcnn/error.hpp"
#include "kcnn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace kcnn;

namespace {

struct CommonFlags {
  std::uint64_t seed = 42;
  bool seed_set = false;
  int threads = 0;
  std::string config_path;
  std::vector<std::string> settings;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Random seed (default 42)")
      ->each([&f](const std::string&) { f.seed_set = true; });
  cmd->add_option("--threads", f.threads, "Worker threads (default: KCNN_THREADS or all cores)");
  cmd->add_option("--config", f.config_path, "key=value configuration file");
  cmd->add_option("--set", f.settings, "Override one configuration key (key=value)");
}

PipelineConfig make_config(const CommonFlags& f) {
  PipelineConfig cfg;
  if (!f.config_path.empty()) cfg = load_config(f.config_path, cfg);
  for (const auto& kv : f.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed_set) cfg.seed = f.seed;
  if (f.threads >= 1) cfg.threads = f.threads;
  cfg.threads = resolve_thread_count(cfg.threads);
  cfg.validate();
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  detail::write_file(path, std::span<const char>(text.data(), text.size()));
}

std::string read_text(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return {bytes.begin(), bytes.end()};
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kcnn - object-patch Fisher-vector image retrieval"};
  app.require_subcommand(1);
  CommonFlags common;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic retrieval corpus");
  std::string synth_out;
  int n_base = 20;
  int side = 128;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--n-base", n_base, "Number of base images");
  synth->add_option("--side", side, "Image side in pixels");
  add_common(synth, common);

  // propose
  auto* prop = app.add_subcommand("propose", "Detect object-like patches in one image");
  std::string prop_image, prop_out;
  prop->add_option("--image", prop_image, "Input PGM")->required();
  prop->add_option("--out", prop_out, "Patch CSV (default stdout)");
  add_common(prop, common);

  // embed
  auto* emb = app.add_subcommand("embed", "Embed patches of one image into a KDESC file");
  std::string emb_image, emb_patches, emb_out;
  emb->add_option("--image", emb_image, "Input PGM")->required();
  emb->add_option("--patches", emb_patches, "Patch CSV (default: run proposals)");
  emb->add_option("--out", emb_out, "Output KDESC")->required();
  add_common(emb, common);

  // train
  auto* train = app.add_subcommand("train", "Train PCA + GMM from KDESC files");
  std::vector<std::string> train_in;
  std::string train_out;
  train->add_option("descriptors", train_in, "KDESC files")->required();
  train->add_option("--out", train_out, "Output KMDL")->required();
  add_common(train, common);

  // encode
  auto* enc = app.add_subcommand("encode", "Encode KDESC files into Fisher vectors (KIDX)");
  std::vector<std::string> enc_in;
  std::string enc_model, enc_out;
  enc->add_option("descriptors", enc_in, "KDESC files")->required();
  enc->add_option("--model", enc_model, "KMDL model")->required();
  enc->add_option("--out", enc_out, "Output KIDX")->required();
  add_common(enc, common);

  // index
  auto* idx = app.add_subcommand("index", "Merge encoded KIDX files into one index");
  std::vector<std::string> idx_in;
  std::string idx_out;
  idx->add_option("inputs", idx_in, "KIDX files")->required();
  idx->add_option("--out", idx_out, "Output KIDX")->required();
  add_common(idx, common);

  // search
  auto* search = app.add_subcommand("search", "Query an index");
  std::string search_index, search_id, search_query;
  std::size_t search_k = 10;
  search->add_option("--index", search_index, "KIDX index")->required();
  auto* by_id = search->add_option("--query-id", search_id, "Use an indexed image as query");
  auto* by_file =
      search->add_option("--query", search_query, "KIDX file whose entries are the queries");
  by_id->excludes(by_file);
  search->add_option("--k", search_k, "Results per query");
  add_common(search, common);

  // eval
  auto* ev = app.add_subcommand("eval", "Score an index against ground truth");
  std::string ev_index, ev_gt, ev_mode = "map", ev_out;
  ev->add_option("--index", ev_index, "KIDX index")->required();
  ev->add_option("--gt", ev_gt, "Ground-truth CSV")->required();
  ev->add_option("--mode", ev_mode, "map or top4")->check(CLI::IsMember({"map", "top4"}));
  ev->add_option("--out", ev_out, "Report CSV (default stdout)");
  add_common(ev, common);

  // sensitivity
  auto* sens = app.add_subcommand("sensitivity", "Similarity under geometric transforms");
  std::string sens_corpus, sens_kind = "translate", sens_embedder = "global", sens_model,
                            sens_out;
  sens->add_option("--corpus", sens_corpus, "Directory of PGM images")->required();
  sens->add_option("--kind", sens_kind, "translate, scale or rotate")
      ->check(CLI::IsMember({"translate", "scale", "rotate"}));
  sens->add_option("--embedder", sens_embedder, "global or kcnn")
      ->check(CLI::IsMember({"global", "kcnn"}));
  sens->add_option("--model", sens_model, "KMDL model (kcnn embedder)");
  sens->add_option("--out", sens_out, "Curve CSV (default stdout)");
  add_common(sens, common);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run propose..index end to end on a corpus");
  std::string pipe_corpus, pipe_out;
  pipe->add_option("--corpus", pipe_corpus, "Directory of PGM images")->required();
  pipe->add_option("--out", pipe_out, "Output directory")->required();
  add_common(pipe, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig cfg = make_config(common);

    if (synth->parsed()) {
      generate_corpus(synth_out, SynthOptions{n_base, side, cfg.seed});
    } else if (prop->parsed()) {
      const Image img = read_pgm(prop_image);
      write_text(prop_out, patches_to_csv(proposals_for(img, cfg)));
    } else if (emb->parsed()) {
      const Image img = read_pgm(emb_image);
      const auto patches =
          emb_patches.empty() ? proposals_for(img, cfg) : patches_from_csv(read_text(emb_patches));
      export_descriptors(describe_image(stem(emb_image), img, patches, cfg.rotations), emb_out);
    } else if (train->parsed()) {
      std::vector<DescriptorSet> sets;
      for (const auto& p : train_in) sets.push_back(import_descriptors(p));
      save_model(train_encoder(sets, cfg), train_out);
    } else if (enc->parsed()) {
      const auto model = load_model(enc_model);
      std::vector<IndexEntry> entries;
      for (const auto& p : enc_in) {
        const auto set = import_descriptors(p);
        entries.push_back(make_entry(set.image_id, encode_descriptors(model, set, cfg.normalization)));
      }
      Index::build(std::move(entries)).save(enc_out);
    } else if (idx->parsed()) {
      std::vector<IndexEntry> entries;
      for (const auto& p : idx_in) {
        const Index part = Index::load(p);
        for (std::size_t i = 0; i < part.size(); ++i) {
          const auto v = part.vector(i);
          entries.push_back({part.ids()[i], std::vector<float>(v.begin(), v.end())});
        }
      }
      Index::build(std::move(entries)).save(idx_out);
    } else if (search->parsed()) {
      const Index index = Index::load(search_index);
      std::string out = "query_id,rank,image_id,score\n";
      char buf[64];
      auto emit = [&](const std::string& qid, std::span<const float> q) {
        const auto res = index.search(q, search_k, cfg.threads);
        for (std::size_t r = 0; r < res.size(); ++r) {
          std::snprintf(buf, sizeof buf, ",%.6f\n", res[r].score);
          out += qid + "," + std::to_string(r + 1) + "," + res[r].image_id + buf;
        }
      };
      if (!search_id.empty()) {
        const auto pos = index.find(search_id);
        if (pos == index.size()) throw ConfigError("unknown query id '" + search_id + "'");
        emit(search_id, index.vector(pos));
      } else if (!search_query.empty()) {
        const Index queries = Index::load(search_query);
        for (std::size_t i = 0; i < queries.size(); ++i) emit(queries.ids()[i], queries.vector(i));
      } else {
        throw ConfigError("search needs --query-id or --query");
      }
      std::cout << out;
    } else if (ev->parsed()) {
      const EvalMode mode = eval_mode_from_string(ev_mode);
      const Index index = Index::load(ev_index);
      const auto gt = load_ground_truth(ev_gt, mode == EvalMode::Top4);
      write_text(ev_out, evaluate(index, gt, mode, cfg.threads).to_csv());
    } else if (sens->parsed()) {
      const auto kind = transform_kind_from_string(sens_kind);
      std::vector<Image> corpus;
      for (const auto& ci : list_corpus(sens_corpus)) corpus.push_back(read_pgm(ci.path));
      int width = corpus.front().width();
      for (const auto& im : corpus) width = std::min(width, im.width());
      FeatureFn feature;
      EncoderModel model;
      if (sens_embedder == "global") {
        feature = [](const Image& im) { return embed_image_global(im).values; };
      } else {
        if (sens_model.empty()) throw ConfigError("--embedder kcnn needs --model");
        model = load_model(sens_model);
        feature = [&model, &cfg](const Image& im) {
          return encode_descriptors(model, describe("", im, cfg), Normalization::Improved).values;
        };
      }
      const auto grid = default_grid(kind, width);
      write_text(sens_out, curve_to_csv(sensitivity_study(corpus, kind, grid, feature, cfg.threads)));
    } else if (pipe->parsed()) {
      run_pipeline(cfg, pipe_corpus, pipe_out);
    }
  } catch (const Error& e) {
    std::cerr << e.stage() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cli: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
