#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spotlight/corpus.hpp"
#include "spotlight/embed.hpp"
#include "spotlight/evalkit.hpp"
#include "spotlight/index.hpp"
#include "spotlight/pipeline.hpp"
#include "spotlight/service.hpp"
#include "spotlight/simhead.hpp"
#include "spotlight/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace spotlight;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::vector<CandidateRegion> load_candidates(const fs::path& path) {
  return Index::load(path).candidates();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spotlight: region search over document image collections"};
  app.require_subcommand(1);

  std::string config_path;
  unsigned workers = 0;
  app.add_option("-c,--config", config_path, "config JSON (default: $SPOTLIGHT_CONFIG)");
  app.add_option("-j,--workers", workers, "worker threads, 0 = all cores");

  // shared path overrides
  std::string manifest, candidates_in, vectors_in, index_in, embedder_in, out;

  auto* ingest = app.add_subcommand("ingest", "validate a manifest and its images");
  ingest->add_option("-m,--manifest", manifest);
  ingest->add_option("-o,--out", out, "write a normalized copy (pages as PNG) here");

  SynthConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "generate a synthetic annotated corpus");
  synth->add_option("-o,--out", out)->required();
  synth->add_option("--pages", synth_cfg.pages);
  synth->add_option("--width", synth_cfg.width);
  synth->add_option("--height", synth_cfg.height);
  synth->add_option("--categories", synth_cfg.categories);
  synth->add_option("--occurrences", synth_cfg.occurrences);
  synth->add_option("--distractors", synth_cfg.distractors);
  synth->add_option("--text-density", synth_cfg.text_density);
  synth->add_option("--noise", synth_cfg.noise);
  synth->add_option("--seed", synth_cfg.seed);

  std::optional<int> block, min_box;
  std::optional<double> offset;
  std::optional<std::size_t> max_cands;
  std::string k_list, components, spaces;
  bool no_threshold = false;
  auto* propose_cmd = app.add_subcommand("propose", "selective-search candidate regions");
  propose_cmd->add_option("-m,--manifest", manifest);
  propose_cmd->add_option("-o,--out", out, "candidate file");
  propose_cmd->add_flag("--no-threshold", no_threshold, "skip adaptive thresholding");
  propose_cmd->add_option("--block", block);
  propose_cmd->add_option("--offset", offset);
  propose_cmd->add_option("--k", k_list, "comma separated, e.g. 50,100");
  propose_cmd->add_option("--components", components, "color,texture,fill,size");
  propose_cmd->add_option("--color-spaces", spaces, "gray,rgb,nrgb");
  propose_cmd->add_option("--min-box", min_box);
  propose_cmd->add_option("--max-candidates", max_cands);

  std::optional<int> dim, resize;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> pca_sample;
  std::string reduction, embedder_out;
  auto* embed_cmd = app.add_subcommand("embed", "fit the embedder and embed every candidate");
  embed_cmd->add_option("-m,--manifest", manifest);
  embed_cmd->add_option("--candidates", candidates_in);
  embed_cmd->add_option("-o,--out", out, "vector file");
  embed_cmd->add_option("--embedder-out", embedder_out);
  embed_cmd->add_option("--dim", dim);
  embed_cmd->add_option("--reduction", reduction, "pca|random|none");
  embed_cmd->add_option("--resize", resize);
  embed_cmd->add_option("--seed", seed);
  embed_cmd->add_option("--pca-sample", pca_sample);

  std::string input;
  auto* import_cmd = app.add_subcommand("import-vectors", "validate externally computed vectors");
  import_cmd->add_option("-i,--input", input)->required();
  import_cmd->add_option("--candidates", candidates_in);
  import_cmd->add_option("--dim", dim, "expected dimension (default: the file's)");
  import_cmd->add_option("-o,--out", out, "normalized vector file");
  import_cmd->add_option("--embedder-out", embedder_out);

  std::string metric;
  auto* index_cmd = app.add_subcommand("index", "join candidates and vectors into an index");
  index_cmd->add_option("--candidates", candidates_in);
  index_cmd->add_option("--vectors", vectors_in);
  index_cmd->add_option("-o,--out", out);
  index_cmd->add_option("--metric", metric, "default metric recorded in the header");

  std::string mode, postprocess, head_path, merge_score, query_vectors;
  std::optional<std::size_t> top_k, retain, emit;
  std::optional<double> merge_iou;
  auto* search_cmd = app.add_subcommand("search", "rank candidates for every corpus query");
  search_cmd->add_option("-m,--manifest", manifest);
  search_cmd->add_option("--index", index_in);
  search_cmd->add_option("--embedder", embedder_in);
  search_cmd->add_option("--mode", mode, "ps|ir");
  search_cmd->add_option("-k,--k", top_k);
  search_cmd->add_option("--metric", metric, "cosine|euclidean|learned-head");
  search_cmd->add_option("--head", head_path);
  search_cmd->add_option("--postprocess", postprocess, "none|union");
  search_cmd->add_option("--retain", retain);
  search_cmd->add_option("--emit", emit);
  search_cmd->add_option("--merge-iou", merge_iou);
  search_cmd->add_option("--merge-score", merge_score, "best|mean");
  search_cmd->add_option("--query-vectors", query_vectors, "vector file keyed by query_id");
  search_cmd->add_option("-o,--out", out, "run file");

  std::string pairs_path, distance = "euclidean", vectors_for_pairs;
  TrainOptions train;
  double train_fraction = 0.7;
  double negative_ratio = 1.5;
  std::size_t similar_count = 10000;
  auto* head_cmd = app.add_subcommand("train-head", "fit the learned similarity head on pairs");
  auto* pairs_opt = head_cmd->add_option("--pairs", pairs_path, "JSONL pairs {a, b, similar}");
  head_cmd->add_flag("--from-corpus", "build pairs from ground-truth regions by category")
      ->excludes(pairs_opt);
  head_cmd->add_option("-m,--manifest", manifest);
  head_cmd->add_option("--embedder", embedder_in);
  head_cmd->add_option("--similar", similar_count, "similar pairs to draw (0 = as many as there are same-class pairs)");
  head_cmd->add_option("--negative-ratio", negative_ratio);
  head_cmd->add_option("--lr", train.lr0);
  head_cmd->add_option("--gamma", train.gamma);
  head_cmd->add_option("--epochs", train.epochs);
  head_cmd->add_option("--seed", train.seed);
  head_cmd->add_option("--distance", distance, "euclidean|cosine");
  head_cmd->add_option("--train-fraction", train_fraction);
  head_cmd->add_option("-o,--out", out)->required();

  std::string run_path, task, json_out;
  std::optional<double> iou_threshold;
  std::optional<std::size_t> min_samples;
  bool keep_junk = false, ignore_junk = false;
  auto* eval_cmd = app.add_subcommand("eval", "score a run file");
  eval_cmd->add_option("-m,--manifest", manifest);
  eval_cmd->add_option("--run", run_path);
  eval_cmd->add_option("--task", task, "ps|ir");
  eval_cmd->add_option("--iou", iou_threshold);
  eval_cmd->add_option("-k,--k", top_k);
  eval_cmd->add_flag("--ignore-junk", ignore_junk);
  eval_cmd->add_flag("--keep-junk", keep_junk, "score junk occurrences as ordinary ones");
  eval_cmd->add_option("--min-samples", min_samples);
  eval_cmd->add_option("-o,--out", json_out, "report JSON");

  std::optional<int> port;
  std::string host, ui_dir;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP query service");
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--ui", ui_dir, "static UI directory");
  serve_cmd->add_option("--head", head_path);

  auto* run_cmd = app.add_subcommand("run", "propose, embed, index, search and eval in one go");
  run_cmd->add_option("-m,--manifest", manifest);

  CLI11_PARSE(app, argc, argv);

  try {
    EngineConfig cfg;
    if (config_path.empty()) {
      if (auto env = env_config_path()) config_path = env->string();
    }
    if (!config_path.empty()) cfg = load_config(config_path);
    if (workers) cfg.workers = workers;
    cfg.search.workers = cfg.workers;
    if (!manifest.empty()) cfg.corpus = manifest;
    if (!head_path.empty()) cfg.head = head_path;

    auto need_corpus = [&] {
      if (cfg.corpus.empty()) throw Error("no manifest: pass --manifest or set corpus in the config");
    };

    if (*ingest) {
      need_corpus();
      const auto c = load_collection(cfg.corpus);
      std::size_t occs = 0;
      for (const auto& [cat, list] : c.ground_truth().categories) occs += list.size();
      std::cout << json{{"documents", c.documents().size()},
                        {"queries", c.queries().size()},
                        {"categories", c.ground_truth().categories.size()},
                        {"occurrences", occs}}
                       .dump()
                << '\n';
      if (!out.empty()) std::cout << save_collection(c, out).string() << '\n';
    } else if (*synth) {
      std::cout << save_collection(synthesize(synth_cfg), out).string() << '\n';
    } else if (*propose_cmd) {
      need_corpus();
      auto& p = cfg.proposals;
      if (no_threshold) p.threshold_enabled = false;
      if (block) p.block = *block;
      if (offset) p.offset = *offset;
      if (!k_list.empty()) {
        p.k_values.clear();
        for (const auto& k : split_list(k_list)) p.k_values.push_back(std::stod(k));
      }
      if (!components.empty()) {
        p.components.clear();
        for (const auto& c : split_list(components)) p.components.push_back(parse_component(c));
      }
      if (!spaces.empty()) {
        p.color_spaces.clear();
        for (const auto& c : split_list(spaces)) p.color_spaces.push_back(parse_color_space(c));
      }
      if (min_box) p.min_box = *min_box;
      if (max_cands) p.max_candidates_per_doc = *max_cands;
      const auto path = or_default(out, cfg.candidates_path());
      ensure_parent(path);
      const auto cands = propose_collection(load_collection(cfg.corpus), p, cfg.workers);
      Index::build(cands).save(path);
      std::cout << cands.size() << " candidates -> " << path.string() << '\n';
    } else if (*embed_cmd) {
      need_corpus();
      auto& e = cfg.embedder;
      if (dim) e.target_dim = *dim;
      if (!reduction.empty()) e.reduction = parse_reduction(reduction);
      if (resize) e.resize = *resize;
      if (seed) e.seed = *seed;
      if (pca_sample) e.pca_sample = *pca_sample;
      e.kind = EmbedderKind::kBaseline;
      const auto collection = load_collection(cfg.corpus);
      const auto cands = load_candidates(or_default(candidates_in, cfg.candidates_path()));
      const auto embedder = fit_embedder(collection, cands, e, cfg.workers);
      const auto vec_path = or_default(out, cfg.vectors_path());
      const auto emb_path = or_default(embedder_out, cfg.embedder_path());
      ensure_parent(vec_path);
      ensure_parent(emb_path);
      embedder.save(emb_path);
      export_vectors(vec_path, embedder.dim(),
                     embed_candidates(embedder, collection, cands, cfg.workers));
      std::cout << cands.size() << " vectors of dim " << embedder.dim() << " -> "
                << vec_path.string() << '\n';
    } else if (*import_cmd) {
      std::size_t file_dim = 0;
      read_vector_file(input, &file_dim);
      const std::size_t expected = dim ? static_cast<std::size_t>(*dim) : file_dim;
      const auto cands = load_candidates(or_default(candidates_in, cfg.candidates_path()));
      const auto ids = candidate_ids(cands);
      const auto vectors = import_vectors(input, expected, &ids);
      std::vector<VectorRecord> records;
      for (const auto& [id, v] : vectors) records.push_back({id, v});
      const auto vec_path = or_default(out, cfg.vectors_path());
      ensure_parent(vec_path);
      export_vectors(vec_path, expected, records);
      EmbedderConfig e = cfg.embedder;
      e.kind = EmbedderKind::kExternal;
      e.target_dim = static_cast<int>(expected);
      const auto emb_path = or_default(embedder_out, cfg.embedder_path());
      ensure_parent(emb_path);
      fit_embedder({}, {}, e).save(emb_path);
      std::cout << records.size() << " vectors of dim " << expected << " -> " << vec_path.string()
                << '\n';
    } else if (*index_cmd) {
      const auto m = metric.empty() ? cfg.search.metric : parse_metric(metric);
      auto cands = load_candidates(or_default(candidates_in, cfg.candidates_path()));
      std::size_t file_dim = 0;
      const auto vec_path = or_default(vectors_in, cfg.vectors_path());
      read_vector_file(vec_path, &file_dim);
      cands = attach_vectors(std::move(cands), import_vectors(vec_path, file_dim));
      const auto path = or_default(out, cfg.index_path());
      ensure_parent(path);
      build_index(cands, path, m);
      std::cout << cands.size() << " candidates of dim " << file_dim << " -> " << path.string()
                << '\n';
    } else if (*search_cmd) {
      need_corpus();
      auto& s = cfg.search;
      if (!mode.empty()) s.mode = parse_task(mode);
      if (top_k) s.top_k = *top_k;
      if (!metric.empty()) s.metric = parse_metric(metric);
      if (!postprocess.empty()) {
        if (postprocess != "union" && postprocess != "none") {
          throw Error("unknown postprocess '" + postprocess + "' (none|union)");
        }
        s.postprocess = postprocess == "union";
      }
      if (retain) s.union_cfg.retain = *retain;
      if (emit) s.union_cfg.emit = *emit;
      if (merge_iou) s.union_cfg.merge_iou = *merge_iou;
      if (!merge_score.empty()) s.union_cfg.merge_score = parse_merge_score(merge_score);
      s.union_cfg.validate();
      const auto collection = load_collection(cfg.corpus);
      const auto embedder = Embedder::load(or_default(embedder_in, cfg.embedder_path()));
      const auto index = Index::load(or_default(index_in, cfg.index_path()));
      std::optional<SimilarityHead> head;
      if (!cfg.head.empty()) head = load_head(cfg.head);
      std::optional<std::map<std::string, FeatureVector>> qv;
      if (!query_vectors.empty()) qv = import_vectors(query_vectors, index.dim());
      const auto runs = search_queries(collection, embedder, index, s, head ? &*head : nullptr,
                                       qv ? &*qv : nullptr);
      const auto path = or_default(out, cfg.run_path());
      ensure_parent(path);
      write_run(path, runs);
      std::cout << runs.size() << " queries -> " << path.string() << '\n';
    } else if (*head_cmd) {
      train.distance = parse_metric(distance);
      PairSet pairs;
      std::string source;
      if (!pairs_path.empty()) {
        pairs = read_pairs(pairs_path);
        source = fs::path(pairs_path).filename().string();
      } else {
        need_corpus();
        const auto collection = load_collection(cfg.corpus);
        const auto embedder = Embedder::load(or_default(embedder_in, cfg.embedder_path()));
        std::vector<FeatureVector> vectors;
        std::vector<int> classes;
        std::size_t all_similar = 0;
        int cls = 0;
        for (const auto& [cat, occs] : collection.ground_truth().categories) {
          for (const auto& o : occs) {
            vectors.push_back(embedder.embed_region(collection.at(o.doc_id), o.box).vector);
            classes.push_back(cls);
          }
          all_similar += occs.size() * (occs.size() - 1) / 2;
          ++cls;
        }
        pairs = make_pairs(vectors, classes, similar_count ? similar_count : all_similar,
                           negative_ratio, train.seed);
        source = fs::path(cfg.corpus).string();
      }
      auto [train_set, test_set] = split_pairs(std::move(pairs), train_fraction, train.seed);
      auto head = train_head(train_set, train);
      head.trained_on = source;
      save_head(head, out);
      auto accuracy = [&](const PairSet& set) {
        std::vector<double> d;
        std::vector<std::uint8_t> y;
        for (const auto& p : set) {
          d.push_back(distance == "cosine" ? cosine_distance(p.a, p.b) : euclidean_distance(p.a, p.b));
          y.push_back(p.similar);
        }
        return set.empty() ? 0.0 : pair_accuracy(head, d, y);
      };
      std::cout << json{{"w", head.w},
                        {"b", head.b},
                        {"train_pairs", train_set.size()},
                        {"test_pairs", test_set.size()},
                        {"train_accuracy", accuracy(train_set)},
                        {"test_accuracy", accuracy(test_set)}}
                       .dump()
                << '\n';
    } else if (*eval_cmd) {
      need_corpus();
      EvalProtocol p = cfg.eval;
      if (!task.empty()) p.task = parse_task(task);
      if (iou_threshold) p.iou_threshold = *iou_threshold;
      if (top_k) p.top_k = *top_k;
      if (ignore_junk && keep_junk) throw Error("--ignore-junk and --keep-junk conflict");
      if (ignore_junk) p.ignore_junk = true;
      if (keep_junk) p.ignore_junk = false;
      if (min_samples) p.min_samples_per_class = *min_samples;
      const auto ann = load_annotations(cfg.corpus);
      const auto hits = read_run(or_default(run_path, cfg.run_path()));
      const auto report = evaluate_run(runs_from_hits(ann.queries, hits), ann.ground_truth, p);
      std::cout << report_table(report);
      const auto path = or_default(json_out, cfg.report_path());
      ensure_parent(path);
      std::ofstream(path) << report_to_json(report).dump(2) << '\n';
    } else if (*serve_cmd) {
      need_corpus();
      if (port) cfg.port = *port;
      if (!host.empty()) cfg.host = host;
      if (!ui_dir.empty()) cfg.ui_dir = ui_dir;
      serve(Engine::open(cfg));
    } else if (*run_cmd) {
      need_corpus();
      std::cout << report_table(run_all(cfg));
    }
  } catch (const std::exception& e) {
    std::cerr << "spotlight: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
