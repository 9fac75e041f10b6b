#include "spotlight/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>

#include "spotlight/error.hpp"
#include "spotlight/parallel.hpp"

namespace spotlight {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw Error("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw Error("config: unknown key '" + key + "' in " + where);
    }
  }
}

fs::path resolve(const json& j, const char* key, const fs::path& base, const fs::path& fallback) {
  if (!j.contains(key)) return fallback;
  fs::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

void EngineConfig::validate() const {
  proposals.validate();
  embedder.validate();
  eval.validate();
  search.union_cfg.validate();
  if (search.top_k < 1) throw Error("config: search top_k must be >= 1");
  if (port < 1 || port > 65535) throw Error("config: port out of range");
}

EngineConfig config_from_json(const json& j, const fs::path& base) {
  EngineConfig c;
  try {
    check_keys(j, "config",
               {"corpus", "workdir", "head", "ui_dir", "proposals", "embedder", "search", "eval",
                "server", "workers"});
    c.corpus = resolve(j, "corpus", base, c.corpus);
    c.workdir = resolve(j, "workdir", base, base.empty() ? c.workdir : base / c.workdir);
    c.head = resolve(j, "head", base, c.head);
    c.ui_dir = resolve(j, "ui_dir", base, c.ui_dir);
    c.workers = j.value("workers", 0u);

    if (j.contains("proposals")) {
      const auto& p = j.at("proposals");
      check_keys(p, "proposals",
                 {"adaptive_threshold", "block", "offset", "k", "components", "color_spaces",
                  "min_box", "max_candidates_per_doc"});
      auto& s = c.proposals;
      s.threshold_enabled = p.value("adaptive_threshold", s.threshold_enabled);
      s.block = p.value("block", s.block);
      s.offset = p.value("offset", s.offset);
      if (p.contains("k")) s.k_values = p.at("k").get<std::vector<double>>();
      if (p.contains("components")) {
        s.components.clear();
        for (const auto& n : p.at("components")) s.components.push_back(parse_component(n));
      }
      if (p.contains("color_spaces")) {
        s.color_spaces.clear();
        for (const auto& n : p.at("color_spaces")) s.color_spaces.push_back(parse_color_space(n));
      }
      s.min_box = p.value("min_box", s.min_box);
      s.max_candidates_per_doc = p.value("max_candidates_per_doc", s.max_candidates_per_doc);
    }
    if (j.contains("embedder")) {
      const auto& e = j.at("embedder");
      check_keys(e, "embedder", {"kind", "target_dim", "reduction", "resize", "seed", "pca_sample"});
      auto& s = c.embedder;
      if (e.contains("kind")) s.kind = parse_embedder_kind(e.at("kind"));
      s.target_dim = e.value("target_dim", s.target_dim);
      if (e.contains("reduction")) s.reduction = parse_reduction(e.at("reduction"));
      s.resize = e.value("resize", s.resize);
      s.seed = e.value("seed", s.seed);
      s.pca_sample = e.value("pca_sample", s.pca_sample);
    }
    if (j.contains("search")) {
      const auto& e = j.at("search");
      check_keys(e, "search",
                 {"mode", "top_k", "metric", "postprocess", "retain", "emit", "merge_iou",
                  "merge_score"});
      auto& s = c.search;
      if (e.contains("mode")) s.mode = parse_task(e.at("mode"));
      s.top_k = e.value("top_k", s.top_k);
      if (e.contains("metric")) s.metric = parse_metric(e.at("metric"));
      s.postprocess = e.value("postprocess", s.postprocess);
      s.union_cfg.retain = e.value("retain", s.union_cfg.retain);
      s.union_cfg.emit = e.value("emit", s.union_cfg.emit);
      s.union_cfg.merge_iou = e.value("merge_iou", s.union_cfg.merge_iou);
      if (e.contains("merge_score")) s.union_cfg.merge_score = parse_merge_score(e.at("merge_score"));
    }
    c.eval.task = c.search.mode;
    c.eval.top_k = c.search.top_k;
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      check_keys(e, "eval", {"top_k", "iou", "ignore_junk", "min_samples_per_class"});
      c.eval.top_k = e.value("top_k", c.eval.top_k);
      c.eval.iou_threshold = e.value("iou", c.eval.iou_threshold);
      c.eval.ignore_junk = e.value("ignore_junk", c.eval.ignore_junk);
      c.eval.min_samples_per_class = e.value("min_samples_per_class", c.eval.min_samples_per_class);
    }
    if (j.contains("server")) {
      const auto& e = j.at("server");
      check_keys(e, "server", {"host", "port"});
      c.host = e.value("host", c.host);
      c.port = e.value("port", c.port);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json config_to_json(const EngineConfig& c) {
  json components = json::array();
  for (auto x : c.proposals.components) components.push_back(to_string(x));
  json spaces = json::array();
  for (auto x : c.proposals.color_spaces) spaces.push_back(to_string(x));
  const auto& u = c.search.union_cfg;
  return {{"corpus", c.corpus.string()},
          {"workdir", c.workdir.string()},
          {"head", c.head.string()},
          {"ui_dir", c.ui_dir.string()},
          {"workers", c.workers},
          {"proposals",
           {{"adaptive_threshold", c.proposals.threshold_enabled},
            {"block", c.proposals.block},
            {"offset", c.proposals.offset},
            {"k", c.proposals.k_values},
            {"components", components},
            {"color_spaces", spaces},
            {"min_box", c.proposals.min_box},
            {"max_candidates_per_doc", c.proposals.max_candidates_per_doc}}},
          {"embedder",
           {{"kind", to_string(c.embedder.kind)},
            {"target_dim", c.embedder.target_dim},
            {"reduction", to_string(c.embedder.reduction)},
            {"resize", c.embedder.resize},
            {"seed", c.embedder.seed},
            {"pca_sample", c.embedder.pca_sample}}},
          {"search",
           {{"mode", to_string(c.search.mode)},
            {"top_k", c.search.top_k},
            {"metric", to_string(c.search.metric)},
            {"postprocess", c.search.postprocess},
            {"retain", u.retain},
            {"emit", u.emit},
            {"merge_iou", u.merge_iou},
            {"merge_score", to_string(u.merge_score)}}},
          {"eval",
           {{"top_k", c.eval.top_k},
            {"iou", c.eval.iou_threshold},
            {"ignore_junk", c.eval.ignore_junk},
            {"min_samples_per_class", c.eval.min_samples_per_class}}},
          {"server", {{"host", c.host}, {"port", c.port}}}};
}

EngineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + " does not parse: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::optional<fs::path> env_config_path() {
  const char* v = std::getenv("SPOTLIGHT_CONFIG");
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

std::vector<CandidateRegion> propose_collection(const Collection& collection,
                                                const SelectiveSearchConfig& cfg,
                                                unsigned workers) {
  cfg.validate();
  const auto& docs = collection.documents();
  std::vector<std::vector<BoundingBox>> boxes(docs.size());
  parallel_for(docs.size(), workers, [&](std::size_t i) { boxes[i] = propose(docs[i], cfg); });
  std::vector<CandidateRegion> out;
  std::uint64_t next = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (const auto& b : boxes[i]) out.push_back({next++, docs[i].doc_id(), b, {}});
  }
  return out;
}

Embedder fit_embedder(const Collection& collection, std::span<const CandidateRegion> candidates,
                      const EmbedderConfig& cfg, unsigned workers) {
  cfg.validate();
  const std::size_t target = static_cast<std::size_t>(cfg.target_dim);
  if (cfg.kind == EmbedderKind::kExternal) {
    // only the dimension matters; vectors come from outside
    EmbedderConfig ext = cfg;
    ext.reduction = Reduction::kRandomProjection;
    return Embedder::fit(ext, {});
  }
  if (cfg.reduction != Reduction::kPca || target >= cfg.raw_dim()) return Embedder::fit(cfg, {});

  std::vector<std::size_t> pick(candidates.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  if (pick.size() > cfg.pca_sample) {
    std::vector<std::size_t> chosen;
    std::mt19937_64 rng(cfg.seed);
    std::sample(pick.begin(), pick.end(), std::back_inserter(chosen), cfg.pca_sample, rng);
    pick = std::move(chosen);
  }
  std::vector<std::vector<double>> sample(pick.size());
  parallel_for(pick.size(), workers, [&](std::size_t i) {
    const auto& c = candidates[pick[i]];
    sample[i] = gradient_histogram(resize_bilinear(crop(collection.at(c.doc_id), c.box), cfg.resize),
                                   cfg.cells());
  });
  return Embedder::fit(cfg, sample);
}

std::vector<VectorRecord> embed_candidates(const Embedder& embedder, const Collection& collection,
                                           std::span<const CandidateRegion> candidates,
                                           unsigned workers) {
  std::vector<VectorRecord> out(candidates.size());
  parallel_for(candidates.size(), workers, [&](std::size_t i) {
    const auto& c = candidates[i];
    out[i].id = std::to_string(c.cand_id);
    out[i].vector = embedder.embed_region(collection.at(c.doc_id), c.box).vector;
  });
  return out;
}

std::vector<CandidateRegion> attach_vectors(std::vector<CandidateRegion> candidates,
                                            const std::map<std::string, FeatureVector>& vectors) {
  for (auto& c : candidates) {
    const auto it = vectors.find(std::to_string(c.cand_id));
    if (it == vectors.end()) {
      throw Error("no vector for candidate " + std::to_string(c.cand_id));
    }
    c.vector = it->second;
  }
  return candidates;
}

std::set<std::string> candidate_ids(std::span<const CandidateRegion> candidates) {
  std::set<std::string> ids;
  for (const auto& c : candidates) ids.insert(std::to_string(c.cand_id));
  return ids;
}

std::vector<RankedHit> run_search(const Index& index, const FeatureVector& query,
                                  const SearchOptions& opts, const SimilarityHead* head) {
  SearchRequest req{query, opts.mode, opts.top_k, opts.metric, head, opts.workers};
  if (!opts.postprocess || opts.mode != Task::kSpotting) return index.search(req);
  UnionConfig u = opts.union_cfg;
  u.order = score_order(opts.metric);
  u.emit = std::min(u.emit, opts.top_k);
  req.top_k = u.retain;
  return union_merge(index.search(req), u);
}

std::vector<QueryRun> search_queries(const Collection& collection, const Embedder& embedder,
                                     const Index& index, const SearchOptions& opts,
                                     const SimilarityHead* head,
                                     const std::map<std::string, FeatureVector>* query_vectors) {
  std::vector<QueryRun> runs;
  for (const auto& q : collection.queries()) {
    FeatureVector v;
    if (query_vectors) {
      const auto it = query_vectors->find(q.query_id);
      if (it == query_vectors->end()) throw Error("no vector for query '" + q.query_id + "'");
      v = it->second;
    } else {
      v = embedder.embed_region(collection.at(q.source_doc), q.box).vector;
    }
    runs.push_back({q, run_search(index, v, opts, head)});
  }
  return runs;
}

std::vector<QueryRun> runs_from_hits(std::span<const Query> queries,
                                     const std::map<std::string, std::vector<RankedHit>>& hits) {
  std::vector<QueryRun> runs;
  for (const auto& q : queries) {
    const auto it = hits.find(q.query_id);
    runs.push_back({q, it == hits.end() ? std::vector<RankedHit>{} : it->second});
  }
  return runs;
}

Report run_all(const EngineConfig& cfg) {
  cfg.validate();
  if (cfg.embedder.kind == EmbedderKind::kExternal) {
    throw Error("run needs the baseline embedder; import external vectors with the step commands");
  }
  fs::create_directories(cfg.workdir);
  const Collection collection = load_collection(cfg.corpus);

  auto candidates = propose_collection(collection, cfg.proposals, cfg.workers);
  Index::build(candidates).save(cfg.candidates_path());

  const Embedder embedder = fit_embedder(collection, candidates, cfg.embedder, cfg.workers);
  embedder.save(cfg.embedder_path());
  export_vectors(cfg.vectors_path(), embedder.dim(),
                 embed_candidates(embedder, collection, candidates, cfg.workers));

  candidates = attach_vectors(std::move(candidates),
                              import_vectors(cfg.vectors_path(), embedder.dim(), nullptr));
  const Index index = Index::build(candidates, cfg.search.metric);
  index.save(cfg.index_path());

  std::optional<SimilarityHead> head;
  if (!cfg.head.empty()) head = load_head(cfg.head);
  const auto runs = search_queries(collection, embedder, index, cfg.search, head ? &*head : nullptr);
  write_run(cfg.run_path(), runs);

  EvalProtocol protocol = cfg.eval;
  protocol.task = cfg.search.mode;
  const Report report = evaluate_run(runs, collection.ground_truth(), protocol);
  std::ofstream(cfg.report_path()) << report_to_json(report).dump(2) << '\n';
  return report;
}

}  // namespace spotlight
