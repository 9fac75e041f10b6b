#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spotlight/corpus.hpp"
#include "spotlight/embed.hpp"
#include "spotlight/evalkit.hpp"
#include "spotlight/index.hpp"
#include "spotlight/postproc.hpp"
#include "spotlight/proposals.hpp"
#include "spotlight/simhead.hpp"

namespace spotlight {

struct SearchOptions {
  Task mode = Task::kSpotting;
  std::size_t top_k = 10;
  Metric metric = Metric::kCosine;
  bool postprocess = false;  // union merge, spotting only
  UnionConfig union_cfg;
  unsigned workers = 0;
};

/// Everything a batch run or the server needs. Relative paths in a config
/// file resolve against the file's directory.
struct EngineConfig {
  std::filesystem::path corpus;  // manifest.json
  std::filesystem::path workdir = "spotlight-out";
  std::filesystem::path head;    // optional learned head
  std::filesystem::path ui_dir;  // optional static files for the server
  SelectiveSearchConfig proposals;
  EmbedderConfig embedder;
  SearchOptions search;
  EvalProtocol eval;
  std::string host = "127.0.0.1";
  int port = 8080;
  unsigned workers = 0;

  std::filesystem::path candidates_path() const { return workdir / "candidates.idx"; }
  std::filesystem::path embedder_path() const { return workdir / "embedder.bin"; }
  std::filesystem::path vectors_path() const { return workdir / "vectors.spv"; }
  std::filesystem::path index_path() const { return workdir / "index.idx"; }
  std::filesystem::path run_path() const { return workdir / "run.jsonl"; }
  std::filesystem::path report_path() const { return workdir / "report.json"; }

  void validate() const;
};

EngineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
nlohmann::json config_to_json(const EngineConfig& cfg);
EngineConfig load_config(const std::filesystem::path& path);
/// SPOTLIGHT_CONFIG, when set.
std::optional<std::filesystem::path> env_config_path();

/// Proposals for every page; cand_ids run from 0 over pages in doc_id order.
std::vector<CandidateRegion> propose_collection(const Collection& collection,
                                                const SelectiveSearchConfig& cfg,
                                                unsigned workers = 0);

/// Fits the reduction on a seeded sample of at most cfg.pca_sample candidates.
Embedder fit_embedder(const Collection& collection, std::span<const CandidateRegion> candidates,
                      const EmbedderConfig& cfg, unsigned workers = 0);

/// One record per candidate, id = decimal cand_id.
std::vector<VectorRecord> embed_candidates(const Embedder& embedder, const Collection& collection,
                                           std::span<const CandidateRegion> candidates,
                                           unsigned workers = 0);

/// Fills each candidate's vector from `vectors` keyed by decimal cand_id.
std::vector<CandidateRegion> attach_vectors(std::vector<CandidateRegion> candidates,
                                            const std::map<std::string, FeatureVector>& vectors);

std::set<std::string> candidate_ids(std::span<const CandidateRegion> candidates);

/// Search, then the optional union step (spotting only): `union_cfg.retain`
/// hits are scanned and at most min(emit, top_k) come out.
std::vector<RankedHit> run_search(const Index& index, const FeatureVector& query,
                                  const SearchOptions& opts, const SimilarityHead* head = nullptr);

/// Embeds each query region from its source page, or takes it from
/// `query_vectors` (keyed by query_id) when given.
std::vector<QueryRun> search_queries(const Collection& collection, const Embedder& embedder,
                                     const Index& index, const SearchOptions& opts,
                                     const SimilarityHead* head = nullptr,
                                     const std::map<std::string, FeatureVector>* query_vectors = nullptr);

/// Runs of one collection's queries against an existing hit map from a run file.
std::vector<QueryRun> runs_from_hits(std::span<const Query> queries,
                                     const std::map<std::string, std::vector<RankedHit>>& hits);

/// propose -> fit -> embed -> index -> search -> eval in one process, writing
/// the same artifacts as the individual commands.
Report run_all(const EngineConfig& cfg);

}  // namespace spotlight
