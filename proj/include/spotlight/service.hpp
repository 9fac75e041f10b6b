#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spotlight/corpus.hpp"
#include "spotlight/embed.hpp"
#include "spotlight/error.hpp"
#include "spotlight/index.hpp"
#include "spotlight/pipeline.hpp"
#include "spotlight/simhead.hpp"

namespace httplib {
class Server;
}

namespace spotlight {

/// Error carrying the HTTP status it maps to.
class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// Either a page region or a ready-made vector.
struct QueryRequest {
  std::string doc_id;
  BoundingBox box;
  std::optional<FeatureVector> vector = {};
  std::optional<Task> mode = {};
  std::optional<std::size_t> top_k = {};
  std::optional<Metric> metric = {};
  std::optional<bool> postprocess = {};
};

struct StageTimings {
  double embed_ms = 0;
  double scan_ms = 0;
  double postproc_ms = 0;
};

struct QueryResponse {
  std::vector<RankedHit> hits;
  StageTimings timings;
  SearchOptions options;
};

struct BenchResult {
  std::size_t queries = 0;
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
};

/// Read-only query engine: corpus, embedder, index and optional head, all
/// fixed at construction.
class Engine {
 public:
  Engine(EngineConfig cfg, Collection collection, Embedder embedder, Index index,
         std::optional<SimilarityHead> head = std::nullopt);
  /// Loads the artifacts named by the config.
  static Engine open(const EngineConfig& cfg);

  const EngineConfig& config() const { return cfg_; }
  const Collection& collection() const { return collection_; }
  const Index& index() const { return index_; }

  /// Throws HttpError: 404 unknown doc, 400 bad box or parameters, 409 dimension mismatch.
  QueryResponse query(const QueryRequest& req) const;

  /// `n` sequential queries over the corpus queries (or candidate boxes when
  /// there are none), cycling.
  BenchResult bench(std::size_t n) const;

  nlohmann::json docs_json() const;
  nlohmann::json config_json() const;
  nlohmann::json overlay_json(const std::string& doc_id, bool with_candidates) const;
  std::string page_png(const std::string& doc_id) const;

 private:
  const DocumentImage& page(const std::string& doc_id) const;

  EngineConfig cfg_;
  Collection collection_;
  Embedder embedder_;
  Index index_;
  std::optional<SimilarityHead> head_;
};

QueryRequest query_request_from_json(const nlohmann::json& j);
nlohmann::json query_response_to_json(const QueryResponse& r);
nlohmann::json hit_to_json(const RankedHit& h);

/// Routes: POST /query, GET /page/{id}, GET /page/{id}/overlay, GET /docs,
/// GET /config, GET /bench?n=, and static files from ui_dir when set.
std::unique_ptr<httplib::Server> make_server(const Engine& engine);

/// Blocks until the server stops.
void serve(const Engine& engine);

}  // namespace spotlight
