#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spotlight/corpus.hpp"
#include "spotlight/hits.hpp"

namespace spotlight {

/// Intersection over union of pixel areas; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

struct EvalProtocol {
  Task task = Task::kSpotting;
  std::size_t top_k = 10;
  double iou_threshold = 0.5;
  bool ignore_junk = true;
  std::size_t min_samples_per_class = 0;

  void validate() const;
};

/// Hits after top_k truncation and junk removal, with their relevance.
struct QueryResult {
  std::string query_id;
  std::string category;
  std::vector<RankedHit> hits;
  std::vector<bool> relevant;
  std::size_t ground_truth = 0;  // R: occurrences (PS) or documents (IR)
  std::size_t junk_removed = 0;

  std::size_t relevant_count() const;
};

/// Relevance of each hit. PS matches hits to same-document occurrences one to
/// one in rank order; a hit is relevant when it can be added to the matching
/// without unmatching an earlier hit (augmenting paths allowed). IR: the hit's
/// document holds the category, each document counted once.
QueryResult mark_relevance(std::span<const RankedHit> hits, const Query& query,
                           const GroundTruth& gt, const EvalProtocol& protocol);

/// (1/R') * sum of precision@r over relevant ranks, R' = min(R, top_k).
/// Empty when the query has no ground truth.
std::optional<double> average_precision(const QueryResult& result, const EvalProtocol& protocol);

struct QueryRun {
  Query query;
  std::vector<RankedHit> hits;
};

struct QueryReport {
  std::string query_id;
  std::string category;
  double ap = 0;
  std::size_t relevant = 0;
  std::size_t ground_truth = 0;
  std::size_t capped = 0;  // R'
  std::size_t retrieved = 0;
};

struct Report {
  EvalProtocol protocol;
  double map = 0;
  double recall = 0;
  std::vector<QueryReport> queries;                          // ordered by query_id
  std::vector<std::pair<std::string, std::string>> excluded;  // (query_id, reason)
};

/// Throws when no query is scorable.
Report evaluate_run(std::span<const QueryRun> runs, const GroundTruth& gt,
                    const EvalProtocol& protocol);

nlohmann::json report_to_json(const Report& report);
std::string report_table(const Report& report);

/// JSON lines, one record per hit: {query_id, rank, doc_id, box, score}.
void write_run(const std::filesystem::path& path, std::span<const QueryRun> runs);
std::map<std::string, std::vector<RankedHit>> read_run(const std::filesystem::path& path);

}  // namespace spotlight
