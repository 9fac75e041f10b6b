#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spotlight/embed.hpp"
#include "spotlight/hits.hpp"
#include "spotlight/simhead.hpp"

namespace spotlight {

struct CandidateRegion {
  std::uint64_t cand_id = 0;
  std::string doc_id;
  BoundingBox box;
  FeatureVector vector;  // empty until embedded

  friend bool operator==(const CandidateRegion&, const CandidateRegion&) = default;
};

struct SearchRequest {
  FeatureVector query;
  Task mode = Task::kSpotting;
  std::size_t top_k = 10;
  Metric metric = Metric::kCosine;
  const SimilarityHead* head = nullptr;  // required for Metric::kLearnedHead
  unsigned workers = 0;                  // 0 = hardware concurrency
};

ScoreOrder score_order(Metric m);

/// Contiguous store of candidate metadata and f32 vectors. A zero dimension
/// means a candidate list without vectors.
class Index {
 public:
  Index() = default;
  /// Throws on mixed dimensions or duplicate cand_ids.
  static Index build(const std::vector<CandidateRegion>& candidates,
                     Metric default_metric = Metric::kCosine);
  /// Takes over a row-major count x dim buffer; `regions` carry no vectors.
  static Index build(const std::vector<CandidateRegion>& regions, std::size_t dim,
                     std::vector<float> data, Metric default_metric = Metric::kCosine);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  Metric default_metric() const { return metric_; }

  std::uint64_t cand_id(std::size_t i) const { return ids_[i]; }
  const std::string& doc_id(std::size_t i) const { return docs_[doc_of_[i]]; }
  const BoundingBox& box(std::size_t i) const { return boxes_[i]; }
  std::span<const float> vector(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  CandidateRegion candidate(std::size_t i) const;
  std::vector<CandidateRegion> candidates() const;
  /// Position of a cand_id, or size() when absent.
  std::size_t find(std::uint64_t cand_id) const;

  /// Exhaustive scan. PS: best top_k candidates. IR: best candidate per
  /// document, then the top_k documents. Ties go to the smaller doc_id, then cand_id.
  std::vector<RankedHit> search(const SearchRequest& req) const;

  /// "SPOTIDX1", u32 dim, u64 count, u32 default metric, then per candidate
  /// (u64 id, u32 length + doc-id bytes, 4 x u32 box), then count x dim f32.
  void save(const std::filesystem::path& path) const;
  static Index load(const std::filesystem::path& path);

  friend bool operator==(const Index&, const Index&) = default;

 private:
  std::size_t dim_ = 0;
  Metric metric_ = Metric::kCosine;
  std::vector<std::uint64_t> ids_;
  std::vector<std::string> docs_;      // sorted unique doc ids
  std::vector<std::uint32_t> doc_of_;  // per candidate, position in docs_
  std::vector<BoundingBox> boxes_;
  std::vector<float> data_;
};

/// Builds and writes in one step.
Index build_index(const std::vector<CandidateRegion>& candidates,
                  const std::filesystem::path& path, Metric default_metric = Metric::kCosine);

}  // namespace spotlight
