#pragma once

#include <span>
#include <string>
#include <vector>

#include "spotlight/hits.hpp"

namespace spotlight {

enum class MergeScore { kBest, kMean };

MergeScore parse_merge_score(const std::string& s);
std::string to_string(MergeScore m);

struct UnionConfig {
  std::size_t retain = 2000;
  std::size_t emit = 1000;
  double merge_iou = 0.2;
  MergeScore merge_score = MergeScore::kBest;
  ScoreOrder order = ScoreOrder::kAscending;

  void validate() const;
};

/// Keeps the first `retain` hits, collapses each per-document connected
/// component of the overlap graph (IoU > merge_iou) into its enclosing box,
/// re-ranks and truncates to `emit`. Ranks are renumbered from 1; the
/// surviving cand_id is the component's best member.
std::vector<RankedHit> union_merge(std::span<const RankedHit> hits, const UnionConfig& cfg);

}  // namespace spotlight
