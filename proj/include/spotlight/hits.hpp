#pragma once

#include <cstdint>
#include <string>

#include "spotlight/box.hpp"

namespace spotlight {

/// IR ranks whole documents ("non-repeated images"); PS ranks located regions.
enum class Task { kRetrieval, kSpotting };

std::string to_string(Task t);
Task parse_task(const std::string& s);

enum class ScoreOrder { kAscending, kDescending };

struct RankedHit {
  std::string doc_id;
  BoundingBox box;
  double score = 0;
  std::size_t rank = 0;  // 1-based
  std::uint64_t cand_id = 0;

  friend bool operator==(const RankedHit&, const RankedHit&) = default;
};

/// True when score `a` ranks strictly ahead of score `b`.
inline bool better_score(double a, double b, ScoreOrder order) {
  return order == ScoreOrder::kAscending ? a < b : a > b;
}

}  // namespace spotlight
