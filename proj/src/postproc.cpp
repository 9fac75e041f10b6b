#include "spotlight/postproc.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "spotlight/error.hpp"
#include "spotlight/evalkit.hpp"

namespace spotlight {

MergeScore parse_merge_score(const std::string& s) {
  if (s == "best") return MergeScore::kBest;
  if (s == "mean") return MergeScore::kMean;
  throw Error("unknown merge score '" + s + "' (best|mean)");
}

std::string to_string(MergeScore m) { return m == MergeScore::kBest ? "best" : "mean"; }

void UnionConfig::validate() const {
  if (emit > retain) throw Error("union: emit must not exceed retain");
  if (!(merge_iou > 0.0 && merge_iou < 1.0)) throw Error("union: merge_iou must lie in (0, 1)");
}

namespace {

struct Dsu {
  std::vector<std::size_t> parent;
  explicit Dsu(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::vector<RankedHit> union_merge(std::span<const RankedHit> hits, const UnionConfig& cfg) {
  cfg.validate();
  const std::size_t n = std::min(hits.size(), cfg.retain);
  if (n == 0) return {};

  std::map<std::string, std::vector<std::size_t>> by_doc;
  for (std::size_t i = 0; i < n; ++i) by_doc[hits[i].doc_id].push_back(i);

  Dsu dsu(n);
  for (const auto& [doc, members] : by_doc) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        if (iou(hits[members[a]].box, hits[members[b]].box) > cfg.merge_iou) {
          dsu.unite(members[a], members[b]);
        }
      }
    }
  }

  // root is the smallest position in the component, i.e. its best-ranked member
  struct Group {
    RankedHit hit;
    double sum = 0;
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::map<std::size_t, Group> groups;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = dsu.find(i);
    auto [it, fresh] = groups.try_emplace(r);
    Group& g = it->second;
    if (fresh) {
      g.hit = hits[i];
      g.first = i;
    } else {
      g.hit.box = enclose(g.hit.box, hits[i].box);
      if (better_score(hits[i].score, g.hit.score, cfg.order)) g.hit.score = hits[i].score;
    }
    g.sum += hits[i].score;
    ++g.count;
  }

  std::vector<Group> out;
  out.reserve(groups.size());
  for (auto& [r, g] : groups) {
    if (cfg.merge_score == MergeScore::kMean) g.hit.score = g.sum / static_cast<double>(g.count);
    out.push_back(std::move(g));
  }
  std::stable_sort(out.begin(), out.end(), [&](const Group& a, const Group& b) {
    if (a.hit.score != b.hit.score) return better_score(a.hit.score, b.hit.score, cfg.order);
    return a.first < b.first;
  });
  if (out.size() > cfg.emit) out.resize(cfg.emit);
  std::vector<RankedHit> result;
  result.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    result.push_back(std::move(out[i].hit));
    result.back().rank = i + 1;
  }
  return result;
}

}  // namespace spotlight
