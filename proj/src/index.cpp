#include "spotlight/index.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <thread>

#include "spotlight/binio.hpp"
#include "spotlight/error.hpp"

namespace spotlight {

namespace {

constexpr std::string_view kIndexMagic = "SPOTIDX1";

}  // namespace

std::string to_string(Task t) { return t == Task::kRetrieval ? "ir" : "ps"; }

Task parse_task(const std::string& s) {
  if (s == "ir" || s == "IR") return Task::kRetrieval;
  if (s == "ps" || s == "PS") return Task::kSpotting;
  throw Error("unknown task '" + s + "' (expected ir or ps)");
}

ScoreOrder score_order(Metric m) {
  return m == Metric::kLearnedHead ? ScoreOrder::kDescending : ScoreOrder::kAscending;
}

Index Index::build(const std::vector<CandidateRegion>& regions, std::size_t dim,
                   std::vector<float> data, Metric default_metric) {
  if (data.size() != regions.size() * dim) {
    throw DimensionMismatch("vector buffer holds " + std::to_string(data.size()) +
                            " values, expected " + std::to_string(regions.size()) + " x " +
                            std::to_string(dim));
  }
  for (const auto& c : regions) {
    if (c.vector.dim() != 0) {
      throw Error("candidate " + std::to_string(c.cand_id) + " carries its own vector");
    }
  }
  Index idx = build(regions, default_metric);
  idx.dim_ = regions.empty() ? 0 : dim;
  idx.data_ = std::move(data);
  return idx;
}

Index Index::build(const std::vector<CandidateRegion>& candidates, Metric default_metric) {
  Index idx;
  idx.metric_ = default_metric;
  if (candidates.empty()) return idx;
  idx.dim_ = candidates.front().vector.dim();

  std::set<std::string> doc_set;
  std::set<std::uint64_t> id_set;
  for (const auto& c : candidates) {
    if (c.vector.dim() != idx.dim_) {
      throw DimensionMismatch("candidate " + std::to_string(c.cand_id) + " has dim " +
                              std::to_string(c.vector.dim()) + ", expected " +
                              std::to_string(idx.dim_));
    }
    if (!c.box.valid()) throw Error("candidate " + std::to_string(c.cand_id) + " has invalid box");
    if (!id_set.insert(c.cand_id).second) {
      throw Error("duplicate cand_id " + std::to_string(c.cand_id));
    }
    doc_set.insert(c.doc_id);
  }
  idx.docs_.assign(doc_set.begin(), doc_set.end());
  idx.ids_.reserve(candidates.size());
  idx.boxes_.reserve(candidates.size());
  idx.doc_of_.reserve(candidates.size());
  idx.data_.reserve(candidates.size() * idx.dim_);
  for (const auto& c : candidates) {
    idx.ids_.push_back(c.cand_id);
    idx.boxes_.push_back(c.box);
    idx.doc_of_.push_back(static_cast<std::uint32_t>(
        std::lower_bound(idx.docs_.begin(), idx.docs_.end(), c.doc_id) - idx.docs_.begin()));
    idx.data_.insert(idx.data_.end(), c.vector.values.begin(), c.vector.values.end());
  }
  return idx;
}

CandidateRegion Index::candidate(std::size_t i) const {
  CandidateRegion c;
  c.cand_id = ids_[i];
  c.doc_id = doc_id(i);
  c.box = boxes_[i];
  const auto v = vector(i);
  c.vector.values.assign(v.begin(), v.end());
  return c;
}

std::vector<CandidateRegion> Index::candidates() const {
  std::vector<CandidateRegion> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(candidate(i));
  return out;
}

std::size_t Index::find(std::uint64_t cand_id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), cand_id);
  return static_cast<std::size_t>(it - ids_.begin());
}

std::vector<RankedHit> Index::search(const SearchRequest& req) const {
  if (req.top_k < 1) throw Error("top_k must be >= 1");
  if (size() == 0) return {};
  if (dim_ == 0) throw Error("index holds no vectors");
  if (req.query.dim() != dim_) {
    throw DimensionMismatch("query has dim " + std::to_string(req.query.dim()) +
                            ", index has dim " + std::to_string(dim_));
  }
  if (req.metric == Metric::kLearnedHead) {
    if (!req.head || !req.head->trained) throw Error("learned-head metric needs a trained head");
    if (req.head->dim != 0 && req.head->dim != dim_) {
      throw DimensionMismatch("head was trained on dim " + std::to_string(req.head->dim) +
                              ", index has dim " + std::to_string(dim_));
    }
    if (req.head->distance == Metric::kLearnedHead) throw Error("head distance must be a metric");
  }

  const std::size_t n = size();
  const ScoreOrder order = score_order(req.metric);
  std::vector<double> scores(n);
  auto ahead = [&](std::size_t i, std::size_t j) {
    if (scores[i] != scores[j]) return better_score(scores[i], scores[j], order);
    if (doc_of_[i] != doc_of_[j]) return doc_of_[i] < doc_of_[j];
    return ids_[i] < ids_[j];
  };
  const std::span<const float> q = req.query.values;
  auto metric_distance = [&](Metric m, std::size_t i) {
    const auto v = vector(i);
    return m == Metric::kCosine ? cosine_distance(q, v) : euclidean_distance(q, v);
  };

  unsigned workers = req.workers ? req.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::vector<std::size_t>> partial(workers);

  auto scan = [&](unsigned w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    for (std::size_t i = lo; i < hi; ++i) {
      scores[i] = req.metric == Metric::kLearnedHead
                      ? head_score(*req.head, metric_distance(req.head->distance, i))
                      : metric_distance(req.metric, i);
    }
    auto& out = partial[w];
    if (req.mode == Task::kSpotting) {
      // worst retained candidate on top
      std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(ahead)> heap(ahead);
      for (std::size_t i = lo; i < hi; ++i) {
        if (heap.size() < req.top_k) {
          heap.push(i);
        } else if (ahead(i, heap.top())) {
          heap.pop();
          heap.push(i);
        }
      }
      while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
      }
    } else {
      std::map<std::uint32_t, std::size_t> best;
      for (std::size_t i = lo; i < hi; ++i) {
        auto [it, inserted] = best.emplace(doc_of_[i], i);
        if (!inserted && ahead(i, it->second)) it->second = i;
      }
      for (const auto& [doc, i] : best) out.push_back(i);
    }
  };

  if (workers == 1) {
    scan(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(scan, w);
  }

  std::vector<std::size_t> merged;
  if (req.mode == Task::kSpotting) {
    for (const auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  } else {
    std::vector<std::size_t> best_per_doc(docs_.size(), n);
    for (const auto& p : partial) {
      for (std::size_t i : p) {
        auto& slot = best_per_doc[doc_of_[i]];
        if (slot == n || ahead(i, slot)) slot = i;
      }
    }
    for (std::size_t i : best_per_doc) {
      if (i != n) merged.push_back(i);
    }
  }
  std::sort(merged.begin(), merged.end(), ahead);
  if (merged.size() > req.top_k) merged.resize(req.top_k);

  std::vector<RankedHit> hits;
  hits.reserve(merged.size());
  for (std::size_t r = 0; r < merged.size(); ++r) {
    const std::size_t i = merged[r];
    hits.push_back({doc_id(i), boxes_[i], scores[i], r + 1, ids_[i]});
  }
  return hits;
}

void Index::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write index file: " + path.string());
  binio::write_magic(out, kIndexMagic);
  binio::write_u32(out, static_cast<std::uint32_t>(dim_));
  binio::write_u64(out, ids_.size());
  binio::write_u32(out, static_cast<std::uint32_t>(metric_));
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    binio::write_u64(out, ids_[i]);
    binio::write_string(out, doc_id(i));
    const auto& b = boxes_[i];
    for (int v : {b.x, b.y, b.w, b.h}) binio::write_u32(out, static_cast<std::uint32_t>(v));
  }
  for (float v : data_) binio::write_f32(out, v);
  if (!out) throw Error("write failed: " + path.string());
}

Index Index::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("index file not found: " + path.string());
  binio::expect_magic(in, kIndexMagic, path.string());
  const auto dim = binio::read_u32(in);
  const auto count = binio::read_u64(in);
  const auto metric = binio::read_u32(in);
  if (metric > static_cast<std::uint32_t>(Metric::kLearnedHead)) {
    throw Error(path.string() + ": unknown default metric");
  }
  std::vector<CandidateRegion> cands(count);
  for (auto& c : cands) {
    c.cand_id = binio::read_u64(in);
    c.doc_id = binio::read_string(in);
    c.box.x = static_cast<int>(binio::read_u32(in));
    c.box.y = static_cast<int>(binio::read_u32(in));
    c.box.w = static_cast<int>(binio::read_u32(in));
    c.box.h = static_cast<int>(binio::read_u32(in));
  }
  for (auto& c : cands) {
    c.vector.values.resize(dim);
    for (auto& v : c.vector.values) v = binio::read_f32(in);
  }
  Index idx = build(cands, static_cast<Metric>(metric));
  idx.dim_ = dim;
  return idx;
}

Index build_index(const std::vector<CandidateRegion>& candidates,
                  const std::filesystem::path& path, Metric default_metric) {
  Index idx = Index::build(candidates, default_metric);
  idx.save(path);
  return idx;
}

}  // namespace spotlight
