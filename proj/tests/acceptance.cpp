#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "spotlight/error.hpp"
#include "spotlight/evalkit.hpp"
#include "spotlight/pipeline.hpp"
#include "spotlight/proposals.hpp"
#include "spotlight/simhead.hpp"
#include "spotlight/synth.hpp"

using namespace spotlight;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& fn) {
  const auto t = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << " | " << o.detail
            << fmt(" | %.2fs", seconds_since(t)) << std::endl;
}

// ---- shared synthetic end-to-end state ----

struct EndToEnd {
  Collection collection;
  std::size_t candidates = 0;
  Report ir;
  Report ps;
  std::vector<QueryRun> ps_union_runs;
  std::vector<QueryRun> ps_raw_runs;
  double seconds = 0;
};

EndToEnd run_end_to_end() {
  const auto t = Clock::now();
  EndToEnd e;
  SynthConfig sc;  // 20 pages, 5 categories x 6 exact copies
  e.collection = synthesize(sc);
  auto cands = propose_collection(e.collection, SelectiveSearchConfig{});
  e.candidates = cands.size();
  EmbedderConfig ec;
  ec.target_dim = 256;
  const auto embedder = fit_embedder(e.collection, cands, ec);
  std::map<std::string, FeatureVector> vectors;
  for (auto& r : embed_candidates(embedder, e.collection, cands)) vectors[r.id] = std::move(r.vector);
  const auto index = Index::build(attach_vectors(std::move(cands), vectors));

  SearchOptions ir;
  ir.mode = Task::kRetrieval;
  ir.top_k = 10;
  EvalProtocol pir;
  pir.task = Task::kRetrieval;
  pir.top_k = 10;
  e.ir = evaluate_run(search_queries(e.collection, embedder, index, ir), e.collection.ground_truth(), pir);

  SearchOptions ps;
  ps.top_k = 1000;
  ps.postprocess = true;
  e.ps_union_runs = search_queries(e.collection, embedder, index, ps);
  EvalProtocol pps;
  pps.top_k = 1000;
  e.ps = evaluate_run(e.ps_union_runs, e.collection.ground_truth(), pps);
  e.seconds = seconds_since(t);

  ps.postprocess = false;
  e.ps_raw_runs = search_queries(e.collection, embedder, index, ps);
  return e;
}

// ---- random evaluation instances ----

struct Instance {
  std::vector<QueryRun> runs;
  GroundTruth gt;
  EvalProtocol protocol;
};

Instance random_instance(std::mt19937_64& rng) {
  Instance in;
  std::uniform_int_distribution<int> ndocs(1, 4), nocc(1, 4), nhits(0, 10), nq(1, 4);
  std::uniform_int_distribution<int> k(1, 8);
  std::bernoulli_distribution coin(0.5), rare(0.2), near_copy(0.5);
  const std::vector<double> thresholds{0.1, 0.3, 0.5, 0.7};
  in.protocol.task = coin(rng) ? Task::kSpotting : Task::kRetrieval;
  in.protocol.top_k = static_cast<std::size_t>(k(rng));
  in.protocol.iou_threshold = thresholds[std::uniform_int_distribution<int>(0, 3)(rng)];
  in.protocol.ignore_junk = coin(rng);

  const int d = ndocs(rng);
  std::vector<std::string> docs;
  for (int i = 0; i < d; ++i) {
    docs.push_back("d" + std::to_string(i));
    in.gt.documents.insert(docs.back());
  }
  auto doc = [&] { return docs[std::uniform_int_distribution<int>(0, d - 1)(rng)]; };
  const std::vector<std::string> cats{"a", "b"};
  for (const auto& c : cats) {
    if (c == "b" && coin(rng)) continue;
    const int n = nocc(rng);
    for (int o = 0; o < n; ++o) {
      in.gt.categories[c].push_back({doc(), oracle::random_box(rng, 40, 40, 20), rare(rng)});
    }
  }
  const int queries = nq(rng);
  for (int q = 0; q < queries; ++q) {
    const std::string cat = in.gt.categories.count("b") && coin(rng) ? "b" : "a";
    QueryRun run{{"q" + std::to_string(q), docs[0], {0, 0, 4, 4}, cat}, {}};
    const auto& occs = in.gt.categories[cat];
    const int h = nhits(rng);
    for (int i = 0; i < h; ++i) {
      RankedHit hit;
      if (near_copy(rng)) {
        const auto& o = occs[std::uniform_int_distribution<std::size_t>(0, occs.size() - 1)(rng)];
        std::uniform_int_distribution<int> jitter(-3, 3);
        hit.doc_id = o.doc_id;
        hit.box = {std::max(0, o.box.x + jitter(rng)), std::max(0, o.box.y + jitter(rng)),
                   std::max(1, o.box.w + jitter(rng)), std::max(1, o.box.h + jitter(rng))};
      } else {
        hit.doc_id = doc();
        hit.box = oracle::random_box(rng, 40, 40, 20);
      }
      hit.rank = static_cast<std::size_t>(i + 1);
      hit.score = i;
      run.hits.push_back(hit);
    }
    in.runs.push_back(std::move(run));
  }
  return in;
}

/// Mean oracle AP over scorable queries; nullopt when none is scorable.
std::optional<double> oracle_map(const Instance& in) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : in.runs) {
    const auto q = oracle::score_query(r.hits, in.gt.occurrences(r.query.category),
                                       in.protocol.task == Task::kSpotting, in.protocol.top_k,
                                       in.protocol.iou_threshold, in.protocol.ignore_junk);
    if (q.ground_truth == 0) continue;
    sum += oracle::average_precision(q, in.protocol.top_k);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> engine_map(const Instance& in) {
  try {
    return evaluate_run(in.runs, in.gt, in.protocol).map;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::vector<float> random_values(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// count x dim unit rows, generated in place.
Index random_index(std::size_t count, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<float> data(count * dim);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (std::size_t i = 0; i < count; ++i) {
    float* row = data.data() + i * dim;
    double s = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      row[j] = u(rng);
      s += static_cast<double>(row[j]) * row[j];
    }
    const auto inv = static_cast<float>(1.0 / std::sqrt(s));
    for (std::size_t j = 0; j < dim; ++j) row[j] *= inv;
  }
  std::vector<CandidateRegion> meta(count);
  for (std::size_t i = 0; i < count; ++i) {
    meta[i].cand_id = i;
    meta[i].doc_id = "page_" + std::to_string(i / 1000);
    meta[i].box = {static_cast<int>(i % 400), static_cast<int>(i % 300), 20, 20};
  }
  return Index::build(meta, dim, std::move(data));
}

double mean_scan_seconds(const Index& index, std::uint64_t seed, int queries) {
  std::mt19937_64 rng(seed);
  double total = 0;
  for (int q = 0; q < queries; ++q) {
    const auto v = oracle::random_unit(rng, index.dim());
    SearchRequest r{{v}, Task::kSpotting, 10, Metric::kCosine, nullptr, 0};
    const auto t = Clock::now();
    const auto hits = index.search(r);
    total += seconds_since(t);
    if (hits.size() != 10) throw Error("scan returned too few hits");
  }
  return total / queries;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

int main() {
  criterion("iou equals pixel-set counting on 1000 random pairs (< 1 s)", [] {
    const auto t = Clock::now();
    std::mt19937_64 rng(2024);
    std::size_t mismatches = 0, overlapping = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto a = oracle::random_box(rng, 64, 64, 40);
      const auto b = i % 10 == 0 ? a : oracle::random_box(rng, 64, 64, 40);
      const double got = iou(a, b);
      if (got != oracle::iou_pixels(a, b)) ++mismatches;
      overlapping += got > 0;
    }
    const double s = seconds_since(t);
    return Outcome{mismatches == 0 && s < 1.0,
                   fmt("%zu mismatches, %zu overlapping pairs, %.3f s", mismatches, overlapping, s)};
  });

  criterion("mAP equals brute-force scoring on 200 random instances within 1e-12 (< 5 s)", [] {
    const auto t = Clock::now();
    std::mt19937_64 rng(77);
    double worst = 0;
    std::size_t disagreements = 0, scored = 0;
    for (int i = 0; i < 200; ++i) {
      const auto in = random_instance(rng);
      const auto want = oracle_map(in);
      const auto got = engine_map(in);
      if (want.has_value() != got.has_value()) {
        ++disagreements;
        continue;
      }
      if (!want) continue;
      ++scored;
      worst = std::max(worst, std::fabs(*want - *got));
    }
    const double s = seconds_since(t);
    return Outcome{disagreements == 0 && worst <= 1e-12 && s < 5.0,
                   fmt("%zu scored, max |diff| %.3g, %zu scorability disagreements, %.3f s", scored,
                       worst, disagreements, s)};
  });

  criterion("spotting matching equals exhaustive enumeration (<= 6 hits, <= 4 occurrences)", [] {
    std::mt19937_64 rng(5150);
    std::size_t mismatches = 0, relevant = 0;
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
      std::uniform_int_distribution<int> nh(1, 6), no(1, 4), side(12, 40);
      const int w = side(rng);
      GroundTruth gt;
      gt.documents = {"d"};
      const int occ_n = no(rng);
      for (int o = 0; o < occ_n; ++o) gt.categories["a"].push_back({"d", oracle::random_box(rng, w, w, 12), false});
      std::vector<RankedHit> hits;
      const int hit_n = nh(rng);
      for (int h = 0; h < hit_n; ++h) hits.push_back({"d", oracle::random_box(rng, w, w, 12), 0.0, 0, 0});
      EvalProtocol p;
      p.iou_threshold = std::vector<double>{0.1, 0.2, 0.3, 0.5}[t % 4];
      const auto got = mark_relevance(hits, {"q", "d", {0, 0, 1, 1}, "a"}, gt, p);
      const auto want = oracle::score_query(hits, gt.occurrences("a"), true, p.top_k, p.iou_threshold, true);
      if (got.relevant != want.relevant) ++mismatches;
      relevant += std::count(want.relevant.begin(), want.relevant.end(), true);
    }
    return Outcome{mismatches == 0, fmt("%d instances, %zu relevant hits, %zu mismatches", trials,
                                        relevant, mismatches)};
  });

  criterion("segmentation equals reference union-find on 50 random 32x32 images", [] {
    std::mt19937_64 rng(31337);
    std::size_t mismatches = 0, segments = 0;
    for (int i = 0; i < 50; ++i) {
      const int levels = std::vector<int>{4, 16, 256}[i % 3];
      std::uniform_int_distribution<int> v(0, levels - 1);
      std::vector<float> g(32 * 32);
      for (auto& p : g) p = static_cast<float>(v(rng)) / static_cast<float>(levels - 1);
      const DocumentImage img("r", 32, 32, g);
      for (double k : {50.0, 100.0}) {
        const auto got = segment_graph(img, k);
        const std::vector<int> labels(got.labels.begin(), got.labels.end());
        if (!oracle::same_partition(labels, oracle::segment(g, 32, 32, k))) ++mismatches;
        segments += static_cast<std::size_t>(got.count);
      }
    }
    return Outcome{mismatches == 0,
                   fmt("100 segmentations (k 50, 100), %zu segments, %zu mismatches", segments, mismatches)};
  });

  criterion("proposal recall@IoU0.5 >= 0.9 on 10 pages with 30 planted glyphs (< 60 s)", [] {
    const auto t = Clock::now();
    SynthConfig sc;
    sc.pages = 10;
    sc.categories = 5;
    sc.occurrences = 6;
    sc.seed = 11;
    const auto col = synthesize(sc);
    const auto cands = propose_collection(col, SelectiveSearchConfig{});
    std::map<std::string, std::vector<BoundingBox>> by_doc;
    for (const auto& c : cands) by_doc[c.doc_id].push_back(c.box);
    std::size_t planted = 0, found = 0;
    for (const auto& [cat, occs] : col.ground_truth().categories) {
      for (const auto& o : occs) {
        ++planted;
        double best = 0;
        for (const auto& b : by_doc[o.doc_id]) best = std::max(best, iou(b, o.box));
        found += best >= 0.5;
      }
    }
    const double recall = static_cast<double>(found) / static_cast<double>(planted);
    const double s = seconds_since(t);
    return Outcome{planted == 30 && recall >= 0.9 && s < 60.0,
                   fmt("recall %.3f (%zu/%zu), %zu candidates, %.1f s", recall, found, planted,
                       cands.size(), s)};
  });

  const EndToEnd e2e = run_end_to_end();
  criterion("end-to-end synthetic IR mAP@10 >= 0.9 and PS mAP@0.5 >= 0.8 with union (< 2 min)", [&] {
    return Outcome{e2e.ir.map >= 0.9 && e2e.ps.map >= 0.8 && e2e.seconds < 120.0,
                   fmt("IR mAP %.4f, PS mAP %.4f, %zu queries, %zu candidates, %.1f s", e2e.ir.map,
                       e2e.ps.map, e2e.ps.queries.size(), e2e.candidates, e2e.seconds)};
  });

  criterion("scan time at dim 256 <= 0.6 x dim 4096 on 100k candidates (20-query mean)", [] {
    double t256 = 0, t4096 = 0;
    {
      const auto idx = random_index(100000, 256, 1);
      t256 = mean_scan_seconds(idx, 2, 20);
    }
    {
      const auto idx = random_index(100000, 4096, 3);
      t4096 = mean_scan_seconds(idx, 4, 20);
    }
    const double ratio = t256 / t4096;
    return Outcome{ratio <= 0.6, fmt("dim 256 %.1f ms, dim 4096 %.1f ms, ratio %.3f", t256 * 1e3,
                                     t4096 * 1e3, ratio)};
  });

  criterion("mAP is monotone in the IoU threshold (0.1 >= 0.3 >= 0.5 >= 0.7) on every run", [&] {
    std::size_t runs = 0, violations = 0;
    auto check = [&](const std::vector<QueryRun>& r, const GroundTruth& gt, EvalProtocol p) {
      double previous = 2.0;
      for (double t : {0.1, 0.3, 0.5, 0.7}) {
        p.iou_threshold = t;
        double m = 0;
        try {
          m = evaluate_run(r, gt, p).map;
        } catch (const Error&) {
          return;
        }
        if (m > previous) ++violations;
        previous = m;
      }
      ++runs;
    };
    EvalProtocol p;
    p.top_k = 1000;
    check(e2e.ps_union_runs, e2e.collection.ground_truth(), p);
    check(e2e.ps_raw_runs, e2e.collection.ground_truth(), p);
    p.top_k = 10;
    check(e2e.ps_union_runs, e2e.collection.ground_truth(), p);
    check(e2e.ps_raw_runs, e2e.collection.ground_truth(), p);
    std::mt19937_64 rng(99);
    for (int i = 0; i < 500; ++i) {
      auto in = random_instance(rng);
      in.protocol.task = Task::kSpotting;
      check(in.runs, in.gt, in.protocol);
    }
    return Outcome{violations == 0 && runs >= 4, fmt("%zu runs, %zu violations", runs, violations)};
  });

  criterion("similarity head: separable accuracy 100%, gradient within 1e-5, learned Top-k == raw Top-k", [] {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> near(0.0, 0.5), far(1.5, 2.0);
    std::bernoulli_distribution similar(0.4);
    std::vector<double> d;
    std::vector<std::uint8_t> y;
    for (int i = 0; i < 500; ++i) {
      const bool s = similar(rng);
      d.push_back(s ? near(rng) : far(rng));
      y.push_back(s);
    }
    const auto head = train_head_on_distances(d, y, TrainOptions{}, 64);
    const double accuracy = pair_accuracy(head, d, y);

    double worst_rel = 0;
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < 100; ++t) {
      const double w = u(rng), b = u(rng), h = 1e-5;
      const auto g = head_loss(w, b, d, y);
      const double nw = (head_loss(w + h, b, d, y).loss - head_loss(w - h, b, d, y).loss) / (2 * h);
      const double nb = (head_loss(w, b + h, d, y).loss - head_loss(w, b - h, d, y).loss) / (2 * h);
      worst_rel = std::max(worst_rel, std::fabs(g.grad_w - nw) / std::max(std::fabs(nw), 1e-8));
      worst_rel = std::max(worst_rel, std::fabs(g.grad_b - nb) / std::max(std::fabs(nb), 1e-8));
    }

    const auto idx = random_index(20000, 64, 5);
    std::size_t differing = 0;
    for (int q = 0; q < 100; ++q) {
      const auto v = oracle::random_unit(rng, 64);
      SearchRequest raw{{v}, Task::kSpotting, 10, Metric::kEuclidean, nullptr, 0};
      SearchRequest learned{{v}, Task::kSpotting, 10, Metric::kLearnedHead, &head, 0};
      std::set<std::uint64_t> a, b;
      for (const auto& h : idx.search(raw)) a.insert(h.cand_id);
      for (const auto& h : idx.search(learned)) b.insert(h.cand_id);
      differing += a != b;
    }
    return Outcome{accuracy == 1.0 && head.w < 0 && worst_rel <= 1e-5 && differing == 0,
                   fmt("accuracy %.4f (w %.3f), max gradient rel. error %.2g, %zu/100 Top-10 sets differ",
                       accuracy, head.w, worst_rel, differing)};
  });

  criterion("index and vector files round-trip exactly", [] {
    const auto dir = oracle::temp_dir("acceptance");
    std::mt19937_64 rng(42);
    std::vector<CandidateRegion> cands;
    std::vector<VectorRecord> records;
    for (std::uint64_t i = 0; i < 2000; ++i) {
      auto v = random_values(rng, 128);
      cands.push_back({i * 7 + 3, "page_" + std::to_string(i % 37), oracle::random_box(rng, 500, 700, 120), {v}});
      records.push_back({std::to_string(i * 7 + 3), {v}});
    }
    const auto idx = build_index(cands, dir / "a.idx", Metric::kEuclidean);
    const auto back = Index::load(dir / "a.idx");
    bool index_ok = back == idx && back.candidates() == cands;
    back.save(dir / "b.idx");
    index_ok = index_ok && file_bytes(dir / "a.idx") == file_bytes(dir / "b.idx");

    export_vectors(dir / "a.spv", 128, records);
    std::size_t dim = 0;
    const auto read = read_vector_file(dir / "a.spv", &dim);
    bool vectors_ok = dim == 128 && read.size() == records.size();
    for (std::size_t i = 0; vectors_ok && i < read.size(); ++i) {
      vectors_ok = read[i].id == records[i].id &&
                   std::memcmp(read[i].vector.values.data(), records[i].vector.values.data(),
                               128 * sizeof(float)) == 0;
    }
    export_vectors(dir / "b.spv", 128, read);
    vectors_ok = vectors_ok && file_bytes(dir / "a.spv") == file_bytes(dir / "b.spv");
    fs::remove_all(dir);
    return Outcome{index_ok && vectors_ok,
                   fmt("index %s, vectors %s (2000 x 128)", index_ok ? "identical" : "DIFFER",
                       vectors_ok ? "bit-identical" : "DIFFER")};
  });

  std::cout << (failures == 0 ? "ALL PRIMARY CRITERIA PASS" : fmt("%d CRITERIA FAILED", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
