#include "spotlight/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "spotlight/error.hpp"
#include "spotlight/json_io.hpp"

namespace spotlight {

using json = nlohmann::json;

double iou(const BoundingBox& a, const BoundingBox& b) {
  const std::int64_t inter = intersection_area(a, b);
  if (inter == 0) return 0.0;
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

void EvalProtocol::validate() const {
  if (top_k < 1) throw Error("top_k must be >= 1");
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw Error("IoU threshold must lie in (0, 1]");
  }
}

std::size_t QueryResult::relevant_count() const {
  return static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), true));
}

QueryResult mark_relevance(std::span<const RankedHit> hits, const Query& query,
                           const GroundTruth& gt, const EvalProtocol& protocol) {
  protocol.validate();
  QueryResult out;
  out.query_id = query.query_id;
  out.category = query.category;

  const auto& all = gt.occurrences(query.category);
  std::vector<const Occurrence*> scored;  // count towards R
  std::vector<const Occurrence*> junk;    // ignored
  for (const auto& o : all) {
    (protocol.ignore_junk && o.junk ? junk : scored).push_back(&o);
  }
  std::set<std::string> relevant_docs;
  for (const auto* o : scored) relevant_docs.insert(o->doc_id);
  out.ground_truth =
      protocol.task == Task::kSpotting ? scored.size() : relevant_docs.size();

  const std::size_t n = std::min(hits.size(), protocol.top_k);
  std::set<std::string> counted_docs;
  std::vector<std::vector<std::size_t>> edges;  // per kept hit: occurrences it may take
  std::vector<std::ptrdiff_t> owner(scored.size(), -1);

  // Kuhn-style augmenting path from kept hit h
  std::vector<char> visited;
  std::function<bool(std::size_t)> augment = [&](std::size_t h) {
    for (std::size_t o : edges[h]) {
      if (visited[o]) continue;
      visited[o] = 1;
      if (owner[o] < 0 || augment(static_cast<std::size_t>(owner[o]))) {
        owner[o] = static_cast<std::ptrdiff_t>(h);
        return true;
      }
    }
    return false;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const RankedHit& hit = hits[i];
    if (!gt.documents.count(hit.doc_id)) {
      throw Error("hit references unknown document '" + hit.doc_id + "'");
    }
    bool relevant = false;
    bool is_junk = false;
    if (protocol.task == Task::kRetrieval) {
      if (relevant_docs.count(hit.doc_id)) {
        relevant = counted_docs.insert(hit.doc_id).second;
      } else {
        is_junk = std::any_of(junk.begin(), junk.end(),
                              [&](const Occurrence* o) { return o->doc_id == hit.doc_id; });
      }
    } else {
      std::vector<std::pair<double, std::size_t>> options;
      for (std::size_t o = 0; o < scored.size(); ++o) {
        if (scored[o]->doc_id != hit.doc_id) continue;
        const double v = iou(hit.box, scored[o]->box);
        if (v >= protocol.iou_threshold) options.push_back({-v, o});
      }
      std::sort(options.begin(), options.end());
      const std::size_t h = edges.size();
      edges.emplace_back();
      for (const auto& [neg, o] : options) edges[h].push_back(o);
      visited.assign(scored.size(), 0);
      relevant = augment(h);
      if (!relevant) {
        is_junk = std::any_of(junk.begin(), junk.end(), [&](const Occurrence* o) {
          return o->doc_id == hit.doc_id && iou(hit.box, o->box) >= protocol.iou_threshold;
        });
        if (is_junk) edges.pop_back();
      }
    }
    if (is_junk) {
      ++out.junk_removed;
      continue;
    }
    out.hits.push_back(hit);
    out.relevant.push_back(relevant);
  }
  return out;
}

std::optional<double> average_precision(const QueryResult& result, const EvalProtocol& protocol) {
  if (result.ground_truth == 0) return std::nullopt;
  const std::size_t capped = std::min(result.ground_truth, protocol.top_k);
  double sum = 0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < result.relevant.size(); ++r) {
    if (!result.relevant[r]) continue;
    ++found;
    sum += static_cast<double>(found) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(capped);
}

Report evaluate_run(std::span<const QueryRun> runs, const GroundTruth& gt,
                    const EvalProtocol& protocol) {
  protocol.validate();
  Report report;
  report.protocol = protocol;
  std::size_t relevant_total = 0;
  std::size_t capped_total = 0;
  for (const auto& run : runs) {
    const auto& occs = gt.occurrences(run.query.category);
    const auto samples = static_cast<std::size_t>(std::count_if(
        occs.begin(), occs.end(), [&](const Occurrence& o) { return !(protocol.ignore_junk && o.junk); }));
    if (samples < protocol.min_samples_per_class) {
      report.excluded.push_back({run.query.query_id, "class below min samples"});
      continue;
    }
    const auto result = mark_relevance(run.hits, run.query, gt, protocol);
    const auto ap = average_precision(result, protocol);
    if (!ap) {
      report.excluded.push_back({run.query.query_id, "no ground truth"});
      continue;
    }
    QueryReport q;
    q.query_id = run.query.query_id;
    q.category = run.query.category;
    q.ap = *ap;
    q.relevant = result.relevant_count();
    q.ground_truth = result.ground_truth;
    q.capped = std::min(result.ground_truth, protocol.top_k);
    q.retrieved = result.hits.size();
    report.queries.push_back(q);
  }
  if (report.queries.empty()) throw Error("no scorable query in run");
  std::sort(report.queries.begin(), report.queries.end(),
            [](const auto& a, const auto& b) { return a.query_id < b.query_id; });
  std::sort(report.excluded.begin(), report.excluded.end());
  double sum = 0;
  for (const auto& q : report.queries) {
    sum += q.ap;
    relevant_total += q.relevant;
    capped_total += q.capped;
  }
  report.map = sum / static_cast<double>(report.queries.size());
  report.recall = static_cast<double>(relevant_total) / static_cast<double>(capped_total);
  return report;
}

json report_to_json(const Report& report) {
  json queries = json::array();
  for (const auto& q : report.queries) {
    queries.push_back({{"query_id", q.query_id},
                       {"category", q.category},
                       {"ap", q.ap},
                       {"relevant", q.relevant},
                       {"ground_truth", q.ground_truth},
                       {"capped", q.capped},
                       {"retrieved", q.retrieved}});
  }
  json excluded = json::array();
  for (const auto& [id, reason] : report.excluded) {
    excluded.push_back({{"query_id", id}, {"reason", reason}});
  }
  const auto& p = report.protocol;
  return {{"protocol",
           {{"task", to_string(p.task)},
            {"top_k", p.top_k},
            {"iou", p.iou_threshold},
            {"ignore_junk", p.ignore_junk},
            {"min_samples_per_class", p.min_samples_per_class}}},
          {"map", report.map},
          {"recall", report.recall},
          {"queries", queries},
          {"excluded", excluded}};
}

std::string report_table(const Report& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-16s %8s %6s %6s\n", "query", "category", "AP",
                "rel", "R'");
  os << line;
  for (const auto& q : report.queries) {
    std::snprintf(line, sizeof line, "%-24s %-16s %8.4f %6zu %6zu\n", q.query_id.c_str(),
                  q.category.c_str(), q.ap, q.relevant, q.capped);
    os << line;
  }
  for (const auto& [id, reason] : report.excluded) os << "excluded " << id << ": " << reason << '\n';
  std::snprintf(line, sizeof line, "task=%s top_k=%zu iou=%.2f  mAP=%.4f  recall=%.4f\n",
                to_string(report.protocol.task).c_str(), report.protocol.top_k,
                report.protocol.iou_threshold, report.map, report.recall);
  os << line;
  return os.str();
}

void write_run(const std::filesystem::path& path, std::span<const QueryRun> runs) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write run file: " + path.string());
  for (const auto& run : runs) {
    for (const auto& h : run.hits) {
      out << json{{"query_id", run.query.query_id},
                  {"rank", h.rank},
                  {"doc_id", h.doc_id},
                  {"box", box_to_json(h.box)},
                  {"score", h.score},
                  {"cand_id", h.cand_id}}
                 .dump()
          << '\n';
    }
  }
}

std::map<std::string, std::vector<RankedHit>> read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("run file not found: " + path.string());
  std::map<std::string, std::vector<RankedHit>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      RankedHit h;
      h.rank = j.at("rank").get<std::size_t>();
      h.doc_id = j.at("doc_id").get<std::string>();
      h.box = box_from_json(j.at("box"));
      h.score = j.at("score").get<double>();
      h.cand_id = j.value("cand_id", std::uint64_t{0});
      out[j.at("query_id").get<std::string>()].push_back(std::move(h));
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (auto& [id, hits] : out) {
    std::stable_sort(hits.begin(), hits.end(),
                     [](const RankedHit& a, const RankedHit& b) { return a.rank < b.rank; });
  }
  return out;
}

}  // namespace spotlight
