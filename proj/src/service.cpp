#include "spotlight/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>

#include <httplib.h>

#include "spotlight/json_io.hpp"

namespace spotlight {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

}  // namespace

Engine::Engine(EngineConfig cfg, Collection collection, Embedder embedder, Index index,
               std::optional<SimilarityHead> head)
    : cfg_(std::move(cfg)),
      collection_(std::move(collection)),
      embedder_(std::move(embedder)),
      index_(std::move(index)),
      head_(std::move(head)) {
  if (index_.size() > 0 && index_.dim() != embedder_.dim()) {
    throw DimensionMismatch("embedder produces dim " + std::to_string(embedder_.dim()) +
                            ", index has dim " + std::to_string(index_.dim()));
  }
}

Engine Engine::open(const EngineConfig& cfg) {
  cfg.validate();
  std::optional<SimilarityHead> head;
  if (!cfg.head.empty()) head = load_head(cfg.head);
  return Engine(cfg, load_collection(cfg.corpus), Embedder::load(cfg.embedder_path()),
                Index::load(cfg.index_path()), std::move(head));
}

const DocumentImage& Engine::page(const std::string& doc_id) const {
  const auto* doc = collection_.find(doc_id);
  if (!doc) throw HttpError(404, "unknown document '" + doc_id + "'");
  return *doc;
}

QueryResponse Engine::query(const QueryRequest& req) const {
  QueryResponse out;
  SearchOptions& opts = out.options;
  opts = cfg_.search;
  if (req.mode) opts.mode = *req.mode;
  if (req.top_k) opts.top_k = *req.top_k;
  if (req.metric) opts.metric = *req.metric;
  if (req.postprocess) opts.postprocess = *req.postprocess;
  if (opts.top_k < 1) throw HttpError(400, "top_k must be >= 1");

  auto t = Clock::now();
  FeatureVector query;
  if (req.vector) {
    query = *req.vector;
  } else {
    const auto& doc = page(req.doc_id);
    if (!req.box.valid()) throw HttpError(400, "box must have positive width and height");
    if (!req.box.fits_in(doc.width(), doc.height())) {
      throw HttpError(400, "box lies outside document '" + req.doc_id + "'");
    }
    if (embedder_.config().kind == EmbedderKind::kExternal) {
      throw HttpError(400, "external embedder: send a query vector instead of a region");
    }
    query = embedder_.embed_region(doc, req.box).vector;
  }
  out.timings.embed_ms = ms_since(t);

  const SimilarityHead* head = head_ ? &*head_ : nullptr;
  if (opts.metric == Metric::kLearnedHead && !head) {
    throw HttpError(400, "learned-head metric requested but no head is loaded");
  }
  SearchRequest sreq{query, opts.mode, opts.top_k, opts.metric, head, opts.workers};
  const bool merge = opts.postprocess && opts.mode == Task::kSpotting;
  UnionConfig u = opts.union_cfg;
  if (merge) {
    u.order = score_order(opts.metric);
    u.emit = std::min(u.emit, opts.top_k);
    sreq.top_k = u.retain;
  }
  t = Clock::now();
  try {
    out.hits = index_.search(sreq);
  } catch (const DimensionMismatch& e) {
    throw HttpError(409, e.what());
  } catch (const Error& e) {
    throw HttpError(400, e.what());
  }
  out.timings.scan_ms = ms_since(t);
  if (merge) {
    t = Clock::now();
    out.hits = union_merge(out.hits, u);
    out.timings.postproc_ms = ms_since(t);
  }
  return out;
}

BenchResult Engine::bench(std::size_t n) const {
  if (n == 0) throw HttpError(400, "bench needs at least one query");
  std::vector<QueryRequest> pool;
  for (const auto& q : collection_.queries()) pool.push_back({q.source_doc, q.box});
  for (std::size_t i = 0; pool.empty() && i < index_.size(); i += std::max<std::size_t>(1, index_.size() / 100)) {
    pool.push_back({index_.doc_id(i), index_.box(i)});
  }
  if (pool.empty()) throw HttpError(400, "nothing to query: no queries and no candidates");
  std::vector<double> times;
  times.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = Clock::now();
    query(pool[i % pool.size()]);
    times.push_back(ms_since(t));
  }
  BenchResult r;
  r.queries = n;
  for (double v : times) r.mean_ms += v;
  r.mean_ms /= static_cast<double>(n);
  std::sort(times.begin(), times.end());
  auto pct = [&](double p) {
    const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    return times[std::clamp<std::size_t>(rank, 1, n) - 1];
  };
  r.p50_ms = pct(0.50);
  r.p95_ms = pct(0.95);
  return r;
}

json Engine::docs_json() const {
  json docs = json::array();
  for (const auto& d : collection_.documents()) {
    docs.push_back({{"doc_id", d.doc_id()}, {"width", d.width()}, {"height", d.height()}});
  }
  return docs;
}

json Engine::config_json() const {
  json j = config_to_json(cfg_);
  j["index"] = {{"dim", index_.dim()},
                {"candidates", index_.size()},
                {"metric", to_string(index_.default_metric())}};
  j["head_loaded"] = head_.has_value();
  return j;
}

json Engine::overlay_json(const std::string& doc_id, bool with_candidates) const {
  const auto& doc = page(doc_id);
  json gt = json::array();
  for (const auto& [category, occs] : collection_.ground_truth().categories) {
    for (const auto& o : occs) {
      if (o.doc_id != doc_id) continue;
      gt.push_back({{"category", category}, {"box", box_to_json(o.box)}, {"junk", o.junk}});
    }
  }
  json out = {{"doc_id", doc_id},
              {"width", doc.width()},
              {"height", doc.height()},
              {"ground_truth", gt}};
  if (with_candidates) {
    json cands = json::array();
    for (std::size_t i = 0; i < index_.size(); ++i) {
      if (index_.doc_id(i) == doc_id) {
        cands.push_back({{"cand_id", index_.cand_id(i)}, {"box", box_to_json(index_.box(i))}});
      }
    }
    out["candidates"] = cands;
  }
  return out;
}

std::string Engine::page_png(const std::string& doc_id) const {
  const auto bytes = encode_png(page(doc_id));
  return {bytes.begin(), bytes.end()};
}

QueryRequest query_request_from_json(const json& j) {
  QueryRequest r;
  try {
    if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
    if (j.contains("vector")) {
      std::vector<double> v = j.at("vector").get<std::vector<double>>();
      try {
        r.vector = normalized(v);
      } catch (const Error& e) {
        throw HttpError(400, e.what());
      }
    } else {
      if (!j.contains("doc_id") || !j.contains("box")) {
        throw HttpError(400, "query needs doc_id and box, or a vector");
      }
      r.doc_id = j.at("doc_id").get<std::string>();
      try {
        r.box = box_from_json(j.at("box"));
      } catch (const Error& e) {
        throw HttpError(400, e.what());
      }
    }
    if (j.contains("mode")) r.mode = parse_task(j.at("mode").get<std::string>());
    if (j.contains("top_k")) {
      const auto k = j.at("top_k").get<long long>();
      if (k < 1) throw HttpError(400, "top_k must be >= 1");
      r.top_k = static_cast<std::size_t>(k);
    }
    if (j.contains("metric")) r.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("postprocess")) r.postprocess = j.at("postprocess").get<bool>();
  } catch (const HttpError&) {
    throw;
  } catch (const Error& e) {
    throw HttpError(400, e.what());
  } catch (const json::exception& e) {
    throw HttpError(400, e.what());
  }
  return r;
}

json hit_to_json(const RankedHit& h) {
  return {{"rank", h.rank},
          {"doc_id", h.doc_id},
          {"box", box_to_json(h.box)},
          {"score", h.score},
          {"cand_id", h.cand_id}};
}

json query_response_to_json(const QueryResponse& r) {
  json hits = json::array();
  for (const auto& h : r.hits) hits.push_back(hit_to_json(h));
  return {{"hits", hits},
          {"mode", to_string(r.options.mode)},
          {"top_k", r.options.top_k},
          {"metric", to_string(r.options.metric)},
          {"postprocess", r.options.postprocess},
          {"timings_ms",
           {{"embed", r.timings.embed_ms},
            {"scan", r.timings.scan_ms},
            {"postproc", r.timings.postproc_ms}}}};
}

std::unique_ptr<httplib::Server> make_server(const Engine& engine) {
  auto server = std::make_unique<httplib::Server>();
  auto& s = *server;

  auto send_json = [](httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto guard = [send_json](auto&& fn) {
    return [fn, send_json](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        send_json(res, {{"error", e.what()}}, e.status());
      } catch (const DimensionMismatch& e) {
        send_json(res, {{"error", e.what()}}, 409);
      } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
      }
    };
  };

  s.Post("/query", guard([&engine, send_json](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      throw HttpError(400, std::string("body does not parse: ") + e.what());
    }
    send_json(res, query_response_to_json(engine.query(query_request_from_json(body))));
  }));
  s.Get(R"(/page/([^/]+)/overlay)",
        guard([&engine, send_json](const httplib::Request& req, httplib::Response& res) {
          const bool cands = req.has_param("candidates") && req.get_param_value("candidates") != "0";
          send_json(res, engine.overlay_json(req.matches[1], cands));
        }));
  s.Get(R"(/page/([^/]+))", guard([&engine](const httplib::Request& req, httplib::Response& res) {
          res.set_content(engine.page_png(req.matches[1]), "image/png");
        }));
  s.Get("/docs", guard([&engine, send_json](const httplib::Request&, httplib::Response& res) {
          send_json(res, engine.docs_json());
        }));
  s.Get("/config", guard([&engine, send_json](const httplib::Request&, httplib::Response& res) {
          send_json(res, engine.config_json());
        }));
  s.Get("/bench", guard([&engine, send_json](const httplib::Request& req, httplib::Response& res) {
          std::size_t n = 100;
          if (req.has_param("n")) {
            try {
              n = std::stoul(req.get_param_value("n"));
            } catch (const std::exception&) {
              throw HttpError(400, "n must be a positive integer");
            }
          }
          const auto r = engine.bench(n);
          send_json(res, {{"queries", r.queries},
                          {"mean_ms", r.mean_ms},
                          {"p50_ms", r.p50_ms},
                          {"p95_ms", r.p95_ms},
                          {"candidates", engine.index().size()},
                          {"dim", engine.index().dim()}});
        }));
  const auto& ui = engine.config().ui_dir;
  if (!ui.empty() && !s.set_mount_point("/", ui.string())) {
    throw Error("ui directory not found: " + ui.string());
  }
  return server;
}

void serve(const Engine& engine) {
  auto server = make_server(engine);
  const auto& cfg = engine.config();
  std::cerr << "spotlight: serving " << engine.index().size() << " candidates on http://"
            << cfg.host << ':' << cfg.port << '\n';
  if (!server->listen(cfg.host, cfg.port)) {
    throw Error("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  }
}

}  // namespace spotlight
