#include "spotlight/corpus.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "spotlight/error.hpp"
#include "spotlight/json_io.hpp"

namespace spotlight {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("manifest not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("manifest " + path.string() + " does not parse: " + e.what());
  }
}

std::string field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw Error(where + ": missing string field '" + key + "'");
  }
  return j.at(key).get<std::string>();
}

Annotations parse_annotations(const json& m) {
  Annotations out;
  for (const auto& img : m.value("images", json::array())) {
    const auto id = field(img, "doc_id", "image entry");
    if (!out.ground_truth.documents.insert(id).second) {
      throw Error("duplicate doc_id '" + id + "'");
    }
    if (img.contains("width") && img.contains("height")) {
      out.declared_sizes[id] = {img.at("width").get<int>(), img.at("height").get<int>()};
    }
  }
  for (const auto& q : m.value("queries", json::array())) {
    Query query;
    query.query_id = field(q, "query_id", "query entry");
    const std::string where = "query '" + query.query_id + "'";
    query.source_doc = field(q, "doc_id", where);
    query.category = field(q, "category", where);
    query.box = box_from_json(q.at("box"));
    if (query.category.empty()) throw Error(where + ": empty category");
    if (!out.ground_truth.documents.count(query.source_doc)) {
      throw Error(where + ": unknown doc_id '" + query.source_doc + "'");
    }
    out.queries.push_back(std::move(query));
  }
  const json gt = m.value("ground_truth", json::object());
  for (const auto& [category, list] : gt.items()) {
    auto& occs = out.ground_truth.categories[category];
    for (const auto& o : list) {
      Occurrence occ;
      occ.doc_id = field(o, "doc_id", "ground truth of '" + category + "'");
      occ.box = box_from_json(o.at("box"));
      occ.junk = o.value("junk", false);
      if (!out.ground_truth.documents.count(occ.doc_id)) {
        throw Error("ground truth of '" + category + "' references unknown doc_id '" +
                    occ.doc_id + "'");
      }
      occs.push_back(occ);
    }
  }
  return out;
}

void check_box(const BoundingBox& box, const DocumentImage& doc, const std::string& what) {
  if (!box.fits_in(doc.width(), doc.height())) {
    throw Error(what + ": box out of bounds in '" + doc.doc_id() + "'");
  }
}

}  // namespace

const std::vector<Occurrence>& GroundTruth::occurrences(const std::string& category) const {
  static const std::vector<Occurrence> kNone;
  auto it = categories.find(category);
  return it == categories.end() ? kNone : it->second;
}

Collection::Collection(std::vector<DocumentImage> docs, std::vector<Query> queries,
                       GroundTruth gt)
    : docs_(std::move(docs)), queries_(std::move(queries)), gt_(std::move(gt)) {
  std::sort(docs_.begin(), docs_.end(),
            [](const auto& a, const auto& b) { return a.doc_id() < b.doc_id(); });
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (!by_id_.emplace(docs_[i].doc_id(), i).second) {
      throw Error("duplicate doc_id '" + docs_[i].doc_id() + "'");
    }
    gt_.documents.insert(docs_[i].doc_id());
  }
  for (const auto& q : queries_) {
    const auto* doc = find(q.source_doc);
    if (!doc) throw Error("query '" + q.query_id + "': unknown doc_id '" + q.source_doc + "'");
    if (q.category.empty()) throw Error("query '" + q.query_id + "': empty category");
    check_box(q.box, *doc, "query '" + q.query_id + "'");
  }
  for (const auto& [category, occs] : gt_.categories) {
    for (const auto& o : occs) {
      const auto* doc = find(o.doc_id);
      if (!doc) {
        throw Error("ground truth of '" + category + "' references unknown doc_id '" +
                    o.doc_id + "'");
      }
      check_box(o.box, *doc, "ground truth of '" + category + "'");
    }
  }
}

const DocumentImage* Collection::find(const std::string& doc_id) const {
  auto it = by_id_.find(doc_id);
  return it == by_id_.end() ? nullptr : &docs_[it->second];
}

const DocumentImage& Collection::at(const std::string& doc_id) const {
  const auto* d = find(doc_id);
  if (!d) throw Error("unknown doc_id '" + doc_id + "'");
  return *d;
}

Annotations load_annotations(const fs::path& manifest_path) {
  return parse_annotations(read_manifest(manifest_path));
}

Collection load_collection(const fs::path& manifest_path) {
  const json m = read_manifest(manifest_path);
  Annotations ann = parse_annotations(m);
  const fs::path base = manifest_path.parent_path();
  std::vector<DocumentImage> docs;
  for (const auto& img : m.value("images", json::array())) {
    const auto id = img.at("doc_id").get<std::string>();
    const fs::path p = base / field(img, "path", "image '" + id + "'");
    docs.push_back(read_image(p, id));
  }
  return Collection(std::move(docs), std::move(ann.queries), std::move(ann.ground_truth));
}

fs::path save_collection(const Collection& collection, const fs::path& dir) {
  fs::create_directories(dir / "pages");
  json images = json::array();
  for (const auto& doc : collection.documents()) {
    const std::string rel = "pages/" + doc.doc_id() + ".png";
    write_png(doc, dir / rel);
    images.push_back({{"doc_id", doc.doc_id()},
                      {"path", rel},
                      {"width", doc.width()},
                      {"height", doc.height()}});
  }
  json queries = json::array();
  for (const auto& q : collection.queries()) {
    queries.push_back({{"query_id", q.query_id},
                       {"doc_id", q.source_doc},
                       {"box", box_to_json(q.box)},
                       {"category", q.category}});
  }
  json gt = json::object();
  for (const auto& [category, occs] : collection.ground_truth().categories) {
    json list = json::array();
    for (const auto& o : occs) {
      json e = {{"doc_id", o.doc_id}, {"box", box_to_json(o.box)}};
      if (o.junk) e["junk"] = true;
      list.push_back(std::move(e));
    }
    gt[category] = std::move(list);
  }
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  if (!out) throw Error("cannot write manifest: " + manifest.string());
  out << json{{"images", images}, {"queries", queries}, {"ground_truth", gt}}.dump(2) << '\n';
  return manifest;
}

}  // namespace spotlight
