#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spotlight/box.hpp"
#include "spotlight/image.hpp"

namespace spotlight {

struct Query {
  std::string query_id;
  std::string source_doc;
  BoundingBox box;
  std::string category;

  friend bool operator==(const Query&, const Query&) = default;
};

struct Occurrence {
  std::string doc_id;
  BoundingBox box;
  bool junk = false;

  friend bool operator==(const Occurrence&, const Occurrence&) = default;
};

/// Annotated occurrences per category, plus the set of known documents.
struct GroundTruth {
  std::map<std::string, std::vector<Occurrence>> categories;
  std::set<std::string> documents;

  const std::vector<Occurrence>& occurrences(const std::string& category) const;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Queries and ground truth without pixel data.
struct Annotations {
  std::vector<Query> queries;
  GroundTruth ground_truth;
  /// doc_id -> (width, height), as declared in the manifest when present.
  std::map<std::string, std::pair<int, int>> declared_sizes;
};

/// Immutable after load. Documents are ordered by doc_id.
class Collection {
 public:
  Collection() = default;
  Collection(std::vector<DocumentImage> docs, std::vector<Query> queries, GroundTruth gt);

  const std::vector<DocumentImage>& documents() const { return docs_; }
  const std::vector<Query>& queries() const { return queries_; }
  const GroundTruth& ground_truth() const { return gt_; }

  const DocumentImage* find(const std::string& doc_id) const;
  const DocumentImage& at(const std::string& doc_id) const;

  friend bool operator==(const Collection& a, const Collection& b) {
    return a.docs_ == b.docs_ && a.queries_ == b.queries_ && a.gt_ == b.gt_;
  }

 private:
  std::vector<DocumentImage> docs_;
  std::vector<Query> queries_;
  GroundTruth gt_;
  std::map<std::string, std::size_t> by_id_;
};

/// Manifest layout (JSON, paths relative to the manifest's directory):
///   { "images": [{"doc_id", "path"}],
///     "queries": [{"query_id", "doc_id", "box": [x,y,w,h], "category"}],
///     "ground_truth": {"<category>": [{"doc_id", "box", "junk"?}]} }
Collection load_collection(const std::filesystem::path& manifest_path);

/// Reads queries and ground truth only; no image is decoded.
Annotations load_annotations(const std::filesystem::path& manifest_path);

/// Writes every page as `<dir>/pages/<doc_id>.png` plus `<dir>/manifest.json`.
std::filesystem::path save_collection(const Collection& collection,
                                      const std::filesystem::path& dir);

}  // namespace spotlight
