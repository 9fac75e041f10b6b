#include "spotlight/simhead.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "spotlight/error.hpp"

namespace spotlight {

using json = nlohmann::json;

namespace {

void check_dims(std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionMismatch("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

std::string to_string(Metric m) {
  switch (m) {
    case Metric::kCosine: return "cosine";
    case Metric::kEuclidean: return "euclidean";
    case Metric::kLearnedHead: return "learned-head";
  }
  return "?";
}

Metric parse_metric(const std::string& s) {
  if (s == "cosine") return Metric::kCosine;
  if (s == "euclidean") return Metric::kEuclidean;
  if (s == "learned-head" || s == "head") return Metric::kLearnedHead;
  throw Error("unknown metric '" + s + "'");
}

double dot(std::span<const float> a, std::span<const float> b) {
  check_dims(a.size(), b.size());
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double cosine_distance(std::span<const float> a, std::span<const float> b) {
  return std::clamp(1.0 - dot(a, b), 0.0, 2.0);
}

double cosine_distance(const FeatureVector& a, const FeatureVector& b) {
  return cosine_distance(a.values, b.values);
}

double euclidean_distance(std::span<const float> a, std::span<const float> b) {
  check_dims(a.size(), b.size());
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double euclidean_distance(const FeatureVector& a, const FeatureVector& b) {
  return euclidean_distance(a.values, b.values);
}

double distance(Metric m, std::span<const float> a, std::span<const float> b) {
  switch (m) {
    case Metric::kCosine: return cosine_distance(a, b);
    case Metric::kEuclidean: return euclidean_distance(a, b);
    case Metric::kLearnedHead: break;
  }
  throw Error("learned-head is not a distance");
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double head_score(const SimilarityHead& head, double d) {
  if (!head.trained) throw Error("similarity head is not trained");
  return sigmoid(head.w * d + head.b);
}

HeadLoss head_loss(double w, double b, std::span<const double> distances,
                   std::span<const std::uint8_t> labels) {
  check_dims(distances.size(), labels.size());
  HeadLoss out;
  if (distances.empty()) return out;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double z = w * distances[i] + b;
    const double y = labels[i] ? 1.0 : 0.0;
    out.loss += softplus(z) - y * z;
    const double g = sigmoid(z) - y;
    out.grad_w += g * distances[i];
    out.grad_b += g;
  }
  const double n = static_cast<double>(distances.size());
  out.loss /= n;
  out.grad_w /= n;
  out.grad_b /= n;
  return out;
}

SimilarityHead train_head_on_distances(std::span<const double> distances,
                                       std::span<const std::uint8_t> labels,
                                       const TrainOptions& opts, std::size_t dim) {
  check_dims(distances.size(), labels.size());
  const auto positives = std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error("pair set needs both similar and dissimilar pairs");
  }
  if (opts.epochs < 1 || !(opts.lr0 > 0)) throw Error("invalid training options");

  double w = 0, b = 0;
  double best_w = 0, best_b = 0;
  double best_loss = head_loss(0, 0, distances, labels).loss;

  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opts.seed);
  double lr = opts.lr0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const double g = sigmoid(w * distances[i] + b) - (labels[i] ? 1.0 : 0.0);
      w -= lr * g * distances[i];
      b -= lr * g;
    }
    const double loss = head_loss(w, b, distances, labels).loss;
    if (!std::isfinite(loss)) throw Error("non-finite loss during head training");
    if (loss < best_loss) {
      best_loss = loss;
      best_w = w;
      best_b = b;
    }
    lr *= opts.gamma;
  }
  SimilarityHead head;
  head.w = best_w;
  head.b = best_b;
  head.dim = dim;
  head.distance = opts.distance;
  head.trained = true;
  head.trained_on = std::to_string(distances.size()) + " pairs";
  return head;
}

SimilarityHead train_head(const PairSet& pairs, const TrainOptions& opts) {
  if (pairs.empty()) throw Error("empty pair set");
  const std::size_t dim = pairs.front().a.dim();
  std::vector<double> d;
  std::vector<std::uint8_t> y;
  d.reserve(pairs.size());
  y.reserve(pairs.size());
  for (const auto& p : pairs) {
    check_dims(p.a.dim(), dim);
    check_dims(p.b.dim(), dim);
    d.push_back(distance(opts.distance, p.a.values, p.b.values));
    y.push_back(p.similar ? 1 : 0);
  }
  return train_head_on_distances(d, y, opts, dim);
}

double pair_accuracy(const SimilarityHead& head, std::span<const double> distances,
                     std::span<const std::uint8_t> labels) {
  check_dims(distances.size(), labels.size());
  if (distances.empty()) return 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const bool predicted = head_score(head, distances[i]) > 0.5;
    if (predicted == (labels[i] != 0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(distances.size());
}

PairSet make_pairs(const std::vector<FeatureVector>& vectors, const std::vector<int>& classes,
                   std::size_t similar_count, double negative_ratio, std::uint64_t seed) {
  check_dims(vectors.size(), classes.size());
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < classes.size(); ++i) by_class[classes[i]].push_back(i);
  std::vector<int> pairable;
  for (const auto& [c, members] : by_class) {
    if (members.size() >= 2) pairable.push_back(c);
  }
  if (pairable.empty() || by_class.size() < 2) {
    throw Error("need two classes and at least one class with two members");
  }
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  PairSet out;
  for (std::size_t i = 0; i < similar_count; ++i) {
    const auto& members = by_class[pairable[pick(pairable.size())]];
    const std::size_t a = pick(members.size());
    std::size_t b = pick(members.size() - 1);
    if (b >= a) ++b;
    out.push_back({vectors[members[a]], vectors[members[b]], true});
  }
  const auto negatives = static_cast<std::size_t>(std::llround(similar_count * negative_ratio));
  for (std::size_t i = 0; i < negatives; ++i) {
    std::size_t a = pick(vectors.size());
    std::size_t b = pick(vectors.size());
    while (classes[a] == classes[b]) b = pick(vectors.size());
    out.push_back({vectors[a], vectors[b], false});
  }
  return out;
}

std::pair<PairSet, PairSet> split_pairs(PairSet pairs, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0 && train_fraction <= 1)) throw Error("train fraction outside [0,1]");
  std::mt19937_64 rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const auto cut = static_cast<std::size_t>(std::llround(train_fraction * pairs.size()));
  PairSet test(std::make_move_iterator(pairs.begin() + static_cast<std::ptrdiff_t>(cut)),
               std::make_move_iterator(pairs.end()));
  pairs.resize(cut);
  return {std::move(pairs), std::move(test)};
}

void save_head(const SimilarityHead& head, const std::filesystem::path& path) {
  if (!head.trained) throw Error("refusing to save an untrained head");
  std::ofstream out(path);
  if (!out) throw Error("cannot write head file: " + path.string());
  out << json{{"w", head.w},
              {"b", head.b},
              {"dim", head.dim},
              {"trained_on", head.trained_on},
              {"distance", to_string(head.distance)}}
             .dump(2)
      << '\n';
}

SimilarityHead load_head(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("head file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("head file " + path.string() + " does not parse: " + e.what());
  }
  SimilarityHead head;
  head.w = j.at("w").get<double>();
  head.b = j.at("b").get<double>();
  head.dim = j.at("dim").get<std::size_t>();
  head.trained_on = j.value("trained_on", "");
  head.distance = parse_metric(j.value("distance", "euclidean"));
  if (!std::isfinite(head.w) || !std::isfinite(head.b)) throw Error("head parameters not finite");
  head.trained = true;
  return head;
}

void write_pairs(const PairSet& pairs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write pairs file: " + path.string());
  for (const auto& p : pairs) {
    out << json{{"a", p.a.values}, {"b", p.b.values}, {"similar", p.similar}}.dump() << '\n';
  }
}

PairSet read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("pairs file not found: " + path.string());
  PairSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      LabeledPair p;
      p.a.values = j.at("a").get<std::vector<float>>();
      p.b.values = j.at("b").get<std::vector<float>>();
      p.similar = j.at("similar").get<bool>();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace spotlight
