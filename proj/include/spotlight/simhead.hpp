#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spotlight/embed.hpp"

namespace spotlight {

enum class Metric { kCosine, kEuclidean, kLearnedHead };

std::string to_string(Metric m);
Metric parse_metric(const std::string& s);

/// 1 - <a, b>, clamped to [0, 2]. Inputs are expected to be unit-norm.
/// Accumulated in double.
double dot(std::span<const float> a, std::span<const float> b);
/// 1 - <a, b> for unit inputs, clamped to [0, 2].
double cosine_distance(std::span<const float> a, std::span<const float> b);
double cosine_distance(const FeatureVector& a, const FeatureVector& b);
double euclidean_distance(std::span<const float> a, std::span<const float> b);
double euclidean_distance(const FeatureVector& a, const FeatureVector& b);
double distance(Metric m, std::span<const float> a, std::span<const float> b);

double sigmoid(double z);

/// Affine map of a pair distance followed by a sigmoid: sigmoid(w * d + b).
struct SimilarityHead {
  double w = 0;
  double b = 0;
  std::size_t dim = 0;
  std::string trained_on;
  Metric distance = Metric::kEuclidean;
  bool trained = false;
};

double head_score(const SimilarityHead& head, double d);

struct LabeledPair {
  FeatureVector a;
  FeatureVector b;
  bool similar = false;
};
using PairSet = std::vector<LabeledPair>;

struct TrainOptions {
  double lr0 = 1e-3;
  double gamma = 0.999;  // lr(epoch) = lr0 * gamma^epoch
  int epochs = 200;
  std::uint64_t seed = 1;
  Metric distance = Metric::kEuclidean;
};

/// Mean sigmoid cross-entropy of sigmoid(w * d + b) against labels, and its gradient.
struct HeadLoss {
  double loss = 0;
  double grad_w = 0;
  double grad_b = 0;
};
HeadLoss head_loss(double w, double b, std::span<const double> distances,
                   std::span<const std::uint8_t> labels);

/// Seeded SGD from (w, b) = (0, 0). Returns the epoch-end head with the lowest
/// full-set loss, so the final loss never exceeds the initial one.
SimilarityHead train_head_on_distances(std::span<const double> distances,
                                       std::span<const std::uint8_t> labels,
                                       const TrainOptions& opts, std::size_t dim = 0);
SimilarityHead train_head(const PairSet& pairs, const TrainOptions& opts);

/// Fraction of pairs whose head_score falls on the labeled side of 0.5.
double pair_accuracy(const SimilarityHead& head, std::span<const double> distances,
                     std::span<const std::uint8_t> labels);

/// Seeded pair sampling: `similar_count` same-class pairs and
/// round(similar_count * negative_ratio) cross-class pairs.
PairSet make_pairs(const std::vector<FeatureVector>& vectors, const std::vector<int>& classes,
                   std::size_t similar_count, double negative_ratio, std::uint64_t seed);
/// Seeded shuffle then split; first part holds round(fraction * n) pairs.
std::pair<PairSet, PairSet> split_pairs(PairSet pairs, double train_fraction, std::uint64_t seed);

/// JSON {w, b, dim, trained_on, distance}.
void save_head(const SimilarityHead& head, const std::filesystem::path& path);
SimilarityHead load_head(const std::filesystem::path& path);

/// JSON lines: {"a": [...], "b": [...], "similar": bool}.
void write_pairs(const PairSet& pairs, const std::filesystem::path& path);
PairSet read_pairs(const std::filesystem::path& path);

}  // namespace spotlight
