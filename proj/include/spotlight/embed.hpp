#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "spotlight/box.hpp"
#include "spotlight/image.hpp"

namespace spotlight {

/// Fixed-length unit-norm descriptor of an image region.
struct FeatureVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// L2-normalized copy; throws on NaN/Inf or a zero vector.
FeatureVector normalized(std::span<const double> v);

enum class EmbedderKind { kBaseline, kExternal };
enum class Reduction { kPca, kRandomProjection, kNone };

std::string to_string(EmbedderKind k);
std::string to_string(Reduction r);
EmbedderKind parse_embedder_kind(const std::string& s);
Reduction parse_reduction(const std::string& s);

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::kBaseline;
  int target_dim = 256;
  Reduction reduction = Reduction::kPca;
  int resize = 64;
  std::uint64_t seed = 7;
  std::size_t pca_sample = 50000;

  void validate() const;
  /// Cells per side of the gradient-histogram grid: 8, or 16 once the target
  /// dimension exceeds the 8x8 descriptor.
  int cells() const;
  std::size_t raw_dim() const;

  friend bool operator==(const EmbedderConfig&, const EmbedderConfig&) = default;
};

inline constexpr int kOrientationBins = 9;

/// Bilinear resample to side x side (pixel centers aligned); when shrinking,
/// the triangle filter widens with the scale factor.
DocumentImage resize_bilinear(const DocumentImage& image, int side);
/// Separable [1 2 1]/4 filter applied `passes` times, edges clamped.
DocumentImage binomial_smooth(const DocumentImage& image, int passes);

/// Cells x cells grid of 9-bin unsigned gradient-orientation histograms. Pixels
/// vote into cells within two cell widths, weighted by a triangle kernel; each
/// cell is normalized by the energy of its 3x3 cell neighborhood and clipped at 0.2.
std::vector<double> gradient_histogram(const DocumentImage& square, int cells);

/// Linear map from raw descriptors to the target dimension.
struct ReductionMap {
  Reduction kind = Reduction::kNone;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> matrix;  // output_dim x input_dim, row-major; empty = identity + zero pad

  std::vector<double> apply(std::span<const double> x) const;
  friend bool operator==(const ReductionMap&, const ReductionMap&) = default;
};

/// Top principal directions of the centered sample. Each direction's largest
/// |coordinate| is made positive. Throws when |sample| < target_dim.
ReductionMap fit_pca(const std::vector<std::vector<double>>& sample, std::size_t target_dim);
/// Seeded Gaussian matrix with orthonormalized rows.
ReductionMap random_projection(std::size_t input_dim, std::size_t target_dim, std::uint64_t seed);
/// Identity with trailing zeros.
ReductionMap zero_pad(std::size_t input_dim, std::size_t target_dim);

ReductionMap fit_reduction(const std::vector<std::vector<double>>& sample, std::size_t input_dim,
                           std::size_t target_dim, Reduction kind, std::uint64_t seed);

struct Embedding {
  FeatureVector vector;
  bool degenerate = false;  // constant region; vector is e1
};

class Embedder {
 public:
  Embedder() = default;
  Embedder(EmbedderConfig cfg, ReductionMap map);

  /// Fits the reduction on raw descriptors; `sample` may be empty when the
  /// reduction needs no fit.
  static Embedder fit(const EmbedderConfig& cfg, const std::vector<std::vector<double>>& sample);

  const EmbedderConfig& config() const { return cfg_; }
  const ReductionMap& reduction() const { return map_; }
  std::size_t dim() const { return static_cast<std::size_t>(cfg_.target_dim); }

  /// crop -> resize -> smooth -> gradient histogram.
  std::vector<double> raw_descriptor(const DocumentImage& image, const BoundingBox& box) const;
  Embedding embed_region(const DocumentImage& image, const BoundingBox& box) const;
  Embedding embed(const DocumentImage& region) const;

  void save(const std::filesystem::path& path) const;
  static Embedder load(const std::filesystem::path& path);

  friend bool operator==(const Embedder&, const Embedder&) = default;

 private:
  std::vector<double> describe(const DocumentImage& region) const;

  EmbedderConfig cfg_;
  ReductionMap map_;
};

/// One entry of a vector exchange file.
struct VectorRecord {
  std::string id;
  FeatureVector vector;
};

/// "SPOTVEC1", u32 dim, u64 count, then per record: u32 id length, UTF-8 id, dim x f32.
void export_vectors(const std::filesystem::path& path, std::size_t dim,
                    const std::vector<VectorRecord>& records);
/// Raw records exactly as stored.
std::vector<VectorRecord> read_vector_file(const std::filesystem::path& path,
                                           std::size_t* dim = nullptr);
/// Validated import: dimension, finiteness, optional id whitelist. Vectors whose
/// norm is off 1 by more than 1e-6 are renormalized; unit vectors keep their bits.
std::map<std::string, FeatureVector> import_vectors(const std::filesystem::path& path,
                                                    std::size_t expected_dim,
                                                    const std::set<std::string>* known_ids = nullptr);

}  // namespace spotlight
