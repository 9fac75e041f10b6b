#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spotlight/box.hpp"
#include "spotlight/image.hpp"

namespace spotlight {

enum class SimilarityComponent { kColor, kTexture, kSize, kFill };
enum class ColorSpace { kGray, kRgb, kNormalizedRgb };

struct SelectiveSearchConfig {
  bool threshold_enabled = true;
  int block = 241;       // odd, >= 3
  double offset = 0.12;  // subtracted from the neighborhood mean
  std::vector<double> k_values = {50.0, 100.0};
  std::vector<SimilarityComponent> components = {
      SimilarityComponent::kColor, SimilarityComponent::kTexture, SimilarityComponent::kFill,
      SimilarityComponent::kSize};
  std::vector<ColorSpace> color_spaces = {ColorSpace::kGray};
  int min_box = 8;
  std::size_t max_candidates_per_doc = 10000;

  bool uses(SimilarityComponent c) const;
  /// Throws Error on any violated invariant.
  void validate() const;
};

SimilarityComponent parse_component(const std::string& name);
std::string to_string(SimilarityComponent c);
ColorSpace parse_color_space(const std::string& name);
std::string to_string(ColorSpace c);

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 1 = foreground

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Largest odd window not exceeding `block` or the smaller image side.
int effective_block(int block, int width, int height);

/// mask(p) = 1 iff I(p) < mean(window around p, coordinates edge-clamped) - offset.
BinaryMask adaptive_threshold(const DocumentImage& image, int block, double offset);

/// Ink keeps its gray value, everything outside the mask becomes white.
DocumentImage apply_mask(const DocumentImage& image, const BinaryMask& mask);

struct SegmentLabelMap {
  int width = 0;
  int height = 0;
  int count = 0;
  std::vector<std::int32_t> labels;  // canonical: numbered by first row-major appearance

  std::int32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// Edge weight between 4-neighbors as used by segment_graph.
double edge_weight(float a, float b);

/// Graph-based segmentation on the 4-connected pixel grid with scale `k`.
/// Edges are processed by (weight, lower pixel index, higher pixel index).
SegmentLabelMap segment_graph(const DocumentImage& image, double k);

struct Segment {
  int id = 0;
  std::int64_t size = 0;
  BoundingBox box;
  std::vector<double> color_hist;    // 25 bins per channel, L1 = 1
  std::vector<double> texture_hist;  // 8 orientations x 10 bins per channel, L1 = 1
};

inline constexpr int kColorBins = 25;
inline constexpr int kOrientations = 8;
inline constexpr int kTextureBins = 10;

/// Per-segment size, tight box and histograms computed on `image` in `space`.
std::vector<Segment> describe_segments(const SegmentLabelMap& labels, const DocumentImage& image,
                                       ColorSpace space);

struct SimilarityScores {
  double color = 0;
  double texture = 0;
  double size = 0;
  double fill = 0;
};

SimilarityScores similarity_components(const Segment& a, const Segment& b,
                                       std::int64_t image_size);
/// Sum of the enabled components, each clamped to [0, 1].
double pairwise_similarity(const Segment& a, const Segment& b, const SelectiveSearchConfig& cfg,
                           std::int64_t image_size);

struct MergeEvent {
  int left = 0;
  int right = 0;
  int merged = 0;
  BoundingBox box;
};

struct Grouping {
  std::vector<Segment> regions;  // initial segments, then merged regions, indexed by id
  std::vector<MergeEvent> merges;
  std::vector<BoundingBox> boxes;  // region boxes after filter_regions
};

/// Greedy hierarchical grouping of adjacent regions until one remains. The most
/// similar adjacent pair is merged first; ties go to the smaller (id, id) pair.
Grouping hierarchical_group(const SegmentLabelMap& labels, std::vector<Segment> segments,
                            const SelectiveSearchConfig& cfg);

/// Dedup by exact equality, drop boxes smaller than min_box on either side,
/// keep the first max_candidates_per_doc in creation order.
std::vector<BoundingBox> filter_regions(const std::vector<BoundingBox>& regions,
                                        const SelectiveSearchConfig& cfg);

/// Union over k values and color spaces of grouped regions.
std::vector<BoundingBox> propose(const DocumentImage& image, const SelectiveSearchConfig& cfg);

}  // namespace spotlight
