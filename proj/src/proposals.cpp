#include "spotlight/proposals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <tuple>
#include <utility>

#include "spotlight/error.hpp"

namespace spotlight {

namespace {

// Fixed-point scale for the adaptive threshold sums; exact integer comparison
// keeps the mask independent of summation order.
constexpr double kFixedScale = 16777216.0;  // 2^24

std::int64_t to_fixed(double v) { return std::llround(v * kFixedScale); }

// Sum over window [c - r, c + r] of clamped samples, using prefix sums `p`
// (p[i] = sum of the first i samples).
std::int64_t clamped_window_sum(const std::vector<std::int64_t>& p,
                                const std::int64_t* first, const std::int64_t* last, int n,
                                int c, int r) {
  const int lo = c - r;
  const int hi = c + r;
  const int a = std::max(lo, 0);
  const int b = std::min(hi, n - 1);
  std::int64_t s = p[b + 1] - p[a];
  if (lo < 0) s += static_cast<std::int64_t>(-lo) * *first;
  if (hi > n - 1) s += static_cast<std::int64_t>(hi - (n - 1)) * *last;
  return s;
}

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  std::uint32_t join(std::uint32_t a, std::uint32_t b) {
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }
  std::int64_t size(std::uint32_t root) const { return size_[root]; }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::int64_t> size_;
};

std::vector<std::vector<float>> channels_for(const DocumentImage& image, ColorSpace space) {
  const std::size_t n = image.gray().size();
  if (space == ColorSpace::kGray || !image.has_color()) return {image.gray()};
  std::vector<std::vector<float>> out(3, std::vector<float>(n));
  const auto& rgb = image.rgb();
  for (std::size_t i = 0; i < n; ++i) {
    float r = rgb[3 * i], g = rgb[3 * i + 1], b = rgb[3 * i + 2];
    if (space == ColorSpace::kNormalizedRgb) {
      const float s = r + g + b;
      if (s > 0) {
        r /= s;
        g /= s;
        b /= s;
      } else {
        r = g = b = 1.0f / 3.0f;
      }
    }
    out[0][i] = r;
    out[1][i] = g;
    out[2][i] = b;
  }
  return out;
}

std::vector<double> gaussian_kernel(bool derivative) {
  constexpr int kRadius = 3;  // 3 sigma, sigma = 1
  std::vector<double> k(2 * kRadius + 1);
  double norm = 0;
  for (int t = -kRadius; t <= kRadius; ++t) {
    const double g = std::exp(-0.5 * t * t);
    k[t + kRadius] = derivative ? -t * g : g;
    norm += derivative ? t * t * g : g;
  }
  for (auto& v : k) v /= norm;
  return k;
}

// Separable convolution with clamped borders.
std::vector<double> convolve(const std::vector<float>& src, int w, int h,
                             const std::vector<double>& kx, const std::vector<double>& ky) {
  const int rx = static_cast<int>(kx.size()) / 2;
  const int ry = static_cast<int>(ky.size()) / 2;
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int t = -rx; t <= rx; ++t) {
        const int xx = std::clamp(x + t, 0, w - 1);
        s += kx[t + rx] * src[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int t = -ry; t <= ry; ++t) {
        const int yy = std::clamp(y + t, 0, h - 1);
        s += ky[t + ry] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

void normalize_l1(std::vector<double>& h) {
  const double s = std::accumulate(h.begin(), h.end(), 0.0);
  if (s > 0) {
    for (auto& v : h) v /= s;
  }
}

double histogram_intersection(const std::vector<double>& a, const std::vector<double>& b,
                              const char* what) {
  if (a.size() != b.size()) {
    throw Error(std::string("mismatched ") + what + " histogram dimensions");
  }
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::min(a[i], b[i]);
  return s;
}

std::vector<double> blend(const std::vector<double>& a, std::int64_t sa,
                          const std::vector<double>& b, std::int64_t sb) {
  std::vector<double> out(a.size());
  const double t = static_cast<double>(sa + sb);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (sa * a[i] + sb * b[i]) / t;
  normalize_l1(out);
  return out;
}

}  // namespace

bool SelectiveSearchConfig::uses(SimilarityComponent c) const {
  return std::find(components.begin(), components.end(), c) != components.end();
}

void SelectiveSearchConfig::validate() const {
  if (block < 3 || block % 2 == 0) {
    throw Error("adaptive threshold block must be odd and >= 3, got " + std::to_string(block));
  }
  if (!(offset >= 0.0 && offset < 1.0)) throw Error("threshold offset must lie in [0, 1)");
  if (k_values.empty()) throw Error("k_values must not be empty");
  for (double k : k_values) {
    if (!(k > 0)) throw Error("every k value must be positive");
  }
  if (components.empty()) throw Error("similarity components must not be empty");
  if (color_spaces.empty()) throw Error("color spaces must not be empty");
  if (min_box < 1) throw Error("min_box must be >= 1");
  if (max_candidates_per_doc == 0) throw Error("max_candidates_per_doc must be >= 1");
}

SimilarityComponent parse_component(const std::string& name) {
  if (name == "color" || name == "colour") return SimilarityComponent::kColor;
  if (name == "texture") return SimilarityComponent::kTexture;
  if (name == "size") return SimilarityComponent::kSize;
  if (name == "fill" || name == "filler") return SimilarityComponent::kFill;
  throw Error("unknown similarity component '" + name + "'");
}

std::string to_string(SimilarityComponent c) {
  switch (c) {
    case SimilarityComponent::kColor: return "color";
    case SimilarityComponent::kTexture: return "texture";
    case SimilarityComponent::kSize: return "size";
    case SimilarityComponent::kFill: return "fill";
  }
  return "?";
}

ColorSpace parse_color_space(const std::string& name) {
  if (name == "gray") return ColorSpace::kGray;
  if (name == "rgb") return ColorSpace::kRgb;
  if (name == "nrgb") return ColorSpace::kNormalizedRgb;
  throw Error("unknown color space '" + name + "'");
}

std::string to_string(ColorSpace c) {
  switch (c) {
    case ColorSpace::kGray: return "gray";
    case ColorSpace::kRgb: return "rgb";
    case ColorSpace::kNormalizedRgb: return "nrgb";
  }
  return "?";
}

int effective_block(int block, int width, int height) {
  int limit = std::min(width, height);
  if (limit % 2 == 0) --limit;
  return std::max(1, std::min(block, limit));
}

BinaryMask adaptive_threshold(const DocumentImage& image, int block, double offset) {
  if (block < 3 || block % 2 == 0) {
    throw Error("adaptive threshold block must be odd and >= 3, got " + std::to_string(block));
  }
  const int w = image.width();
  const int h = image.height();
  const int r = effective_block(block, w, h) / 2;
  const std::int64_t n = static_cast<std::int64_t>(2 * r + 1) * (2 * r + 1);

  std::vector<std::int64_t> q(image.gray().size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = to_fixed(image.gray()[i]);

  std::vector<std::int64_t> rows(q.size());
  std::vector<std::int64_t> prefix(static_cast<std::size_t>(std::max(w, h)) + 1);
  for (int y = 0; y < h; ++y) {
    const std::int64_t* row = q.data() + static_cast<std::size_t>(y) * w;
    prefix[0] = 0;
    for (int x = 0; x < w; ++x) prefix[x + 1] = prefix[x] + row[x];
    for (int x = 0; x < w; ++x) {
      rows[static_cast<std::size_t>(y) * w + x] =
          clamped_window_sum(prefix, row, row + w - 1, w, x, r);
    }
  }

  BinaryMask mask{w, h, std::vector<std::uint8_t>(q.size(), 0)};
  const std::int64_t off = to_fixed(offset);
  std::vector<std::int64_t> col(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = rows[static_cast<std::size_t>(y) * w + x];
    prefix[0] = 0;
    for (int y = 0; y < h; ++y) prefix[y + 1] = prefix[y] + col[y];
    for (int y = 0; y < h; ++y) {
      const std::int64_t sum = clamped_window_sum(prefix, &col[0], &col[h - 1], h, y, r);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      // I < sum / n - offset, multiplied through by n
      mask.bits[i] = (q[i] * n < sum - off * n) ? 1 : 0;
    }
  }
  return mask;
}

DocumentImage apply_mask(const DocumentImage& image, const BinaryMask& mask) {
  if (mask.width != image.width() || mask.height != image.height()) {
    throw Error("mask size does not match image '" + image.doc_id() + "'");
  }
  std::vector<float> out(image.gray());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask.bits[i]) out[i] = 1.0f;
  }
  return DocumentImage(image.doc_id(), image.width(), image.height(), std::move(out));
}

double edge_weight(float a, float b) {
  // k is conventionally tuned for 8-bit intensities
  return 255.0 * std::fabs(static_cast<double>(a) - static_cast<double>(b));
}

SegmentLabelMap segment_graph(const DocumentImage& image, double k) {
  if (!(k > 0)) throw Error("segmentation scale k must be positive");
  const int w = image.width();
  const int h = image.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const auto& px = image.gray();

  struct Edge {
    double weight;
    std::uint32_t a;
    std::uint32_t b;
  };
  std::vector<Edge> edges;
  edges.reserve(2 * n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto p = static_cast<std::uint32_t>(static_cast<std::size_t>(y) * w + x);
      if (x + 1 < w) edges.push_back({edge_weight(px[p], px[p + 1]), p, p + 1});
      if (y + 1 < h) edges.push_back({edge_weight(px[p], px[p + w]), p, p + static_cast<std::uint32_t>(w)});
    }
  }
  // generation order is already (a, b)-lexicographic
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& l, const Edge& r) { return l.weight < r.weight; });

  DisjointSet sets(n);
  std::vector<double> threshold(n, k);
  for (const auto& e : edges) {
    auto ra = sets.find(e.a);
    auto rb = sets.find(e.b);
    if (ra == rb) continue;
    if (e.weight <= threshold[ra] && e.weight <= threshold[rb]) {
      const auto root = sets.join(ra, rb);
      threshold[root] = e.weight + k / static_cast<double>(sets.size(root));
    }
  }

  SegmentLabelMap map{w, h, 0, std::vector<std::int32_t>(n)};
  std::vector<std::int32_t> canonical(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto root = sets.find(static_cast<std::uint32_t>(i));
    if (canonical[root] < 0) canonical[root] = map.count++;
    map.labels[i] = canonical[root];
  }
  return map;
}

std::vector<Segment> describe_segments(const SegmentLabelMap& labels, const DocumentImage& image,
                                       ColorSpace space) {
  if (labels.width != image.width() || labels.height != image.height()) {
    throw Error("label map size does not match image '" + image.doc_id() + "'");
  }
  const int w = image.width();
  const int h = image.height();
  const auto planes = channels_for(image, space);
  const int nc = static_cast<int>(planes.size());

  std::vector<Segment> segs(labels.count);
  std::vector<std::array<int, 4>> extent(labels.count, {w, h, -1, -1});
  for (int i = 0; i < labels.count; ++i) {
    segs[i].id = i;
    segs[i].color_hist.assign(static_cast<std::size_t>(nc) * kColorBins, 0.0);
    segs[i].texture_hist.assign(static_cast<std::size_t>(nc) * kOrientations * kTextureBins, 0.0);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = labels.at(x, y);
      auto& e = extent[l];
      e[0] = std::min(e[0], x);
      e[1] = std::min(e[1], y);
      e[2] = std::max(e[2], x);
      e[3] = std::max(e[3], y);
      ++segs[l].size;
    }
  }
  for (int i = 0; i < labels.count; ++i) {
    const auto& e = extent[i];
    segs[i].box = {e[0], e[1], e[2] - e[0] + 1, e[3] - e[1] + 1};
  }

  const auto g = gaussian_kernel(false);
  const auto dg = gaussian_kernel(true);
  const std::size_t n = image.gray().size();
  std::vector<double> response(n);
  for (int c = 0; c < nc; ++c) {
    const auto& plane = planes[c];
    for (std::size_t i = 0; i < n; ++i) {
      const int l = labels.labels[i];
      const int bin = std::min(kColorBins - 1, static_cast<int>(plane[i] * kColorBins));
      segs[l].color_hist[static_cast<std::size_t>(c) * kColorBins + std::max(bin, 0)] += 1.0;
    }
    const auto gx = convolve(plane, w, h, dg, g);
    const auto gy = convolve(plane, w, h, g, dg);
    for (int o = 0; o < kOrientations; ++o) {
      const double theta = o * std::numbers::pi / 4.0;
      const double ct = std::cos(theta);
      const double st = std::sin(theta);
      double peak = 0;
      for (std::size_t i = 0; i < n; ++i) {
        response[i] = std::max(0.0, ct * gx[i] + st * gy[i]);
        peak = std::max(peak, response[i]);
      }
      const std::size_t base = (static_cast<std::size_t>(c) * kOrientations + o) * kTextureBins;
      for (std::size_t i = 0; i < n; ++i) {
        const int bin = peak > 0 ? std::min(kTextureBins - 1,
                                            static_cast<int>(kTextureBins * response[i] / peak))
                                 : 0;
        segs[labels.labels[i]].texture_hist[base + bin] += 1.0;
      }
    }
  }
  for (auto& s : segs) {
    normalize_l1(s.color_hist);
    normalize_l1(s.texture_hist);
  }
  return segs;
}

SimilarityScores similarity_components(const Segment& a, const Segment& b,
                                       std::int64_t image_size) {
  if (image_size <= 0) throw Error("image size must be positive");
  const double img = static_cast<double>(image_size);
  SimilarityScores s;
  s.color = std::clamp(histogram_intersection(a.color_hist, b.color_hist, "color"), 0.0, 1.0);
  s.texture =
      std::clamp(histogram_intersection(a.texture_hist, b.texture_hist, "texture"), 0.0, 1.0);
  s.size = std::clamp(1.0 - static_cast<double>(a.size + b.size) / img, 0.0, 1.0);
  const double hull = static_cast<double>(enclose(a.box, b.box).area());
  s.fill = std::clamp(1.0 - (hull - static_cast<double>(a.size + b.size)) / img, 0.0, 1.0);
  return s;
}

double pairwise_similarity(const Segment& a, const Segment& b, const SelectiveSearchConfig& cfg,
                           std::int64_t image_size) {
  const auto s = similarity_components(a, b, image_size);
  double total = 0;
  if (cfg.uses(SimilarityComponent::kColor)) total += s.color;
  if (cfg.uses(SimilarityComponent::kTexture)) total += s.texture;
  if (cfg.uses(SimilarityComponent::kSize)) total += s.size;
  if (cfg.uses(SimilarityComponent::kFill)) total += s.fill;
  return total;
}

Grouping hierarchical_group(const SegmentLabelMap& labels, std::vector<Segment> segments,
                            const SelectiveSearchConfig& cfg) {
  if (static_cast<int>(segments.size()) != labels.count) {
    throw Error("segment list does not match label map");
  }
  const std::int64_t image_size = static_cast<std::int64_t>(labels.width) * labels.height;
  Grouping out;
  out.regions = std::move(segments);

  std::vector<std::set<int>> neighbors(out.regions.size());
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      const int l = labels.at(x, y);
      if (x + 1 < labels.width && labels.at(x + 1, y) != l) {
        neighbors[l].insert(labels.at(x + 1, y));
        neighbors[labels.at(x + 1, y)].insert(l);
      }
      if (y + 1 < labels.height && labels.at(x, y + 1) != l) {
        neighbors[l].insert(labels.at(x, y + 1));
        neighbors[labels.at(x, y + 1)].insert(l);
      }
    }
  }

  // Ordered by similarity descending, then (a, b) ascending.
  using Key = std::tuple<double, int, int>;
  auto before = [](const Key& l, const Key& r) {
    if (std::get<0>(l) != std::get<0>(r)) return std::get<0>(l) > std::get<0>(r);
    return std::make_pair(std::get<1>(l), std::get<2>(l)) <
           std::make_pair(std::get<1>(r), std::get<2>(r));
  };
  std::set<Key, decltype(before)> queue(before);
  std::map<std::pair<int, int>, double> score;
  auto add_pair = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    const double s = pairwise_similarity(out.regions[a], out.regions[b], cfg, image_size);
    score[{a, b}] = s;
    queue.insert({s, a, b});
  };
  auto drop_pair = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    auto it = score.find({a, b});
    if (it == score.end()) return;
    queue.erase({it->second, a, b});
    score.erase(it);
  };

  for (std::size_t a = 0; a < neighbors.size(); ++a) {
    for (int b : neighbors[a]) {
      if (static_cast<int>(a) < b) add_pair(static_cast<int>(a), b);
    }
  }

  while (!queue.empty()) {
    const auto [s, a, b] = *queue.begin();
    const int m = static_cast<int>(out.regions.size());
    const Segment& ra = out.regions[a];
    const Segment& rb = out.regions[b];
    Segment merged;
    merged.id = m;
    merged.size = ra.size + rb.size;
    merged.box = enclose(ra.box, rb.box);
    merged.color_hist = blend(ra.color_hist, ra.size, rb.color_hist, rb.size);
    merged.texture_hist = blend(ra.texture_hist, ra.size, rb.texture_hist, rb.size);
    out.merges.push_back({a, b, m, merged.box});

    std::set<int> joined;
    for (int v : {a, b}) {
      for (int nb : std::set<int>(neighbors[v])) {
        drop_pair(v, nb);
        neighbors[nb].erase(v);
        if (nb != a && nb != b) joined.insert(nb);
      }
      neighbors[v].clear();
    }
    out.regions.push_back(std::move(merged));
    neighbors.emplace_back();
    for (int nb : joined) {
      neighbors[m].insert(nb);
      neighbors[nb].insert(m);
      add_pair(nb, m);
    }
  }

  std::vector<BoundingBox> raw;
  raw.reserve(out.regions.size());
  for (const auto& r : out.regions) raw.push_back(r.box);
  out.boxes = filter_regions(raw, cfg);
  return out;
}

std::vector<BoundingBox> filter_regions(const std::vector<BoundingBox>& regions,
                                        const SelectiveSearchConfig& cfg) {
  std::vector<BoundingBox> out;
  std::set<BoundingBox> seen;
  for (const auto& b : regions) {
    if (out.size() >= cfg.max_candidates_per_doc) break;
    if (b.w < cfg.min_box || b.h < cfg.min_box) continue;
    if (!seen.insert(b).second) continue;
    out.push_back(b);
  }
  return out;
}

std::vector<BoundingBox> propose(const DocumentImage& image, const SelectiveSearchConfig& cfg) {
  cfg.validate();
  const DocumentImage segmentation_input =
      cfg.threshold_enabled ? apply_mask(image, adaptive_threshold(image, cfg.block, cfg.offset))
                            : DocumentImage(image.doc_id(), image.width(), image.height(),
                                            image.gray());
  std::vector<BoundingBox> all;
  for (double k : cfg.k_values) {
    const auto labels = segment_graph(segmentation_input, k);
    for (ColorSpace space : cfg.color_spaces) {
      auto grouping = hierarchical_group(labels, describe_segments(labels, image, space), cfg);
      all.insert(all.end(), grouping.boxes.begin(), grouping.boxes.end());
    }
  }
  return filter_regions(all, cfg);
}

}  // namespace spotlight
