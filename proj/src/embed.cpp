#include "spotlight/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "spotlight/binio.hpp"
#include "spotlight/error.hpp"

namespace spotlight {

namespace {

constexpr std::string_view kVectorMagic = "SPOTVEC1";
constexpr std::string_view kEmbedderMagic = "SPOTEMB1";
constexpr double kCellClip = 0.2;
constexpr double kVoteRadius = 2.0;  // cells
constexpr int kSmoothPasses = 2;

}  // namespace

double FeatureVector::norm() const {
  double s = 0;
  for (float v : values) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

FeatureVector normalized(std::span<const double> v) {
  double s = 0;
  for (double x : v) {
    if (!std::isfinite(x)) throw Error("vector contains NaN or Inf");
    s += x * x;
  }
  if (s == 0) throw Error("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(s);
  FeatureVector out;
  out.values.reserve(v.size());
  for (double x : v) out.values.push_back(static_cast<float>(x * inv));
  return out;
}

std::string to_string(EmbedderKind k) { return k == EmbedderKind::kBaseline ? "baseline" : "external"; }

std::string to_string(Reduction r) {
  switch (r) {
    case Reduction::kPca: return "pca";
    case Reduction::kRandomProjection: return "random";
    case Reduction::kNone: return "none";
  }
  return "?";
}

EmbedderKind parse_embedder_kind(const std::string& s) {
  if (s == "baseline") return EmbedderKind::kBaseline;
  if (s == "external") return EmbedderKind::kExternal;
  throw Error("unknown embedder kind '" + s + "'");
}

Reduction parse_reduction(const std::string& s) {
  if (s == "pca") return Reduction::kPca;
  if (s == "random" || s == "random-projection") return Reduction::kRandomProjection;
  if (s == "none") return Reduction::kNone;
  throw Error("unknown reduction '" + s + "'");
}

void EmbedderConfig::validate() const {
  if (target_dim < 1) throw Error("target_dim must be positive");
  if (resize < 2) throw Error("resize must be >= 2");
  if (resize < cells()) throw Error("resize must be at least the cell grid size");
  if (reduction == Reduction::kNone && raw_dim() > static_cast<std::size_t>(target_dim)) {
    throw Error("reduction 'none' needs target_dim >= raw descriptor dim " +
                std::to_string(raw_dim()));
  }
}

int EmbedderConfig::cells() const {
  return static_cast<std::size_t>(target_dim) > 8u * 8u * kOrientationBins ? 16 : 8;
}

std::size_t EmbedderConfig::raw_dim() const {
  return static_cast<std::size_t>(cells()) * cells() * kOrientationBins;
}

namespace {

struct Tap {
  int index;
  double weight;
};

// Triangle filter widened by the downscale factor.
std::vector<std::vector<Tap>> resample_taps(int in, int out) {
  const double scale = static_cast<double>(in) / out;
  const double support = std::max(1.0, scale);
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
  for (int i = 0; i < out; ++i) {
    const double c = (i + 0.5) * scale - 0.5;
    double total = 0;
    for (int k = static_cast<int>(std::floor(c - support));
         k <= static_cast<int>(std::ceil(c + support)); ++k) {
      const double w = 1.0 - std::fabs(k - c) / support;
      if (w <= 0) continue;
      taps[i].push_back({std::clamp(k, 0, in - 1), w});
      total += w;
    }
    for (auto& t : taps[i]) t.weight /= total;
  }
  return taps;
}

}  // namespace

DocumentImage resize_bilinear(const DocumentImage& image, int side) {
  const int h = image.height();
  const auto tx = resample_taps(image.width(), side);
  const auto ty = resample_taps(h, side);
  std::vector<double> rows(static_cast<std::size_t>(side) * h);
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < side; ++i) {
      double s = 0;
      for (const auto& t : tx[i]) s += t.weight * image.at(t.index, y);
      rows[static_cast<std::size_t>(y) * side + i] = s;
    }
  }
  std::vector<float> out(static_cast<std::size_t>(side) * side);
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) {
      double s = 0;
      for (const auto& t : ty[j]) s += t.weight * rows[static_cast<std::size_t>(t.index) * side + i];
      out[static_cast<std::size_t>(j) * side + i] = static_cast<float>(std::clamp(s, 0.0, 1.0));
    }
  }
  return DocumentImage(image.doc_id(), side, side, std::move(out));
}

DocumentImage binomial_smooth(const DocumentImage& image, int passes) {
  const int w = image.width();
  const int h = image.height();
  auto g = image.gray();
  std::vector<float> t(g.size());
  auto at = [w](const std::vector<float>& v, int x, int y) {
    return v[static_cast<std::size_t>(y) * w + x];
  };
  for (int p = 0; p < passes; ++p) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        t[static_cast<std::size_t>(y) * w + x] =
            0.25f * at(g, std::max(x - 1, 0), y) + 0.5f * at(g, x, y) +
            0.25f * at(g, std::min(x + 1, w - 1), y);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        g[static_cast<std::size_t>(y) * w + x] =
            0.25f * at(t, x, std::max(y - 1, 0)) + 0.5f * at(t, x, y) +
            0.25f * at(t, x, std::min(y + 1, h - 1));
      }
    }
  }
  return DocumentImage(image.doc_id(), w, h, std::move(g));
}

std::vector<double> gradient_histogram(const DocumentImage& square, int cells) {
  const int w = square.width();
  const int h = square.height();
  const double cw = static_cast<double>(w) / cells;
  const double ch = static_cast<double>(h) / cells;
  const double bin_width = std::numbers::pi / kOrientationBins;
  std::vector<double> hist(static_cast<std::size_t>(cells) * cells * kOrientationBins, 0.0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = square.at(std::min(x + 1, w - 1), y) - square.at(std::max(x - 1, 0), y);
      const double gy = square.at(x, std::min(y + 1, h - 1)) - square.at(x, std::max(y - 1, 0));
      const double mag = std::hypot(gx, gy);
      if (mag == 0) continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += std::numbers::pi;
      if (angle >= std::numbers::pi) angle -= std::numbers::pi;
      const double pos = angle / bin_width - 0.5;
      const int b0 = static_cast<int>(std::floor(pos));
      const double tb = pos - b0;
      const int bins[2] = {(b0 + kOrientationBins) % kOrientationBins,
                           (b0 + 1) % kOrientationBins};
      const double bw[2] = {1 - tb, tb};

      const double px = (x + 0.5) / cw - 0.5;
      const double py = (y + 0.5) / ch - 0.5;
      for (int cy = std::max(0, static_cast<int>(std::ceil(py - kVoteRadius)));
           cy <= std::min(cells - 1, static_cast<int>(std::floor(py + kVoteRadius))); ++cy) {
        const double wy = 1.0 - std::fabs(cy - py) / kVoteRadius;
        if (wy <= 0) continue;
        for (int cx = std::max(0, static_cast<int>(std::ceil(px - kVoteRadius)));
             cx <= std::min(cells - 1, static_cast<int>(std::floor(px + kVoteRadius))); ++cx) {
          const double wx = 1.0 - std::fabs(cx - px) / kVoteRadius;
          if (wx <= 0) continue;
          double* cell = &hist[(static_cast<std::size_t>(cy) * cells + cx) * kOrientationBins];
          cell[bins[0]] += wx * wy * mag * bw[0];
          cell[bins[1]] += wx * wy * mag * bw[1];
        }
      }
    }
  }

  std::vector<double> energy(static_cast<std::size_t>(cells) * cells, 0.0);
  for (std::size_t c = 0; c < energy.size(); ++c) {
    for (int b = 0; b < kOrientationBins; ++b) {
      const double v = hist[c * kOrientationBins + b];
      energy[c] += v * v;
    }
  }
  std::vector<double> out(hist.size(), 0.0);
  for (int cy = 0; cy < cells; ++cy) {
    for (int cx = 0; cx < cells; ++cx) {
      double e = 0;
      for (int ny = std::max(cy - 1, 0); ny <= std::min(cy + 1, cells - 1); ++ny) {
        for (int nx = std::max(cx - 1, 0); nx <= std::min(cx + 1, cells - 1); ++nx) {
          e += energy[static_cast<std::size_t>(ny) * cells + nx];
        }
      }
      if (e <= 0) continue;
      const double inv = 1.0 / std::sqrt(e);
      const std::size_t base = (static_cast<std::size_t>(cy) * cells + cx) * kOrientationBins;
      for (int b = 0; b < kOrientationBins; ++b) {
        out[base + b] = std::min(hist[base + b] * inv, kCellClip);
      }
    }
  }
  return out;
}

std::vector<double> ReductionMap::apply(std::span<const double> x) const {
  if (x.size() != input_dim) {
    throw Error("reduction expects input dim " + std::to_string(input_dim) + ", got " +
                std::to_string(x.size()));
  }
  std::vector<double> y(output_dim, 0.0);
  if (matrix.empty()) {
    std::copy_n(x.begin(), std::min(input_dim, output_dim), y.begin());
    return y;
  }
  for (std::size_t r = 0; r < output_dim; ++r) {
    const double* row = matrix.data() + r * input_dim;
    double s = 0;
    for (std::size_t c = 0; c < input_dim; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

ReductionMap fit_pca(const std::vector<std::vector<double>>& sample, std::size_t target_dim) {
  if (sample.size() < target_dim || sample.empty()) {
    throw Error("PCA needs at least " + std::to_string(target_dim) + " samples, got " +
                std::to_string(sample.size()));
  }
  const std::size_t d = sample.front().size();
  if (target_dim > d) throw Error("PCA target dim exceeds input dim");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(sample.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample[i].size() != d) throw Error("PCA sample has mixed dimensions");
    for (std::size_t j = 0; j < d; ++j) x(i, j) = sample[i][j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov =
      (x.transpose() * x) / std::max<double>(1.0, static_cast<double>(sample.size()) - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("PCA eigen decomposition failed");

  ReductionMap map{Reduction::kPca, d, target_dim, std::vector<double>(target_dim * d)};
  for (std::size_t r = 0; r < target_dim; ++r) {
    // eigenvalues ascend; take from the top
    Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - r));
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
      if (std::fabs(v(i)) > std::fabs(v(arg))) arg = i;
    }
    if (v(arg) < 0) v = -v;
    for (std::size_t c = 0; c < d; ++c) map.matrix[r * d + c] = v(static_cast<Eigen::Index>(c));
  }
  return map;
}

ReductionMap random_projection(std::size_t input_dim, std::size_t target_dim, std::uint64_t seed) {
  if (target_dim > input_dim) throw Error("random projection cannot increase dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ReductionMap map{Reduction::kRandomProjection, input_dim, target_dim,
                   std::vector<double>(target_dim * input_dim)};
  for (auto& v : map.matrix) v = normal(rng);
  // modified Gram-Schmidt over rows
  for (std::size_t r = 0; r < target_dim; ++r) {
    double* row = map.matrix.data() + r * input_dim;
    for (std::size_t p = 0; p < r; ++p) {
      const double* prev = map.matrix.data() + p * input_dim;
      const double dot = std::inner_product(row, row + input_dim, prev, 0.0);
      for (std::size_t c = 0; c < input_dim; ++c) row[c] -= dot * prev[c];
    }
    const double n = std::sqrt(std::inner_product(row, row + input_dim, row, 0.0));
    if (n < 1e-12) throw Error("random projection rows are degenerate");
    for (std::size_t c = 0; c < input_dim; ++c) row[c] /= n;
  }
  return map;
}

ReductionMap zero_pad(std::size_t input_dim, std::size_t target_dim) {
  if (target_dim < input_dim) throw Error("zero padding cannot reduce dimension");
  return ReductionMap{Reduction::kNone, input_dim, target_dim, {}};
}

ReductionMap fit_reduction(const std::vector<std::vector<double>>& sample, std::size_t input_dim,
                           std::size_t target_dim, Reduction kind, std::uint64_t seed) {
  if (target_dim >= input_dim) return zero_pad(input_dim, target_dim);
  switch (kind) {
    case Reduction::kPca: return fit_pca(sample, target_dim);
    case Reduction::kRandomProjection: return random_projection(input_dim, target_dim, seed);
    case Reduction::kNone: break;
  }
  throw Error("reduction 'none' cannot reduce " + std::to_string(input_dim) + " to " +
              std::to_string(target_dim));
}

Embedder::Embedder(EmbedderConfig cfg, ReductionMap map) : cfg_(cfg), map_(std::move(map)) {
  cfg_.validate();
  if (map_.input_dim != cfg_.raw_dim() || map_.output_dim != dim()) {
    throw Error("reduction map shape does not match embedder config");
  }
}

Embedder Embedder::fit(const EmbedderConfig& cfg,
                       const std::vector<std::vector<double>>& sample) {
  cfg.validate();
  const auto* use = &sample;
  std::vector<std::vector<double>> subsample;
  if (sample.size() > cfg.pca_sample) {
    std::mt19937_64 rng(cfg.seed);
    std::sample(sample.begin(), sample.end(), std::back_inserter(subsample), cfg.pca_sample, rng);
    use = &subsample;
  }
  return Embedder(cfg, fit_reduction(*use, cfg.raw_dim(), static_cast<std::size_t>(cfg.target_dim), cfg.reduction, cfg.seed));
}

std::vector<double> Embedder::raw_descriptor(const DocumentImage& image,
                                             const BoundingBox& box) const {
  return describe(crop(image, box));
}

std::vector<double> Embedder::describe(const DocumentImage& region) const {
  return gradient_histogram(binomial_smooth(resize_bilinear(region, cfg_.resize), kSmoothPasses),
                            cfg_.cells());
}

Embedding Embedder::embed(const DocumentImage& region) const {
  if (cfg_.kind == EmbedderKind::kExternal) {
    throw Error("external embedder: vectors must be imported, not computed");
  }
  const auto raw = describe(region);
  const auto reduced = map_.apply(raw);
  double s = 0;
  for (double v : reduced) s += v * v;
  if (s == 0) {
    Embedding e;
    e.vector.values.assign(dim(), 0.0f);
    e.vector.values[0] = 1.0f;
    e.degenerate = true;
    return e;
  }
  return {normalized(reduced), false};
}

Embedding Embedder::embed_region(const DocumentImage& image, const BoundingBox& box) const {
  return embed(crop(image, box));
}

void Embedder::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write embedder file: " + path.string());
  binio::write_magic(out, kEmbedderMagic);
  binio::write_u32(out, static_cast<std::uint32_t>(cfg_.kind));
  binio::write_u32(out, static_cast<std::uint32_t>(cfg_.reduction));
  binio::write_u32(out, static_cast<std::uint32_t>(cfg_.target_dim));
  binio::write_u32(out, static_cast<std::uint32_t>(cfg_.resize));
  binio::write_u64(out, cfg_.seed);
  binio::write_u64(out, cfg_.pca_sample);
  binio::write_u32(out, static_cast<std::uint32_t>(map_.kind));
  binio::write_u64(out, map_.input_dim);
  binio::write_u64(out, map_.output_dim);
  binio::write_u64(out, map_.matrix.size());
  for (double v : map_.matrix) binio::write_f64(out, v);
  if (!out) throw Error("write failed: " + path.string());
}

Embedder Embedder::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("embedder file not found: " + path.string());
  binio::expect_magic(in, kEmbedderMagic, path.string());
  EmbedderConfig cfg;
  cfg.kind = static_cast<EmbedderKind>(binio::read_u32(in));
  cfg.reduction = static_cast<Reduction>(binio::read_u32(in));
  cfg.target_dim = static_cast<int>(binio::read_u32(in));
  cfg.resize = static_cast<int>(binio::read_u32(in));
  cfg.seed = binio::read_u64(in);
  cfg.pca_sample = binio::read_u64(in);
  ReductionMap map;
  map.kind = static_cast<Reduction>(binio::read_u32(in));
  map.input_dim = binio::read_u64(in);
  map.output_dim = binio::read_u64(in);
  const auto n = binio::read_u64(in);
  if (n != 0 && n != map.input_dim * map.output_dim) throw Error("corrupt embedder matrix");
  map.matrix.resize(n);
  for (auto& v : map.matrix) v = binio::read_f64(in);
  return Embedder(cfg, std::move(map));
}

void export_vectors(const std::filesystem::path& path, std::size_t dim,
                    const std::vector<VectorRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vector file: " + path.string());
  binio::write_magic(out, kVectorMagic);
  binio::write_u32(out, static_cast<std::uint32_t>(dim));
  binio::write_u64(out, records.size());
  for (const auto& r : records) {
    if (r.vector.dim() != dim) {
      throw Error("vector '" + r.id + "' has dim " + std::to_string(r.vector.dim()) +
                  ", expected " + std::to_string(dim));
    }
    binio::write_string(out, r.id);
    for (float v : r.vector.values) binio::write_f32(out, v);
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<VectorRecord> read_vector_file(const std::filesystem::path& path, std::size_t* dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("vector file not found: " + path.string());
  binio::expect_magic(in, kVectorMagic, path.string());
  const auto d = binio::read_u32(in);
  const auto count = binio::read_u64(in);
  if (dim) *dim = d;
  std::vector<VectorRecord> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    VectorRecord r;
    r.id = binio::read_string(in);
    r.vector.values.resize(d);
    for (auto& v : r.vector.values) v = binio::read_f32(in);
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, FeatureVector> import_vectors(const std::filesystem::path& path,
                                                    std::size_t expected_dim,
                                                    const std::set<std::string>* known_ids) {
  std::size_t dim = 0;
  auto records = read_vector_file(path, &dim);
  std::map<std::string, FeatureVector> out;
  for (auto& r : records) {
    if (dim != expected_dim) {
      throw Error("vector '" + r.id + "' has dim " + std::to_string(dim) + ", expected " +
                  std::to_string(expected_dim));
    }
    for (float v : r.vector.values) {
      if (!std::isfinite(v)) throw Error("vector '" + r.id + "' contains NaN or Inf");
    }
    if (known_ids && !known_ids->count(r.id)) {
      throw Error("vector '" + r.id + "' does not match any candidate id");
    }
    const double n = r.vector.norm();
    if (n == 0) throw Error("vector '" + r.id + "' is zero");
    if (std::fabs(n - 1.0) > 1e-6) {
      std::vector<double> tmp(r.vector.values.begin(), r.vector.values.end());
      r.vector = normalized(tmp);
    }
    if (!out.emplace(r.id, std::move(r.vector)).second) {
      throw Error("duplicate vector id '" + r.id + "'");
    }
  }
  return out;
}

}  // namespace spotlight
