#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <queue>
#include <random>

#include "oracles.hpp"
#include "spotlight/error.hpp"
#include "spotlight/evalkit.hpp"
#include "spotlight/proposals.hpp"
#include "spotlight/synth.hpp"

using namespace spotlight;

namespace {

DocumentImage random_image(std::mt19937_64& rng, int w, int h, int levels) {
  std::uniform_int_distribution<int> v(0, levels - 1);
  std::vector<float> g(static_cast<std::size_t>(w) * h);
  for (auto& p : g) p = static_cast<float>(v(rng)) / static_cast<float>(levels - 1);
  return DocumentImage("r", w, h, std::move(g));
}

DocumentImage blocks_image(std::mt19937_64& rng, int w, int h) {
  // a few flat rectangles, so segments have structure
  std::vector<float> g(static_cast<std::size_t>(w) * h, 1.0f);
  std::uniform_int_distribution<int> px(0, w - 4), py(0, h - 4), side(3, 12), tone(0, 4);
  for (int r = 0; r < 6; ++r) {
    const int x0 = px(rng), y0 = py(rng), sw = side(rng), sh = side(rng);
    const float t = tone(rng) / 4.0f;
    for (int y = y0; y < std::min(h, y0 + sh); ++y) {
      for (int x = x0; x < std::min(w, x0 + sw); ++x) g[static_cast<std::size_t>(y) * w + x] = t;
    }
  }
  return DocumentImage("b", w, h, std::move(g));
}

std::vector<int> labels_of(const SegmentLabelMap& m) {
  return std::vector<int>(m.labels.begin(), m.labels.end());
}

double l1(const std::vector<double>& h) {
  double s = 0;
  for (double v : h) s += v;
  return s;
}

SelectiveSearchConfig plain_config() {
  SelectiveSearchConfig c;
  c.threshold_enabled = false;
  c.min_box = 1;
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  SelectiveSearchConfig c;
  CHECK_NOTHROW(c.validate());
  for (int b : {2, 1, 240}) {
    auto bad = c;
    bad.block = b;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
  auto bad = c;
  bad.offset = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.k_values = {};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.k_values = {0.0};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.components = {};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(parse_component("fill") == SimilarityComponent::kFill);
  CHECK(parse_color_space("nrgb") == ColorSpace::kNormalizedRgb);
  CHECK_THROWS_AS(parse_component("shape"), Error);
}

TEST_CASE("effective block") {
  CHECK(effective_block(241, 1000, 800) == 241);
  CHECK(effective_block(241, 100, 300) == 99);
  CHECK(effective_block(241, 300, 101) == 101);
  CHECK(effective_block(3, 2, 2) == 1);
}

TEST_CASE("adaptive threshold of a uniform image is empty") {
  DocumentImage flat("f", 40, 30, std::vector<float>(1200, 0.5f));
  for (int block : {3, 15, 241}) {
    const auto m = adaptive_threshold(flat, block, 0.12);
    CHECK(std::count(m.bits.begin(), m.bits.end(), 1) == 0);
  }
  CHECK_THROWS_AS(adaptive_threshold(flat, 4, 0.1), Error);
  CHECK_THROWS_AS(adaptive_threshold(flat, 1, 0.1), Error);
}

TEST_CASE("adaptive threshold equals the naive window mean") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> side(3, 40);
  std::uniform_int_distribution<int> half(1, 25);
  std::uniform_real_distribution<double> off(0.0, 0.3);
  for (int t = 0; t < 60; ++t) {
    const int w = side(rng), h = side(rng);
    const auto img = t % 2 ? random_image(rng, w, h, 256) : blocks_image(rng, std::max(w, 13), std::max(h, 13));
    const int block = 2 * half(rng) + 1;
    const double offset = t % 5 ? off(rng) : 0.0;
    const auto m = adaptive_threshold(img, block, offset);
    CHECK(m.bits == oracle::adaptive_threshold(img.gray(), img.width(), img.height(), block, offset));
  }
}

TEST_CASE("dark square on a white page") {
  const int w = 300, h = 300;
  std::vector<float> g(static_cast<std::size_t>(w) * h, 1.0f);
  for (int y = 120; y < 160; ++y) {
    for (int x = 100; x < 150; ++x) g[y * w + x] = 0.0f;
  }
  const DocumentImage page("sq", w, h, g);
  const auto m = adaptive_threshold(page, 241, 0.12);
  CHECK(m.bits == oracle::adaptive_threshold(g, w, h, 241, 0.12));
  for (int y = 120; y < 160; ++y) {
    for (int x = 100; x < 150; ++x) CHECK(m.at(x, y));
  }
  std::size_t outside = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x < 100 || x >= 150 || y < 120 || y >= 160) outside += m.at(x, y);
    }
  }
  CHECK(outside == 0);
}

TEST_CASE("offset zero on a two-level step") {
  const int w = 80, h = 60, block = 15, r = 7;
  std::vector<float> g(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) g[y * w + x] = x < 40 ? 0.2f : 0.8f;
  }
  const auto m = adaptive_threshold(DocumentImage("s", w, h, g), block, 0.0);
  CHECK(m.bits == oracle::adaptive_threshold(g, w, h, block, 0.0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // dark pixels whose window reaches the light side, nothing else
      CHECK(m.at(x, y) == (x < 40 && x >= 40 - r));
    }
  }
}

TEST_CASE("apply_mask whitens background") {
  DocumentImage img("m", 2, 2, {0.1f, 0.2f, 0.3f, 0.4f});
  BinaryMask mask{2, 2, {1, 0, 0, 1}};
  CHECK(apply_mask(img, mask).gray() == std::vector<float>{0.1f, 1.0f, 1.0f, 0.4f});
  BinaryMask wrong{3, 2, std::vector<std::uint8_t>(6)};
  CHECK_THROWS_AS(apply_mask(img, wrong), Error);
}

TEST_CASE("segmentation basics") {
  DocumentImage flat("f", 20, 10, std::vector<float>(200, 0.3f));
  CHECK(segment_graph(flat, 50).count == 1);
  std::vector<float> two(200);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) two[y * 20 + x] = x < 7 ? 0.0f : 1.0f;
  }
  const auto m = segment_graph(DocumentImage("t", 20, 10, two), 10);
  CHECK(m.count == 2);
  CHECK(m.at(0, 0) == 0);
  CHECK(m.at(19, 9) == 1);
  CHECK_THROWS_AS(segment_graph(flat, 0), Error);
  CHECK(edge_weight(0.0f, 1.0f) == 255.0);
}

TEST_CASE("segmentation equals the reference union-find") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 120; ++t) {
    const int levels = t % 3 == 0 ? 4 : (t % 3 == 1 ? 16 : 256);
    const auto img = t % 4 == 3 ? blocks_image(rng, 32, 32) : random_image(rng, 32, 32, levels);
    for (double k : {1.0, 50.0, 100.0, 500.0}) {
      const auto got = segment_graph(img, k);
      const auto want = oracle::segment(img.gray(), 32, 32, k);
      CHECK(oracle::same_partition(labels_of(got), want));
      CHECK(got.count == static_cast<int>(std::set<int>(want.begin(), want.end()).size()));
    }
  }
}

TEST_CASE("segment labels are canonical and 4-connected") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto img = random_image(rng, 24, 18, 6);
    const auto m = segment_graph(img, 60);
    int next = 0;
    for (int l : m.labels) {
      CHECK(l <= next);
      if (l == next) ++next;
    }
    CHECK(next == m.count);
    // BFS from the first pixel of each label covers the whole label
    std::vector<int> sizes(m.count, 0);
    for (int l : m.labels) ++sizes[l];
    std::vector<bool> seen(m.labels.size(), false);
    for (std::size_t s = 0; s < m.labels.size(); ++s) {
      if (seen[s]) continue;
      const int l = m.labels[s];
      int reached = 0;
      std::queue<int> q;
      q.push(static_cast<int>(s));
      seen[s] = true;
      while (!q.empty()) {
        const int p = q.front();
        q.pop();
        ++reached;
        const int x = p % 24, y = p / 24;
        for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= 24 || ny >= 18) continue;
          const int n = ny * 24 + nx;
          if (!seen[n] && m.labels[n] == l) {
            seen[n] = true;
            q.push(n);
          }
        }
      }
      CHECK(reached == sizes[l]);
    }
  }
}

TEST_CASE("segment descriptions") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto gray = blocks_image(rng, 40, 30);
    const auto m = segment_graph(gray, 80);
    std::vector<float> rgb;
    for (float v : gray.gray()) {
      rgb.insert(rgb.end(), {v, v * 0.5f, 1.0f - v});
    }
    const auto color = DocumentImage::from_rgb("c", 40, 30, rgb);
    for (const auto* img : {&gray, &color})
    for (ColorSpace space : {ColorSpace::kGray, ColorSpace::kRgb, ColorSpace::kNormalizedRgb}) {
      const auto segs = describe_segments(m, *img, space);
      REQUIRE(static_cast<int>(segs.size()) == m.count);
      const std::size_t channels = space == ColorSpace::kGray || !img->has_color() ? 1 : 3;
      std::int64_t total = 0;
      for (const auto& s : segs) {
        total += s.size;
        CHECK(s.size >= 1);
        CHECK(s.color_hist.size() == channels * kColorBins);
        CHECK(s.texture_hist.size() == channels * kOrientations * kTextureBins);
        CHECK(std::fabs(l1(s.color_hist) - 1.0) <= 1e-9);
        CHECK(std::fabs(l1(s.texture_hist) - 1.0) <= 1e-9);
      }
      CHECK(total == 40 * 30);
      // tight boxes
      std::vector<BoundingBox> tight(segs.size(), {1 << 20, 1 << 20, 0, 0});
      std::vector<std::array<int, 4>> ext(segs.size(), {1 << 20, 1 << 20, -1, -1});
      for (int y = 0; y < 30; ++y) {
        for (int x = 0; x < 40; ++x) {
          auto& e = ext[m.at(x, y)];
          e = {std::min(e[0], x), std::min(e[1], y), std::max(e[2], x), std::max(e[3], y)};
        }
      }
      for (std::size_t i = 0; i < segs.size(); ++i) {
        CHECK(segs[i].box == BoundingBox{ext[i][0], ext[i][1], ext[i][2] - ext[i][0] + 1,
                                         ext[i][3] - ext[i][1] + 1});
      }
    }
  }
  DocumentImage other("o", 5, 5, std::vector<float>(25, 0.5f));
  CHECK_THROWS_AS(describe_segments(segment_graph(DocumentImage("x", 4, 4, std::vector<float>(16)), 5), other,
                                    ColorSpace::kGray),
                  Error);
}

TEST_CASE("similarity components follow their formulas") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto img = blocks_image(rng, 40, 30);
    const auto m = segment_graph(img, 80);
    const auto segs = describe_segments(m, img, ColorSpace::kGray);
    for (std::size_t a = 0; a < segs.size(); ++a) {
      for (std::size_t b = 0; b < segs.size(); ++b) {
        const auto s = similarity_components(segs[a], segs[b], 1200);
        double color = 0, texture = 0;
        for (std::size_t i = 0; i < segs[a].color_hist.size(); ++i) {
          color += std::min(segs[a].color_hist[i], segs[b].color_hist[i]);
        }
        for (std::size_t i = 0; i < segs[a].texture_hist.size(); ++i) {
          texture += std::min(segs[a].texture_hist[i], segs[b].texture_hist[i]);
        }
        const double joint = static_cast<double>(segs[a].size + segs[b].size);
        const double hull = static_cast<double>(enclose(segs[a].box, segs[b].box).area());
        CHECK(s.color == doctest::Approx(std::clamp(color, 0.0, 1.0)).epsilon(1e-12));
        CHECK(s.texture == doctest::Approx(std::clamp(texture, 0.0, 1.0)).epsilon(1e-12));
        CHECK(s.size == doctest::Approx(std::clamp(1 - joint / 1200, 0.0, 1.0)).epsilon(1e-12));
        CHECK(s.fill == doctest::Approx(std::clamp(1 - (hull - joint) / 1200, 0.0, 1.0)).epsilon(1e-12));
        for (double v : {s.color, s.texture, s.size, s.fill}) {
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
        }
        const double sum = pairwise_similarity(segs[a], segs[b], SelectiveSearchConfig{}, 1200);
        CHECK(sum == doctest::Approx(s.color + s.texture + s.size + s.fill));
        if (a == b) {
          CHECK(s.color == doctest::Approx(1.0));
          CHECK(s.texture == doctest::Approx(1.0));
        }
      }
    }
  }
  Segment half{0, 600, {0, 0, 20, 30}, {1.0}, {1.0}};
  Segment rest{1, 600, {20, 0, 20, 30}, {1.0}, {1.0}};
  const auto s = similarity_components(half, rest, 1200);
  CHECK(s.size == 0.0);
  CHECK(s.fill == 1.0);
  Segment odd{2, 1, {0, 0, 1, 1}, {0.5, 0.5}, {1.0}};
  CHECK_THROWS_AS(similarity_components(half, odd, 1200), Error);

  SelectiveSearchConfig only_size;
  only_size.components = {SimilarityComponent::kSize};
  CHECK(pairwise_similarity(half, rest, only_size, 2400) == doctest::Approx(0.5));
}

TEST_CASE("grouping performs n-1 merges with union boxes") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 15; ++t) {
    const auto img = t % 2 ? blocks_image(rng, 48, 36) : random_image(rng, 30, 20, 5);
    const auto m = segment_graph(img, 40);
    auto cfg = plain_config();
    const auto g = hierarchical_group(m, describe_segments(m, img, ColorSpace::kGray), cfg);
    CHECK(static_cast<int>(g.merges.size()) == m.count - 1);
    CHECK(static_cast<int>(g.regions.size()) == 2 * m.count - 1);
    std::vector<std::int64_t> size;
    for (const auto& r : g.regions) size.push_back(r.size);
    std::set<int> consumed;
    for (const auto& e : g.merges) {
      CHECK(consumed.insert(e.left).second);
      CHECK(consumed.insert(e.right).second);
      CHECK(e.left < e.merged);
      CHECK(e.right < e.merged);
      CHECK(e.box == enclose(g.regions[e.left].box, g.regions[e.right].box));
      CHECK(g.regions[e.merged].box == e.box);
      CHECK(g.regions[e.merged].size == size[e.left] + size[e.right]);
      CHECK(std::fabs(l1(g.regions[e.merged].color_hist) - 1.0) <= 1e-9);
      CHECK(std::fabs(l1(g.regions[e.merged].texture_hist) - 1.0) <= 1e-9);
    }
    CHECK(g.regions.back().box == img.frame());
    CHECK(g.regions.back().size == img.width() * img.height());
    for (const auto& b : g.boxes) CHECK(b.fits_in(img.width(), img.height()));
  }
}

TEST_CASE("three segments merge twice") {
  std::vector<float> g(30 * 10);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 30; ++x) g[y * 30 + x] = x < 10 ? 0.0f : (x < 20 ? 0.5f : 1.0f);
  }
  const DocumentImage img("three", 30, 10, g);
  const auto m = segment_graph(img, 5);
  REQUIRE(m.count == 3);
  const auto grouped = hierarchical_group(m, describe_segments(m, img, ColorSpace::kGray), plain_config());
  CHECK(grouped.merges.size() == 2);
  CHECK(grouped.boxes.size() <= 5);
  // the two outer stripes are not adjacent, so the middle joins first
  CHECK((grouped.merges[0].left == 1 || grouped.merges[0].right == 1));
  CHECK_THROWS_AS(hierarchical_group(m, {}, plain_config()), Error);
}

TEST_CASE("filter regions") {
  SelectiveSearchConfig c;
  c.min_box = 3;
  c.max_candidates_per_doc = 3;
  const std::vector<BoundingBox> in{{0, 0, 5, 5}, {0, 0, 2, 9}, {0, 0, 5, 5}, {1, 1, 4, 4},
                                    {2, 2, 3, 3}, {3, 3, 6, 6}};
  const auto out = filter_regions(in, c);
  CHECK(out == std::vector<BoundingBox>{{0, 0, 5, 5}, {1, 1, 4, 4}, {2, 2, 3, 3}});
}

TEST_CASE("blank page yields at most one proposal") {
  DocumentImage blank("blank", 64, 48, std::vector<float>(64 * 48, 1.0f));
  const auto boxes = propose(blank, SelectiveSearchConfig{});
  CHECK(boxes.size() <= 1);
  if (!boxes.empty()) CHECK(boxes[0] == blank.frame());
}

TEST_CASE("proposals over several k values are the union of single runs") {
  std::mt19937_64 rng(7);
  const auto img = blocks_image(rng, 60, 50);
  auto cfg = plain_config();
  cfg.k_values = {30, 120};
  const auto both = propose(img, cfg);
  std::set<BoundingBox> expect;
  for (double k : cfg.k_values) {
    auto one = cfg;
    one.k_values = {k};
    for (const auto& b : propose(img, one)) expect.insert(b);
  }
  CHECK(std::set<BoundingBox>(both.begin(), both.end()) == expect);
  CHECK(both.size() == expect.size());
  CHECK(propose(img, cfg) == both);
}

TEST_CASE("proposals find planted glyphs") {
  SynthConfig sc;
  sc.pages = 2;
  sc.categories = 2;
  sc.occurrences = 2;
  sc.seed = 9;
  const auto col = synthesize(sc);
  std::size_t found = 0, planted = 0;
  for (const auto& [cat, occs] : col.ground_truth().categories) {
    for (const auto& o : occs) {
      ++planted;
      const auto& page = col.at(o.doc_id);
      const auto boxes = propose(page, SelectiveSearchConfig{});
      double best = 0;
      for (const auto& b : boxes) {
        CHECK(b.fits_in(page.width(), page.height()));
        best = std::max(best, iou(b, o.box));
      }
      found += best >= 0.9;
    }
  }
  CHECK(planted == 4);
  CHECK(found == planted);
}
