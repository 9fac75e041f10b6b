#include "spotlight/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "spotlight/error.hpp"

namespace spotlight {

namespace {

constexpr float kBackground = 0.92f;
constexpr float kInk = 0.08f;
constexpr int kFrame = 3;
constexpr int kCell = 6;
constexpr int kMargin = 14;

struct Glyph {
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> ink;  // w * h
};

Glyph make_glyph(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cells(5, 9);
  std::bernoulli_distribution on(0.45);
  Glyph g;
  const int cx = cells(rng);
  const int cy = cells(rng);
  g.w = cx * kCell + 2 * (kFrame + 2);
  g.h = cy * kCell + 2 * (kFrame + 2);
  g.ink.assign(static_cast<std::size_t>(g.w) * g.h, 0);
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      if (x < kFrame || y < kFrame || x >= g.w - kFrame || y >= g.h - kFrame) {
        g.ink[static_cast<std::size_t>(y) * g.w + x] = 1;
      }
    }
  }
  const int inner = kFrame + 2;
  for (int j = 0; j < cy; ++j) {
    for (int i = 0; i < cx; ++i) {
      if (!on(rng)) continue;
      for (int y = 0; y < kCell; ++y) {
        for (int x = 0; x < kCell; ++x) {
          g.ink[static_cast<std::size_t>(inner + j * kCell + y) * g.w + inner + i * kCell + x] = 1;
        }
      }
    }
  }
  return g;
}

bool overlaps(const BoundingBox& a, const std::vector<BoundingBox>& placed, int margin) {
  const BoundingBox grown{a.x - margin, a.y - margin, a.w + 2 * margin, a.h + 2 * margin};
  return std::any_of(placed.begin(), placed.end(),
                     [&](const BoundingBox& b) { return intersection_area(grown, b) > 0; });
}

std::string page_id(int p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "page_%03d", p);
  return buf;
}

}  // namespace

Collection synthesize(const SynthConfig& cfg) {
  if (cfg.pages < 1 || cfg.width < 64 || cfg.height < 64) throw Error("synth: page too small");
  if (cfg.categories < 0 || cfg.occurrences < 0 || cfg.distractors < 0) {
    throw Error("synth: negative counts");
  }
  std::mt19937_64 rng(cfg.seed);

  std::vector<Glyph> glyphs;
  for (int c = 0; c < cfg.categories; ++c) glyphs.push_back(make_glyph(rng));

  // each category goes to the least loaded pages, distinct while pages last
  std::vector<std::vector<int>> planted(cfg.pages);
  for (int c = 0; c < cfg.categories; ++c) {
    std::vector<int> order(cfg.pages);
    for (int p = 0; p < cfg.pages; ++p) order[p] = p;
    std::shuffle(order.begin(), order.end(), rng);
    for (int o = 0; o < cfg.occurrences; ++o) {
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return planted[a].size() < planted[b].size();
      });
      auto it = std::find_if(order.begin(), order.end(), [&](int p) {
        return std::find(planted[p].begin(), planted[p].end(), c) == planted[p].end();
      });
      planted[it == order.end() ? order.front() : *it].push_back(c);
    }
  }

  std::vector<DocumentImage> docs;
  std::vector<Query> queries;
  GroundTruth gt;
  std::vector<int> seen(cfg.categories, 0);
  std::normal_distribution<double> noise(0.0, cfg.noise);

  for (int p = 0; p < cfg.pages; ++p) {
    const std::string id = page_id(p);
    gt.documents.insert(id);
    std::vector<std::uint8_t> ink(static_cast<std::size_t>(cfg.width) * cfg.height, 0);
    std::vector<BoundingBox> placed;

    auto place = [&](const Glyph& g) -> BoundingBox {
      std::uniform_int_distribution<int> px(kMargin, cfg.width - g.w - kMargin);
      std::uniform_int_distribution<int> py(kMargin, cfg.height - g.h - kMargin);
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const BoundingBox b{px(rng), py(rng), g.w, g.h};
        if (overlaps(b, placed, kMargin)) continue;
        placed.push_back(b);
        for (int y = 0; y < g.h; ++y) {
          for (int x = 0; x < g.w; ++x) {
            ink[static_cast<std::size_t>(b.y + y) * cfg.width + b.x + x] =
                g.ink[static_cast<std::size_t>(y) * g.w + x];
          }
        }
        return b;
      }
      throw Error("synth: page " + id + " too crowded to place glyph");
    };

    for (int c : planted[p]) {
      const BoundingBox b = place(glyphs[c]);
      const std::string cat = "cat_" + std::to_string(c);
      char qid[48];
      std::snprintf(qid, sizeof qid, "q_%s_%d", cat.c_str(), seen[c]++);
      queries.push_back({qid, id, b, cat});
      gt.categories[cat].push_back({id, b, false});
    }
    for (int d = 0; d < cfg.distractors; ++d) place(make_glyph(rng));

    // word blobs on text lines, kept clear of glyphs
    std::bernoulli_distribution draw_line(cfg.text_density);
    std::uniform_int_distribution<int> word_w(8, 40);
    std::uniform_int_distribution<int> word_h(5, 7);
    std::uniform_int_distribution<int> gap(5, 9);
    for (int y = kMargin; y + 7 < cfg.height - kMargin; y += 14) {
      if (!draw_line(rng)) continue;
      int x = kMargin;
      while (true) {
        const BoundingBox w{x, y, word_w(rng), word_h(rng)};
        if (w.right() > cfg.width - kMargin) break;
        if (!overlaps(w, placed, kMargin / 2)) {
          for (int yy = w.y; yy < w.bottom(); ++yy) {
            for (int xx = w.x; xx < w.right(); ++xx) {
              ink[static_cast<std::size_t>(yy) * cfg.width + xx] = 1;
            }
          }
        }
        x = w.right() + gap(rng);
      }
    }

    std::vector<float> gray(ink.size());
    for (std::size_t i = 0; i < ink.size(); ++i) {
      const double v = (ink[i] ? kInk : kBackground) + (cfg.noise > 0 ? noise(rng) : 0.0);
      gray[i] = static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
    }
    docs.emplace_back(id, cfg.width, cfg.height, std::move(gray));
  }
  return Collection(std::move(docs), std::move(queries), std::move(gt));
}

}  // namespace spotlight
