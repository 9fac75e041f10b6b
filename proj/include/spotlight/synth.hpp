#pragma once

#include <cstdint>

#include "spotlight/corpus.hpp"

namespace spotlight {

/// Synthetic document pages: framed binary glyphs planted as exact copies
/// among unique distractor glyphs and lines of word-like blobs.
struct SynthConfig {
  int pages = 20;
  int width = 480;
  int height = 640;
  int categories = 5;
  int occurrences = 6;  // per category
  int distractors = 2;  // per page
  double text_density = 0.35;  // fraction of text lines drawn
  double noise = 0.02;  // gaussian sigma, pixel values quantized to 1/255
  std::uint64_t seed = 1;
};

/// Every planted occurrence is also a query; ground truth lists all copies
/// per category. Pixel values are multiples of 1/255 so pages survive a PNG
/// round trip unchanged.
Collection synthesize(const SynthConfig& cfg);

}  // namespace spotlight
