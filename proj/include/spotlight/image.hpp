#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spotlight/box.hpp"

namespace spotlight {

/// Decoded page or region. Intensities are normalized to [0, 1]; `gray` is
/// always present, `rgb` (interleaved, same normalization) only for color
/// sources.
class DocumentImage {
 public:
  DocumentImage() = default;
  DocumentImage(std::string doc_id, int width, int height, std::vector<float> gray);
  /// Builds from interleaved RGB; the gray plane is the luma of the color planes.
  static DocumentImage from_rgb(std::string doc_id, int width, int height,
                                std::vector<float> rgb);
  /// Both planes supplied explicitly; `rgb` may be empty.
  static DocumentImage from_planes(std::string doc_id, int width, int height,
                                   std::vector<float> gray, std::vector<float> rgb);

  const std::string& doc_id() const { return doc_id_; }
  void set_doc_id(std::string id) { doc_id_ = std::move(id); }
  int width() const { return width_; }
  int height() const { return height_; }
  bool has_color() const { return !rgb_.empty(); }
  BoundingBox frame() const { return {0, 0, width_, height_}; }

  float at(int x, int y) const { return gray_[static_cast<std::size_t>(y) * width_ + x]; }
  float rgb_at(int x, int y, int c) const {
    return rgb_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }

  const std::vector<float>& gray() const { return gray_; }
  const std::vector<float>& rgb() const { return rgb_; }

  friend bool operator==(const DocumentImage&, const DocumentImage&) = default;

 private:
  std::string doc_id_;
  int width_ = 0;
  int height_ = 0;
  std::vector<float> gray_;
  std::vector<float> rgb_;
};

float luma(float r, float g, float b);

/// Pixel (i, j) of the result is pixel (box.x + i, box.y + j) of `image`.
DocumentImage crop(const DocumentImage& image, const BoundingBox& box);

/// PNG/JPEG decode; 8- and 16-bit depths, gray, RGB or RGBA (alpha dropped).
DocumentImage read_image(const std::filesystem::path& path, std::string doc_id);
/// Writes 8-bit PNG (color when the image has color planes).
void write_png(const DocumentImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const DocumentImage& image);

}  // namespace spotlight
