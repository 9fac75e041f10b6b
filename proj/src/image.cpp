#include "spotlight/image.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "spotlight/error.hpp"

namespace spotlight {

namespace {

float to_unit(const cv::Mat& m, int y, int x, int c, int channels) {
  if (m.depth() == CV_16U) {
    return m.ptr<std::uint16_t>(y)[x * channels + c] / 65535.0f;
  }
  return m.ptr<std::uint8_t>(y)[x * channels + c] / 255.0f;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

cv::Mat to_mat(const DocumentImage& image) {
  if (image.has_color()) {
    cv::Mat m(image.height(), image.width(), CV_8UC3);
    for (int y = 0; y < image.height(); ++y) {
      auto* row = m.ptr<std::uint8_t>(y);
      for (int x = 0; x < image.width(); ++x) {
        // OpenCV stores BGR
        row[x * 3 + 0] = to_byte(image.rgb_at(x, y, 2));
        row[x * 3 + 1] = to_byte(image.rgb_at(x, y, 1));
        row[x * 3 + 2] = to_byte(image.rgb_at(x, y, 0));
      }
    }
    return m;
  }
  cv::Mat m(image.height(), image.width(), CV_8UC1);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) row[x] = to_byte(image.at(x, y));
  }
  return m;
}

}  // namespace

DocumentImage::DocumentImage(std::string doc_id, int width, int height,
                             std::vector<float> gray)
    : doc_id_(std::move(doc_id)), width_(width), height_(height), gray_(std::move(gray)) {
  if (width_ < 1 || height_ < 1) {
    throw Error("image '" + doc_id_ + "': empty pixel grid");
  }
  if (gray_.size() != static_cast<std::size_t>(width_) * height_) {
    throw Error("image '" + doc_id_ + "': pixel count does not match dimensions");
  }
  for (float v : gray_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error("image '" + doc_id_ + "': intensity outside [0,1]");
    }
  }
}

DocumentImage DocumentImage::from_rgb(std::string doc_id, int width, int height,
                                      std::vector<float> rgb) {
  if (width < 1 || height < 1 || rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw Error("image '" + doc_id + "': color plane size does not match dimensions");
  }
  std::vector<float> gray(static_cast<std::size_t>(width) * height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = std::clamp(luma(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]), 0.0f, 1.0f);
  }
  return from_planes(std::move(doc_id), width, height, std::move(gray), std::move(rgb));
}

DocumentImage DocumentImage::from_planes(std::string doc_id, int width, int height,
                                         std::vector<float> gray, std::vector<float> rgb) {
  DocumentImage img(std::move(doc_id), width, height, std::move(gray));
  if (!rgb.empty()) {
    if (rgb.size() != img.gray_.size() * 3) {
      throw Error("image '" + img.doc_id_ + "': color plane size does not match dimensions");
    }
    for (float v : rgb) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw Error("image '" + img.doc_id_ + "': color intensity outside [0,1]");
      }
    }
    img.rgb_ = std::move(rgb);
  }
  return img;
}

float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

DocumentImage crop(const DocumentImage& image, const BoundingBox& box) {
  if (!box.fits_in(image.width(), image.height())) {
    throw Error("crop box out of bounds for '" + image.doc_id() + "'");
  }
  const auto n = static_cast<std::size_t>(box.area());
  std::vector<float> gray;
  gray.reserve(n);
  for (int j = 0; j < box.h; ++j) {
    const auto* row = image.gray().data() + static_cast<std::size_t>(box.y + j) * image.width();
    gray.insert(gray.end(), row + box.x, row + box.x + box.w);
  }
  std::vector<float> rgb;
  if (image.has_color()) {
    rgb.reserve(n * 3);
    for (int j = 0; j < box.h; ++j) {
      const auto* row = image.rgb().data() +
                        (static_cast<std::size_t>(box.y + j) * image.width() + box.x) * 3;
      rgb.insert(rgb.end(), row, row + static_cast<std::size_t>(box.w) * 3);
    }
  }
  return DocumentImage::from_planes(image.doc_id(), box.w, box.h, std::move(gray),
                                    std::move(rgb));
}

DocumentImage read_image(const std::filesystem::path& path, std::string doc_id) {
  if (!std::filesystem::exists(path)) {
    throw Error("image file not found: " + path.string() + " (doc '" + doc_id + "')");
  }
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  if (m.empty()) {
    throw Error("cannot decode image: " + path.string() + " (doc '" + doc_id + "')");
  }
  if (m.depth() != CV_8U && m.depth() != CV_16U) {
    throw Error("unsupported bit depth in " + path.string());
  }
  const int channels = m.channels();
  const int w = m.cols;
  const int h = m.rows;
  if (channels == 1) {
    std::vector<float> gray(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) gray[static_cast<std::size_t>(y) * w + x] = to_unit(m, y, x, 0, 1);
    }
    return DocumentImage(std::move(doc_id), w, h, std::move(gray));
  }
  if (channels == 3 || channels == 4) {
    std::vector<float> rgb(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t o = (static_cast<std::size_t>(y) * w + x) * 3;
        rgb[o + 0] = to_unit(m, y, x, 2, channels);
        rgb[o + 1] = to_unit(m, y, x, 1, channels);
        rgb[o + 2] = to_unit(m, y, x, 0, channels);
      }
    }
    return DocumentImage::from_rgb(std::move(doc_id), w, h, std::move(rgb));
  }
  throw Error("unsupported channel count in " + path.string());
}

void write_png(const DocumentImage& image, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_mat(image))) {
    throw Error("cannot write image: " + path.string());
  }
}

std::vector<std::uint8_t> encode_png(const DocumentImage& image) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_mat(image), buf)) {
    throw Error("PNG encoding failed for '" + image.doc_id() + "'");
  }
  return buf;
}

}  // namespace spotlight
