#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "transface/fourier.hpp"

namespace transface {

/// Channel-major (C×H×W) image with pixels normalized to [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), pixels(c * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  bool same_dims(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

struct ImageSample {
  Image image;
  int label = 0;
  std::uint64_t seed = 0;
};

/// Exact tiling of an image into non-overlapping p×p patches, numbered in
/// row-major order over the grid.
class PatchGrid {
 public:
  PatchGrid(std::size_t channels, std::size_t height, std::size_t width, std::size_t patch_side);
  static PatchGrid for_image(const Image& img, std::size_t patch_side);

  std::size_t patch_side() const { return patch_; }
  std::size_t grid_rows() const { return rows_; }
  std::size_t grid_cols() const { return cols_; }
  std::size_t count() const { return rows_ * cols_; }
  std::size_t channels() const { return channels_; }
  /// C·p² values per flattened patch.
  std::size_t patch_size() const { return channels_ * patch_ * patch_; }

  void check(const Image& img) const;

  /// Flattened patch, channel-major then row then column.
  std::vector<double> extract(const Image& img, std::size_t index) const;
  void insert(Image& img, std::size_t index, std::span<const double> patch) const;

  fourier::RealGrid channel_patch(const Image& img, std::size_t index, std::size_t channel) const;
  void put_channel_patch(Image& img, std::size_t index, std::size_t channel,
                         const fourier::RealGrid& grid) const;

  std::vector<std::vector<double>> decompose(const Image& img) const;
  Image reassemble(const std::vector<std::vector<double>>& patches) const;

 private:
  std::size_t channels_, height_, width_, patch_, rows_, cols_;
};

}  // namespace transface
