#include "transface/image.hpp"

#include <string>

#include "transface/tensor.hpp"

namespace transface {

PatchGrid::PatchGrid(std::size_t channels, std::size_t height, std::size_t width,
                     std::size_t patch_side)
    : channels_(channels), height_(height), width_(width), patch_(patch_side) {
  if (patch_side == 0 || channels == 0 || height == 0 || width == 0) {
    throw DimensionError("patch grid needs non-zero channels, size and patch side");
  }
  if (height % patch_side != 0 || width % patch_side != 0) {
    throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                         " does not tile into " + std::to_string(patch_side) + "-pixel patches");
  }
  rows_ = height / patch_side;
  cols_ = width / patch_side;
}

PatchGrid PatchGrid::for_image(const Image& img, std::size_t patch_side) {
  return PatchGrid(img.channels, img.height, img.width, patch_side);
}

void PatchGrid::check(const Image& img) const {
  if (img.channels != channels_ || img.height != height_ || img.width != width_ ||
      img.pixels.size() != channels_ * height_ * width_) {
    throw DimensionError("image " + std::to_string(img.channels) + "x" + std::to_string(img.height) +
                         "x" + std::to_string(img.width) + " does not match patch grid " +
                         std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
                         std::to_string(width_));
  }
}

std::vector<double> PatchGrid::extract(const Image& img, std::size_t index) const {
  check(img);
  if (index >= count()) throw DimensionError("patch index out of range");
  const std::size_t y0 = (index / cols_) * patch_, x0 = (index % cols_) * patch_;
  std::vector<double> out;
  out.reserve(patch_size());
  for (std::size_t c = 0; c < channels_; ++c)
    for (std::size_t y = 0; y < patch_; ++y)
      for (std::size_t x = 0; x < patch_; ++x) out.push_back(img.at(c, y0 + y, x0 + x));
  return out;
}

void PatchGrid::insert(Image& img, std::size_t index, std::span<const double> patch) const {
  check(img);
  if (index >= count()) throw DimensionError("patch index out of range");
  if (patch.size() != patch_size()) throw DimensionError("patch payload has wrong length");
  const std::size_t y0 = (index / cols_) * patch_, x0 = (index % cols_) * patch_;
  std::size_t i = 0;
  for (std::size_t c = 0; c < channels_; ++c)
    for (std::size_t y = 0; y < patch_; ++y)
      for (std::size_t x = 0; x < patch_; ++x) img.at(c, y0 + y, x0 + x) = patch[i++];
}

fourier::RealGrid PatchGrid::channel_patch(const Image& img, std::size_t index,
                                           std::size_t channel) const {
  check(img);
  if (index >= count() || channel >= channels_) throw DimensionError("patch index out of range");
  const std::size_t y0 = (index / cols_) * patch_, x0 = (index % cols_) * patch_;
  fourier::RealGrid g(patch_, patch_);
  for (std::size_t y = 0; y < patch_; ++y)
    for (std::size_t x = 0; x < patch_; ++x) g(y, x) = img.at(channel, y0 + y, x0 + x);
  return g;
}

void PatchGrid::put_channel_patch(Image& img, std::size_t index, std::size_t channel,
                                  const fourier::RealGrid& grid) const {
  check(img);
  if (index >= count() || channel >= channels_) throw DimensionError("patch index out of range");
  if (grid.height != patch_ || grid.width != patch_) throw DimensionError("patch grid size mismatch");
  const std::size_t y0 = (index / cols_) * patch_, x0 = (index % cols_) * patch_;
  for (std::size_t y = 0; y < patch_; ++y)
    for (std::size_t x = 0; x < patch_; ++x) img.at(channel, y0 + y, x0 + x) = grid(y, x);
}

std::vector<std::vector<double>> PatchGrid::decompose(const Image& img) const {
  std::vector<std::vector<double>> out;
  out.reserve(count());
  for (std::size_t i = 0; i < count(); ++i) out.push_back(extract(img, i));
  return out;
}

Image PatchGrid::reassemble(const std::vector<std::vector<double>>& patches) const {
  if (patches.size() != count()) throw DimensionError("reassemble: wrong patch count");
  Image img(channels_, height_, width_);
  for (std::size_t i = 0; i < patches.size(); ++i) insert(img, i, patches[i]);
  return img;
}

}  // namespace transface
