#include "epistitch/image.hpp"

#include <algorithm>
#include <cmath>

#include "epistitch/error.hpp"

namespace epistitch {

Mask::Mask(int width, int height, bool value) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::InvalidSize, "negative mask size");
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), value ? 1 : 0);
}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }

Mask Mask::operator&(const Mask& other) const {
  if (width_ != other.width_ || height_ != other.height_) throw Error(ErrorCode::InvalidSize, "mask size mismatch");
  Mask out(width_, height_);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
  return out;
}

Mask Mask::operator|(const Mask& other) const {
  if (width_ != other.width_ || height_ != other.height_) throw Error(ErrorCode::InvalidSize, "mask size mismatch");
  Mask out(width_, height_);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] | other.bits_[i];
  return out;
}

Mask Mask::eroded(int radius) const {
  if (radius <= 0) return *this;
  // Separable min filter; pixels outside the raster count as invalid.
  Mask rows(width_, height_);
  for (int y = 0; y < height_; ++y) {
    int run = 0;  // length of the valid run ending at x
    std::vector<int> left(static_cast<std::size_t>(width_));
    for (int x = 0; x < width_; ++x) {
      run = (*this)(x, y) ? run + 1 : 0;
      left[static_cast<std::size_t>(x)] = run;
    }
    for (int x = 0; x < width_; ++x) {
      const int xe = x + radius;
      rows.set(x, y, xe < width_ && left[static_cast<std::size_t>(xe)] >= 2 * radius + 1);
    }
  }
  Mask out(width_, height_);
  for (int x = 0; x < width_; ++x) {
    std::vector<int> up(static_cast<std::size_t>(height_));
    int run = 0;
    for (int y = 0; y < height_; ++y) {
      run = rows(x, y) ? run + 1 : 0;
      up[static_cast<std::size_t>(y)] = run;
    }
    for (int y = 0; y < height_; ++y) {
      const int ye = y + radius;
      out.set(x, y, ye < height_ && up[static_cast<std::size_t>(ye)] >= 2 * radius + 1);
    }
  }
  return out;
}

ImageBuffer::ImageBuffer(int width, int height, int channels, bool valid)
    : width_(width), height_(height), channels_(channels), mask_(width, height, valid) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3))
    throw Error(ErrorCode::InvalidSize, "image must have non-negative size and 1 or 3 channels");
  data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(channels), 0);
}

std::vector<double> ImageBuffer::luma() const {
  std::vector<double> out(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (channels_ == 1) {
      out[i] = data_[i];
    } else {
      const std::uint8_t* p = &data_[3 * i];
      out[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

ImageBuffer ImageBuffer::toRgb() const {
  if (channels_ == 3) return *this;
  ImageBuffer out(width_, height_, 3);
  out.mask_ = mask_;
  for (std::size_t i = 0; i < data_.size(); ++i)
    for (int c = 0; c < 3; ++c) out.data_[3 * i + static_cast<std::size_t>(c)] = data_[i];
  return out;
}

std::uint8_t toByte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace epistitch
