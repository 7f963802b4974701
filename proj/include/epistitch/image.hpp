#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace epistitch {

/// Per-pixel validity bits, row-major.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, bool value = false);

  int width() const { return width_; }
  int height() const { return height_; }

  bool operator()(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v) { bits_[index(x, y)] = v ? 1 : 0; }
  bool inBounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::size_t count() const;
  std::span<const std::uint8_t> bits() const { return bits_; }

  Mask operator&(const Mask& other) const;
  Mask operator|(const Mask& other) const;
  bool operator==(const Mask& other) const = default;

  /// Keeps pixels whose (2r+1)x(2r+1) neighbourhood lies inside the mask.
  Mask eroded(int radius) const;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// 8-bit raster with 1 or 3 interleaved channels and a validity mask.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  /// Zero-filled; every pixel starts invalid unless `valid` is set.
  ImageBuffer(int width, int height, int channels, bool valid = false);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  std::uint8_t at(int x, int y, int c) const { return data_[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c) { return data_[index(x, y, c)]; }

  const Mask& mask() const { return mask_; }
  Mask& mask() { return mask_; }
  bool valid(int x, int y) const { return mask_(x, y); }

  std::span<const std::uint8_t> data() const { return data_; }
  std::span<std::uint8_t> data() { return data_; }

  /// Rec.601 luma as floating point, row-major.
  std::vector<double> luma() const;
  /// Returns a 3-channel copy (gray replicated); 3-channel input is copied.
  ImageBuffer toRgb() const;

  bool operator==(const ImageBuffer& other) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
  Mask mask_;
};

/// Rounds and clamps a floating-point sample to 8 bits.
std::uint8_t toByte(double v);

}  // namespace epistitch
