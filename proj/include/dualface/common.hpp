#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualface {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input: out-of-canvas vertices, empty polylines, bad params.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Operation not allowed in the current state (e.g. selecting a candidate in the global stage).
class ConflictError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

struct CanvasSize {
  int width = 512;
  int height = 512;

  friend bool operator==(const CanvasSize&, const CanvasSize&) = default;
};

inline constexpr CanvasSize kDefaultCanvas{512, 512};

// Canvas-space point: origin top-left, y pointing down, units of pixels.
struct Vertex {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vertex&, const Vertex&) = default;
};

// Dense row-major 2D raster.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), cells_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw ValidationError("grid dimensions must be non-negative");
  }
  explicit Grid(CanvasSize size, T fill = T{}) : Grid(size.width, size.height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  CanvasSize size() const { return {width_, height_}; }
  bool empty() const { return cells_.empty(); }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& at(int x, int y) { return cells_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return cells_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<T> cells() { return cells_; }
  std::span<const T> cells() const { return cells_; }
  std::span<T> row(int y) { return std::span<T>(cells_).subspan(static_cast<std::size_t>(y) * width_, width_); }
  std::span<const T> row(int y) const {
    return std::span<const T>(cells_).subspan(static_cast<std::size_t>(y) * width_, width_);
  }

  void fill(T value) { std::fill(cells_.begin(), cells_.end(), value); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> cells_;
};

// 0 = paper, 1 = ink.
using BinaryRaster = Grid<std::uint8_t>;
using SketchRaster = BinaryRaster;
using ContourSketch = BinaryRaster;
using GrayImage = Grid<std::uint8_t>;

inline std::size_t count_ink(const BinaryRaster& raster) {
  std::size_t n = 0;
  for (auto v : raster.cells()) n += v != 0;
  return n;
}

}  // namespace dualface
