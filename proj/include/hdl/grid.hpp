#pragma once

#include <cstddef>
#include <vector>

#include "hdl/error.hpp"

namespace hdl {

/// Uniform 1D or 2D grid. 1D grids use height == 1 and rank == 1; 2D grids
/// are stored row-major (height rows of width points).
struct GridShape {
  std::size_t height = 1;
  std::size_t width = 0;
  int rank = 1;

  static GridShape line(std::size_t n) { return {1, n, 1}; }
  static GridShape plane(std::size_t h, std::size_t w) { return {h, w, 2}; }

  std::size_t size() const { return height * width; }
  std::size_t index(std::size_t row, std::size_t col) const { return row * width + col; }

  bool operator==(const GridShape&) const = default;
};

/// A point on the grid; row is ignored on 1D grids.
struct GridIndex {
  std::size_t row = 0;
  std::size_t col = 0;
};

/// Half-open rectangular window [row_begin, row_end) x [col_begin, col_end).
struct Window {
  std::size_t row_begin = 0, row_end = 0;
  std::size_t col_begin = 0, col_end = 0;

  static Window full(const GridShape& s) { return {0, s.height, 0, s.width}; }
  static Window inset(const GridShape& s, std::size_t margin) {
    if (s.rank == 1) return {0, 1, margin, s.width - margin};
    return {margin, s.height - margin, margin, s.width - margin};
  }
  std::size_t height() const { return row_end - row_begin; }
  std::size_t width() const { return col_end - col_begin; }
};

template <class T>
std::vector<T> crop(const std::vector<T>& values, const GridShape& shape, const Window& w) {
  require(values.size() == shape.size(), "crop: value count does not match grid");
  require(w.row_end <= shape.height && w.col_end <= shape.width && w.row_begin < w.row_end &&
              w.col_begin < w.col_end,
          "crop: window outside grid");
  std::vector<T> out;
  out.reserve(w.height() * w.width());
  for (std::size_t r = w.row_begin; r < w.row_end; ++r)
    for (std::size_t c = w.col_begin; c < w.col_end; ++c) out.push_back(values[shape.index(r, c)]);
  return out;
}

inline GridShape window_shape(const GridShape& shape, const Window& w) {
  return shape.rank == 1 ? GridShape::line(w.width()) : GridShape::plane(w.height(), w.width());
}

}  // namespace hdl
