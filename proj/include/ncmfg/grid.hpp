#pragma once

#include "ncmfg/linalg.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace ncmfg {

// Uniform tensor grid on a box; nodes in row-major order (last axis fastest).
class BoxGrid {
 public:
  BoxGrid() = default;
  // Nodes per axis are round((hi-lo)/dx)+1; the spacing is then adjusted so
  // the end nodes sit exactly on lo and hi.
  BoxGrid(Box box, double dx);
  BoxGrid(Box box, std::array<int, kMaxDim> counts);

  int dim() const { return box_.dim(); }
  const Box& box() const { return box_; }
  int count(int axis) const { return n_[axis]; }
  double spacing(int axis) const { return h_[axis]; }
  std::size_t stride(int axis) const { return stride_[axis]; }
  std::size_t size() const { return size_; }

  std::array<int, kMaxDim> multi_index(std::size_t flat) const;
  std::size_t flat_index(const std::array<int, kMaxDim>& idx) const;
  Vec node(std::size_t flat) const;
  Vec node(const std::array<int, kMaxDim>& idx) const;

  // Multilinear interpolation of nodal values; x is clamped onto the box.
  double interpolate(std::span<const double> values, const Vec& x) const;

  // Cell locator shared by interpolation routines: lower corner index and
  // fractional offset per axis (x clamped to the box).
  void locate(const Vec& x, std::array<int, kMaxDim>& cell, std::array<double, kMaxDim>& w) const;

  bool operator==(const BoxGrid& o) const;

 private:
  void init();

  Box box_;
  std::array<int, kMaxDim> n_{};
  std::array<double, kMaxDim> h_{};
  std::array<std::size_t, kMaxDim> stride_{};
  std::size_t size_ = 0;
};

// Central first difference along an axis with second-order one-sided
// differences at the grid boundary.
double nodal_derivative(const BoxGrid& grid, std::span<const double> values,
                        const std::array<int, kMaxDim>& idx, int axis);

}  // namespace ncmfg
