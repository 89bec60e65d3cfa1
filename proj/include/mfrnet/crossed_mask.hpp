#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mfrnet/autograd.hpp"
#include "mfrnet/tensor.hpp"

namespace mfrnet {

// n complementary keep-masks over a grid of k x k cells. masks[i] is an
// [H, W] tensor with 1 on visible pixels and 0 on the cells owned by subset i;
// every cell is owned by exactly one subset.
struct MaskSet {
  int height = 0;
  int width = 0;
  int cell_size = 0;
  int subset_count = 0;
  std::uint64_t seed = 0;
  std::vector<Tensor> masks;
  // Owning subset for each cell, row-major over the (H/k) x (W/k) cell grid.
  std::vector<int> cell_owner;

  int cells_y() const { return height / cell_size; }
  int cells_x() const { return width / cell_size; }
  int owner_at(int y, int x) const {
    return cell_owner[static_cast<std::size_t>((y / cell_size) * cells_x() + x / cell_size)];
  }
};

// Shuffles the cells with a generator seeded by `seed` and deals them
// round-robin into `subset_count` subsets, so masked-cell counts differ by at
// most one.
MaskSet generate_masks(int height, int width, int cell_size, int subset_count, std::uint64_t seed);

// features(c, y, x) * mask(y, x).
FeatureMap apply_mask(const FeatureMap& features, const Tensor& mask);

// sum_i partials[i] * (1 - M_i): each pixel is copied from the one partial
// whose mask hid it.
FeatureMap compose_restoration(std::span<const FeatureMap> partials, const MaskSet& mask_set);
ag::Var compose_restoration(std::span<const ag::Var> partials, const MaskSet& mask_set);

// sum_i (1 - M_i) as an [H, W] grid; all ones for a valid partition.
Tensor coverage(const MaskSet& mask_set);

}  // namespace mfrnet
