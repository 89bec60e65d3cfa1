#include "mfrnet/crossed_mask.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace mfrnet {
namespace {

void check_partials(std::span<const Tensor* const> partials, const MaskSet& mask_set) {
  if (partials.size() != static_cast<std::size_t>(mask_set.subset_count)) {
    throw ArgumentError("compose_restoration: expected " + std::to_string(mask_set.subset_count) +
                        " partials, got " + std::to_string(partials.size()));
  }
  for (const Tensor* p : partials) {
    require_feature_map(*p, "compose_restoration partial");
    require_same_shape(*p, *partials.front(), "compose_restoration partials");
    if (p->height() != mask_set.height || p->width() != mask_set.width) {
      throw ArgumentError("compose_restoration: partial " + shape_to_string(p->shape()) +
                          " does not match mask size " + std::to_string(mask_set.height) + "x" +
                          std::to_string(mask_set.width));
    }
  }
}

Tensor select_by_owner(std::span<const Tensor* const> partials, const MaskSet& mask_set) {
  const Tensor& first = *partials.front();
  Tensor out = Tensor::zeros_like(first);
  for (int c = 0; c < first.channels(); ++c) {
    for (int y = 0; y < first.height(); ++y) {
      for (int x = 0; x < first.width(); ++x) {
        out.at(c, y, x) = partials[static_cast<std::size_t>(mask_set.owner_at(y, x))]->at(c, y, x);
      }
    }
  }
  return out;
}

}  // namespace

MaskSet generate_masks(int height, int width, int cell_size, int subset_count,
                       std::uint64_t seed) {
  if (height <= 0 || width <= 0 || cell_size <= 0) {
    throw ArgumentError("generate_masks: sizes must be positive");
  }
  if (height % cell_size != 0 || width % cell_size != 0) {
    throw ArgumentError("generate_masks: " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible by cell size " + std::to_string(cell_size));
  }
  const int cells = (height / cell_size) * (width / cell_size);
  if (subset_count < 1 || subset_count > cells) {
    throw ArgumentError("generate_masks: subset count " + std::to_string(subset_count) +
                        " must be in [1, " + std::to_string(cells) + "]");
  }

  MaskSet set;
  set.height = height;
  set.width = width;
  set.cell_size = cell_size;
  set.subset_count = subset_count;
  set.seed = seed;

  std::vector<int> order(static_cast<std::size_t>(cells));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  set.cell_owner.assign(static_cast<std::size_t>(cells), 0);
  for (int j = 0; j < cells; ++j) {
    set.cell_owner[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = j % subset_count;
  }

  set.masks.assign(static_cast<std::size_t>(subset_count), Tensor({height, width}, 1.0));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      set.masks[static_cast<std::size_t>(set.owner_at(y, x))][static_cast<std::size_t>(y) * width + x] =
          0.0;
    }
  }
  return set;
}

FeatureMap apply_mask(const FeatureMap& features, const Tensor& mask) {
  require_feature_map(features, "apply_mask features");
  const bool shape_ok =
      (mask.rank() == 2 && mask.dim(0) == features.height() && mask.dim(1) == features.width()) ||
      (mask.rank() == 3 && mask.dim(0) == 1 && mask.dim(1) == features.height() &&
       mask.dim(2) == features.width());
  if (!shape_ok) {
    throw ArgumentError("apply_mask: mask " + shape_to_string(mask.shape()) +
                        " does not match features " + shape_to_string(features.shape()));
  }
  FeatureMap out = features;
  const std::size_t npix = mask.size();
  for (int c = 0; c < out.channels(); ++c) {
    auto plane = out.plane(c);
    for (std::size_t p = 0; p < npix; ++p) plane[p] *= mask[p];
  }
  return out;
}

FeatureMap compose_restoration(std::span<const FeatureMap> partials, const MaskSet& mask_set) {
  std::vector<const Tensor*> ptrs;
  for (const auto& p : partials) ptrs.push_back(&p);
  check_partials(ptrs, mask_set);
  return select_by_owner(ptrs, mask_set);
}

ag::Var compose_restoration(std::span<const ag::Var> partials, const MaskSet& mask_set) {
  std::vector<const Tensor*> ptrs;
  for (const auto& p : partials) ptrs.push_back(&p->value);
  check_partials(ptrs, mask_set);
  Tensor out = select_by_owner(ptrs, mask_set);
  std::vector<ag::Var> parents(partials.begin(), partials.end());
  return ag::make_node(std::move(out), std::move(parents), [mask_set](ag::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (!p->requires_grad) continue;
      // d/d partial_i = grad * (1 - M_i)
      Tensor g = self.grad;
      const Tensor& keep = mask_set.masks[i];
      const std::size_t npix = keep.size();
      for (int c = 0; c < g.channels(); ++c) {
        auto plane = g.plane(c);
        for (std::size_t px = 0; px < npix; ++px) plane[px] *= 1.0 - keep[px];
      }
      p->accumulate(g);
    }
  });
}

Tensor coverage(const MaskSet& mask_set) {
  Tensor total({mask_set.height, mask_set.width});
  for (const Tensor& m : mask_set.masks) {
    for (std::size_t p = 0; p < total.size(); ++p) total[p] += 1.0 - m[p];
  }
  return total;
}

}  // namespace mfrnet
