#pragma once

#include <string>

#include "mfrnet/feature_aggregator.hpp"
#include "mfrnet/tensor.hpp"

namespace mfrnet {

// Decodes an 8-bit image, triplicating grayscale, and resizes it bilinearly
// to size x size. Values are scaled to [0, 1].
ImageTensor load_image(const std::string& path, int size);

// Binary [size, size] mask: nearest-neighbour resize, pixels above 127 are 1.
Tensor load_mask(const std::string& path, int size);

// 8-bit PNG writers for [3, H, W] RGB in [0, 1] and binary [H, W] masks.
void save_image_png(const std::string& path, const Tensor& rgb);
void save_mask_png(const std::string& path, const Tensor& mask);

// Writes `map` as a 16-bit grayscale PNG min-max scaled to [0, 65535] and a
// sidecar `<path>.json` recording the offset and scale that map pixel values
// back to scores.
void save_heatmap(const std::string& path, const Tensor& map);

}  // namespace mfrnet
