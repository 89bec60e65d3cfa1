#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfrnet {

// The directory tree violates the dataset layout contract.
class IndexError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Split { kTrain, kTest };

struct DatasetItem {
  std::string image_path;
  Split split = Split::kTrain;
  std::string category;
  std::string defect_type;  // "good" for normal images
  std::optional<std::string> ground_truth;

  friend bool operator==(const DatasetItem&, const DatasetItem&) = default;
};

// Items are sorted: train first, then test by (defect_type, file name).
struct DatasetIndex {
  std::string root;
  std::string category;
  std::vector<DatasetItem> items;

  std::vector<DatasetItem> split(Split s) const;
  std::size_t count(Split s) const;
  friend bool operator==(const DatasetIndex&, const DatasetIndex&) = default;
};

struct IndexOptions {
  // Move test/good images into the training split.
  bool mt_style = false;
  // Keep at most this many training images (in sorted order); 0 keeps all.
  int train_limit = 0;
};

// Indexes root/train/good/*, root/test/<type>/* and
// root/ground_truth/<type>/<stem>_mask.png.
DatasetIndex index_dataset(const std::string& root, const IndexOptions& options = {});

// Throws IndexError when any ground-truth mask is reachable from the training
// split.
void check_unsupervised(const DatasetIndex& index);

struct SyntheticOptions {
  int image_size = 64;
  // Defect-free test images; negative means defect_count / 3.
  int test_good_count = -1;
};

// Procedural grating textures with seeded noise as normals; defective test
// images carry pasted contrast blobs ("blob") or scratch lines ("scratch")
// with exact masks covering 0.5%-5% of the image. Deterministic from `seed`.
DatasetIndex make_synthetic_dataset(const std::string& out, int normal_count, int defect_count,
                                    std::uint64_t seed, const SyntheticOptions& options = {});

}  // namespace mfrnet
