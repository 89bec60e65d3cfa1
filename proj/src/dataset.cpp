#include "mfrnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include <opencv2/imgproc.hpp>

#include "mfrnet/image_io.hpp"
#include "mfrnet/tensor.hpp"

namespace mfrnet {
namespace fs = std::filesystem;
namespace {

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path mask_path(const fs::path& root, const std::string& type, const fs::path& image) {
  return root / "ground_truth" / type / (image.stem().string() + "_mask.png");
}

// Grating texture in [0, 1]: orientation, frequency and phase vary mildly per
// image; per-channel tints keep the image in colour.
Tensor grating(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(25.0, 35.0);
  std::uniform_real_distribution<double> freq(0.11, 0.14);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 0.03);
  const double theta = angle(rng) * std::numbers::pi / 180.0;
  const double f = freq(rng);
  const double phi = phase(rng);
  constexpr double kTint[3] = {1.0, 0.85, 0.7};
  Tensor img({3, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = x * std::cos(theta) + y * std::sin(theta);
      const double base = 0.5 + 0.25 * std::sin(2.0 * std::numbers::pi * f * u + phi);
      const double n = noise(rng);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(base * kTint[c] + n, 0.0, 1.0);
    }
  }
  return img;
}

// Draws one defect footprint into an 8-bit mask.
cv::Mat defect_mask(int size, bool blob, std::mt19937_64& rng) {
  cv::Mat m = cv::Mat::zeros(size, size, CV_8UC1);
  const double s = size / 64.0;
  std::uniform_real_distribution<double> pos(0.15 * size, 0.85 * size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const cv::Point center(static_cast<int>(pos(rng)), static_cast<int>(pos(rng)));
  if (blob) {
    const int a = std::max(1, static_cast<int>(std::lround((3.0 + 6.0 * unit(rng)) * s)));
    const int b = std::max(1, static_cast<int>(std::lround((3.0 + 6.0 * unit(rng)) * s)));
    cv::ellipse(m, center, cv::Size(a, b), 360.0 * unit(rng), 0.0, 360.0, cv::Scalar(255), cv::FILLED,
                cv::LINE_8);
  } else {
    const double len = (14.0 + 20.0 * unit(rng)) * s;
    const double ang = std::numbers::pi * unit(rng);
    const cv::Point d(static_cast<int>(0.5 * len * std::cos(ang)), static_cast<int>(0.5 * len * std::sin(ang)));
    const int thickness = std::max(1, static_cast<int>(std::lround((2.0 + unit(rng)) * s)));
    cv::line(m, center - d, center + d, cv::Scalar(255), thickness, cv::LINE_8);
  }
  return m;
}

}  // namespace

std::vector<DatasetItem> DatasetIndex::split(Split s) const {
  std::vector<DatasetItem> out;
  for (const auto& it : items) {
    if (it.split == s) out.push_back(it);
  }
  return out;
}

std::size_t DatasetIndex::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [s](const DatasetItem& it) { return it.split == s; }));
}

DatasetIndex index_dataset(const std::string& root_str, const IndexOptions& options) {
  const fs::path root(root_str);
  if (!fs::is_directory(root)) throw IndexError("dataset root " + root_str + " is not a directory");
  if (options.train_limit < 0) throw IndexError("train_limit must be >= 0");

  DatasetIndex index;
  index.root = root_str;
  index.category = fs::absolute(root).lexically_normal().filename().string();
  if (index.category.empty()) index.category = fs::absolute(root).parent_path().filename().string();

  std::vector<DatasetItem> train;
  for (const auto& p : sorted_images(root / "train" / "good")) {
    train.push_back({p.string(), Split::kTrain, index.category, "good", std::nullopt});
  }

  std::vector<DatasetItem> test;
  std::vector<std::string> missing_types;
  for (const auto& type : sorted_subdirs(root / "test")) {
    const auto images = sorted_images(root / "test" / type);
    if (type == "good") {
      for (const auto& p : images) {
        DatasetItem item{p.string(), Split::kTest, index.category, "good", std::nullopt};
        if (options.mt_style) {
          item.split = Split::kTrain;
          train.push_back(std::move(item));
        } else {
          test.push_back(std::move(item));
        }
      }
      continue;
    }
    if (!images.empty() && !fs::is_directory(root / "ground_truth" / type)) {
      missing_types.push_back(type);
      continue;
    }
    for (const auto& p : images) {
      const fs::path gt = mask_path(root, type, p);
      if (!fs::is_regular_file(gt)) {
        throw IndexError("defective test image " + p.string() + " has no ground-truth mask (expected " +
                         gt.string() + ")");
      }
      test.push_back({p.string(), Split::kTest, index.category, type, gt.string()});
    }
  }
  if (!missing_types.empty()) {
    std::string names;
    for (const auto& t : missing_types) names += (names.empty() ? "" : ", ") + t;
    throw IndexError("defect types without a ground_truth folder: " + names);
  }
  if (train.empty()) throw IndexError("train split of " + root_str + " is empty");

  std::sort(train.begin(), train.end(),
            [](const DatasetItem& a, const DatasetItem& b) { return a.image_path < b.image_path; });
  if (options.train_limit > 0 && train.size() > static_cast<std::size_t>(options.train_limit)) {
    train.resize(static_cast<std::size_t>(options.train_limit));
  }
  index.items = std::move(train);
  index.items.insert(index.items.end(), test.begin(), test.end());
  return index;
}

void check_unsupervised(const DatasetIndex& index) {
  const fs::path root(index.root);
  for (const auto& it : index.items) {
    if (it.split != Split::kTrain) continue;
    if (it.ground_truth) throw IndexError("training image " + it.image_path + " carries a ground-truth mask");
    const fs::path p(it.image_path);
    for (const char* type : {"good", "train"}) {
      const fs::path gt = mask_path(root, type, p);
      if (fs::exists(gt)) {
        throw IndexError("ground-truth mask " + gt.string() + " is reachable from training image " +
                         it.image_path);
      }
    }
  }
}

DatasetIndex make_synthetic_dataset(const std::string& out, int normal_count, int defect_count,
                                    std::uint64_t seed, const SyntheticOptions& options) {
  if (normal_count < 1 || defect_count < 1) {
    throw ArgumentError("make_synthetic_dataset: counts must be >= 1");
  }
  const int size = options.image_size;
  if (size < 16) throw ArgumentError("make_synthetic_dataset: image_size must be >= 16");
  const int good_test = options.test_good_count < 0 ? defect_count / 3 : options.test_good_count;
  const fs::path root(out);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw LoadError("cannot create " + out + ": " + ec.message());

  std::mt19937_64 rng(seed);
  auto name = [](int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d.png", i);
    return std::string(buf);
  };

  for (int i = 0; i < normal_count; ++i) {
    save_image_png((root / "train" / "good" / name(i)).string(), grating(size, rng));
  }
  for (int i = 0; i < good_test; ++i) {
    save_image_png((root / "test" / "good" / name(i)).string(), grating(size, rng));
  }

  const double area = static_cast<double>(size) * size;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);
  for (int i = 0; i < defect_count; ++i) {
    const bool blob = i % 2 == 0;
    const std::string type = blob ? "blob" : "scratch";
    const int id = i / 2;
    Tensor img = grating(size, rng);
    cv::Mat m;
    for (;;) {
      m = defect_mask(size, blob, rng);
      const double frac = cv::countNonZero(m) / area;
      if (frac >= 0.005 && frac <= 0.05) break;
    }
    // Blobs are flat patches inside the normal intensity range that erase the
    // grating; scratches are dark.
    const double level = blob ? 0.2 + 0.6 * unit(rng) : 0.1 + 0.1 * unit(rng);
    Tensor mask({size, size});
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (m.at<uchar>(y, x) == 0) continue;
        mask[static_cast<std::size_t>(y * size + x)] = 1.0;
        const double n = noise(rng);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(level + n, 0.0, 1.0);
      }
    }
    const std::string file = name(id);
    save_image_png((root / "test" / type / file).string(), img);
    save_mask_png((root / "ground_truth" / type / (file.substr(0, 3) + "_mask.png")).string(), mask);
  }
  return index_dataset(out);
}

}  // namespace mfrnet
