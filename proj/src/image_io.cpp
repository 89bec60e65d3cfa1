#include "mfrnet/image_io.hpp"

#include <filesystem>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"
#include "mfrnet/file_util.hpp"

namespace mfrnet {
namespace {

void encode_png(const std::string& path, const cv::Mat& img) {
  std::vector<uchar> buf;
  if (!cv::imencode(".png", img, buf)) throw LoadError(path + ": PNG encoding failed");
  atomic_write_file(path, std::string_view(reinterpret_cast<const char*>(buf.data()), buf.size()));
}

cv::Mat decode(const std::string& path, int flags) {
  const std::string bytes = read_file(path);
  const std::vector<uchar> buf(bytes.begin(), bytes.end());
  cv::Mat img = cv::imdecode(buf, flags);
  if (img.empty()) throw LoadError(path + ": cannot decode image");
  return img;
}

}  // namespace

ImageTensor load_image(const std::string& path, int size) {
  if (size < 1) throw ArgumentError("load_image: size must be positive");
  cv::Mat img = decode(path, cv::IMREAD_COLOR);
  if (img.rows != size || img.cols != size) {
    cv::resize(img, img, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  }
  ImageTensor out{Tensor({3, size, size}), path};
  for (int y = 0; y < size; ++y) {
    const auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < size; ++x) {
      // OpenCV stores BGR.
      for (int c = 0; c < 3; ++c) out.pixels.at(c, y, x) = row[x][2 - c] / 255.0;
    }
  }
  return out;
}

Tensor load_mask(const std::string& path, int size) {
  if (size < 1) throw ArgumentError("load_mask: size must be positive");
  cv::Mat img = decode(path, cv::IMREAD_GRAYSCALE);
  if (img.rows != size || img.cols != size) {
    cv::resize(img, img, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
  }
  Tensor out({size, size});
  for (int y = 0; y < size; ++y) {
    const auto* row = img.ptr<uchar>(y);
    for (int x = 0; x < size; ++x) out[static_cast<std::size_t>(y * size + x)] = row[x] > 127 ? 1.0 : 0.0;
  }
  return out;
}

void save_image_png(const std::string& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.channels() != 3) {
    throw ArgumentError("save_image_png: expected [3, H, W], got " + shape_to_string(rgb.shape()));
  }
  cv::Mat img(rgb.height(), rgb.width(), CV_8UC3);
  for (int y = 0; y < rgb.height(); ++y) {
    auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        row[x][2 - c] = cv::saturate_cast<uchar>(rgb.at(c, y, x) * 255.0 + 0.5);
      }
    }
  }
  encode_png(path, img);
}

void save_mask_png(const std::string& path, const Tensor& mask) {
  if (mask.rank() != 2) throw ArgumentError("save_mask_png: expected [H, W]");
  const int h = mask.shape()[0];
  const int w = mask.shape()[1];
  cv::Mat img(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.at<uchar>(y, x) = mask[static_cast<std::size_t>(y * w + x)] != 0.0 ? 255 : 0;
  }
  encode_png(path, img);
}

void save_heatmap(const std::string& path, const Tensor& map) {
  if (map.rank() != 2) throw ArgumentError("save_heatmap: expected [H, W]");
  const int h = map.shape()[0];
  const int w = map.shape()[1];
  const double lo = map.min();
  const double range = map.max() - lo;
  const double scale = range > 0.0 ? range / 65535.0 : 0.0;
  cv::Mat img(h, w, CV_16UC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = map[static_cast<std::size_t>(y * w + x)];
      img.at<std::uint16_t>(y, x) =
          range > 0.0 ? cv::saturate_cast<std::uint16_t>((v - lo) / scale + 0.5) : 0;
    }
  }
  encode_png(path, img);
  nlohmann::ordered_json side{{"offset", lo}, {"scale", scale}, {"encoding", "score = offset + scale * pixel"}};
  atomic_write_file(path + ".json", side.dump(2) + "\n");
}

}  // namespace mfrnet
