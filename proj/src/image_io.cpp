#include "btsnet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <set>
#include <stdexcept>

namespace btsnet {

namespace {

Image from_mat(const cv::Mat& mat) {
  double scale = 1.0;
  switch (mat.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F:
    case CV_64F: scale = 1.0; break;
    default: throw std::runtime_error("unsupported image bit depth");
  }
  cv::Mat converted;
  mat.convertTo(converted, CV_32F, scale);
  Image out;
  out.rows = mat.rows;
  out.cols = mat.cols;
  out.channels = mat.channels();
  out.values.resize(static_cast<std::size_t>(out.rows) * out.cols * out.channels);
  std::vector<cv::Mat> planes;
  cv::split(converted, planes);
  // OpenCV stores BGR; keep RGB order for color.
  if (out.channels == 3) std::swap(planes[0], planes[2]);
  if (out.channels == 4) {
    std::swap(planes[0], planes[2]);
    planes.resize(3);
    out.channels = 3;
    out.values.resize(static_cast<std::size_t>(out.rows) * out.cols * 3);
  }
  for (int c = 0; c < out.channels; ++c) {
    for (int r = 0; r < out.rows; ++r) {
      const float* src = planes[c].ptr<float>(r);
      std::copy(src, src + out.cols,
                out.values.begin() + (static_cast<std::size_t>(c) * out.rows + r) * out.cols);
    }
  }
  return out;
}

cv::Mat to_mat(const Image& image, int type_per_channel) {
  std::vector<cv::Mat> planes;
  for (int c = 0; c < image.channels; ++c) {
    cv::Mat p(image.rows, image.cols, CV_32F,
              const_cast<float*>(image.values.data()) +
                  static_cast<std::size_t>(c) * image.rows * image.cols);
    planes.push_back(p.clone());
  }
  if (image.channels == 3) std::swap(planes[0], planes[2]);
  cv::Mat merged;
  cv::merge(planes, merged);
  if (type_per_channel == CV_32F) return merged;
  cv::Mat out;
  merged.convertTo(out, CV_MAKETYPE(type_per_channel, image.channels));
  return out;
}

}  // namespace

Image read_image(const std::filesystem::path& path, ReadMode mode) {
  int flag = cv::IMREAD_UNCHANGED;
  if (mode == ReadMode::kGray) flag = cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH;
  if (mode == ReadMode::kColor) flag = cv::IMREAD_COLOR;
  cv::Mat mat = cv::imread(path.string(), flag);
  if (mat.empty()) throw std::runtime_error("cannot decode image " + path.string());
  return from_mat(mat);
}

void write_image8(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::runtime_error("write_image8 supports 1 or 3 channels");
  }
  Image scaled = image;
  for (auto& v : scaled.values) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  const cv::Mat mat = to_mat(scaled, CV_8U);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) {
    throw std::runtime_error("cannot write image " + path.string());
  }
}

Image resize_image(const Image& image, int rows, int cols, bool nearest) {
  if (image.rows == rows && image.cols == cols) return image;
  cv::Mat src = to_mat(image, CV_32F);
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(cols, rows), 0, 0, nearest ? cv::INTER_NEAREST : cv::INTER_LINEAR);
  return from_mat(dst);
}

Image apply_colormap(const Image& gray) {
  Image one = gray;
  one.channels = 1;
  one.values.resize(static_cast<std::size_t>(gray.rows) * gray.cols);
  for (auto& v : one.values) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  cv::Mat mat = to_mat(one, CV_8U);
  cv::Mat colored;
  cv::applyColorMap(mat, colored, cv::COLORMAP_JET);
  return from_mat(colored);
}

std::map<std::string, std::filesystem::path> index_images(const std::filesystem::path& dir) {
  static const std::set<std::string> kExtensions = {".png", ".jpg", ".jpeg", ".bmp",
                                                    ".tif", ".tiff", ".pgm", ".ppm"};
  std::map<std::string, std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (kExtensions.count(ext)) out.emplace(entry.path().stem().string(), entry.path());
  }
  return out;
}

}  // namespace btsnet
