#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace btsnet {

/// Decoded raster, planar channel order (R, G, B for color), values scaled
/// to [0, 1] by the container bit depth.
struct Image {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<float> values;  // channel-major: c * rows * cols + r * cols + col

  float at(int c, int r, int col) const {
    return values[(static_cast<std::size_t>(c) * rows + r) * cols + col];
  }
};

enum class ReadMode { kGray, kColor, kUnchanged };

/// Throws std::runtime_error naming the file when it cannot be decoded.
Image read_image(const std::filesystem::path& path, ReadMode mode);

/// Writes channel 0 (1 channel) or RGB (3 channels) as 8-bit, rounding
/// values clamped to [0, 1].
void write_image8(const std::filesystem::path& path, const Image& image);

/// Bilinear (or nearest) resize of every channel.
Image resize_image(const Image& image, int rows, int cols, bool nearest);

/// Maps a [0, 1] plane through the JET colormap to an RGB image.
Image apply_colormap(const Image& gray);

/// Raster files in `dir` keyed by filename stem. Unknown extensions are
/// skipped.
std::map<std::string, std::filesystem::path> index_images(const std::filesystem::path& dir);

}  // namespace btsnet
