// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rescap {

/// 8-bit interleaved image, 1 (gray) or 3 (BGR) channels, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  bool empty() const { return pixels.empty(); }
  bool operator==(const Image&) const = default;
};

Image load_image(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image& image);

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_image(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Variance of the 4-neighbour Laplacian of the luminance channel (0-255
/// scale). A constant image scores 0. Used as the stub sharpness statistic.
double laplacian_variance(const Image& image);

/// Mean squared error on intensities scaled to [0, 1]. Images must share
/// width, height and channel count.
double normalized_mse(const Image& a, const Image& b);

/// Downscales so the long edge is at most `long_edge` pixels.
Image make_thumbnail(const Image& image, int long_edge = 512);

/// Area resample to exactly width x height.
Image resize_image(const Image& image, int width, int height);

/// Deterministic synthetic test card: gradients, checkerboard and ellipses,
/// varied by seed. Handy for demos and tests without an image corpus.
Image synthetic_image(int width, int height, std::uint64_t seed);

}  // namespace rescap
