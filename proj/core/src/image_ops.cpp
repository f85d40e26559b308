// SPDX-License-Identifier: Apache-2.0
#include "rescap/image.hpp"

#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "image_mat.hpp"
#include "rescap/errors.hpp"
#include "rescap/ids.hpp"

namespace rescap {

cv::Mat to_mat(const Image& image) {
  if (image.channels != 1 && image.channels != 3)
    throw InvalidInputError("image must have 1 or 3 channels");
  const int type = image.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat view(image.height, image.width, type, const_cast<std::uint8_t*>(image.pixels.data()));
  return view.clone();
}

Image from_mat(const cv::Mat& mat) {
  cv::Mat m = mat;
  if (m.depth() != CV_8U) m.convertTo(m, CV_8U);
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
  if (!m.isContinuous()) m = m.clone();
  Image out;
  out.width = m.cols;
  out.height = m.rows;
  out.channels = m.channels();
  out.pixels.assign(m.datastart, m.dataend);
  return out;
}

cv::Mat to_gray_float(const Image& image) {
  cv::Mat m = to_mat(image);
  if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
  cv::Mat f;
  m.convertTo(f, CV_64F);
  return f;
}

Image load_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot read image " + path.string());
  return from_mat(m);
}

void save_png(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_png(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_mat(image), buf, {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw IoError("PNG encoding failed");
  return buf;
}

Image decode_image(const std::vector<std::uint8_t>& bytes) {
  cv::Mat m = cv::imdecode(bytes, cv::IMREAD_COLOR);
  if (m.empty()) throw ParseError("image", "image bytes could not be decoded");
  return from_mat(m);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError("base64", "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParseError("base64", "invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

double laplacian_variance(const Image& image) {
  if (image.empty()) throw InvalidInputError("laplacian_variance: empty image");
  cv::Mat lap;
  cv::Laplacian(to_gray_float(image), lap, CV_64F, 1, 1.0, 0.0, cv::BORDER_REPLICATE);
  cv::Scalar mean, stddev;
  cv::meanStdDev(lap, mean, stddev);
  return stddev[0] * stddev[0];
}

double normalized_mse(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw DimensionError("normalized_mse: image shapes differ (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                         std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.channels) + ")");
  if (a.pixels.empty()) throw InvalidInputError("normalized_mse: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = (static_cast<double>(a.pixels[i]) - b.pixels[i]) / 255.0;
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

Image make_thumbnail(const Image& image, int long_edge) {
  const int current = std::max(image.width, image.height);
  if (current <= long_edge) return image;
  const double scale = static_cast<double>(long_edge) / current;
  cv::Mat out;
  cv::resize(to_mat(image), out,
             cv::Size(std::max(1, static_cast<int>(std::lround(image.width * scale))),
                      std::max(1, static_cast<int>(std::lround(image.height * scale)))),
             0, 0, cv::INTER_AREA);
  return from_mat(out);
}

Image resize_image(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) throw InvalidInputError("resize_image: bad size");
  if (image.width == width && image.height == height) return image;
  cv::Mat out;
  cv::resize(to_mat(image), out, cv::Size(width, height), 0, 0, cv::INTER_AREA);
  return from_mat(out);
}

Image synthetic_image(int width, int height, std::uint64_t seed) {
  if (width <= 0 || height <= 0) throw InvalidInputError("synthetic_image: bad size");
  Rng rng(mix64(seed));
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  cv::Mat m(height, width, CV_8UC3);
  const double fx = 1.0 + 3.0 * unit();
  const double fy = 1.0 + 3.0 * unit();
  const int cell = 4 + static_cast<int>(unit() * 12);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const bool check = ((x / cell) + (y / cell)) % 2 == 0;
      const double gx = static_cast<double>(x) / width;
      const double gy = static_cast<double>(y) / height;
      auto& px = m.at<cv::Vec3b>(y, x);
      px[0] = cv::saturate_cast<std::uint8_t>(255.0 * gx * fx / 4.0 + (check ? 40 : 0));
      px[1] = cv::saturate_cast<std::uint8_t>(255.0 * gy * fy / 4.0 + (check ? 0 : 40));
      px[2] = cv::saturate_cast<std::uint8_t>(128.0 + 100.0 * (gx - gy));
    }
  }
  const int blobs = 3 + static_cast<int>(unit() * 4);
  for (int i = 0; i < blobs; ++i) {
    const cv::Point center(static_cast<int>(unit() * width), static_cast<int>(unit() * height));
    const cv::Size axes(std::max(2, static_cast<int>(unit() * width / 4)),
                        std::max(2, static_cast<int>(unit() * height / 4)));
    const cv::Scalar color(unit() * 255, unit() * 255, unit() * 255);
    cv::ellipse(m, center, axes, unit() * 180.0, 0, 360, color, cv::FILLED, cv::LINE_8);
  }
  return from_mat(m);
}

}  // namespace rescap
