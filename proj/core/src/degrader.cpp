// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "image_mat.hpp"
#include "rescap/data_pipeline.hpp"
#include "rescap/errors.hpp"
#include "rescap/ids.hpp"

namespace rescap {

namespace {

int jpeg_quality(const ClassicalDegraderOptions& o, double zoom) {
  // Linear from max quality at zoom 1 to min quality at zoom 20 and beyond.
  const double t = std::clamp((zoom - 1.0) / 19.0, 0.0, 1.0);
  return static_cast<int>(std::lround(o.jpeg_quality_max - t * (o.jpeg_quality_max - o.jpeg_quality_min)));
}

cv::Mat add_noise(const cv::Mat& src8, double sigma, std::uint64_t seed) {
  cv::Mat f;
  src8.convertTo(f, CV_64F);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  auto* data = f.ptr<double>(0);
  const auto n = static_cast<std::size_t>(f.total()) * static_cast<std::size_t>(f.channels());
  for (std::size_t i = 0; i < n; ++i) data[i] += gauss(rng);
  cv::Mat out;
  f.convertTo(out, CV_8U);
  return out;
}

cv::Mat jpeg_round_trip(const cv::Mat& src, int quality) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".jpg", src, buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
    throw IoError("JPEG encode failed");
  cv::Mat out = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  if (out.empty()) throw IoError("JPEG decode failed");
  return out;
}

}  // namespace

Image ClassicalDegrader::degrade(const Image& hq, double zoom_ratio, std::uint64_t seed) const {
  if (!(zoom_ratio > 0.0) || !std::isfinite(zoom_ratio))
    throw InvalidInputError("zoom ratio must be positive and finite");
  if (hq.empty()) throw InvalidInputError("degrader: empty HQ image");

  const cv::Size target(std::max(1, static_cast<int>(std::lround(hq.width / zoom_ratio))),
                        std::max(1, static_cast<int>(std::lround(hq.height / zoom_ratio))));
  const double sigma = options_.blur_per_zoom * std::sqrt(zoom_ratio);
  const double noise_sigma = options_.noise_base + options_.noise_per_zoom * zoom_ratio;
  const int quality = jpeg_quality(options_, zoom_ratio);

  cv::Mat cur = to_mat(hq).clone();
  for (int pass = 0; pass < std::max(1, options_.passes); ++pass) {
    if (sigma > 0.0) cv::GaussianBlur(cur, cur, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);
    if (pass == 0) cv::resize(cur, cur, target, 0, 0, cv::INTER_AREA);
    cur = add_noise(cur, noise_sigma, combine_seed({seed, static_cast<std::uint64_t>(pass), 0x6e6f697365ULL}));
    cur = jpeg_round_trip(cur, quality);
  }
  return from_mat(cur);
}

DegraderRegistry default_degraders() {
  ClassicalDegraderOptions second_order;
  second_order.passes = 2;
  return {{"stub", std::make_shared<ClassicalDegrader>()},
          {"realesrgan", std::make_shared<ClassicalDegrader>(second_order)}};
}

}  // namespace rescap
