// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

#include "image_mat.hpp"
#include "rescap/degradation_adapter.hpp"
#include "rescap/errors.hpp"

namespace rescap {

PatchStatsProvider::PatchStatsProvider(int grid) : grid_(grid) {
  if (grid_ < 1) throw InvalidInputError("PatchStatsProvider: grid must be >= 1");
}

Eigen::MatrixXd PatchStatsProvider::features(const Image& image) const {
  if (image.empty()) throw InvalidInputError("PatchStatsProvider: empty image");
  const cv::Mat lum = to_gray_float(image) / 255.0;
  const int w = lum.cols;
  const int h = lum.rows;

  // Patch bounds [start, end); every patch keeps at least one pixel even on tiny images.
  auto bounds = [&](int extent) {
    std::vector<std::pair<int, int>> b(grid_);
    for (int i = 0; i < grid_; ++i) {
      const int start = std::min(static_cast<int>(static_cast<long long>(i) * extent / grid_), extent - 1);
      const int end = std::max(static_cast<int>(static_cast<long long>(i + 1) * extent / grid_), start + 1);
      b[i] = {start, end};
    }
    return b;
  };
  const auto xs = bounds(w);
  const auto ys = bounds(h);

  Eigen::MatrixXd out(tokens(), 3);
  for (int gy = 0; gy < grid_; ++gy) {
    for (int gx = 0; gx < grid_; ++gx) {
      double sum = 0.0, sq = 0.0, grad = 0.0;
      int count = 0;
      for (int y = ys[gy].first; y < ys[gy].second; ++y) {
        for (int x = xs[gx].first; x < xs[gx].second; ++x) {
          const double v = lum.at<double>(y, x);
          const double dx = x + 1 < w ? lum.at<double>(y, x + 1) - v : 0.0;
          const double dy = y + 1 < h ? lum.at<double>(y + 1, x) - v : 0.0;
          sum += v;
          sq += v * v;
          grad += dx * dx + dy * dy;
          ++count;
        }
      }
      const double mean = sum / count;
      const int row = gy * grid_ + gx;
      out(row, 0) = mean;
      out(row, 1) = std::max(0.0, sq / count - mean * mean);
      out(row, 2) = grad / count;
    }
  }
  return out;
}

}  // namespace rescap
