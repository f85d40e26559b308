// SPDX-License-Identifier: Apache-2.0
// Private bridge between rescap::Image and cv::Mat.
#pragma once

#include <opencv2/core.hpp>

#include "rescap/image.hpp"

namespace rescap {

cv::Mat to_mat(const Image& image);
Image from_mat(const cv::Mat& mat);
/// Luminance as CV_64F on a 0-255 scale.
cv::Mat to_gray_float(const Image& image);

}  // namespace rescap
