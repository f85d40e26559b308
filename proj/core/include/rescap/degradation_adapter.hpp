// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>

#include <Eigen/Core>

#include "rescap/image.hpp"

namespace rescap {

/// Degradation-token counts studied for the adapter; 36 is the default.
inline constexpr int kAdapterTokenSweep[] = {4, 9, 16, 25, 36};

enum class Activation { relu, tanh, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct AdapterConfig {
  int input_tokens = 16;  // M
  int feature_dim = 3;    // d
  int output_tokens = 36; // N
  int hidden_dim = 64;    // h
  Activation activation = Activation::relu;

  void validate() const;
  bool operator==(const AdapterConfig&) const = default;
};

/// Parameters of the compress-then-expand MLP. Row-vector convention:
/// hidden = act(mean_rows(features) * w1 + b1), out = hidden * w2 + b2.
struct AdapterState {
  AdapterConfig config;
  Eigen::MatrixXd w1;  // d x h
  Eigen::VectorXd b1;  // h
  Eigen::MatrixXd w2;  // h x (N*d)
  Eigen::VectorXd b2;  // N*d

  bool all_finite() const;
};

struct AdapterGradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
  Eigen::MatrixXd features;  // M x d
};

/// Glorot-uniform weights in [-s, s], s = sqrt(6 / (fan_in + fan_out)); zero biases.
AdapterState init_adapter(const AdapterConfig& config, std::uint64_t seed);

/// Mean-pools the M tokens to one, runs the MLP, reshapes to N x d.
/// Invariant to row permutations of `features`.
Eigen::MatrixXd adapter_forward(const AdapterState& state, const Eigen::MatrixXd& features);

/// Exact gradients of <adapter_forward(state, features), upstream> with
/// respect to every parameter and to the input features.
AdapterGradients adapter_backward(const AdapterState& state, const Eigen::MatrixXd& features,
                                  const Eigen::MatrixXd& upstream);

/// Appends the degradation tokens after the visual tokens: rows [B, B+N) of
/// the result are `deg_tokens`.
Eigen::MatrixXd concat_visual_tokens(const Eigen::MatrixXd& base_tokens,
                                     const Eigen::MatrixXd& deg_tokens);

/// One plain gradient-descent step; returns the updated state.
AdapterState sgd_step(const AdapterState& state, const AdapterGradients& grads, double learning_rate);

/// Mean squared error and its gradient with respect to `prediction`.
double mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target,
                Eigen::MatrixXd* grad = nullptr);

// Binary container: one JSON header line {"M","d","N","h","version","activation"}
// terminated by '\n', then w1, b1, w2, b2 as little-endian float64, matrices row-major.
void save_adapter(std::ostream& out, const AdapterState& state);
void save_adapter(const std::filesystem::path& path, const AdapterState& state);
/// Throws MismatchError if the header disagrees with `expected`, ParseError on
/// a malformed container.
AdapterState load_adapter(std::istream& in, const AdapterConfig& expected);
AdapterState load_adapter(const std::filesystem::path& path, const AdapterConfig& expected);
/// Reads the config from the header without checking it against anything.
AdapterState load_adapter(std::istream& in);

/// Image -> M x d degradation features.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual int tokens() const = 0;
  virtual int feature_dim() const = 0;
  virtual Eigen::MatrixXd features(const Image& image) const = 0;
};

/// Splits the luminance into a grid x grid lattice of patches and reports
/// per-patch mean, variance and mean squared gradient (d = 3, M = grid^2).
class PatchStatsProvider final : public FeatureProvider {
 public:
  explicit PatchStatsProvider(int grid = 4);
  int tokens() const override { return grid_ * grid_; }
  int feature_dim() const override { return 3; }
  Eigen::MatrixXd features(const Image& image) const override;

 private:
  int grid_;
};

}  // namespace rescap
