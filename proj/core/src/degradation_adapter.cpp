// SPDX-License-Identifier: Apache-2.0
#include "rescap/degradation_adapter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rescap/errors.hpp"
#include "rescap/ids.hpp"
#include "rescap/jsonl.hpp"

namespace rescap {
namespace {

std::string shape(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void expect_shape(std::string_view what, const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols)
    throw DimensionError(std::string(what) + ": expected " + shape(rows, cols) + ", got " +
                         shape(m.rows(), m.cols()));
}

void check_state(const AdapterState& s) {
  const auto& c = s.config;
  c.validate();
  const int nd = c.output_tokens * c.feature_dim;
  expect_shape("adapter w1", s.w1, c.feature_dim, c.hidden_dim);
  expect_shape("adapter w2", s.w2, c.hidden_dim, nd);
  if (s.b1.size() != c.hidden_dim || s.b2.size() != nd)
    throw DimensionError("adapter biases do not match the config");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

// Column means summed in sorted order, so the result is bit-identical for any
// row permutation of `features`.
Eigen::RowVectorXd sorted_column_mean(const Eigen::MatrixXd& features) {
  Eigen::RowVectorXd mean(features.cols());
  std::vector<double> column(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    for (Eigen::Index i = 0; i < features.rows(); ++i) column[static_cast<std::size_t>(i)] = features(i, j);
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (const double v : column) sum += v;
    mean(j) = sum / static_cast<double>(features.rows());
  }
  return mean;
}

struct Trace {
  Eigen::RowVectorXd pooled;
  Eigen::RowVectorXd pre;
  Eigen::RowVectorXd hidden;
  Eigen::RowVectorXd out;
};

Trace run_forward(const AdapterState& s, const Eigen::MatrixXd& features) {
  check_state(s);
  expect_shape("adapter features", features, s.config.input_tokens, s.config.feature_dim);
  Trace t;
  t.pooled = sorted_column_mean(features);
  t.pre = t.pooled * s.w1 + s.b1.transpose();
  t.hidden = t.pre.unaryExpr([&](double x) { return activate(s.config.activation, x); });
  t.out = t.hidden * s.w2 + s.b2.transpose();
  return t;
}

double uniform(Rng& rng, double bound) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * bound;
}

void write_le(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  std::array<char, 8> bytes;
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes.data(), 8);
}

double read_le(std::istream& in) {
  std::array<unsigned char, 8> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), 8))
    throw ParseError("payload", "adapter container is truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

template <typename M>
void write_matrix(std::ostream& out, const M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) write_le(out, m(r, c));
}

template <typename M>
void read_matrix(std::istream& in, M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_le(in);
}

AdapterConfig parse_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("header", "adapter container has no header");
  Json h;
  try {
    h = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw ParseError("header", std::string("adapter header is not JSON: ") + e.what());
  }
  for (const char* key : {"M", "d", "N", "h", "version"})
    if (!h.contains(key) || !h.at(key).is_number_integer())
      throw ParseError("header", std::string("adapter header lacks integer '") + key + "'");
  if (h.at("version").get<int>() != 1)
    throw MismatchError("unsupported adapter container version " + std::to_string(h.at("version").get<int>()));
  AdapterConfig c;
  c.input_tokens = h.at("M").get<int>();
  c.feature_dim = h.at("d").get<int>();
  c.output_tokens = h.at("N").get<int>();
  c.hidden_dim = h.at("h").get<int>();
  c.activation = parse_activation(h.value("activation", std::string("relu")));
  c.validate();
  return c;
}

AdapterState read_payload(std::istream& in, const AdapterConfig& c) {
  AdapterState s;
  s.config = c;
  s.w1.resize(c.feature_dim, c.hidden_dim);
  s.b1.resize(c.hidden_dim);
  s.w2.resize(c.hidden_dim, c.output_tokens * c.feature_dim);
  s.b2.resize(c.output_tokens * c.feature_dim);
  read_matrix(in, s.w1);
  read_matrix(in, s.b1);
  read_matrix(in, s.w2);
  read_matrix(in, s.b2);
  if (in.peek() != std::char_traits<char>::eof())
    throw ParseError("payload", "adapter container has trailing bytes");
  if (!s.all_finite()) throw ParseError("payload", "adapter container holds non-finite values");
  return s;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw InvalidInputError("unknown activation '" + std::string(name) + "'");
}

void AdapterConfig::validate() const {
  if (input_tokens < 1 || feature_dim < 1 || output_tokens < 1 || hidden_dim < 1)
    throw InvalidInputError("adapter dimensions must all be >= 1 (M=" + std::to_string(input_tokens) +
                            " d=" + std::to_string(feature_dim) + " N=" + std::to_string(output_tokens) +
                            " h=" + std::to_string(hidden_dim) + ")");
}

bool AdapterState::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

AdapterState init_adapter(const AdapterConfig& config, std::uint64_t seed) {
  config.validate();
  const int d = config.feature_dim;
  const int h = config.hidden_dim;
  const int nd = config.output_tokens * d;
  Rng rng(combine_seed({seed, 0x61646170ULL}));
  AdapterState s;
  s.config = config;
  const double s1 = std::sqrt(6.0 / (d + h));
  const double s2 = std::sqrt(6.0 / (h + nd));
  s.w1 = Eigen::MatrixXd::NullaryExpr(d, h, [&]() { return uniform(rng, s1); });
  s.w2 = Eigen::MatrixXd::NullaryExpr(h, nd, [&]() { return uniform(rng, s2); });
  s.b1 = Eigen::VectorXd::Zero(h);
  s.b2 = Eigen::VectorXd::Zero(nd);
  return s;
}

Eigen::MatrixXd adapter_forward(const AdapterState& state, const Eigen::MatrixXd& features) {
  const Trace t = run_forward(state, features);
  const int n = state.config.output_tokens;
  const int d = state.config.feature_dim;
  Eigen::MatrixXd out(n, d);
  for (int r = 0; r < n; ++r) out.row(r) = t.out.segment(r * d, d);
  return out;
}

AdapterGradients adapter_backward(const AdapterState& state, const Eigen::MatrixXd& features,
                                  const Eigen::MatrixXd& upstream) {
  const Trace t = run_forward(state, features);
  const auto& c = state.config;
  expect_shape("adapter upstream gradient", upstream, c.output_tokens, c.feature_dim);
  if (!upstream.allFinite()) throw InvalidInputError("adapter upstream gradient is not finite");

  Eigen::RowVectorXd g_out(c.output_tokens * c.feature_dim);
  for (int r = 0; r < c.output_tokens; ++r) g_out.segment(r * c.feature_dim, c.feature_dim) = upstream.row(r);

  AdapterGradients g;
  g.w2 = t.hidden.transpose() * g_out;
  g.b2 = g_out.transpose();
  const Eigen::RowVectorXd g_hidden = g_out * state.w2.transpose();
  const Eigen::RowVectorXd g_pre =
      g_hidden.cwiseProduct(t.pre.unaryExpr([&](double x) { return activate_grad(c.activation, x); }));
  g.w1 = t.pooled.transpose() * g_pre;
  g.b1 = g_pre.transpose();
  const Eigen::RowVectorXd g_pooled = g_pre * state.w1.transpose();
  g.features = g_pooled.replicate(c.input_tokens, 1) / static_cast<double>(c.input_tokens);
  return g;
}

Eigen::MatrixXd concat_visual_tokens(const Eigen::MatrixXd& base_tokens, const Eigen::MatrixXd& deg_tokens) {
  if (base_tokens.rows() == 0) return deg_tokens;
  if (base_tokens.cols() != deg_tokens.cols())
    throw DimensionError("concat_visual_tokens: feature dims differ (" + std::to_string(base_tokens.cols()) +
                         " vs " + std::to_string(deg_tokens.cols()) + ")");
  Eigen::MatrixXd out(base_tokens.rows() + deg_tokens.rows(), base_tokens.cols());
  out.topRows(base_tokens.rows()) = base_tokens;
  out.bottomRows(deg_tokens.rows()) = deg_tokens;
  return out;
}

AdapterState sgd_step(const AdapterState& state, const AdapterGradients& grads, double learning_rate) {
  AdapterState next = state;
  next.w1 -= learning_rate * grads.w1;
  next.b1 -= learning_rate * grads.b1;
  next.w2 -= learning_rate * grads.w2;
  next.b2 -= learning_rate * grads.b2;
  return next;
}

double mse_loss(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target, Eigen::MatrixXd* grad) {
  expect_shape("mse target", target, prediction.rows(), prediction.cols());
  const Eigen::MatrixXd diff = prediction - target;
  const double n = static_cast<double>(diff.size());
  if (grad) *grad = 2.0 * diff / n;
  return diff.squaredNorm() / n;
}

void save_adapter(std::ostream& out, const AdapterState& state) {
  check_state(state);
  const auto& c = state.config;
  const Json header{{"M", c.input_tokens}, {"d", c.feature_dim}, {"N", c.output_tokens},
                    {"h", c.hidden_dim}, {"version", 1}, {"activation", std::string(to_string(c.activation))}};
  out << header.dump() << '\n';
  write_matrix(out, state.w1);
  write_matrix(out, state.b1);
  write_matrix(out, state.w2);
  write_matrix(out, state.b2);
}

void save_adapter(const std::filesystem::path& path, const AdapterState& state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  save_adapter(out, state);
}

AdapterState load_adapter(std::istream& in, const AdapterConfig& expected) {
  const AdapterConfig found = parse_header(in);
  if (!(found == expected)) {
    throw MismatchError("adapter header (M=" + std::to_string(found.input_tokens) + " d=" +
                        std::to_string(found.feature_dim) + " N=" + std::to_string(found.output_tokens) +
                        " h=" + std::to_string(found.hidden_dim) + ") does not match the expected config (M=" +
                        std::to_string(expected.input_tokens) + " d=" + std::to_string(expected.feature_dim) +
                        " N=" + std::to_string(expected.output_tokens) + " h=" + std::to_string(expected.hidden_dim) + ")");
  }
  return read_payload(in, found);
}

AdapterState load_adapter(const std::filesystem::path& path, const AdapterConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_adapter(in, expected);
}

AdapterState load_adapter(std::istream& in) {
  const AdapterConfig found = parse_header(in);
  return read_payload(in, found);
}

}  // namespace rescap
