#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "seq2d/partition.hpp"

namespace seq2d {

/// Pure elementwise shape-preserving activation.
enum class Activation { identity, relu, tanh, sigmoid };

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

/// Derivative expressed through the activation output y = act(x).
/// All supported activations admit this form, so tapes only store outputs.
inline double activation_derivative_from_output(Activation a, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

template <typename Derived>
void activate_in_place(Activation a, Eigen::MatrixBase<Derived>& m) {
  if (a == Activation::identity) return;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = activate(a, m(r, c));
}

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

enum class CellKind { zero, scaled_identity, affine };

/// One entry f_{i,j} of a block grid.
///
/// Zero maps anything to the zero vector of the row dimension.
/// ScaledIdentity(c) maps z to c*z and requires a square grid slot:
/// c = 1 is the plain identity, other scales realize continuation parameters.
/// Affine evaluates act(W*z + b), with b treated as zero when absent.
class Cell {
public:
  Cell() = default;  // zero cell

  static Cell zero() { return Cell(); }

  static Cell scaled_identity(double scale) {
    Cell c;
    c.kind_ = CellKind::scaled_identity;
    c.scale_ = scale;
    return c;
  }

  static Cell affine(Mat weight, Vec bias, Activation act = Activation::identity) {
    if (bias.size() != weight.rows())
      throw std::invalid_argument("Cell: bias length must equal weight row count");
    Cell c;
    c.kind_ = CellKind::affine;
    c.weight_ = std::move(weight);
    c.bias_ = std::move(bias);
    c.has_bias_ = true;
    c.act_ = act;
    return c;
  }

  static Cell affine(Mat weight, Activation act = Activation::identity) {
    Cell c;
    c.kind_ = CellKind::affine;
    c.weight_ = std::move(weight);
    c.act_ = act;
    return c;
  }

  /// 1x1 affine cell z -> act(gain*z); convenient for scalar examples.
  static Cell scalar(double gain, Activation act = Activation::identity) {
    return affine(Mat::Constant(1, 1, gain), act);
  }

  CellKind kind() const { return kind_; }
  bool is_zero() const { return kind_ == CellKind::zero; }

  double scale() const {
    require(CellKind::scaled_identity);
    return scale_;
  }

  const Mat& weight() const {
    require(CellKind::affine);
    return weight_;
  }

  bool has_bias() const { return has_bias_; }

  const Vec& bias() const {
    require(CellKind::affine);
    return bias_;
  }

  Activation act() const {
    require(CellKind::affine);
    return act_;
  }

  /// True for cells that commute with linear combinations: Zero,
  /// ScaledIdentity, and bias-free Affine with identity activation.
  bool is_linear() const {
    switch (kind_) {
      case CellKind::zero:
      case CellKind::scaled_identity: return true;
      case CellKind::affine:
        return act_ == Activation::identity && (!has_bias_ || bias_.isZero(0.0));
    }
    return false;
  }

  /// Dense matrix realizing a linear cell on the given slot dimensions.
  Mat as_matrix(int out_dim, int in_dim) const {
    if (!is_linear()) throw std::invalid_argument("Cell: nonlinear cell has no matrix form");
    switch (kind_) {
      case CellKind::zero: return Mat::Zero(out_dim, in_dim);
      case CellKind::scaled_identity:
        if (out_dim != in_dim)
          throw std::invalid_argument("Cell: scaled identity requires a square slot");
        return scale_ * Mat::Identity(out_dim, in_dim);
      case CellKind::affine:
        if (weight_.rows() != out_dim || weight_.cols() != in_dim)
          throw std::invalid_argument("Cell: weight shape does not match slot");
        return weight_;
    }
    return Mat();
  }

  friend bool operator==(const Cell& a, const Cell& b) {
    if (a.kind_ != b.kind_) return false;
    switch (a.kind_) {
      case CellKind::zero: return true;
      case CellKind::scaled_identity: return a.scale_ == b.scale_;
      case CellKind::affine:
        if (a.act_ != b.act_ || a.has_bias_ != b.has_bias_) return false;
        if (a.weight_.rows() != b.weight_.rows() || a.weight_.cols() != b.weight_.cols())
          return false;
        if (a.weight_ != b.weight_) return false;
        return !a.has_bias_ || a.bias_ == b.bias_;
    }
    return false;
  }

private:
  void require(CellKind k) const {
    if (kind_ != k) throw std::logic_error("Cell: accessor does not match cell kind");
  }

  CellKind kind_ = CellKind::zero;
  double scale_ = 0.0;
  Mat weight_;
  Vec bias_;
  bool has_bias_ = false;
  Activation act_ = Activation::identity;
};

}  // namespace seq2d
