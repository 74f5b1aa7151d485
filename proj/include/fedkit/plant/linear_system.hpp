#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedkit/core/error.hpp"

namespace fedkit::plant {

/// x' = A x + B u + e,  y = C x + D u + f
struct LinearSystem {
  Eigen::MatrixXd A, B, C, D;
  Eigen::VectorXd e, f, x0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  Eigen::Index states() const { return A.rows(); }

  void check() const {
    const auto n = A.rows(), m = static_cast<Eigen::Index>(inputs.size()),
               p = static_cast<Eigen::Index>(outputs.size());
    const bool ok = A.cols() == n && B.rows() == n && B.cols() == m && C.rows() == p && C.cols() == n &&
                    D.rows() == p && D.cols() == m && e.size() == n && f.size() == p && x0.size() == n;
    if (!ok) fail(ErrorCode::ConfigError, "state-space dimensions inconsistent");
  }

  static LinearSystem zeros(Eigen::Index n, std::vector<std::string> in, std::vector<std::string> out) {
    const auto m = static_cast<Eigen::Index>(in.size()), p = static_cast<Eigen::Index>(out.size());
    LinearSystem s;
    s.A = Eigen::MatrixXd::Zero(n, n);
    s.B = Eigen::MatrixXd::Zero(n, m);
    s.C = Eigen::MatrixXd::Zero(p, n);
    s.D = Eigen::MatrixXd::Zero(p, m);
    s.e = Eigen::VectorXd::Zero(n);
    s.f = Eigen::VectorXd::Zero(p);
    s.x0 = Eigen::VectorXd::Zero(n);
    s.inputs = std::move(in);
    s.outputs = std::move(out);
    return s;
  }
};

/// Keeps the inputs/outputs whose role is bound to a topic, renamed to that topic.
inline LinearSystem bind_ports(const LinearSystem& full, const std::vector<std::optional<std::string>>& in_topics,
                               const std::vector<std::optional<std::string>>& out_topics) {
  std::vector<Eigen::Index> ic, oc;
  LinearSystem s;
  for (std::size_t i = 0; i < in_topics.size(); ++i)
    if (in_topics[i]) {
      ic.push_back(static_cast<Eigen::Index>(i));
      s.inputs.push_back(*in_topics[i]);
    }
  for (std::size_t i = 0; i < out_topics.size(); ++i)
    if (out_topics[i]) {
      oc.push_back(static_cast<Eigen::Index>(i));
      s.outputs.push_back(*out_topics[i]);
    }
  s.A = full.A;
  s.e = full.e;
  s.x0 = full.x0;
  s.B = full.B(Eigen::all, ic);
  s.C = full.C(oc, Eigen::all);
  s.D = full.D(oc, ic);
  s.f = full.f(oc);
  return s;
}

inline constexpr double kOverflowLimit = 1e12;

inline void check_finite(const Eigen::VectorXd& v, const std::string& who) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]) || std::abs(v[i]) > kOverflowLimit)
      fail(ErrorCode::NumericalOverflow, who + ": state magnitude exceeds 1e12");
}

/// Trapezoidal rule for a fixed step h:
/// (I - h/2 A) x1 = (I + h/2 A) x0 + h/2 B (u0 + u1) + h/2 (e0 + e1)
class TrapezoidStepper {
 public:
  TrapezoidStepper() = default;
  TrapezoidStepper(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double h) : B_(B), h_(h) {
    const auto n = A.rows();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    lhs_ = Eigen::PartialPivLU<Eigen::MatrixXd>(I - 0.5 * h * A);
    rhs_ = I + 0.5 * h * A;
  }

  double h() const { return h_; }

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u0, const Eigen::VectorXd& u1,
                       const Eigen::VectorXd& e0, const Eigen::VectorXd& e1) const {
    if (x.size() == 0) return x;
    const Eigen::VectorXd b = rhs_ * x + 0.5 * h_ * (B_ * (u0 + u1)) + 0.5 * h_ * (e0 + e1);
    return lhs_.solve(b);
  }

 private:
  Eigen::PartialPivLU<Eigen::MatrixXd> lhs_;
  Eigen::MatrixXd rhs_, B_;
  double h_{0.0};
};

}  // namespace fedkit::plant
