#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "fedkit/core/value.hpp"
#include "fedkit/experiment/stage_machine.hpp"
#include "fedkit/model/canonical.hpp"
#include "fedkit/model/units.hpp"
#include "fedkit/plant/factory.hpp"

namespace fedkit::plant {

/// Source id of samples written by stage entry actions.
inline constexpr std::string_view kStageSource = "stage";

struct OracleOptions {
  /// Integration steps per macro step.
  std::int64_t substeps{100};
  /// When set, route values and set_value arguments are converted between
  /// canonical units and samples carry the canonical unit symbol.
  const model::CanonicalModel* model{nullptr};
};

namespace detail {

/// y' = a y + o for converting a value of `from` into `to`.
inline std::pair<double, double> unit_affine(const model::CanonicalModel* m, const std::string& from_topic,
                                             const std::string& to_topic) {
  if (!m) return {1.0, 0.0};
  const auto* a = m->find_entry(from_topic);
  const auto* b = m->find_entry(to_topic);
  if (!a || !b || a->unit == b->unit) return {1.0, 0.0};
  const auto* ua = m->find_unit(a->unit);
  const auto* ub = m->find_unit(b->unit);
  if (!ua || !ub) return {1.0, 0.0};
  const double o = model::convert(0.0, *ua, *ub);
  return {model::convert(1.0, *ua, *ub) - o, o};
}

inline double setpoint_value(const model::CanonicalModel* m, const Command& c) {
  const double v = c.args.at("value").get<double>();
  if (!m || !c.args.contains("unit")) return v;
  const auto* e = m->find_entry(c.args.at("topic").get<std::string>());
  if (!e) return v;
  const auto* from = m->find_unit(c.args.at("unit").get<std::string>());
  const auto* to = m->find_unit(e->unit);
  if (!from || !to) return v;
  return model::convert(v, *from, *to);
}

}  // namespace detail

/// Solves the whole federation as one LTI system without communication
/// delay. Samples every offered topic on the macro grid and records stage
/// set_value actions the way the co-simulation runners do.
inline std::vector<SignalSample> monolithic_oracle(const experiment::ExperimentDescription& exp,
                                                   const OracleOptions& opt = {}) {
  using Eigen::Index;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  if (opt.substeps < 1) fail(ErrorCode::InvalidArgument, "oracle: substeps must be >= 1");

  struct Block {
    std::unique_ptr<Participant> p;
    LinearSystem sys;
    const LinearParticipant* lin{nullptr};
    Index x0, u0, y0;
  };
  std::vector<Block> blocks;
  Index nx = 0, nu = 0, ny = 0;
  for (const auto& d : exp.participants) {
    if (d.kind == experiment::DomainKind::hil_realtime || d.external)
      fail(ErrorCode::UnsupportedTopology, "oracle: participant '" + d.id + "' is hardware or external");
    auto p = make_participant(d, exp.seed);
    auto lm = p->linear_model();
    if (!lm) fail(ErrorCode::UnsupportedTopology, "oracle: participant '" + d.id + "' has no linear model");
    Block b{std::move(p), std::move(*lm), nullptr, nx, nu, ny};
    b.lin = dynamic_cast<const LinearParticipant*>(b.p.get());
    nx += b.sys.states();
    nu += static_cast<Index>(b.sys.inputs.size());
    ny += static_cast<Index>(b.sys.outputs.size());
    blocks.push_back(std::move(b));
  }

  MatrixXd A = MatrixXd::Zero(nx, nx), B = MatrixXd::Zero(nx, nu), C = MatrixXd::Zero(ny, nx),
           D = MatrixXd::Zero(ny, nu), M = MatrixXd::Zero(nu, ny);
  VectorXd X(nx), mo = VectorXd::Zero(nu);
  std::map<std::string, std::vector<Index>> input_slots;  // external input topic -> rows of U
  std::vector<bool> routed(static_cast<std::size_t>(nu), false);
  auto find_block = [&](const std::string& id) -> Block& {
    for (auto& b : blocks)
      if (b.p->id() == id) return b;
    fail(ErrorCode::UnsupportedTopology, "oracle: unknown participant '" + id + "'");
  };
  auto slot = [](const std::vector<std::string>& names, const std::string& t) -> std::optional<Index> {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == t) return static_cast<Index>(i);
    return std::nullopt;
  };

  for (const auto& b : blocks) {
    const auto n = b.sys.states(), m = static_cast<Index>(b.sys.inputs.size()),
               q = static_cast<Index>(b.sys.outputs.size());
    A.block(b.x0, b.x0, n, n) = b.sys.A;
    B.block(b.x0, b.u0, n, m) = b.sys.B;
    C.block(b.y0, b.x0, q, n) = b.sys.C;
    D.block(b.y0, b.u0, q, m) = b.sys.D;
    X.segment(b.x0, n) = b.sys.x0;
  }
  for (const auto& r : exp.routes) {
    auto& src = find_block(r.from.participant);
    auto& dst = find_block(r.to.participant);
    const auto yi = slot(src.sys.outputs, r.from.topic);
    const auto ui = slot(dst.sys.inputs, r.to.topic);
    if (!yi || !ui) continue;  // topic not used by the model
    const auto [gain, offset] = detail::unit_affine(opt.model, r.from.topic, r.to.topic);
    M(dst.u0 + *ui, src.y0 + *yi) = gain;
    mo(dst.u0 + *ui) = offset;
    routed[static_cast<std::size_t>(dst.u0 + *ui)] = true;
  }
  VectorXd r = VectorXd::Zero(nu);  // values of unrouted inputs
  for (const auto& b : blocks)
    for (std::size_t i = 0; i < b.sys.inputs.size(); ++i) {
      const Index row = b.u0 + static_cast<Index>(i);
      if (routed[static_cast<std::size_t>(row)]) continue;
      input_slots[b.sys.inputs[i]].push_back(row);
      r(row) = b.p->descriptor().default_for(b.sys.inputs[i]);
    }

  // Y = K (C X + D (r + mo) + F),  U = M Y + r + mo
  const MatrixXd loop = MatrixXd::Identity(ny, ny) - D * M;
  Eigen::FullPivLU<MatrixXd> lu(loop);
  if (!lu.isInvertible()) fail(ErrorCode::UnsupportedTopology, "oracle: algebraic loop is singular");
  const MatrixXd K = lu.inverse();
  const MatrixXd Abar = A + B * M * K * C;

  auto affine = [&](SimTime t) {
    VectorXd E(nx), F(ny);
    for (const auto& b : blocks) {
      if (b.lin) {
        auto [e, f] = b.lin->affine_at(t);
        E.segment(b.x0, b.sys.states()) = e;
        F.segment(b.y0, static_cast<Index>(b.sys.outputs.size())) = f;
      } else {
        E.segment(b.x0, b.sys.states()) = b.sys.e;
        F.segment(b.y0, static_cast<Index>(b.sys.outputs.size())) = b.sys.f;
      }
    }
    return std::pair{E, F};
  };
  auto outputs = [&](const VectorXd& x, const VectorXd& ext, SimTime t) {
    const VectorXd F = affine(t).second;
    return VectorXd(K * (C * x + D * ext + F));
  };

  const SimTime h = exp.macro_step / opt.substeps;
  if (h * opt.substeps != exp.macro_step) fail(ErrorCode::InvalidArgument, "oracle: substeps must divide macro_step");
  MatrixXd Phi = MatrixXd::Identity(nx, nx), Gamma = MatrixXd::Zero(nx, nx);
  if (nx > 0) {
    MatrixXd aug = MatrixXd::Zero(2 * nx, 2 * nx);
    aug.topLeftCorner(nx, nx) = Abar * seconds(h);
    aug.topRightCorner(nx, nx) = MatrixXd::Identity(nx, nx) * seconds(h);
    const MatrixXd ex = aug.exp();
    Phi = ex.topLeftCorner(nx, nx);
    Gamma = ex.topRightCorner(nx, nx);
  }

  auto unit_of = [&](const std::string& topic) -> std::string {
    if (!opt.model) return "";
    const auto* e = opt.model->find_entry(topic);
    return e ? e->unit : "";
  };

  experiment::StageMachine stages = experiment::StageMachine::for_experiment(exp);
  experiment::Observations obs;
  std::vector<SignalSample> trace;
  std::map<std::string, std::uint64_t> seq;
  const auto rounds = exp.rounds();
  for (std::int64_t k = 0; k <= rounds; ++k) {
    const SimTime t = k * exp.macro_step;
    const VectorXd ext = r + mo;
    const VectorXd Y = outputs(X, ext, t);
    for (const auto& b : blocks)
      for (std::size_t i = 0; i < b.sys.outputs.size(); ++i) {
        const auto& topic = b.sys.outputs[i];
        const double v = Y(b.y0 + static_cast<Index>(i));
        trace.push_back({topic, t, v, unit_of(topic), Quality::good, b.p->id(), seq[b.p->id() + "/" + topic]++});
        obs[topic] = v;
      }
    for (const auto& [topic, rows] : input_slots)
      if (!obs.count(topic)) obs[topic] = r(rows.front());

    for (const auto& c : stages.step(obs, t).actions) {
      if (c.kind != CommandKind::set_value) continue;
      const auto topic = c.args.at("topic").get<std::string>();
      const double v = detail::setpoint_value(opt.model, c);
      if (auto it = input_slots.find(topic); it != input_slots.end())
        for (auto row : it->second) r(row) = v;
      obs[topic] = v;
      trace.push_back({topic, t, v, unit_of(topic), Quality::good, std::string(kStageSource),
                       seq[std::string(kStageSource) + "/" + topic]++});
    }
    if (k == rounds) break;

    const VectorXd ext2 = r + mo;
    for (std::int64_t s = 0; s < opt.substeps && nx > 0; ++s) {
      const SimTime mid = t + s * h + h / 2;
      const auto [E, F] = affine(mid);
      const VectorXd w = B * (M * K * (D * ext2 + F) + ext2) + E;
      X = Phi * X + Gamma * w;
      check_finite(X, "oracle");
    }
  }
  return trace;
}

}  // namespace fedkit::plant
