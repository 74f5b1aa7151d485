#pragma once

#include "fedkit/plant/model_config.hpp"
#include "fedkit/plant/participant.hpp"

namespace fedkit::plant {

/// u = kp (ref - y) + x,  x' = ki (ref - y). The reference is the `ref`
/// input when bound, else the constant `ref` parameter.
struct PiGains {
  double kp{0.0};
  double ki{0.0};
  double ref{0.0};
  double x0{0.0};
};

inline LinearSystem pi_system(const PiGains& g, bool ref_input) {
  std::vector<std::string> in{"measure"};
  if (ref_input) in.push_back("ref");
  auto s = LinearSystem::zeros(1, in, {"output"});
  s.B(0, 0) = -g.ki;
  s.D(0, 0) = -g.kp;
  if (ref_input) {
    s.B(0, 1) = g.ki;
    s.D(0, 1) = g.kp;
  } else {
    s.e(0) = g.ki * g.ref;
    s.f(0) = g.kp * g.ref;
  }
  s.C(0, 0) = 1.0;
  s.x0(0) = g.x0;
  return s;
}

class PiControllerParticipant final : public LinearParticipant {
 public:
  using LinearParticipant::LinearParticipant;

  static std::unique_ptr<Participant> create(const experiment::ParticipantDescriptor& d) {
    ModelReader r(d);
    PiGains g;
    g.kp = r.number("kp", 0.0);
    g.ki = r.number("ki", 0.0);
    g.ref = r.number("ref", 0.0);
    g.x0 = r.number("x0", 0.0);
    const auto measure = r.input("measure");
    const auto ref = r.input("ref");
    const auto out = r.output("output");
    r.finish();
    if (!measure) fail(ErrorCode::SchemaError, "participants." + d.id + ".model: no topic bound to 'measure'");
    std::vector<std::optional<std::string>> in{measure};
    if (ref) in.push_back(ref);
    return std::make_unique<PiControllerParticipant>(d, bind_ports(pi_system(g, ref.has_value()), in, {out}));
  }
};

namespace detail {
inline Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& where) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  if (j.is_null()) return m;
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    fail(ErrorCode::SchemaError, "bad-shape " + where + ": expected " + std::to_string(rows) + " rows");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      fail(ErrorCode::SchemaError, "bad-shape " + where + ": expected " + std::to_string(cols) + " columns");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = ObjectReader::convert<double>(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const Json& j, Eigen::Index n, const std::string& where) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  if (j.is_null()) return v;
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    fail(ErrorCode::SchemaError, "bad-shape " + where + ": expected " + std::to_string(n) + " entries");
  for (Eigen::Index i = 0; i < n; ++i) v(i) = ObjectReader::convert<double>(j[static_cast<std::size_t>(i)], where);
  return v;
}
}  // namespace detail

/// Generic LTI participant. `inputs`/`outputs` list topics in matrix order.
class StateSpaceParticipant final : public LinearParticipant {
 public:
  using LinearParticipant::LinearParticipant;

  static std::unique_ptr<Participant> create(const experiment::ParticipantDescriptor& d) {
    ModelReader r(d);
    auto& p = r.params();
    const auto in = p.optional<std::vector<std::string>>("inputs", {});
    const auto out = p.optional<std::vector<std::string>>("outputs", {});
    const Json* a = p.raw_optional("A");
    const Eigen::Index n = a && a->is_array() ? static_cast<Eigen::Index>(a->size()) : 0;
    const auto m = static_cast<Eigen::Index>(in.size()), q = static_cast<Eigen::Index>(out.size());
    auto get = [&](const char* k) { const Json* j = p.raw_optional(k); return j ? *j : Json(); };
    LinearSystem s;
    s.A = detail::matrix_from_json(a ? *a : Json(), n, n, p.at("A"));
    s.B = detail::matrix_from_json(get("B"), n, m, p.at("B"));
    s.C = detail::matrix_from_json(get("C"), q, n, p.at("C"));
    s.D = detail::matrix_from_json(get("D"), q, m, p.at("D"));
    s.e = detail::vector_from_json(get("e"), n, p.at("e"));
    s.f = detail::vector_from_json(get("f"), q, p.at("f"));
    s.x0 = detail::vector_from_json(get("x0"), n, p.at("x0"));
    s.inputs = in;
    s.outputs = out;
    r.finish(false);
    for (const auto& t : in)
      if (!d.requires_topic(t)) fail(ErrorCode::SchemaError, p.at("inputs") + ": '" + t + "' is not declared in requires");
    for (const auto& t : d.offers)
      if (std::find(out.begin(), out.end(), t) == out.end())
        fail(ErrorCode::SchemaError, p.location() + ": offered topic '" + t + "' is not produced by the model");
    for (const auto& t : out)
      if (!d.offers_topic(t)) fail(ErrorCode::SchemaError, p.at("outputs") + ": '" + t + "' is not declared in offers");
    return std::make_unique<StateSpaceParticipant>(d, std::move(s));
  }
};

}  // namespace fedkit::plant
