#pragma once

#include <string>
#include <vector>

#include "fedkit/core/error.hpp"

namespace fedkit::model {

/// A unit expressed as an affine map onto its base unit:
/// value_in_base = value * scale + offset.
struct UnitDef {
  std::string symbol;
  std::string base_symbol;
  double scale{1.0};
  double offset{0.0};

  bool is_base() const { return symbol == base_symbol; }
  double to_base(double v) const { return v * scale + offset; }
  double from_base(double b) const { return (b - offset) / scale; }

  friend bool operator==(const UnitDef&, const UnitDef&) = default;
};

inline bool convertible(const UnitDef& a, const UnitDef& b) { return a.base_symbol == b.base_symbol; }

/// Converts `value` from unit `from` into unit `to`.
inline double convert(double value, const UnitDef& from, const UnitDef& to) {
  if (!convertible(from, to))
    fail(ErrorCode::IncompatibleUnit, from.symbol + " -> " + to.symbol + " (base " +
                                          from.base_symbol + " vs " + to.base_symbol + ")");
  if (from.symbol == to.symbol) return value;
  if (from.offset == 0.0 && to.offset == 0.0) {
    // Pure scale: one multiply and one divide keeps round trips within an ulp.
    return value * from.scale / to.scale;
  }
  return to.from_base(from.to_base(value));
}

inline const UnitDef* find_unit(const std::vector<UnitDef>& units, const std::string& symbol) {
  for (const auto& u : units)
    if (u.symbol == symbol) return &u;
  return nullptr;
}

}  // namespace fedkit::model
