#pragma once

#include <array>
#include <bitset>
#include <optional>
#include <string>
#include <utility>

#include "zoomcount/core.hpp"

namespace zoomcount {

// Rule-Set Engine. Rules 1-4 select ZoomOut and are tested before rules 5-8,
// which select ZoomIn; if nothing fires the image is Normal. Percentage
// thresholds are compared by integer cross-multiplication so the truth table
// has no floating-point boundary cases.

enum class Rule : std::uint8_t { R1 = 1, R2, R3, R4, R5, R6, R7, R8 };

inline std::string to_token(Rule r) { return "R" + std::to_string(static_cast<int>(r)); }

inline Rule parse_rule(std::string_view s) {
  if (s.size() == 2 && (s[0] == 'R' || s[0] == 'r') && s[1] >= '1' && s[1] <= '8')
    return static_cast<Rule>(s[1] - '0');
  throw ParseError("unknown rule '" + std::string(s) + "' (expected R1..R8)");
}

struct RuleMask {
  std::bitset<8> disabled;  // bit i <-> rule R(i+1)
  bool zoom_in_enabled = true;
  bool zoom_out_enabled = true;

  static RuleMask all() { return {}; }

  bool enabled(Rule r) const { return !disabled.test(static_cast<int>(r) - 1); }
  RuleMask& disable(Rule r) {
    disabled.set(static_cast<int>(r) - 1);
    return *this;
  }

  /// Block-level ablation: a disabled block turns its route into Normal.
  RouteLabel gate(RouteLabel route) const {
    if (route == RouteLabel::ZoomIn && !zoom_in_enabled) return RouteLabel::Normal;
    if (route == RouteLabel::ZoomOut && !zoom_out_enabled) return RouteLabel::Normal;
    return route;
  }

  friend bool operator==(const RuleMask&, const RuleMask&) = default;
};

struct RseDecision {
  RouteLabel route = RouteLabel::Normal;
  std::optional<Rule> fired_rule;  // absent when the result is Normal

  friend bool operator==(const RseDecision&, const RseDecision&) = default;
};

/// Raw truth value of one rule against a tally.
inline bool rule_holds(Rule rule, const PatchClassCounts& p) {
  const std::int64_t nc = p.nc(), lc = p.lc(), mc = p.mc(), hc = p.hc(), all = p.all();
  switch (rule) {
    case Rule::R1: return hc + mc == 0;
    case Rule::R2: return hc == 0 && lc > 0;
    case Rule::R3: return 100 * lc > 50 * all;
    case Rule::R4: return nc > 0 && 100 * hc <= 5 * all;
    case Rule::R5: return lc + mc == 0;
    case Rule::R6: return lc + hc == 0;
    case Rule::R7: return 100 * hc > 50 * all;
    case Rule::R8: return nc > 0 && 100 * mc >= 33 * all && 100 * hc >= 33 * all;
  }
  return false;
}

inline RseDecision rse_decide(const PatchClassCounts& pcc, const RuleMask& mask = {}) {
  if (pcc.all() <= 0) throw Error("empty image: no patches");
  constexpr std::array<std::pair<RouteLabel, std::array<Rule, 4>>, 2> kBlocks = {{
      {RouteLabel::ZoomOut, {Rule::R1, Rule::R2, Rule::R3, Rule::R4}},
      {RouteLabel::ZoomIn, {Rule::R5, Rule::R6, Rule::R7, Rule::R8}},
  }};
  for (const auto& [route, rules] : kBlocks) {
    for (Rule r : rules) {
      if (mask.enabled(r) && rule_holds(r, pcc)) {
        const RouteLabel gated = mask.gate(route);
        if (gated == RouteLabel::Normal) return {};
        return {gated, r};
      }
    }
  }
  return {};
}

}  // namespace zoomcount
