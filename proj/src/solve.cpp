#include "isac/solve.hpp"

namespace isac {

IsacSolution solve(const SystemParams& params, const CommChannel& channel,
                   const QosTargets& targets) {
  const Classified cls = classify_regime(params, channel, targets);
  if (cls.regime == Regime::General) {
    return solve_general(params, channel, targets);
  }
  return cls.solution;
}

}  // namespace isac
