// Regime-classified entry point: closed form when one constraint dominates,
// dual solver otherwise.
#pragma once

#include "isac/closed_form.hpp"
#include "isac/general_solver.hpp"

namespace isac {

IsacSolution solve(const SystemParams& params, const CommChannel& channel,
                   const QosTargets& targets);

}  // namespace isac
