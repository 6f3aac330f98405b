// Comparison schemes evaluated under the same constraint semantics as the
// optimal solver: isotropic (power and duration searched), scaled
// communications design, shortest-burst sensing design, always-on.
#pragma once

#include "isac/model.hpp"
#include "isac/types.hpp"

namespace isac {

enum class Scheme { Isotropic, CommBased, SensingBased, AlwaysOn };

const char* to_string(Scheme s);

struct BenchmarkResult {
  Scheme scheme = Scheme::Isotropic;
  MatrixXcd q;
  double tau_s = 0.0;
  double energy_j = 0.0;
  double rate_achieved = 0.0;
  double crb_achieved = 0.0;
  bool feasible = false;
  double alpha = 0.0;  // CRB scaling factor (CommBased only)
  double p_w = 0.0;    // per-antenna power (Isotropic / SensingBased only)
  std::string note;    // reason when not feasible/applicable
};

// Q = p I with p the binding power at each duration, duration searched by
// golden section with a grid safeguard.
BenchmarkResult bench_isotropic(const SystemParams& params,
                                const CommChannel& channel,
                                const QosTargets& targets);

// Communications-dominated covariance scaled up to meet the CRB ceiling;
// only applicable on full-rank channels.
BenchmarkResult bench_comm_based(const SystemParams& params,
                                 const CommChannel& channel,
                                 const QosTargets& targets);

// Shortest burst, isotropic, power set by the binding constraint.
BenchmarkResult bench_sensing_based(const SystemParams& params,
                                    const CommChannel& channel,
                                    const QosTargets& targets);

// Full solve pipeline with the on-duration pinned to the whole block.
BenchmarkResult bench_always_on(const SystemParams& params,
                                const CommChannel& channel,
                                const QosTargets& targets);

BenchmarkResult run_benchmark(Scheme s, const SystemParams& params,
                              const CommChannel& channel,
                              const QosTargets& targets);

}  // namespace isac
