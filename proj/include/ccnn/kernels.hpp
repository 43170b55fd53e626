#pragma once

#include <cstddef>
#include <functional>

namespace ccnn::kernels {

/// Execution policy for the row-parallel kernels. Parallel runs the loop
/// body under OpenMP; Serial is the reference path used by the equivalence
/// tests and the benchmark. Both orders every floating-point reduction
/// identically, so results are bitwise equal.
enum class Exec { Serial, Parallel };

/// Threads used by the Parallel policy: omp_get_max_threads(), capped by
/// the CCNN_THREADS environment variable when set (values above the core
/// count are honored, which the tests use to force real concurrency).
int thread_count();

Exec default_exec();
void set_default_exec(Exec exec);

/// Runs fn(i) for every i in [0, count). Under Parallel the iterations are
/// distributed across OpenMP threads; fn must write only to row-i state.
void for_rows(std::size_t count, Exec exec, const std::function<void(std::size_t)>& fn);

/// probs[i,l] = exp(scores[i,l] + bias[i,l] - c_i) / Z_i with the max-shift
/// c_i = max_l (scores[i,l] + bias[i,l]). bias may be null (plain softmax).
/// When row_lse is non-null it receives log Z_i + c_i, the per-row
/// log-sum-exp of the biased scores.
void softmax_rows(std::size_t n, std::size_t m, const double* scores, const double* bias,
                  double* probs, double* row_lse, Exec exec);

/// Per-row -sum_l p log q partials, summed in fixed row order.
/// Uses the 0 * log 0 = 0 convention on p.
double cross_entropy(std::size_t n, std::size_t m, const double* p, const double* q, Exec exec);

/// Per-row -sum_l p log p partials, summed in fixed row order.
double entropy(std::size_t n, std::size_t m, const double* p, Exec exec);

/// out = a - b, elementwise over count entries.
void subtract(std::size_t count, const double* a, const double* b, double* out, Exec exec);

/// Serial left-to-right sum; the deterministic final stage of every
/// parallel reduction.
double fixed_order_sum(const double* v, std::size_t count);

}  // namespace ccnn::kernels
