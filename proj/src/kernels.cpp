#include "ccnn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ccnn::kernels {

namespace {

int resolve_thread_count() {
#ifdef _OPENMP
  int threads = omp_get_max_threads();
  if (const char* env = std::getenv("CCNN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) threads = cap;
  }
  return std::max(1, threads);
#else
  return 1;
#endif
}

Exec g_default_exec = Exec::Parallel;

}  // namespace

int thread_count() {
  static const int count = resolve_thread_count();
  return count;
}

Exec default_exec() { return g_default_exec; }
void set_default_exec(Exec exec) { g_default_exec = exec; }

void for_rows(std::size_t count, Exec exec, const std::function<void(std::size_t)>& fn) {
#ifdef _OPENMP
  if (exec == Exec::Parallel && count > 1) {
    const long long total = static_cast<long long>(count);
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (long long i = 0; i < total; ++i) fn(static_cast<std::size_t>(i));
    return;
  }
#else
  (void)exec;
#endif
  for (std::size_t i = 0; i < count; ++i) fn(i);
}

void softmax_rows(std::size_t n, std::size_t m, const double* scores, const double* bias,
                  double* probs, double* row_lse, Exec exec) {
  for_rows(n, exec, [&](std::size_t i) {
    const double* s = scores + i * m;
    const double* b = bias ? bias + i * m : nullptr;
    double* p = probs + i * m;

    double shift = s[0] + (b ? b[0] : 0.0);
    for (std::size_t l = 1; l < m; ++l)
      shift = std::max(shift, s[l] + (b ? b[l] : 0.0));

    double z = 0.0;
    for (std::size_t l = 0; l < m; ++l) {
      p[l] = std::exp(s[l] + (b ? b[l] : 0.0) - shift);
      z += p[l];
    }
    const double inv = 1.0 / z;
    for (std::size_t l = 0; l < m; ++l) p[l] *= inv;
    if (row_lse) row_lse[i] = shift + std::log(z);
  });
}

double cross_entropy(std::size_t n, std::size_t m, const double* p, const double* q, Exec exec) {
  std::vector<double> partial(n);
  for_rows(n, exec, [&](std::size_t i) {
    const double* pr = p + i * m;
    const double* qr = q + i * m;
    double acc = 0.0;
    for (std::size_t l = 0; l < m; ++l)
      if (pr[l] > 0.0) acc -= pr[l] * std::log(qr[l]);
    partial[i] = acc;
  });
  return fixed_order_sum(partial.data(), n);
}

double entropy(std::size_t n, std::size_t m, const double* p, Exec exec) {
  std::vector<double> partial(n);
  for_rows(n, exec, [&](std::size_t i) {
    const double* pr = p + i * m;
    double acc = 0.0;
    for (std::size_t l = 0; l < m; ++l)
      if (pr[l] > 0.0) acc -= pr[l] * std::log(pr[l]);
    partial[i] = acc;
  });
  return fixed_order_sum(partial.data(), n);
}

void subtract(std::size_t count, const double* a, const double* b, double* out, Exec exec) {
  // chunked so the parallel grain is rows of work, not single entries
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  for_rows(chunks, exec, [&](std::size_t c) {
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(count, lo + kChunk);
    for (std::size_t i = lo; i < hi; ++i) out[i] = a[i] - b[i];
  });
}

double fixed_order_sum(const double* v, std::size_t count) {
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) sum += v[i];
  return sum;
}

}  // namespace ccnn::kernels
