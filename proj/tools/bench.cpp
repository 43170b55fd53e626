// Benchmark comparing the serial reference kernels against the OpenMP
// paths, plus an end-to-end dual solve at a size where the row-parallel
// work dominates. Prints a fixed-width table; wall times via steady_clock.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "ccnn/constraints.hpp"
#include "ccnn/dual_solver.hpp"
#include "ccnn/kernels.hpp"
#include "ccnn/matrix.hpp"

namespace {

using ccnn::kernels::Exec;

double seconds_of(const std::function<void()>& fn, int repeats) {
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count() / repeats;
}

void report(const char* name, double serial_s, double parallel_s) {
  std::printf("%-24s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name,
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s);
}

}  // namespace

int main() {
  const std::size_t n = 1 << 18;  // 262144 pixels
  const std::size_t m = 21;
  const int repeats = 5;

  std::mt19937 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> scores(n * m);
  for (auto& v : scores) v = gauss(rng);

  std::vector<double> probs(n * m), lse(n), probs2(n * m), diff(n * m);

  std::printf("threads: %d\n", ccnn::kernels::thread_count());

  {
    auto run = [&](Exec exec) {
      ccnn::kernels::softmax_rows(n, m, scores.data(), nullptr, probs.data(), lse.data(), exec);
    };
    report("softmax_rows", seconds_of([&] { run(Exec::Serial); }, repeats),
           seconds_of([&] { run(Exec::Parallel); }, repeats));
  }

  {
    ccnn::kernels::softmax_rows(n, m, scores.data(), nullptr, probs2.data(), nullptr,
                                Exec::Serial);
    auto run = [&](Exec exec) {
      (void)ccnn::kernels::cross_entropy(n, m, probs.data(), probs2.data(), exec);
    };
    report("cross_entropy", seconds_of([&] { run(Exec::Serial); }, repeats),
           seconds_of([&] { run(Exec::Parallel); }, repeats));
  }

  {
    auto run = [&](Exec exec) {
      ccnn::kernels::subtract(n * m, probs.data(), probs2.data(), diff.data(), exec);
    };
    report("subtract", seconds_of([&] { run(Exec::Serial); }, repeats),
           seconds_of([&] { run(Exec::Parallel); }, repeats));
  }

  // constraint rows touching every pixel, as the training constraints do
  const int k = 40;
  std::vector<ccnn::ConstraintRow> rows;
  for (int j = 0; j < k; ++j) {
    ccnn::ConstraintRow row;
    const int label = j % m;
    row.coefficients.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      row.coefficients.push_back({static_cast<int>(i), label, j % 2 == 0 ? 1.0 : -1.0});
    row.bound = j % 2 == 0 ? 0.05 * static_cast<double>(n) : -0.7 * static_cast<double>(n);
    row.slack_weight = 2.0;
    rows.push_back(std::move(row));
  }
  const auto cs =
      ccnn::ConstraintSet::assemble(std::move(rows), static_cast<int>(n), static_cast<int>(m));

  {
    std::vector<double> values(k);
    auto run = [&](Exec exec) { cs.values_raw(probs.data(), values.data(), exec); };
    report("constraint_values", seconds_of([&] { run(Exec::Serial); }, repeats),
           seconds_of([&] { run(Exec::Parallel); }, repeats));
  }

  {
    const ccnn::ScoreMatrix f(static_cast<int>(n), static_cast<int>(m), scores);
    ccnn::SolverConfig config;
    config.max_iters = 10;
    config.tolerance = 1e-300;  // unreachable: run all 10 iterations for a stable figure
    auto run = [&](Exec exec) {
      ccnn::kernels::set_default_exec(exec);
      (void)ccnn::solve(f, cs, config);
    };
    const double serial_s = seconds_of([&] { run(Exec::Serial); }, 1);
    const double parallel_s = seconds_of([&] { run(Exec::Parallel); }, 1);
    ccnn::kernels::set_default_exec(Exec::Parallel);
    report("solve_10_iters", serial_s, parallel_s);
  }

  return 0;
}
