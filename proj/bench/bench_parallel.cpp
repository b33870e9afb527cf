// Serial reference vs OpenMP kernels: gram and batch_loss.
//
//   bench_parallel [threads] [repeats]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "mmcl/loss.hpp"
#include "mmcl/parallel.hpp"
#include "mmcl/reference.hpp"
#include "mmcl/rng.hpp"

using namespace mmcl;

namespace {

Mat random_unit(Index d, Index n, std::uint64_t seed) {
  CounterRng rng(seed, 1);
  Mat m(d, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < d; ++i) m(i, j) = rng.normal();
    m.col(j).normalize();
  }
  return m;
}

double median_ms(int repeats, const std::function<void()>& fn) {
  std::vector<double> t;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
  return t[t.size() / 2];
}

}  // namespace

int main(int argc, char** argv) {
  const int threads = argc > 1 ? std::atoi(argv[1]) : threads_from_env(4);
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
  const Index d = 32;
  std::printf("kernel,N,solver,serial_ms,parallel_ms,threads,speedup\n");

  KernelSpec spec;
  for (Index n : {128, 512, 1024}) {
    const Mat a = random_unit(d, n, 1), b = random_unit(d, n, 2);
    set_num_threads(1);
    const double serial = median_ms(repeats, [&] { reference::gram(spec, a, b); });
    set_num_threads(threads);
    const double par = median_ms(repeats, [&] { gram(spec, a, b); });
    std::printf("gram,%lld,-,%.3f,%.3f,%d,%.2f\n", static_cast<long long>(n), serial, par, threads, serial / par);
  }

  for (auto solver : {SolverKind::inv, SolverKind::pgd}) {
    for (Index n : {32, 64, 128}) {
      const Mat v1 = random_unit(d, n, 3), v2 = random_unit(d, n, 4);
      BatchLossOptions opts;
      opts.solver = solver;
      opts.solver_cfg.tol = 1e-4;
      opts.keep_anchor_grads = false;
      set_num_threads(1);
      const double serial = median_ms(repeats, [&] { reference::batch_loss(v1, v2, opts); });
      set_num_threads(threads);
      const double par = median_ms(repeats, [&] { batch_loss(v1, v2, opts); });
      std::printf("batch_loss,%lld,%s,%.3f,%.3f,%d,%.2f\n", static_cast<long long>(n),
                  std::string(to_string(solver)).c_str(), serial, par, threads, serial / par);
    }
  }
  set_num_threads(1);
  return 0;
}
