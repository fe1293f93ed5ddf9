// Times the OpenMP batch/eval kernels against their serial references on a
// generated workload and prints per-thread-count speedups.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nlogic/training.hpp"

using namespace nlogic;

namespace {

double seconds(const std::function<void()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int n = 200, m = 1024, dim = 64;
  if (argc > 1) m = std::atoi(argv[1]);
  if (argc > 2) dim = std::atoi(argv[2]);

  GenConfig gen;
  gen.n = n;
  gen.m = m;
  gen.seed = 1;
  Dataset ds = generate_dataset(gen);
  std::vector<const LabeledExpr*> exprs;
  for (const auto& e : ds.examples) exprs.push_back(&e);
  std::vector<const ExprNode*> nodes;
  for (const auto& e : ds.examples) nodes.push_back(&e.expr);

  NlnConfig nc;
  nc.dim = dim;
  NlnModel model = init_model(nc, n, 1);

  TrainConfig cfg;
  cfg.seed = 1;
  cfg.reg.lambda_l = 1e-2;
  cfg.reg.lambda_len = 1e-4;
  cfg.reg.lambda_theta = 1e-5;

  int max_threads = 1;
#ifdef _OPENMP
  max_threads = omp_get_max_threads();
#endif

  std::printf("workload: %d expressions, %d vars, dim %d\n", m, n, dim);
  std::printf("%-28s %-8s %-10s %s\n", "kernel", "threads", "seconds", "speedup");

  // gradient batches (128 examples each, full logic regularizer)
  auto run_batches = [&](int threads) {
    BatchEngine engine(threads);
    TrainConfig c = cfg;
    c.threads = threads;
    for (size_t at = 0; at + 128 <= exprs.size(); at += 128) {
      std::vector<const LabeledExpr*> batch(exprs.begin() + at,
                                            exprs.begin() + at + 128);
      engine.run_pointwise(model, batch, 0, static_cast<long>(at), c);
    }
  };
  double serial_batch = seconds([&] { run_batches(1); });
  std::printf("%-28s %-8d %-10.3f %s\n", "train batches (reference)", 1,
              serial_batch, "1.00x");
  for (int t = 2; t <= max_threads; ++t) {
    double dt = seconds([&] { run_batches(t); });
    std::printf("%-28s %-8d %-10.3f %.2fx\n", "train batches (omp)", t, dt,
                serial_batch / dt);
  }

  // eval scoring
  double serial_eval = seconds([&] { predict_all_serial(model, nodes); });
  std::printf("%-28s %-8d %-10.3f %s\n", "eval scoring (reference)", 1,
              serial_eval, "1.00x");
  for (int t = 2; t <= max_threads; ++t) {
    double dt = seconds([&] { predict_all(model, nodes, t); });
    std::printf("%-28s %-8d %-10.3f %.2fx\n", "eval scoring (omp)", t, dt,
                serial_eval / dt);
  }
  return 0;
}
