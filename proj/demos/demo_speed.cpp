// Prints the empirical speed of the biased walk with and without heavy-tailed
// holding times, next to the closed-form targets.

#include <cstdio>

#include "rtrw/clock.hpp"
#include "rtrw/rng.hpp"
#include "rtrw/walk.hpp"

int main() {
  rtrw::Rng rng(42);
  std::printf("embedded biased walk on Z, 200000 steps per beta\n");
  std::printf("%8s %12s %12s\n", "beta", "measured", "(b-1)/(b+1)");
  for (double beta : {1.2, 1.5, 2.0, 3.0, 5.0}) {
    rtrw::BiasedWalk w(beta);
    const long n = 200000;
    for (long t = 0; t < n; ++t) w.step(rng);
    std::printf("%8.2f %12.4f %12.4f\n", beta,
                static_cast<double>(w.position()) / static_cast<double>(n),
                rtrw::ups_beta(beta));
  }

  const double alpha = 1.5, beta = 2.0, t_clock = 200000.0;
  std::printf("\nsame walk paying a Pareto(%.1f) holding time at every site\n", alpha);
  double acc = 0.0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r)
    acc += rtrw::trapped_position_at_clock(beta, alpha, t_clock, rng) / t_clock;
  std::printf("measured speed %.4f, predicted %.4f\n", acc / reps,
              rtrw::trapped_speed(beta, alpha / (alpha - 1.0)));
  return 0;
}
