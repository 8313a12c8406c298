// Prints the exact scaled height tail of a subcritical Galton-Watson tree and
// the simulated tail index of the reduced excursion time on the conditioned
// tree, which should match gamma = log(1/mu) / log(beta).

#include <cmath>
#include <cstdio>
#include <vector>

#include "rtrw/estimators.hpp"
#include "rtrw/excursion.hpp"
#include "rtrw/gw.hpp"
#include "rtrw/rng.hpp"

int main() {
  const rtrw::OffspringLaw law = rtrw::OffspringLaw::geometric(1.0 / 3.0);
  const double mu = law.mean();
  std::printf("geometric(1/3) offspring: mean %.3f\n", mu);
  std::printf("%4s %18s %18s\n", "n", "P(height >= n)", "mu^-n * tail");
  const auto tail = rtrw::height_tail_exact(law, 24);
  for (int n : {0, 1, 2, 4, 8, 16, 24})
    std::printf("%4d %18.9g %18.9g\n", n, tail[n], tail[n] * std::pow(1.0 / mu, n));

  const double beta = 1.6;
  const double gamma = std::log(1.0 / mu) / std::log(beta);
  rtrw::Rng rng(7);
  rtrw::ReducedHoldingSampler sampler(law, beta);
  std::vector<double> positives;
  for (long i = 0; i < 1500000; ++i) {
    const long d = sampler.sample(rng);
    if (d > 0) positives.push_back(static_cast<double>(d));
  }
  const auto fit = rtrw::tail_index_fit(positives, 600.0, 3932.16);
  std::printf("\nreduced excursion time at beta %.1f: tail index %.3f +- %.3f"
              " (gamma = %.3f)\n",
              beta, fit.alpha_hat, fit.stderr_, gamma);
  return 0;
}
