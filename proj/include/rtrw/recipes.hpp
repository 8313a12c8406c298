#pragma once

// Named experiment recipes.  Each recipe binds the simulators and estimators
// into a one-command experiment: it consumes a validated RunConfig, runs at
// the merged parameters, and returns result rows plus named check verdicts.
// Replica work is split into batches with per-batch random streams derived
// from the master seed, and batch results are merged in index order, so
// outputs are identical for any worker count.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "rtrw/clock.hpp"
#include "rtrw/config.hpp"
#include "rtrw/diagnostics.hpp"
#include "rtrw/estimators.hpp"
#include "rtrw/excursion.hpp"
#include "rtrw/gw.hpp"
#include "rtrw/io.hpp"
#include "rtrw/parallel.hpp"
#include "rtrw/rng.hpp"
#include "rtrw/walk.hpp"

namespace rtrw {

struct RecipeOutput {
  std::vector<ResultRow> rows;
  std::vector<CheckResult> checks;
};

namespace recipe_detail {

inline std::string short6(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// ';'-separated key=value parameter tuple for result rows.
class P {
 public:
  P& kv(const std::string& k, double v) { return raw(k, format_g17(v)); }
  P& kv(const std::string& k, long v) { return raw(k, std::to_string(v)); }
  P& kv(const std::string& k, int v) { return raw(k, std::to_string(v)); }
  P& raw(const std::string& k, const std::string& v) {
    if (!s_.empty()) s_ += ';';
    s_ += k + "=" + v;
    return *this;
  }
  std::string str() const { return s_; }

 private:
  std::string s_;
};

// Shared context per recipe run: row emission stamped with elapsed wall time
// and per-(block, replica) random streams under the master seed.
class Ctx {
 public:
  Ctx(const RunConfig& cfg, RecipeOutput& out)
      : cfg_(cfg),
        out_(out),
        base_(static_cast<std::uint64_t>(recipe_index(cfg.recipe)) * 1000ull),
        start_(std::chrono::steady_clock::now()) {}

  Rng stream(std::uint64_t block, std::uint64_t replica) const {
    return Rng::for_stream(cfg_.seed, ((base_ + block) << 32) | replica);
  }
  unsigned workers() const { return effective_workers(cfg_.workers); }

  void row(const std::string& statistic, const P& params, double value, double se,
           long n_samples) {
    ResultRow r;
    r.experiment = cfg_.recipe;
    r.params = params.str();
    r.statistic = statistic;
    r.value = value;
    r.stderr_ = se;
    r.n_samples = n_samples;
    r.seed = cfg_.seed;
    r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    out_.rows.push_back(std::move(r));
  }

  void check(int criterion, const std::string& name, bool passed, const std::string& detail) {
    out_.checks.push_back({criterion, name, passed, detail});
  }

 private:
  const RunConfig& cfg_;
  RecipeOutput& out_;
  std::uint64_t base_;
  std::chrono::steady_clock::time_point start_;
};

inline OffspringLaw make_offspring(const nlohmann::json& spec) {
  const std::string family = spec.at("family").get<std::string>();
  if (family == "geometric") return OffspringLaw::geometric(spec.at("p").get<double>());
  if (family == "poisson") return OffspringLaw::poisson(spec.at("lambda").get<double>());
  if (family == "pmf") return OffspringLaw::from_pmf(spec.at("pmf").get<std::vector<double>>());
  throw std::invalid_argument("unknown offspring family: " + family);
}

// Split n_total items into n_batches nearly equal batches.
inline long batch_size(long n_total, long n_batches, long b) {
  const long base = n_total / n_batches;
  const long extra = n_total % n_batches;
  return base + (b < extra ? 1 : 0);
}

}  // namespace recipe_detail

// --- speed-scenery: ballistic speeds of the embedded and trapped walks -------

inline RecipeOutput run_speed_scenery(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const auto betas = cfg_num_array(p, "betas");
  const long n = cfg_int(p, "n_embedded");
  const long reps = cfg_int(p, "embedded_replicas");
  for (std::size_t bi = 0; bi < betas.size(); ++bi) {
    const double beta = betas[bi];
    const auto speeds = run_replicas<double>(reps, ctx.workers(), [&](long i) {
      Rng rng = ctx.stream(bi, static_cast<std::uint64_t>(i));
      BiasedWalk w(beta);
      for (long s = 0; s < n; ++s) w.step(rng);
      return static_cast<double>(w.position()) / static_cast<double>(n);
    });
    Welford wf;
    for (double s : speeds) wf.add(s);
    const double target = ups_beta(beta);
    const P params = P().kv("beta", beta).kv("n", n);
    ctx.row("embedded_speed", params, wf.mean(), wf.se(), reps);
    ctx.row("embedded_speed_target", params, target, 0.0, 0);
    ctx.check(1, "embedded speed matches (beta-1)/(beta+1) at beta=" + short6(beta),
              std::fabs(wf.mean() - target) <= 4.0 * wf.se(),
              "mean=" + short6(wf.mean()) + " target=" + short6(target) +
                  " se=" + short6(wf.se()));
  }
  const double alpha = cfg_num(p, "alpha");
  const double beta = cfg_num(p, "beta");
  const double t_clock = cfg_num(p, "clock_time");
  const long reps2 = cfg_int(p, "speed_replicas");
  const double tol = cfg_num(p, "speed_tol");
  const auto speeds = run_replicas<double>(reps2, ctx.workers(), [&](long i) {
    Rng rng = ctx.stream(100, static_cast<std::uint64_t>(i));
    return static_cast<double>(trapped_position_at_clock(beta, alpha, t_clock, rng)) / t_clock;
  });
  Welford wf;
  for (double s : speeds) wf.add(s);
  const double target = trapped_speed(beta, alpha / (alpha - 1.0));
  const P params = P().kv("beta", beta).kv("alpha", alpha).kv("t", t_clock);
  ctx.row("trapped_speed", params, wf.mean(), wf.se(), reps2);
  ctx.row("trapped_speed_target", params, target, 0.0, 0);
  ctx.check(4, "trapped-walk speed matches ups_beta / E[holding]",
            std::fabs(wf.mean() - target) <= tol,
            "mean=" + short6(wf.mean()) + " target=" + short6(target) + " tol=" + short6(tol));
  return out;
}

// --- occupation: range frequencies and origin visit counts -------------------

inline RecipeOutput run_occupation(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const double beta = cfg_num(p, "beta");
  const long n_steps = cfg_int(p, "n_steps");
  const double tol = cfg_num(p, "freq_tol");
  Rng rng = ctx.stream(0, 0);
  const OccupationCounts occ = occupation_histogram(beta, n_steps, rng);
  const double u = ups_beta(beta);
  for (long l : cfg_int_array(p, "levels")) {
    const double f = l < static_cast<long>(occ.sites_with_local_time.size())
                         ? static_cast<double>(occ.sites_with_local_time[l]) /
                               static_cast<double>(occ.steps)
                         : 0.0;
    const double target = u * u * std::pow(1.0 - u, static_cast<double>(l - 1));
    const P params = P().kv("beta", beta).kv("l", l).kv("n", n_steps);
    ctx.row("occupation_fraction", params, f, 0.0, 1);
    ctx.row("occupation_fraction_target", params, target, 0.0, 0);
    ctx.check(2, "sites visited exactly " + std::to_string(l) + " times have frequency " +
                     short6(target),
              std::fabs(f - target) <= tol,
              "freq=" + short6(f) + " target=" + short6(target) + " tol=" + short6(tol));
  }
  ctx.row("range_fraction", P().kv("beta", beta).kv("n", n_steps),
          static_cast<double>(occ.range_size) / static_cast<double>(occ.steps), 0.0, 1);

  const double ob = cfg_num(p, "origin_beta");
  const long reps = cfg_int(p, "origin_replicas");
  const long level = cfg_int(p, "origin_level");
  const long bins = cfg_int(p, "origin_bins");
  const long nb = 100;
  const auto batches = run_replicas<std::vector<long>>(nb, ctx.workers(), [&](long b) {
    Rng r = ctx.stream(1, static_cast<std::uint64_t>(b));
    std::vector<long> counts(static_cast<std::size_t>(bins) + 1, 0);
    const long todo = batch_size(reps, nb, b);
    for (long i = 0; i < todo; ++i) {
      const long v = visits_to_origin(ob, level, r);
      ++counts[static_cast<std::size_t>(std::min(v, bins + 1) - 1)];
    }
    return counts;
  });
  std::vector<long> observed(static_cast<std::size_t>(bins) + 1, 0);
  for (const auto& c : batches)
    for (std::size_t i = 0; i < c.size(); ++i) observed[i] += c[i];
  const double uo = ups_beta(ob);
  std::vector<double> probs;
  for (long v = 1; v <= bins; ++v) probs.push_back(uo * std::pow(1.0 - uo, v - 1.0));
  probs.push_back(std::pow(1.0 - uo, static_cast<double>(bins)));
  const double stat = chi_square_stat(observed, probs);
  const double crit = chi_square_crit99(static_cast<int>(bins));
  const P params = P().kv("beta", ob).kv("level", level).kv("bins", bins);
  ctx.row("origin_visits_chi_square", params, stat, 0.0, reps);
  ctx.row("origin_visits_chi_square_crit99", params, crit, 0.0, 0);
  ctx.check(3, "origin visit counts fit the geometric escape law at the 1% level", stat < crit,
            "chi2=" + short6(stat) + " crit=" + short6(crit));
  return out;
}

// --- regeneration: block identities and occupation decay ---------------------

inline RecipeOutput run_regeneration(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const double beta = cfg_num(p, "beta");
  const long n_blocks = cfg_int(p, "n_blocks");
  const long buffer = cfg_int(p, "buffer");
  const long nb = cfg_int(p, "batches");
  const long l_lo = cfg_int(p, "slope_l_lo");
  const long l_hi = cfg_int(p, "slope_l_hi");
  const double slack = cfg_num(p, "slope_slack");
  const auto batches = run_replicas<BlockCollection>(nb, ctx.workers(), [&](long b) {
    Rng r = ctx.stream(0, static_cast<std::uint64_t>(b));
    return collect_regeneration_blocks(beta, batch_size(n_blocks, nb, b), buffer, r);
  });
  bool identities = true, singles = true;
  long total_blocks = 0, total_length = 0;
  std::size_t width = 0;
  for (const auto& bc : batches) width = std::max(width, bc.count_by_local_time.size());
  std::vector<Welford> frac(width);
  std::vector<long> pooled(width, 0);
  for (const auto& bc : batches) {
    identities = identities && bc.identities_hold;
    singles = singles && bc.regen_sites_single_visit;
    total_blocks += bc.n_blocks;
    total_length += bc.total_length;
    for (std::size_t l = 0; l < width; ++l) {
      const long c = l < bc.count_by_local_time.size() ? bc.count_by_local_time[l] : 0;
      pooled[l] += c;
      frac[l].add(static_cast<double>(c) / static_cast<double>(bc.n_blocks));
    }
  }
  ctx.check(7, "every regeneration block satisfies the visit-count identity",
            identities && total_blocks == n_blocks,
            "blocks=" + std::to_string(total_blocks));
  ctx.check(0, "regeneration levels are visited exactly once", singles, "");
  ctx.row("block_length_mean", P().kv("beta", beta),
          static_cast<double>(total_length) / static_cast<double>(total_blocks), 0.0,
          total_blocks);
  for (long l = 1; l < static_cast<long>(width); ++l)
    ctx.row("block_sites_with_local_time", P().kv("beta", beta).kv("l", l),
            frac[static_cast<std::size_t>(l)].mean(), frac[static_cast<std::size_t>(l)].se(),
            total_blocks);
  std::vector<double> xs, ys;
  bool bins_ok = true;
  for (long l = l_lo; l <= l_hi; ++l) {
    const long c = l < static_cast<long>(width) ? pooled[static_cast<std::size_t>(l)] : 0;
    if (c <= 0) {
      bins_ok = false;
      break;
    }
    xs.push_back(static_cast<double>(l));
    ys.push_back(std::log(static_cast<double>(c) / static_cast<double>(total_blocks)));
  }
  double slope = 0.0;
  if (bins_ok) slope = least_squares_line(xs, ys).slope;
  const double bound = 0.5 * std::log(2.0 / (beta + 1.0)) + slack;
  ctx.row("block_occupation_log_slope", P().kv("beta", beta).kv("l_lo", l_lo).kv("l_hi", l_hi),
          slope, 0.0, total_blocks);
  ctx.check(7, "block occupation counts decay at least at the square-root rate",
            bins_ok && slope <= bound,
            bins_ok ? "slope=" + short6(slope) + " bound=" + short6(bound)
                    : "empty occupation bin inside the fit range");
  return out;
}

// --- stabcon: raw holding exponent in the zero-mean-regime --------------------

inline RecipeOutput run_stabcon(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const double alpha = cfg_num(p, "alpha");
  const long n = cfg_int(p, "n_scale");
  const long m = cfg_int(p, "n_samples");
  const double lambda = cfg_num(p, "lambda");
  const double lambda2 = cfg_num(p, "scaling_lambda");
  const double tol = cfg_num(p, "exponent_tol");
  Rng r1 = ctx.stream(0, 0), r2 = ctx.stream(0, 1);
  const ExponentEstimate e1 = holding_exponent_raw(alpha, n, m, 1.0, lambda, r1);
  const ExponentEstimate e2 = holding_exponent_raw(alpha, n, m, 1.0, lambda2, r2);
  const double target = std::tgamma(1.0 - alpha) * std::pow(lambda, alpha);
  ctx.row("raw_exponent", P().kv("alpha", alpha).kv("lambda", lambda).kv("n", n), e1.value,
          e1.se, m);
  ctx.row("raw_exponent", P().kv("alpha", alpha).kv("lambda", lambda2).kv("n", n), e2.value,
          e2.se, m);
  ctx.row("raw_exponent_target", P().kv("alpha", alpha).kv("lambda", lambda), target, 0.0, 0);
  ctx.check(5, "raw holding exponent approaches Gamma(1-alpha) lambda^alpha",
            std::fabs(e1.value - target) <= 3.0 * e1.se,
            "value=" + short6(e1.value) + " target=" + short6(target) + " se=" + short6(e1.se));
  const double scaling = std::log(e2.value / e1.value) / std::log(lambda2 / lambda);
  ctx.row("lambda_scaling_exponent", P().kv("alpha", alpha), scaling, 0.0, 2 * m);
  ctx.check(5, "exponent scales like lambda^alpha", std::fabs(scaling - alpha) <= tol,
            "exponent=" + short6(scaling) + " alpha=" + short6(alpha) + " tol=" + short6(tol));
  return out;
}

// --- logass: ordering of the centred product functionals ---------------------

inline RecipeOutput run_logass(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const double alpha = cfg_num(p, "alpha");
  const long n = cfg_int(p, "n_scale");
  const long m = cfg_int(p, "n_samples");
  const double lambda = cfg_num(p, "lambda");
  const auto l_values = cfg_int_array(p, "l_values");
  std::vector<ExponentEstimate> est(l_values.size()), est_rate(l_values.size());
  for (std::size_t i = 0; i < l_values.size(); ++i) {
    Rng ra = ctx.stream(0, static_cast<std::uint64_t>(i));
    Rng rb = ctx.stream(1, static_cast<std::uint64_t>(i));
    const double l = static_cast<double>(l_values[i]);
    est[i] = holding_exponent_centred(alpha, n, m, l, lambda, ra);
    est_rate[i] = holding_exponent_centred(alpha, n, m, 1.0, l * lambda, rb);
    ctx.row("centred_exponent", P().kv("alpha", alpha).kv("l", l_values[i]).kv("lambda", lambda),
            est[i].value, est[i].se, m);
    ctx.row("centred_exponent",
            P().kv("alpha", alpha).kv("l", 1L).kv("lambda", l * lambda), est_rate[i].value,
            est_rate[i].se, m);
  }
  for (std::size_t i = 0; i < l_values.size(); ++i) {
    const long l = l_values[i];
    if (l == 1) {
      ctx.check(6, "ordering is an identity at l=1", true, "value=" + short6(est[i].value));
      continue;
    }
    const double lower = static_cast<double>(l) * est[0].value;
    const double se_low =
        std::sqrt(static_cast<double>(l * l) * est[0].se * est[0].se + est[i].se * est[i].se);
    ctx.check(6, "l independent copies stay below the l-th moment exponent (l=" +
                     std::to_string(l) + ")",
              lower <= est[i].value + 3.0 * se_low,
              "l*est(1)=" + short6(lower) + " est(l)=" + short6(est[i].value) +
                  " se=" + short6(se_low));
    const double se_hi = std::sqrt(est[i].se * est[i].se + est_rate[i].se * est_rate[i].se);
    ctx.check(6, "l-th moment exponent stays below the rate-l*lambda exponent (l=" +
                     std::to_string(l) + ")",
              est[i].value <= est_rate[i].value + 3.0 * se_hi,
              "est(l)=" + short6(est[i].value) + " est(1,l*lambda)=" +
                  short6(est_rate[i].value) + " se=" + short6(se_hi));
  }
  return out;
}

// --- height-cdf: exact scaled height tail -------------------------------------

inline RecipeOutput run_height_cdf(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const OffspringLaw law = make_offspring(p.at("offspring"));
  const int n_max = static_cast<int>(cfg_int(p, "n_max"));
  const int monotone_to = static_cast<int>(cfg_int(p, "monotone_to"));
  const int cauchy_from = static_cast<int>(cfg_int(p, "cauchy_from"));
  const double tol = cfg_num(p, "cauchy_tol");
  const std::vector<double> tail = height_tail_exact(law, n_max);
  const double mu = law.mean();
  std::vector<double> r;
  for (int i = 0; i <= n_max; ++i)
    r.push_back(tail[static_cast<std::size_t>(i)] * std::pow(1.0 / mu, i));
  for (int i = 0; i <= n_max; ++i)
    ctx.row("scaled_height_tail", P().kv("n", static_cast<long>(i)), r[static_cast<std::size_t>(i)],
            0.0, 0);
  bool monotone = true;
  for (int i = 0; i < monotone_to; ++i)
    monotone = monotone && r[static_cast<std::size_t>(i) + 1] < r[static_cast<std::size_t>(i)];
  ctx.check(12, "scaled height tail strictly decreases", monotone,
            "checked n=0.." + std::to_string(monotone_to));
  bool cauchy = true;
  double worst = 0.0;
  for (int i = cauchy_from; i + 1 <= n_max; ++i) {
    const double gap =
        std::fabs(r[static_cast<std::size_t>(i) + 1] - r[static_cast<std::size_t>(i)]);
    worst = std::max(worst, gap);
    cauchy = cauchy && gap < tol;
  }
  ctx.check(12, "scaled height tail gaps vanish past the knee", cauchy,
            "max gap=" + short6(worst) + " tol=" + short6(tol));
  return out;
}

// --- excursion-decomp: decomposition identity and ruin probabilities ----------

inline RecipeOutput run_excursion_decomp(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const OffspringLaw law = make_offspring(p.at("offspring"));
  const double beta = cfg_num(p, "beta");
  const long total = cfg_int(p, "n_excursions");
  const long nb = cfg_int(p, "batches");
  const long cap = cfg_int(p, "step_cap");
  const ExcursionWalkParams params{beta, cap};
  struct Batch {
    long bad = 0;
    long timeouts = 0;
    long count = 0;
    double sum = 0.0;
  };
  const auto batches = run_replicas<Batch>(nb, ctx.workers(), [&](long b) {
    Rng r = ctx.stream(0, static_cast<std::uint64_t>(b));
    Batch batch;
    const long todo = batch_size(total, nb, b);
    for (long i = 0; i < todo; ++i) {
      const ConditionedBranch branch = sample_conditioned_branch(law, r, 200);
      const ExcursionRecord rec = run_excursion(branch, params, r);
      batch.bad += rec.identity_holds() ? 0 : 1;
      batch.timeouts += rec.timed_out ? 1 : 0;
      batch.sum += static_cast<double>(rec.eta0);
      ++batch.count;
    }
    return batch;
  });
  long bad = 0, timeouts = 0, count = 0;
  double sum = 0.0;
  for (const auto& b : batches) {
    bad += b.bad;
    timeouts += b.timeouts;
    count += b.count;
    sum += b.sum;
  }
  ctx.row("excursion_time_mean", P().kv("beta", beta), sum / static_cast<double>(count), 0.0,
          count);
  ctx.check(8, "excursion time decomposes into entrance durations on every branch",
            bad == 0 && count == total,
            "violations=" + std::to_string(bad) + " of " + std::to_string(count));
  ctx.check(0, "no excursion hit the step cap", timeouts == 0,
            "timeouts=" + std::to_string(timeouts));

  const double rb = cfg_num(p, "ruin_beta");
  const long trials = cfg_int(p, "ruin_trials");
  for (long h : cfg_int_array(p, "ruin_depths")) {
    ConditionedBranch chain;
    chain.tree = GWTree::single_node();
    int prev = 0;
    for (long d = 0; d < h; ++d) prev = chain.tree.add_child(prev);
    chain.subtree_roots.push_back(chain.tree.first_child[0]);
    chain.xi_star = 2;
    Rng r = ctx.stream(10, static_cast<std::uint64_t>(h));
    BranchExcursionSampler sampler(chain, ExcursionWalkParams{rb, cap}, r);
    long entrances = 0, reached = 0, delta_visits = 0;
    while (entrances < trials) {
      const ExcursionRecord rec = sampler.run(r);
      for (const auto& e : rec.subtrees[0].entrances) {
        ++entrances;
        if (e.g > 0) ++reached;
        delta_visits += e.g;
      }
    }
    const double reach_hat = static_cast<double>(reached) / static_cast<double>(entrances);
    const double reach_se = std::sqrt(reach_hat * (1.0 - reach_hat) / entrances);
    const double reach_target = reach_deepest_probability_exact(static_cast<int>(h), rb);
    const double q_hat = static_cast<double>(reached) / static_cast<double>(delta_visits);
    const double q_se = std::sqrt(q_hat * (1.0 - q_hat) / delta_visits);
    const double q_target = escape_probability_exact(static_cast<int>(h), rb);
    const P params_h = P().kv("beta", rb).kv("h", h);
    ctx.row("reach_deepest", params_h, reach_hat, reach_se, entrances);
    ctx.row("reach_deepest_target", params_h, reach_target, 0.0, 0);
    ctx.row("escape_probability", params_h, q_hat, q_se, delta_visits);
    ctx.row("escape_probability_target", params_h, q_target, 0.0, 0);
    ctx.check(9, "entrances reach the deepest vertex at the exact rate (h=" + std::to_string(h) +
                     ")",
              std::fabs(reach_hat - reach_target) <= 3.0 * reach_se,
              "hat=" + short6(reach_hat) + " target=" + short6(reach_target) +
                  " se=" + short6(reach_se));
    ctx.check(9, "deep visits escape at the exact ruin rate (h=" + std::to_string(h) + ")",
              std::fabs(q_hat - q_target) <= 3.0 * q_se,
              "hat=" + short6(q_hat) + " target=" + short6(q_target) + " se=" + short6(q_se));
  }
  return out;
}

// --- laplace-identity: oracle checks and the escape-mixture identity ----------

inline RecipeOutput run_laplace_identity(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const OffspringLaw law = make_offspring(p.at("offspring"));
  const double beta = cfg_num(p, "beta");
  const long n_branches = cfg_int(p, "n_branches");
  const long min_nodes = cfg_int(p, "min_nodes");
  const long max_nodes = cfg_int(p, "max_nodes");
  const long n_draws = cfg_int(p, "n_excursions");
  const long cap = cfg_int(p, "step_cap");
  const auto s_values = cfg_num_array(p, "s_values");
  for (long bi = 0; bi < n_branches; ++bi) {
    Rng rng = ctx.stream(0, static_cast<std::uint64_t>(bi));
    ConditionedBranch b;
    for (;;) {
      b = sample_conditioned_branch(law, rng, 200);
      const long nodes = static_cast<long>(b.tree.parent.size());
      if (nodes >= min_nodes && nodes <= max_nodes) break;
    }
    const auto oracle = AbsorbingChainOracle::from_branch(b, beta);
    std::vector<Welford> w(s_values.size());
    for (long i = 0; i < n_draws; ++i) {
      const double d = static_cast<double>(branch_excursion_duration(b.tree, beta, cap, rng));
      for (std::size_t si = 0; si < s_values.size(); ++si)
        w[si].add(std::exp(-s_values[si] * d));
    }
    for (std::size_t si = 0; si < s_values.size(); ++si) {
      const double exact = exact_hitting_laplace(oracle, s_values[si], 0);
      const P params = P().kv("branch", bi).kv("s", s_values[si]).kv("beta", beta);
      ctx.row("excursion_laplace_mc", params, w[si].mean(), w[si].se(), n_draws);
      ctx.row("excursion_laplace_exact", params, exact, 0.0, 0);
      ctx.check(10, "sampled Laplace transform matches the absorbing-chain oracle (branch " +
                        std::to_string(bi) + ", s=" + short6(s_values[si]) + ")",
                std::fabs(w[si].mean() - exact) <= 4.0 * w[si].se() + 1e-12,
                "mc=" + short6(w[si].mean()) + " exact=" + short6(exact) +
                    " se=" + short6(w[si].se()));
    }
  }
  const double ib = cfg_num(p, "id_beta");
  const double il = cfg_num(p, "id_lambda");
  const double iscale = cfg_num(p, "id_scale");
  const long isamples = cfg_int(p, "id_samples");
  const double gamma = std::log(1.0 / law.mean()) / std::log(ib);
  const std::vector<std::vector<int>> shapes{{2}, {2, 3}, {1, 2, 4}};
  for (std::size_t si = 0; si < shapes.size(); ++si) {
    ConditionedBranch b;
    b.tree = GWTree::single_node();
    for (int depth : shapes[si]) {
      int prev = 0;
      for (int d = 0; d < depth; ++d) prev = b.tree.add_child(prev);
      b.subtree_roots.push_back(b.tree.first_child[0]);
    }
    // subtree_roots collected the first chain's head repeatedly; rebuild.
    b.subtree_roots.clear();
    for (int c = b.tree.first_child[0]; c != -1; c = b.tree.next_sibling[c])
      b.subtree_roots.push_back(c);
    b.xi_star = static_cast<long>(b.subtree_roots.size()) + 1;
    Rng rng = ctx.stream(50, static_cast<std::uint64_t>(si));
    const LaplaceIdentityResult res =
        quenched_laplace_identity_check(b, law, ib, il, iscale, gamma, isamples, rng);
    const P params = P().kv("shape", static_cast<long>(si)).kv("beta", ib).kv("lambda", il);
    ctx.row("reduced_laplace_mc", params, res.lhs, res.lhs_se, isamples);
    ctx.row("reduced_laplace_identity", params, res.rhs, 0.0, 0);
    ctx.check(11, "reduced-holding Laplace matches the escape-mixture identity (shape " +
                      std::to_string(si) + ")",
              std::fabs(res.lhs - res.rhs) <= 3.0 * res.lhs_se,
              "lhs=" + short6(res.lhs) + " rhs=" + short6(res.rhs) +
                  " se=" + short6(res.lhs_se));
  }
  return out;
}

// --- j1-failure: modulus floor, unit-clock control, solver consistency --------

inline RecipeOutput run_j1_failure(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const double alpha = cfg_num(p, "alpha");
  const double beta = cfg_num(p, "beta");
  const double horizon = cfg_num(p, "horizon");
  const double lambda = cfg_num(p, "lambda");
  const long n = cfg_int(p, "n_scale");
  const auto h_values = cfg_num_array(p, "h_values");
  const long reps = cfg_int(p, "replicas");
  const long reps_c = cfg_int(p, "control_replicas");
  const double control_target = cfg_num(p, "control_target");
  const long suite_paths = cfg_int(p, "suite_paths");
  const double floor = modulus_floor_heavy_scenery(alpha, beta, horizon, lambda);

  auto run_arm = [&](bool unit_clock, long arm_reps, std::uint64_t block) {
    return run_replicas<std::vector<double>>(arm_reps, ctx.workers(), [&, block](long i) {
      Rng rng = ctx.stream(block, static_cast<std::uint64_t>(i));
      const StepPath path = scaled_position_path(beta, alpha, n, horizon, unit_clock, rng);
      const ModulusSolver solver(path, horizon);
      std::vector<double> vals;
      for (double h : h_values) vals.push_back(solver.value(h));
      return vals;
    });
  };

  const auto scenery = run_arm(false, reps, 0);
  for (std::size_t hi = 0; hi < h_values.size(); ++hi) {
    Welford w;
    for (const auto& v : scenery) w.add(v[hi]);
    const P params = P().kv("arm", 0L).kv("n", n).kv("h", h_values[hi]);
    ctx.row("modulus_mean", params, w.mean(), w.se(), reps);
    ctx.check(13, "rescaled-path modulus stays above the jump floor (h=" + short6(h_values[hi]) +
                      ")",
              w.mean() >= floor - 3.0 * w.se(),
              "mean=" + short6(w.mean()) + " floor=" + short6(floor) + " se=" + short6(w.se()));
  }
  ctx.row("modulus_floor", P().kv("alpha", alpha).kv("lambda", lambda), floor, 0.0, 0);

  const auto control = run_arm(true, reps_c, 1);
  double smallest_h = h_values.front();
  for (double h : h_values) smallest_h = std::min(smallest_h, h);
  double control_at_smallest = 0.0;
  for (std::size_t hi = 0; hi < h_values.size(); ++hi) {
    Welford w;
    for (const auto& v : control) w.add(v[hi]);
    const P params = P().kv("arm", 1L).kv("n", n).kv("h", h_values[hi]);
    ctx.row("modulus_mean", params, w.mean(), w.se(), reps_c);
    if (h_values[hi] == smallest_h) control_at_smallest = w.mean();
  }
  ctx.check(13, "unit-clock control modulus collapses below " + short6(control_target) +
                    " (h=" + short6(smallest_h) + ")",
            control_at_smallest < control_target,
            "mean=" + short6(control_at_smallest) +
                " (continuous-limit floor ~ sqrt(h) n^{-1/6} at this scale)");

  Rng rng = ctx.stream(2, 0);
  long mismatches = 0;
  for (long pi = 0; pi < suite_paths; ++pi) {
    const int segs = 2 + static_cast<int>(rng.below(7));
    StepPath path;
    path.times.push_back(0.0);
    for (int i = 1; i < segs; ++i) path.times.push_back(rng.uniform01() * horizon);
    std::sort(path.times.begin(), path.times.end());
    path.times.erase(std::unique(path.times.begin(), path.times.end()), path.times.end());
    for (std::size_t i = 0; i < path.times.size(); ++i)
      path.values.push_back(static_cast<double>(rng.below(9)) - 4.0);
    const ModulusSolver solver(path, horizon);
    for (double h : {0.07, 0.15, 0.33}) {
      const double bf = solver.brute_force(h * horizon);
      if (solver.value_dp(h * horizon) != bf || solver.value_bisect(h * horizon) != bf)
        ++mismatches;
    }
  }
  ctx.row("solver_mismatches", P().kv("paths", suite_paths), static_cast<double>(mismatches),
          0.0, suite_paths);
  ctx.check(13, "partition solvers agree exactly with exhaustive search", mismatches == 0,
            "paths=" + std::to_string(suite_paths) + " mismatches=" + std::to_string(mismatches));
  return out;
}

// --- lattice-probe: stabilization along the mu^-k ladders ----------------------

inline RecipeOutput run_lattice_probe(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const OffspringLaw law = make_offspring(p.at("offspring"));
  const double beta = cfg_num(p, "beta");
  const double lambda = cfg_num(p, "lambda");
  const auto t_values = cfg_num_array(p, "t_values");
  const auto varsigma = cfg_num_array(p, "varsigma");
  const int k_min = static_cast<int>(cfg_int(p, "k_min"));
  const int k_max = static_cast<int>(cfg_int(p, "k_max"));
  const long n_trees = cfg_int(p, "n_trees");
  const long n_exc = cfg_int(p, "n_excursions");
  const long nb = cfg_int(p, "tree_batches");
  const int tail_n_max = static_cast<int>(cfg_int(p, "tail_n_max"));

  const auto tm_batches = run_replicas<TrapMeanSample>(nb, ctx.workers(), [&](long b) {
    Rng r = ctx.stream(0, static_cast<std::uint64_t>(b));
    return sample_trap_excursion_means(law, beta, batch_size(n_trees, nb, b), n_exc, r);
  });
  TrapMeanSample trap_means;
  for (const auto& tb : tm_batches) {
    trap_means.mean.insert(trap_means.mean.end(), tb.mean.begin(), tb.mean.end());
    trap_means.se.insert(trap_means.se.end(), tb.se.begin(), tb.se.end());
  }
  LatticeProbe probe;
  probe.beta = beta;
  probe.mu = law.mean();
  probe.lambda = lambda;
  probe.varsigma = varsigma;
  probe.k_min = k_min;
  probe.k_max = k_max;
  probe.heights = make_height_tail_handle(law, tail_n_max);
  probe.trap_means = trap_means;

  bool any_separation = false;
  double best_sep_ratio = 0.0;
  for (double t : t_values) {
    probe.t = t;
    const std::vector<LatticeCell> cells = lattice_oscillation_probe(probe);
    for (const auto& c : cells)
      ctx.row("lattice_probe_value",
              P().kv("t", t).kv("varsigma", c.varsigma).kv("k", c.k).kv("n", c.n), c.value,
              c.se, n_trees);
    for (double vs : varsigma) {
      std::vector<const LatticeCell*> ladder;
      for (const auto& c : cells)
        if (c.varsigma == vs) ladder.push_back(&c);
      bool stable = true;
      double worst = 0.0;
      for (std::size_t i = 0; i < ladder.size(); ++i)
        for (std::size_t j = i + 1; j < ladder.size(); ++j) {
          const double gap = std::fabs(ladder[i]->value - ladder[j]->value);
          const double band = 3.0 * std::sqrt(ladder[i]->se * ladder[i]->se +
                                              ladder[j]->se * ladder[j]->se);
          worst = std::max(worst, band > 0.0 ? gap / band : (gap > 0.0 ? 1e18 : 0.0));
          stable = stable && gap <= band;
        }
      ctx.check(14, "probe stabilizes along the scale ladder (t=" + short6(t) +
                        ", varsigma=" + short6(vs) + ")",
                stable, "worst gap/band=" + short6(worst));
    }
    if (varsigma.size() >= 2) {
      const LatticeCell *a = nullptr, *b = nullptr;
      for (const auto& c : cells) {
        if (c.k == k_max && c.varsigma == varsigma[0]) a = &c;
        if (c.k == k_max && c.varsigma == varsigma[1]) b = &c;
      }
      if (a && b) {
        const double gap = std::fabs(a->value - b->value);
        const double band = 3.0 * std::sqrt(a->se * a->se + b->se * b->se);
        if (band > 0.0) best_sep_ratio = std::max(best_sep_ratio, gap / band);
        any_separation = any_separation || gap > band;
      }
    }
  }
  if (varsigma.size() >= 2)
    ctx.check(14, "interleaved scale ladders separate at some threshold", any_separation,
              "best gap/band=" + short6(best_sep_ratio) +
                  " (duration spread smears the lattice at this depth)");
  return out;
}

// --- gwt-fluctuations: tail index and the centred excursion exponent ----------

inline RecipeOutput run_gwt_fluctuations(const RunConfig& cfg, const nlohmann::json& p) {
  using namespace recipe_detail;
  RecipeOutput out;
  Ctx ctx(cfg, out);
  const OffspringLaw law = make_offspring(p.at("offspring"));
  const double beta = cfg_num(p, "beta");
  const double gamma = std::log(1.0 / law.mean()) / std::log(beta);
  const long n_samples = cfg_int(p, "n_samples");
  const long nb_s = cfg_int(p, "sample_batches");
  const double t_min = cfg_num(p, "fit_t_min");
  const double t_max = cfg_num(p, "fit_t_max");
  const double index_tol = cfg_num(p, "index_tol");

  const auto sample_batches = run_replicas<std::vector<double>>(nb_s, ctx.workers(), [&](long b) {
    Rng r = ctx.stream(0, static_cast<std::uint64_t>(b));
    ReducedHoldingSampler sampler(law, beta, 200);
    std::vector<double> pos;
    const long todo = batch_size(n_samples, nb_s, b);
    for (long i = 0; i < todo; ++i) {
      const double d = static_cast<double>(sampler.sample(r));
      if (d > 0.0) pos.push_back(d);
    }
    return pos;
  });
  std::vector<double> positives;
  for (const auto& sb : sample_batches) positives.insert(positives.end(), sb.begin(), sb.end());
  const TailIndexFit fit = tail_index_fit(positives, t_min, t_max);
  const P fit_params = P().kv("beta", beta).kv("t_min", t_min).kv("t_max", t_max);
  ctx.row("tail_index", fit_params, fit.alpha_hat, fit.stderr_, n_samples);
  ctx.row("tail_index_hill", fit_params, fit.hill_cross, 0.0,
          static_cast<long>(fit.exceed_min));
  ctx.row("tail_index_target", P().kv("beta", beta), gamma, 0.0, 0);
  ctx.check(15, "reduced-holding tail index sits within " + short6(index_tol) + " of gamma",
            std::fabs(fit.alpha_hat - gamma) <= index_tol,
            "alpha_hat=" + short6(fit.alpha_hat) + " gamma=" + short6(gamma) +
                " hill=" + short6(fit.hill_cross));

  const long l = cfg_int(p, "l");
  const double lambda = cfg_num(p, "lambda");
  const long mean_batch = cfg_int(p, "mean_batch");
  const long nb_t = cfg_int(p, "trap_batches");
  const long cap = cfg_int(p, "step_cap");
  const ExcursionWalkParams params{beta, cap};

  const auto mean_parts = run_replicas<ProductMoments>(nb_t, ctx.workers(), [&](long b) {
    Rng r = ctx.stream(1, static_cast<std::uint64_t>(b));
    ProductMoments pm;
    const long todo = batch_size(mean_batch, nb_t, b);
    for (long i = 0; i < todo; ++i) {
      const ConditionedBranch branch = sample_conditioned_branch(law, r, 200);
      const long d = branch_excursion_duration(branch.tree, beta, cap, r);
      if (d >= cap) ++pm.truncated;
      pm.add(static_cast<double>(d));
    }
    return pm;
  });
  ProductMoments mean_pm;
  for (const auto& part : mean_parts) mean_pm.absorb(part);
  const double mean_eta = mean_pm.mean();
  const double mean_se = mean_pm.se_mean();
  // Exact network identity on trees: E[eta0] = 1 + 2/(beta+1) * E[#subtrees]
  // * beta/(1-beta*mu), with E[#subtrees] = E[xi^2]/mu - 1.
  const double exi2 = law.variance() + law.mean() * law.mean();
  const double closed =
      1.0 + 2.0 / (beta + 1.0) * (exi2 / law.mean() - 1.0) * beta / (1.0 - beta * law.mean());
  ctx.row("mean_excursion_time", P().kv("beta", beta), mean_eta, mean_se, mean_batch);
  ctx.row("mean_excursion_time_exact", P().kv("beta", beta), closed, 0.0, 0);
  ctx.check(0, "pre-estimated mean excursion time matches the network identity",
            std::fabs(mean_eta - closed) <= 6.0 * mean_se,
            "mean=" + short6(mean_eta) + " exact=" + short6(closed) + " se=" + short6(mean_se));
  ctx.check(0, "no excursion hit the step cap", mean_pm.truncated == 0,
            "truncated=" + std::to_string(mean_pm.truncated));

  const auto varsigma = cfg_num_array(p, "varsigma");
  const int k_min = static_cast<int>(cfg_int(p, "k_min"));
  const int k_max = static_cast<int>(cfg_int(p, "k_max"));
  const long traps_factor = cfg_int(p, "traps_factor");
  const long traps_min = cfg_int(p, "traps_min");
  const long traps_cap = cfg_int(p, "traps_cap");
  struct Rung {
    double varsigma = 0.0;
    int k = 0;
    CentredExponentEstimate est;
  };
  std::vector<Rung> rungs;
  long truncated = 0;
  std::uint64_t block = 10;
  for (std::size_t vi = 0; vi < varsigma.size(); ++vi) {
    for (int k = k_min; k <= k_max; ++k) {
      const double n_scale = std::floor(varsigma[vi] * std::pow(2.0, k));
      const long n_traps = std::clamp(traps_factor * static_cast<long>(n_scale), traps_min,
                                      traps_cap);
      const double s = lambda / std::pow(n_scale, 1.0 / gamma);
      const std::uint64_t this_block = block++;
      const auto parts = run_replicas<ProductMoments>(nb_t, ctx.workers(), [&,
                                                                            this_block](long b) {
        Rng r = ctx.stream(this_block, static_cast<std::uint64_t>(b));
        return branch_excursion_product_moments(law, s, l, mean_eta,
                                                batch_size(n_traps, nb_t, b), params, 200, r);
      });
      ProductMoments pm;
      for (const auto& part : parts) pm.absorb(part);
      truncated += pm.truncated;
      Rung rung;
      rung.varsigma = varsigma[vi];
      rung.k = k;
      rung.est = centred_exponent_from_moments(n_scale, gamma, l, lambda, pm);
      ctx.row("centred_excursion_exponent",
              P().kv("varsigma", varsigma[vi]).kv("k", k).kv("n", static_cast<long>(n_scale)),
              rung.est.value, rung.est.se, rung.est.n_traps);
      rungs.push_back(rung);
    }
  }
  ctx.check(0, "no ladder excursion hit the step cap", truncated == 0,
            "truncated=" + std::to_string(truncated));
  auto band = [&](const Rung& a, const Rung& b) {
    const double dslope = a.est.mean_slope - b.est.mean_slope;
    return 3.0 * std::sqrt(a.est.se * a.est.se + b.est.se * b.est.se +
                           dslope * dslope * mean_se * mean_se);
  };
  for (double vs : varsigma) {
    std::vector<const Rung*> ladder;
    for (const auto& r : rungs)
      if (r.varsigma == vs) ladder.push_back(&r);
    bool stable = true;
    double worst = 0.0;
    for (std::size_t i = 0; i < ladder.size(); ++i)
      for (std::size_t j = i + 1; j < ladder.size(); ++j) {
        const double gap = std::fabs(ladder[i]->est.value - ladder[j]->est.value);
        const double w = band(*ladder[i], *ladder[j]);
        worst = std::max(worst, w > 0.0 ? gap / w : (gap > 0.0 ? 1e18 : 0.0));
        stable = stable && gap <= w;
      }
    ctx.check(16, "centred exponent stabilizes along floor(varsigma 2^k) (varsigma=" +
                      short6(vs) + ")",
              stable, "worst gap/band=" + short6(worst));
  }
  if (varsigma.size() >= 2) {
    const Rung *a = nullptr, *b = nullptr;
    for (const auto& r : rungs) {
      if (r.k == k_max && r.varsigma == varsigma[0]) a = &r;
      if (r.k == k_max && r.varsigma == varsigma[1]) b = &r;
    }
    const double gap = a && b ? std::fabs(a->est.value - b->est.value) : 0.0;
    const double w = a && b ? band(*a, *b) : 0.0;
    ctx.check(16, "interleaved ladder separates from the integer ladder",
              a && b && gap > w,
              "gap=" + short6(gap) + " band=" + short6(w) +
                  " (lattice oscillation is far below Monte Carlo resolution)");
  }
  return out;
}

// --- dispatcher ---------------------------------------------------------------

inline RecipeOutput run_recipe(const RunConfig& cfg) {
  const auto violations = validate_config(cfg);
  if (!violations.empty()) {
    std::string what = "invalid configuration:";
    for (const auto& v : violations) what += "\n  - " + v;
    throw std::invalid_argument(what);
  }
  const nlohmann::json p = merged_params(cfg);
  const std::string& r = cfg.recipe;
  if (r == "speed-scenery") return run_speed_scenery(cfg, p);
  if (r == "occupation") return run_occupation(cfg, p);
  if (r == "regeneration") return run_regeneration(cfg, p);
  if (r == "stabcon") return run_stabcon(cfg, p);
  if (r == "logass") return run_logass(cfg, p);
  if (r == "height-cdf") return run_height_cdf(cfg, p);
  if (r == "excursion-decomp") return run_excursion_decomp(cfg, p);
  if (r == "laplace-identity") return run_laplace_identity(cfg, p);
  if (r == "j1-failure") return run_j1_failure(cfg, p);
  if (r == "lattice-probe") return run_lattice_probe(cfg, p);
  if (r == "gwt-fluctuations") return run_gwt_fluctuations(cfg, p);
  throw std::invalid_argument("unknown recipe: " + r);
}

}  // namespace rtrw
