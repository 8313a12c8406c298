#pragma once

// Run configuration for the experiment recipes: a JSON parameter document
// plus recipe name, master seed, worker count, and output directory.
// Provides file loading, `key=value` command-line overrides, per-recipe
// default parameters, and validation that returns the list of violated
// constraints instead of throwing.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace rtrw {

struct RunConfig {
  std::string recipe;
  nlohmann::json params = nlohmann::json::object();
  std::string out_dir = "out";
  std::uint64_t seed = 20260817;
  unsigned workers = 0;  // 0 = all available
};

// Canonical recipe list; the position doubles as the replica-stream base so
// different recipes never share random streams under one master seed.
inline const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names = {
      "speed-scenery",     "occupation",       "regeneration", "stabcon",
      "logass",            "height-cdf",       "excursion-decomp",
      "laplace-identity",  "j1-failure",       "lattice-probe",
      "gwt-fluctuations"};
  return names;
}

inline int recipe_index(const std::string& name) {
  const auto& names = recipe_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

// Pinned default parameters per recipe. These are the exact parameter sets
// the acceptance checks run at; config files and --set override them.
inline nlohmann::json recipe_default_params(const std::string& recipe) {
  using json = nlohmann::json;
  json p = json::object();
  auto geometric_third = [] {
    return json{{"family", "geometric"}, {"p", 1.0 / 3.0}};
  };
  if (recipe == "speed-scenery") {
    p["alpha"] = 1.5;
    p["beta"] = 2.0;
    p["betas"] = json::array({1.5, 2.0, 3.0});
    p["n_embedded"] = 1000000;
    p["embedded_replicas"] = 100;
    p["clock_time"] = 1.0e6;
    p["speed_replicas"] = 50;
    p["speed_tol"] = 0.01;
  } else if (recipe == "occupation") {
    p["beta"] = 3.0;
    p["n_steps"] = 1000000;
    p["levels"] = json::array({1, 2});
    p["freq_tol"] = 0.01;
    p["origin_beta"] = 2.0;
    p["origin_replicas"] = 100000;
    p["origin_level"] = 60;
    p["origin_bins"] = 12;
  } else if (recipe == "regeneration") {
    p["beta"] = 2.0;
    p["n_blocks"] = 100000;
    p["buffer"] = 60;
    p["batches"] = 20;
    p["slope_l_lo"] = 2;
    p["slope_l_hi"] = 8;
    p["slope_slack"] = 0.1;
  } else if (recipe == "stabcon") {
    p["alpha"] = 0.5;
    p["n_scale"] = 10000;
    p["n_samples"] = 60000000;
    p["lambda"] = 1.0;
    p["scaling_lambda"] = 2.0;
    p["exponent_tol"] = 0.1;
  } else if (recipe == "logass") {
    p["alpha"] = 1.5;
    p["n_scale"] = 10000;
    p["n_samples"] = 20000000;
    p["lambda"] = 1.0;
    p["l_values"] = json::array({1, 2, 3});
  } else if (recipe == "height-cdf") {
    p["offspring"] = geometric_third();
    p["n_max"] = 44;
    p["monotone_to"] = 40;
    p["cauchy_from"] = 40;
    p["cauchy_tol"] = 1e-6;
  } else if (recipe == "excursion-decomp") {
    p["offspring"] = geometric_third();
    p["beta"] = 1.6;
    p["n_excursions"] = 1000000;
    p["batches"] = 50;
    p["step_cap"] = 100000000;
    p["ruin_beta"] = 2.0;
    p["ruin_depths"] = json::array({2, 3, 4});
    p["ruin_trials"] = 100000;
  } else if (recipe == "laplace-identity") {
    p["offspring"] = geometric_third();
    p["beta"] = 1.7;
    p["n_branches"] = 5;
    p["min_nodes"] = 3;
    p["max_nodes"] = 50;
    p["n_excursions"] = 1000000;
    p["s_values"] = json::array({0.01, 0.1, 1.0});
    p["step_cap"] = 100000000;
    p["id_beta"] = 1.6;
    p["id_lambda"] = 1.0;
    p["id_scale"] = 10000.0;
    p["id_samples"] = 400000;
  } else if (recipe == "j1-failure") {
    p["alpha"] = 1.5;
    p["beta"] = 2.0;
    p["horizon"] = 1.0;
    p["lambda"] = 1.0;
    p["n_scale"] = 100000;
    p["h_values"] = json::array({0.1, 0.03, 0.01});
    p["replicas"] = 100;
    p["control_replicas"] = 60;
    p["control_target"] = 1e-3;
    p["suite_paths"] = 1000;
  } else if (recipe == "lattice-probe") {
    p["offspring"] = geometric_third();
    p["beta"] = 1.6;
    p["lambda"] = 1.0;
    p["t_values"] = json::array({64.0, 96.0, 128.0, 192.0, 256.0});
    p["varsigma"] = json::array({1.0, std::sqrt(2.0)});
    p["k_min"] = 8;
    p["k_max"] = 16;
    p["n_trees"] = 10000;
    p["n_excursions"] = 1000;
    p["tree_batches"] = 100;
    p["tail_n_max"] = 64;
  } else if (recipe == "gwt-fluctuations") {
    p["offspring"] = geometric_third();
    p["beta"] = 1.6;
    p["n_samples"] = 1000000;
    p["sample_batches"] = 100;
    p["fit_t_min"] = 600.0;
    p["fit_t_max"] = 3932.16;
    p["index_tol"] = 0.15;
    p["varsigma"] = json::array({1.0, std::sqrt(2.0)});
    p["k_min"] = 17;
    p["k_max"] = 22;
    p["lambda"] = 1.0;
    p["l"] = 1;
    p["mean_batch"] = 10000000;
    p["traps_factor"] = 4;
    p["traps_min"] = 1000000;
    p["traps_cap"] = 20000000;
    p["trap_batches"] = 100;
    p["step_cap"] = 100000000;
  } else {
    throw std::invalid_argument("unknown recipe: " + recipe);
  }
  return p;
}

// Defaults overridden by the config document's params (deep merge: nested
// objects merge key-wise, everything else is replaced).
inline nlohmann::json merged_params(const RunConfig& c) {
  nlohmann::json p = recipe_default_params(c.recipe);
  if (c.params.is_object()) {
    p.merge_patch(c.params);
  } else if (!c.params.is_null()) {
    throw std::invalid_argument("params must be a JSON object");
  }
  return p;
}

// --- typed parameter accessors -------------------------------------------

inline double cfg_num(const nlohmann::json& p, const std::string& key) {
  if (!p.contains(key) || !p[key].is_number())
    throw std::invalid_argument("parameter '" + key + "' must be a number");
  return p[key].get<double>();
}

inline long cfg_int(const nlohmann::json& p, const std::string& key) {
  if (!p.contains(key) || !p[key].is_number_integer())
    throw std::invalid_argument("parameter '" + key + "' must be an integer");
  return p[key].get<long>();
}

inline std::string cfg_str(const nlohmann::json& p, const std::string& key) {
  if (!p.contains(key) || !p[key].is_string())
    throw std::invalid_argument("parameter '" + key + "' must be a string");
  return p[key].get<std::string>();
}

inline std::vector<double> cfg_num_array(const nlohmann::json& p, const std::string& key) {
  if (!p.contains(key) || !p[key].is_array() || p[key].empty())
    throw std::invalid_argument("parameter '" + key + "' must be a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& v : p[key]) {
    if (!v.is_number())
      throw std::invalid_argument("parameter '" + key + "' must be a non-empty array of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::vector<long> cfg_int_array(const nlohmann::json& p, const std::string& key) {
  if (!p.contains(key) || !p[key].is_array() || p[key].empty())
    throw std::invalid_argument("parameter '" + key + "' must be a non-empty array of integers");
  std::vector<long> out;
  for (const auto& v : p[key]) {
    if (!v.is_number_integer())
      throw std::invalid_argument("parameter '" + key + "' must be a non-empty array of integers");
    out.push_back(v.get<long>());
  }
  return out;
}

// --- loading and overrides ------------------------------------------------

inline RunConfig parse_config_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("config document must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "recipe") {
      if (!value.is_string()) throw std::invalid_argument("config field 'recipe' must be a string");
      c.recipe = value.get<std::string>();
    } else if (key == "params") {
      if (!value.is_object()) throw std::invalid_argument("config field 'params' must be an object");
      c.params = value;
    } else if (key == "out") {
      if (!value.is_string()) throw std::invalid_argument("config field 'out' must be a string");
      c.out_dir = value.get<std::string>();
    } else if (key == "seed") {
      if (!value.is_number_unsigned() && !value.is_number_integer())
        throw std::invalid_argument("config field 'seed' must be a nonnegative integer");
      if (value.is_number_integer() && !value.is_number_unsigned() && value.get<long long>() < 0)
        throw std::invalid_argument("config field 'seed' must be a nonnegative integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "workers") {
      if (!value.is_number_integer() || value.get<long long>() < 0)
        throw std::invalid_argument("config field 'workers' must be a nonnegative integer");
      c.workers = value.get<unsigned>();
    } else {
      throw std::invalid_argument("unknown config field: " + key);
    }
  }
  return c;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw std::runtime_error("config file is not valid JSON: " + path);
  return parse_config_json(doc);
}

// Applies one `key=value` override. The value is parsed as JSON when
// possible (numbers, booleans, arrays, objects) and kept as a string
// otherwise. Keys 'seed', 'workers', and 'out' target the run fields; any
// other key targets the parameter document, with '.' descending into
// nested objects (e.g. offspring.p=0.4).
inline void apply_set_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = raw;  // plain string

  if (key == "seed" || key == "workers" || key == "out") {
    nlohmann::json doc{{key, value}};
    RunConfig probe = parse_config_json(doc);
    if (key == "seed") c.seed = probe.seed;
    if (key == "workers") c.workers = probe.workers;
    if (key == "out") c.out_dir = probe.out_dir;
    return;
  }
  nlohmann::json* at = &c.params;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw std::invalid_argument("override has an empty key segment: " + assignment);
    if (dot == std::string::npos) {
      (*at)[part] = value;
      return;
    }
    if (!at->contains(part) || !(*at)[part].is_object()) (*at)[part] = nlohmann::json::object();
    at = &(*at)[part];
    start = dot + 1;
  }
}

// --- validation -------------------------------------------------------------

namespace detail {

// Mean of the configured offspring law, or -1 with a violation recorded.
inline double offspring_mean_checked(const nlohmann::json& spec,
                                     std::vector<std::string>& violations) {
  if (!spec.is_object() || !spec.contains("family") || !spec["family"].is_string()) {
    violations.push_back("offspring spec must be an object with a 'family' string");
    return -1.0;
  }
  const std::string family = spec["family"].get<std::string>();
  if (family == "geometric") {
    if (!spec.contains("p") || !spec["p"].is_number()) {
      violations.push_back("geometric offspring law requires a numeric 'p'");
      return -1.0;
    }
    const double p = spec["p"].get<double>();
    if (!(p > 0.0 && p < 1.0)) {
      violations.push_back("geometric offspring parameter p must lie in (0,1)");
      return -1.0;
    }
    const double mu = p / (1.0 - p);
    if (!(mu < 1.0)) violations.push_back("subcritical mean required");
    return mu;
  }
  if (family == "poisson") {
    if (!spec.contains("lambda") || !spec["lambda"].is_number()) {
      violations.push_back("poisson offspring law requires a numeric 'lambda'");
      return -1.0;
    }
    const double mu = spec["lambda"].get<double>();
    if (!(mu > 0.0)) {
      violations.push_back("poisson offspring parameter lambda must be positive");
      return -1.0;
    }
    if (!(mu < 1.0)) violations.push_back("subcritical mean required");
    return mu;
  }
  if (family == "pmf") {
    if (!spec.contains("pmf") || !spec["pmf"].is_array()) {
      violations.push_back("pmf offspring law requires an array 'pmf'");
      return -1.0;
    }
    const auto& arr = spec["pmf"];
    if (arr.empty()) {
      violations.push_back("offspring pmf is empty");
      return -1.0;
    }
    double total = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < arr.size(); ++k) {
      if (!arr[k].is_number()) {
        violations.push_back("offspring pmf entries must be numbers");
        return -1.0;
      }
      const double w = arr[k].get<double>();
      if (w < 0.0) {
        violations.push_back("offspring pmf has negative mass");
        return -1.0;
      }
      total += w;
      mean += static_cast<double>(k) * w;
    }
    if (!(total > 0.0)) {
      violations.push_back("offspring pmf must sum to 1");
      return -1.0;
    }
    if (std::fabs(total - 1.0) > 1e-12) violations.push_back("offspring pmf must sum to 1");
    mean /= total;
    if (!(mean < 1.0)) violations.push_back("subcritical mean required");
    const double low = (arr[0].get<double>() + (arr.size() > 1 ? arr[1].get<double>() : 0.0)) / total;
    if (arr.size() < 3 || !(low < 1.0))
      violations.push_back("offspring pmf must put mass above one child");
    return mean;
  }
  violations.push_back("unknown offspring family: " + family);
  return -1.0;
}

}  // namespace detail

// Checks the merged parameters of `c` against the regime constraints of its
// recipe; returns the violated constraints (empty means valid).
inline std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> violations;
  if (recipe_index(c.recipe) < 0) {
    violations.push_back("unknown recipe: " + (c.recipe.empty() ? "(none)" : c.recipe));
    return violations;
  }
  if (c.out_dir.empty()) violations.push_back("output directory must not be empty");

  nlohmann::json p;
  try {
    p = merged_params(c);
  } catch (const std::exception& e) {
    violations.push_back(e.what());
    return violations;
  }
  const nlohmann::json defaults = recipe_default_params(c.recipe);
  for (const auto& [key, value] : c.params.items()) {
    (void)value;
    if (!defaults.contains(key)) violations.push_back("unknown parameter: " + key);
  }

  auto check_num = [&](const std::string& key) -> double {
    try {
      return cfg_num(p, key);
    } catch (const std::exception& e) {
      violations.push_back(e.what());
      return std::nan("");
    }
  };

  const std::string& r = c.recipe;
  const bool uses_offspring = r == "height-cdf" || r == "excursion-decomp" ||
                              r == "laplace-identity" || r == "lattice-probe" ||
                              r == "gwt-fluctuations";
  const bool uses_beta = r != "height-cdf" && r != "stabcon" && r != "logass";

  double mu = -1.0;
  if (uses_offspring) mu = detail::offspring_mean_checked(p["offspring"], violations);

  if (uses_beta) {
    const double beta = check_num("beta");
    if (std::isfinite(beta) && !(beta > 1.0)) violations.push_back("beta > 1 required");
    if ((r == "lattice-probe" || r == "gwt-fluctuations") && mu > 0.0 && std::isfinite(beta)) {
      if (!(beta < 1.0 / mu)) violations.push_back("ballistic regime requires beta < 1/mu");
      if (!(beta > std::pow(mu, -0.5)))
        violations.push_back("fluctuation regime requires beta > 1/sqrt(mu)");
    }
  }
  if (r == "speed-scenery" || r == "logass" || r == "j1-failure") {
    const double alpha = check_num("alpha");
    if (std::isfinite(alpha) && !(alpha > 1.0 && alpha < 2.0))
      violations.push_back("alpha in (1,2) required for this recipe");
  }
  if (r == "lattice-probe" || r == "gwt-fluctuations") {
    try {
      if (cfg_int(p, "k_min") > cfg_int(p, "k_max"))
        violations.push_back("scale ladder requires k_min <= k_max");
    } catch (const std::exception& e) {
      violations.push_back(e.what());
    }
  }
  if (r == "speed-scenery") {
    try {
      for (double b : cfg_num_array(p, "betas"))
        if (!(b > 1.0)) violations.push_back("beta > 1 required");
    } catch (const std::exception& e) {
      violations.push_back(e.what());
    }
  }
  if (r == "occupation") {
    const double ob = check_num("origin_beta");
    if (std::isfinite(ob) && !(ob > 1.0)) violations.push_back("origin_beta > 1 required");
  }
  if (r == "stabcon") {
    const double alpha = check_num("alpha");
    if (std::isfinite(alpha) && !(alpha > 0.0 && alpha < 1.0))
      violations.push_back("alpha in (0,1) required for this recipe");
  }
  if (r == "excursion-decomp") {
    const double rb = check_num("ruin_beta");
    if (std::isfinite(rb) && !(rb > 1.0)) violations.push_back("ruin_beta > 1 required");
  }
  if (r == "laplace-identity") {
    const double ib = check_num("id_beta");
    if (std::isfinite(ib) && !(ib > 1.0)) violations.push_back("id_beta > 1 required");
  }
  if (r == "j1-failure") {
    try {
      const double horizon = cfg_num(p, "horizon");
      for (double h : cfg_num_array(p, "h_values"))
        if (!(h > 0.0 && h < horizon))
          violations.push_back("every width in h_values must satisfy 0 < h < horizon");
    } catch (const std::exception& e) {
      violations.push_back(e.what());
    }
  }
  return violations;
}

}  // namespace rtrw
