#include <cmath>
#include <fstream>

#include "ldsgd/bounds.hpp"
#include "ldsgd/runner.hpp"

namespace ldsgd {

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& msg) { fail(Errc::invalid_config, msg); }

const json& require_field(const json& j, const char* name, const char* where) {
  if (!j.is_object() || !j.contains(name)) {
    config_fail(std::string("missing field '") + name + "' in " + where);
  }
  return j.at(name);
}

int require_int(const json& j, const char* name, const char* where) {
  const json& v = require_field(j, name, where);
  if (!v.is_number_integer()) {
    config_fail(std::string("field '") + name + "' in " + where + " must be an integer");
  }
  return v.get<int>();
}

double require_number(const json& j, const char* name, const char* where) {
  const json& v = require_field(j, name, where);
  if (!v.is_number()) {
    config_fail(std::string("field '") + name + "' in " + where + " must be a number");
  }
  return v.get<double>();
}

double number_or(const json& j, const char* name, double fallback) {
  if (!j.is_object() || !j.contains(name)) return fallback;
  return j.at(name).get<double>();
}

}  // namespace

MixingMatrix build_topology(const json& spec) {
  const std::string kind = require_field(spec, "kind", "topology").get<std::string>();
  if (kind == "complete") {
    return MixingMatrix::complete(require_int(spec, "n", "topology"));
  }
  if (kind == "ring") {
    return MixingMatrix::ring(require_int(spec, "n", "topology"),
                              require_number(spec, "self_weight", "topology"));
  }
  if (kind == "random_regular") {
    return MixingMatrix::random_regular(
        require_int(spec, "n", "topology"), require_int(spec, "degree", "topology"),
        static_cast<std::uint64_t>(require_int(spec, "seed", "topology")));
  }
  if (kind == "custom") {
    const json& rows = require_field(spec, "weights", "topology");
    if (!rows.is_array() || rows.empty()) config_fail("custom topology weights must be rows");
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i) {
      const json& row = rows.at(i);
      if (!row.is_array() || static_cast<int>(row.size()) != n) {
        config_fail("custom topology weights must form a square row-major matrix");
      }
      for (int j = 0; j < n; ++j) w(i, j) = row.at(j).get<double>();
    }
    return MixingMatrix::from_weights(std::move(w));
  }
  config_fail("topology kind must be one of complete|ring|random_regular|custom");
}

CommScheme build_scheme(const json& spec, int horizon) {
  const std::string kind = require_field(spec, "kind", "scheme").get<std::string>();
  if (kind == "i0") return CommScheme::i0(require_int(spec, "i", "scheme"), horizon);
  if (kind == "i1") {
    return CommScheme::i1(require_int(spec, "i1", "scheme"), require_int(spec, "i2", "scheme"),
                          horizon);
  }
  if (kind == "i2") {
    return CommScheme::i2(require_int(spec, "i1", "scheme"), require_int(spec, "i2", "scheme"),
                          require_int(spec, "m", "scheme"), horizon);
  }
  if (kind == "explicit") {
    const json& arr = require_field(spec, "members", "scheme");
    if (!arr.is_array()) config_fail("explicit scheme members must be an array");
    std::vector<int> members;
    members.reserve(arr.size());
    for (const auto& v : arr) members.push_back(v.get<int>());
    return CommScheme::explicit_set(std::move(members), horizon);
  }
  config_fail("scheme kind must be one of i0|i1|i2|explicit");
}

std::shared_ptr<Problem> build_problem(const json& spec) {
  const std::string family = require_field(spec, "family", "problem").get<std::string>();
  if (family == "quadratic") {
    return make_quadratic(require_int(spec, "dim", "problem"),
                          require_int(spec, "nodes", "problem"),
                          require_number(spec, "kappa", "problem"),
                          require_number(spec, "sigma", "problem"),
                          number_or(spec, "cond", 10.0),
                          static_cast<std::uint64_t>(require_int(spec, "seed", "problem")));
  }
  if (family == "logistic") {
    return make_logistic(require_int(spec, "dim", "problem"),
                         require_int(spec, "nodes", "problem"),
                         require_int(spec, "samples_per_node", "problem"),
                         require_number(spec, "label_skew", "problem"),
                         static_cast<std::uint64_t>(require_int(spec, "seed", "problem")));
  }
  config_fail("problem family must be quadratic or logistic");
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) config_fail("configuration must be a JSON object");
  RunConfig cfg;
  cfg.raw = j;
  cfg.topology = require_field(j, "topology", "config");
  cfg.scheme = require_field(j, "scheme", "config");
  cfg.problem = require_field(j, "problem", "config");
  cfg.horizon = require_int(j, "horizon", "config");
  if (cfg.horizon < 1) config_fail("horizon must be positive");

  const json& eta = require_field(j, "eta", "config");
  if (eta.is_string() && eta.get<std::string>() == "auto") {
    cfg.eta_auto = true;
  } else if (eta.is_number()) {
    cfg.eta = eta.get<double>();
    if (!(cfg.eta >= 0.0)) config_fail("eta must be nonnegative");
  } else {
    config_fail("eta must be a number or \"auto\"");
  }

  const json& seeds = require_field(j, "seeds", "config");
  if (!seeds.is_array() || seeds.empty()) config_fail("seeds must be a nonempty array");
  for (const auto& s : seeds) cfg.seeds.push_back(s.get<std::uint64_t>());

  cfg.rule = rule_from_string(j.value("rule", "after"));
  cfg.eval_every = j.value("eval_every", std::int64_t{1});
  if (cfg.eval_every < 1) config_fail("eval_every must be positive");
  cfg.out_dir = j.value("out_dir", std::string("out"));
  cfg.threads = j.value("threads", 1);
  if (cfg.threads < 1) config_fail("threads must be positive");
  cfg.log_gradients = j.value("log_gradients", false);
  cfg.verify_decomposition = j.value("verify_decomposition", false);
  cfg.verify_bounds = j.value("verify_bounds", false);
  if (cfg.verify_decomposition) cfg.log_gradients = true;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    config_fail("config parse error in " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

double resolve_eta(const RunConfig& cfg, const Problem& problem, const MixingMatrix& w,
                   const CommScheme& scheme) {
  if (!cfg.eta_auto) return cfg.eta;
  double c_t;
  if (scheme.horizon() <= kStatsHorizonCapFull) {
    c_t = exact_stats(scheme, w.rho(), cfg.rule).c_t;
  } else {
    c_t = gap_bounds(scheme.gap(), w.rho()).bc;  // valid upper bound, smaller ceiling
  }
  const double ceiling = lr_ceiling(problem.constants(), c_t);
  const double cor1 = std::sqrt(static_cast<double>(problem.nodes()) / scheme.horizon());
  return std::min(ceiling, cor1);
}

}  // namespace ldsgd
