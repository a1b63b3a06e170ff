#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ldsgd/bounds.hpp"
#include "ldsgd/engine.hpp"
#include "ldsgd/mixing.hpp"
#include "ldsgd/problems.hpp"
#include "ldsgd/runner.hpp"
#include "ldsgd/schemes.hpp"

namespace py = pybind11;
using namespace ldsgd;

namespace {

py::dict trace_to_dict(const RunTrace& trace) {
  const std::size_t m = trace.points.size();
  py::array_t<std::int64_t> steps(m), comms(m);
  py::array_t<double> loss(m), grad_norm_sq(m), res(m);
  auto steps_w = steps.mutable_unchecked<1>();
  auto comms_w = comms.mutable_unchecked<1>();
  auto loss_w = loss.mutable_unchecked<1>();
  auto gns_w = grad_norm_sq.mutable_unchecked<1>();
  auto res_w = res.mutable_unchecked<1>();
  for (std::size_t i = 0; i < m; ++i) {
    steps_w(i) = trace.points[i].step;
    comms_w(i) = trace.points[i].comms;
    loss_w(i) = trace.points[i].loss;
    gns_w(i) = trace.points[i].grad_norm_sq;
    res_w(i) = trace.points[i].residual;
  }
  py::dict out;
  out["step"] = steps;
  out["loss"] = loss;
  out["grad_norm_sq"] = grad_norm_sq;
  out["residual"] = res;
  out["comms"] = comms;
  out["mean_grad_norm_sq"] = trace.mean_grad_norm_sq;
  out["total_comms"] = trace.total_comms;
  out["horizon"] = trace.horizon;
  out["seed"] = trace.seed;
  out["rule"] = to_string(trace.rule);
  out["final_loss"] = trace.final_loss;
  out["final_residual"] = trace.final_residual;
  return out;
}

py::dict constants_to_dict(const ProblemConstants& c) {
  py::dict out;
  out["smoothness_l"] = c.smoothness_l;
  out["grad_variance"] = c.grad_variance;
  out["noniid_kappa"] = c.noniid_kappa;
  out["init_error"] = c.init_error;
  out["nodes"] = c.nodes;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Decentralized SGD with scheduled local updates: simulator and "
            "bound-verification toolkit";

  py::register_exception<Error>(m, "LdsgdError");

  py::class_<MixingMatrix>(m, "MixingMatrix")
      .def_static("complete", &MixingMatrix::complete, py::arg("n"))
      .def_static("ring", &MixingMatrix::ring, py::arg("n"), py::arg("self_weight"))
      .def_static("random_regular", &MixingMatrix::random_regular, py::arg("n"),
                  py::arg("degree"), py::arg("seed"))
      .def_static("from_weights", &MixingMatrix::from_weights, py::arg("weights"))
      .def_property_readonly("n", &MixingMatrix::nodes)
      .def_property_readonly("rho", &MixingMatrix::rho)
      .def_property_readonly("weights",
                             [](const MixingMatrix& w) { return w.weights(); });

  m.def("spectral_rho", &spectral_rho, py::arg("weights"));

  py::class_<CommScheme>(m, "CommScheme")
      .def_static("i0", &CommScheme::i0, py::arg("interval"), py::arg("horizon"))
      .def_static("i1", &CommScheme::i1, py::arg("local_steps"), py::arg("gossip_steps"),
                  py::arg("horizon"))
      .def_static("i2", &CommScheme::i2, py::arg("local_steps"), py::arg("gossip_steps"),
                  py::arg("stage_rounds"), py::arg("horizon"))
      .def_static("explicit_set", &CommScheme::explicit_set, py::arg("members"),
                  py::arg("horizon"))
      .def_property_readonly("horizon", &CommScheme::horizon)
      .def_property_readonly("members",
                             [](const CommScheme& s) { return s.members(); })
      .def_property_readonly("label", &CommScheme::label)
      .def("contains", &CommScheme::contains, py::arg("t"))
      .def("comms_through", &CommScheme::comms_through, py::arg("t"))
      .def("gap", &CommScheme::gap)
      .def("rho_exponent", &CommScheme::rho_exponent, py::arg("s"), py::arg("t"));

  m.def("i2_min_horizon", &i2_min_horizon, py::arg("local_steps"), py::arg("gossip_steps"),
        py::arg("stage_rounds"));

  py::class_<SchemeStats>(m, "SchemeStats")
      .def_readonly("a_t", &SchemeStats::a_t)
      .def_readonly("b_t", &SchemeStats::b_t)
      .def_readonly("c_t", &SchemeStats::c_t)
      .def_readonly("gap", &SchemeStats::gap)
      .def_property_readonly("variant",
                             [](const SchemeStats& s) { return to_string(s.variant); })
      .def("__repr__", [](const SchemeStats& s) {
        return "SchemeStats(a_t=" + std::to_string(s.a_t) + ", b_t=" + std::to_string(s.b_t) +
               ", c_t=" + std::to_string(s.c_t) + ", gap=" + std::to_string(s.gap) + ")";
      });

  auto stats_wrap = [](const CommScheme& s, double rho, const std::string& variant,
                       auto&& fn) { return fn(s, rho, rule_from_string(variant)); };
  m.def(
      "exact_stats",
      [stats_wrap](const CommScheme& s, double rho, const std::string& variant) {
        return stats_wrap(s, rho, variant,
                          [](auto&&... a) { return exact_stats(a...); });
      },
      py::arg("scheme"), py::arg("rho"), py::arg("variant") = "after");
  m.def(
      "exact_stats_ab",
      [stats_wrap](const CommScheme& s, double rho, const std::string& variant) {
        return stats_wrap(s, rho, variant,
                          [](auto&&... a) { return exact_stats_ab(a...); });
      },
      py::arg("scheme"), py::arg("rho"), py::arg("variant") = "after");
  m.def(
      "definitional_stats",
      [stats_wrap](const CommScheme& s, double rho, const std::string& variant) {
        return stats_wrap(s, rho, variant,
                          [](auto&&... a) { return definitional_stats(a...); });
      },
      py::arg("scheme"), py::arg("rho"), py::arg("variant") = "after");

  py::class_<ProblemConstants>(m, "ProblemConstants")
      .def(py::init([](double l, double sigma_sq, double kappa_sq, double delta, int nodes) {
             return ProblemConstants{l, sigma_sq, kappa_sq, delta, nodes};
           }),
           py::arg("smoothness_l"), py::arg("grad_variance"), py::arg("noniid_kappa"),
           py::arg("init_error"), py::arg("nodes"))
      .def_readwrite("smoothness_l", &ProblemConstants::smoothness_l)
      .def_readwrite("grad_variance", &ProblemConstants::grad_variance)
      .def_readwrite("noniid_kappa", &ProblemConstants::noniid_kappa)
      .def_readwrite("init_error", &ProblemConstants::init_error)
      .def_readwrite("nodes", &ProblemConstants::nodes);

  m.def("lr_ceiling", &lr_ceiling, py::arg("constants"), py::arg("c_t"));
  m.def(
      "grad_norm_bound",
      [](const ProblemConstants& c, double eta, int horizon, const SchemeStats& stats) {
        const BoundValue v = grad_norm_bound(c, eta, horizon, stats);
        return py::make_tuple(v.value, v.in_regime);
      },
      py::arg("constants"), py::arg("eta"), py::arg("horizon"), py::arg("stats"));
  m.def(
      "grad_norm_bound_speedup",
      [](const ProblemConstants& c, int horizon, const SchemeStats& stats) {
        const BoundValue v = grad_norm_bound_speedup(c, horizon, stats);
        return py::make_tuple(v.value, v.in_regime);
      },
      py::arg("constants"), py::arg("horizon"), py::arg("stats"));
  m.def(
      "gap_bounds",
      [](int gap, double rho) {
        const GapBounds b = gap_bounds(gap, rho);
        py::dict out;
        out["a_stated"] = b.a_stated;
        out["a_proof"] = b.a_proof;
        out["bc"] = b.bc;
        return out;
      },
      py::arg("gap"), py::arg("rho"));
  m.def(
      "alternating_bounds",
      [](int local_steps, int gossip_steps, double rho) {
        const AlternatingBounds b = alternating_bounds(local_steps, gossip_steps, rho);
        py::dict out;
        out["a_bound"] = b.a_bound;
        out["k"] = b.k;
        return out;
      },
      py::arg("local_steps"), py::arg("gossip_steps"), py::arg("rho"));
  m.def(
      "staged_bounds",
      [](int local_steps, int gossip_steps, int stage_rounds, double rho, int horizon) {
        const StagedBounds b = staged_bounds(local_steps, gossip_steps, stage_rounds, rho, horizon);
        py::dict out;
        out["a_bound"] = b.a_bound;
        out["b_bound"] = b.b_bound;
        out["c_bound"] = b.c_bound;
        out["a_bound_sharp"] = b.a_bound_sharp;
        out["b_bound_sharp"] = b.b_bound_sharp;
        out["k"] = b.k;
        out["min_horizon"] = b.min_horizon;
        return out;
      },
      py::arg("local_steps"), py::arg("gossip_steps"), py::arg("stage_rounds"), py::arg("rho"),
      py::arg("horizon"));
  m.def(
      "before_rule_bounds_for",
      [](int local_steps, int gossip_steps, double rho) {
        const BeforeRuleBounds b = before_rule_bounds_for(local_steps, gossip_steps, rho);
        py::dict out;
        out["a_bound"] = b.a_bound;
        out["k_tilde"] = b.k_tilde;
        return out;
      },
      py::arg("local_steps"), py::arg("gossip_steps"), py::arg("rho"));

  py::class_<Problem, std::shared_ptr<Problem>>(m, "Problem")
      .def_property_readonly("dim", &Problem::dim)
      .def_property_readonly("nodes", &Problem::nodes)
      .def_property_readonly("constants",
                             [](const Problem& p) { return constants_to_dict(p.constants()); })
      .def_property_readonly("constants_estimated", &Problem::constants_estimated)
      .def("objective", &Problem::objective, py::arg("x"))
      .def("full_gradient", &Problem::full_gradient, py::arg("x"))
      .def("node_gradient", &Problem::node_gradient, py::arg("node"), py::arg("x"));

  py::class_<QuadraticProblem, Problem, std::shared_ptr<QuadraticProblem>>(m,
                                                                           "QuadraticProblem")
      .def_property_readonly("hessian",
                             [](const QuadraticProblem& p) { return p.hessian(); })
      .def_property_readonly("minimizer",
                             [](const QuadraticProblem& p) { return p.minimizer(); })
      .def_property_readonly("min_value", &QuadraticProblem::min_value);
  py::class_<LogisticProblem, Problem, std::shared_ptr<LogisticProblem>>(m, "LogisticProblem")
      .def_property_readonly("samples_per_node", &LogisticProblem::samples_per_node)
      .def_property_readonly("has_single_class_node", &LogisticProblem::has_single_class_node)
      .def_property_readonly("probe_description", &LogisticProblem::probe_description);

  m.def("make_quadratic", &make_quadratic, py::arg("dim"), py::arg("nodes"),
        py::arg("kappa_target"), py::arg("sigma"), py::arg("cond") = 10.0, py::arg("seed") = 0);
  m.def("make_logistic", &make_logistic, py::arg("dim"), py::arg("nodes"),
        py::arg("samples_per_node"), py::arg("label_skew") = 0.0, py::arg("seed") = 0);

  m.def(
      "run",
      [](const Problem& problem, const MixingMatrix& w, const CommScheme& scheme, double eta,
         std::uint64_t seed, const std::string& rule, std::int64_t eval_every, int threads) {
        RunOptions opts;
        opts.eta = eta;
        opts.seed = seed;
        opts.rule = rule_from_string(rule);
        opts.eval_every = eval_every;
        opts.threads = threads;
        return trace_to_dict(run(problem, w, scheme, opts));
      },
      py::arg("problem"), py::arg("w"), py::arg("scheme"), py::arg("eta"), py::arg("seed") = 0,
      py::arg("rule") = "after", py::arg("eval_every") = 1, py::arg("threads") = 1);

  m.def(
      "estimate_mean_grad_norm",
      [](const Problem& problem, const MixingMatrix& w, const CommScheme& scheme, double eta,
         const std::vector<std::uint64_t>& seeds, const std::string& rule, int threads) {
        const GradNormEstimate est =
            estimate_mean_grad_norm(problem, w, scheme, eta, seeds, rule_from_string(rule), threads);
        py::dict out;
        out["mean"] = est.mean;
        out["stderr"] = est.stderr_;
        out["per_seed"] = est.per_seed;
        out["divergent_seeds"] = est.divergent_seeds;
        return out;
      },
      py::arg("problem"), py::arg("w"), py::arg("scheme"), py::arg("eta"), py::arg("seeds"),
      py::arg("rule") = "after", py::arg("threads") = 1);

  m.def(
      "run_verify_battery",
      [](double stats_scale, bool run_monte_carlo, int threads) {
        VerifyOptions opts;
        opts.stats_scale = stats_scale;
        opts.run_monte_carlo = run_monte_carlo;
        opts.threads = threads;
        const VerifyReport report = run_verify_battery(opts);
        py::dict out;
        out["all_pass"] = report.all_pass;
        py::list checks;
        for (const auto& c : report.checks) {
          py::dict d;
          d["name"] = c.name;
          d["pass"] = c.pass;
          d["metric"] = c.metric;
          d["threshold"] = c.threshold;
          checks.append(d);
        }
        out["checks"] = checks;
        return out;
      },
      py::arg("stats_scale") = 1.0, py::arg("run_monte_carlo") = true, py::arg("threads") = 1);

  m.attr("__version__") = "0.1.0";
}
