#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lpiopt/bench.hpp"
#include "lpiopt/interpolation.hpp"
#include "lpiopt/multiindex.hpp"
#include "lpiopt/optimizer.hpp"
#include "lpiopt/spectra.hpp"

namespace py = pybind11;

namespace {

std::vector<std::vector<int>> index_set(int d, int l) {
  std::vector<std::vector<int>> out;
  const lpiopt::BasisLayout layout(d, l);
  for (const auto& s : layout.indices()) out.push_back(s.entries());
  return out;
}

Eigen::VectorXd u_vector(int d, int l, const std::vector<double>& u) {
  return lpiopt::u_vector(lpiopt::BasisLayout(d, l), u);
}

py::dict interpolation_weights(int m, int d, double h, int l, const std::string& kernel,
                               const std::vector<double>& x) {
  lpiopt::InterpConfig cfg;
  cfg.m = m;
  cfg.h = h;
  cfg.l = l;
  cfg.kernel = lpiopt::kernel_by_name(kernel);
  cfg.validate();
  const auto grid = lpiopt::uniform_grid(m, d);
  const auto fit = lpiopt::local_fit(cfg, grid, x);
  std::vector<std::uint64_t> idx;
  std::vector<double> w;
  std::vector<std::vector<double>> pts;
  for (const auto& [i, wi] : fit.weights) {
    idx.push_back(i);
    w.push_back(wi);
    pts.push_back(grid.point(i));
  }
  py::dict out;
  out["indices"] = idx;
  out["weights"] = w;
  out["points"] = pts;
  out["condition"] = fit.condition;
  out["lambda_min"] = fit.lambda_min;
  return out;
}

py::dict theory_schedule(double sigma, double mu, double gap, double p, double epsilon, int d, double eta) {
  lpiopt::ScheduleInputs in;
  in.sigma = sigma;
  in.mu = mu;
  in.gap = gap;
  in.p = p;
  in.epsilon = epsilon;
  in.d = d;
  in.eta = eta;
  const auto s = lpiopt::theory_schedule(in);
  py::dict out;
  out["T"] = s.T;
  out["delta"] = s.delta;
  out["log10_m"] = s.log10_m;
  out["log_h"] = s.log_h;
  out["infeasible"] = s.infeasible;
  return out;
}

py::dict oracle_bound(double mu, double L1, double L2, double p, int d, double eta, int l, double epsilon,
                      double F_gap, double n) {
  lpiopt::BoundInputs in;
  in.mu = mu;
  in.L1 = L1;
  in.L2 = L2;
  in.p = p;
  in.d = d;
  in.eta = eta;
  in.l = l;
  in.epsilon = epsilon;
  in.F_gap = F_gap;
  in.n = n;
  const auto b = lpiopt::oracle_bound_eval(in);
  py::dict out;
  out["log_C"] = b.log_C;
  out["log_lpi"] = b.log_lpi;
  out["gd_bound"] = b.gd_bound;
  out["sgd_bound"] = b.sgd_bound;
  out["precondition_ok"] = b.precondition_ok;
  return out;
}

std::string scaling_table_csv(double alpha, double beta, double tau, double gamma, const std::vector<double>& ns) {
  return lpiopt::scaling_table({alpha, beta, tau, gamma}, ns).to_csv();
}

py::tuple optimize(const std::string& config_path) {
  std::ostringstream out, err;
  const int code = lpiopt::run_experiment_file(config_path, out, err);
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_lpiopt, m) {
  m.doc() = "Local polynomial interpolation gradient descent";
  m.attr("__version__") = lpiopt::kVersion;

  m.def("multi_index_set", &index_set, py::arg("d"), py::arg("l"));
  m.def("u_vector", &u_vector, py::arg("d"), py::arg("l"), py::arg("u"));
  m.def("script_b_matrix", [](int d, int l) { return lpiopt::script_b_matrix(d, l).to_double(); }, py::arg("d"),
        py::arg("l"));
  m.def("legendre", &lpiopt::legendre, py::arg("k"), py::arg("t"));
  m.def("lambda_log", [](int d, int l) { return lpiopt::lambda_log(d, l).log_value; }, py::arg("d"), py::arg("l"));
  m.def("det_identity_gap", [](int d, int l) { return lpiopt::det_identity_check(d, l).relative_gap; },
        py::arg("d"), py::arg("l"));
  m.def("interpolation_weights", &interpolation_weights, py::arg("m"), py::arg("d"), py::arg("h"), py::arg("l"),
        py::arg("kernel"), py::arg("x"));
  m.def("theory_schedule", &theory_schedule, py::arg("sigma"), py::arg("mu"), py::arg("gap"), py::arg("p"),
        py::arg("epsilon"), py::arg("d") = 1, py::arg("eta") = 3.0);
  m.def("oracle_bound", &oracle_bound, py::arg("mu"), py::arg("L1"), py::arg("L2"), py::arg("p"), py::arg("d"),
        py::arg("eta"), py::arg("l"), py::arg("epsilon"), py::arg("F_gap"), py::arg("n") = 1.0);
  m.def("rate_fit", &lpiopt::rate_fit, py::arg("xs"), py::arg("ys"));
  m.def("scaling_table_csv", &scaling_table_csv, py::arg("alpha"), py::arg("beta"), py::arg("tau"),
        py::arg("gamma"), py::arg("ns"));
  m.def("optimize", &optimize, py::arg("config_path"),
        "Runs an experiment config; returns (exit_code, stdout, stderr).");
}
