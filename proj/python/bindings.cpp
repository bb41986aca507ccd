#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "odedyn/experiments.hpp"

namespace py = pybind11;
using namespace odedyn;

PYBIND11_MODULE(_odedyn, m) {
  m.doc() = "Online SGD and overlap ODEs for two-layer teacher-student networks";

  py::register_exception<DegenerateCovariance>(m, "DegenerateCovariance", PyExc_ValueError);
  py::register_exception<IntegrationError>(m, "IntegrationError", PyExc_RuntimeError);

  py::class_<ScalingConfig>(m, "ScalingConfig")
      .def(py::init([](int d, int p0, int k, double kappa, double delta, double gamma0,
                       double noise) {
             ScalingConfig c{d, p0, k, kappa, delta, gamma0, noise};
             c.validate();
             return c;
           }),
           py::arg("d") = 1000, py::arg("p0") = 8, py::arg("k") = 4, py::arg("kappa") = 0.0,
           py::arg("delta") = 0.0, py::arg("gamma0") = 0.0, py::arg("noise") = 0.0)
      .def_readwrite("d", &ScalingConfig::d)
      .def_readwrite("p0", &ScalingConfig::p0)
      .def_readwrite("k", &ScalingConfig::k)
      .def_readwrite("kappa", &ScalingConfig::kappa)
      .def_readwrite("delta", &ScalingConfig::delta)
      .def_readwrite("gamma0", &ScalingConfig::gamma0)
      .def_readwrite("noise", &ScalingConfig::noise)
      .def_property_readonly("width", &ScalingConfig::width)
      .def_property_readonly("learning_rate", &ScalingConfig::learning_rate)
      .def_property_readonly("exponent_sum", &ScalingConfig::exponent_sum);

  py::class_<OverlapState>(m, "OverlapState")
      .def(py::init<Matrix, Matrix, Matrix>(), py::arg("Q"), py::arg("M"), py::arg("P"))
      .def_readwrite("Q", &OverlapState::Q)
      .def_readwrite("M", &OverlapState::M)
      .def_readwrite("P", &OverlapState::P)
      .def("omega", &OverlapState::omega)
      .def("min_eigenvalue", &OverlapState::min_eigenvalue)
      .def("validate", &OverlapState::validate, py::arg("psd_floor") = 1e-9);

  m.def("classify_regime",
        [](double kappa, double delta) { return std::string(to_string(classify_regime(kappa, delta))); },
        py::arg("kappa"), py::arg("delta"));
  m.def("time_step", &time_step, py::arg("config"));
  m.def("build_symmetric_teacher", &build_symmetric_teacher, py::arg("k"), py::arg("d"),
        py::arg("seed"));
  m.def("sample_combination", &sample_combination, py::arg("p"), py::arg("k"), py::arg("seed"));
  m.def("combination_overlaps", &combination_overlaps, py::arg("A"));
  m.def("overlap_from_weights", &overlap_from_weights, py::arg("W"), py::arg("Wstar"));

  m.def("closed_form",
        [](const std::string& kind, const Matrix& cov) {
          return closed_form(kernel_kind_from_string(kind), cov);
        },
        py::arg("kind"), py::arg("cov"));
  m.def("mc_kernel_oracle",
        [](const std::string& kind, const Matrix& cov, std::int64_t n, std::uint64_t seed) {
          const McEstimate e = mc_kernel_oracle(kernel_kind_from_string(kind), KernelCovariance{cov}, n, seed);
          return py::make_tuple(e.mean, e.std_error);
        },
        py::arg("kind"), py::arg("cov"), py::arg("n"), py::arg("seed"));

  m.def("population_risk",
        [](const OverlapState& s, const std::string& convention) {
          return population_risk(s, risk_convention_from_string(convention)).total;
        },
        py::arg("state"), py::arg("convention") = "half");

  m.def("rhs",
        [](const OverlapState& s, const std::string& mode, const ScalingConfig& c, bool allow_mismatch) {
          OverlapFlow f = rhs(s, ode_mode_from_string(mode), c, allow_mismatch);
          return py::make_tuple(f.Q, f.M);
        },
        py::arg("state"), py::arg("mode"), py::arg("config"), py::arg("allow_mismatch") = false);

  m.def("integrate",
        [](const OverlapState& s0, const std::string& mode, const ScalingConfig& c, double t_end,
           double dt, int record_stride, bool record_states) {
          IntegrateOptions options;
          options.record_states = record_states;
          OdeTrajectory traj;
          {
            py::gil_scoped_release release;
            traj = integrate(s0, ode_mode_from_string(mode), c, t_end, dt, record_stride, options);
          }
          py::dict out;
          out["t"] = traj.times;
          out["risk"] = traj.risks;
          if (record_states) out["states"] = traj.states;
          return out;
        },
        py::arg("state0"), py::arg("mode"), py::arg("config"), py::arg("t_end"), py::arg("dt"),
        py::arg("record_stride") = 1, py::arg("record_states") = false);

  m.def("run_sgd",
        [](const ScalingConfig& c, const std::string& init, std::uint64_t seed, double t_end,
           int record_points, std::optional<Matrix> A) {
          StudentInit si = student_init_from_string(init) == StudentInit::Kind::Gaussian
                               ? StudentInit::gaussian()
                               : (A ? StudentInit::combination(*A) : StudentInit::combination());
          SgdTrajectory traj;
          {
            py::gil_scoped_release release;
            traj = run_sgd(c, si, seed, t_end, record_points);
          }
          py::dict out;
          out["step"] = traj.steps;
          out["t"] = traj.times;
          out["risk"] = traj.risks;
          return out;
        },
        py::arg("config"), py::arg("init") = "combination", py::arg("seed") = 1,
        py::arg("t_end") = 10.0, py::arg("record_points") = 400, py::arg("A") = py::none());

  m.def("fit_power_law",
        [](const std::vector<double>& xs, const std::vector<double>& ys) {
          if (xs.size() != ys.size()) throw std::invalid_argument("xs and ys differ in length");
          std::vector<std::pair<double, double>> pts;
          for (std::size_t i = 0; i < xs.size(); ++i) pts.emplace_back(xs[i], ys[i]);
          const PowerLawFit fit = fit_power_law(pts);
          return py::make_tuple(fit.slope, fit.intercept, fit.r_squared);
        },
        py::arg("xs"), py::arg("ys"));

  m.def("version", &version_string);
}
