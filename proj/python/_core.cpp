// Python bindings: particle runs, metrics, the grid oracle and the JSON harness.

#include <optional>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qslgd/dynamics.hpp"
#include "qslgd/errors.hpp"
#include "qslgd/experiment.hpp"
#include "qslgd/gridref.hpp"
#include "qslgd/kernel.hpp"
#include "qslgd/metrics.hpp"

namespace py = pybind11;
using namespace qslgd;

namespace {

py::array_t<double> to_array(const Ensemble& e) {
  py::array_t<double> out({static_cast<py::ssize_t>(e.size()), static_cast<py::ssize_t>(e.dim())});
  std::copy(e.coords().begin(), e.coords().end(), out.mutable_data());
  return out;
}

Ensemble from_array(const ManifoldSpec& m, py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() == 1 && m.dim == 1) return Ensemble(m, std::vector<double>(a.data(), a.data() + a.size()));
  if (a.ndim() != 2 || a.shape(1) != m.dim) throw std::invalid_argument("expected an (n, " + std::to_string(m.dim) + ") array");
  return Ensemble(m, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const std::vector<double>& v) { return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data()); }

py::tuple run(bool qslgd, const RunConfig& cfg, const Kernel& k) {
  std::optional<RunResult> r;
  {
    py::gil_scoped_release release;
    r.emplace(qslgd ? run_qslgd(cfg, k) : run_lgda(cfg, k));
  }
  return py::make_tuple(to_array(r->x), to_array(r->y));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quasistatic Langevin gradient descent for entropy-regularized min-max games";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericalBlowUp>(m, "NumericalBlowUp", base.ptr());
  py::register_exception<NoConvergence>(m, "NoConvergence", base.ptr());

  py::class_<ManifoldSpec>(m, "Manifold")
      .def_static("parse", &ManifoldSpec::parse)
      .def_readonly("dim", &ManifoldSpec::dim)
      .def("__repr__", [](const ManifoldSpec& s) { return "Manifold('" + s.to_string() + "')"; })
      .def("__str__", &ManifoldSpec::to_string);

  py::class_<Kernel>(m, "Kernel")
      .def_static("sine_torus", &Kernel::sine_torus, py::arg("scale") = 1.0)
      .def_static("poly_sphere", &Kernel::polynomial_sphere_gaussian, py::arg("d"), py::arg("matrix_seed") = 0)
      .def_property_readonly("manifold", &Kernel::manifold)
      .def_property_readonly("dim", &Kernel::dim)
      .def("eval", py::overload_cast<const Point&, const Point&>(&Kernel::eval, py::const_))
      .def("grad_x", py::overload_cast<const Point&, const Point&>(&Kernel::grad_x, py::const_))
      .def("grad_y", py::overload_cast<const Point&, const Point&>(&Kernel::grad_y, py::const_))
      .def("constants", [](const Kernel& k) {
        const KernelConstants c = k.constants();
        return py::make_tuple(c.bound, c.lipschitz);
      });

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("n_x", &RunConfig::n_x)
      .def_readwrite("n_y", &RunConfig::n_y)
      .def_readwrite("k0", &RunConfig::k0)
      .def_readwrite("k1", &RunConfig::k1)
      .def_readwrite("k2", &RunConfig::k2)
      .def_readwrite("T", &RunConfig::T)
      .def_readwrite("h_x", &RunConfig::h_x)
      .def_readwrite("h_y", &RunConfig::h_y)
      .def_readwrite("beta", &RunConfig::beta)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("threads", &RunConfig::threads)
      .def("box_init", [](RunConfig& c, std::vector<double> lo, std::vector<double> hi) {
        c.init_x = c.init_y = InitSpec::sub_box(std::move(lo), std::move(hi));
      }, py::arg("lo"), py::arg("hi"), "Start both ensembles uniform on the box [lo, hi].");

  m.def("run_qslgd", [](const RunConfig& c, const Kernel& k) { return run(true, c, k); }, py::arg("config"), py::arg("kernel"),
        "Returns the final (X, Y) particle arrays.");
  m.def("run_lgda", [](const RunConfig& c, const Kernel& k) { return run(false, c, k); }, py::arg("config"), py::arg("kernel"));

  m.def("kl_to_uniform", [](py::array_t<double> x, int bins) { return kl_to_reference(from_array(ManifoldSpec::torus(1), x), bins); },
        py::arg("x"), py::arg("bins") = 10);
  m.def("ni_error", [](py::array_t<double> x, py::array_t<double> y, const Kernel& k) {
    return ni_error(from_array(k.manifold(), x), from_array(k.manifold(), y), k).value;
  }, py::arg("x"), py::arg("y"), py::arg("kernel"));
  m.def("beta_threshold", py::overload_cast<const Kernel&, const ManifoldSpec&, double>(&beta_threshold), py::arg("kernel"),
        py::arg("manifold"), py::arg("eps"));

  m.def("fixed_point", [](const Kernel& k, double beta, int n) {
    const grid::FixedPointResult r = grid::fixed_point_solve(grid::GridKernel::from_kernel(k, n), beta);
    return py::make_tuple(to_array(r.p.values()), to_array(r.q.values()), r.iterations);
  }, py::arg("kernel"), py::arg("beta"), py::arg("n") = 256, "Grid equilibrium (p, q, iterations) on the circle.");
  m.def("free_energy", [](py::array_t<double> p, const Kernel& k, double beta) {
    const grid::GridDensity d(std::vector<double>(p.data(), p.data() + p.size()));
    return grid::free_energy(d, grid::GridKernel::from_kernel(k, d.size()), beta);
  }, py::arg("p"), py::arg("kernel"), py::arg("beta"));

  m.def("run_experiment", [](const std::string& json, int workers) {
    const ExperimentConfig cfg = parse_experiment(json);
    ExperimentOutcome out;
    {
      py::gil_scoped_release release;
      out = run_experiment(cfg, workers);
    }
    return py::make_tuple(out.csv, out.summary_csv);
  }, py::arg("config_json"), py::arg("workers") = 1, "Runs a JSON experiment config; returns (csv, summary_csv).");
}
