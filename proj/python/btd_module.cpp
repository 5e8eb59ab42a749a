#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "btd/batch.hpp"
#include "btd/error.hpp"
#include "btd/harness.hpp"
#include "btd/online.hpp"
#include "btd/tensor.hpp"

namespace py = pybind11;
using namespace btd;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

// numpy arrays are indexed [i, j, k]; the library stores slices contiguously.
Tensor3 to_tensor(const Array3& a) {
  if (a.ndim() != 3) throw py::value_error("expected a 3-dimensional array");
  const auto v = a.unchecked<3>();
  Tensor3 t(v.shape(0), v.shape(1), v.shape(2));
  for (Index k = 0; k < t.dim_k(); ++k)
    for (Index i = 0; i < t.dim_i(); ++i)
      for (Index j = 0; j < t.dim_j(); ++j) t(i, j, k) = v(i, j, k);
  return t;
}

py::array_t<double> to_array(const Tensor3& t) {
  py::array_t<double> a({t.dim_i(), t.dim_j(), t.dim_k()});
  auto v = a.mutable_unchecked<3>();
  for (Index k = 0; k < t.dim_k(); ++k)
    for (Index i = 0; i < t.dim_i(); ++i)
      for (Index j = 0; j < t.dim_j(); ++j) v(i, j, k) = t(i, j, k);
  return a;
}

UnfoldingMode mode_of(int mode) {
  switch (mode) {
    case 1: return UnfoldingMode::Mode1;
    case 2: return UnfoldingMode::Mode2;
    case 3: return UnfoldingMode::Mode3;
  }
  throw py::value_error("mode must be 1, 2 or 3");
}

}  // namespace

PYBIND11_MODULE(_btd, m) {
  m.doc() = "Rank-(L,L,1) block-term tensor decomposition: batch IRLS and streaming RLS solvers";

  // Created once and kept for the lifetime of the interpreter.
  static PyObject* numerical_error =
      PyErr_NewExceptionWithDoc("btd._btd.NumericalError", "Failed factorization or non-finite data.",
                                PyExc_RuntimeError, nullptr);
  m.add_object("NumericalError", py::handle(numerical_error).inc_ref());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::kNumerical: PyErr_SetString(numerical_error, e.what()); break;
        case ErrorKind::kIo: PyErr_SetString(PyExc_OSError, e.what()); break;
        default: PyErr_SetString(PyExc_ValueError, e.what()); break;
      }
    }
  });

  py::class_<BtdFactors>(m, "Factors")
      .def(py::init<Matrix, Matrix, Matrix, Index>(), py::arg("A"), py::arg("B"), py::arg("C"), py::arg("L"))
      .def_readonly("A", &BtdFactors::A)
      .def_readonly("B", &BtdFactors::B)
      .def_readonly("C", &BtdFactors::C)
      .def_readonly("L", &BtdFactors::L)
      .def_readonly("R", &BtdFactors::R)
      .def("__repr__", [](const BtdFactors& f) {
        return "<Factors I=" + std::to_string(f.dim_i()) + " J=" + std::to_string(f.dim_j()) +
               " K=" + std::to_string(f.dim_k()) + " L=" + std::to_string(f.L) + " R=" + std::to_string(f.R) + ">";
      });

  py::class_<RankEstimate>(m, "RankEstimate")
      .def_readonly("R_hat", &RankEstimate::R_hat)
      .def_readonly("L_hat", &RankEstimate::L_hat)
      .def_readonly("kept_blocks", &RankEstimate::kept_blocks)
      .def_readonly("kept_columns", &RankEstimate::kept_columns)
      .def_readonly("degenerate", &RankEstimate::degenerate);

  py::enum_<SweepOrder>(m, "SweepOrder")
      .value("GAUSS_SEIDEL", SweepOrder::kGaussSeidel)
      .value("TABULATED", SweepOrder::kTabulated);

  py::class_<BatchConfig>(m, "BatchConfig")
      .def(py::init<>())
      .def_readwrite("lambda_", &BatchConfig::lambda)
      .def_readwrite("mu", &BatchConfig::mu)
      .def_readwrite("eta2", &BatchConfig::eta2)
      .def_readwrite("R_ini", &BatchConfig::R_ini)
      .def_readwrite("L_ini", &BatchConfig::L_ini)
      .def_readwrite("max_iters", &BatchConfig::max_iters)
      .def_readwrite("rel_tol", &BatchConfig::rel_tol)
      .def_readwrite("seed", &BatchConfig::seed)
      .def_readwrite("rank_threshold", &BatchConfig::rank_threshold)
      .def_readwrite("prune_in_loop", &BatchConfig::prune_in_loop)
      .def_readwrite("order", &BatchConfig::order)
      .def("validate", &BatchConfig::validate);

  py::class_<BatchResult>(m, "BatchResult")
      .def_readonly("factors", &BatchResult::factors)
      .def_readonly("ranks", &BatchResult::ranks)
      .def_readonly("trace", &BatchResult::trace)
      .def_readonly("iterations", &BatchResult::iterations)
      .def_readonly("converged", &BatchResult::converged);

  py::class_<OnlineConfig>(m, "OnlineConfig")
      .def(py::init<>())
      .def_readwrite("xi", &OnlineConfig::xi)
      .def_readwrite("lambda_", &OnlineConfig::lambda)
      .def_readwrite("mu", &OnlineConfig::mu)
      .def_readwrite("eta2", &OnlineConfig::eta2)
      .def_readwrite("warmup_slices", &OnlineConfig::warmup_slices)
      .def_readwrite("R_ini", &OnlineConfig::R_ini)
      .def_readwrite("L_ini", &OnlineConfig::L_ini)
      .def_readwrite("rank_threshold", &OnlineConfig::rank_threshold)
      .def_readwrite("update_factors", &OnlineConfig::update_factors)
      .def("validate", &OnlineConfig::validate);

  py::class_<StepMetrics>(m, "StepMetrics")
      .def_readonly("k", &StepMetrics::k)
      .def_readonly("nse", &StepMetrics::nse)
      .def_readonly("seconds", &StepMetrics::seconds)
      .def_readonly("ranks", &StepMetrics::ranks);

  py::class_<OnlineSolver>(m, "OnlineSolver")
      .def_static(
          "warm_start",
          [](const Array3& Y_warm, const BatchConfig& bcfg, const OnlineConfig& ocfg) {
            return OnlineSolver::warm_start(to_tensor(Y_warm), bcfg, ocfg);
          },
          py::arg("Y_warm"), py::arg("batch_config"), py::arg("online_config"))
      .def(
          "push",
          [](OnlineSolver& s, const RowMatrix& y, std::optional<RowMatrix> reference) {
            return s.push(y, reference ? &*reference : nullptr);
          },
          py::arg("slice"), py::arg("reference") = py::none())
      .def_property_readonly("A", [](const OnlineSolver& s) { return s.state().A; })
      .def_property_readonly("B", [](const OnlineSolver& s) { return s.state().B; })
      .def_property_readonly("gamma", &OnlineSolver::last_gamma)
      .def_property_readonly("k", [](const OnlineSolver& s) { return s.state().k; })
      .def_property_readonly("scalar_count", [](const OnlineSolver& s) { return s.state().scalar_count(); })
      .def("ranks", [](const OnlineSolver& s) { return online_ranks(s.state(), s.config().rank_threshold); });

  m.def("reconstruct", [](const BtdFactors& f) { return to_array(reconstruct(f)); }, py::arg("factors"));
  m.def(
      "unfold", [](const Array3& t, int mode) { return unfold(to_tensor(t), mode_of(mode)); }, py::arg("tensor"),
      py::arg("mode"));
  m.def("khatri_rao", &khatri_rao, py::arg("X"), py::arg("x_width"), py::arg("Y"), py::arg("y_width"));

  m.def(
      "btd_irls",
      [](const Array3& Y, const BatchConfig& cfg) {
        const Tensor3 t = to_tensor(Y);
        py::gil_scoped_release release;
        return btd_irls(t, cfg);
      },
      py::arg("Y"), py::arg("config"));
  m.def(
      "objective",
      [](const Array3& Y, const BtdFactors& f, double lambda, double mu, double eta2) {
        return objective_batch(to_tensor(Y), f, lambda, mu, eta2);
      },
      py::arg("Y"), py::arg("factors"), py::arg("lambda_"), py::arg("mu"), py::arg("eta2") = 1e-8);
  m.def("estimate_ranks", py::overload_cast<const BtdFactors&, double>(&estimate_ranks), py::arg("factors"),
        py::arg("rank_threshold") = 1e-2);
  m.def("prune", &prune, py::arg("factors"), py::arg("ranks"));

  m.def(
      "generate",
      [](Index I, Index J, Index K, Index R, std::vector<Index> L, std::uint64_t seed) {
        GenSpec spec;
        spec.I = I;
        spec.J = J;
        spec.K = K;
        spec.R_true = R;
        spec.L_true = std::move(L);
        spec.seed = seed;
        Generated g = generate(spec);
        return py::make_tuple(to_array(g.X), g.truth.first);
      },
      py::arg("I"), py::arg("J"), py::arg("K"), py::arg("R"), py::arg("L"), py::arg("seed") = 0);
  m.def(
      "add_noise",
      [](const Array3& X, double snr_db, std::uint64_t seed) {
        const Noisy n = add_noise(to_tensor(X), {snr_db, seed});
        return py::make_tuple(to_array(n.Y), n.sigma);
      },
      py::arg("X"), py::arg("snr_db"), py::arg("seed") = 0);
  m.def(
      "relative_error", [](const Array3& Y, const Array3& X) { return relative_error(to_tensor(Y), to_tensor(X)); },
      py::arg("Y"), py::arg("X_hat"));
  m.def(
      "nmse_blocks",
      [](const BtdFactors& truth, const BtdFactors& est) {
        const NmseResult r = nmse_blocks(truth, est);
        return py::make_tuple(r.nmse, r.assignment, r.rank_mismatch);
      },
      py::arg("truth"), py::arg("estimate"));
  m.def(
      "hungarian",
      [](const Matrix& cost) {
        const Assignment a = hungarian(cost);
        return py::make_tuple(a.row_to_col, a.cost);
      },
      py::arg("cost"));
}
