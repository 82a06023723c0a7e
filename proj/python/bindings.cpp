#include "hvf/certify.hpp"
#include "hvf/flows.hpp"
#include "hvf/inequality.hpp"
#include "hvf/metric.hpp"
#include "hvf/registry.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace hvf;

namespace {

Point to_point(const std::vector<double>& v) {
  Point p(static_cast<int>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) p[i] = v[i];
  return p;
}

std::vector<double> from_point(const Point& p) { return std::vector<double>(p.data(), p.data() + p.size()); }

Flavor flavor(const std::string& s) {
  if (s == "d") return Flavor::D;
  if (s == "d1") return Flavor::D1;
  throw py::value_error("flavor must be 'd' or 'd1'");
}

py::object json_to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_hvf, m) {
  m.doc() = "Commutators, distances, balls and inequality checks for Hormander vector fields";

  // Translators run newest first, so the base class goes first.
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<HypothesisError>(m, "HypothesisError", base.ptr());

  py::class_<VectorFieldSystem, std::shared_ptr<VectorFieldSystem>>(m, "System")
      .def_property_readonly("name", &VectorFieldSystem::name)
      .def_property_readonly("dim", &VectorFieldSystem::dim)
      .def_property_readonly("nfields", &VectorFieldSystem::nfields)
      .def_property_readonly("step", &VectorFieldSystem::step)
      .def_property_readonly("commutators",
                             [](const VectorFieldSystem& s) {
                               std::vector<std::string> out;
                               for (const auto& I : s.commutators()) out.push_back(I.to_string());
                               return out;
                             })
      .def_property_readonly("functions",
                             [](const VectorFieldSystem& s) {
                               std::vector<std::string> out;
                               for (const auto& f : s.functions()) out.push_back(f.name);
                               return out;
                             })
      .def("field", [](const VectorFieldSystem& s, int i, const std::vector<double>& x) {
        return from_point(s.evaluate_field(i, to_point(x)));
      });

  m.def("registered", &builtin_names);
  m.def("system", [](const std::string& spec) { return std::const_pointer_cast<VectorFieldSystem>(resolve_system(spec)); },
        py::arg("name_or_path"));
  m.def("parse_system", [](const std::string& text) { return parse_system(text); }, py::arg("text"));

  m.def(
      "commutator",
      [](const VectorFieldSystem& s, const std::string& I, const std::vector<double>& x) {
        return from_point(commutator_value(s, parse_multi_index(I), to_point(x)));
      },
      py::arg("system"), py::arg("index"), py::arg("x"));
  m.def(
      "rank", [](const VectorFieldSystem& s, const std::vector<double>& x) { return hormander_rank(s, to_point(x)).rank; },
      py::arg("system"), py::arg("x"));
  m.def(
      "expansion_residual",
      [](const VectorFieldSystem& s, const std::string& I, const std::vector<double>& x, double t) {
        return expansion_residual(s, parse_multi_index(I), to_point(x), t);
      },
      py::arg("system"), py::arg("index"), py::arg("x"), py::arg("t"));
  m.def(
      "exp", [](const VectorFieldSystem& s, int field, double t, const std::vector<double>& x) {
        return from_point(exp_map(s, field, t, to_point(x)));
      },
      py::arg("system"), py::arg("field"), py::arg("t"), py::arg("x"));
  m.def(
      "quasi_exp",
      [](const VectorFieldSystem& s, const std::string& I, double t, const std::vector<double>& x) {
        return from_point(quasi_exp(s, parse_multi_index(I), t, to_point(x)));
      },
      py::arg("system"), py::arg("index"), py::arg("t"), py::arg("x"));

  m.def(
      "connect",
      [](const VectorFieldSystem& s, const std::vector<double>& x, const std::vector<double>& y) {
        AdmissiblePath p = connect(s, to_point(x), to_point(y));
        SubunitPath sp = subunit_reparametrize(p);
        py::list factors;
        for (const auto& f : p.segments) factors.append(py::make_tuple(f.field, f.time));
        py::dict d;
        d["bound"] = p.bound;
        d["factors"] = factors;
        d["hitting_time"] = sp.hitting_time;
        d["end"] = from_point(reintegrate(s, p));
        return d;
      },
      py::arg("system"), py::arg("x"), py::arg("y"));
  m.def(
      "distance",
      [](const VectorFieldSystem& s, const std::vector<double>& x, const std::vector<double>& y, const std::string& f,
         int steps) {
        Resolution res;
        res.steps = steps;
        return flavor(f) == Flavor::D ? d_graph(s, to_point(x), to_point(y), res).value
                                      : d1_graph(s, to_point(x), to_point(y), res).value;
      },
      py::arg("system"), py::arg("x"), py::arg("y"), py::arg("flavor") = "d1", py::arg("steps") = 16);
  m.def(
      "ball_volume",
      [](const VectorFieldSystem& s, const std::vector<double>& x0, double rho, const std::string& f, int steps) {
        BallOptions bo;
        bo.res.steps = steps;
        return ball_volume(s, to_point(x0), rho, flavor(f), bo).volume;
      },
      py::arg("system"), py::arg("x0"), py::arg("rho"), py::arg("flavor") = "d1", py::arg("steps") = 16);
  m.def(
      "poincare",
      [](const VectorFieldSystem& s, const std::string& fn, const std::vector<double>& x0, double rho, double lambda,
         long samples, uint64_t seed) {
        IntegralOptions io;
        io.samples = samples;
        io.seed = seed;
        auto r = poincare_ratio(s, s.function(fn), to_point(x0), rho, lambda, io);
        return py::make_tuple(r.lhs, r.rhs, r.implied_constant);
      },
      py::arg("system"), py::arg("function"), py::arg("x0"), py::arg("rho"), py::arg("lam") = 2.0,
      py::arg("samples") = 200000, py::arg("seed") = 1);

  m.def(
      "certify",
      [](const std::vector<int>& criteria, const std::vector<std::string>& systems, uint64_t seed, long budget) {
        CertifyOptions opt;
        opt.criteria = criteria;
        opt.systems = systems;
        opt.seed = seed;
        opt.budget = budget;
        CertifyReport rep;
        {
          py::gil_scoped_release release;
          rep = certify(opt);
        }
        return json_to_py(to_json(rep.summary(opt)));
      },
      py::arg("criteria"), py::arg("systems") = std::vector<std::string>{}, py::arg("seed") = 1,
      py::arg("budget") = 200000);
}
