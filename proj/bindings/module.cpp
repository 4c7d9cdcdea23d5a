#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "seq2d/dynamics.hpp"
#include "seq2d/experiments.hpp"
#include "seq2d/map_io.hpp"
#include "seq2d/train.hpp"

namespace py = pybind11;
using namespace seq2d;

namespace {

const char* impulse_name(ImpulseKind kind) {
  switch (kind) {
    case ImpulseKind::finite: return "finite";
    case ImpulseKind::infinite: return "infinite";
    case ImpulseKind::asymptotically_finite: return "asymptotically_finite";
  }
  return "infinite";
}

Activation act_from_string(const std::string& name) { return activation_from_name(name); }

}  // namespace

PYBIND11_MODULE(_seq2d, m) {
  m.doc() = "iterated block non-linear maps: construction, analysis, training";

  py::class_<BlockPartition>(m, "BlockPartition")
      .def(py::init<std::vector<int>>())
      .def_property_readonly("sizes", &BlockPartition::sizes)
      .def("total", &BlockPartition::total)
      .def("blocks", &BlockPartition::blocks);

  py::class_<Cell>(m, "Cell")
      .def_static("zero", &Cell::zero)
      .def_static("scaled_identity", &Cell::scaled_identity, py::arg("scale"))
      .def_static(
          "affine",
          [](const Mat& weight, std::optional<Vec> bias, const std::string& act) {
            const Activation a = act_from_string(act);
            return bias ? Cell::affine(weight, *bias, a) : Cell::affine(weight, a);
          },
          py::arg("weight"), py::arg("bias") = std::nullopt, py::arg("act") = "identity");

  py::class_<BlockMap>(m, "BlockMap")
      .def(py::init<BlockPartition>())
      .def("blocks", &BlockMap::blocks)
      .def_property_readonly("partition", &BlockMap::partition)
      .def("set_cell", &BlockMap::set_cell)
      .def("set_post_act", [](BlockMap& map, int row, const std::string& act) {
        map.set_post_act(row, act_from_string(act));
      })
      .def("is_sequential2d",
           [](const BlockMap& map) { return structure_of(map) == MapStructure::sequential2d; });

  m.def(
      "apply",
      [](const BlockMap& map, const Vec& state) {
        return apply(map, StateVector(map.partition(), state)).data;
      },
      py::arg("map"), py::arg("state"), "apply the map once to a full state vector");
  m.def(
      "iterate",
      [](const BlockMap& map, const Vec& h0, int k) {
        std::vector<Vec> out;
        for (const StateVector& s :
             iterate(map, StateVector::from_input(map.partition(), h0), k))
          out.push_back(s.data);
        return out;
      },
      py::arg("map"), py::arg("h0"), py::arg("k"),
      "iterate k times from (h0, 0, ..., 0); returns all k+1 states");

  m.def(
      "make_mlp_map",
      [](const std::vector<Mat>& weights, const std::vector<Vec>& biases,
         const std::string& act, bool identity_corner) {
        MlpLayerSpec spec;
        spec.act = act_from_string(act);
        spec.weights = weights;
        spec.biases = biases;
        spec.dims.push_back(static_cast<int>(weights.front().cols()));
        for (const Mat& w : weights) spec.dims.push_back(static_cast<int>(w.rows()));
        return make_mlp_map(spec, identity_corner ? CornerKind::identity : CornerKind::zero);
      },
      py::arg("weights"), py::arg("biases") = std::vector<Vec>{},
      py::arg("act") = "relu", py::arg("identity_corner") = false);

  m.def("serialize", &serialize);
  m.def("deserialize", &deserialize);
  m.def("load_map", &load_map);
  m.def("save_map", &save_map);

  m.def(
      "find_fixed_point",
      [](const BlockMap& map, const Vec& h0, int max_k, double tol) {
        FixedPointReport r =
            find_fixed_point(map, StateVector::from_input(map.partition(), h0), max_k, tol);
        py::dict out;
        out["reached"] = r.reached;
        out["at_iteration"] = r.at_iteration;
        out["residual"] = r.residual;
        return out;
      },
      py::arg("map"), py::arg("h0"), py::arg("max_k") = 50, py::arg("tol") = 1e-12);

  m.def(
      "classify_impulse",
      [](const BlockMap& map, const Vec& h0, int horizon, double tol) {
        if (horizon <= 0) horizon = 2 * map.blocks();
        std::vector<StateVector> probes;
        probes.push_back(StateVector::from_input(map.partition(), h0));
        probes.push_back(StateVector::from_input(map.partition(), Vec(h0.array() + 1.0)));
        probes.push_back(StateVector::from_input(map.partition(), Vec(h0.array() - 1.0)));
        ImpulseReport r = classify_impulse(map, probes, horizon, tol);
        py::dict out;
        out["class"] = impulse_name(r.kind);
        out["at_iteration"] = r.at_iteration;
        out["deviations"] = r.deviations;
        return out;
      },
      py::arg("map"), py::arg("h0"), py::arg("horizon") = 0, py::arg("tol") = 1e-12);

  m.def(
      "run_compare_config",
      [](const std::string& config_json) {
        CompareSummary s = run_compare(ExperimentConfig::from_json_text(config_json));
        py::dict out;
        out["layered_mean"] = s.layered_mean;
        out["random_mean"] = s.random_mean;
        out["mean_accuracy_abs_delta"] = s.mean_accuracy_abs_delta;
        return out;
      },
      py::arg("config_json"), "run a layered-vs-random comparison from a JSON config string");
}
