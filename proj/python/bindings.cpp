#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spq/harness.hpp"
#include "spq/lock_control.hpp"
#include "spq/quadruped_sim.hpp"
#include "spq/spine_bus.hpp"
#include "spq/spine_model.hpp"

namespace py = pybind11;
using namespace spq;

namespace {

py::bytes to_bytes(const std::vector<std::uint8_t>& data) {
  return py::bytes(reinterpret_cast<const char*>(data.data()), data.size());
}

py::object decode(const py::bytes& frame) {
  const std::string raw = frame;
  const auto result = bus::decode_frame(
      std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
  py::dict out;
  if (const auto* error = std::get_if<bus::DecodeError>(&result)) {
    out["error"] = std::string(bus::to_string(*error));
    return std::move(out);
  }
  const auto& decoded = std::get<bus::Decoded>(result);
  out["seq"] = decoded.seq;
  out["t_us"] = decoded.t_us;
  if (const auto* state = std::get_if<bus::SpineStateMsg>(&decoded.message)) {
    out["type"] = "state";
    out["extension_tenth_mm"] = state->extension_tenth_mm;
    out["lock_state"] = static_cast<int>(state->lock_state);
    out["health"] = static_cast<int>(state->health);
    out["alarm"] = state->alarm;
  } else {
    out["type"] = "cmd";
    out["cmd"] = static_cast<int>(std::get<bus::SpineCmdMsg>(decoded.message).cmd);
  }
  return std::move(out);
}

template <typename E>
E checked_enum(int value, int max, const char* what) {
  if (value < 0 || value > max) throw ConfigError(std::string(what) + " out of range");
  return static_cast<E>(value);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Scissor-lift spine model, lock logic, bus codec and jump simulator.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ArithmeticError);
  py::register_exception<SimFault>(m, "SimFault", PyExc_RuntimeError);

  py::class_<ScissorGeometry>(m, "ScissorGeometry")
      .def(py::init<>())
      .def_readwrite("n", &ScissorGeometry::n)
      .def_readwrite("l1", &ScissorGeometry::l1)
      .def_readwrite("l2", &ScissorGeometry::l2)
      .def_readwrite("h_min", &ScissorGeometry::h_min)
      .def_readwrite("h_max", &ScissorGeometry::h_max)
      .def_readwrite("delta_h", &ScissorGeometry::delta_h)
      .def("validate", &ScissorGeometry::validate);

  py::class_<SpringSpec>(m, "SpringSpec")
      .def(py::init([](double k, double d0, int count) { return SpringSpec{k, d0, count}; }),
           py::arg("k"), py::arg("d0") = kSpringRestLength, py::arg("count") = 1)
      .def_readwrite("k", &SpringSpec::k)
      .def_readwrite("d0", &SpringSpec::d0)
      .def_readwrite("count", &SpringSpec::count);

  py::class_<SpineConfig>(m, "SpineConfig")
      .def(py::init<ScissorGeometry, std::vector<SpringSpec>, double, std::string>(),
           py::arg("geometry"), py::arg("springs"), py::arg("h0"), py::arg("name") = "custom")
      .def_static("preset", &SpineConfig::preset, py::arg("name"), py::arg("h0") = kDefaultH0)
      .def_property_readonly("geometry", &SpineConfig::geometry)
      .def_property_readonly("h0", &SpineConfig::h0)
      .def_property_readonly("ks", &SpineConfig::ks)
      .def_property_readonly("name", &SpineConfig::name)
      .def("with_spring_scale", &SpineConfig::with_spring_scale);

  m.def("transformed_segment_count", &transformed_segment_count);
  m.def("max_reach", &max_reach);
  m.def("extension_from_span", &extension_from_span, py::arg("span"), py::arg("geometry"));
  m.def("span_from_extension", &span_from_extension, py::arg("extension"), py::arg("geometry"));
  m.def("spine_force", &spine_force, py::arg("extension"), py::arg("config"));
  m.def("force_decomposition", [](double h, const SpineConfig& c) {
    const auto split = force_decomposition(h, c);
    return py::make_tuple(split.linear, split.nonlinear);
  });
  m.def("peak_extension", [](const SpineConfig& c) {
    const auto peak = peak_extension(c);
    return py::make_tuple(peak.extension, peak.force);
  });
  m.def("stored_elastic_energy", &stored_elastic_energy, py::arg("start"), py::arg("end"),
        py::arg("config"));

  m.def(
      "cusum_update",
      [](double reference, double statistic, double extension, double slack, double threshold) {
        const auto step = cusum_update({reference, slack, threshold, statistic}, extension);
        return py::make_tuple(step.detector.statistic, step.alarm);
      },
      py::arg("reference"), py::arg("statistic"), py::arg("extension"), py::arg("slack") = 0.002,
      py::arg("threshold") = 0.006, "Returns (g, alarm).");
  m.def("nearest_hole", [](double h, std::vector<double> holes) { return nearest_hole(h, holes); });
  m.def("evenly_spaced_holes", &evenly_spaced_holes, py::arg("geometry"), py::arg("spacing") = 0.02);

  m.def(
      "locktest",
      [](const std::string& scenario, std::uint64_t seed) {
        harness::LockScenarioOptions options;
        options.seed = seed;
        const auto result = harness::locktest(harness::parse_lock_scenario(scenario),
                                              SpineControllerConfig::defaults(ScissorGeometry{}), options);
        return harness::locktest_json(result).dump();
      },
      py::arg("scenario"), py::arg("seed") = 0, "Scenario result as a JSON document.");

  m.def("crc32", [](const py::bytes& data) {
    const std::string raw = data;
    return bus::crc32(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
  });
  m.def(
      "encode_state",
      [](int extension_tenth_mm, int lock_state, int health, bool alarm, std::uint32_t seq,
         std::uint64_t t_us) {
        if (extension_tenth_mm < 0 || extension_tenth_mm > 65535) throw ConfigError("extension out of range");
        bus::SpineStateMsg msg{static_cast<std::uint16_t>(extension_tenth_mm),
                               checked_enum<LockPhase>(lock_state, 3, "lock_state"),
                               checked_enum<SensorHealth>(health, 3, "health"), alarm};
        return to_bytes(bus::encode_frame(msg, seq, t_us));
      },
      py::arg("extension_tenth_mm"), py::arg("lock_state"), py::arg("health"), py::arg("alarm"),
      py::arg("seq"), py::arg("t_us"));
  m.def(
      "encode_cmd",
      [](int cmd, std::uint32_t seq, std::uint64_t t_us) {
        return to_bytes(bus::encode_frame(bus::SpineCmdMsg{checked_enum<LockCommand>(cmd, 3, "cmd")}, seq, t_us));
      },
      py::arg("cmd"), py::arg("seq"), py::arg("t_us"));
  m.def("decode_frame", &decode, "Dict with the message fields, or {'error': kind}.");

  m.def(
      "characterize",
      [](const std::string& preset, int trials, double friction_f0, double noise_sigma, std::uint64_t seed) {
        harness::CharacterizeOptions options;
        options.trials = trials;
        options.friction_f0 = friction_f0;
        options.noise_sigma = noise_sigma;
        options.seed = seed;
        return harness::characterization_json(harness::characterize(SpineConfig::preset(preset), options)).dump();
      },
      py::arg("preset") = "strong", py::arg("trials") = 1, py::arg("friction_f0") = 3.0,
      py::arg("noise_sigma") = 0.5, py::arg("seed") = 0, "Characterization run as a JSON document.");
  m.def(
      "polyfit2",
      [](std::vector<double> h, std::vector<double> f) {
        const auto fit = harness::polyfit2(h, f);
        return py::make_tuple(fit.a0, fit.a1, fit.a2, fit.residual_rms);
      },
      "Returns (a0, a1, a2, residual_rms).");

  m.def(
      "jump_experiment",
      [](const std::string& mode, const std::string& scenario, int trials, std::uint64_t seed) {
        harness::JumpExperimentOptions options;
        options.mode = parse_spine_mode(mode);
        options.scenario = parse_scenario(scenario);
        options.trials = trials;
        options.seed = seed;
        options.trial.log_every = 1000;
        py::gil_scoped_release release;
        return harness::jump_batch_json(harness::jump_experiment(SimModel{}, options)).dump();
      },
      py::arg("mode") = "compliant", py::arg("scenario") = "nominal", py::arg("trials") = 1,
      py::arg("seed") = 0, "Jump batch as a JSON document.");
}
