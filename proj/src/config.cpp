#include "spq/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace spq {

namespace {

// Reads typed fields from one mapping and rejects anything it was not asked
// about.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(fmt::format("config: '{}' must be a mapping", path_));
    }
  }

  explicit operator bool() const { return node_ && node_.IsMap(); }

  template <typename T>
  void read(const char* key, T& target) {
    seen_.insert(key);
    if (!*this) return;
    const auto value = node_[key];
    if (!value) return;
    try {
      target = value.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(fmt::format("config: '{}.{}' has the wrong type", path_, key));
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(*this ? node_[key] : YAML::Node(), fmt::format("{}.{}", path_, key));
  }

  YAML::Node raw(const char* key) {
    seen_.insert(key);
    return *this ? node_[key] : YAML::Node();
  }

  void finish() const {
    if (!*this) return;
    for (const auto& entry : node_) {
      const auto key = entry.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(fmt::format("config: unknown key '{}.{}'", path_, key));
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

SpineConfig read_spine(Section s) {
  std::string preset = "strong";
  double h0 = kDefaultH0;
  s.read("preset", preset);
  s.read("h0", h0);
  const auto base = SpineConfig::preset(preset, h0);

  ScissorGeometry geometry = base.geometry();
  auto g = s.child("geometry");
  g.read("n", geometry.n);
  g.read("l1", geometry.l1);
  g.read("l2", geometry.l2);
  g.read("h_min", geometry.h_min);
  g.read("h_max", geometry.h_max);
  g.read("delta_h", geometry.delta_h);
  g.finish();

  std::vector<SpringSpec> springs = base.springs();
  std::string name = base.name();
  if (const auto list = s.raw("springs"); list && !list.IsNull()) {
    if (!list.IsSequence()) throw ConfigError("config: 'spine.springs' must be a list");
    springs.clear();
    name = "custom";
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section spring(list[i], fmt::format("spine.springs[{}]", i));
      SpringSpec spec{0.0, kSpringRestLength, 1};
      spring.read("k", spec.k);
      spring.read("d0", spec.d0);
      spring.read("count", spec.count);
      spring.finish();
      springs.push_back(spec);
    }
  }
  std::string label = name;
  s.read("name", label);
  s.finish();
  return SpineConfig(geometry, springs, h0, label);
}

void read_robot(Section s, RobotParams& p) {
  s.read("m_half", p.m_half);
  s.read("m_batt", p.m_batt);
  s.read("m_rspine", p.m_rspine);
  s.read("m_cspine", p.m_cspine);
  s.read("l_ulimb", p.l_ulimb);
  s.read("l_llimb", p.l_llimb);
  s.read("m_ulimb", p.m_ulimb);
  s.read("m_llimb", p.m_llimb);
  s.read("tau_shaft_peak", p.tau_shaft_peak);
  s.read("torque_cap_fraction", p.torque_cap_fraction);
  s.read("rigid_spine_length", p.rigid_spine_length);
  s.read("body_hip_span", p.body_hip_span);
  s.read("box_length", p.box_length);
  s.read("box_height", p.box_height);
  s.read("joint_inertia", p.joint_inertia);
  s.read("legs_per_side", p.legs_per_side);
  s.read("gravity", p.gravity);
  s.finish();
}

void read_controller(Section s, JumpControllerConfig& c) {
  s.read("stand_height", c.stand_height);
  s.read("crouch_height", c.crouch_height);
  s.read("landing_height", c.landing_height);
  s.read("extension_limit", c.extension_limit);
  s.read("crouch_time", c.crouch_time);
  s.read("kp", c.kp);
  s.read("kd", c.kd);
  s.read("land_kp", c.land_kp);
  s.read("land_kd", c.land_kd);
  s.read("thrust_scale", c.thrust_scale);
  s.read("liftoff_steps", c.liftoff_steps);
  s.read("liftoff_timeout", c.liftoff_timeout);
  s.read("settle_time", c.settle_time);
  s.read("settle_speed", c.settle_speed);
  s.read("land_timeout", c.land_timeout);
  s.finish();
}

bus::Endpoint read_endpoint(Section& s, const char* key, bus::Endpoint fallback) {
  std::string text;
  s.read(key, text);
  if (text.empty()) return fallback;
  try {
    return bus::Endpoint::parse(text);
  } catch (const bus::TransportError& e) {
    throw ConfigError(fmt::format("config: 'bus.{}': {}", key, e.what()));
  }
}

void apply_port_env(bus::Endpoint& endpoint, const char* variable) {
  const char* value = std::getenv(variable);
  if (value == nullptr || *value == '\0') return;
  try {
    endpoint.port = bus::Endpoint::parse(value).port;
  } catch (const bus::TransportError& e) {
    throw ConfigError(fmt::format("{}: {}", variable, e.what()));
  }
}

}  // namespace

AppConfig parse_config(const std::string& yaml) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  Section top(root, "config");
  AppConfig cfg;

  cfg.spine = read_spine(top.child("spine"));
  cfg.sim.spine.config = cfg.spine;

  auto ch = top.child("characterize");
  ch.read("trials", cfg.characterize.trials);
  ch.read("friction_f0", cfg.characterize.friction_f0);
  ch.read("noise_sigma", cfg.characterize.noise_sigma);
  ch.read("step", cfg.characterize.step);
  ch.read("clogging", cfg.characterize.clogging);
  ch.finish();
  cfg.characterize.validate();

  auto pre = top.child("preprocess");
  pre.read("decimation", cfg.preprocess.decimation);
  pre.read("outlier_k", cfg.preprocess.outlier_k);
  pre.read("window", cfg.preprocess.window);
  pre.finish();
  cfg.preprocess.validate();

  auto lock = top.child("lock");
  double spacing = 0.02;
  lock.read("hole_spacing", spacing);
  if (!(spacing > 0.0)) throw ConfigError("config: 'lock.hole_spacing' must be positive");
  cfg.lock = SpineControllerConfig::defaults(cfg.spine.geometry());
  cfg.lock.holes = evenly_spaced_holes(cfg.spine.geometry(), spacing);
  lock.read("engage_tolerance", cfg.lock.engage_tolerance);
  lock.read("cusum_slack", cfg.lock.cusum_slack);
  lock.read("cusum_threshold", cfg.lock.cusum_threshold);
  lock.read("tick_hz", cfg.lock.tick_hz);
  lock.read("stale_after_ticks", cfg.lock.stale_after_ticks);
  lock.finish();
  cfg.lock.validate();

  auto sim = top.child("sim");
  std::string mode(to_string(cfg.mode));
  std::string scenario(to_string(cfg.scenario));
  sim.read("mode", mode);
  sim.read("scenario", scenario);
  cfg.mode = parse_spine_mode(mode);
  cfg.scenario = parse_scenario(scenario);
  sim.read("trials", cfg.trials);
  sim.read("jobs", cfg.jobs);
  sim.read("dt", cfg.trial.dt);
  sim.read("tilt", cfg.trial.tilt);
  sim.read("max_duration", cfg.trial.max_duration);
  sim.read("log_every", cfg.trial.log_every);
  sim.read("damping", cfg.sim.spine.damping);
  auto contact = sim.child("contact");
  contact.read("k_n", cfg.sim.contact.k_n);
  contact.read("c_n", cfg.sim.contact.c_n);
  contact.read("mu", cfg.sim.contact.mu);
  contact.read("v_slip_eps", cfg.sim.contact.v_slip_eps);
  contact.finish();
  read_robot(sim.child("robot"), cfg.sim.params);
  read_controller(sim.child("controller"), cfg.trial.controller);
  sim.finish();
  cfg.sim.spine.mode = cfg.mode;
  cfg.sim.validate();
  if (cfg.trials < 1) throw ConfigError("config: 'sim.trials' must be >= 1");
  if (!(cfg.trial.dt > 0.0 && cfg.trial.dt <= 1e-3)) throw ConfigError("config: 'sim.dt' must lie in (0, 1e-3]");
  if (cfg.trial.log_every < 1) throw ConfigError("config: 'sim.log_every' must be >= 1");

  auto bus_section = top.child("bus");
  cfg.state_endpoint = read_endpoint(bus_section, "state", cfg.state_endpoint);
  cfg.cmd_endpoint = read_endpoint(bus_section, "cmd", cfg.cmd_endpoint);
  int ttl = 1;
  bus_section.read("multicast_ttl", ttl);
  if (ttl < 0 || ttl > 255) throw ConfigError("config: 'bus.multicast_ttl' must lie in [0, 255]");
  cfg.state_endpoint.multicast_ttl = cfg.cmd_endpoint.multicast_ttl = ttl;
  bus_section.finish();
  apply_port_env(cfg.state_endpoint, "SPQ_STATE_PORT");
  apply_port_env(cfg.cmd_endpoint, "SPQ_CMD_PORT");

  top.finish();
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace spq
