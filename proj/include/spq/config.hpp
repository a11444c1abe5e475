#pragma once

// YAML run configuration shared by every CLI subcommand. Every section and
// key is optional; unknown keys are rejected so typos surface as errors.
//
//   spine:        {preset, h0, geometry: {...}, springs: [{k, d0, count}]}
//   characterize: {trials, friction_f0, noise_sigma, step, clogging}
//   preprocess:   {decimation, outlier_k, window}
//   lock:         {hole_spacing, engage_tolerance, cusum_slack,
//                  cusum_threshold, tick_hz, stale_after_ticks}
//   sim:          {mode, scenario, trials, jobs, dt, tilt, max_duration,
//                  log_every, damping, contact: {...}, robot: {...},
//                  controller: {...}}
//   bus:          {state, cmd, multicast_ttl}

#include <filesystem>
#include <string>

#include "spq/harness.hpp"
#include "spq/lock_control.hpp"
#include "spq/quadruped_sim.hpp"
#include "spq/spine_model.hpp"
#include "spq/transport.hpp"

namespace spq {

struct AppConfig {
  SpineConfig spine = SpineConfig::preset("strong");
  harness::CharacterizeOptions characterize;
  harness::PreprocessOptions preprocess;
  SpineControllerConfig lock = SpineControllerConfig::defaults(ScissorGeometry{});
  SimModel sim;
  SpineMode mode = SpineMode::compliant;
  JumpScenario scenario = JumpScenario::nominal;
  int trials = 20;
  unsigned jobs = 1;
  TrialOptions trial;
  bus::Endpoint state_endpoint = bus::default_state_endpoint();
  bus::Endpoint cmd_endpoint = bus::default_cmd_endpoint();
};

/// Parses YAML text. Throws ConfigError with the offending key on any
/// problem. SPQ_STATE_PORT / SPQ_CMD_PORT override the configured ports.
AppConfig parse_config(const std::string& yaml);
AppConfig load_config(const std::filesystem::path& path);

}  // namespace spq
