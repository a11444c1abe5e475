// spq: experiment harness and bus nodes for the lockable prismatic spine.
//
// Exit codes: 0 ok, 2 configuration error, 3 domain error, 4 simulator fault.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "spq/config.hpp"
#include "spq/harness.hpp"
#include "spq/nodes.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spq;

constexpr int kExitConfig = 2;
constexpr int kExitDomain = 3;
constexpr int kExitSimFault = 4;

std::atomic<bool> g_interrupted{false};

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "YAML configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "random seed");
  cmd->add_option("--out", common.out, "output file (default: stdout)");
  cmd->add_option("--format", common.format, "output format")
      ->check(CLI::IsMember({"csv", "json"}));
}

AppConfig load(const Common& common) {
  return common.config.empty() ? parse_config("") : load_config(common.config);
}

template <typename Fn>
void write_output(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream file(path);
  if (!file) throw ConfigError(fmt::format("cannot write '{}'", path));
  fn(file);
}

void write_json(const std::string& path, const json& doc) {
  write_output(path, [&](std::ostream& os) { os << doc.dump(2) << '\n'; });
}

std::vector<harness::ForceSample> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path));
  if (fs::path(path).extension() == ".json") {
    try {
      return json::parse(in).at("samples").get<std::vector<harness::ForceSample>>();
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("'{}': {}", path, e.what()));
    }
  }
  return harness::read_samples_csv(in);
}

int run_characterize(const Common& common, const std::optional<std::string>& preset,
                     std::optional<int> trials, std::optional<double> friction,
                     std::optional<double> noise, bool clogging) {
  auto cfg = load(common);
  const auto spine = preset ? SpineConfig::preset(*preset, cfg.spine.h0()) : cfg.spine;
  auto options = cfg.characterize;
  if (trials) options.trials = *trials;
  if (friction) options.friction_f0 = *friction;
  if (noise) options.noise_sigma = *noise;
  options.clogging = options.clogging || clogging;
  options.seed = common.seed;
  const auto run = harness::characterize(spine, options);
  if (common.format == "json") {
    write_json(common.out, harness::characterization_json(run));
  } else {
    write_output(common.out, [&](std::ostream& os) { harness::write_samples_csv(os, run.samples); });
  }
  if (!run.extension_recorded) std::cerr << "extension sweep not recorded (slider clogging)\n";
  return 0;
}

int run_preprocess(const Common& common, const std::string& input, std::optional<int> decimation,
                   std::optional<double> outlier_k) {
  auto cfg = load(common);
  auto options = cfg.preprocess;
  if (decimation) options.decimation = *decimation;
  if (outlier_k) options.outlier_k = *outlier_k;
  options.validate();
  const auto samples = read_samples(input);
  const auto result = harness::preprocess(samples, options);
  if (common.format == "json") {
    write_json(common.out, harness::samples_json(result.samples, result.outliers_removed));
  } else {
    write_output(common.out, [&](std::ostream& os) { harness::write_samples_csv(os, result.samples); });
  }
  std::cerr << fmt::format("kept {} of {} samples, {} outliers removed\n", result.samples.size(),
                           samples.size(), result.outliers_removed);
  return 0;
}

int run_fit(const Common& common, const std::string& input) {
  const auto samples = read_samples(input);
  const auto fits = harness::fit_by_direction(samples);
  if (common.format == "json") {
    write_json(common.out, harness::fits_json(fits));
  } else {
    write_output(common.out, [&](std::ostream& os) { harness::write_fits_csv(os, fits); });
  }
  return 0;
}

int run_locktest(const Common& common, const std::string& scenario, const std::string& replay,
                 std::optional<double> locked_at) {
  auto cfg = load(common);
  if (!replay.empty()) {
    std::ifstream in(replay);
    if (!in) throw ConfigError(fmt::format("cannot read '{}'", replay));
    const auto rows = parse_replay_csv(in);
    if (rows.empty()) throw ConfigError("replay log has no rows");
    const auto first = rows.front().sensor_a_mm.value_or(rows.front().sensor_b_mm.value_or(0.0)) * 1e-3;
    const auto initial = locked_at ? LockState::locked(nearest_hole(*locked_at, cfg.lock.holes))
                                   : LockState::unlocked();
    const auto bundle = SpineBundle::make(cfg.lock, initial, locked_at.value_or(first));
    write_output(common.out, [&](std::ostream& os) { replay_log(bundle, rows, os); });
    return 0;
  }
  harness::LockScenarioOptions options;
  options.seed = common.seed;
  const auto result = harness::locktest(harness::parse_lock_scenario(scenario), cfg.lock, options);
  if (common.format == "json") {
    write_json(common.out, harness::locktest_json(result));
  } else {
    write_output(common.out, [&](std::ostream& os) { write_replay_trace(os, result.steps); });
  }
  std::cerr << fmt::format("scenario {}: final {} hole {:.3f} m, {} engage, {} retract\n", scenario,
                           to_string(result.final_state.phase), result.final_state.hole,
                           result.engage_count, result.retract_count);
  return 0;
}

int run_jump(const Common& common, const std::string& mode, std::optional<std::string> scenario,
             std::optional<int> trials, std::optional<unsigned> jobs, const std::string& log_dir) {
  auto cfg = load(common);
  harness::JumpExperimentOptions options;
  options.scenario = scenario ? parse_scenario(*scenario) : cfg.scenario;
  options.trials = trials.value_or(cfg.trials);
  options.jobs = jobs.value_or(cfg.jobs);
  options.seed = common.seed;
  options.trial = cfg.trial;

  std::vector<SpineMode> modes;
  if (mode == "both") {
    modes = {SpineMode::rigid, SpineMode::compliant};
  } else if (mode.empty()) {
    modes = {cfg.mode};
  } else {
    modes = {parse_spine_mode(mode)};
  }
  if (!log_dir.empty()) fs::create_directories(log_dir);

  std::vector<harness::JumpBatch> batches;
  for (const auto m : modes) {
    options.mode = m;
    if (!log_dir.empty()) {
      options.on_log = [&log_dir, m](const harness::TrialRecord& rec, const std::vector<LogRow>& log) {
        const auto path = fs::path(log_dir) / fmt::format("{}_trial{:02d}.csv", to_string(m), rec.index);
        std::ofstream out(path);
        if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
        write_trial_log_csv(out, log);
      };
    }
    batches.push_back(harness::jump_experiment(cfg.sim, options));
  }

  if (common.format == "json") {
    write_json(common.out, harness::jump_json(batches));
  } else {
    write_output(common.out, [&](std::ostream& os) { harness::write_jump_csv(os, batches); });
  }
  for (const auto& b : batches) {
    std::cerr << fmt::format("{}: {} trials, {} faults", to_string(b.mode), b.trials.size(), b.fault_count);
    if (b.max_height) std::cerr << fmt::format(", mean max_height {:.4f} m", b.max_height->mean);
    std::cerr << '\n';
    if (b.fault_count == static_cast<int>(b.trials.size())) return kExitSimFault;
  }
  return 0;
}

int run_peak(const Common& common, const std::optional<std::string>& preset) {
  auto cfg = load(common);
  const auto spine = preset ? SpineConfig::preset(*preset, cfg.spine.h0()) : cfg.spine;
  const auto report = harness::peak_report(spine);
  if (common.format == "json") {
    write_json(common.out, harness::peak_json(report));
  } else {
    write_output(common.out, [&](std::ostream& os) {
      os << "config,interior_peak,h_peak_m,f_peak_n,f_at_h_min_n,f_at_h_max_n,h_max_m,h_max_minus_h_peak_m\n";
      os << fmt::format("{},{},{},{},{},{},{},{}\n", report.config_name, report.peak ? 1 : 0,
                        report.peak ? fmt::format("{}", report.peak->extension) : "",
                        report.peak ? fmt::format("{}", report.peak->force) : "",
                        report.force_at_h_min, report.force_at_h_max, report.h_max,
                        report.h_max_minus_peak ? fmt::format("{}", *report.h_max_minus_peak) : "");
    });
  }
  harness::write_peak_text(std::cerr, report);
  return 0;
}

int run_serve_spine(const Common& common, double length, std::optional<double> locked_at,
                    std::int64_t ticks, std::int64_t press_at) {
  auto cfg = load(common);
  bus::SpineNodeConfig node_cfg;
  node_cfg.state_endpoint = cfg.state_endpoint;
  node_cfg.cmd_endpoint = cfg.cmd_endpoint;
  node_cfg.controller = cfg.lock;
  node_cfg.initial_state = locked_at ? LockState::locked(nearest_hole(*locked_at, cfg.lock.holes))
                                     : LockState::unlocked();
  node_cfg.initial_extension = locked_at ? node_cfg.initial_state.hole : length;
  const double rest = node_cfg.initial_extension;

  // Stand-in sensors: the spine rests at its start length; an optional press
  // dips it by 6 mm over 3 ticks and holds for 7.
  auto sensors = [rest, press_at](std::int64_t tick, std::int64_t now) {
    double h = rest;
    if (press_at >= 0 && tick >= press_at && tick < press_at + 10) {
      h = rest - 0.002 * static_cast<double>(std::min<std::int64_t>(tick - press_at + 1, 3));
    }
    const SensorReading reading{h, now};
    return bus::SensorPair{reading, reading};
  };
  bus::SpineNode node(node_cfg, sensors);

  write_output(common.out, [&](std::ostream& os) {
    os << "tick,seq,cmd,state,h_est_m,health,alarm,action\n";
    std::atomic<std::int64_t> done{0};
    node.start([&](const bus::SpineTickRecord& r) {
      os << fmt::format("{},{},{},{},{:.4f},{},{},{}\n", r.tick, r.seq,
                        r.command ? to_string(*r.command) : "", to_string(r.snapshot.phase),
                        r.snapshot.extension, to_string(r.snapshot.health), r.snapshot.alarm ? 1 : 0,
                        to_string(r.action.kind));
      os.flush();
      done.store(r.tick + 1);
    });
    while (!g_interrupted.load() && (ticks <= 0 || done.load() < ticks)) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    node.stop();
  });
  return 0;
}

int run_serve_controller(const Common& common, const std::string& command, double duration,
                         double resend_s) {
  auto cfg = load(common);
  const auto cmd = parse_lock_command(command);
  bus::ControllerNode node(cfg.state_endpoint, cfg.cmd_endpoint);

  write_output(common.out, [&](std::ostream& os) {
    std::mutex out_mutex;
    os << "received_us,seq,t_us,stale,state,h_est_m,health,alarm\n";
    node.start([&](const bus::StateRecord& r) {
      const auto& s = r.state();
      std::lock_guard lock(out_mutex);
      os << fmt::format("{},{},{},{},{},{:.4f},{},{}\n", r.received_us, r.frame.seq, r.frame.t_us,
                        r.stale ? 1 : 0, to_string(s.lock_state), s.extension_m(), to_string(s.health),
                        s.alarm ? 1 : 0);
      os.flush();
    });
    const auto start = std::chrono::steady_clock::now();
    auto next_send = start;
    while (!g_interrupted.load()) {
      const auto now = std::chrono::steady_clock::now();
      if (duration > 0.0 && now - start >= std::chrono::duration<double>(duration)) break;
      if (now >= next_send) {
        node.send(cmd);
        next_send = now + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(resend_s));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    node.stop();
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lockable prismatic spine: models, experiments and bus nodes"};
  app.require_subcommand(1);
  Common common;

  auto* characterize = app.add_subcommand("characterize", "simulated force-gauge sweeps");
  add_common(characterize, common);
  std::optional<std::string> preset;
  std::optional<int> trials;
  std::optional<double> friction, noise;
  bool clogging = false;
  characterize->add_option("--preset", preset, "weak|medium|strong (overrides the config)");
  characterize->add_option("--trials", trials);
  characterize->add_option("--friction", friction, "slider friction f0, N");
  characterize->add_option("--noise", noise, "gauge noise sigma, N");
  characterize->add_flag("--clogging", clogging, "drop the extension sweep when friction jams it");

  auto* preprocess = app.add_subcommand("preprocess", "outlier filter and decimation");
  add_common(preprocess, common);
  std::string input;
  std::optional<int> decimation;
  std::optional<double> outlier_k;
  preprocess->add_option("--in", input, "samples CSV or JSON")->required()->check(CLI::ExistingFile);
  preprocess->add_option("--decimation", decimation);
  preprocess->add_option("--outlier-k", outlier_k);

  auto* fit = app.add_subcommand("fit", "quadratic fit per sweep direction");
  add_common(fit, common);
  fit->add_option("--in", input, "samples CSV or JSON")->required()->check(CLI::ExistingFile);

  auto* locktest = app.add_subcommand("locktest", "scripted lock scenarios or log replay");
  add_common(locktest, common);
  std::string scenario = "a";
  std::string replay;
  std::optional<double> locked_at;
  locktest->add_option("--scenario", scenario)->check(CLI::IsMember({"a", "b", "c", "d"}));
  locktest->add_option("--replay", replay, "replay CSV: tick,sensor_a_mm,sensor_b_mm,cmd")
      ->check(CLI::ExistingFile);
  locktest->add_option("--locked-at", locked_at, "replay: start pinned at the hole nearest this H, m");

  auto* jump = app.add_subcommand("jump", "jump and landing trial batches");
  add_common(jump, common);
  std::string mode;
  std::optional<std::string> jump_scenario;
  std::optional<unsigned> jobs;
  std::string log_dir;
  jump->add_option("--mode", mode)->check(CLI::IsMember({"rigid", "locked", "compliant", "both"}));
  jump->add_option("--scenario", jump_scenario)->check(CLI::IsMember({"nominal", "tilted_landing", "tilted"}));
  jump->add_option("--trials", trials);
  jump->add_option("--jobs", jobs, "parallel trials");
  jump->add_option("--log-dir", log_dir, "write one trial log CSV per trial here");

  auto* peak = app.add_subcommand("peak", "force peak report");
  add_common(peak, common);
  peak->add_option("--preset", preset, "weak|medium|strong (overrides the config)");

  auto* serve_spine = app.add_subcommand("serve-spine", "run the spine node");
  add_common(serve_spine, common);
  double length = 0.2;
  std::int64_t ticks = 0;
  std::int64_t press_at = -1;
  serve_spine->add_option("--length", length, "resting extension when unlocked, m");
  serve_spine->add_option("--locked-at", locked_at, "start pinned at the hole nearest this H, m");
  serve_spine->add_option("--ticks", ticks, "stop after this many ticks (0: run until interrupted)");
  serve_spine->add_option("--press-at", press_at, "tick at which a scripted press starts");

  auto* serve_controller = app.add_subcommand("serve-controller", "run the controller node");
  add_common(serve_controller, common);
  std::string command = "stay_unlocked";
  double duration = 0.0;
  double resend = 0.1;
  serve_controller->add_option("--command", command, "stay_unlocked|stay_locked|lock|unlock or 0-3");
  serve_controller->add_option("--duration", duration, "seconds (0: until interrupted)");
  serve_controller->add_option("--resend", resend, "command period, s")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  std::signal(SIGINT, [](int) { g_interrupted.store(true); });
  std::signal(SIGTERM, [](int) { g_interrupted.store(true); });

  try {
    if (*characterize) return run_characterize(common, preset, trials, friction, noise, clogging);
    if (*preprocess) return run_preprocess(common, input, decimation, outlier_k);
    if (*fit) return run_fit(common, input);
    if (*locktest) return run_locktest(common, scenario, replay, locked_at);
    if (*jump) return run_jump(common, mode, jump_scenario, trials, jobs, log_dir);
    if (*peak) return run_peak(common, preset);
    if (*serve_spine) return run_serve_spine(common, length, locked_at, ticks, press_at);
    if (*serve_controller) return run_serve_controller(common, command, duration, resend);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const bus::TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const SimFault& e) {
    std::cerr << "simulator fault: " << e.what() << '\n' << e.dump() << '\n';
    return kExitSimFault;
  }
  return 0;
}
