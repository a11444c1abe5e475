#include "spq/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <Eigen/QR>
#include <fmt/format.h>

namespace spq::harness {

using nlohmann::json;

namespace {

double median_of(std::vector<double> values) {
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

// Rolling median with odd reflection about the end points, so a linear trend
// has zero residual all the way to the edges.
std::vector<double> rolling_median(const std::vector<double>& x, int window) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t half = window / 2;
  const auto at = [&](std::ptrdiff_t i) {
    if (i < 0) return 2.0 * x.front() - x[static_cast<std::size_t>(std::min(-i, n - 1))];
    if (i >= n) return 2.0 * x.back() - x[static_cast<std::size_t>(std::max<std::ptrdiff_t>(2 * (n - 1) - i, 0))];
    return x[static_cast<std::size_t>(i)];
  };
  std::vector<double> out(x.size());
  std::vector<double> buf(static_cast<std::size_t>(2 * half + 1));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t k = -half; k <= half; ++k) buf[static_cast<std::size_t>(k + half)] = at(i + k);
    out[static_cast<std::size_t>(i)] = median_of(buf);
  }
  return out;
}

std::vector<bool> outlier_mask(const std::vector<double>& force, const PreprocessOptions& options) {
  std::vector<bool> outlier(force.size(), false);
  if (force.size() < 3) return outlier;
  const auto baseline = rolling_median(force, options.window);
  std::vector<double> residual(force.size());
  std::vector<double> magnitude(force.size());
  std::vector<double> step(force.size() - 1);
  for (std::size_t i = 0; i < force.size(); ++i) {
    residual[i] = force[i] - baseline[i];
    magnitude[i] = std::abs(force[i]);
  }
  for (std::size_t i = 0; i + 1 < force.size(); ++i) step[i] = std::abs(force[i + 1] - force[i]);

  std::vector<double> abs_residual(residual.size());
  std::transform(residual.begin(), residual.end(), abs_residual.begin(),
                 [](double r) { return std::abs(r); });
  // Floors keep noiseless sweeps from flagging the sampling step itself.
  const double scale = std::max({1.4826 * median_of(abs_residual), median_of(step),
                                 1e-3 * median_of(magnitude)});
  for (std::size_t i = 0; i < force.size(); ++i) {
    outlier[i] = abs_residual[i] > options.outlier_k * scale;
  }
  return outlier;
}

std::string require_string(const json& j, const char* key) { return j.at(key).get<std::string>(); }

std::optional<BoxStats> stats_of(const std::vector<TrialRecord>& trials, double JumpMetrics::*field) {
  std::vector<double> values;
  for (const auto& t : trials) {
    if (!t.fault) values.push_back(t.metrics.*field);
  }
  if (values.empty()) return std::nullopt;
  return box_stats(values);
}

json optional_stats(const std::optional<BoxStats>& stats) {
  return stats ? json(*stats) : json(nullptr);
}

std::optional<BoxStats> optional_stats_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<BoxStats>();
}

}  // namespace

void CharacterizeOptions::validate() const {
  if (trials < 1) throw ConfigError("characterize: trials must be >= 1");
  if (!(friction_f0 >= 0.0)) throw ConfigError("characterize: friction_f0 must be >= 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("characterize: noise_sigma must be >= 0");
  if (!(step > 0.0)) throw ConfigError("characterize: step must be > 0");
}

CharacterizationRun characterize(const SpineConfig& config, const CharacterizeOptions& options) {
  options.validate();
  const auto& g = config.geometry();
  const auto intervals = std::max<long>(1, std::lround((g.h_max - g.h_min) / options.step));
  std::vector<double> grid(static_cast<std::size_t>(intervals + 1));
  std::vector<double> model(grid.size());
  for (long i = 0; i <= intervals; ++i) {
    // Descending: the compression sweep starts fully extended.
    grid[static_cast<std::size_t>(i)] =
        g.h_max - (g.h_max - g.h_min) * static_cast<double>(i) / static_cast<double>(intervals);
    model[static_cast<std::size_t>(i)] = spine_force(grid[static_cast<std::size_t>(i)], config);
  }

  CharacterizationRun run;
  run.config_name = config.name();
  run.trials = options.trials;
  run.friction_f0 = options.friction_f0;
  run.noise_sigma = options.noise_sigma;
  run.speed_profile = fmt::format("quasi-static sweep, {} m steps", options.step);
  run.extension_recorded =
      !(options.clogging && options.friction_f0 > *std::min_element(model.begin(), model.end()));

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto sample = [&](int trial, SweepDirection dir, std::size_t i) {
    const double offset = dir == SweepDirection::compression ? options.friction_f0 : -options.friction_f0;
    run.samples.push_back(
        {trial, dir, grid[i], model[i] + offset + options.noise_sigma * noise(rng), model[i]});
  };
  for (int trial = 0; trial < options.trials; ++trial) {
    for (std::size_t i = 0; i < grid.size(); ++i) sample(trial, SweepDirection::compression, i);
    if (!run.extension_recorded) continue;
    for (std::size_t i = grid.size(); i-- > 0;) sample(trial, SweepDirection::extension, i);
  }
  return run;
}

void PreprocessOptions::validate() const {
  if (decimation < 1) throw ConfigError("preprocess: decimation must be >= 1");
  if (!(outlier_k > 0.0)) throw ConfigError("preprocess: outlier_k must be > 0");
  if (window < 3 || window % 2 == 0) throw ConfigError("preprocess: window must be odd and >= 3");
}

PreprocessResult preprocess(std::span<const ForceSample> samples, const PreprocessOptions& options) {
  options.validate();
  if (samples.empty()) throw DomainError("preprocess: no samples");

  std::vector<ForceSample> kept;
  std::size_t removed = 0;
  std::size_t begin = 0;
  while (begin < samples.size()) {
    std::size_t end = begin + 1;
    while (end < samples.size() && samples[end].trial == samples[begin].trial &&
           samples[end].direction == samples[begin].direction) {
      ++end;
    }
    std::vector<double> force;
    for (std::size_t i = begin; i < end; ++i) force.push_back(samples[i].force);
    const auto outlier = outlier_mask(force, options);
    for (std::size_t i = begin; i < end; ++i) {
      if (outlier[i - begin]) {
        ++removed;
      } else {
        kept.push_back(samples[i]);
      }
    }
    begin = end;
  }
  if (kept.empty()) throw DomainError("preprocess: every sample was rejected; loosen outlier_k");

  PreprocessResult result;
  result.outliers_removed = removed;
  for (std::size_t i = 0; i < kept.size(); i += static_cast<std::size_t>(options.decimation)) {
    result.samples.push_back(kept[i]);
  }
  return result;
}

FitResult polyfit2(std::span<const double> extension, std::span<const double> force) {
  if (extension.size() != force.size()) throw DomainError("polyfit2: length mismatch");
  std::vector<double> distinct(extension.begin(), extension.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) {
    throw DomainError(fmt::format("polyfit2: need 3 distinct H values, got {}", distinct.size()));
  }

  const auto n = static_cast<Eigen::Index>(extension.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = extension[static_cast<std::size_t>(i)];
    a.row(i) << 1.0, h, h * h;
    b[i] = force[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);

  FitResult fit;
  fit.a0 = c[0];
  fit.a1 = c[1];
  fit.a2 = c[2];
  fit.count = extension.size();
  fit.residual_rms = std::sqrt((a * c - b).squaredNorm() / static_cast<double>(n));
  return fit;
}

FitResult polyfit2(std::span<const ForceSample> samples) {
  std::vector<double> h, f;
  for (const auto& s : samples) {
    h.push_back(s.extension);
    f.push_back(s.force);
  }
  return polyfit2(h, f);
}

std::vector<FitResult> fit_by_direction(std::span<const ForceSample> samples) {
  std::vector<FitResult> fits;
  for (auto dir : {SweepDirection::compression, SweepDirection::extension}) {
    std::vector<ForceSample> subset;
    std::copy_if(samples.begin(), samples.end(), std::back_inserter(subset),
                 [dir](const ForceSample& s) { return s.direction == dir; });
    if (subset.empty()) continue;
    auto fit = polyfit2(subset);
    fit.direction = dir;
    fits.push_back(fit);
  }
  return fits;
}

BoxStats box_stats(std::span<const double> values) {
  if (values.empty()) throw DomainError("box_stats: no values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto quantile = [&v](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  BoxStats s;
  s.min = v.front();
  s.max = v.back();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.count = v.size();
  return s;
}

// Lock scenarios. Lengths are scripted in millimeters at the tick rate.

namespace {

struct ScriptBuilder {
  std::vector<double> length_mm;
  std::vector<std::optional<LockCommand>> command;

  void hold(double mm, int ticks, std::optional<LockCommand> cmd) {
    for (int i = 0; i < ticks; ++i) push(mm, cmd);
  }
  /// Linear move ending exactly at `to_mm`.
  void ramp(double to_mm, int ticks, std::optional<LockCommand> cmd) {
    const double from = length_mm.back();
    for (int i = 1; i <= ticks; ++i) push(from + (to_mm - from) * i / ticks, cmd);
  }
  void push(double mm, std::optional<LockCommand> cmd) {
    length_mm.push_back(mm);
    command.push_back(cmd);
  }
};

}  // namespace

LockTestResult locktest(LockScenario scenario, const SpineControllerConfig& config,
                        const LockScenarioOptions& options) {
  config.validate();
  const double shortest = config.holes.front() * 1e3;
  const double longest = config.holes.back() * 1e3;
  const double middle = nearest_hole(0.5 * (config.holes.front() + config.holes.back()), config.holes) * 1e3;

  ScriptBuilder script;
  LockState initial;
  switch (scenario) {
    case LockScenario::a:
      // Pinned mid-range; an external press only rattles the pin.
      initial = LockState::locked(middle * 1e-3);
      script.hold(middle, 100, LockCommand::stay_locked);
      script.ramp(middle - 3.0, 5, LockCommand::stay_locked);
      script.hold(middle - 3.0, 20, LockCommand::stay_locked);
      script.ramp(middle, 5, LockCommand::stay_locked);
      script.hold(middle, 100, LockCommand::stay_locked);
      break;
    case LockScenario::b:
      initial = LockState::unlocked();
      script.hold(longest, 50, LockCommand::stay_unlocked);
      script.ramp(shortest, 100, LockCommand::stay_unlocked);
      script.hold(shortest, 30, LockCommand::stay_unlocked);
      script.ramp(longest, 100, LockCommand::stay_unlocked);
      script.hold(longest, 50, LockCommand::stay_unlocked);
      break;
    case LockScenario::c:
      // Pressed down to the shortest length, then told to lock there.
      initial = LockState::unlocked();
      script.hold(longest, 50, LockCommand::stay_unlocked);
      script.ramp(shortest + 0.5, 100, LockCommand::stay_unlocked);
      script.hold(shortest + 0.5, 20, LockCommand::stay_unlocked);
      script.hold(shortest + 0.5, 50, LockCommand::lock);
      script.hold(shortest, 80, LockCommand::lock);
      break;
    case LockScenario::d:
      // Pinned at the shortest hole, told to unlock, released by a press.
      initial = LockState::locked(shortest * 1e-3);
      script.hold(shortest, 50, LockCommand::stay_locked);
      script.hold(shortest, 100, LockCommand::unlock);
      script.ramp(shortest - 6.0, 3, LockCommand::unlock);
      script.hold(shortest - 6.0, 7, LockCommand::unlock);
      script.ramp(longest, 100, LockCommand::unlock);
      script.hold(longest, 50, LockCommand::unlock);
      break;
  }

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, options.noise_sigma * 1e3);
  LockTestResult result;
  result.scenario = scenario;
  for (std::size_t i = 0; i < script.length_mm.size(); ++i) {
    ReplayRow row;
    row.tick = static_cast<std::int64_t>(i);
    row.sensor_a_mm = script.length_mm[i] + noise(rng);
    row.sensor_b_mm = script.length_mm[i] + noise(rng);
    row.command = script.command[i];
    result.script.push_back(row);
  }

  const auto bundle = SpineBundle::make(config, initial, script.length_mm.front() * 1e-3);
  SpineBundle final_bundle;
  result.steps = replay_steps(bundle, result.script, &final_bundle);
  result.final_state = final_bundle.state;
  for (const auto& step : result.steps) {
    result.engage_count += step.action.kind == PinAction::Kind::engage;
    result.retract_count += step.action.kind == PinAction::Kind::retract;
  }
  return result;
}

LockScenario parse_lock_scenario(std::string_view text) {
  if (text == "a") return LockScenario::a;
  if (text == "b") return LockScenario::b;
  if (text == "c") return LockScenario::c;
  if (text == "d") return LockScenario::d;
  throw ConfigError(fmt::format("unknown lock scenario '{}' (a|b|c|d)", text));
}

std::string_view to_string(LockScenario scenario) {
  constexpr std::string_view names[] = {"a", "b", "c", "d"};
  return names[static_cast<int>(scenario)];
}

// Jump batches

std::uint64_t trial_seed(std::uint64_t base, int index) {
  // splitmix64 finalizer over the (base, index) pair.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

JumpBatch jump_experiment(SimModel model, const JumpExperimentOptions& options) {
  if (options.trials < 1) throw ConfigError("jump: trials must be >= 1");
  model.spine.mode = options.mode;
  model.validate();

  const auto run_one = [&model, &options](int index) {
    TrialOptions trial = options.trial;
    trial.scenario = options.scenario;
    trial.seed = trial_seed(options.seed, index);
    return run_jump_trial(model, trial);
  };

  JumpBatch batch;
  batch.mode = options.mode;
  batch.scenario = options.scenario;
  batch.seed = options.seed;
  const auto record = [&batch, &options](int index, TrialResult result) {
    TrialRecord rec{index, trial_seed(options.seed, index), result.metrics,
                    result.worst_cone_excess, result.fault};
    batch.fault_count += rec.fault.has_value();
    if (options.on_log) options.on_log(rec, result.log);
    batch.trials.push_back(std::move(rec));
  };

  const unsigned jobs = std::max(1u, options.jobs);
  for (int first = 0; first < options.trials; first += static_cast<int>(jobs)) {
    const int last = std::min(options.trials, first + static_cast<int>(jobs));
    if (jobs == 1) {
      record(first, run_one(first));
      continue;
    }
    std::vector<std::future<TrialResult>> pending;
    for (int i = first; i < last; ++i) pending.push_back(std::async(std::launch::async, run_one, i));
    for (int i = first; i < last; ++i) record(i, pending[static_cast<std::size_t>(i - first)].get());
  }

  batch.max_height = stats_of(batch.trials, &JumpMetrics::max_height);
  batch.max_vz = stats_of(batch.trials, &JumpMetrics::max_vz);
  batch.peak_landing_decel = stats_of(batch.trials, &JumpMetrics::peak_landing_decel);
  return batch;
}

ModeComparison compare_modes(const JumpBatch& rigid, const JumpBatch& compliant) {
  ModeComparison cmp;
  std::map<int, const TrialRecord*> rigid_by_index;
  for (const auto& t : rigid.trials) {
    if (!t.fault) rigid_by_index[t.index] = &t;
  }
  double rigid_sum = 0.0, compliant_sum = 0.0;
  for (const auto& c : compliant.trials) {
    const auto it = rigid_by_index.find(c.index);
    if (c.fault || it == rigid_by_index.end()) continue;
    ++cmp.paired;
    rigid_sum += it->second->metrics.max_height;
    compliant_sum += c.metrics.max_height;
    cmp.compliant_softer_landings +=
        c.metrics.peak_landing_decel < it->second->metrics.peak_landing_decel;
  }
  if (cmp.paired > 0) {
    cmp.rigid_mean_height = rigid_sum / cmp.paired;
    cmp.compliant_mean_height = compliant_sum / cmp.paired;
    cmp.height_relative_difference =
        std::abs(cmp.compliant_mean_height - cmp.rigid_mean_height) / cmp.rigid_mean_height;
  }
  return cmp;
}

PeakReport peak_report(const SpineConfig& config) {
  const auto& g = config.geometry();
  PeakReport report;
  report.config_name = config.name();
  report.h_max = g.h_max;
  report.force_at_h_min = spine_force(g.h_min, config);
  report.force_at_h_max = spine_force(g.h_max, config);
  try {
    report.peak = peak_extension(config);
    report.h_max_minus_peak = g.h_max - report.peak->extension;
  } catch (const NoInteriorPeak&) {
    report.peak.reset();
  }
  return report;
}

// Serialization

std::string_view to_string(SweepDirection direction) {
  return direction == SweepDirection::compression ? "compression" : "extension";
}

SweepDirection parse_direction(std::string_view text) {
  if (text == "compression") return SweepDirection::compression;
  if (text == "extension") return SweepDirection::extension;
  throw ConfigError(fmt::format("unknown sweep direction '{}'", text));
}

void write_samples_csv(std::ostream& out, std::span<const ForceSample> samples) {
  out << "trial,direction,h_m,force_n,model_n\n";
  for (const auto& s : samples) {
    out << fmt::format("{},{},{},{},{}\n", s.trial, to_string(s.direction), s.extension, s.force,
                       s.model_force);
  }
}

std::vector<ForceSample> read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("trial,direction,h_m,force_n", 0) != 0) {
    throw ConfigError("samples CSV: expected header trial,direction,h_m,force_n,model_n");
  }
  std::vector<ForceSample> samples;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell[5];
    int count = 0;
    while (count < 5 && std::getline(ss, cell[count], ',')) ++count;
    if (count < 4) throw ConfigError(fmt::format("samples CSV line {}: too few columns", line_no));
    try {
      ForceSample s;
      s.trial = std::stoi(cell[0]);
      s.direction = parse_direction(cell[1]);
      s.extension = std::stod(cell[2]);
      s.force = std::stod(cell[3]);
      s.model_force = count == 5 && !cell[4].empty() ? std::stod(cell[4]) : 0.0;
      samples.push_back(s);
    } catch (const std::logic_error&) {
      throw ConfigError(fmt::format("samples CSV line {}: malformed value", line_no));
    }
  }
  return samples;
}

void to_json(json& j, const ForceSample& s) {
  j = json{{"trial", s.trial},
           {"direction", to_string(s.direction)},
           {"h_m", s.extension},
           {"force_n", s.force},
           {"model_n", s.model_force}};
}

void from_json(const json& j, ForceSample& s) {
  s.trial = j.at("trial").get<int>();
  s.direction = parse_direction(require_string(j, "direction"));
  s.extension = j.at("h_m").get<double>();
  s.force = j.at("force_n").get<double>();
  s.model_force = j.value("model_n", 0.0);
}

void to_json(json& j, const BoxStats& s) {
  j = json{{"min", s.min}, {"q1", s.q1},     {"median", s.median}, {"q3", s.q3},
           {"max", s.max}, {"mean", s.mean}, {"count", s.count}};
}

void from_json(const json& j, BoxStats& s) {
  s.min = j.at("min").get<double>();
  s.q1 = j.at("q1").get<double>();
  s.median = j.at("median").get<double>();
  s.q3 = j.at("q3").get<double>();
  s.max = j.at("max").get<double>();
  s.mean = j.at("mean").get<double>();
  s.count = j.at("count").get<std::size_t>();
}

json characterization_json(const CharacterizationRun& run) {
  return json{{"schema_version", kSchemaVersion},
              {"kind", "characterization"},
              {"config", run.config_name},
              {"trials", run.trials},
              {"friction_f0_n", run.friction_f0},
              {"noise_sigma_n", run.noise_sigma},
              {"speed_profile", run.speed_profile},
              {"extension_recorded", run.extension_recorded},
              {"samples", run.samples}};
}

CharacterizationRun characterization_from_json(const json& j) {
  CharacterizationRun run;
  run.config_name = require_string(j, "config");
  run.trials = j.at("trials").get<int>();
  run.friction_f0 = j.at("friction_f0_n").get<double>();
  run.noise_sigma = j.at("noise_sigma_n").get<double>();
  run.speed_profile = require_string(j, "speed_profile");
  run.extension_recorded = j.at("extension_recorded").get<bool>();
  run.samples = j.at("samples").get<std::vector<ForceSample>>();
  return run;
}

json samples_json(std::span<const ForceSample> samples, std::size_t outliers_removed) {
  return json{{"schema_version", kSchemaVersion},
              {"kind", "samples"},
              {"outliers_removed", outliers_removed},
              {"samples", std::vector<ForceSample>(samples.begin(), samples.end())}};
}

json fits_json(std::span<const FitResult> fits) {
  json list = json::array();
  for (const auto& f : fits) {
    list.push_back({{"direction", f.direction ? json(to_string(*f.direction)) : json(nullptr)},
                    {"a0", f.a0},
                    {"a1", f.a1},
                    {"a2", f.a2},
                    {"residual_rms_n", f.residual_rms},
                    {"count", f.count}});
  }
  return json{{"schema_version", kSchemaVersion}, {"kind", "fit"}, {"fits", list}};
}

void write_fits_csv(std::ostream& out, std::span<const FitResult> fits) {
  out << "direction,a0,a1,a2,residual_rms_n,count\n";
  for (const auto& f : fits) {
    out << fmt::format("{},{},{},{},{},{}\n", f.direction ? to_string(*f.direction) : "all", f.a0,
                       f.a1, f.a2, f.residual_rms, f.count);
  }
}

json locktest_json(const LockTestResult& result) {
  json steps = json::array();
  for (const auto& s : result.steps) {
    steps.push_back({{"tick", s.tick},
                     {"h_est_m", s.snapshot.extension},
                     {"health", to_string(s.snapshot.health)},
                     {"state", to_string(s.snapshot.phase)},
                     {"hole_m", s.state.hole},
                     {"alarm", s.snapshot.alarm},
                     {"action", to_string(s.action.kind)},
                     {"action_hole_m", s.action.hole}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"kind", "locktest"},
              {"scenario", to_string(result.scenario)},
              {"final_state", to_string(result.final_state.phase)},
              {"final_hole_m", result.final_state.hole},
              {"engage_count", result.engage_count},
              {"retract_count", result.retract_count},
              {"steps", steps}};
}

json jump_batch_json(const JumpBatch& batch) {
  json trials = json::array();
  for (const auto& t : batch.trials) {
    trials.push_back({{"index", t.index},
                      {"seed", t.seed},
                      {"metrics", t.metrics},
                      {"worst_cone_excess_n", t.worst_cone_excess},
                      {"fault", t.fault ? json(*t.fault) : json(nullptr)}});
  }
  return json{{"mode", to_string(batch.mode)},
              {"scenario", to_string(batch.scenario)},
              {"seed", batch.seed},
              {"fault_count", batch.fault_count},
              {"trials", trials},
              {"stats",
               {{"max_height", optional_stats(batch.max_height)},
                {"max_vz", optional_stats(batch.max_vz)},
                {"peak_landing_decel", optional_stats(batch.peak_landing_decel)}}}};
}

JumpBatch jump_batch_from_json(const json& j) {
  JumpBatch batch;
  batch.mode = parse_spine_mode(require_string(j, "mode"));
  batch.scenario = parse_scenario(require_string(j, "scenario"));
  batch.seed = j.at("seed").get<std::uint64_t>();
  batch.fault_count = j.at("fault_count").get<int>();
  for (const auto& t : j.at("trials")) {
    TrialRecord rec;
    rec.index = t.at("index").get<int>();
    rec.seed = t.at("seed").get<std::uint64_t>();
    rec.metrics = t.at("metrics").get<JumpMetrics>();
    rec.worst_cone_excess = t.at("worst_cone_excess_n").get<double>();
    if (!t.at("fault").is_null()) rec.fault = t.at("fault").get<std::string>();
    batch.trials.push_back(std::move(rec));
  }
  const auto& stats = j.at("stats");
  batch.max_height = optional_stats_from(stats.at("max_height"));
  batch.max_vz = optional_stats_from(stats.at("max_vz"));
  batch.peak_landing_decel = optional_stats_from(stats.at("peak_landing_decel"));
  return batch;
}

json jump_json(std::span<const JumpBatch> batches) {
  json out{{"schema_version", kSchemaVersion}, {"kind", "jump"}, {"batches", json::array()}};
  for (const auto& b : batches) out["batches"].push_back(jump_batch_json(b));

  const JumpBatch* rigid = nullptr;
  const JumpBatch* compliant = nullptr;
  for (const auto& b : batches) {
    if (b.mode == SpineMode::rigid) rigid = &b;
    if (b.mode == SpineMode::compliant) compliant = &b;
  }
  if (rigid != nullptr && compliant != nullptr) {
    const auto cmp = compare_modes(*rigid, *compliant);
    out["comparison"] = {{"paired_trials", cmp.paired},
                         {"rigid_mean_max_height_m", cmp.rigid_mean_height},
                         {"compliant_mean_max_height_m", cmp.compliant_mean_height},
                         {"max_height_relative_difference", cmp.height_relative_difference},
                         {"compliant_softer_landings", cmp.compliant_softer_landings}};
  }
  return out;
}

void write_jump_csv(std::ostream& out, std::span<const JumpBatch> batches) {
  out << "mode,scenario,trial,seed,max_height_m,max_vz_mps,peak_landing_decel_mps2,"
         "min_spine_length_m,touchdown_spine_length_m,front_foot_slip_m,success,fault\n";
  for (const auto& b : batches) {
    for (const auto& t : b.trials) {
      const auto& m = t.metrics;
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", to_string(b.mode),
                         to_string(b.scenario), t.index, t.seed, m.max_height, m.max_vz,
                         m.peak_landing_decel, m.min_spine_length, m.touchdown_spine_length,
                         m.front_foot_slip, m.success ? 1 : 0, t.fault ? 1 : 0);
    }
  }
}

json peak_json(const PeakReport& report) {
  json out{{"schema_version", kSchemaVersion},
           {"kind", "peak"},
           {"config", report.config_name},
           {"f_at_h_min_n", report.force_at_h_min},
           {"f_at_h_max_n", report.force_at_h_max},
           {"h_max_m", report.h_max},
           {"interior_peak", report.peak.has_value()}};
  if (report.peak) {
    out["h_peak_m"] = report.peak->extension;
    out["f_peak_n"] = report.peak->force;
    out["h_max_minus_h_peak_m"] = *report.h_max_minus_peak;
  }
  return out;
}

void write_peak_text(std::ostream& out, const PeakReport& report) {
  out << fmt::format("config        {}\n", report.config_name);
  if (report.peak) {
    out << fmt::format("H_peak        {:.6f} m\n", report.peak->extension);
    out << fmt::format("F_peak        {:.4f} N\n", report.peak->force);
  } else {
    out << "H_peak        no interior peak (force rises over the whole range)\n";
  }
  out << fmt::format("F(H_min)      {:.4f} N\n", report.force_at_h_min);
  out << fmt::format("F(H_max)      {:.4f} N\n", report.force_at_h_max);
  if (report.h_max_minus_peak) {
    out << fmt::format("H_max-H_peak  {:+.6f} m ({})\n", *report.h_max_minus_peak,
                       *report.h_max_minus_peak >= 0.0 ? "peak inside the window"
                                                       : "peak beyond H_max");
  }
}

}  // namespace spq::harness

namespace spq {

void to_json(nlohmann::json& j, const JumpMetrics& m) {
  j = nlohmann::json{{"max_height_m", m.max_height},
                     {"max_vz_mps", m.max_vz},
                     {"peak_landing_decel_mps2", m.peak_landing_decel},
                     {"min_spine_length_m", m.min_spine_length},
                     {"touchdown_spine_length_m", m.touchdown_spine_length},
                     {"front_foot_slip_m", m.front_foot_slip},
                     {"success", m.success}};
}

void from_json(const nlohmann::json& j, JumpMetrics& m) {
  m.max_height = j.at("max_height_m").get<double>();
  m.max_vz = j.at("max_vz_mps").get<double>();
  m.peak_landing_decel = j.at("peak_landing_decel_mps2").get<double>();
  m.min_spine_length = j.at("min_spine_length_m").get<double>();
  m.touchdown_spine_length = j.at("touchdown_spine_length_m").get<double>();
  m.front_foot_slip = j.at("front_foot_slip_m").get<double>();
  m.success = j.at("success").get<bool>();
}

}  // namespace spq
