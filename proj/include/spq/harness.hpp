#pragma once

// Experiment campaigns: force-gauge characterization with slider friction,
// preprocessing and quadratic fits, scripted lock scenarios, jump batches and
// the peak report. Also the CSV/JSON shapes the CLI writes.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spq/lock_control.hpp"
#include "spq/quadruped_sim.hpp"
#include "spq/spine_model.hpp"

namespace spq::harness {

inline constexpr int kSchemaVersion = 1;

// Characterization

enum class SweepDirection : std::uint8_t { compression, extension };

struct ForceSample {
  int trial = 0;
  SweepDirection direction = SweepDirection::compression;
  double extension = 0.0;   ///< H, m
  double force = 0.0;       ///< recorded gauge force, N
  double model_force = 0.0; ///< noiseless, frictionless prediction, N

  bool operator==(const ForceSample&) const = default;
};

struct CharacterizeOptions {
  int trials = 20;
  double friction_f0 = 3.0;
  double noise_sigma = 0.5;
  double step = 5e-4;  ///< H increment between samples
  /// Drop the extension sweep when friction exceeds the spine force
  /// somewhere on it (the slider jams).
  bool clogging = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CharacterizationRun {
  std::string config_name;
  int trials = 0;
  double friction_f0 = 0.0;
  double noise_sigma = 0.0;
  std::string speed_profile;
  bool extension_recorded = true;
  std::vector<ForceSample> samples;
};

/// Each trial sweeps H_max -> H_min (compression, +f0) then back (extension,
/// -f0), adding N(0, sigma) gauge noise.
CharacterizationRun characterize(const SpineConfig& config, const CharacterizeOptions& options);

struct PreprocessOptions {
  int decimation = 1;
  double outlier_k = 3.5;
  int window = 9;

  void validate() const;
};

struct PreprocessResult {
  std::vector<ForceSample> samples;
  std::size_t outliers_removed = 0;
};

/// Outlier rejection per (trial, direction) run, then keeps every
/// `decimation`-th survivor. A point is an outlier when it sits more than k
/// scaled MADs from its rolling median. Throws DomainError if nothing is left.
PreprocessResult preprocess(std::span<const ForceSample> samples, const PreprocessOptions& options);

struct FitResult {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;  ///< F ~ a0 + a1 H + a2 H^2
  double residual_rms = 0.0;
  std::size_t count = 0;
  std::optional<SweepDirection> direction;

  double operator()(double h) const { return a0 + h * (a1 + h * a2); }
};

/// Least-squares quadratic. Throws DomainError with fewer than 3 distinct H.
FitResult polyfit2(std::span<const double> extension, std::span<const double> force);
FitResult polyfit2(std::span<const ForceSample> samples);

/// One fit per direction present in `samples`.
std::vector<FitResult> fit_by_direction(std::span<const ForceSample> samples);

// Statistics

struct BoxStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0, mean = 0.0;
  std::size_t count = 0;

  bool operator==(const BoxStats&) const = default;
};

/// Quartiles by linear interpolation between order statistics. Throws
/// DomainError on empty input.
BoxStats box_stats(std::span<const double> values);

// Lock scenarios

enum class LockScenario : std::uint8_t { a, b, c, d };

struct LockScenarioOptions {
  std::uint64_t seed = 0;
  /// Sensor noise; kept well under the CUSUM slack.
  double noise_sigma = 3e-4;
};

struct LockTestResult {
  LockScenario scenario = LockScenario::a;
  std::vector<ReplayRow> script;
  std::vector<ReplayStep> steps;
  LockState final_state;
  int engage_count = 0;
  int retract_count = 0;
};

LockTestResult locktest(LockScenario scenario, const SpineControllerConfig& config,
                        const LockScenarioOptions& options = {});

LockScenario parse_lock_scenario(std::string_view text);
std::string_view to_string(LockScenario scenario);

// Jump batches

struct TrialRecord {
  int index = 0;
  std::uint64_t seed = 0;
  JumpMetrics metrics;
  double worst_cone_excess = 0.0;
  std::optional<std::string> fault;
};

struct JumpBatch {
  SpineMode mode = SpineMode::compliant;
  JumpScenario scenario = JumpScenario::nominal;
  std::uint64_t seed = 0;
  std::vector<TrialRecord> trials;
  int fault_count = 0;
  /// Over non-faulted trials; empty when every trial faulted.
  std::optional<BoxStats> max_height;
  std::optional<BoxStats> max_vz;
  std::optional<BoxStats> peak_landing_decel;
};

struct JumpExperimentOptions {
  SpineMode mode = SpineMode::compliant;
  JumpScenario scenario = JumpScenario::nominal;
  int trials = 20;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  TrialOptions trial;  ///< scenario and seed are overwritten per trial
  /// Receives each trial's full log, in trial order.
  std::function<void(const TrialRecord&, const std::vector<LogRow>&)> on_log;
};

/// Seed of trial `index`; the same for every spine mode, so batches pair up.
std::uint64_t trial_seed(std::uint64_t base, int index);

/// `model.spine.mode` is replaced by `options.mode`.
JumpBatch jump_experiment(SimModel model, const JumpExperimentOptions& options);

struct ModeComparison {
  double rigid_mean_height = 0.0;
  double compliant_mean_height = 0.0;
  double height_relative_difference = 0.0;  ///< |c - r| / r
  int paired = 0;
  int compliant_softer_landings = 0;  ///< pairs with lower compliant decel
};

ModeComparison compare_modes(const JumpBatch& rigid, const JumpBatch& compliant);

// Peak report

struct PeakReport {
  std::string config_name;
  std::optional<ForcePeak> peak;  ///< empty: force rises over the whole range
  double force_at_h_min = 0.0;
  double force_at_h_max = 0.0;
  double h_max = 0.0;
  /// H_max - H_peak; small and non-negative when H_max was placed at the peak.
  std::optional<double> h_max_minus_peak;
};

PeakReport peak_report(const SpineConfig& config);

// Serialization

std::string_view to_string(SweepDirection direction);
SweepDirection parse_direction(std::string_view text);

void write_samples_csv(std::ostream& out, std::span<const ForceSample> samples);
std::vector<ForceSample> read_samples_csv(std::istream& in);

void to_json(nlohmann::json& j, const ForceSample& s);
void from_json(const nlohmann::json& j, ForceSample& s);
void to_json(nlohmann::json& j, const BoxStats& s);
void from_json(const nlohmann::json& j, BoxStats& s);

nlohmann::json characterization_json(const CharacterizationRun& run);
CharacterizationRun characterization_from_json(const nlohmann::json& j);
nlohmann::json samples_json(std::span<const ForceSample> samples, std::size_t outliers_removed);
nlohmann::json fits_json(std::span<const FitResult> fits);
void write_fits_csv(std::ostream& out, std::span<const FitResult> fits);
nlohmann::json locktest_json(const LockTestResult& result);
nlohmann::json jump_batch_json(const JumpBatch& batch);
JumpBatch jump_batch_from_json(const nlohmann::json& j);
nlohmann::json jump_json(std::span<const JumpBatch> batches);
void write_jump_csv(std::ostream& out, std::span<const JumpBatch> batches);
nlohmann::json peak_json(const PeakReport& report);
void write_peak_text(std::ostream& out, const PeakReport& report);

}  // namespace spq::harness

namespace spq {
void to_json(nlohmann::json& j, const JumpMetrics& m);
void from_json(const nlohmann::json& j, JumpMetrics& m);
}  // namespace spq
