#include "spq/spine_model.hpp"

#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <fmt/format.h>

namespace spq {

namespace {

// Evaluations this close to a domain boundary are clamped onto it.
constexpr double kBoundaryGuard = 1e-9;

double clamp_to_boundary(double value, double boundary) {
  return std::abs(value - boundary) <= kBoundaryGuard ? boundary : value;
}

// Upper end of the force-law domain.
double force_domain_limit(const SpineConfig& config) {
  return std::min(config.h0(), max_reach(config.geometry()));
}

double checked_extension(double extension, const SpineConfig& config) {
  const double limit = force_domain_limit(config);
  extension = clamp_to_boundary(clamp_to_boundary(extension, 0.0), limit);
  if (!(extension >= 0.0 && extension <= limit)) {
    throw DomainError(fmt::format("spine extension {} m outside force-law domain [0, {}]",
                                  extension, limit));
  }
  return extension;
}

// sqrt((R^2 - H0^2) / (R^2 - H^2)), the factor that turns H into H0 * sqrt(...)
// after rearranging the closed-form force law. Equals 1 at H = H0.
double nonlinear_ratio(double extension, const SpineConfig& config) {
  const double reach = max_reach(config.geometry());
  const double h0 = std::min(config.h0(), reach);
  if (extension == h0) return 1.0;
  const double numerator = reach * reach - h0 * h0;
  if (numerator <= 0.0) return 0.0;
  return std::sqrt(numerator / (reach * reach - extension * extension));
}

}  // namespace

void ScissorGeometry::validate() const {
  if (n < 1) throw ConfigError(fmt::format("scissor segment count must be >= 1, got {}", n));
  if (!(l1 > 0.0) || !(l2 > 0.0)) throw ConfigError("scissor link lengths must be positive");
  if (!(delta_h >= 0.0)) throw ConfigError("installment offset delta_H must be >= 0");
  const double reach = max_reach(*this);
  if (!(h_min > 0.0 && h_min < h_max && h_max < reach)) {
    throw ConfigError(fmt::format(
        "extension window must satisfy 0 < H_min < H_max < 2*l1*n' = {}, got [{}, {}]", reach,
        h_min, h_max));
  }
}

SpineConfig::SpineConfig(ScissorGeometry geometry, std::vector<SpringSpec> springs, double h0,
                         std::string name)
    : geometry_(geometry), springs_(std::move(springs)), h0_(h0), name_(std::move(name)) {
  geometry_.validate();
  for (const auto& spring : springs_) {
    if (!(spring.k > 0.0) || !(spring.d0 > 0.0) || spring.count < 1) {
      throw ConfigError("spring entries need k > 0, d0 > 0 and count >= 1");
    }
  }
  ks_ = effective_spring_constant(springs_);
  const double reach = max_reach(geometry_);
  h0_ = clamp_to_boundary(h0_, reach);
  if (!(h0_ > 0.0 && h0_ <= reach)) {
    throw ConfigError(fmt::format("H0 must lie in (0, 2*l1*n' = {}], got {}", reach, h0));
  }
}

SpineConfig SpineConfig::preset(std::string_view name, double h0) {
  const SpringSpec soft{kSoftSpringK, kSpringRestLength, 4};
  const SpringSpec stiff{kStiffSpringK, kSpringRestLength, 4};
  if (name == "weak") return SpineConfig({}, {soft}, h0, "weak");
  if (name == "medium") return SpineConfig({}, {stiff}, h0, "medium");
  if (name == "strong") return SpineConfig({}, {soft, stiff}, h0, "strong");
  throw ConfigError(fmt::format("unknown spine preset '{}' (weak|medium|strong)", name));
}

SpineConfig SpineConfig::with_spring_scale(double factor) const {
  if (!(factor > 0.0)) throw ConfigError("spring scale factor must be positive");
  auto scaled = springs_;
  for (auto& spring : scaled) spring.k *= factor;
  return SpineConfig(geometry_, std::move(scaled), h0_, name_);
}

double transformed_segment_count(const ScissorGeometry& geometry) {
  return 1.0 + (geometry.n - 1) * geometry.l2 / geometry.l1;
}

double max_reach(const ScissorGeometry& geometry) {
  return 2.0 * geometry.l1 * transformed_segment_count(geometry);
}

double extension_from_span(double span, const ScissorGeometry& geometry) {
  const double full = 2.0 * geometry.l1;
  if (!(span >= 0.0 && span < full)) {
    throw DomainError(fmt::format("actuation span {} m outside [0, {})", span, full));
  }
  return transformed_segment_count(geometry) * std::sqrt(full * full - span * span);
}

double span_from_extension(double extension, const ScissorGeometry& geometry) {
  const double reach = max_reach(geometry);
  extension = clamp_to_boundary(extension, reach);
  if (!(extension > 0.0 && extension <= reach)) {
    throw DomainError(fmt::format("extension {} m outside (0, {}]", extension, reach));
  }
  const double full = 2.0 * geometry.l1;
  const double folded = extension / transformed_segment_count(geometry);
  return std::sqrt(std::max(0.0, full * full - folded * folded));
}

double effective_spring_constant(std::span<const SpringSpec> springs) {
  if (springs.empty()) throw ConfigError("spine needs at least one spring");
  return std::accumulate(springs.begin(), springs.end(), 0.0,
                         [](double sum, const SpringSpec& s) { return sum + s.k * s.count; });
}

ForceSplit force_decomposition(double extension, const SpineConfig& config) {
  const double h = checked_extension(extension, config);
  const double gain = 2.0 / transformed_segment_count(config.geometry()) * config.ks();
  ForceSplit split;
  split.linear = gain * h;
  split.nonlinear = -gain * h * nonlinear_ratio(h, config);
  return split;
}

double spine_force(double extension, const SpineConfig& config) {
  const double h = checked_extension(extension, config);
  const double gain = 2.0 / transformed_segment_count(config.geometry()) * config.ks();
  return gain * h * (1.0 - nonlinear_ratio(h, config));
}

ForcePeak peak_extension(const SpineConfig& config) {
  const double upper = force_domain_limit(config);
  const double reach = max_reach(config.geometry());

  // dF/dH up to the positive factor 2 Ks / n'. Falls monotonically from
  // 1 - sqrt(R^2 - H0^2) / R at H = 0 to R^2 / (H0^2 - R^2) + 1 at H = H0.
  const auto slope = [&](double h) {
    return 1.0 - nonlinear_ratio(h, config) * reach * reach / (reach * reach - h * h);
  };
  if (!(upper < reach) || slope(upper) >= 0.0) {
    throw NoInteriorPeak(fmt::format(
        "spine force increases monotonically up to {} m; no interior peak", upper));
  }
  std::uintmax_t iterations = 200;
  const auto [lo, hi] = boost::math::tools::toms748_solve(
      slope, 0.0, upper, slope(0.0), slope(upper), boost::math::tools::eps_tolerance<double>(52),
      iterations);
  const double best = 0.5 * (lo + hi);
  return {best, spine_force(best, config)};
}

double stored_elastic_energy(double from, double to, const SpineConfig& config) {
  checked_extension(from, config);
  checked_extension(to, config);
  if (from == to) return 0.0;
  const auto force = [&](double h) { return spine_force(h, config); };
  const double lo = std::min(from, to);
  const double hi = std::max(from, to);
  double error = 0.0;
  const double work = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(
      force, lo, hi, 15, 1e-12, &error);
  return from < to ? work : -work;
}

}  // namespace spq
