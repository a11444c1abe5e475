#pragma once

// Geometric and force model of the scissor-lift prismatic spine.
//
// Lengths are in meters, forces in newtons and energies in joules throughout.
// Every function here is pure.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spq/errors.hpp"

namespace spq {

/// Scissor-lift linkage dimensions and the usable extension window.
struct ScissorGeometry {
  int n = 3;            ///< scissor segments
  double l1 = 0.03;     ///< short link half-length
  double l2 = 0.06;     ///< middle link half-length
  double h_min = 0.08;  ///< shortest allowed extension
  double h_max = 0.20;  ///< longest allowed extension
  double delta_h = 0.04;  ///< mounting offset: physical spine length = H + delta_h

  /// Throws ConfigError when any invariant is violated.
  void validate() const;
};

struct SpringSpec {
  double k = 0.0;   ///< N/m, one spring
  double d0 = 0.0;  ///< rest length
  int count = 1;
};

// Spring catalogue of the prototype.
inline constexpr double kSoftSpringK = 224.0;
inline constexpr double kStiffSpringK = 364.0;
inline constexpr double kSpringRestLength = 0.096;
inline constexpr double kDefaultH0 = 0.24;

/// A validated spine: linkage, springs and zero-force extension H0.
class SpineConfig {
 public:
  SpineConfig(ScissorGeometry geometry, std::vector<SpringSpec> springs, double h0,
              std::string name = "custom");

  /// "weak" (4 soft), "medium" (4 stiff) or "strong" (4 soft + 4 stiff).
  static SpineConfig preset(std::string_view name, double h0 = kDefaultH0);

  const ScissorGeometry& geometry() const noexcept { return geometry_; }
  const std::vector<SpringSpec>& springs() const noexcept { return springs_; }
  double h0() const noexcept { return h0_; }
  const std::string& name() const noexcept { return name_; }
  double ks() const noexcept { return ks_; }

  /// Copy with every spring constant multiplied by `factor` (> 0).
  SpineConfig with_spring_scale(double factor) const;

 private:
  ScissorGeometry geometry_;
  std::vector<SpringSpec> springs_;
  double h0_;
  std::string name_;
  double ks_;
};

/// n' = 1 + (n - 1) l2 / l1.
double transformed_segment_count(const ScissorGeometry& geometry);

/// Largest geometrically reachable extension, 2 l1 n' (span d = 0).
double max_reach(const ScissorGeometry& geometry);

/// H = n' sqrt(4 l1^2 - d^2). Throws DomainError unless 0 <= d < 2 l1.
double extension_from_span(double span, const ScissorGeometry& geometry);

/// Inverse of extension_from_span. Throws DomainError unless 0 < H <= 2 l1 n'.
double span_from_extension(double extension, const ScissorGeometry& geometry);

/// Aggregate constant of springs acting in parallel: sum of k * count.
/// Throws ConfigError on an empty list.
double effective_spring_constant(std::span<const SpringSpec> springs);

/// Expansive spine force at extension H, valid for 0 <= H <= min(H0, 2 l1 n').
/// Throws DomainError outside that range.
double spine_force(double extension, const SpineConfig& config);

struct ForceSplit {
  double linear = 0.0;     ///< (2 / n') H Ks
  double nonlinear = 0.0;  ///< F - linear
};

ForceSplit force_decomposition(double extension, const SpineConfig& config);

/// Thrown by peak_extension when the force rises over the whole domain.
class NoInteriorPeak : public DomainError {
 public:
  using DomainError::DomainError;
};

struct ForcePeak {
  double extension = 0.0;
  double force = 0.0;
};

/// Maximizer of spine_force over (0, min(H0, 2 l1 n')), located by
/// golden-section search to 1e-9 m. Throws NoInteriorPeak if F is monotone.
ForcePeak peak_extension(const SpineConfig& config);

/// Signed work of the spine force from `from` to `to`.
double stored_elastic_energy(double from, double to, const SpineConfig& config);

}  // namespace spq
