#include <doctest.h>

#include <cmath>
#include <random>

#include "spq/spine_model.hpp"

using namespace spq;

namespace {

// Force law written the long way round, straight from the span ratio form.
double force_oracle(double h, double h0, double ks, const ScissorGeometry& g) {
  const double np = 1.0 + (g.n - 1) * g.l2 / g.l1;
  const double a = 4.0 * g.l1 * g.l1 * np * np;
  if (h == 0.0) return 0.0;
  return 2.0 / np * (h - h0 * std::sqrt((a / (h0 * h0) - 1.0) / (a / (h * h) - 1.0))) * ks;
}

double grid_peak(const SpineConfig& c, double lo, double hi, double step) {
  double best_h = lo, best_f = -1e300;
  for (double h = lo; h <= hi + 1e-15; h += step) {
    const double f = spine_force(h, c);
    if (f > best_f) {
      best_f = f;
      best_h = h;
    }
  }
  return best_h;
}

}  // namespace

TEST_CASE("scissor geometry") {
  const ScissorGeometry g;
  CHECK(transformed_segment_count(g) == 5.0);
  CHECK(max_reach(g) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(std::abs(extension_from_span(0.048, g) - 0.18) < 1e-9);
  CHECK(extension_from_span(0.0, g) == doctest::Approx(max_reach(g)));

  // Both directions over the spine's travel.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> span(span_from_extension(g.h_max, g), span_from_extension(g.h_min, g));
  std::uniform_real_distribution<double> ext(g.h_min, g.h_max);
  for (int i = 0; i < 1000; ++i) {
    const double d = span(rng);
    const double back = span_from_extension(extension_from_span(d, g), g);
    REQUIRE(std::abs(back - d) <= 1e-12 * d);
    const double h = ext(rng);
    REQUIRE(std::abs(extension_from_span(span_from_extension(h, g), g) - h) <= 1e-12 * h);
  }

  CHECK_THROWS_AS(extension_from_span(0.06, g), DomainError);
  CHECK_THROWS_AS(extension_from_span(-0.001, g), DomainError);
  CHECK_THROWS_AS(span_from_extension(0.0, g), DomainError);
  CHECK_THROWS_AS(span_from_extension(0.31, g), DomainError);
}

TEST_CASE("geometry and spring validation") {
  ScissorGeometry g;
  g.h_min = 0.25;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  CHECK_THROWS_AS(SpineConfig(ScissorGeometry{}, {}, 0.24), ConfigError);
  CHECK_THROWS_AS(SpineConfig(ScissorGeometry{}, {{224, 0.096, 4}}, 0.31), ConfigError);
  CHECK_THROWS_AS(SpineConfig::preset("bogus"), ConfigError);
  const std::vector<SpringSpec> springs{{224, 0.096, 4}, {364, 0.096, 4}};
  CHECK(effective_spring_constant(springs) == 2352.0);
  CHECK(SpineConfig::preset("weak").ks() == 896.0);
  CHECK(SpineConfig::preset("medium").ks() == 1456.0);
  CHECK(SpineConfig::preset("strong").ks() == 2352.0);
}

TEST_CASE("force law against the direct formula") {
  const auto strong = SpineConfig::preset("strong");
  const auto& g = strong.geometry();
  CHECK(spine_force(strong.h0(), strong) == 0.0);
  CHECK(spine_force(0.0, strong) == 0.0);
  CHECK(spine_force(0.18, strong) == doctest::Approx(42.336).epsilon(1e-12));
  CHECK(spine_force(0.08, strong) == doctest::Approx(28.408922332425387).epsilon(1e-12));
  CHECK(spine_force(0.20, strong) == doctest::Approx(36.69412176731024).epsilon(1e-12));
  for (int i = 1; i <= 200; ++i) {
    const double h = strong.h0() * i / 201.0;
    CHECK(spine_force(h, strong) == doctest::Approx(force_oracle(h, strong.h0(), strong.ks(), g)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(spine_force(0.2401, strong), DomainError);
  CHECK_THROWS_AS(spine_force(-0.01, strong), DomainError);
}

TEST_CASE("linear and nonlinear parts") {
  const auto strong = SpineConfig::preset("strong");
  const auto split = force_decomposition(0.18, strong);
  CHECK(split.linear == doctest::Approx(169.344).epsilon(1e-12));
  CHECK(split.nonlinear == doctest::Approx(-127.008).epsilon(1e-12));
  for (int i = 0; i <= 1000; ++i) {
    const double h = strong.h0() * i / 1000.0;
    const auto s = force_decomposition(h, strong);
    const double f = spine_force(h, strong);
    REQUIRE(std::abs(s.linear + s.nonlinear - f) <= 1e-12 * std::max(1.0, std::abs(s.linear)));
  }
  CHECK(std::abs(force_decomposition(1e-9, strong).nonlinear) < 1e-6);
  CHECK(force_decomposition(strong.h0(), strong).nonlinear ==
        doctest::Approx(-2.0 / 5.0 * strong.h0() * strong.ks()).epsilon(1e-12));
}

TEST_CASE("peak location") {
  const auto strong = SpineConfig::preset("strong");
  const auto peak = peak_extension(strong);
  CHECK(std::abs(peak.extension - grid_peak(strong, 0.08, 0.20, 1e-5)) < 1e-4);
  CHECK(peak.force == doctest::Approx(43.763416552467775).epsilon(1e-12));

  // Stationary point of the force: R^2 - H^2 = (R^2 - H0^2)^(1/3) R^(4/3).
  const double r = 0.3;
  const double c = r * r - strong.h0() * strong.h0();
  CHECK(peak.extension == doctest::Approx(std::sqrt(r * r - std::cbrt(c) * std::pow(r, 4.0 / 3.0))).epsilon(1e-13));

  CHECK(peak_extension(SpineConfig::preset("weak")).force == doctest::Approx(16.6718).epsilon(1e-5));
  CHECK(peak_extension(SpineConfig::preset("medium")).force == doctest::Approx(27.0916).epsilon(1e-5));
  CHECK(peak_extension(SpineConfig::preset("weak")).extension == doctest::Approx(peak.extension).epsilon(1e-9));
}

TEST_CASE("monotone force has no interior peak") {
  // H0 at the reach limit: F rises all the way to H0.
  const auto config = SpineConfig(ScissorGeometry{}, {{224, 0.096, 4}}, 0.3);
  CHECK_THROWS_AS(peak_extension(config), NoInteriorPeak);
}

TEST_CASE("degressive below the peak") {
  for (const char* name : {"weak", "medium", "strong"}) {
    const auto config = SpineConfig::preset(name);
    const double h_peak = peak_extension(config).extension;
    for (double h = 0.08; h < h_peak - 1e-4; h += 1e-4) {
      REQUIRE(spine_force(h + 1e-6, config) > spine_force(h - 1e-6, config));
    }
  }
}

TEST_CASE("stored energy against the antiderivative") {
  const auto strong = SpineConfig::preset("strong");
  const double r = 0.3;
  const double sc = std::sqrt(r * r - strong.h0() * strong.h0());
  const auto prim = [&](double h) {
    return 2.0 / 5.0 * strong.ks() * (h * h / 2.0 + sc * std::sqrt(r * r - h * h));
  };
  CHECK(stored_elastic_energy(0.08, 0.20, strong) == doctest::Approx(prim(0.20) - prim(0.08)).epsilon(1e-10));
  CHECK(stored_elastic_energy(0.08, 0.20, strong) == doctest::Approx(4.708353395).epsilon(1e-8));
  CHECK(stored_elastic_energy(0.20, 0.08, strong) == -stored_elastic_energy(0.08, 0.20, strong));
  CHECK(stored_elastic_energy(0.1, 0.1, strong) == 0.0);
}

TEST_CASE("spring scaling leaves the peak in place") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  const auto base = SpineConfig::preset("strong");
  const auto reference = peak_extension(base);
  for (int i = 0; i < 50; ++i) {
    const double k = scale(rng);
    const auto p = peak_extension(base.with_spring_scale(k));
    REQUIRE(p.extension == doctest::Approx(reference.extension).epsilon(1e-14));
    REQUIRE(p.force == doctest::Approx(k * reference.force).epsilon(1e-9));
  }
}
