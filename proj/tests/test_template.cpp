#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "spcr/errors.hpp"
#include "spcr/rng.hpp"
#include "spcr/template_fn.hpp"

using namespace spcr;
using Eigen::VectorXd;

namespace {

UnconstrainedHeights random_unconstrained(Rng& rng, int M, SignSet sign) {
  UnconstrainedHeights u;
  u.lambda0 = 3.0 * rng.normal();
  u.l.resize(M + 1);
  for (int k = 0; k <= M; ++k) u.l[k] = rng.normal();
  u.sign = sign;
  return u;
}

}  // namespace

TEST_CASE("heights_reconstruct: pinned arithmetic") {
  UnconstrainedHeights u;
  u.lambda0 = 0.0;
  u.l.resize(2);
  u.l << 0.0, 0.0;
  u.sign = SignSet::Plus;
  const HeightVector h = heights_reconstruct(u);
  REQUIRE(h.lambda.size() == 3);
  CHECK(h.lambda[0] == 0.0);
  CHECK(h.lambda[1] == 1.0);
  CHECK(h.lambda[2] == 0.0);

  UnconstrainedHeights v;
  v.lambda0 = 2.0;
  v.l.resize(3);
  v.l << std::log(3.0), std::log(1.0), std::log(2.0);
  v.sign = SignSet::Minus;
  const HeightVector hm = heights_reconstruct(v);
  REQUIRE(hm.lambda.size() == 4);
  CHECK(hm.lambda[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(hm.lambda[1] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(hm.lambda[2] == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(hm.lambda[3] == doctest::Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("heights_reconstruct: alternation holds over random draws") {
  Rng rng(11, 0);
  for (int rep = 0; rep < 10000; ++rep) {
    const int M = 1 + static_cast<int>(rng.uniform_index(5));
    const SignSet sign = rng.uniform01() < 0.5 ? SignSet::Plus : SignSet::Minus;
    const HeightVector h = heights_reconstruct(random_unconstrained(rng, M, sign));
    CHECK(alternation_ok(h));
  }
}

TEST_CASE("heights round trip: unconstrain then reconstruct is identity") {
  Rng rng(12, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const int M = 1 + static_cast<int>(rng.uniform_index(4));
    const HeightVector h =
        heights_reconstruct(random_unconstrained(rng, M, SignSet::Plus));
    const HeightVector back = heights_reconstruct(heights_unconstrain(h));
    CHECK((back.lambda - h.lambda).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("hermite_eval: interpolation, midpoints, continuity") {
  const TemplateSpec spec = TemplateSpec::uniform_nodes(2);
  HeightVector h;
  h.lambda.resize(4);
  h.lambda << -0.5, 1.25, 0.25, 2.0;
  h.sign = SignSet::Plus;

  for (int k = 0; k < 4; ++k)
    CHECK(hermite_eval(spec, h, spec.nodes[k]) == h.lambda[k]);

  for (int k = 0; k + 1 < 4; ++k) {
    const double mid = 0.5 * (spec.nodes[k] + spec.nodes[k + 1]);
    CHECK(hermite_eval(spec, h, mid) ==
          doctest::Approx(0.5 * (h.lambda[k] + h.lambda[k + 1]))
              .epsilon(1e-14));
  }

  // Adjacent segments agree exactly at the shared node.
  for (int k = 1; k <= 2; ++k) {
    const double b = spec.nodes[k];
    CHECK(hermite_value(spec.nodes, h.lambda, std::nextafter(b, 0.0)) ==
          doctest::Approx(h.lambda[k]).epsilon(1e-9));
    CHECK(hermite_value(spec.nodes, h.lambda, std::nextafter(b, 1.0)) ==
          doctest::Approx(h.lambda[k]).epsilon(1e-9));
  }

  CHECK_THROWS_AS(hermite_eval(spec, h, -0.01), std::domain_error);
  CHECK_THROWS_AS(hermite_eval(spec, h, 1.01), std::domain_error);
}

TEST_CASE("hermite halfway example: M=1 tent") {
  TemplateSpec spec = TemplateSpec::uniform_nodes(1);
  HeightVector h;
  h.lambda.resize(3);
  h.lambda << 0.0, 1.0, 0.0;
  h.sign = SignSet::Plus;
  CHECK(hermite_eval(spec, h, 0.25) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(hermite_deriv(spec, h, 0.25) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("hermite_deriv: zero at interior nodes, FD agreement, segment sign") {
  Rng rng(13, 0);
  const TemplateSpec spec = TemplateSpec::uniform_nodes(3);
  const HeightVector h =
      heights_reconstruct(random_unconstrained(rng, 3, SignSet::Plus));

  for (int k = 1; k <= 3; ++k)
    CHECK(hermite_deriv(spec, h, spec.nodes[k]) == 0.0);

  for (int rep = 0; rep < 50; ++rep) {
    const double x = 0.02 + 0.96 * rng.uniform01();
    const double fd = (hermite_eval(spec, h, x + 1e-7) -
                       hermite_eval(spec, h, x - 1e-7)) /
                      2e-7;
    CHECK(hermite_deriv(spec, h, x) == doctest::Approx(fd).epsilon(1e-5));
  }

  // Rising segment (lambda_k < lambda_{k+1}) has positive slope inside.
  const int k = h.lambda[0] < h.lambda[1] ? 0 : 1;
  for (int i = 1; i < 100; ++i) {
    const double x = spec.nodes[k] +
                     (spec.nodes[k + 1] - spec.nodes[k]) * i / 101.0;
    CHECK(hermite_deriv(spec, h, x) > 0.0);
  }
}

TEST_CASE("Prop 1 contract: exactly M extrema for random templates") {
  Rng rng(14, 0);
  for (int rep = 0; rep < 1000; ++rep) {
    const int M = 1 + static_cast<int>(rng.uniform_index(5));
    const SignSet sign = rng.uniform01() < 0.5 ? SignSet::Plus : SignSet::Minus;
    const TemplateSpec spec = TemplateSpec::uniform_nodes(M);
    const HeightVector h =
        heights_reconstruct(random_unconstrained(rng, M, sign));
    for (int k = 1; k <= M; ++k)
      REQUIRE(hermite_deriv(spec, h, spec.nodes[k]) == 0.0);
    const auto g = [&](double x) { return hermite_eval(spec, h, x); };
    REQUIRE(count_stationary(g, 2001) == M);
  }
}

TEST_CASE("count_stationary: known trig target") {
  const auto g = [](double x) { return std::sin(2.0 * std::numbers::pi * x); };
  CHECK(count_stationary(g, 2001) == 2);
}

TEST_CASE("bspline fit: constraints hold and shape is preserved") {
  TemplateSpec spec = TemplateSpec::uniform_nodes(1, TemplateFamily::BSpline);
  HeightVector h;
  h.lambda.resize(3);
  h.lambda << -0.25, 1.0, 0.3;
  h.sign = SignSet::Plus;
  const BSplineTemplate bt = bspline_template_fit(spec, h);

  for (int k = 0; k < 3; ++k)
    CHECK(std::abs(bt.eval(spec.nodes[k]) - h.lambda[k]) <= 1e-8);
  CHECK(std::abs(bt.deriv(spec.nodes[1])) <= 1e-8);

  const auto g = [&](double x) { return bt.eval(x); };
  CHECK(count_stationary(g, 2001) == 1);
}

TEST_CASE("misuse is rejected") {
  HeightVector bad;
  bad.lambda.resize(3);
  bad.lambda << 0.0, 1.0, 2.0;  // monotone, not alternating
  bad.sign = SignSet::Plus;
  CHECK_THROWS_AS(heights_unconstrain(bad), std::invalid_argument);

  const auto g = [](double x) { return x; };
  CHECK_THROWS_AS(count_stationary(g, 51), std::invalid_argument);

  TemplateSpec hermite = TemplateSpec::uniform_nodes(1);
  HeightVector h;
  h.lambda.resize(3);
  h.lambda << 0.0, 1.0, 0.0;
  h.sign = SignSet::Plus;
  CHECK_THROWS_AS(bspline_template_fit(hermite, h), std::invalid_argument);
}

TEST_CASE("bspline fit: monotone M=0 template") {
  TemplateSpec spec = TemplateSpec::uniform_nodes(0, TemplateFamily::BSpline);
  HeightVector h;
  h.lambda.resize(2);
  h.lambda << 0.0, 1.0;
  h.sign = SignSet::Plus;
  const BSplineTemplate bt = bspline_template_fit(spec, h);
  double prev = bt.eval(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double x = static_cast<double>(i) / 1000.0;
    const double val = bt.eval(x);
    CHECK(val >= prev - 1e-9);
    prev = val;
  }
}
