#include <catch2/catch_amalgamated.hpp>

#include "extremes/coefficients.hpp"
#include "extremes/integrate.hpp"
#include "extremes/models.hpp"
#include "extremes/rng.hpp"
#include "testutil.hpp"

using namespace extremes;

namespace {

/// 2-d quadrature of an exponent density over the joint exceedance region
/// (1,inf)^2, via the substitution y = 1/u.
template <typename Density>
double joint_exceedance_mass(Density lambda, double tol = 1e-9) {
  auto outer = [&](double u1) {
    return integrate(
        [&](double u2) {
          Vector y(2);
          y << 1.0 / u1, 1.0 / u2;
          return lambda(y) / (u1 * u1 * u2 * u2);
        },
        1e-10, 1.0, tol);
  };
  return integrate(outer, 1e-10, 1.0, tol);
}

/// 2-d quadrature of a function over the exceedance support L.
template <typename F>
double integral_over_support(F f, double tol = 1e-8) {
  // region A: y1 in (1,inf), y2 in (0,inf); region B: y1 in (0,1], y2 in (1,inf)
  auto region_a = integrate(
      [&](double u1) {
        double y1 = 1.0 / u1;
        double inner_low = integrate(
            [&](double y2) {
              Vector y(2);
              y << y1, y2;
              return f(y);
            },
            1e-12, 1.0, tol);
        double inner_high = integrate(
            [&](double u2) {
              Vector y(2);
              y << y1, 1.0 / u2;
              return f(y) / (u2 * u2);
            },
            1e-10, 1.0, tol);
        return (inner_low + inner_high) / (u1 * u1);
      },
      1e-10, 1.0, tol);
  auto region_b = integrate(
      [&](double y1) {
        return integrate(
            [&](double u2) {
              Vector y(2);
              y << y1, 1.0 / u2;
              return f(y) / (u2 * u2);
            },
            1e-10, 1.0, tol);
      },
      1e-12, 1.0, tol);
  return region_a + region_b;
}

double chi_from_sim(const ObservationMatrix& data, int i, int j, int k) {
  auto sample = rank_transform(data);
  double q = 1.0 - static_cast<double>(k) / sample.n();
  return chi_hat(sample, make_index_set({i, j}), q).value;
}

}  // namespace

TEST_CASE("max-linear model validation") {
  Matrix bad(2, 2);
  bad << 0.5, 0.4, 0.5, 0.5;
  CHECK_THROWS_AS(MaxLinearModel(bad), invalid_input);
  Matrix zero_col(2, 3);
  zero_col << 0.5, 0.5, 0.0, 0.5, 0.5, 0.0;
  CHECK_THROWS_AS(MaxLinearModel(zero_col), invalid_input);
}

TEST_CASE("max-linear simulation limits") {
  SECTION("identity matrix gives independent components") {
    MaxLinearModel model(Matrix::Identity(2, 2));
    auto data = simulate_max_linear(model, 50000, 3);
    CHECK(chi_from_sim(data, 0, 1, 500) < 0.06);
  }
  SECTION("single factor gives complete dependence") {
    Matrix a(3, 1);
    a << 1, 1, 1;
    MaxLinearModel model(a);
    auto data = simulate_max_linear(model, 2000, 5);
    CHECK(chi_from_sim(data, 0, 1, 100) == Catch::Approx(1.0).margin(1e-12));
    CHECK(chi_from_sim(data, 1, 2, 100) == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("margins are standard Frechet") {
    Matrix a(2, 3);
    a << 0.2, 0.5, 0.3, 0.6, 0.1, 0.3;
    auto data = simulate_max_linear(MaxLinearModel(a), 10000, 7);
    for (int j = 0; j < 2; ++j) {
      std::vector<double> col(data.values.col(j).data(), data.values.col(j).data() + 10000);
      CHECK(ks_test(col, testutil::frechet_cdf).p_value > 0.01);
    }
  }
}

TEST_CASE("recursive max-linear models") {
  SECTION("cycles are rejected") {
    CHECK_THROWS_AS(RecursiveMLModel(2, {{0, 1, 0.5}, {1, 0, 0.5}}, {1.0, 1.0}), invalid_input);
  }
  SECTION("empty edge set gives independent scaled Frechet margins") {
    RecursiveMLModel model(3, {}, {2.0, 1.0, 0.5});
    auto data = simulate_recursive_ml(model, 10000, 9);
    std::vector<double> col(10000);
    for (int i = 0; i < 10000; ++i) col[i] = data.values(i, 0) / 2.0;
    CHECK(ks_test(col, testutil::frechet_cdf).p_value > 0.01);
    CHECK(chi_from_sim(data, 0, 1, 200) < 0.1);
  }
  SECTION("dominant edge forces near-complete dependence") {
    RecursiveMLModel model(2, {{0, 1, 50.0}}, {1.0, 1.0});
    auto data = simulate_recursive_ml(model, 20000, 11);
    CHECK(chi_from_sim(data, 0, 1, 400) > 0.9);
  }
}

TEST_CASE("recursive to max-linear expansion") {
  SECTION("empty dag becomes the identity") {
    RecursiveMLModel model(3, {}, {2.0, 1.0, 0.5});
    auto ml = recursive_to_max_linear(model);
    CHECK((ml.a - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);
  }
  SECTION("chain coefficients unroll the recursion") {
    RecursiveMLModel model(2, {{0, 1, 0.4}}, {0.8, 1.0});
    auto ml = recursive_to_max_linear(model);
    // row 2 before normalization: (0.4*0.8, 1.0)
    double s = 0.4 * 0.8 + 1.0;
    CHECK(ml.a(1, 0) == Catch::Approx(0.4 * 0.8 / s).epsilon(1e-14));
    CHECK(ml.a(1, 1) == Catch::Approx(1.0 / s).epsilon(1e-14));
  }
  SECTION("pairwise chi agrees between the two simulators") {
    std::vector<DagEdge> edges = {{0, 1, 0.7}, {0, 2, 0.4}, {1, 3, 1.2}, {2, 3, 0.3}};
    RecursiveMLModel model(4, edges, {1.0, 0.8, 1.1, 0.9});
    auto direct = simulate_recursive_ml(model, 100000, 13);
    auto expanded = simulate_max_linear(recursive_to_max_linear(model), 100000, 14);
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        double a = chi_from_sim(direct, i, j, 20000);
        double b = chi_from_sim(expanded, i, j, 20000);
        CHECK(a == Catch::Approx(b).margin(0.02));
      }
  }
}

TEST_CASE("logistic exponent density") {
  LogisticModel model(2, 0.5);
  SECTION("closed value at the unit point") {
    Vector y = Vector::Ones(2);
    CHECK(logistic_exponent_density(model, y) ==
          Catch::Approx(std::pow(2.0, -1.5)).epsilon(1e-13));
  }
  SECTION("homogeneity of degree -(d+1)") {
    Rng rng(15);
    for (int rep = 0; rep < 20; ++rep) {
      Vector y(2);
      y << rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0);
      double base = logistic_exponent_density(model, y);
      for (double c : {0.5, 2.0, 7.0}) {
        CHECK(logistic_exponent_density(model, Vector(c * y)) * std::pow(c, 3.0) ==
              Catch::Approx(base).epsilon(1e-10));
      }
    }
  }
  SECTION("joint exceedance mass matches 2 - 2^theta and vanishes as theta -> 1") {
    double prev = 1.0;
    for (double theta : {0.3, 0.6, 0.9, 0.97}) {
      LogisticModel m(2, theta);
      double mass = joint_exceedance_mass(
          [&](const Vector& y) { return logistic_exponent_density(m, y); });
      CHECK(mass == Catch::Approx(2.0 - std::pow(2.0, theta)).epsilon(1e-6));
      CHECK(mass < prev);
      prev = mass;
    }
  }
}

TEST_CASE("logistic simulation") {
  SECTION("margins are standard Frechet") {
    auto data = simulate_logistic(LogisticModel(3, 0.5), 10000, 17);
    for (int j = 0; j < 3; ++j) {
      std::vector<double> col(data.values.col(j).data(), data.values.col(j).data() + 10000);
      CHECK(ks_test(col, testutil::frechet_cdf).p_value > 0.01);
    }
  }
  SECTION("empirical chi matches the closed form and increases as theta decreases") {
    double prev = 0.0;
    for (double theta : {0.8, 0.5, 0.2}) {
      auto data = simulate_logistic(LogisticModel(2, theta), 100000, 19);
      double chi = chi_from_sim(data, 0, 1, 2000);
      CHECK(chi == Catch::Approx(2.0 - std::pow(2.0, theta)).margin(0.03));
      CHECK(chi > prev);
      prev = chi;
    }
  }
}

TEST_CASE("husler-reiss model validation") {
  Matrix gamma(3, 3);
  gamma << 0, 1, 1, 1, 0, 10, 1, 10, 0;
  CHECK_THROWS_AS(HuslerReissModel(gamma), invalid_input);  // not CND
  Matrix asym(2, 2);
  asym << 0, 1, 2, 0;
  CHECK_THROWS_AS(HuslerReissModel(asym), invalid_input);
  Matrix diag(2, 2);
  diag << 0.5, 1, 1, 0;
  CHECK_THROWS_AS(HuslerReissModel(diag), invalid_input);
}

TEST_CASE("husler-reiss exponent density") {
  SECTION("closed value at the unit point in d=2") {
    Matrix gamma(2, 2);
    gamma << 0, 1, 1, 0;
    HuslerReissModel model(gamma);
    Vector y = Vector::Ones(2);
    CHECK(hr_exponent_density(model, y, 0) ==
          Catch::Approx(std::exp(-0.125) / std::sqrt(2.0 * pi)).epsilon(1e-12));
  }
  SECTION("anchor invariance and homogeneity on random models") {
    for (int rep = 0; rep < 10; ++rep) {
      Matrix gamma = testutil::random_variogram(4, 100 + rep);
      HuslerReissModel model(gamma);
      Rng rng(rep);
      Vector y(4);
      for (int i = 0; i < 4; ++i) y[i] = rng.uniform(0.3, 4.0);
      double base = hr_exponent_density(model, y, 0);
      for (int m = 1; m < 4; ++m)
        CHECK(hr_exponent_density(model, y, m) == Catch::Approx(base).epsilon(1e-10));
      for (double c : {0.5, 3.0})
        CHECK(hr_exponent_density(model, Vector(c * y), 0) * std::pow(c, 5.0) ==
              Catch::Approx(base).epsilon(1e-10));
    }
  }
}

TEST_CASE("husler-reiss exceedance mass lambda1") {
  SECTION("d=2 closed form and quadrature") {
    for (double g : {0.25, 1.0, 4.0}) {
      Matrix gamma(2, 2);
      gamma << 0, g, g, 0;
      HuslerReissModel model(gamma);
      double closed = 2.0 * normal_cdf(std::sqrt(g) / 2.0);
      CHECK(model.lambda1().value == Catch::Approx(closed).epsilon(1e-12));
      double quad = integral_over_support(
          [&](const Vector& y) { return hr_exponent_density(model, y, 0); });
      CHECK(model.lambda1().value == Catch::Approx(quad).margin(1e-3));
    }
  }
  SECTION("d=3 formula against randomized qmc integration") {
    Matrix gamma = testutil::random_variogram(3, 33);
    HuslerReissModel model(gamma);
    auto qmc = integrate_over_exceedance_support(
        [&](const Vector& y) { return hr_exponent_density(model, y, 0); }, 3);
    CHECK(model.lambda1().value == Catch::Approx(qmc.value).margin(0.01));
  }
}

TEST_CASE("husler-reiss pareto density") {
  Matrix gamma(2, 2);
  gamma << 0, 1, 1, 0;
  HuslerReissModel model(gamma);
  SECTION("integrates to one over the support") {
    for (double g : {0.25, 1.0, 4.0}) {
      Matrix gm(2, 2);
      gm << 0, g, g, 0;
      HuslerReissModel m(gm);
      double total =
          integral_over_support([&](const Vector& y) { return hr_pareto_density(m, y); });
      CHECK(total == Catch::Approx(1.0).margin(1e-3));
    }
  }
  SECTION("support is enforced") {
    Vector inside(2);
    inside << 0.5, 0.7;
    CHECK_THROWS_AS(hr_pareto_density(model, inside), invalid_input);
  }
}

TEST_CASE("husler-reiss pareto simulation") {
  Matrix gamma(2, 2);
  gamma << 0, 1, 1, 0;
  HuslerReissModel model(gamma);
  auto sim = simulate_hr_pareto(model, 100000, 23);
  SECTION("support and acceptance diagnostics") {
    for (int r = 0; r < sim.data.n(); ++r)
      CHECK(sim.data.values.row(r).maxCoeff() >= 1.0);
    CHECK(sim.acceptance_rate > 0.3);
  }
  SECTION("empirical chi matches the integration oracle") {
    double chi = chi_from_sim(sim.data, 0, 1, 1000);
    CHECK(chi == Catch::Approx(chi_oracle_hr(1.0)).margin(0.03));
  }
  SECTION("conditional margin above one is standard Pareto") {
    std::vector<double> tail;
    for (int r = 0; r < sim.data.n(); ++r)
      if (sim.data.values(r, 0) > 1.0) tail.push_back(sim.data.values(r, 0));
    CHECK(ks_test(tail, testutil::pareto_cdf).p_value > 0.01);
  }
  SECTION("deterministic given the seed") {
    auto sim2 = simulate_hr_pareto(model, 100, 23);
    auto sim3 = simulate_hr_pareto(model, 100, 23);
    CHECK((sim2.data.values - sim3.data.values).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("chi oracle for the husler-reiss family") {
  CHECK(chi_oracle_hr(0.0) == 1.0);
  CHECK(chi_oracle_hr(400.0) < 1e-6);
  SECTION("monotone decreasing in gamma") {
    double prev = 1.0;
    for (double g : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
      double chi = chi_oracle_hr(g);
      CHECK(chi < prev);
      prev = chi;
    }
  }
  SECTION("cross-check against the closed form") {
    for (double g : {0.25, 1.0, 4.0}) {
      CHECK(chi_oracle_hr(g) ==
            Catch::Approx(2.0 - 2.0 * normal_cdf(std::sqrt(g) / 2.0)).epsilon(1e-8));
    }
  }
  SECTION("cross-check against full 2-d quadrature of the density") {
    Matrix gamma(2, 2);
    gamma << 0, 1, 1, 0;
    HuslerReissModel model(gamma);
    double mass = joint_exceedance_mass(
        [&](const Vector& y) { return hr_exponent_density(model, y, 0); });
    CHECK(chi_oracle_hr(1.0) == Catch::Approx(mass).epsilon(1e-6));
  }
  SECTION("gamma_from_chi inverts the closed form") {
    for (double g : {0.3, 1.0, 3.0})
      CHECK(gamma_from_chi(2.0 - 2.0 * normal_cdf(std::sqrt(g) / 2.0)) ==
            Catch::Approx(g).epsilon(1e-10));
  }
}
