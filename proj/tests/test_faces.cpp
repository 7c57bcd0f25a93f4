#include <catch2/catch_amalgamated.hpp>

#include "extremes/faces.hpp"
#include "extremes/models.hpp"
#include "extremes/rng.hpp"
#include "testutil.hpp"

using namespace extremes;

namespace {

StandardizedSample ray_sample(const Matrix& a, int n, std::uint64_t seed) {
  return testutil::support_sample(a, n, seed);
}

Matrix two_axes() {
  Matrix a(2, 2);
  a << 1, 0, 0, 1;
  return a;
}

Matrix axes_plus_diagonal() {
  Matrix a(2, 3);
  a << 0.5, 0.0, 0.5, 0.0, 0.5, 0.5;
  return a;
}

}  // namespace

TEST_CASE("simplex projection closed examples") {
  Vector x(3);
  x << 2, 1, 0;
  Vector y = euclid_simplex_projection(x);
  CHECK(y[0] == Catch::Approx(1.0).margin(1e-14));
  CHECK(y[1] == Catch::Approx(0.0).margin(1e-14));
  CHECK(y[2] == 0.0);

  Vector z(2);
  z << 0.6, 0.6;
  Vector w = euclid_simplex_projection(z);
  CHECK(w[0] == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(w[1] == Catch::Approx(0.5).epsilon(1e-14));

  Vector onsimplex(3);
  onsimplex << 0.2, 0.3, 0.5;
  Vector same = euclid_simplex_projection(onsimplex);
  CHECK((same - onsimplex).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(euclid_simplex_projection(Vector::Zero(3)), invalid_input);
  Vector neg(2);
  neg << 1.0, -0.2;
  CHECK_THROWS_AS(euclid_simplex_projection(neg), invalid_input);
}

TEST_CASE("simplex projection matches independent oracles") {
  Rng rng(42);
  SECTION("KKT enumeration oracle in low dimensions") {
    for (int d : {2, 5}) {
      for (int rep = 0; rep < 500; ++rep) {
        Vector x(d);
        for (int i = 0; i < d; ++i) x[i] = rng.uniform() * 3.0;
        Vector mine = euclid_simplex_projection(x);
        Vector oracle = testutil::simplex_projection_enumerate(x);
        CHECK((mine - oracle).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(mine.sum() == Catch::Approx(1.0).margin(1e-12));
      }
    }
  }
  SECTION("bisection oracle in dimension 20") {
    for (int rep = 0; rep < 300; ++rep) {
      Vector x(20);
      for (int i = 0; i < 20; ++i) x[i] = rng.uniform() * 2.0;
      Vector mine = euclid_simplex_projection(x);
      Vector oracle = testutil::simplex_projection_bisect(x);
      CHECK((mine - oracle).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("goix faces on noiseless max-linear support") {
  auto sample = ray_sample(two_axes(), 10000, 7);
  auto exc = extract_exceedances(sample, Norm::linf, 500);
  auto faces = goix_faces(exc, 0.1, 0.05);
  REQUIRE(faces.faces.size() == 2);
  CHECK(faces.faces[0].indices == IndexSet{0});
  CHECK(faces.faces[1].indices == IndexSet{1});
  CHECK(faces.faces[0].mass + faces.faces[1].mass == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("goix faces on comonotone data give the full face") {
  Rng rng(9);
  Matrix v(2000, 3);
  for (int i = 0; i < 2000; ++i) {
    double x = rng.pareto();
    v.row(i) << x, 2 * x, 0.5 * x;
  }
  auto sample = rank_transform(ObservationMatrix(v, {}));
  auto exc = extract_exceedances(sample, Norm::linf, 200);
  auto faces = goix_faces(exc, 0.1, 0.05);
  REQUIRE(faces.faces.size() == 1);
  CHECK(faces.faces[0].indices == IndexSet{0, 1, 2});
  CHECK(faces.faces[0].count == 200);
}

TEST_CASE("goix mass bookkeeping and the exceedance bound") {
  Rng rng(10);
  Matrix v(3000, 10);
  for (int i = 0; i < 3000; ++i)
    for (int j = 0; j < 10; ++j) v(i, j) = rng.pareto();
  auto sample = rank_transform(ObservationMatrix(v, {}));
  auto exc = extract_exceedances(sample, Norm::linf, 300);
  auto all_faces = goix_faces(exc, 0.1, 0.0);
  double total = 0.0;
  int n_faces = 0;
  for (const auto& f : all_faces.faces) {
    total += f.mass;
    ++n_faces;
  }
  CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(n_faces <= exc.k);

  SECTION("small u on diffuse data yields many near-singleton-count faces") {
    int tiny = 0;
    for (const auto& f : all_faces.faces)
      if (f.count <= 2) ++tiny;
    CHECK(n_faces > 50);
    CHECK(tiny * 2 >= n_faces);
  }
  SECTION("requires the linf norm") {
    auto exc_l1 = extract_exceedances(sample, Norm::l1, 300);
    CHECK_THROWS_AS(goix_faces(exc_l1, 0.1, 0.05), invalid_input);
  }
}

TEST_CASE("meyer faces via simplex projection") {
  SECTION("comonotone data put all projected mass on the full face") {
    Rng rng(11);
    Matrix v(1500, 3);
    for (int i = 0; i < 1500; ++i) {
      double x = rng.pareto();
      v.row(i) << 3 * x, x, 2 * x;
    }
    auto sample = rank_transform(ObservationMatrix(v, {}));
    auto exc = extract_exceedances(sample, Norm::l1, 150);
    auto faces = meyer_faces(exc, 0.0);
    REQUIRE(faces.faces.size() == 1);
    CHECK(faces.faces[0].indices == IndexSet{0, 1, 2});
    CHECK(faces.faces[0].mass == 1.0);
  }
  SECTION("two-axis support recovers the two singleton faces") {
    auto sample = ray_sample(two_axes(), 10000, 13);
    auto exc = extract_exceedances(sample, Norm::l1, 500);
    auto maximal = meyer_faces(exc, 0.05).maximal();
    REQUIRE(maximal.faces.size() == 2);
    CHECK(maximal.faces[0].indices == IndexSet{0});
    CHECK(maximal.faces[1].indices == IndexSet{1});
  }
  SECTION("an interior atom makes the full face maximal") {
    auto sample = ray_sample(axes_plus_diagonal(), 10000, 15);
    auto exc = extract_exceedances(sample, Norm::l1, 500);
    auto maximal = meyer_faces(exc, 0.05).maximal();
    REQUIRE(maximal.faces.size() == 1);
    CHECK(maximal.faces[0].indices == IndexSet{0, 1});
  }
  SECTION("maximal sets agree with goix on noiseless support") {
    for (auto a : {two_axes(), axes_plus_diagonal()}) {
      auto sample = ray_sample(a, 8000, 17);
      auto goix = goix_faces(extract_exceedances(sample, Norm::linf, 400), 0.1, 0.05).maximal();
      auto meyer = meyer_faces(extract_exceedances(sample, Norm::l1, 400), 0.05).maximal();
      REQUIRE(goix.faces.size() == meyer.faces.size());
      for (std::size_t i = 0; i < goix.faces.size(); ++i)
        CHECK(goix.faces[i].indices == meyer.faces[i].indices);
    }
  }
  SECTION("requires the l1 norm") {
    auto sample = ray_sample(two_axes(), 500, 3);
    auto exc = extract_exceedances(sample, Norm::linf, 50);
    CHECK_THROWS_AS(meyer_faces(exc, 0.0), invalid_input);
  }
}

TEST_CASE("simpson region masses") {
  Rng rng(19);
  const int n = 100000;
  Matrix v(n, 2);
  for (int i = 0; i < n; ++i) {
    v(i, 0) = rng.pareto();
    v(i, 1) = rng.pareto();
  }
  auto sample = rank_transform(ObservationMatrix(v, {}));
  const int k = 1000;

  SECTION("axis face of independent data has order-1/t mass") {
    auto rm = simpson_region_mass(sample, {0}, 0.5, k);
    CHECK(rm.mass > 0.3);
    REQUIRE(rm.rv_index.has_value());
    CHECK(*rm.rv_index == Catch::Approx(1.0).margin(0.15));
  }
  SECTION("I = V reduces to joint exceedance counting") {
    auto rm = simpson_region_mass(sample, {0, 1}, 0.5, k);
    double t = static_cast<double>(n) / k;
    int count = 0;
    for (int r = 0; r < n; ++r)
      if (sample.pareto(r, 0) > t && sample.pareto(r, 1) > t) ++count;
    CHECK(rm.mass == Catch::Approx(static_cast<double>(count) / k).epsilon(1e-12));
  }
  SECTION("delta = 0 is the hard rectangle") {
    auto rm = simpson_region_mass(sample, {0}, 0.0, k);
    double t = static_cast<double>(n) / k;
    int count = 0;
    for (int r = 0; r < n; ++r)
      if (sample.pareto(r, 0) > t && sample.pareto(r, 1) <= 1.0) ++count;
    CHECK(rm.mass == Catch::Approx(static_cast<double>(count) / k).margin(1e-12));
  }
  SECTION("no qualifying rows flags the estimate") {
    Matrix w(50, 2);
    for (int i = 0; i < 50; ++i) {
      double x = rng.pareto();
      w.row(i) << x, x + 0.5;
    }
    auto com = rank_transform(ObservationMatrix(w, {}));
    auto rm = simpson_region_mass(com, {0}, 0.0, 5);
    CHECK(rm.mass == 0.0);
    CHECK_FALSE(rm.rv_index.has_value());
  }
}

TEST_CASE("apriori lattice search") {
  SECTION("comonotone columns collapse to the full set") {
    Rng rng(23);
    Matrix v(300, 4);
    for (int i = 0; i < 300; ++i) {
      double x = rng.pareto();
      for (int j = 0; j < 4; ++j) v(i, j) = (j + 1) * x;
    }
    auto sample = rank_transform(ObservationMatrix(v, {}));
    auto faces = apriori_faces(sample, 30, AprioriCriterion::cond_chi, 0.5);
    REQUIRE(faces.faces.size() == 1);
    CHECK(faces.faces[0].indices == IndexSet{0, 1, 2, 3});
    CHECK(faces.faces[0].mass == 1.0);
  }
  SECTION("independent columns leave only singletons") {
    Rng rng(29);
    Matrix v(4000, 5);
    for (int i = 0; i < 4000; ++i)
      for (int j = 0; j < 5; ++j) v(i, j) = rng.pareto();
    auto sample = rank_transform(ObservationMatrix(v, {}));
    for (auto criterion : {AprioriCriterion::cond_chi, AprioriCriterion::eta_test}) {
      double param = criterion == AprioriCriterion::cond_chi ? 0.3 : 0.05;
      auto faces = apriori_faces(sample, 400, criterion, param);
      REQUIRE(faces.faces.size() == 5);
      for (const auto& f : faces.faces) CHECK(f.indices.size() == 1);
    }
  }
  SECTION("output faces are pairwise non-nested") {
    Matrix a(4, 3);
    a << 0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.5, 0.5;
    auto sample = ray_sample(a, 6000, 31);
    auto faces = apriori_faces(sample, 300, AprioriCriterion::cond_chi, 0.5);
    for (const auto& f : faces.faces)
      for (const auto& g : faces.faces)
        if (f.indices != g.indices) CHECK_FALSE(is_subset(f.indices, g.indices));
  }
  SECTION("frontier cap aborts on a dense comonotone block") {
    Rng rng(37);
    Matrix v(60, 25);
    for (int i = 0; i < 60; ++i) {
      double x = rng.pareto();
      for (int j = 0; j < 25; ++j) v(i, j) = x * (1.0 + 0.001 * j);
    }
    auto sample = rank_transform(ObservationMatrix(v, {}));
    CHECK_THROWS_AS(apriori_faces(sample, 10, AprioriCriterion::cond_chi, 0.0),
                    computation_error);
  }
}

TEST_CASE("greedy face adjustment") {
  // planted structure: variables 0-2 fully dependent, 3 and 4 independent
  Matrix a = Matrix::Zero(5, 3);
  a(0, 0) = a(1, 0) = a(2, 0) = 1.0;
  a(3, 1) = 1.0;
  a(4, 2) = 1.0;
  MaxLinearModel model(a);
  auto sample = rank_transform(simulate_max_linear(model, 5000, 41));
  const int k = 250;

  SECTION("pruning recovers the planted face") {
    auto res = greedy_adjust_face(sample, {0, 1, 2, 3}, k, GreedyDirection::prune);
    CHECK(res.face == IndexSet{0, 1, 2});
    CHECK(res.chi == Catch::Approx(1.0).margin(1e-12));
    CHECK(res.trace.size() >= 2);
    CHECK(res.trace.front().chi < res.trace.back().chi);
  }
  SECTION("locally optimal seed is returned unchanged") {
    auto res = greedy_adjust_face(sample, {0, 1, 2}, k, GreedyDirection::prune);
    CHECK(res.face == IndexSet{0, 1, 2});
    CHECK(res.trace.size() == 1);
  }
  SECTION("expansion keeps chi above the floor") {
    auto res = greedy_adjust_face(sample, {0, 1}, k, GreedyDirection::expand, 0.9);
    CHECK(res.face == IndexSet{0, 1, 2});  // adding 2 keeps chi = 1, others drop it
  }
}

TEST_CASE("face set maximal helper and json round trip") {
  FaceSet s;
  s.method = "test";
  s.params = {{"u", 0.1}};
  s.faces.push_back({{0}, 0.3, 3});
  s.faces.push_back({{0, 1}, 0.4, 4});
  s.faces.push_back({{2}, 0.3, 3});
  auto maximal = s.maximal();
  REQUIRE(maximal.faces.size() == 2);
  CHECK(maximal.faces[0].indices == IndexSet{0, 1});
  CHECK(maximal.faces[1].indices == IndexSet{2});

  nlohmann::json j = s;
  CHECK(j["faces"][0]["indices"] == nlohmann::json::array({1}));  // 1-based on disk
  auto back = j.get<FaceSet>();
  CHECK(back.faces[1].indices == IndexSet{0, 1});
  CHECK(back.faces[1].count == 4);
}
