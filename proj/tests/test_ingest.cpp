#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "extremes/data.hpp"
#include "extremes/rng.hpp"
#include "testutil.hpp"

using namespace extremes;

namespace {

ObservationMatrix make_random_data(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix values(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) values(i, j) = rng.normal();
  return ObservationMatrix(values, {});
}

}  // namespace

TEST_CASE("rank transform hand examples") {
  Matrix v(3, 2);
  v << 3.0, 1.0, 1.0, 2.0, 2.0, 3.0;
  auto sample = rank_transform(ObservationMatrix(v, {"a", "b"}));
  CHECK(sample.ranks(0, 0) == 3.0);
  CHECK(sample.ranks(1, 0) == 1.0);
  CHECK(sample.ranks(2, 0) == 2.0);
  CHECK(sample.pareto(0, 0) == Catch::Approx(4.0).epsilon(1e-15));
  CHECK(sample.pareto(1, 0) == Catch::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(sample.pareto(2, 0) == Catch::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("tied maxima share the average rank") {
  Matrix v(4, 2);
  v << 5.0, 1.0, 5.0, 2.0, 1.0, 3.0, 2.0, 4.0;
  auto sample = rank_transform(ObservationMatrix(v, {}));
  CHECK(sample.ranks(0, 0) == 3.5);
  CHECK(sample.ranks(1, 0) == 3.5);
  CHECK(sample.pareto(0, 0) == Catch::Approx(10.0 / 3.0).epsilon(1e-15));
  CHECK(sample.pareto(1, 0) == Catch::Approx(10.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("strictly increasing column gives strictly increasing pareto") {
  Matrix v(6, 2);
  for (int i = 0; i < 6; ++i) {
    v(i, 0) = std::exp(0.3 * i);
    v(i, 1) = 10.0 - i;
  }
  auto sample = rank_transform(ObservationMatrix(v, {}));
  for (int i = 1; i < 6; ++i) CHECK(sample.pareto(i, 0) > sample.pareto(i - 1, 0));
}

TEST_CASE("rank transform properties") {
  auto data = make_random_data(80, 3, 9);
  auto sample = rank_transform(data);

  SECTION("invariant under strictly increasing marginal transforms") {
    Matrix warped = data.values;
    for (int i = 0; i < warped.rows(); ++i) {
      warped(i, 0) = std::exp(warped(i, 0));
      warped(i, 1) = std::atan(warped(i, 1));
      warped(i, 2) = warped(i, 2) * 3.0 + 11.0;
    }
    auto sample2 = rank_transform(ObservationMatrix(warped, {}));
    CHECK((sample.pareto - sample2.pareto).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("row permutation permutes pareto rows identically") {
    Rng rng(3);
    std::vector<int> perm(80);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Matrix permuted(80, 3);
    for (int i = 0; i < 80; ++i) permuted.row(i) = data.values.row(perm[i]);
    auto sample2 = rank_transform(ObservationMatrix(permuted, {}));
    for (int i = 0; i < 80; ++i)
      CHECK((sample2.pareto.row(i) - sample.pareto.row(perm[i])).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("pareto values per column are exactly the transformed ranks") {
    for (int j = 0; j < 3; ++j) {
      std::vector<double> got, expect;
      for (int i = 0; i < 80; ++i) {
        got.push_back(sample.pareto(i, j));
        expect.push_back(1.0 / (1.0 - sample.ranks(i, j) / 81.0));
      }
      std::sort(got.begin(), got.end());
      std::sort(expect.begin(), expect.end());
      for (int i = 0; i < 80; ++i) CHECK(got[i] == Catch::Approx(expect[i]).epsilon(1e-14));
    }
  }

  SECTION("pareto entries live in the documented range") {
    CHECK(sample.pareto.minCoeff() >= 81.0 / 80.0 - 1e-12);
    CHECK(sample.pareto.maxCoeff() <= 81.0 + 1e-9);
  }
}

TEST_CASE("constant column is rejected with the column named") {
  Matrix v(4, 2);
  v << 1.0, 7.0, 2.0, 7.0, 3.0, 7.0, 4.0, 7.0;
  CHECK_THROWS_WITH((ObservationMatrix{v, {"flow", "lake"}}),
                    Catch::Matchers::ContainsSubstring("lake"));
}

TEST_CASE("exceedance extraction keeps the k largest radii") {
  // l1 radii: 10, 8, 5, 2
  Matrix v(4, 2);
  v << 6.0, 4.0, 5.0, 3.0, 3.0, 2.0, 1.0, 1.0;
  StandardizedSample sample;
  sample.pareto = v;
  sample.ranks = average_ranks(v);
  sample.source = ObservationMatrix(v, {});
  auto exc = extract_exceedances(sample, Norm::l1, 2);
  CHECK(exc.threshold == 5.0);
  CHECK(exc.k == 2);
  CHECK(exc.radii[0] == 10.0);
  CHECK(exc.radii[1] == 8.0);
  CHECK(exc.indices[0] == 0);
  CHECK(exc.indices[1] == 1);
  for (int r = 0; r < 2; ++r)
    CHECK(exc.angles.row(r).sum() == Catch::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(extract_exceedances(sample, Norm::l1, 4), invalid_input);
}

TEST_CASE("ties at the threshold are broken by row index to keep exactly k") {
  Matrix v(5, 2);
  v << 4.0, 4.0, 3.0, 5.0, 5.0, 3.0, 2.0, 1.0, 1.0, 1.0;
  StandardizedSample sample;
  sample.pareto = v;
  sample.ranks = average_ranks(v);
  sample.source = ObservationMatrix(v, {});
  auto exc = extract_exceedances(sample, Norm::l1, 2);  // radii 8,8,8,3,2
  CHECK(exc.k == 2);
  CHECK(exc.threshold == 8.0);
  std::vector<int> idx = exc.indices;
  std::sort(idx.begin(), idx.end());
  CHECK(idx == std::vector<int>{0, 1});
}

TEST_CASE("the 90 percent radial quantile on n=2024 gives k=202") {
  auto data = make_random_data(2024, 2, 77);
  auto sample = rank_transform(data);
  auto exc = extract_exceedances_quantile(sample, Norm::l1, 0.90);
  CHECK(exc.k == 202);
}

TEST_CASE("angles are unit vectors in the requested norm") {
  auto sample = rank_transform(make_random_data(300, 4, 5));
  for (Norm norm : {Norm::l1, Norm::l2, Norm::linf}) {
    auto exc = extract_exceedances(sample, norm, 50);
    for (int r = 0; r < exc.k; ++r) {
      CHECK(vector_norm(exc.angles.row(r).transpose(), norm) ==
            Catch::Approx(1.0).epsilon(1e-12));
      CHECK(exc.angles.row(r).minCoeff() >= 0.0);
    }
    for (int r = 1; r < exc.k; ++r) CHECK(exc.radii[r] <= exc.radii[r - 1]);
  }
}

TEST_CASE("absolute level entry point converts to a count") {
  auto sample = rank_transform(make_random_data(500, 3, 21));
  auto exc = extract_exceedances_level(sample, Norm::linf, 20.0);
  int above = 0;
  for (int i = 0; i < sample.n(); ++i)
    if (sample.pareto.row(i).maxCoeff() > 20.0) ++above;
  CHECK(exc.k == above);
}

TEST_CASE("csv and json round trips") {
  auto data = make_random_data(40, 3, 1234);
  auto dir = std::filesystem::temp_directory_path() / "extremes_test_io";
  std::filesystem::create_directories(dir);
  auto path = (dir / "data.csv").string();
  write_csv(path, data.values, data.labels);
  auto back = read_csv(path);
  CHECK(back.labels == data.labels);
  CHECK((back.values - data.values).cwiseAbs().maxCoeff() < 1e-12);

  auto sample = rank_transform(data);
  nlohmann::json j = sample;
  auto sample2 = j.get<StandardizedSample>();
  CHECK((sample2.pareto - sample.pareto).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sample2.ranks - sample.ranks).cwiseAbs().maxCoeff() == 0.0);

  auto exc = extract_exceedances(sample, Norm::l2, 10);
  nlohmann::json je = exc;
  CHECK(je.contains("norm"));
  CHECK(je.contains("k"));
  CHECK(je.contains("threshold"));
  CHECK(je.contains("radii"));
  CHECK(je.contains("angles"));
  CHECK(je.contains("indices"));
  auto exc2 = je.get<ExceedanceSet>();
  CHECK(exc2.threshold == exc.threshold);
  CHECK(exc2.indices == exc.indices);
}
