#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "extremes/angular.hpp"
#include "extremes/coefficients.hpp"
#include "extremes/common.hpp"
#include "extremes/data.hpp"
#include "extremes/epca.hpp"
#include "extremes/faces.hpp"
#include "extremes/graphical.hpp"
#include "extremes/models.hpp"

namespace extremes {

struct ClusteringConfig {
  int p = 10;
  double cut = 0.02;
  std::uint64_t seed = 1;
  int restarts = 25;
};

struct FacesConfig {
  std::string method = "goix";  // goix | simpson | meyer | apriori
  double epsilon = 0.1;
  double u = 0.01;
  double delta = 0.0;
  std::string criterion = "cond_chi";
  double threshold_or_level = 0.2;
  int cap = 100000;
};

struct GraphConfig {
  int max_clique = 3;
  double censor_quantile = 0.95;
};

struct SimulationConfig {
  std::string model = "hr";
  int n = 1000;
  std::uint64_t seed = 1;
};

struct PipelineConfig {
  std::string input;
  std::string norm = "l1";
  std::optional<int> k;
  double quantile = 0.95;  // used when k is absent
  ClusteringConfig clustering;
  FacesConfig faces;
  GraphConfig graph;
  SimulationConfig simulation;
  std::string output_dir = "extremes-out";
};

inline void to_json(nlohmann::json& j, const ClusteringConfig& c) {
  j = {{"p", c.p}, {"cut", c.cut}, {"seed", c.seed}, {"restarts", c.restarts}};
}
inline void from_json(const nlohmann::json& j, ClusteringConfig& c) {
  c.p = j.value("p", c.p);
  c.cut = j.value("cut", c.cut);
  c.seed = j.value("seed", c.seed);
  c.restarts = j.value("restarts", c.restarts);
}
inline void to_json(nlohmann::json& j, const FacesConfig& c) {
  j = {{"method", c.method},       {"epsilon", c.epsilon},
       {"u", c.u},                 {"delta", c.delta},
       {"criterion", c.criterion}, {"threshold_or_level", c.threshold_or_level},
       {"cap", c.cap}};
}
inline void from_json(const nlohmann::json& j, FacesConfig& c) {
  c.method = j.value("method", c.method);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.u = j.value("u", c.u);
  c.delta = j.value("delta", c.delta);
  c.criterion = j.value("criterion", c.criterion);
  c.threshold_or_level = j.value("threshold_or_level", c.threshold_or_level);
  c.cap = j.value("cap", c.cap);
}
inline void to_json(nlohmann::json& j, const GraphConfig& c) {
  j = {{"max_clique", c.max_clique}, {"censor_quantile", c.censor_quantile}};
}
inline void from_json(const nlohmann::json& j, GraphConfig& c) {
  c.max_clique = j.value("max_clique", c.max_clique);
  c.censor_quantile = j.value("censor_quantile", c.censor_quantile);
}
inline void to_json(nlohmann::json& j, const SimulationConfig& c) {
  j = {{"model", c.model}, {"n", c.n}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, SimulationConfig& c) {
  c.model = j.value("model", c.model);
  c.n = j.value("n", c.n);
  c.seed = j.value("seed", c.seed);
}
inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"input", c.input},           {"norm", c.norm},
       {"quantile", c.quantile},     {"clustering", c.clustering},
       {"faces", c.faces},           {"graph", c.graph},
       {"simulation", c.simulation}, {"output_dir", c.output_dir}};
  if (c.k) j["k"] = *c.k;
}
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c.input = j.value("input", c.input);
  c.norm = j.value("norm", c.norm);
  if (j.contains("k")) c.k = j.at("k").get<int>();
  c.quantile = j.value("quantile", c.quantile);
  if (j.contains("clustering")) c.clustering = j.at("clustering").get<ClusteringConfig>();
  if (j.contains("faces")) c.faces = j.at("faces").get<FacesConfig>();
  if (j.contains("graph")) c.graph = j.at("graph").get<GraphConfig>();
  if (j.contains("simulation")) c.simulation = j.at("simulation").get<SimulationConfig>();
  c.output_dir = j.value("output_dir", c.output_dir);
}

struct PipelineReport {
  bool success = false;
  std::string failed_stage;
  nlohmann::json manifest;
  std::string output_dir;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw invalid_input("cannot write " + path.string());
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

}  // namespace detail

/// Censoring threshold on the Pareto scale for a marginal quantile: the top
/// floor(n(1-q)) ranks lie strictly above it.
inline double pareto_threshold_for_quantile(int n, double quantile) {
  int kc = std::max(1, static_cast<int>(std::floor(n * (1.0 - quantile))));
  return (n + 1.0) / (kc + 1.0);
}

/// Plot-ready CSV exports from stage outputs; stages not supplied are skipped.
inline std::vector<std::string> emit_plot_data(
    const std::filesystem::path& dir, const StandardizedSample* sample, int k,
    const std::vector<std::vector<ChiEstimate>>* curves, const ExtremalPCA* pca,
    const Matrix* empirical_chi, const FittedModel* fitted) {
  std::vector<std::string> written;
  std::ofstream out;
  if (curves && sample) {
    std::ofstream f(dir / "chi_curves.csv");
    f.precision(17);
    f << "i,j,q,value,lo,hi\n";
    for (const auto& curve : *curves)
      for (const auto& est : curve)
        f << est.subset[0] + 1 << ',' << est.subset[1] + 1 << ',' << est.level << ','
          << est.value << ',' << est.ci_lower.value_or(est.value) << ','
          << est.ci_upper.value_or(est.value) << '\n';
    written.push_back("chi_curves.csv");
  }
  if (pca) {
    {
      std::ofstream f(dir / "scree.csv");
      f.precision(17);
      f << "component,eigenvalue\n";
      for (int i = 0; i < pca->d(); ++i) f << i + 1 << ',' << pca->eigenvalues[i] << '\n';
      written.push_back("scree.csv");
    }
    if (sample) {
      std::ofstream f(dir / "eigenvectors_by_label.csv");
      f.precision(17);
      f << "label";
      for (int c = 0; c < pca->d(); ++c) f << ",v" << c + 1;
      f << '\n';
      for (int r = 0; r < pca->d(); ++r) {
        f << sample->labels()[r];
        for (int c = 0; c < pca->d(); ++c) f << ',' << pca->eigenvectors(r, c);
        f << '\n';
      }
      written.push_back("eigenvectors_by_label.csv");
    }
  }
  if (empirical_chi && fitted) {
    Matrix model_chi = model_chi_matrix(*fitted);
    std::ofstream f(dir / "chi_scatter.csv");
    f.precision(17);
    f << "i,j,empirical,fitted\n";
    for (int i = 0; i < empirical_chi->rows(); ++i)
      for (int j = i + 1; j < empirical_chi->cols(); ++j)
        f << i + 1 << ',' << j + 1 << ',' << (*empirical_chi)(i, j) << ',' << model_chi(i, j)
          << '\n';
    written.push_back("chi_scatter.csv");
  }
  (void)k;
  return written;
}

/// Run the full workflow: standardize, explore chi, cluster, PCA, faces,
/// tree learning, block-graph fitting, simulation from the fit. Every stage
/// writes its artifacts under the output directory and is recorded in
/// manifest.json. The EXTREMES_OUTPUT_DIR environment variable overrides the
/// configured output directory.
inline PipelineReport run_pipeline(PipelineConfig config) {
  if (const char* env = std::getenv("EXTREMES_OUTPUT_DIR"); env && *env)
    config.output_dir = env;
  std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);

  PipelineReport report;
  report.output_dir = config.output_dir;
  nlohmann::json& manifest = report.manifest;
  manifest["schema_version"] = 1;
  manifest["tool_version"] = version;
  manifest["config"] = config;
  manifest["stages"] = nlohmann::json::array();

  auto record = [&](const std::string& name, const nlohmann::json& params,
                    const std::vector<std::string>& outputs,
                    const nlohmann::json& diag = nlohmann::json::object()) {
    manifest["stages"].push_back({{"name", name},
                                  {"status", "ok"},
                                  {"params", params},
                                  {"outputs", outputs},
                                  {"diagnostics", diag}});
  };

  std::string stage = "standardize";
  try {
    // --- standardize ------------------------------------------------------
    ObservationMatrix raw = read_csv(config.input);
    StandardizedSample sample = rank_transform(raw);
    const Norm norm = norm_from_name(config.norm);
    const int k = config.k ? *config.k
                           : std::max(1, static_cast<int>(std::floor(
                                             sample.n() * (1.0 - config.quantile))));
    ExceedanceSet exc = extract_exceedances(sample, norm, k);
    detail::write_json_file(dir / "standardized.json", sample);
    detail::write_json_file(dir / "exceedances.json", exc);
    record(stage, {{"norm", config.norm}, {"k", k}, {"n", sample.n()}, {"d", sample.d()}},
           {"standardized.json", "exceedances.json"},
           {{"threshold", exc.threshold}});

    // --- chi ---------------------------------------------------------------
    stage = "chi";
    const double q = 1.0 - static_cast<double>(k) / sample.n();
    Matrix chi = pairwise_chi_matrix(sample, q);
    write_csv((dir / "chi_matrix.csv").string(), chi, sample.labels());
    std::vector<std::vector<ChiEstimate>> curves;
    std::vector<double> grid;
    for (double g = 0.80; g < 0.992; g += 0.02) grid.push_back(g);
    for (int i = 0; i < sample.d(); ++i)
      for (int j = i + 1; j < sample.d(); ++j)
        curves.push_back(chi_curve(sample, i, j, grid, 0));
    record(stage, {{"q", q}}, {"chi_matrix.csv"});

    // --- cluster ------------------------------------------------------------
    stage = "cluster";
    AngularCloud cloud = angular_cloud(exc);
    ClusterResult clusters = spherical_kmeans(cloud, config.clustering.p,
                                              config.clustering.seed,
                                              config.clustering.restarts);
    write_csv((dir / "cluster_centers.csv").string(), clusters.centers, sample.labels());
    FaceSet cluster_faces = centers_to_faces(clusters, config.clustering.cut);
    detail::write_json_file(dir / "cluster_faces.json", cluster_faces);
    record(stage, config.clustering,
           {"cluster_centers.csv", "cluster_faces.json"},
           {{"cost", clusters.cost}, {"iterations", clusters.iterations}});

    // --- epca ---------------------------------------------------------------
    stage = "epca";
    ExceedanceSet exc_l2 = extract_exceedances(sample, Norm::l2, k);
    ExtremalPCA pca = estimate_sigma(angular_cloud(exc_l2));
    {
      Matrix ev(1, pca.d());
      for (int i = 0; i < pca.d(); ++i) ev(0, i) = pca.eigenvalues[i];
      std::vector<std::string> headers(pca.d());
      for (int i = 0; i < pca.d(); ++i) headers[i] = "lambda" + std::to_string(i + 1);
      write_csv((dir / "eigenvalues.csv").string(), ev, headers);
      write_csv((dir / "eigenvectors.csv").string(), pca.eigenvectors, sample.labels());
    }
    record(stage, {{"norm", "l2"}, {"k", k}},
           {"eigenvalues.csv", "eigenvectors.csv"},
           {{"loss_p3", pca_loss(pca, std::min(3, pca.d()))}});

    // --- faces ---------------------------------------------------------------
    stage = "faces";
    FaceSet faces;
    if (config.faces.method == "goix") {
      faces = goix_faces(extract_exceedances(sample, Norm::linf, k), config.faces.epsilon,
                         config.faces.u);
    } else if (config.faces.method == "meyer") {
      faces = meyer_faces(extract_exceedances(sample, Norm::l1, k), config.faces.u);
    } else if (config.faces.method == "apriori") {
      faces = apriori_faces(sample, k, apriori_criterion_from_name(config.faces.criterion),
                            config.faces.threshold_or_level,
                            static_cast<std::size_t>(config.faces.cap));
    } else if (config.faces.method == "simpson") {
      // mass diagnostics for the faces discovered by clustering
      faces.method = "simpson";
      faces.params = {{"delta", config.faces.delta}, {"u", config.faces.u}};
      for (const auto& f : cluster_faces.faces) {
        RegionMass rm = simpson_region_mass(sample, f.indices, config.faces.delta, k);
        if (rm.mass > config.faces.u) faces.faces.push_back({f.indices, rm.mass, rm.count});
      }
    } else {
      throw invalid_input("unknown faces method: " + config.faces.method);
    }
    detail::write_json_file(dir / "faces.json", faces);
    record(stage, config.faces, {"faces.json"},
           {{"count", faces.faces.size()}});

    // --- learn-tree ----------------------------------------------------------
    stage = "learn-tree";
    Matrix weights = chi_weight_matrix(chi);
    ExtremalGraph tree = mst_learn(weights);
    detail::write_json_file(dir / "tree.json", tree);
    write_csv((dir / "chi_weights.csv").string(), weights, sample.labels());
    record(stage, {{"weights", "-log chi"}}, {"tree.json", "chi_weights.csv"});

    // --- fit-graph -----------------------------------------------------------
    stage = "fit-graph";
    const double censor_u =
        pareto_threshold_for_quantile(sample.n(), config.graph.censor_quantile);
    ExceedanceSet fit_data = extract_exceedances_level(sample, Norm::linf, censor_u);
    GreedySearchResult search =
        greedy_block_search(fit_data, tree, censor_u, config.graph.max_clique);
    const FittedModel& best = search.best();
    detail::write_json_file(dir / "fitted_model.json", best);
    {
      std::ofstream f(dir / "aic_path.csv");
      f.precision(17);
      f << "step,edge_i,edge_j,n_edges,aic\n";
      for (std::size_t s = 0; s < search.records.size(); ++s) {
        const auto& r = search.records[s];
        f << s << ',' << (r.added_edge ? std::to_string(r.added_edge->first + 1) : "") << ','
          << (r.added_edge ? std::to_string(r.added_edge->second + 1) : "") << ',' << r.n_edges
          << ',' << r.aic << '\n';
      }
    }
    record(stage, config.graph, {"fitted_model.json", "aic_path.csv"},
           {{"censor_threshold", censor_u},
            {"best_aic", best.aic},
            {"edges", best.graph.edges.size()}});

    // --- simulate -------------------------------------------------------------
    stage = "simulate";
    std::vector<std::string> sim_outputs;
    if (config.simulation.model == "hr") {
      HuslerReissModel model(best.gamma);
      HrSimulation sim = simulate_hr_pareto(model, config.simulation.n, config.simulation.seed);
      sim.data.labels = sample.labels();
      write_csv((dir / "simulated.csv").string(), sim.data.values, sim.data.labels);
      sim_outputs.push_back("simulated.csv");
      record(stage, config.simulation, sim_outputs,
             {{"acceptance_rate", sim.acceptance_rate}});
    } else {
      record(stage, config.simulation, {},
             {{"note", "simulation from the fitted model supports model=hr only; skipped"}});
    }

    // --- plot data -------------------------------------------------------------
    stage = "plot-data";
    auto written = emit_plot_data(dir, &sample, k, &curves, &pca, &chi, &best);
    record(stage, nlohmann::json::object(), written);

    report.success = true;
  } catch (const std::exception& err) {
    manifest["stages"].push_back({{"name", stage},
                                  {"status", "failed"},
                                  {"error", err.what()}});
    report.failed_stage = stage;
  }
  detail::write_json_file(dir / "manifest.json", manifest);
  return report;
}

}  // namespace extremes
