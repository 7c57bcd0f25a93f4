// Command line driver for the sparse multivariate extremes toolkit.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "extremes/extremes.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string input;
  std::string norm = "l1";
  std::optional<int> k;
  double quantile = 0.95;
  std::string out = "extremes-out";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_input = true) {
  auto* in = cmd->add_option("--input", o.input, "input CSV (header row of labels)");
  if (needs_input) in->required();
  cmd->add_option("--norm", o.norm, "norm for radii: l1, l2, linf")->capture_default_str();
  cmd->add_option("--k", o.k, "number of exceedances");
  cmd->add_option("--quantile", o.quantile, "radial quantile when --k is absent")
      ->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
}

fs::path prepare_out(const CommonOpts& o) {
  std::string dir = o.out;
  if (const char* env = std::getenv("EXTREMES_OUTPUT_DIR"); env && *env) dir = env;
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

int resolve_k(const CommonOpts& o, int n) {
  if (o.k) return *o.k;
  return std::max(1, static_cast<int>(std::floor(n * (1.0 - o.quantile))));
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream f(path);
  f << j.dump(2) << '\n';
  std::cout << "wrote " << path.string() << '\n';
}

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw extremes::invalid_input("cannot open " + path);
  json j;
  f >> j;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse structure toolkit for multivariate extremes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(extremes::version));

  // ---- standardize ----------------------------------------------------
  CommonOpts std_opts;
  auto* cmd_std = app.add_subcommand("standardize",
                                     "rank-transform to the Pareto scale and extract exceedances");
  add_common(cmd_std, std_opts);

  // ---- chi -------------------------------------------------------------
  CommonOpts chi_opts;
  double chi_grid_min = 0.80, chi_grid_max = 0.99;
  int chi_grid_steps = 10, chi_boot = 200;
  std::uint64_t chi_seed = 1;
  std::vector<std::string> chi_pairs;
  auto* cmd_chi = app.add_subcommand("chi", "pairwise tail dependence estimates and curves");
  add_common(cmd_chi, chi_opts);
  cmd_chi->add_option("--grid-min", chi_grid_min)->capture_default_str();
  cmd_chi->add_option("--grid-max", chi_grid_max)->capture_default_str();
  cmd_chi->add_option("--grid-steps", chi_grid_steps)->capture_default_str();
  cmd_chi->add_option("--boot", chi_boot, "bootstrap replicates for curve intervals")
      ->capture_default_str();
  cmd_chi->add_option("--seed", chi_seed)->capture_default_str();
  cmd_chi->add_option("--pair", chi_pairs, "curve pair as i,j (1-based, repeatable)");

  // ---- cluster -----------------------------------------------------------
  CommonOpts cl_opts;
  int cl_p = 10, cl_restarts = 25;
  double cl_cut = 0.02;
  std::uint64_t cl_seed = 1;
  auto* cmd_cluster = app.add_subcommand("cluster", "spherical k-means on extremal angles");
  add_common(cmd_cluster, cl_opts);
  cmd_cluster->add_option("--p", cl_p, "number of clusters")->capture_default_str();
  cmd_cluster->add_option("--cut", cl_cut, "center threshold for faces")->capture_default_str();
  cmd_cluster->add_option("--seed", cl_seed)->capture_default_str();
  cmd_cluster->add_option("--restarts", cl_restarts)->capture_default_str();

  // ---- epca ----------------------------------------------------------------
  CommonOpts pca_opts;
  pca_opts.norm = "l2";
  int pca_p = 3;
  auto* cmd_epca = app.add_subcommand("epca", "extremal principal component analysis");
  add_common(cmd_epca, pca_opts);
  cmd_epca->add_option("--p", pca_p, "components for the reported loss")->capture_default_str();

  // ---- faces -----------------------------------------------------------------
  CommonOpts fc_opts;
  extremes::FacesConfig fc;
  auto* cmd_faces = app.add_subcommand("faces", "detect faces with exponent measure mass");
  add_common(cmd_faces, fc_opts);
  cmd_faces->add_option("--method", fc.method, "goix | simpson | meyer | apriori")
      ->capture_default_str();
  cmd_faces->add_option("--epsilon", fc.epsilon)->capture_default_str();
  cmd_faces->add_option("--u", fc.u, "mass threshold")->capture_default_str();
  cmd_faces->add_option("--delta", fc.delta)->capture_default_str();
  cmd_faces->add_option("--criterion", fc.criterion, "apriori: cond_chi | eta_test")
      ->capture_default_str();
  cmd_faces->add_option("--level", fc.threshold_or_level, "apriori criterion parameter")
      ->capture_default_str();
  cmd_faces->add_option("--cap", fc.cap, "apriori frontier cap")->capture_default_str();

  // ---- learn-tree ---------------------------------------------------------------
  CommonOpts lt_opts;
  auto* cmd_tree = app.add_subcommand("learn-tree", "minimum spanning tree from -log chi");
  add_common(cmd_tree, lt_opts);

  // ---- fit-graph ------------------------------------------------------------------
  CommonOpts fg_opts;
  extremes::GraphConfig gc;
  auto* cmd_fit = app.add_subcommand("fit-graph",
                                     "greedy AIC block-graph fit with censored likelihood");
  add_common(cmd_fit, fg_opts);
  cmd_fit->add_option("--max-clique", gc.max_clique)->capture_default_str();
  cmd_fit->add_option("--censor-quantile", gc.censor_quantile)->capture_default_str();

  // ---- simulate ----------------------------------------------------------------------
  std::string sim_model = "hr", sim_params, sim_out = "extremes-out";
  int sim_n = 1000;
  std::uint64_t sim_seed = 1;
  auto* cmd_sim = app.add_subcommand("simulate", "simulate from a parametric model");
  cmd_sim->add_option("--model", sim_model, "maxlinear | recml | logistic | hr")
      ->capture_default_str();
  cmd_sim->add_option("--params", sim_params, "model parameter JSON")->required();
  cmd_sim->add_option("--n", sim_n)->capture_default_str();
  cmd_sim->add_option("--seed", sim_seed)->capture_default_str();
  cmd_sim->add_option("--out", sim_out)->capture_default_str();

  // ---- pipeline -------------------------------------------------------------------------
  extremes::PipelineConfig pc;
  std::string pipeline_config_path;
  auto* cmd_pipe = app.add_subcommand("pipeline", "run the full workflow");
  cmd_pipe->add_option("--input", pc.input, "input CSV");
  cmd_pipe->add_option("--config", pipeline_config_path, "JSON config (overrides flags)");
  cmd_pipe->add_option("--norm", pc.norm)->capture_default_str();
  cmd_pipe->add_option("--k", pc.k);
  cmd_pipe->add_option("--quantile", pc.quantile)->capture_default_str();
  cmd_pipe->add_option("--p", pc.clustering.p)->capture_default_str();
  cmd_pipe->add_option("--cut", pc.clustering.cut)->capture_default_str();
  cmd_pipe->add_option("--seed", pc.clustering.seed)->capture_default_str();
  cmd_pipe->add_option("--restarts", pc.clustering.restarts)->capture_default_str();
  cmd_pipe->add_option("--faces-method", pc.faces.method)->capture_default_str();
  cmd_pipe->add_option("--epsilon", pc.faces.epsilon)->capture_default_str();
  cmd_pipe->add_option("--u", pc.faces.u)->capture_default_str();
  cmd_pipe->add_option("--delta", pc.faces.delta)->capture_default_str();
  cmd_pipe->add_option("--max-clique", pc.graph.max_clique)->capture_default_str();
  cmd_pipe->add_option("--censor-quantile", pc.graph.censor_quantile)->capture_default_str();
  cmd_pipe->add_option("--sim-n", pc.simulation.n)->capture_default_str();
  cmd_pipe->add_option("--sim-seed", pc.simulation.seed)->capture_default_str();
  cmd_pipe->add_option("--out", pc.output_dir)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_std->parsed()) {
      auto dir = prepare_out(std_opts);
      auto sample = extremes::rank_transform(extremes::read_csv(std_opts.input));
      int k = resolve_k(std_opts, sample.n());
      auto exc = extremes::extract_exceedances(sample, extremes::norm_from_name(std_opts.norm), k);
      write_json_file(dir / "standardized.json", sample);
      write_json_file(dir / "exceedances.json", exc);
    } else if (cmd_chi->parsed()) {
      auto dir = prepare_out(chi_opts);
      auto sample = extremes::rank_transform(extremes::read_csv(chi_opts.input));
      int k = resolve_k(chi_opts, sample.n());
      double q = 1.0 - static_cast<double>(k) / sample.n();
      extremes::Matrix chi = extremes::pairwise_chi_matrix(sample, q);
      extremes::write_csv((dir / "chi_matrix.csv").string(), chi, sample.labels());
      std::cout << "wrote " << (dir / "chi_matrix.csv").string() << '\n';

      std::vector<double> grid;
      for (int s = 0; s < chi_grid_steps; ++s)
        grid.push_back(chi_grid_min +
                       s * (chi_grid_max - chi_grid_min) / std::max(1, chi_grid_steps - 1));
      std::vector<std::pair<int, int>> pairs;
      for (const auto& sp : chi_pairs) {
        auto comma = sp.find(',');
        if (comma == std::string::npos)
          throw extremes::invalid_input("--pair expects i,j");
        pairs.push_back({std::stoi(sp.substr(0, comma)) - 1,
                         std::stoi(sp.substr(comma + 1)) - 1});
      }
      if (pairs.empty())
        for (int i = 0; i < sample.d(); ++i)
          for (int j = i + 1; j < sample.d(); ++j) pairs.push_back({i, j});
      std::ofstream f(dir / "chi_curves.csv");
      f.precision(17);
      f << "i,j,q,value,lo,hi\n";
      for (auto [i, j] : pairs) {
        auto curve = extremes::chi_curve(sample, i, j, grid, chi_boot, chi_seed);
        for (const auto& est : curve)
          f << i + 1 << ',' << j + 1 << ',' << est.level << ',' << est.value << ','
            << est.ci_lower.value_or(est.value) << ',' << est.ci_upper.value_or(est.value)
            << '\n';
      }
      std::cout << "wrote " << (dir / "chi_curves.csv").string() << '\n';
    } else if (cmd_cluster->parsed()) {
      auto dir = prepare_out(cl_opts);
      auto sample = extremes::rank_transform(extremes::read_csv(cl_opts.input));
      int k = resolve_k(cl_opts, sample.n());
      auto exc = extremes::extract_exceedances(sample, extremes::norm_from_name(cl_opts.norm), k);
      auto clusters = extremes::spherical_kmeans(extremes::angular_cloud(exc), cl_p, cl_seed,
                                                 cl_restarts);
      extremes::write_csv((dir / "cluster_centers.csv").string(), clusters.centers,
                          sample.labels());
      std::cout << "wrote " << (dir / "cluster_centers.csv").string() << '\n';
      write_json_file(dir / "cluster_faces.json",
                      extremes::centers_to_faces(clusters, cl_cut));
    } else if (cmd_epca->parsed()) {
      auto dir = prepare_out(pca_opts);
      auto sample = extremes::rank_transform(extremes::read_csv(pca_opts.input));
      int k = resolve_k(pca_opts, sample.n());
      auto exc = extremes::extract_exceedances(sample, extremes::norm_from_name(pca_opts.norm), k);
      auto pca = extremes::estimate_sigma(extremes::angular_cloud(exc));
      extremes::Matrix ev(1, pca.d());
      for (int i = 0; i < pca.d(); ++i) ev(0, i) = pca.eigenvalues[i];
      std::vector<std::string> headers(pca.d());
      for (int i = 0; i < pca.d(); ++i) headers[i] = "lambda" + std::to_string(i + 1);
      extremes::write_csv((dir / "eigenvalues.csv").string(), ev, headers);
      extremes::write_csv((dir / "eigenvectors.csv").string(), pca.eigenvectors, sample.labels());
      extremes::emit_plot_data(dir, &sample, k, nullptr, &pca, nullptr, nullptr);
      std::cout << "wrote eigenvalues.csv eigenvectors.csv scree.csv eigenvectors_by_label.csv"
                << " (loss at p=" << pca_p << ": " << extremes::pca_loss(pca, pca_p) << ")\n";
    } else if (cmd_faces->parsed()) {
      auto dir = prepare_out(fc_opts);
      auto sample = extremes::rank_transform(extremes::read_csv(fc_opts.input));
      int k = resolve_k(fc_opts, sample.n());
      extremes::FaceSet faces;
      if (fc.method == "goix") {
        faces = extremes::goix_faces(extremes::extract_exceedances(sample, extremes::Norm::linf, k),
                                     fc.epsilon, fc.u);
      } else if (fc.method == "meyer") {
        faces = extremes::meyer_faces(extremes::extract_exceedances(sample, extremes::Norm::l1, k),
                                      fc.u);
      } else if (fc.method == "apriori") {
        faces = extremes::apriori_faces(sample, k,
                                        extremes::apriori_criterion_from_name(fc.criterion),
                                        fc.threshold_or_level,
                                        static_cast<std::size_t>(fc.cap));
      } else if (fc.method == "simpson") {
        faces.method = "simpson";
        faces.params = {{"delta", fc.delta}, {"u", fc.u}};
        auto exc = extremes::extract_exceedances(sample, extremes::Norm::linf, k);
        auto goix = extremes::goix_faces(exc, fc.epsilon, 0.0);
        for (const auto& f : goix.faces) {
          auto rm = extremes::simpson_region_mass(sample, f.indices, fc.delta, k);
          if (rm.mass > fc.u) faces.faces.push_back({f.indices, rm.mass, rm.count});
        }
      } else {
        throw extremes::invalid_input("unknown faces method: " + fc.method);
      }
      write_json_file(dir / "faces.json", faces);
    } else if (cmd_tree->parsed()) {
      auto dir = prepare_out(lt_opts);
      auto sample = extremes::rank_transform(extremes::read_csv(lt_opts.input));
      int k = resolve_k(lt_opts, sample.n());
      double q = 1.0 - static_cast<double>(k) / sample.n();
      extremes::Matrix chi = extremes::pairwise_chi_matrix(sample, q);
      extremes::Matrix weights = extremes::chi_weight_matrix(chi);
      auto tree = extremes::mst_learn(weights);
      write_json_file(dir / "tree.json", tree);
      extremes::write_csv((dir / "chi_weights.csv").string(), weights, sample.labels());
      std::cout << "wrote " << (dir / "chi_weights.csv").string() << '\n';
    } else if (cmd_fit->parsed()) {
      auto dir = prepare_out(fg_opts);
      auto sample = extremes::rank_transform(extremes::read_csv(fg_opts.input));
      int k = resolve_k(fg_opts, sample.n());
      double q = 1.0 - static_cast<double>(k) / sample.n();
      extremes::Matrix chi = extremes::pairwise_chi_matrix(sample, q);
      auto tree = extremes::mst_learn(extremes::chi_weight_matrix(chi));
      double u = extremes::pareto_threshold_for_quantile(sample.n(), gc.censor_quantile);
      auto fit_data = extremes::extract_exceedances_level(sample, extremes::Norm::linf, u);
      auto search = extremes::greedy_block_search(fit_data, tree, u, gc.max_clique);
      write_json_file(dir / "fitted_model.json", search.best());
      std::ofstream f(dir / "aic_path.csv");
      f.precision(17);
      f << "step,edge_i,edge_j,n_edges,aic\n";
      for (std::size_t s = 0; s < search.records.size(); ++s) {
        const auto& r = search.records[s];
        f << s << ',' << (r.added_edge ? std::to_string(r.added_edge->first + 1) : "") << ','
          << (r.added_edge ? std::to_string(r.added_edge->second + 1) : "") << ',' << r.n_edges
          << ',' << r.aic << '\n';
      }
      std::cout << "wrote " << (dir / "aic_path.csv").string() << '\n';
      extremes::emit_plot_data(dir, &sample, k, nullptr, nullptr, &chi, &search.best());
    } else if (cmd_sim->parsed()) {
      fs::path dir(sim_out);
      if (const char* env = std::getenv("EXTREMES_OUTPUT_DIR"); env && *env) dir = env;
      fs::create_directories(dir);
      json params = load_json(sim_params);
      extremes::ObservationMatrix data;
      if (sim_model == "maxlinear") {
        extremes::MaxLinearModel model(extremes::matrix_from_json(params.at("A")));
        data = extremes::simulate_max_linear(model, sim_n, sim_seed);
      } else if (sim_model == "recml") {
        std::vector<extremes::DagEdge> edges;
        for (const auto& e : params.at("edges"))
          edges.push_back({e.at("parent").get<int>() - 1, e.at("child").get<int>() - 1,
                           e.at("beta").get<double>()});
        extremes::RecursiveMLModel model(params.at("d").get<int>(), edges,
                                         params.at("diag").get<std::vector<double>>());
        data = extremes::simulate_recursive_ml(model, sim_n, sim_seed);
      } else if (sim_model == "logistic") {
        extremes::LogisticModel model(params.at("d").get<int>(), params.at("theta").get<double>());
        data = extremes::simulate_logistic(model, sim_n, sim_seed);
      } else if (sim_model == "hr") {
        extremes::HuslerReissModel model(extremes::matrix_from_json(params.at("gamma")));
        auto sim = extremes::simulate_hr_pareto(model, sim_n, sim_seed);
        data = sim.data;
        std::cout << "acceptance rate " << sim.acceptance_rate << '\n';
      } else {
        throw extremes::invalid_input("unknown model: " + sim_model);
      }
      extremes::write_csv((dir / "simulated.csv").string(), data.values, data.labels);
      std::cout << "wrote " << (dir / "simulated.csv").string() << '\n';
    } else if (cmd_pipe->parsed()) {
      if (!pipeline_config_path.empty())
        pc = load_json(pipeline_config_path).get<extremes::PipelineConfig>();
      if (pc.input.empty())
        throw extremes::invalid_input("pipeline: --input or a config with input is required");
      auto report = extremes::run_pipeline(pc);
      std::cout << (report.success ? "pipeline ok" : "pipeline failed at " + report.failed_stage)
                << "; manifest at " << report.output_dir << "/manifest.json\n";
      return report.success ? 0 : 1;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
