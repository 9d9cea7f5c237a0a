#include "oulmm/io.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace oulmm {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot open for writing: " + path);
  out.precision(17);
  return out;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw input_error("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

std::vector<double> split_csv_line(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw input_error("non-numeric CSV cell: " + cell);
    }
  }
  return out;
}

json theta_to_json(const ThetaParams& th) {
  json j;
  j["beta"] = std::vector<double>(th.beta.data(), th.beta.data() + th.beta.size());
  j["gamma"] =
      std::vector<double>(th.gamma.data(), th.gamma.data() + th.gamma.size());
  j["lambda"] = th.lambda;
  j["sigma2"] = th.sigma2;
  j["sigma_eps2"] = th.sigma_eps2;
  return j;
}

}  // namespace

std::string psi_kind_name(PsiParameterization::Kind kind) {
  switch (kind) {
    case PsiParameterization::Kind::Scalar: return "scalar";
    case PsiParameterization::Kind::DiagonalLog: return "diagonal_log";
    case PsiParameterization::Kind::LowerTriangularLogChol:
      return "lower_triangular_log_chol";
  }
  return "scalar";
}

PsiParameterization::Kind psi_kind_from_name(const std::string& name) {
  if (name == "scalar") return PsiParameterization::Kind::Scalar;
  if (name == "diagonal_log") return PsiParameterization::Kind::DiagonalLog;
  if (name == "lower_triangular_log_chol")
    return PsiParameterization::Kind::LowerTriangularLogChol;
  throw input_error("unknown Psi parameterization: " + name);
}

void write_dataset_csv(const Dataset& data, const PsiParameterization& psi,
                       const std::string& csv_path,
                       const std::string& sidecar_path) {
  data.validate();
  auto out = open_out(csv_path);
  out << "individual_id,time,y";
  for (int k = 1; k <= data.p_beta; ++k) out << ",x_" << k;
  for (int k = 1; k <= data.p_b; ++k) out << ",z_" << k;
  out << "\n";
  for (int i = 0; i < data.n_individuals(); ++i) {
    const auto& ind = data.individuals[i];
    for (int j = 0; j < ind.n(); ++j) {
      out << i << ',' << ind.times(j) << ',' << ind.y(j);
      for (int k = 0; k < data.p_beta; ++k) out << ',' << ind.x_mat(j, k);
      for (int k = 0; k < data.p_b; ++k) out << ',' << ind.z_mat(j, k);
      out << "\n";
    }
  }

  json side;
  side["p_beta"] = data.p_beta;
  side["p_b"] = data.p_b;
  side["psi"] = psi_kind_name(psi.kind);
  auto sout = open_out(sidecar_path);
  sout << side.dump(2) << "\n";
}

Dataset read_dataset_csv(const std::string& csv_path,
                         const std::string& sidecar_path,
                         PsiParameterization* psi_out) {
  const json side = load_json(sidecar_path);
  if (!side.contains("p_beta") || !side.contains("p_b"))
    throw input_error("sidecar must declare p_beta and p_b");
  Dataset data;
  data.p_beta = side["p_beta"].get<int>();
  data.p_b = side["p_b"].get<int>();
  if (psi_out) {
    psi_out->kind = psi_kind_from_name(side.value("psi", "scalar"));
    psi_out->p_b = data.p_b;
  }

  std::ifstream in(csv_path);
  if (!in) throw input_error("cannot open: " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw input_error("empty dataset CSV");

  const size_t ncol = 3 + data.p_beta + data.p_b;
  long current_id = -1;
  std::vector<double> times, ys;
  std::vector<std::vector<double>> xs, zs;
  auto flush = [&]() {
    if (times.empty()) return;
    IndividualData ind;
    const int ni = static_cast<int>(times.size());
    ind.times = Eigen::Map<VectorXd>(times.data(), ni);
    ind.y = Eigen::Map<VectorXd>(ys.data(), ni);
    ind.x_mat.resize(ni, data.p_beta);
    ind.z_mat.resize(ni, data.p_b);
    for (int j = 0; j < ni; ++j) {
      for (int k = 0; k < data.p_beta; ++k) ind.x_mat(j, k) = xs[j][k];
      for (int k = 0; k < data.p_b; ++k) ind.z_mat(j, k) = zs[j][k];
    }
    data.individuals.push_back(std::move(ind));
    times.clear();
    ys.clear();
    xs.clear();
    zs.clear();
  };

  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<double> row = split_csv_line(line);
    if (row.size() != ncol)
      throw input_error("CSV row " + std::to_string(line_no) + " has " +
                        std::to_string(row.size()) + " columns, expected " +
                        std::to_string(ncol));
    const long id = static_cast<long>(row[0]);
    if (id != current_id) {
      flush();
      current_id = id;
    }
    times.push_back(row[1]);
    ys.push_back(row[2]);
    xs.emplace_back(row.begin() + 3, row.begin() + 3 + data.p_beta);
    zs.emplace_back(row.begin() + 3 + data.p_beta, row.end());
  }
  flush();
  data.validate();
  // a finite cap on block sizes is asserted on load
  for (const auto& ind : data.individuals)
    if (ind.n() > 100000) throw input_error("implausible block size on load");
  return data;
}

void write_fit_json(const FitResult& fit, const std::string& path) {
  json j;
  j["theta_hat"] = theta_to_json(fit.theta_hat);
  j["objective"] = fit.objective;
  std::vector<std::vector<double>> avar(fit.avar.rows());
  for (int r = 0; r < fit.avar.rows(); ++r)
    avar[r].assign(fit.avar.row(r).begin(), fit.avar.row(r).end());
  j["avar"] = avar;
  j["std_errors"] = std::vector<double>(
      fit.std_errors.data(), fit.std_errors.data() + fit.std_errors.size());
  j["aic"] = fit.aic;
  j["bic"] = fit.bic;
  j["converged"] = fit.converged;
  j["n_eval"] = fit.n_eval;
  j["wall_time_s"] = fit.wall_time_s;
  j["sd_scale"] = {{"sigma", fit.sigma_sd},
                   {"sigma_se", fit.sigma_sd_se},
                   {"sigma_eps", fit.sigma_eps_sd},
                   {"sigma_eps_se", fit.sigma_eps_sd_se}};
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

namespace {

Scenario scenario_from_json(const json& j) {
  Scenario sc = Scenario::reference(j.value("n_individuals", 500),
                                    j.value("seed", 1ULL));
  if (j.contains("theta_true")) {
    const json& t = j["theta_true"];
    if (t.contains("beta")) {
      const auto b = t["beta"].get<std::vector<double>>();
      sc.theta_true.beta = Eigen::Map<const VectorXd>(b.data(), b.size());
    }
    if (t.contains("gamma")) {
      const auto g = t["gamma"].get<std::vector<double>>();
      sc.theta_true.gamma = Eigen::Map<const VectorXd>(g.data(), g.size());
    }
    sc.theta_true.lambda = t.value("lambda", sc.theta_true.lambda);
    sc.theta_true.sigma2 = t.value("sigma2", sc.theta_true.sigma2);
    sc.theta_true.sigma_eps2 = t.value("sigma_eps2", sc.theta_true.sigma_eps2);
  }
  if (j.contains("psi")) {
    sc.psi.kind = psi_kind_from_name(j["psi"].value("kind", "scalar"));
    sc.psi.p_b = j["psi"].value("p_b", 1);
  }
  if (j.contains("design")) {
    const json& d = j["design"];
    sc.design.n_i_min = d.value("n_i_min", sc.design.n_i_min);
    sc.design.n_i_max = d.value("n_i_max", sc.design.n_i_max);
    sc.design.time_pool = d.value("time_pool", sc.design.time_pool);
    sc.design.group_prob = d.value("group_prob", sc.design.group_prob);
  }
  if (j.contains("random_effect")) {
    const json& r = j["random_effect"];
    const std::string law = r.value("law", "variance_gamma");
    if (law == "gaussian")
      sc.random_effect.kind = RandomEffectLaw::Kind::GaussianVar;
    else if (law == "variance_gamma")
      sc.random_effect.kind = RandomEffectLaw::Kind::VarianceGamma;
    else
      throw input_error("unknown random-effect law: " + law);
    sc.random_effect.a1 = r.value("a1", sc.random_effect.a1);
    sc.random_effect.a2 = r.value("a2", sc.random_effect.a2);
    sc.random_effect.a3 = r.value("a3", sc.random_effect.a3);
    sc.random_effect.a4 = r.value("a4", sc.random_effect.a4);
  }
  if (j.contains("driver")) {
    const json& d = j["driver"];
    const std::string kind = d.value("kind", "gaussian_exact");
    if (kind == "gaussian_exact")
      sc.driver.kind = DriverSpec::Kind::GaussianExact;
    else if (kind == "compound_poisson_normal")
      sc.driver.kind = DriverSpec::Kind::CompoundPoissonNormal;
    else if (kind == "gaussian_euler")
      sc.driver.kind = DriverSpec::Kind::GaussianEuler;
    else
      throw input_error("unknown driver kind: " + kind);
    sc.driver.rate = d.value("rate", sc.driver.rate);
    sc.driver.dt = d.value("dt", sc.driver.dt);
  }
  sc.validate();
  return sc;
}

}  // namespace

Scenario read_scenario_json(const std::string& path) {
  return scenario_from_json(load_json(path));
}

Scenario read_scenario_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw input_error(std::string("invalid scenario JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

void write_scenario_json(const Scenario& sc, const std::string& path) {
  json j;
  j["n_individuals"] = sc.n_individuals;
  j["seed"] = sc.seed;
  j["theta_true"] = theta_to_json(sc.theta_true);
  j["psi"] = {{"kind", psi_kind_name(sc.psi.kind)}, {"p_b", sc.psi.p_b}};
  j["design"] = {{"n_i_min", sc.design.n_i_min},
                 {"n_i_max", sc.design.n_i_max},
                 {"time_pool", sc.design.time_pool},
                 {"group_prob", sc.design.group_prob}};
  j["random_effect"] = {
      {"law", sc.random_effect.kind == RandomEffectLaw::Kind::GaussianVar
                  ? "gaussian"
                  : "variance_gamma"},
      {"a1", sc.random_effect.a1},
      {"a2", sc.random_effect.a2},
      {"a3", sc.random_effect.a3},
      {"a4", sc.random_effect.a4}};
  std::string driver = "gaussian_exact";
  if (sc.driver.kind == DriverSpec::Kind::CompoundPoissonNormal)
    driver = "compound_poisson_normal";
  else if (sc.driver.kind == DriverSpec::Kind::GaussianEuler)
    driver = "gaussian_euler";
  j["driver"] = {{"kind", driver}, {"rate", sc.driver.rate}, {"dt", sc.driver.dt}};
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace oulmm
