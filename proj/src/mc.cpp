#include "oulmm/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace oulmm {

namespace {

constexpr double kZ975 = 1.9599639845400545;

std::vector<std::string> param_names(int p_beta, int p_gamma) {
  std::vector<std::string> names;
  for (int k = 1; k <= p_beta; ++k) names.push_back("beta_" + std::to_string(k));
  for (int k = 1; k <= p_gamma; ++k)
    names.push_back("gamma_" + std::to_string(k));
  names.push_back("lambda");
  names.push_back("sigma2");
  names.push_back("sigma_eps2");
  return names;
}

// Marginal studentization on the reporting scale: each coordinate is
// divided by its own sandwich standard error. The system-noise and
// measurement-error variances are studentized on the standard-deviation
// scale (delta method), matching how they are reported.
McRecord make_record(int rep, int n, EstimatorKind kind, const FitResult& fit,
                     const ThetaParams& theta0) {
  McRecord rec;
  rec.rep = rep;
  rec.kind = kind;
  rec.n = n;
  rec.theta_hat = fit.theta_hat.to_vector();
  rec.bias = rec.theta_hat - theta0.to_vector();
  rec.wall_time_s = fit.wall_time_s;
  rec.converged = fit.converged;
  const int p = static_cast<int>(rec.theta_hat.size());
  const int i_s2 = theta0.p_beta() + theta0.p_gamma() + 1;
  rec.studentized = VectorXd::Constant(
      p, std::numeric_limits<double>::quiet_NaN());
  for (int k = 0; k < p; ++k) {
    double diff = rec.bias(k);
    double se = fit.std_errors.size() == p ? fit.std_errors(k)
                                           : std::numeric_limits<double>::quiet_NaN();
    if (k == i_s2) {
      diff = fit.sigma_sd - std::sqrt(theta0.sigma2);
      se = fit.sigma_sd_se;
    } else if (k == i_s2 + 1) {
      diff = fit.sigma_eps_sd - std::sqrt(theta0.sigma_eps2);
      se = fit.sigma_eps_sd_se;
    }
    if (std::isfinite(se) && se > 0.0) rec.studentized(k) = diff / se;
  }
  return rec;
}

struct Quartiles {
  double min = 0, q1 = 0, median = 0, mean = 0, sd = 0, q3 = 0, max = 0;
};

double quantile_sorted(const std::vector<double>& x, double p) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = p * (static_cast<double>(x.size()) - 1.0);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

Quartiles summarize(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  Quartiles q;
  q.min = x.front();
  q.max = x.back();
  q.q1 = quantile_sorted(x, 0.25);
  q.median = quantile_sorted(x, 0.5);
  q.q3 = quantile_sorted(x, 0.75);
  double s = 0;
  for (double v : x) s += v;
  q.mean = s / static_cast<double>(x.size());
  double ss = 0;
  for (double v : x) ss += (v - q.mean) * (v - q.mean);
  q.sd = x.size() > 1 ? std::sqrt(ss / (static_cast<double>(x.size()) - 1.0))
                      : 0.0;
  return q;
}

const char* kind_name(EstimatorKind kind) {
  return kind == EstimatorKind::Joint ? "joint" : "stepwise";
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot open for writing: " + path);
  out.precision(17);
  return out;
}

}  // namespace

std::vector<McRecord> run_replication(int rep, int n, const McConfig& config) {
  Scenario sc = config.scenario;
  sc.n_individuals = n;
  sc.seed = config.base_seed;
  const Dataset data =
      simulate_dataset(sc, static_cast<std::uint64_t>(rep));

  FitConfig fit_cfg = config.fit;
  fit_cfg.psi = sc.psi;

  std::vector<McRecord> out;
  if (config.run_joint) {
    const FitResult fit = fit_joint(data, fit_cfg);
    out.push_back(make_record(rep, n, EstimatorKind::Joint, fit, sc.theta_true));
  }
  if (config.run_stepwise) {
    const StepwiseResult sw = fit_stepwise(data, fit_cfg);
    McRecord rec =
        make_record(rep, n, EstimatorKind::Stepwise, sw.fit, sc.theta_true);
    for (int s = 0; s < 3; ++s) rec.stage_times_s[s] = sw.stage_times_s[s];
    out.push_back(rec);
  }
  return out;
}

McReport run_study(const McConfig& config) {
  if (config.n_reps < 1) throw input_error("n_reps must be at least 1");
  if (config.n_values.empty()) throw input_error("n_values must be non-empty");
  if (config.workers < 1) throw input_error("workers must be at least 1");
  if (!config.run_joint && !config.run_stepwise)
    throw input_error("at least one estimator must be enabled");

  std::filesystem::create_directories(config.output_dir);

  // Flatten the (n, rep) grid into independent tasks. Results land in a
  // pre-sized slot table so the output never depends on thread scheduling.
  struct Task {
    int n;
    int rep;
  };
  std::vector<Task> tasks;
  for (int n : config.n_values)
    for (int rep = 0; rep < config.n_reps; ++rep) tasks.push_back({n, rep});

  std::vector<std::vector<McRecord>> slots(tasks.size());
  std::vector<std::string> errors;
  std::mutex err_mutex;
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t k = next.fetch_add(1);
      if (k >= tasks.size()) return;
      try {
        slots[k] = run_replication(tasks[k].rep, tasks[k].n, config);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        errors.push_back("rep " + std::to_string(tasks[k].rep) + " at N=" +
                         std::to_string(tasks[k].n) + ": " + e.what());
      }
    }
  };
  const int n_workers =
      std::min<int>(config.workers, static_cast<int>(tasks.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!errors.empty())
    throw numerical_error("replication failures: " + errors.front() +
                          (errors.size() > 1
                               ? " (and " + std::to_string(errors.size() - 1) +
                                     " more)"
                               : ""));

  McReport report;
  for (auto& slot : slots)
    for (auto& rec : slot) report.records.push_back(std::move(rec));

  const ThetaParams& th0 = config.scenario.theta_true;
  const std::vector<std::string> names =
      param_names(th0.p_beta(), th0.p_gamma());
  const int p = static_cast<int>(names.size());

  // Per-replication CSV.
  report.per_rep_csv =
      (std::filesystem::path(config.output_dir) / "per_rep.csv").string();
  {
    auto out = open_csv(report.per_rep_csv);
    out << "rep,estimator,n,converged,wall_time_s,stage1_s,stage2_s,stage3_s";
    for (const auto& nm : names) out << ",theta_hat_" << nm;
    for (const auto& nm : names) out << ",bias_" << nm;
    out << "\n";
    for (const auto& r : report.records) {
      out << r.rep << ',' << kind_name(r.kind) << ',' << r.n << ','
          << (r.converged ? 1 : 0) << ',' << r.wall_time_s << ','
          << r.stage_times_s[0] << ',' << r.stage_times_s[1] << ','
          << r.stage_times_s[2];
      for (int k = 0; k < p; ++k) out << ',' << r.theta_hat(k);
      for (int k = 0; k < p; ++k) out << ',' << r.bias(k);
      out << "\n";
    }
  }

  // Studentized pivots, one row per replication.
  report.studentized_csv =
      (std::filesystem::path(config.output_dir) / "studentized.csv").string();
  {
    auto out = open_csv(report.studentized_csv);
    std::vector<std::string> pivot_names = names;
    pivot_names[p - 2] = "sigma";      // SD scale
    pivot_names[p - 1] = "sigma_eps";  // SD scale
    out << "rep,estimator,n";
    for (const auto& nm : pivot_names) out << ",stud_" << nm;
    out << "\n";
    for (const auto& r : report.records) {
      out << r.rep << ',' << kind_name(r.kind) << ',' << r.n;
      for (int k = 0; k < p; ++k) out << ',' << r.studentized(k);
      out << "\n";
    }
  }

  // Aggregate bias/SD/coverage per (estimator, n, parameter). Coverage is
  // the fraction of replications whose studentized pivot falls in the
  // central 95% normal band.
  report.aggregate_csv =
      (std::filesystem::path(config.output_dir) / "aggregate.csv").string();
  {
    auto out = open_csv(report.aggregate_csv);
    out << "estimator,n,param,mean_bias,sd,coverage,n_reps,n_excluded\n";
    for (EstimatorKind kind : {EstimatorKind::Joint, EstimatorKind::Stepwise}) {
      if (kind == EstimatorKind::Joint && !config.run_joint) continue;
      if (kind == EstimatorKind::Stepwise && !config.run_stepwise) continue;
      for (int n : config.n_values) {
        for (int k = 0; k < p; ++k) {
          std::vector<double> biases;
          long covered = 0, with_pivot = 0, excluded = 0;
          for (const auto& r : report.records) {
            if (r.kind != kind || r.n != n) continue;
            if (!r.converged) {
              ++excluded;
              continue;
            }
            biases.push_back(r.bias(k));
            if (std::isfinite(r.studentized(k))) {
              ++with_pivot;
              if (std::abs(r.studentized(k)) <= kZ975) ++covered;
            }
          }
          if (biases.empty() && excluded == 0) continue;
          if (biases.empty()) {
            out << kind_name(kind) << ',' << n << ',' << names[k]
                << ",nan,nan,nan,0," << excluded << "\n";
            continue;
          }
          const Quartiles q = summarize(biases);
          const double cov =
              with_pivot > 0
                  ? static_cast<double>(covered) / static_cast<double>(with_pivot)
                  : std::numeric_limits<double>::quiet_NaN();
          out << kind_name(kind) << ',' << n << ',' << names[k] << ','
              << q.mean << ',' << q.sd << ',' << cov << ',' << biases.size()
              << ',' << excluded << "\n";
        }
      }
    }
  }

  // Wall-time summary per (estimator, n).
  report.timing_csv =
      (std::filesystem::path(config.output_dir) / "timing.csv").string();
  {
    auto out = open_csv(report.timing_csv);
    out << "estimator,n,min,q1,median,mean,sd,q3,max,n_reps\n";
    for (EstimatorKind kind : {EstimatorKind::Joint, EstimatorKind::Stepwise}) {
      for (int n : config.n_values) {
        std::vector<double> times;
        for (const auto& r : report.records)
          if (r.kind == kind && r.n == n) times.push_back(r.wall_time_s);
        if (times.empty()) continue;
        const Quartiles q = summarize(times);
        out << kind_name(kind) << ',' << n << ',' << q.min << ',' << q.q1
            << ',' << q.median << ',' << q.mean << ',' << q.sd << ',' << q.q3
            << ',' << q.max << ',' << times.size() << "\n";
      }
    }
  }

  return report;
}

namespace {

std::vector<std::vector<std::string>> read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw input_error("empty CSV: " + path);
  return rows;
}

std::string format_cell(const std::string& cell) {
  // Round numeric cells for display; leave labels as-is.
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0') return cell;
  if (cell.find_first_of(".eE") == std::string::npos) return cell;
  std::ostringstream os;
  os << std::setprecision(4) << std::fixed << v;
  return os.str();
}

std::string render_table(const std::string& title,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    std::vector<std::string> r;
    for (const auto& c : row) r.push_back(format_cell(c));
    cells.push_back(std::move(r));
  }
  std::vector<size_t> width;
  for (const auto& row : cells)
    for (size_t k = 0; k < row.size(); ++k) {
      if (width.size() <= k) width.resize(k + 1, 0);
      width[k] = std::max(width[k], row[k].size());
    }
  std::ostringstream os;
  os << title << "\n";
  for (size_t i = 0; i < cells.size(); ++i) {
    for (size_t k = 0; k < cells[i].size(); ++k)
      os << (k ? "  " : "") << std::setw(static_cast<int>(width[k]))
         << cells[i][k];
    os << "\n";
    if (i == 0) {
      size_t total = 0;
      for (size_t k = 0; k < width.size(); ++k) total += width[k] + (k ? 2 : 0);
      os << std::string(total, '-') << "\n";
    }
  }
  return os.str();
}

}  // namespace

std::string render_report(const std::string& results_dir) {
  const auto dir = std::filesystem::path(results_dir);
  std::string out;
  out += render_table("Bias, spread and 95% coverage by parameter",
                      read_csv_table((dir / "aggregate.csv").string()));
  out += "\n";
  out += render_table("Wall-time per fit (seconds)",
                      read_csv_table((dir / "timing.csv").string()));
  return out;
}

}  // namespace oulmm
