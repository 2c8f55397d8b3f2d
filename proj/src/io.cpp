#include "vstar/io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace vstar {

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  // %.17g round-trips doubles exactly; trim to the shortest that does.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

void write_dataset_csv(std::ostream& os, const Dataset& dataset, int trial_id,
                       bool header) {
  if (header) {
    os << "trial_id,record_id,action,reward";
    for (int a = 1; a <= dataset.K; ++a)
      for (int j = 1; j <= dataset.d; ++j) os << ",f_" << a << "_" << j;
    os << "\n";
  }
  for (int i = 0; i < dataset.size(); ++i) {
    const auto& rec = dataset.records[i];
    os << trial_id << "," << i << "," << rec.action << ","
       << format_double(rec.reward);
    for (int a = 0; a < dataset.K; ++a)
      for (int j = 0; j < dataset.d; ++j)
        os << "," << format_double(rec.features(a, j));
    os << "\n";
  }
}

Dataset read_dataset_csv(std::istream& is, int K, int d) {
  Dataset data;
  data.K = K;
  data.d = d;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != 4 + K * d)
      throw InvalidParameterError("read_dataset_csv: wrong column count");
    DatasetRecord rec;
    rec.action = std::stoi(cells[2]);
    rec.reward = std::stod(cells[3]);
    rec.features.resize(K, d);
    int idx = 4;
    for (int a = 0; a < K; ++a)
      for (int j = 0; j < d; ++j) rec.features(a, j) = std::stod(cells[idx++]);
    data.records.push_back(std::move(rec));
  }
  return data;
}

void write_moment_table_csv(std::ostream& os, const MomentTable& table) {
  os << "alpha,chunk_id,s_hat_chunk,s_hat_median\n";
  for (std::size_t ai = 0; ai < table.alphas.size(); ++ai) {
    std::string alpha;
    for (int a = 0; a < table.alphas[ai].vars(); ++a) {
      if (a) alpha += "-";
      alpha += std::to_string(table.alphas[ai].alpha[a]);
    }
    for (std::size_t k = 0; k < table.chunk_values[ai].size(); ++k)
      os << alpha << "," << k << ","
         << format_double(table.chunk_values[ai][k]) << ","
         << format_double(table.medians[ai]) << "\n";
  }
}

void write_run_trace_csv(std::ostream& os, const RunTrace& trace) {
  os << "t,explored,action,reward,regret_cum,u_hat,alpha_t,active_class\n";
  for (const auto& row : trace.rows)
    os << row.t << "," << (row.explored ? 1 : 0) << "," << row.action << ","
       << format_double(row.reward) << "," << format_double(row.regret_cum)
       << "," << format_double(row.u_hat) << "," << format_double(row.alpha_t)
       << "," << row.active_class << "\n";
}

void write_power_csv(std::ostream& os, const std::vector<PowerRow>& rows) {
  os << "n,effect_flag,psi_rate,psi_stderr,lr_rate,lr_stderr,reps\n";
  for (const auto& r : rows)
    os << r.n << "," << (r.effect ? 1 : 0) << "," << format_double(r.psi_rate)
       << "," << format_double(r.psi_stderr) << "," << format_double(r.lr_rate)
       << "," << format_double(r.lr_stderr) << "," << r.reps << "\n";
}

std::string polynomial_to_json(const Polynomial& p) {
  nlohmann::ordered_json j;
  j["degree"] = p.degree;
  j["terms"] = nlohmann::ordered_json::array();
  for (const auto& [idx, c] : p.terms) {
    nlohmann::ordered_json term;
    term["alpha"] = idx.alpha;
    term["c"] = c;
    j["terms"].push_back(term);
  }
  j["zeta_hat"] = p.zeta_hat;
  j["c_max"] = p.c_max;
  return j.dump(2);
}

Polynomial polynomial_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Polynomial p;
  p.degree = j.at("degree").get<int>();
  for (const auto& term : j.at("terms")) {
    MultiIndex idx;
    idx.alpha = term.at("alpha").get<std::vector<int>>();
    p.terms[idx] = term.at("c").get<double>();
    p.K = idx.vars();
  }
  p.zeta_hat = j.value("zeta_hat", 0.0);
  p.c_max = j.value("c_max", p.scan_c_max());
  return p;
}

std::string fitted_process_to_json(const FittedProcess& fp) {
  nlohmann::ordered_json j;
  auto matrix_to_json = [](const Matrix& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
      rows.push_back(row);
    }
    return rows;
  };
  j["beta_hat"] = matrix_to_json(fp.beta_hat);
  j["lambda_tilde"] = matrix_to_json(fp.lambda_tilde);
  j["residual"] = fp.residual;
  j["u_hat"] = fp.u_hat;
  j["u_stderr"] = fp.u_stderr;
  j["n_mc"] = fp.mc_samples;
  return j.dump(2);
}

}  // namespace vstar
