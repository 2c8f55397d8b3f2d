#pragma once

#include <ostream>
#include <string>

#include "vstar/bandit.hpp"
#include "vstar/gp_upper.hpp"
#include "vstar/model_selection.hpp"
#include "vstar/moment.hpp"
#include "vstar/polynomial.hpp"
#include "vstar/treatment.hpp"

namespace vstar {

/// Shortest round-trip decimal; NaN renders as "NA".
std::string format_double(double v);

/// Columns: trial_id, record_id, action, reward, then f_{a}_{j} for each
/// action a in [K] and coordinate j in [d].
void write_dataset_csv(std::ostream& os, const Dataset& dataset, int trial_id,
                       bool header = true);
Dataset read_dataset_csv(std::istream& is, int K, int d);

/// Columns: alpha (dash-joined), chunk_id, s_hat_chunk, s_hat_median.
void write_moment_table_csv(std::ostream& os, const MomentTable& table);

/// Columns: t, explored, action, reward, regret_cum, u_hat, alpha_t,
/// active_class.
void write_run_trace_csv(std::ostream& os, const RunTrace& trace);

/// Columns: n, effect_flag, psi_rate, psi_stderr, lr_rate, lr_stderr, reps.
void write_power_csv(std::ostream& os, const std::vector<PowerRow>& rows);

std::string polynomial_to_json(const Polynomial& p);
Polynomial polynomial_from_json(const std::string& text);

std::string fitted_process_to_json(const FittedProcess& fp);

}  // namespace vstar
