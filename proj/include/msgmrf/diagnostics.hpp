#ifndef MSGMRF_DIAGNOSTICS_HPP
#define MSGMRF_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

namespace msgmrf {

struct ChainTrace {
  Eigen::VectorXd values;
  std::string label;
};

/// Mean-centred biased (divide by n) sample autocorrelations for lags
/// 0..max_lag; lag 0 is 1.
Eigen::VectorXd autocorrelation(const ChainTrace& trace, Eigen::Index max_lag);

/// Single-chain effective sample size n / (1 + 2 sum rho_t), with the sum
/// stopped before the first lag T at which rho_T + rho_{T+1} < 0, clipped to
/// (0, n].
double effective_sample_size(const ChainTrace& trace);

/// Keeps every factor-th value starting from the first.
ChainTrace thin(const ChainTrace& trace, Eigen::Index factor);

struct EssReportRow {
  std::string label;
  Eigen::Index n = 0;
  double n_eff = 0.0;
};

void write_ess_report_csv(const std::vector<EssReportRow>& rows,
                          const std::string& path);

}  // namespace msgmrf

#endif
