#include "msgmrf/diagnostics.hpp"

#include <algorithm>
#include <fstream>

#include "msgmrf/errors.hpp"

namespace msgmrf {

Eigen::VectorXd autocorrelation(const ChainTrace& trace,
                                Eigen::Index max_lag) {
  const Eigen::Index n = trace.values.size();
  if (n < 2) throw DegenerateTrace("trace too short");
  if (max_lag >= n) throw IndexOutOfRange("max_lag must be < length");
  const double mean = trace.values.mean();
  const Eigen::VectorXd centred = trace.values.array() - mean;
  const double denom = centred.squaredNorm() / double(n);
  if (!(denom > 0.0)) throw DegenerateTrace("zero variance");
  Eigen::VectorXd acf(max_lag + 1);
  for (Eigen::Index t = 0; t <= max_lag; ++t) {
    const double num =
        centred.head(n - t).dot(centred.tail(n - t)) / double(n);
    acf[t] = num / denom;
  }
  return acf;
}

double effective_sample_size(const ChainTrace& trace) {
  const Eigen::Index n = trace.values.size();
  if (n < 4) throw DegenerateTrace("need length >= 4 for ESS");
  const double mean = trace.values.mean();
  const Eigen::VectorXd centred = trace.values.array() - mean;
  const double denom0 = centred.squaredNorm() / double(n);
  if (!(denom0 > 0.0)) throw DegenerateTrace("zero variance");
  auto rho = [&](Eigen::Index t) {
    return centred.head(n - t).dot(centred.tail(n - t)) / double(n) / denom0;
  };
  // lags computed on demand; the paired-sum rule stops the scan early
  const Eigen::Index max_lag = n - 2;
  double sum = 0.0;
  double rho_t = rho(1);
  for (Eigen::Index t = 1; t + 1 <= max_lag; ++t) {
    const double rho_next = rho(t + 1);
    if (rho_t + rho_next < 0.0) break;
    sum += rho_t;
    rho_t = rho_next;
  }
  const double denom = 1.0 + 2.0 * sum;
  double ess = denom > 0.0 ? double(n) / denom : double(n);
  ess = std::min(ess, double(n));
  return std::max(ess, 1e-300);
}

ChainTrace thin(const ChainTrace& trace, Eigen::Index factor) {
  if (factor < 1) throw IndexOutOfRange("thin factor must be >= 1");
  const Eigen::Index kept = (trace.values.size() + factor - 1) / factor;
  ChainTrace out;
  out.label = trace.label;
  out.values.resize(kept);
  for (Eigen::Index i = 0; i < kept; ++i)
    out.values[i] = trace.values[i * factor];
  return out;
}

void write_ess_report_csv(const std::vector<EssReportRow>& rows,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "label,n,n_eff\n";
  out.precision(12);
  for (const auto& r : rows)
    out << r.label << "," << r.n << "," << r.n_eff << "\n";
}

}  // namespace msgmrf
