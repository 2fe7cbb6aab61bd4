#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "sdta/policy.hpp"

namespace sdta {

struct ChoiceParams {
  double kappa = -0.01;  // 1/s
};

/// Policy splits eta[w][t-1]; each column sums to 1.
class SplitSchedule {
 public:
  SplitSchedule() = default;
  SplitSchedule(std::size_t policies, int steps)
      : steps_(steps), eta_(policies, std::vector<double>(static_cast<std::size_t>(steps), 0.0)) {}

  std::size_t policies() const { return eta_.size(); }
  int steps() const { return steps_; }
  double operator()(std::size_t w, int t) const { return eta_[w][static_cast<std::size_t>(t - 1)]; }
  double& at(std::size_t w, int t) { return eta_[w][static_cast<std::size_t>(t - 1)]; }

  friend bool operator==(const SplitSchedule&, const SplitSchedule&) = default;

 private:
  int steps_ = 0;
  std::vector<std::vector<double>> eta_;
};

using Utilities = std::vector<std::vector<double>>;  // Y[w][t-1]

/// Y[w][t] = kappa * e_w(o, t); an unreachable origin gets -inf.
inline Utilities utilities(const std::vector<Policy>& policies, const ChoiceParams& params) {
  if (!(params.kappa < 0)) throw Error(ErrorCode::InvalidConfig, "kappa must be negative");
  Utilities y;
  for (const auto& p : policies) {
    if (!policies.empty() && (p.steps() != policies.front().steps() || p.origin() != policies.front().origin() ||
                              p.destination() != policies.front().destination()))
      throw Error(ErrorCode::ShapeMismatch, "policies disagree on grid or OD pair");
    std::vector<double> row;
    for (int t = 1; t <= p.steps(); ++t) {
      const double e = expected_origin_time(p, t);
      row.push_back(std::isinf(e) ? -std::numeric_limits<double>::infinity() : params.kappa * e);
    }
    y.push_back(std::move(row));
  }
  return y;
}

/// Multinomial logit per departure step, stabilized by the column maximum.
inline SplitSchedule logit_splits(const Utilities& y) {
  if (y.empty()) throw Error(ErrorCode::DegenerateChoiceSet, "empty policy set");
  const auto steps = y.front().size();
  SplitSchedule s(y.size(), static_cast<int>(steps));
  for (std::size_t t = 0; t < steps; ++t) {
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& row : y) top = std::max(top, row.at(t));
    if (!std::isfinite(top))
      throw Error(ErrorCode::DegenerateChoiceSet, "no policy reaches the destination at step " + std::to_string(t + 1));
    double sum = 0.0;
    for (std::size_t w = 0; w < y.size(); ++w) sum += std::exp(y[w][t] - top);
    for (std::size_t w = 0; w < y.size(); ++w)
      s.at(w, static_cast<int>(t) + 1) = std::exp(y[w][t] - top) / sum;
  }
  return s;
}

/// Tab-separated (t, policy, eta); policies are 0-based, 0 being the optimal one.
inline void write_splits_tsv(std::ostream& os, const SplitSchedule& s) {
  os << "t\tpolicy\teta\n";
  for (int t = 1; t <= s.steps(); ++t)
    for (std::size_t w = 0; w < s.policies(); ++w) os << t << '\t' << w << '\t' << s(w, t) << '\n';
}

}  // namespace sdta
