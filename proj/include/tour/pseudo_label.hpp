#ifndef TOUR_PSEUDO_LABEL_HPP
#define TOUR_PSEUDO_LABEL_HPP

#include "tour/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace tour {

/// Temperature softmax of labeler scores, max-subtracted.
template <typename Derived>
Vector<typename Derived::Scalar> soft_distribution(const Eigen::MatrixBase<Derived>& scores,
                                                   typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  if (!(tau > Scalar(0))) throw ConfigError("soft_distribution: tau must be positive");
  if (scores.size() == 0) return Vector<Scalar>();
  const Scalar peak = scores.maxCoeff();
  Vector<Scalar> w = ((scores.array() - peak) / tau).exp().matrix();
  return w / w.sum();
}

/// Smallest set of candidates whose soft mass reaches p.
///
/// `soft` is indexed in retrieval order, so index doubles as rank-1 for tie
/// breaking: candidates are taken by probability descending, earlier rank
/// first among equals. Returned in the order they were added. If rounding
/// keeps the total mass below p, every candidate is returned.
template <typename Derived>
std::vector<std::size_t> select_hard_set(const Eigen::MatrixBase<Derived>& soft, typename Derived::Scalar p) {
  using Scalar = typename Derived::Scalar;
  if (!(p > Scalar(0) && p <= Scalar(1))) throw ConfigError("select_hard_set: p must lie in (0, 1]");

  std::vector<std::size_t> order(static_cast<std::size_t>(soft.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return soft(static_cast<Eigen::Index>(a)) > soft(static_cast<Eigen::Index>(b));
  });

  Scalar mass(0);
  for (std::size_t n = 0; n < order.size(); ++n) {
    mass += soft(static_cast<Eigen::Index>(order[n]));
    if (mass >= p) {
      order.resize(n + 1);
      break;
    }
  }
  return order;
}

struct PseudoLabels {
  VectorXd soft;
  std::vector<std::size_t> hard;
  double tau = 0.5;
  double p = 0.5;

  bool in_hard(std::size_t index) const {
    return std::find(hard.begin(), hard.end(), index) != hard.end();
  }
};

template <typename Derived>
PseudoLabels make_pseudo_labels(const Eigen::MatrixBase<Derived>& scores, double tau, double p) {
  PseudoLabels labels;
  labels.tau = tau;
  labels.p = p;
  labels.soft = soft_distribution(scores.template cast<double>(), tau);
  labels.hard = select_hard_set(labels.soft, p);
  return labels;
}

}  // namespace tour

#endif  // TOUR_PSEUDO_LABEL_HPP
