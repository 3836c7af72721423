#ifndef TOUR_ROCCHIO_HPP
#define TOUR_ROCCHIO_HPP

#include "tour/embedding_store.hpp"
#include "tour/optimizer.hpp"

#include <cstddef>

namespace tour {

/// Classical Rocchio feedback: the top k' candidates are treated as relevant,
/// the rest of the top k as non-relevant.
struct RocchioConfig {
  double alpha = 1.0;
  double beta = 0.5;
  double gamma = 0.5;
  std::size_t k_prime = 3;
  int iterations = 3;

  void validate() const;
};

/// alpha q + beta mean(rows [0, k')) - gamma mean(rows [k', k)).
template <typename DerivedQ, typename DerivedC>
Vector<typename DerivedQ::Scalar> rocchio_update(const Eigen::MatrixBase<DerivedQ>& q,
                                                 const Eigen::MatrixBase<DerivedC>& cands,
                                                 const RocchioConfig& config) {
  using Scalar = typename DerivedQ::Scalar;
  const auto k = cands.rows();
  const auto kp = static_cast<Eigen::Index>(config.k_prime);
  if (config.k_prime == 0 || kp >= k) {
    throw ConfigError("rocchio_update: k' = " + std::to_string(config.k_prime) + " must satisfy 0 < k' < k = " +
                      std::to_string(k));
  }
  if (cands.cols() != q.size()) throw DimensionError("rocchio_update: candidate/query dim mismatch");

  const Vector<Scalar> relevant = cands.topRows(kp).colwise().mean().transpose();
  const Vector<Scalar> non_relevant = cands.bottomRows(k - kp).colwise().mean().transpose();
  return Scalar(config.alpha) * q + Scalar(config.beta) * relevant - Scalar(config.gamma) * non_relevant;
}

/// Iterated retrieve -> Rocchio update, then one final retrieval. No labeler,
/// no early stop; final_scores stays empty.
TourOutcome run_prf(const QueryMeta& query, const VectorXd& q0, const Corpus& corpus, const RocchioConfig& config,
                    std::size_t k);

}  // namespace tour

#endif  // TOUR_ROCCHIO_HPP
