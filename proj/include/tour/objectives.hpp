#ifndef TOUR_OBJECTIVES_HPP
#define TOUR_OBJECTIVES_HPP

// Losses over a retrieved candidate set and their closed-form gradients
// with respect to the query vector. Candidates are the rows of a k x dim
// matrix in retrieval order; similarity is the raw inner product.

#include "tour/types.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tour {

namespace detail {

template <typename DerivedQ, typename DerivedC>
void check_shapes(const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedC>& cands, const char* who) {
  if (cands.rows() == 0) throw ContractError(std::string(who) + ": empty candidate set");
  if (cands.cols() != q.size()) {
    throw DimensionError(std::string(who) + ": query dim " + std::to_string(q.size()) + " vs candidate dim " +
                         std::to_string(cands.cols()));
  }
}

template <typename Index>
void check_hard_set(std::span<const Index> hard, Eigen::Index k, const char* who) {
  if (hard.empty()) throw ContractError(std::string(who) + ": empty hard set");
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (auto i : hard) {
    if (static_cast<Eigen::Index>(i) >= k) {
      throw ContractError(std::string(who) + ": hard index " + std::to_string(i) + " out of range");
    }
    if (seen[static_cast<std::size_t>(i)]) {
      throw ContractError(std::string(who) + ": duplicate hard index " + std::to_string(i));
    }
    seen[static_cast<std::size_t>(i)] = true;
  }
}

template <typename DerivedT>
void check_target(const Eigen::MatrixBase<DerivedT>& target, Eigen::Index k, const char* who) {
  using Scalar = typename DerivedT::Scalar;
  if (target.size() != k) {
    throw ContractError(std::string(who) + ": target has " + std::to_string(target.size()) + " entries for " +
                        std::to_string(k) + " candidates");
  }
  if ((target.array() < Scalar(0)).any() || !target.allFinite()) {
    throw ContractError(std::string(who) + ": target has negative or non-finite entries");
  }
  if (std::abs(target.sum() - Scalar(1)) > Scalar(1e-6)) {
    throw ContractError(std::string(who) + ": target does not sum to 1");
  }
}

}  // namespace detail

/// Similarities q . c_i for every candidate row.
template <typename DerivedQ, typename DerivedC>
Vector<typename DerivedQ::Scalar> similarities(const Eigen::MatrixBase<DerivedQ>& q,
                                               const Eigen::MatrixBase<DerivedC>& cands) {
  return cands * q;
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& x) {
  const auto peak = x.maxCoeff();
  return peak + std::log((x.array() - peak).exp().sum());
}

/// Retrieval distribution P_k(c_i | q) over the candidate set.
template <typename DerivedQ, typename DerivedC>
Vector<typename DerivedQ::Scalar> retrieval_softmax(const Eigen::MatrixBase<DerivedQ>& q,
                                                    const Eigen::MatrixBase<DerivedC>& cands) {
  detail::check_shapes(q, cands, "retrieval_softmax");
  const Vector<typename DerivedQ::Scalar> logits = similarities(q, cands);
  Vector<typename DerivedQ::Scalar> w = (logits.array() - logits.maxCoeff()).exp().matrix();
  return w / w.sum();
}

/// Negative log marginal likelihood of the hard pseudo-positive set:
/// -log sum_{i in hard} P_k(c_i | q).
template <typename DerivedQ, typename DerivedC>
typename DerivedQ::Scalar loss_hard(const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedC>& cands,
                                    std::span<const std::size_t> hard) {
  using Scalar = typename DerivedQ::Scalar;
  detail::check_shapes(q, cands, "loss_hard");
  detail::check_hard_set(hard, cands.rows(), "loss_hard");

  const Vector<Scalar> logits = similarities(q, cands);
  const Scalar peak = logits.maxCoeff();
  const auto shifted = (logits.array() - peak).exp().eval();
  std::vector<bool> in_hard(static_cast<std::size_t>(cands.rows()), false);
  Scalar positive(0);
  for (auto i : hard) {
    positive += shifted(static_cast<Eigen::Index>(i));
    in_hard[i] = true;
  }
  // total = positive + rest, so total >= positive holds exactly and the loss is never negative.
  Scalar rest(0);
  for (Eigen::Index i = 0; i < shifted.size(); ++i) {
    if (!in_hard[static_cast<std::size_t>(i)]) rest += shifted(i);
  }
  return std::log(positive + rest) - std::log(positive);
}

/// Gradient of loss_hard.
///
/// Each pseudo-positive c~ is weighted by its share of the hard-set mass,
/// P(c~|q) = P_k(c~|q) / sum_hard P_k. Expanding the marginal likelihood
/// derivative gives
///   -sum_c~ P(c~|q) (1 - P_k(c~|q)) c~ + sum_c~ P(c~|q) sum_{c != c~} P_k(c|q) c,
/// which collapses to  sum_i (P_k(c_i|q) - P(c_i|q) [i in hard]) c_i.
template <typename DerivedQ, typename DerivedC>
Vector<typename DerivedQ::Scalar> grad_hard(const Eigen::MatrixBase<DerivedQ>& q,
                                            const Eigen::MatrixBase<DerivedC>& cands,
                                            std::span<const std::size_t> hard) {
  using Scalar = typename DerivedQ::Scalar;
  detail::check_shapes(q, cands, "grad_hard");
  detail::check_hard_set(hard, cands.rows(), "grad_hard");

  const Vector<Scalar> pk = retrieval_softmax(q, cands);
  Scalar hard_mass(0);
  for (auto i : hard) hard_mass += pk(static_cast<Eigen::Index>(i));

  Vector<Scalar> weights = pk;
  for (auto i : hard) weights(static_cast<Eigen::Index>(i)) -= pk(static_cast<Eigen::Index>(i)) / hard_mass;
  return cands.transpose() * weights;
}

/// KL(target || P_k(.|q)), with 0 log 0 = 0.
template <typename DerivedQ, typename DerivedC, typename DerivedT>
typename DerivedQ::Scalar loss_soft(const Eigen::MatrixBase<DerivedQ>& q, const Eigen::MatrixBase<DerivedC>& cands,
                                    const Eigen::MatrixBase<DerivedT>& target) {
  using Scalar = typename DerivedQ::Scalar;
  detail::check_shapes(q, cands, "loss_soft");
  detail::check_target(target, cands.rows(), "loss_soft");

  const Vector<Scalar> logits = similarities(q, cands);
  const Scalar lse = log_sum_exp(logits);
  Scalar kl(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const Scalar t = target(i);
    if (t > Scalar(0)) kl += t * (std::log(t) - (logits(i) - lse));
  }
  return kl;
}

/// Gradient of loss_soft: sum_i (P_k(c_i|q) - target_i) c_i.
template <typename DerivedQ, typename DerivedC, typename DerivedT>
Vector<typename DerivedQ::Scalar> grad_soft(const Eigen::MatrixBase<DerivedQ>& q,
                                            const Eigen::MatrixBase<DerivedC>& cands,
                                            const Eigen::MatrixBase<DerivedT>& target) {
  detail::check_shapes(q, cands, "grad_soft");
  detail::check_target(target, cands.rows(), "grad_soft");
  const Vector<typename DerivedQ::Scalar> weights = retrieval_softmax(q, cands) - target;
  return cands.transpose() * weights;
}

}  // namespace tour

#endif  // TOUR_OBJECTIVES_HPP
