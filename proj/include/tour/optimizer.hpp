#ifndef TOUR_OPTIMIZER_HPP
#define TOUR_OPTIMIZER_HPP

#include "tour/embedding_store.hpp"
#include "tour/labeler.hpp"
#include "tour/pseudo_label.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace tour {

enum class Variant { hard, soft };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct OptimizerConfig {
  double eta = 1.2;
  int max_iters = 3;
  double momentum = 0.99;
  double weight_decay = 0.01;
  std::size_t k = 10;
  double p = 0.5;
  double tau = 0.5;
  Variant variant = Variant::hard;

  /// Open-domain QA over phrases: eta 1.2, 3 iterations, top-10.
  static OptimizerConfig odqa();
  /// Passage retrieval, one iteration over top-100; eta 1.2 for phrase-based, 0.2 for DPR.
  static OptimizerConfig passage_phrase();
  static OptimizerConfig passage_dpr();

  void validate() const;
};

template <typename Scalar>
struct QueryState {
  std::string query_id;
  Vector<Scalar> q;
  Vector<Scalar> velocity;
  int iteration = 0;

  static QueryState start(std::string id, Vector<Scalar> q0) {
    QueryState s{std::move(id), std::move(q0), {}, 0};
    s.velocity = Vector<Scalar>::Zero(s.q.size());
    return s;
  }
};

/// Linear decay eta * (T - t) / T for the 0-indexed iteration t.
inline double scheduled_learning_rate(const OptimizerConfig& config, int iteration) {
  return config.eta * static_cast<double>(config.max_iters - iteration) / static_cast<double>(config.max_iters);
}

/// One momentum step with coupled weight decay:
///   v <- mu v + (grad + decay q);  q <- q - eta_t v.
template <typename Scalar, typename DerivedG>
QueryState<Scalar> apply_update(QueryState<Scalar> state, const Eigen::MatrixBase<DerivedG>& grad,
                                const OptimizerConfig& config) {
  if (grad.size() != state.q.size()) {
    throw DimensionError("apply_update: gradient dim " + std::to_string(grad.size()) + " vs query dim " +
                         std::to_string(state.q.size()));
  }
  if (!grad.allFinite()) throw NumericError("apply_update: non-finite gradient for query '" + state.query_id + "'");

  const Scalar lr = static_cast<Scalar>(scheduled_learning_rate(config, state.iteration));
  state.velocity = static_cast<Scalar>(config.momentum) * state.velocity + grad +
                   static_cast<Scalar>(config.weight_decay) * state.q;
  state.q -= lr * state.velocity;
  if (!state.q.allFinite() || !state.velocity.allFinite()) {
    throw NumericError("apply_update: query '" + state.query_id + "' overflowed at iteration " +
                       std::to_string(state.iteration));
  }
  ++state.iteration;
  return state;
}

/// Hard: rank-1 candidate is pseudo-positive. Soft: rank-1 candidate holds
/// the maximum labeler score (ties count).
bool should_stop(Variant variant, std::size_t top1_index, const PseudoLabels& labels, const RelevanceScores& scores);

enum class StopReason { top1_pseudo_positive, top1_highest_score, max_iters };

std::string_view to_string(StopReason r);

/// One retrieval round as seen by the loop.
struct IterationTrace {
  VectorXd q;
  RetrievalResult candidates;
  RelevanceScores scores;  // empty for the unlabeled final retrieval of a label-free method
};

struct TourOutcome {
  std::string query_id;
  VectorXd final_q;
  int iterations_used = 0;
  StopReason stop_reason = StopReason::max_iters;
  RetrievalResult final_candidates;
  RelevanceScores final_scores;
  std::vector<IterationTrace> trace;
};

/// Candidate metadata for a result, in rank order.
std::vector<CorpusMeta> candidate_meta(const Corpus& corpus, const RetrievalResult& result);

/// Test-time query optimization for one query.
///
/// Each round retrieves top-k with the current vector, labels the candidates,
/// and either stops (the stop condition holds) or takes one gradient step.
/// When the loop runs out of iterations the final vector is retrieved and
/// labeled once more; on an early stop the candidates in hand are final.
TourOutcome run_tour(const QueryMeta& query, const VectorXd& q0, const Corpus& corpus, Labeler& labeler,
                     const OptimizerConfig& config);

}  // namespace tour

#endif  // TOUR_OPTIMIZER_HPP
