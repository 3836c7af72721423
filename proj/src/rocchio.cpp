#include "tour/rocchio.hpp"

namespace tour {

void RocchioConfig::validate() const {
  if (k_prime == 0) throw ConfigError("rocchio: k_prime must be positive");
  if (iterations < 1) throw ConfigError("rocchio: iterations must be at least 1");
  if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma)) {
    throw ConfigError("rocchio: alpha, beta and gamma must be finite");
  }
}

TourOutcome run_prf(const QueryMeta& query, const VectorXd& q0, const Corpus& corpus, const RocchioConfig& config,
                    std::size_t k) {
  config.validate();
  if (config.k_prime >= k) {
    throw ConfigError("rocchio: k' = " + std::to_string(config.k_prime) + " must be below k = " + std::to_string(k));
  }
  if (static_cast<std::size_t>(q0.size()) != corpus.vectors.dim()) {
    throw DimensionError("query '" + query.id + "' dim does not match the index");
  }

  TourOutcome outcome;
  outcome.query_id = query.id;
  outcome.final_scores.query_id = query.id;
  VectorXd q = q0;

  for (int t = 0; t < config.iterations; ++t) {
    IterationTrace round{q, top_k_search(corpus.vectors, q, k), {query.id, {}}};
    round.candidates.query_id = query.id;
    // The corpus may hold k' or fewer rows; nothing to split then.
    if (round.candidates.size() > config.k_prime) {
      q = rocchio_update(q, gather_candidates(corpus.vectors, round.candidates), config);
      if (!q.allFinite()) throw NumericError("rocchio: query '" + query.id + "' overflowed");
    }
    outcome.trace.push_back(std::move(round));
  }

  IterationTrace last{q, top_k_search(corpus.vectors, q, k), {query.id, {}}};
  last.candidates.query_id = query.id;
  outcome.final_q = q;
  outcome.iterations_used = config.iterations;
  outcome.stop_reason = StopReason::max_iters;
  outcome.final_candidates = last.candidates;
  outcome.trace.push_back(std::move(last));
  return outcome;
}

}  // namespace tour
