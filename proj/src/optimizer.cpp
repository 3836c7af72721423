#include "tour/optimizer.hpp"

#include "tour/objectives.hpp"

#include <algorithm>

namespace tour {

std::string_view to_string(Variant v) { return v == Variant::hard ? "hard" : "soft"; }

Variant parse_variant(std::string_view name) {
  if (name == "hard") return Variant::hard;
  if (name == "soft") return Variant::soft;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::top1_pseudo_positive: return "top1-pseudo-positive";
    case StopReason::top1_highest_score: return "top1-highest-score";
    case StopReason::max_iters: return "max-iters";
  }
  return "max-iters";
}

OptimizerConfig OptimizerConfig::odqa() { return OptimizerConfig{}; }

OptimizerConfig OptimizerConfig::passage_phrase() {
  OptimizerConfig c;
  c.eta = 1.2;
  c.max_iters = 1;
  c.k = 100;
  return c;
}

OptimizerConfig OptimizerConfig::passage_dpr() {
  OptimizerConfig c = passage_phrase();
  c.eta = 0.2;
  return c;
}

void OptimizerConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("optimizer: eta must be positive");
  if (max_iters < 1) throw ConfigError("optimizer: max_iters must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("optimizer: weight_decay must be nonnegative");
  }
  if (k == 0) throw ConfigError("optimizer: k must be positive");
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("optimizer: p must lie in (0, 1]");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("optimizer: tau must be positive");
}

bool should_stop(Variant variant, std::size_t top1_index, const PseudoLabels& labels, const RelevanceScores& scores) {
  if (variant == Variant::hard) return labels.in_hard(top1_index);
  if (scores.scores.empty() || top1_index >= scores.size()) return false;
  const double top1 = scores.scores[top1_index].s;
  return std::all_of(scores.scores.begin(), scores.scores.end(),
                     [top1](const ScoredContext& c) { return c.s <= top1; });
}

std::vector<CorpusMeta> candidate_meta(const Corpus& corpus, const RetrievalResult& result) {
  std::vector<CorpusMeta> out;
  out.reserve(result.size());
  for (const auto& e : result.entries) out.push_back(corpus.meta[e.row]);
  return out;
}

TourOutcome run_tour(const QueryMeta& query, const VectorXd& q0, const Corpus& corpus, Labeler& labeler,
                     const OptimizerConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(q0.size()) != corpus.vectors.dim()) {
    throw DimensionError("query '" + query.id + "' has dim " + std::to_string(q0.size()) + ", index has " +
                         std::to_string(corpus.vectors.dim()));
  }

  TourOutcome outcome;
  outcome.query_id = query.id;
  auto state = QueryState<double>::start(query.id, q0);

  auto retrieve_and_label = [&](const VectorXd& q) {
    IterationTrace round;
    round.q = q;
    round.candidates = top_k_search(corpus.vectors, q, config.k);
    round.candidates.query_id = query.id;
    round.scores.query_id = query.id;
    if (!round.candidates.empty()) {
      round.scores = score_candidates(labeler, query, candidate_meta(corpus, round.candidates));
    }
    return round;
  };

  auto finish = [&](IterationTrace round, int iterations, StopReason reason) {
    outcome.final_q = state.q;
    outcome.iterations_used = iterations;
    outcome.stop_reason = reason;
    outcome.final_candidates = round.candidates;
    outcome.final_scores = round.scores;
    outcome.trace.push_back(std::move(round));
    return std::move(outcome);
  };

  for (int t = 0; t < config.max_iters; ++t) {
    IterationTrace round = retrieve_and_label(state.q);
    if (round.candidates.empty()) return finish(std::move(round), t, StopReason::max_iters);

    const PseudoLabels labels = make_pseudo_labels(round.scores.values(), config.tau, config.p);
    if (should_stop(config.variant, 0, labels, round.scores)) {
      const auto reason =
          config.variant == Variant::hard ? StopReason::top1_pseudo_positive : StopReason::top1_highest_score;
      return finish(std::move(round), t, reason);
    }

    const RowMatrixXd cands = gather_candidates(corpus.vectors, round.candidates);
    const VectorXd grad = config.variant == Variant::hard
                              ? grad_hard(state.q, cands, std::span<const std::size_t>(labels.hard))
                              : grad_soft(state.q, cands, labels.soft);
    state = apply_update(std::move(state), grad, config);
    outcome.trace.push_back(std::move(round));
  }

  return finish(retrieve_and_label(state.q), config.max_iters, StopReason::max_iters);
}

}  // namespace tour
