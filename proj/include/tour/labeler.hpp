#ifndef TOUR_LABELER_HPP
#define TOUR_LABELER_HPP

#include "tour/embedding_store.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tour {

struct ScoredContext {
  std::string context_id;
  double s = 0.0;
};

/// Labeler scores aligned with the candidate list that requested them.
struct RelevanceScores {
  std::string query_id;
  std::vector<ScoredContext> scores;

  std::size_t size() const { return scores.size(); }
  VectorXd values() const;
};

struct LabelerStats {
  std::uint64_t backend_calls = 0;  // candidates scored by the backend
  std::uint64_t cache_hits = 0;

  std::uint64_t requests() const { return backend_calls + cache_hits; }
};

/// Relevance labeler s = phi(q, c). Implementations must be pure in
/// (query id, context id) and safe to call concurrently for different queries.
class Labeler {
 public:
  virtual ~Labeler() = default;
  /// One raw score per candidate, in candidate order.
  virtual std::vector<double> score(const QueryMeta& query, std::span<const CorpusMeta> candidates) = 0;
};

/// Validating entry point over any labeler: nonempty candidates in, one
/// finite score per candidate out. Backend failures are rethrown with the
/// query id attached.
RelevanceScores score_candidates(Labeler& labeler, const QueryMeta& query, std::span<const CorpusMeta> candidates);

/// Lowercase, drop punctuation and the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

/// True when a normalized answer appears on word boundaries in the normalized text.
bool contains_answer(std::string_view text, std::span<const std::string> answers);

/// +1 when the candidate is gold or contains an answer, -1 otherwise.
double oracle_score(const QueryMeta& query, const CorpusMeta& candidate);

/// Relevance judgment used by the oracle and by the metrics.
bool is_relevant(const QueryMeta& query, const CorpusMeta& candidate);

class OracleLabeler final : public Labeler {
 public:
  std::vector<double> score(const QueryMeta& query, std::span<const CorpusMeta> candidates) override;
};

/// Deterministic pseudo-random scores in [-1, 1) keyed by (seed, query id, context id).
class SyntheticLabeler final : public Labeler {
 public:
  explicit SyntheticLabeler(std::uint64_t seed = 0) : seed_(seed) {}
  std::vector<double> score(const QueryMeta& query, std::span<const CorpusMeta> candidates) override;

 private:
  std::uint64_t seed_;
};

/// Memoizes a backend by (query id, context id) for the lifetime of a run.
/// Only misses reach the backend, batched in request order.
class CachingLabeler final : public Labeler {
 public:
  explicit CachingLabeler(Labeler& backend) : backend_(backend) {}

  std::vector<double> score(const QueryMeta& query, std::span<const CorpusMeta> candidates) override;

  LabelerStats stats_for(const std::string& query_id) const;
  LabelerStats total() const;

 private:
  Labeler& backend_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::unordered_map<std::string, double>> cache_;
  std::unordered_map<std::string, LabelerStats> stats_;
};

struct RemoteLabelerConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8080
  std::chrono::milliseconds timeout{10000};
  int retries = 2;  // extra attempts after the first
  std::size_t max_batch = 128;
};

/// Client for the external scoring service: POST {base_url}/score.
class RemoteLabeler final : public Labeler {
 public:
  explicit RemoteLabeler(RemoteLabelerConfig config);

  std::vector<double> score(const QueryMeta& query, std::span<const CorpusMeta> candidates) override;

  const RemoteLabelerConfig& config() const { return config_; }

 private:
  std::vector<double> score_batch(const QueryMeta& query, std::span<const CorpusMeta> batch);

  RemoteLabelerConfig config_;
  std::string host_;  // scheme://host:port
  std::string path_prefix_;
};

/// Text sent to a cross-encoder: title, one space, body.
std::string render_context(const CorpusMeta& candidate);

}  // namespace tour

#endif  // TOUR_LABELER_HPP
