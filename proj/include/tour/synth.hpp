#ifndef TOUR_SYNTH_HPP
#define TOUR_SYNTH_HPP

#include "tour/embedding_store.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tour {

struct SynthOptions {
  std::size_t n_contexts = 1000;
  std::size_t n_queries = 200;
  std::size_t dim = 32;
  std::size_t gold_rank_min = 1;
  std::size_t gold_rank_max = 8;
  std::uint64_t seed = 0;
};

struct SynthDataset {
  Corpus corpus;
  QuerySet queries;
  std::vector<std::size_t> initial_gold_rank;  // per query, under the stored float32 vectors
};

/// Unit-norm random contexts and queries q0 = normalize(gold + sigma * noise),
/// with sigma bisected per query so the gold's initial rank lands on a target
/// drawn uniformly from [gold_rank_min, gold_rank_max]. Each context carries a
/// unique marker token that doubles as the answer string of queries it is gold for.
SynthDataset generate_synthetic(const SynthOptions& options);

/// Writes corpus.emb, corpus.jsonl, queries.emb, queries.jsonl and a starter
/// config.json into `dir`.
void write_synthetic(const SynthDataset& data, const std::filesystem::path& dir);

/// 1-based rank of `row` for `query` under the sim-desc / id-asc order.
std::size_t rank_of(const EmbeddingMatrix& matrix, const Eigen::Ref<const VectorXd>& query, std::size_t row);

}  // namespace tour

#endif  // TOUR_SYNTH_HPP
