#include "tour/synth.hpp"

#include "tour/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace tour {

namespace {

std::string padded(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

Vector<float> as_stored_query(const Vector<double>& v) { return v.normalized().cast<float>(); }

}  // namespace

std::size_t rank_of(const EmbeddingMatrix& matrix, const Eigen::Ref<const VectorXd>& query, std::size_t row) {
  const double target = row_dot(matrix, row, query);
  const std::string& target_id = matrix.id(row);
  std::size_t rank = 1;
  for (std::size_t r = 0; r < matrix.count(); ++r) {
    if (r == row) continue;
    const double s = row_dot(matrix, r, query);
    if (s > target || (s == target && matrix.id(r) < target_id)) ++rank;
  }
  return rank;
}

SynthDataset generate_synthetic(const SynthOptions& o) {
  if (o.n_contexts == 0 || o.dim == 0) throw ConfigError("gen-synth: n_contexts and dim must be positive");
  if (o.gold_rank_min == 0 || o.gold_rank_min > o.gold_rank_max || o.gold_rank_max > o.n_contexts) {
    throw ConfigError("gen-synth: gold rank range must satisfy 1 <= A <= B <= n_contexts");
  }

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](std::size_t n) {
    Vector<double> v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = normal(rng);
    return v;
  };

  RowMatrixXf contexts(static_cast<Eigen::Index>(o.n_contexts), static_cast<Eigen::Index>(o.dim));
  std::vector<CorpusMeta> corpus_meta;
  for (std::size_t i = 0; i < o.n_contexts; ++i) {
    contexts.row(static_cast<Eigen::Index>(i)) = gaussian(o.dim).normalized().cast<float>().transpose();
    corpus_meta.push_back({padded('c', i, 6), "Context " + std::to_string(i),
                           "synthetic passage marker " + padded('m', i, 6)});
  }
  std::vector<std::string> context_ids;
  for (const auto& m : corpus_meta) context_ids.push_back(m.id);
  Corpus corpus = Corpus::assemble(EmbeddingMatrix(std::move(contexts), std::move(context_ids)), std::move(corpus_meta));

  std::uniform_int_distribution<std::size_t> pick_gold(0, o.n_contexts - 1);
  std::uniform_int_distribution<std::size_t> pick_rank(o.gold_rank_min, o.gold_rank_max);

  RowMatrixXf query_vectors(static_cast<Eigen::Index>(o.n_queries), static_cast<Eigen::Index>(o.dim));
  std::vector<QueryMeta> query_meta;
  std::vector<std::size_t> ranks;
  for (std::size_t j = 0; j < o.n_queries; ++j) {
    const std::size_t gold = pick_gold(rng);
    const std::size_t target = pick_rank(rng);
    const Vector<double> gold_vec = corpus.vectors.row(gold).cast<double>().transpose();

    Vector<float> best;
    std::size_t best_rank = 0;
    for (int attempt = 0; attempt < 20; ++attempt) {
      const Vector<double> noise = gaussian(o.dim) / std::sqrt(static_cast<double>(o.dim));
      auto rank_at = [&](double sigma) {
        const Vector<float> q = as_stored_query(gold_vec + sigma * noise);
        return rank_of(corpus.vectors, q.cast<double>(), gold);
      };
      // rank(lo) <= target < rank(hi)
      double lo = 0.0;
      double hi = 0.25;
      while (rank_at(hi) <= target && hi < 1e6) hi *= 2.0;
      for (int step = 0; step < 50; ++step) {
        const double mid = 0.5 * (lo + hi);
        (rank_at(mid) <= target ? lo : hi) = mid;
      }
      const std::size_t r = rank_at(lo);
      if (best_rank == 0 || (r >= o.gold_rank_min && r <= o.gold_rank_max)) {
        best = as_stored_query(gold_vec + lo * noise);
        best_rank = r;
      }
      if (r >= o.gold_rank_min && r <= o.gold_rank_max) break;
    }

    query_vectors.row(static_cast<Eigen::Index>(j)) = best.transpose();
    QueryMeta q;
    q.id = padded('q', j, 5);
    q.text = "synthetic query " + std::to_string(j);
    q.answers = {padded('m', gold, 6)};
    q.gold_ids = std::vector<std::string>{corpus.meta[gold].id};
    query_meta.push_back(std::move(q));
    ranks.push_back(best_rank);
  }

  std::vector<std::string> qids;
  for (const auto& q : query_meta) qids.push_back(q.id);
  QuerySet queries = QuerySet::assemble(EmbeddingMatrix(query_vectors, qids), std::move(query_meta), corpus);
  return SynthDataset{std::move(corpus), std::move(queries), std::move(ranks)};
}

void write_synthetic(const SynthDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_embeddings(dir / "corpus.emb", data.corpus.vectors.data());
  save_corpus_meta(dir / "corpus.jsonl", data.corpus.meta);
  save_embeddings(dir / "queries.emb", data.queries.vectors.data());
  save_query_meta(dir / "queries.jsonl", data.queries.meta);

  ExperimentConfig config;
  config.corpus_embeddings = "corpus.emb";
  config.corpus_meta = "corpus.jsonl";
  config.query_embeddings = "queries.emb";
  config.query_meta = "queries.jsonl";
  config.method = Method::tour_hard;
  config.k = 10;
  config.lambda = 0.0;
  config.optimizer.eta = 0.1;
  config.optimizer.max_iters = 3;
  config.rocchio.k_prime = 1;
  config.out = "report.jsonl";
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) throw DataError("cannot write " + (dir / "config.json").string());
  out << config_to_json(config) << '\n';
}

}  // namespace tour
