#ifndef TOUR_HARNESS_HPP
#define TOUR_HARNESS_HPP

#include "tour/embedding_store.hpp"
#include "tour/labeler.hpp"
#include "tour/optimizer.hpp"
#include "tour/rocchio.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tour {

enum class Method { baseline, rerank, rocchio, tour_hard, tour_soft };
enum class LabelerKind { oracle, synthetic, remote };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);
std::string_view to_string(LabelerKind k);
LabelerKind parse_labeler_kind(std::string_view name);

struct ExperimentConfig {
  std::filesystem::path corpus_embeddings;
  std::filesystem::path corpus_meta;
  std::filesystem::path query_embeddings;
  std::filesystem::path query_meta;

  Method method = Method::tour_hard;
  std::size_t k = 10;
  double lambda = 0.1;
  OptimizerConfig optimizer;
  RocchioConfig rocchio;

  LabelerKind labeler = LabelerKind::oracle;
  RemoteLabelerConfig remote;

  std::size_t workers = 0;  // 0: one per hardware thread
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::vector<std::size_t> eval_k = {1, 5, 10, 20, 100};

  void validate() const;
  bool uses_labeler() const { return method == Method::rerank || method == Method::tour_hard || method == Method::tour_soft; }
};

/// Parses the JSON config; relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

/// lambda * s + (1 - lambda) * sim.
double aggregate_scores(double sim, double s, double lambda);

struct RankedEntry {
  std::string context_id;
  double final_score = 0.0;
  double sim = 0.0;
  std::optional<double> s;
};

struct QueryRow {
  std::string query_id;
  std::vector<RankedEntry> ranked;
  int iterations_used = 0;
  std::optional<std::string> stop_reason;
  LabelerStats labeler;
  double latency_s = 0.0;
  std::optional<std::string> error;
  // In-memory only: the optimizer outcome behind rocchio and tour rows.
  std::optional<TourOutcome> outcome;
};

struct Metrics {
  std::size_t queries = 0;
  std::size_t failed = 0;
  double top1_answer_match = 0.0;
  std::map<std::size_t, double> acc_at;
  std::map<std::size_t, double> mrr_at;
  double mean_latency_s = 0.0;
};

struct ExperimentReport {
  Method method = Method::baseline;
  std::vector<QueryRow> rows;  // sorted by query id
  Metrics aggregate;
};

/// Acc@k, MRR@k and top-1 answer match. Relevance is a gold id or, when
/// `corpus` is given, an answer contained in the context text.
Metrics evaluate(std::span<const QueryRow> rows, std::span<const QueryMeta> queries,
                 std::span<const CorpusMeta> corpus, std::span<const std::size_t> k_values);

/// Runs one method over every query. Per-query failures land in the row's
/// `error`; `backend` overrides the labeler named in the config.
ExperimentReport run_experiment(const ExperimentConfig& config, const Corpus& corpus, const QuerySet& queries,
                                Labeler* backend = nullptr);
/// Loads the files named in the config, runs, and writes the report when `out` is set.
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Report line for one row. Timing fields are dropped when `with_timing` is false.
std::string row_to_json(const QueryRow& row, bool with_timing = true);
std::string metrics_to_json(const Metrics& metrics);
void write_report(const std::filesystem::path& path, const ExperimentReport& report, const ExperimentConfig& config);

struct LoadedReport {
  std::vector<QueryRow> rows;
  std::optional<std::filesystem::path> corpus_meta;  // recorded in the aggregate line, if present
};
LoadedReport read_report(const std::filesystem::path& path);

}  // namespace tour

#endif  // TOUR_HARNESS_HPP
