// tour: command-line front end.
//
//   tour run --config cfg.json [--method tour-hard --k 10 --eta 1.2 ...]
//   tour eval --report report.jsonl --queries queries.jsonl --k 1,5,20,100
//   tour gen-synth --n-contexts 1000 --n-queries 200 --dim 32 --gold-rank-range 1..8 --seed 7 --out-dir data/

#include "tour/harness.hpp"
#include "tour/synth.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw tour::ConfigError("rank range must look like A..B, got '" + text + "'");
  try {
    return {std::stoul(text.substr(0, dots)), std::stoul(text.substr(dots + 2))};
  } catch (const std::exception&) {
    throw tour::ConfigError("rank range must look like A..B, got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time query optimization for dense retrieval"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run one retrieval method over a query set");
  std::string config_path;
  std::optional<std::string> method, labeler, remote_url, out;
  std::optional<std::size_t> k, workers;
  std::optional<double> eta, p, tau, lambda;
  std::optional<int> max_iters;
  std::optional<std::uint64_t> seed;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--method", method, "baseline | rerank | rocchio | tour-hard | tour-soft");
  run->add_option("--k", k, "Retrieval top-k");
  run->add_option("--eta", eta, "Learning rate");
  run->add_option("--max-iters", max_iters, "Maximum optimization iterations");
  run->add_option("--p", p, "Pseudo-positive mass threshold");
  run->add_option("--tau", tau, "Labeler softmax temperature");
  run->add_option("--lambda", lambda, "Weight of the labeler score in the final ranking");
  run->add_option("--labeler", labeler, "oracle | synthetic | remote");
  run->add_option("--remote-url", remote_url, "Scoring service base URL");
  run->add_option("--workers", workers, "Worker threads (0 = all cores)");
  run->add_option("--seed", seed, "Seed for the synthetic labeler");
  run->add_option("--out", out, "Report path (JSON lines)");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a report against query metadata");
  std::string report_path, queries_path;
  std::optional<std::string> corpus_path;
  std::vector<std::size_t> eval_k{1, 5, 20, 100};
  eval->add_option("--report", report_path, "Report written by `tour run`")->required()->check(CLI::ExistingFile);
  eval->add_option("--queries", queries_path, "Query metadata (JSON lines)")->required()->check(CLI::ExistingFile);
  eval->add_option("--k", eval_k, "Comma-separated cutoffs")->delimiter(',');
  eval->add_option("--corpus", corpus_path, "Corpus metadata for answer matching (defaults to the one in the report)");

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic corpus and query set");
  tour::SynthOptions synth;
  std::string rank_range = "1..8";
  std::string out_dir;
  gen->add_option("--n-contexts", synth.n_contexts)->required();
  gen->add_option("--n-queries", synth.n_queries)->required();
  gen->add_option("--dim", synth.dim)->required();
  gen->add_option("--gold-rank-range", rank_range, "Initial gold rank range A..B")->capture_default_str();
  gen->add_option("--seed", synth.seed)->capture_default_str();
  gen->add_option("--out-dir", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      tour::ExperimentConfig config = tour::load_config(config_path);
      if (method) config.method = tour::parse_method(*method);
      if (k) config.k = *k;
      if (eta) config.optimizer.eta = *eta;
      if (max_iters) config.optimizer.max_iters = *max_iters;
      if (p) config.optimizer.p = *p;
      if (tau) config.optimizer.tau = *tau;
      if (lambda) config.lambda = *lambda;
      if (labeler) config.labeler = tour::parse_labeler_kind(*labeler);
      if (remote_url) config.remote.base_url = *remote_url;
      if (workers) config.workers = *workers;
      if (seed) config.seed = *seed;
      if (out) config.out = *out;

      const tour::ExperimentReport report = tour::run_experiment(config);
      std::cout << tour::metrics_to_json(report.aggregate) << '\n';
      for (const auto& row : report.rows) {
        if (row.error) std::cerr << "query " << row.query_id << " failed: " << *row.error << '\n';
      }
    } else if (*eval) {
      const tour::LoadedReport report = tour::read_report(report_path);
      const auto queries = tour::load_query_meta(queries_path);
      std::vector<tour::CorpusMeta> corpus;
      if (corpus_path) {
        corpus = tour::load_corpus_meta(*corpus_path);
      } else if (report.corpus_meta && std::filesystem::exists(*report.corpus_meta)) {
        corpus = tour::load_corpus_meta(*report.corpus_meta);
      }
      std::cout << tour::metrics_to_json(tour::evaluate(report.rows, queries, corpus, eval_k)) << '\n';
    } else if (*gen) {
      std::tie(synth.gold_rank_min, synth.gold_rank_max) = parse_range(rank_range);
      const tour::SynthDataset data = tour::generate_synthetic(synth);
      tour::write_synthetic(data, out_dir);
      std::cout << "wrote " << data.corpus.vectors.count() << " contexts and " << data.queries.vectors.count()
                << " queries to " << out_dir << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "tour: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
