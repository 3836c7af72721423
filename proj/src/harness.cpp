#include "tour/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace tour {

using nlohmann::json;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::rerank: return "rerank";
    case Method::rocchio: return "rocchio";
    case Method::tour_hard: return "tour-hard";
    case Method::tour_soft: return "tour-soft";
  }
  return "baseline";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::baseline, Method::rerank, Method::rocchio, Method::tour_hard, Method::tour_soft}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(LabelerKind k) {
  switch (k) {
    case LabelerKind::oracle: return "oracle";
    case LabelerKind::synthetic: return "synthetic";
    case LabelerKind::remote: return "remote";
  }
  return "oracle";
}

LabelerKind parse_labeler_kind(std::string_view name) {
  for (LabelerKind k : {LabelerKind::oracle, LabelerKind::synthetic, LabelerKind::remote}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown labeler '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (k == 0) throw ConfigError("k must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (method == Method::tour_hard || method == Method::tour_soft) {
    OptimizerConfig o = optimizer;
    o.k = k;
    o.validate();
  }
  if (method == Method::rocchio) {
    rocchio.validate();
    if (rocchio.k_prime >= k) throw ConfigError("rocchio k_prime must be below k");
  }
  if (uses_labeler() && labeler == LabelerKind::remote && remote.base_url.empty()) {
    throw ConfigError("remote labeler selected without a remote_url");
  }
  for (auto ek : eval_k) {
    if (ek == 0) throw ConfigError("eval_k values must be positive");
  }
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.empty() || path.is_absolute() || base.empty()) return path;
  return base / path;
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  ExperimentConfig c;
  try {
    c.corpus_embeddings = resolve(base_dir, j.value("corpus_embeddings", std::string{}));
    c.corpus_meta = resolve(base_dir, j.value("corpus_meta", std::string{}));
    c.query_embeddings = resolve(base_dir, j.value("query_embeddings", std::string{}));
    c.query_meta = resolve(base_dir, j.value("query_meta", std::string{}));
    if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
    c.k = j.value("k", c.k);
    c.lambda = j.value("lambda", c.lambda);

    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      c.optimizer.eta = o.value("eta", c.optimizer.eta);
      c.optimizer.max_iters = o.value("max_iters", c.optimizer.max_iters);
      c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      c.optimizer.p = o.value("p", c.optimizer.p);
      c.optimizer.tau = o.value("tau", c.optimizer.tau);
    }
    if (j.contains("rocchio")) {
      const auto& r = j["rocchio"];
      c.rocchio.alpha = r.value("alpha", c.rocchio.alpha);
      c.rocchio.beta = r.value("beta", c.rocchio.beta);
      c.rocchio.gamma = r.value("gamma", c.rocchio.gamma);
      c.rocchio.k_prime = r.value("k_prime", c.rocchio.k_prime);
      c.rocchio.iterations = r.value("iterations", c.rocchio.iterations);
    }
    if (j.contains("labeler")) {
      const auto& l = j["labeler"];
      if (l.is_string()) {
        c.labeler = parse_labeler_kind(l.get<std::string>());
      } else {
        if (l.contains("kind")) c.labeler = parse_labeler_kind(l["kind"].get<std::string>());
        c.remote.base_url = l.value("remote_url", c.remote.base_url);
        c.remote.timeout = std::chrono::milliseconds(l.value("timeout_ms", c.remote.timeout.count()));
        c.remote.retries = l.value("retries", c.remote.retries);
        c.remote.max_batch = l.value("max_batch", c.remote.max_batch);
      }
    }
    c.workers = j.value("workers", c.workers);
    c.out = resolve(base_dir, j.value("out", std::string{}));
    c.seed = j.value("seed", c.seed);
    c.eval_k = j.value("eval_k", c.eval_k);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config field: ") + e.what());
  }
  c.optimizer.k = c.k;
  c.optimizer.variant = c.method == Method::tour_soft ? Variant::soft : Variant::hard;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j{{"corpus_embeddings", c.corpus_embeddings.string()},
         {"corpus_meta", c.corpus_meta.string()},
         {"query_embeddings", c.query_embeddings.string()},
         {"query_meta", c.query_meta.string()},
         {"method", to_string(c.method)},
         {"k", c.k},
         {"lambda", c.lambda},
         {"optimizer",
          {{"eta", c.optimizer.eta},
           {"max_iters", c.optimizer.max_iters},
           {"momentum", c.optimizer.momentum},
           {"weight_decay", c.optimizer.weight_decay},
           {"p", c.optimizer.p},
           {"tau", c.optimizer.tau}}},
         {"rocchio",
          {{"alpha", c.rocchio.alpha},
           {"beta", c.rocchio.beta},
           {"gamma", c.rocchio.gamma},
           {"k_prime", c.rocchio.k_prime},
           {"iterations", c.rocchio.iterations}}},
         {"labeler",
          {{"kind", to_string(c.labeler)},
           {"remote_url", c.remote.base_url},
           {"timeout_ms", c.remote.timeout.count()},
           {"retries", c.remote.retries},
           {"max_batch", c.remote.max_batch}}},
         {"workers", c.workers},
         {"out", c.out.string()},
         {"seed", c.seed},
         {"eval_k", c.eval_k}};
  return j.dump(2);
}

double aggregate_scores(double sim, double s, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("aggregate_scores: lambda must lie in [0, 1]");
  return lambda * s + (1.0 - lambda) * sim;
}

// ---------------------------------------------------------------------------

Metrics evaluate(std::span<const QueryRow> rows, std::span<const QueryMeta> queries,
                 std::span<const CorpusMeta> corpus, std::span<const std::size_t> k_values) {
  std::unordered_map<std::string, const QueryMeta*> query_by_id;
  for (const auto& q : queries) query_by_id.emplace(q.id, &q);
  std::unordered_map<std::string, const CorpusMeta*> context_by_id;
  for (const auto& c : corpus) context_by_id.emplace(c.id, &c);

  auto relevant = [&](const QueryMeta& q, const std::string& context_id) {
    if (q.gold_ids && std::find(q.gold_ids->begin(), q.gold_ids->end(), context_id) != q.gold_ids->end()) {
      return true;
    }
    auto it = context_by_id.find(context_id);
    return it != context_by_id.end() && contains_answer(it->second->text, q.answers);
  };

  Metrics m;
  for (auto k : k_values) {
    m.acc_at[k] = 0.0;
    m.mrr_at[k] = 0.0;
  }
  double latency_sum = 0.0;
  for (const auto& row : rows) {
    auto it = query_by_id.find(row.query_id);
    if (it == query_by_id.end()) throw DataError("report row names unknown query '" + row.query_id + "'");
    ++m.queries;
    latency_sum += row.latency_s;
    if (row.error) {
      ++m.failed;
      continue;
    }

    std::optional<std::size_t> first_hit;  // 1-based rank
    for (std::size_t r = 0; r < row.ranked.size(); ++r) {
      if (relevant(*it->second, row.ranked[r].context_id)) {
        first_hit = r + 1;
        break;
      }
    }
    if (first_hit == std::size_t{1}) m.top1_answer_match += 1.0;
    for (auto k : k_values) {
      if (first_hit && *first_hit <= k) {
        m.acc_at[k] += 1.0;
        m.mrr_at[k] += 1.0 / static_cast<double>(*first_hit);
      }
    }
  }
  if (m.queries > 0) {
    const double n = static_cast<double>(m.queries);
    m.top1_answer_match /= n;
    for (auto& [k, v] : m.acc_at) v /= n;
    for (auto& [k, v] : m.mrr_at) v /= n;
    m.mean_latency_s = latency_sum / n;
  }
  return m;
}

// ---------------------------------------------------------------------------

namespace {

void sort_by_final_score(std::vector<RankedEntry>& ranked) {
  std::sort(ranked.begin(), ranked.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    return a.context_id < b.context_id;
  });
}

std::vector<RankedEntry> by_similarity(const RetrievalResult& result) {
  std::vector<RankedEntry> ranked;
  ranked.reserve(result.size());
  for (const auto& e : result.entries) ranked.push_back({e.context_id, e.sim, e.sim, std::nullopt});
  return ranked;
}

std::vector<RankedEntry> by_aggregate(const RetrievalResult& result, const RelevanceScores& scores, double lambda) {
  std::vector<RankedEntry> ranked;
  ranked.reserve(result.size());
  for (std::size_t i = 0; i < result.size(); ++i) {
    const auto& e = result.entries[i];
    const double s = scores.scores.at(i).s;
    ranked.push_back({e.context_id, aggregate_scores(e.sim, s, lambda), e.sim, s});
  }
  sort_by_final_score(ranked);
  return ranked;
}

QueryRow run_query(const ExperimentConfig& config, const Corpus& corpus, const QueryMeta& query,
                   const VectorXd& q0, CachingLabeler* labeler) {
  QueryRow row;
  row.query_id = query.id;
  switch (config.method) {
    case Method::baseline: {
      row.ranked = by_similarity(top_k_search(corpus.vectors, q0, config.k));
      break;
    }
    case Method::rerank: {
      const RetrievalResult result = top_k_search(corpus.vectors, q0, config.k);
      if (!result.empty()) {
        const RelevanceScores scores = score_candidates(*labeler, query, candidate_meta(corpus, result));
        row.ranked = by_aggregate(result, scores, config.lambda);
      }
      break;
    }
    case Method::rocchio: {
      TourOutcome outcome = run_prf(query, q0, corpus, config.rocchio, config.k);
      row.ranked = by_similarity(outcome.final_candidates);
      row.iterations_used = outcome.iterations_used;
      row.stop_reason = std::string(to_string(outcome.stop_reason));
      row.outcome = std::move(outcome);
      break;
    }
    case Method::tour_hard:
    case Method::tour_soft: {
      OptimizerConfig opt = config.optimizer;
      opt.k = config.k;
      opt.variant = config.method == Method::tour_soft ? Variant::soft : Variant::hard;
      TourOutcome outcome = run_tour(query, q0, corpus, *labeler, opt);
      row.ranked = by_aggregate(outcome.final_candidates, outcome.final_scores, config.lambda);
      row.iterations_used = outcome.iterations_used;
      row.stop_reason = std::string(to_string(outcome.stop_reason));
      row.outcome = std::move(outcome);
      break;
    }
  }
  return row;
}

std::unique_ptr<Labeler> make_backend(const ExperimentConfig& config) {
  switch (config.labeler) {
    case LabelerKind::oracle: return std::make_unique<OracleLabeler>();
    case LabelerKind::synthetic: return std::make_unique<SyntheticLabeler>(config.seed);
    case LabelerKind::remote: return std::make_unique<RemoteLabeler>(config.remote);
  }
  return std::make_unique<OracleLabeler>();
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const Corpus& corpus, const QuerySet& queries,
                                Labeler* backend) {
  config.validate();
  if (queries.vectors.count() > 0 && corpus.vectors.count() > 0 && queries.vectors.dim() != corpus.vectors.dim()) {
    throw DimensionError("query and corpus dims differ");
  }

  std::unique_ptr<Labeler> owned;
  std::unique_ptr<CachingLabeler> cache;
  if (config.uses_labeler()) {
    if (!backend) {
      owned = make_backend(config);
      backend = owned.get();
    }
    cache = std::make_unique<CachingLabeler>(*backend);
  }

  const std::size_t n = queries.meta.size();
  std::vector<QueryRow> rows(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const QueryMeta& query = queries.meta[i];
      const auto started = std::chrono::steady_clock::now();
      QueryRow row;
      try {
        row = run_query(config, corpus, query, queries.vectors.row(i).cast<double>().transpose(), cache.get());
      } catch (const std::exception& e) {
        row = QueryRow{};
        row.query_id = query.id;
        row.error = e.what();
      }
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
      row.latency_s = std::max(elapsed.count(), 1e-9);
      if (cache) row.labeler = cache->stats_for(query.id);
      rows[i] = std::move(row);
    }
  };

  std::size_t workers = config.workers ? config.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }

  std::sort(rows.begin(), rows.end(), [](const QueryRow& a, const QueryRow& b) { return a.query_id < b.query_id; });
  ExperimentReport report;
  report.method = config.method;
  report.rows = std::move(rows);
  report.aggregate = evaluate(report.rows, queries.meta, corpus.meta, config.eval_k);
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Corpus corpus = Corpus::load(config.corpus_embeddings, config.corpus_meta);
  const QuerySet queries = QuerySet::load(config.query_embeddings, config.query_meta, corpus);
  ExperimentReport report = run_experiment(config, corpus, queries);
  if (!config.out.empty()) write_report(config.out, report, config);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

json metrics_json(const Metrics& m) {
  json acc = json::object();
  json mrr = json::object();
  for (const auto& [k, v] : m.acc_at) acc[std::to_string(k)] = v;
  for (const auto& [k, v] : m.mrr_at) mrr[std::to_string(k)] = v;
  return json{{"queries", m.queries},           {"failed", m.failed},
              {"top1_answer_match", m.top1_answer_match}, {"acc_at", acc},
              {"mrr_at", mrr},                 {"mean_latency_s", m.mean_latency_s}};
}

}  // namespace

std::string row_to_json(const QueryRow& row, bool with_timing) {
  json ranked = json::array();
  for (const auto& e : row.ranked) {
    ranked.push_back({{"id", e.context_id},
                      {"final_score", e.final_score},
                      {"sim", e.sim},
                      {"s", e.s ? json(*e.s) : json(nullptr)}});
  }
  json j{{"query_id", row.query_id},
         {"ranked", ranked},
         {"iterations_used", row.iterations_used},
         {"stop_reason", row.stop_reason ? json(*row.stop_reason) : json(nullptr)},
         {"labeler", {{"backend_calls", row.labeler.backend_calls}, {"cache_hits", row.labeler.cache_hits}}}};
  if (row.error) j["error"] = *row.error;
  if (with_timing) j["latency_s"] = row.latency_s;
  return j.dump();
}

std::string metrics_to_json(const Metrics& metrics) { return metrics_json(metrics).dump(); }

void write_report(const std::filesystem::path& path, const ExperimentReport& report, const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open report " + path.string() + " for writing");
  for (const auto& row : report.rows) out << row_to_json(row) << '\n';
  json agg = metrics_json(report.aggregate);
  agg["method"] = to_string(report.method);
  agg["corpus_meta"] = std::filesystem::absolute(config.corpus_meta).string();
  out << json{{"aggregate", agg}}.dump() << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

LoadedReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path.string());
  LoadedReport loaded;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      if (j.contains("aggregate")) {
        const auto& agg = j["aggregate"];
        if (agg.contains("corpus_meta") && agg["corpus_meta"].is_string()) {
          loaded.corpus_meta = agg["corpus_meta"].get<std::string>();
        }
        continue;
      }
      QueryRow row;
      row.query_id = j.at("query_id").get<std::string>();
      for (const auto& e : j.at("ranked")) {
        RankedEntry entry{e.at("id").get<std::string>(), e.at("final_score").get<double>(), e.at("sim").get<double>(),
                          std::nullopt};
        if (e.contains("s") && !e["s"].is_null()) entry.s = e["s"].get<double>();
        row.ranked.push_back(std::move(entry));
      }
      row.iterations_used = j.value("iterations_used", 0);
      if (j.contains("stop_reason") && j["stop_reason"].is_string()) row.stop_reason = j["stop_reason"].get<std::string>();
      if (j.contains("labeler")) {
        row.labeler.backend_calls = j["labeler"].value("backend_calls", std::uint64_t{0});
        row.labeler.cache_hits = j["labeler"].value("cache_hits", std::uint64_t{0});
      }
      if (j.contains("error")) row.error = j["error"].get<std::string>();
      row.latency_s = j.value("latency_s", 0.0);
      loaded.rows.push_back(std::move(row));
    } catch (const json::exception& e) {
      throw DataError("malformed report line in " + path.string() + ": " + e.what());
    }
  }
  return loaded;
}

}  // namespace tour
