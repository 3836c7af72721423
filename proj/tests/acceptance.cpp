// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include "test_util.hpp"
#include "tour/harness.hpp"
#include "tour/objectives.hpp"
#include "tour/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

using namespace tour;
using namespace tour::testing;

namespace {

constexpr double kGradRelTol = 1e-4;
constexpr double kFiniteDiffStep = 1e-4;
constexpr double kRocchioTol = 1e-6;
constexpr double kFixedPointGradTol = 1e-8;
constexpr double kFixedPointLossTol = 1e-12;
constexpr double kOneHotTol = 1e-10;
constexpr double kMinAcc1GainPoints = 20.0;
constexpr int kMaxIters = 3;

struct Verdict {
  bool pass = true;
  std::string detail;
};

struct Suite {
  int failures = 0;
  void run(const std::string& name, const std::function<Verdict()>& body) {
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("%s  %-34s %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

template <typename Loss>
VectorXd central_difference(Loss loss, const VectorXd& q) {
  VectorXd g(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    VectorXd up = q, down = q;
    up[i] += kFiniteDiffStep;
    down[i] -= kFiniteDiffStep;
    g[i] = (loss(up) - loss(down)) / (2 * kFiniteDiffStep);
  }
  return g;
}

Verdict gradient_fidelity() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> dim(1, 64), kk(2, 20);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst_hard = 0.0, worst_soft = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim(rng), k = kk(rng);
    const RowMatrixXd c = gaussian_matrix(rng, k, d, 1.0 / std::sqrt(d));
    const VectorXd q = gaussian_vector(rng, d);

    std::vector<std::size_t> hard(static_cast<std::size_t>(k));
    std::iota(hard.begin(), hard.end(), 0);
    std::shuffle(hard.begin(), hard.end(), rng);
    hard.resize(std::uniform_int_distribution<std::size_t>(1, static_cast<std::size_t>(k - 1))(rng));
    const std::span<const std::size_t> h(hard);
    const VectorXd gh = grad_hard(q, c, h);
    const VectorXd fh = central_difference([&](const VectorXd& x) { return loss_hard(x, c, h); }, q);
    worst_hard = std::max(worst_hard, (gh - fh).norm() / fh.norm());

    VectorXd target(k);
    for (auto& x : target) x = unif(rng);
    target /= target.sum();
    const VectorXd gs = grad_soft(q, c, target);
    const VectorXd fs = central_difference([&](const VectorXd& x) { return loss_soft(x, c, target); }, q);
    worst_soft = std::max(worst_soft, (gs - fs).norm() / fs.norm());
  }
  return {worst_hard < kGradRelTol && worst_soft < kGradRelTol,
          fmt("100+100 instances, worst rel err hard %.2e soft %.2e (tol %.0e)", worst_hard, worst_soft, kGradRelTol)};
}

Verdict rocchio_equivalence() {
  std::mt19937_64 rng(20240602);
  std::uniform_real_distribution<double> unif(0.05, 1.5);
  double worst = 0.0;
  int n = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index k = trial % 2 ? 10 : 5;
    const std::size_t kp = (trial / 2) % 2 ? 3 : 1;
    const Eigen::Index d = 4 + trial % 13;
    // All candidates share the same component along q, so every q.c_i is equal.
    RowMatrixXd c = gaussian_matrix(rng, k, d);
    c.col(0).setConstant(unif(rng));
    const VectorXd q = unif(rng) * VectorXd::Unit(d, 0);
    const double eta = unif(rng);

    std::vector<std::size_t> hard(kp);
    std::iota(hard.begin(), hard.end(), 0);
    OptimizerConfig sgd;
    sgd.eta = eta;
    sgd.max_iters = 1;
    sgd.momentum = 0.0;
    sgd.weight_decay = 0.0;
    const VectorXd stepped =
        apply_update(QueryState<double>::start("q", q), grad_hard(q, c, std::span<const std::size_t>(hard)), sgd).q;
    const double bg = eta * static_cast<double>(k - static_cast<Eigen::Index>(kp)) / static_cast<double>(k);
    const VectorXd rocchio = rocchio_update(q, c, RocchioConfig{1.0, bg, bg, kp, 1});
    worst = std::max(worst, (stepped - rocchio).cwiseAbs().maxCoeff());
    ++n;
  }
  return {worst <= kRocchioTol, fmt("%d constructions, k in {5,10}, k' in {1,3}, max abs diff %.2e (tol %.0e)", n,
                                    worst, kRocchioTol)};
}

Verdict kl_fixed_point() {
  std::mt19937_64 rng(20240603);
  double worst_grad = 0.0, worst_loss = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial, k = 1 + trial % 20;
    const RowMatrixXd c = gaussian_matrix(rng, k, d, 1.0 / std::sqrt(d));
    const VectorXd q = gaussian_vector(rng, d);
    const VectorXd pk = retrieval_softmax(q, c);
    worst_grad = std::max(worst_grad, grad_soft(q, c, pk).cwiseAbs().maxCoeff());
    worst_loss = std::max(worst_loss, std::abs(loss_soft(q, c, pk)));
  }
  return {worst_grad <= kFixedPointGradTol && worst_loss <= kFixedPointLossTol,
          fmt("50 instances, max |grad| %.2e (tol %.0e), max loss %.2e (tol %.0e)", worst_grad, kFixedPointGradTol,
              worst_loss, kFixedPointLossTol)};
}

Verdict one_hot_consistency() {
  std::mt19937_64 rng(20240604);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 64, k = 1 + trial % 20;
    const RowMatrixXd c = gaussian_matrix(rng, k, d, 0.5);
    const VectorXd q = gaussian_vector(rng, d);
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(k - 1))(rng);
    const std::vector<std::size_t> hard{i};
    const VectorXd diff = grad_soft(q, c, VectorXd::Unit(k, static_cast<Eigen::Index>(i))) -
                          grad_hard(q, c, std::span<const std::size_t>(hard));
    worst = std::max(worst, diff.cwiseAbs().maxCoeff());
  }
  return {worst <= kOneHotTol, fmt("50 instances, max abs diff %.2e (tol %.0e)", worst, kOneHotTol)};
}

Verdict search_exactness() {
  std::mt19937_64 rng(20240605);
  const std::size_t rows[] = {1, 7, 50, 100, 333, 1000, 2048, 5000, 9999, 10000};
  const std::size_t dims[] = {1, 3, 8, 16, 32, 64};
  int mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = rows[trial % 10];
    const std::size_t d = trial == 19 ? 64 : dims[trial % 6];
    RowMatrixXf data = gaussian_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)).cast<float>();
    // Duplicated rows produce exact ties.
    if (n > 10) data.row(static_cast<Eigen::Index>(n / 2)) = data.row(1);
    const EmbeddingMatrix m(data, numbered_ids(n));
    const VectorXd q = gaussian_vector(rng, static_cast<Eigen::Index>(d));

    std::vector<std::pair<std::string, double>> oracle;
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(data(r, j)) * q[j];
      oracle.emplace_back(m.id(r), acc);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    for (std::size_t k : {std::size_t{1}, std::size_t{10}, std::size_t{100}}) {
      for (std::size_t parts : {1u, 4u}) {
        const auto got = top_k_search(m, q, k, parts);
        if (got.size() != std::min(k, n)) {
          ++mismatches;
          continue;
        }
        for (std::size_t i = 0; i < got.size(); ++i) {
          if (got.entries[i].context_id != oracle[i].first || got.entries[i].sim != oracle[i].second ||
              got.entries[i].rank != i + 1) {
            ++mismatches;
            break;
          }
        }
      }
    }
  }
  return {mismatches == 0, fmt("20 matrices up to 10000x64, k in {1,10,100}, %d mismatching results", mismatches)};
}

// Shared synthetic benchmark.
struct Benchmark {
  SynthDataset data;
  ExperimentReport baseline, rocchio, tour;
  std::size_t in_2_to_8 = 0;
};

ExperimentConfig benchmark_config(Method m) {
  ExperimentConfig c;
  c.method = m;
  c.k = 10;
  c.lambda = 0.0;
  c.labeler = LabelerKind::oracle;
  c.optimizer.eta = 0.1;
  c.optimizer.max_iters = kMaxIters;
  c.optimizer.p = 0.5;
  c.optimizer.tau = 0.5;
  c.rocchio = RocchioConfig{1.0, 0.5, 0.5, 1, kMaxIters};
  return c;
}

const Benchmark& benchmark() {
  static const Benchmark b = [] {
    SynthOptions o;
    o.n_contexts = 1000;
    o.n_queries = 200;
    o.dim = 32;
    o.gold_rank_min = 1;
    o.gold_rank_max = 8;
    o.seed = 20240606;
    Benchmark out{generate_synthetic(o), {}, {}, {}, 0};
    for (auto r : out.data.initial_gold_rank) out.in_2_to_8 += (r >= 2 && r <= 8);
    out.baseline = run_experiment(benchmark_config(Method::baseline), out.data.corpus, out.data.queries);
    out.rocchio = run_experiment(benchmark_config(Method::rocchio), out.data.corpus, out.data.queries);
    out.tour = run_experiment(benchmark_config(Method::tour_hard), out.data.corpus, out.data.queries);
    return out;
  }();
  return b;
}

double gold_mass(const IterationTrace& round, const Corpus& corpus, const std::string& gold) {
  const RowMatrixXd cands = gather_candidates(corpus.vectors, round.candidates);
  const VectorXd pk = retrieval_softmax(round.q, cands);
  for (std::size_t i = 0; i < round.candidates.size(); ++i) {
    if (round.candidates.entries[i].context_id == gold) return pk[static_cast<Eigen::Index>(i)];
  }
  return 0.0;
}

Verdict synthetic_improvement() {
  const Benchmark& b = benchmark();
  const double base = b.baseline.aggregate.acc_at.at(1);
  const double roc = b.rocchio.aggregate.acc_at.at(1);
  const double tour = b.tour.aggregate.acc_at.at(1);
  const std::size_t n = b.data.queries.meta.size();

  std::size_t tracked = 0, decreasing = 0;
  for (const auto& row : b.tour.rows) {
    const auto& trace = row.outcome->trace;
    const std::string& gold = b.data.queries.meta[std::stoul(row.query_id.substr(1))].gold_ids->front();
    if (gold_mass(trace.front(), b.data.corpus, gold) == 0.0) continue;
    ++tracked;
    for (std::size_t t = 1; t < trace.size(); ++t) {
      if (gold_mass(trace[t], b.data.corpus, gold) < gold_mass(trace[t - 1], b.data.corpus, gold)) {
        ++decreasing;
        break;
      }
    }
  }

  const bool calibrated = 2 * b.in_2_to_8 >= n;
  const bool gain = (tour - base) * 100.0 >= kMinAcc1GainPoints;
  const bool beats_rocchio = tour >= roc;
  const bool monotone = decreasing == 0;
  return {calibrated && gain && beats_rocchio && monotone,
          fmt("gold rank 2..8: %zu/%zu; Acc@1 baseline %.3f rocchio %.3f tour-hard %.3f (gain %.1f pp, need %.0f); "
              "gold mass decreased for %zu/%zu queries",
              b.in_2_to_8, n, base, roc, tour, (tour - base) * 100.0, kMinAcc1GainPoints, decreasing, tracked)};
}

Verdict efficiency_accounting() {
  const Benchmark& b = benchmark();
  std::size_t cache_bad = 0, early = 0, early_bad = 0, over = 0;
  for (std::size_t j = 0; j < b.tour.rows.size(); ++j) {
    const QueryRow& row = b.tour.rows[j];
    const TourOutcome& out = *row.outcome;
    std::set<std::string> distinct;
    for (const auto& round : out.trace) {
      for (const auto& e : round.candidates.entries) distinct.insert(e.context_id);
    }
    if (row.labeler.backend_calls != distinct.size()) ++cache_bad;
    if (row.iterations_used > kMaxIters) ++over;

    const auto& first = out.trace.front();
    const std::size_t qi = b.data.queries.vectors.find(row.query_id).value();
    const VectorXd q0 = b.data.queries.vectors.row(qi).cast<double>().transpose();
    const PseudoLabels labels = make_pseudo_labels(first.scores.values(), 0.5, 0.5);
    if (labels.in_hard(0)) {
      ++early;
      const bool exact = out.final_q.size() == q0.size() &&
                         std::memcmp(out.final_q.data(), q0.data(), sizeof(double) * q0.size()) == 0;
      if (row.iterations_used != 0 || !exact) ++early_bad;
    }
  }
  return {cache_bad == 0 && early_bad == 0 && over == 0 && early > 0,
          fmt("cache mismatches %zu; early stops %zu (violations %zu); iteration overruns %zu", cache_bad, early,
              early_bad, over)};
}

Verdict determinism() {
  const Benchmark& b = benchmark();
  int diffs = 0;
  for (Method m : {Method::baseline, Method::rerank, Method::rocchio, Method::tour_hard, Method::tour_soft}) {
    ExperimentConfig c = benchmark_config(m);
    const ExperimentReport first = run_experiment(c, b.data.corpus, b.data.queries);
    c.workers = 3;
    const ExperimentReport second = run_experiment(c, b.data.corpus, b.data.queries);
    for (std::size_t i = 0; i < first.rows.size(); ++i) {
      if (row_to_json(first.rows[i], false) != row_to_json(second.rows[i], false)) ++diffs;
    }
  }
  return {diffs == 0, fmt("5 methods x 200 queries, %d differing rows", diffs)};
}

}  // namespace

int main() {
  Suite suite;
  suite.run("gradient fidelity", gradient_fidelity);
  suite.run("rocchio equivalence", rocchio_equivalence);
  suite.run("kl fixed point", kl_fixed_point);
  suite.run("one-hot consistency", one_hot_consistency);
  suite.run("search exactness", search_exactness);
  suite.run("synthetic end-to-end improvement", synthetic_improvement);
  suite.run("efficiency accounting", efficiency_accounting);
  suite.run("determinism", determinism);
  std::printf("%s: %d criteria failed\n", suite.failures ? "FAILED" : "OK", suite.failures);
  return suite.failures ? 1 : 0;
}
