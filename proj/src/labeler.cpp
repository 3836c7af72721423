#include "tour/labeler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace tour {

VectorXd RelevanceScores::values() const {
  VectorXd v(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) v[static_cast<Eigen::Index>(i)] = scores[i].s;
  return v;
}

RelevanceScores score_candidates(Labeler& labeler, const QueryMeta& query, std::span<const CorpusMeta> candidates) {
  if (candidates.empty()) throw ContractError("score_candidates: empty candidate list for query '" + query.id + "'");

  std::vector<double> raw;
  try {
    raw = labeler.score(query, candidates);
  } catch (const TransportError& e) {
    throw TransportError("query '" + query.id + "': " + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError("query '" + query.id + "': " + e.what());
  }
  if (raw.size() != candidates.size()) {
    throw ValidationError("query '" + query.id + "': labeler returned " + std::to_string(raw.size()) +
                          " scores for " + std::to_string(candidates.size()) + " candidates");
  }

  RelevanceScores out{query.id, {}};
  out.scores.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw ValidationError("query '" + query.id + "': non-finite score for context '" + candidates[i].id + "'");
    }
    out.scores.push_back({candidates[i].id, raw[i]});
  }
  return out;
}

std::string normalize_answer(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto u = static_cast<unsigned char>(text[i]);
    // U+2000..U+206F (dashes, quotes, ellipsis) is E2 80 xx / E2 81 xx; treat as a word break.
    if (u == 0xE2 && i + 2 < text.size() && (static_cast<unsigned char>(text[i + 1]) == 0x80 ||
                                                  static_cast<unsigned char>(text[i + 1]) == 0x81)) {
      stripped.push_back(' ');
      i += 2;
      continue;
    }
    if (u < 0x80 && std::ispunct(u)) continue;
    stripped.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : text[i]);
  }

  std::istringstream words(stripped);
  std::string word;
  std::string out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

bool contains_answer(std::string_view text, std::span<const std::string> answers) {
  const std::string haystack = " " + normalize_answer(text) + " ";
  return std::any_of(answers.begin(), answers.end(), [&](const std::string& answer) {
    const std::string needle = normalize_answer(answer);
    return !needle.empty() && haystack.find(" " + needle + " ") != std::string::npos;
  });
}

bool is_relevant(const QueryMeta& query, const CorpusMeta& candidate) {
  if (query.gold_ids &&
      std::find(query.gold_ids->begin(), query.gold_ids->end(), candidate.id) != query.gold_ids->end()) {
    return true;
  }
  return contains_answer(candidate.text, query.answers);
}

double oracle_score(const QueryMeta& query, const CorpusMeta& candidate) {
  const bool has_gold = query.gold_ids && !query.gold_ids->empty();
  if (query.answers.empty() && !has_gold) {
    throw ConfigError("oracle labeler: query '" + query.id + "' has neither answers nor gold ids");
  }
  return is_relevant(query, candidate) ? 1.0 : -1.0;
}

std::vector<double> OracleLabeler::score(const QueryMeta& query, std::span<const CorpusMeta> candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(oracle_score(query, c));
  return out;
}

namespace {

// FNV-1a, then a splitmix64 finalizer.
std::uint64_t mix_hash(std::uint64_t seed, std::string_view a, std::string_view b) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  auto feed = [&h](std::string_view s) {
    for (char ch : s) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  feed(a);
  feed(b);
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

}  // namespace

std::vector<double> SyntheticLabeler::score(const QueryMeta& query, std::span<const CorpusMeta> candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    const std::uint64_t h = mix_hash(seed_, query.id, c.id);
    out.push_back(static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0);
  }
  return out;
}

std::vector<double> CachingLabeler::score(const QueryMeta& query, std::span<const CorpusMeta> candidates) {
  std::vector<double> out(candidates.size());
  std::vector<CorpusMeta> batch;
  std::unordered_map<std::string, std::size_t> batch_slot;
  std::vector<std::pair<std::size_t, std::size_t>> pending;  // (output index, batch index)
  {
    std::lock_guard lock(mutex_);
    const auto& per_query = cache_[query.id];
    auto& stats = stats_[query.id];
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (auto it = per_query.find(candidates[i].id); it != per_query.end()) {
        out[i] = it->second;
        ++stats.cache_hits;
        continue;
      }
      auto [slot, fresh] = batch_slot.emplace(candidates[i].id, batch.size());
      if (fresh) {
        batch.push_back(candidates[i]);
        ++stats.backend_calls;
      } else {
        ++stats.cache_hits;
      }
      pending.emplace_back(i, slot->second);
    }
  }
  if (batch.empty()) return out;

  const std::vector<double> scores = backend_.score(query, batch);
  if (scores.size() != batch.size()) {
    throw ValidationError("caching labeler: backend returned " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(batch.size()) + " candidates");
  }

  std::lock_guard lock(mutex_);
  auto& per_query = cache_[query.id];
  for (std::size_t b = 0; b < batch.size(); ++b) per_query.emplace(batch[b].id, scores[b]);
  for (auto [i, b] : pending) out[i] = scores[b];
  return out;
}

LabelerStats CachingLabeler::stats_for(const std::string& query_id) const {
  std::lock_guard lock(mutex_);
  auto it = stats_.find(query_id);
  return it == stats_.end() ? LabelerStats{} : it->second;
}

LabelerStats CachingLabeler::total() const {
  std::lock_guard lock(mutex_);
  LabelerStats sum;
  for (const auto& [id, s] : stats_) {
    sum.backend_calls += s.backend_calls;
    sum.cache_hits += s.cache_hits;
  }
  return sum;
}

std::string render_context(const CorpusMeta& candidate) {
  if (candidate.title.empty()) return candidate.text;
  return candidate.title + " " + candidate.text;
}

}  // namespace tour
