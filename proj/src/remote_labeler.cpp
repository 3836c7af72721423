#include "tour/labeler.hpp"

#include <httplib.h>
#include <json.hpp>

namespace tour {

RemoteLabeler::RemoteLabeler(RemoteLabelerConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ConfigError("remote labeler: base_url is empty");
  if (config_.max_batch == 0) throw ConfigError("remote labeler: max_batch must be positive");
  if (config_.retries < 0) throw ConfigError("remote labeler: retries must be nonnegative");

  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("remote labeler: base_url needs a scheme: " + config_.base_url);
  const auto path_begin = config_.base_url.find('/', scheme_end + 3);
  host_ = config_.base_url.substr(0, path_begin);
  if (path_begin != std::string::npos) path_prefix_ = config_.base_url.substr(path_begin);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::vector<double> RemoteLabeler::score(const QueryMeta& query, std::span<const CorpusMeta> candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (std::size_t begin = 0; begin < candidates.size(); begin += config_.max_batch) {
    const auto batch = candidates.subspan(begin, std::min(config_.max_batch, candidates.size() - begin));
    const auto scores = score_batch(query, batch);
    out.insert(out.end(), scores.begin(), scores.end());
  }
  return out;
}

std::vector<double> RemoteLabeler::score_batch(const QueryMeta& query, std::span<const CorpusMeta> batch) {
  nlohmann::json body{{"query", query.text}, {"candidates", nlohmann::json::array()}};
  for (const auto& c : batch) body["candidates"].push_back({{"id", c.id}, {"text", render_context(c)}});
  const std::string payload = body.dump();
  const std::string endpoint = config_.base_url + "/score";

  httplib::Client client(host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  std::string last_failure;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    auto res = client.Post(path_prefix_ + "/score", payload, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ProtocolError(endpoint + " rejected request with HTTP " + std::to_string(res->status) + ": " + res->body);
    }

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(endpoint + " returned malformed JSON: " + e.what());
    }
    if (!reply.is_object() || !reply.contains("scores") || !reply["scores"].is_array()) {
      throw ProtocolError(endpoint + " response lacks a \"scores\" array");
    }
    const auto& scores = reply["scores"];
    if (scores.size() != batch.size()) {
      throw ProtocolError(endpoint + " returned " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(batch.size()) + " candidates");
    }
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) {
      if (!s.is_number()) throw ProtocolError(endpoint + " returned a non-numeric score");
      out.push_back(s.get<double>());
    }
    return out;
  }
  throw TransportError(endpoint + " unreachable after " + std::to_string(config_.retries + 1) +
                       " attempts: " + last_failure);
}

}  // namespace tour
