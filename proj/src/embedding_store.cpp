#include "tour/embedding_store.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>
#include <unordered_set>

namespace tour {

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'O', 'U', 'R', 'M', 'B', '0', '1'};
constexpr std::size_t kHeaderBytes = 16;

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), bytes.size());
}

struct Scored {
  std::size_t row;
  double sim;
};

// Total order used everywhere: sim descending, id ascending.
struct RankOrder {
  const std::vector<std::string>* ids;
  bool operator()(const Scored& a, const Scored& b) const {
    if (a.sim != b.sim) return a.sim > b.sim;
    return (*ids)[a.row] < (*ids)[b.row];
  }
};

std::vector<Scored> scan_range(const EmbeddingMatrix& matrix, const Eigen::Ref<const VectorXd>& query,
                               std::size_t begin, std::size_t end, std::size_t k) {
  std::vector<Scored> scored;
  scored.reserve(end - begin);
  for (std::size_t r = begin; r < end; ++r) scored.push_back({r, row_dot(matrix, r, query)});
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    RankOrder{&matrix.ids()});
  scored.resize(keep);
  return scored;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  std::vector<nlohmann::json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<std::string> positional_ids(std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  return ids;
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(RowMatrixXf data, std::vector<std::string> ids)
    : data_(std::move(data)), ids_(std::move(ids)) {
  if (ids_.size() != count()) {
    throw ValidationError("id count " + std::to_string(ids_.size()) + " does not match row count " +
                          std::to_string(count()));
  }
  if (!data_.allFinite()) throw ValidationError("embedding matrix contains NaN or Inf");
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw ValidationError("duplicate id '" + ids_[i] + "'");
  }
}

std::optional<std::size_t> EmbeddingMatrix::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingMatrix EmbeddingMatrix::with_ids(std::vector<std::string> ids) const {
  return EmbeddingMatrix(data_, std::move(ids));
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in = open_for_read(path);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError(path.string() + ": bad magic or version (expected TOURMB01)");
  }
  const std::uint32_t count = read_u32_le(bytes.data() + 8);
  const std::uint32_t dim = read_u32_le(bytes.data() + 12);
  if (dim == 0) throw FormatError(path.string() + ": dim must be positive");

  const std::uint64_t expected = kHeaderBytes + std::uint64_t{count} * dim * 4;
  if (bytes.size() != expected) {
    throw TruncationError(path.string() + ": header declares " + std::to_string(count) + "x" +
                          std::to_string(dim) + " (" + std::to_string(expected) + " bytes), file has " +
                          std::to_string(bytes.size()));
  }

  RowMatrixXf data(count, dim);
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::uint32_t r = 0; r < count; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c, p += 4) {
      const float v = std::bit_cast<float>(read_u32_le(p));
      if (!std::isfinite(v)) {
        throw ValidationError(path.string() + ": non-finite value at row " + std::to_string(r) + ", col " +
                              std::to_string(c));
      }
      data(r, c) = v;
    }
  }
  return EmbeddingMatrix(std::move(data), positional_ids(count));
}

void save_embeddings(const std::filesystem::path& path, const RowMatrixXf& data) {
  if (data.cols() == 0) throw ConfigError("cannot write embeddings with dim 0");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  write_u32_le(out, static_cast<std::uint32_t>(data.rows()));
  write_u32_le(out, static_cast<std::uint32_t>(data.cols()));
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) write_u32_le(out, std::bit_cast<std::uint32_t>(data(r, c)));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

double row_dot(const EmbeddingMatrix& matrix, std::size_t row, const Eigen::Ref<const VectorXd>& query) {
  const float* values = matrix.data().data() + row * matrix.dim();
  double acc = 0.0;
  for (std::size_t c = 0; c < matrix.dim(); ++c) acc += static_cast<double>(values[c]) * query[c];
  return acc;
}

RetrievalResult top_k_search(const EmbeddingMatrix& matrix, const Eigen::Ref<const VectorXd>& query,
                             std::size_t k, std::size_t partitions) {
  if (k == 0) throw ConfigError("top_k_search: k must be at least 1");
  RetrievalResult result;
  if (matrix.count() == 0) return result;
  if (static_cast<std::size_t>(query.size()) != matrix.dim()) {
    throw DimensionError("query dim " + std::to_string(query.size()) + " does not match index dim " +
                         std::to_string(matrix.dim()));
  }

  const std::size_t n = matrix.count();
  partitions = std::clamp<std::size_t>(partitions, 1, n);
  std::vector<Scored> merged;
  if (partitions == 1) {
    merged = scan_range(matrix, query, 0, n, k);
  } else {
    std::vector<std::vector<Scored>> parts(partitions);
    {
      std::vector<std::jthread> workers;
      for (std::size_t p = 0; p < partitions; ++p) {
        const std::size_t begin = n * p / partitions;
        const std::size_t end = n * (p + 1) / partitions;
        workers.emplace_back([&, p, begin, end] { parts[p] = scan_range(matrix, query, begin, end, k); });
      }
    }
    for (auto& part : parts) merged.insert(merged.end(), part.begin(), part.end());
    const std::size_t keep = std::min(k, merged.size());
    std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep), merged.end(),
                      RankOrder{&matrix.ids()});
    merged.resize(keep);
  }

  result.entries.reserve(merged.size());
  for (std::size_t i = 0; i < merged.size(); ++i) {
    result.entries.push_back({matrix.id(merged[i].row), merged[i].row, i + 1, merged[i].sim});
  }
  return result;
}

RowMatrixXd gather_candidates(const EmbeddingMatrix& matrix, const RetrievalResult& result) {
  RowMatrixXd out(static_cast<Eigen::Index>(result.size()), static_cast<Eigen::Index>(matrix.dim()));
  for (std::size_t i = 0; i < result.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = matrix.row(result.entries[i].row).cast<double>();
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CorpusMeta> load_corpus_meta(const std::filesystem::path& path) {
  std::vector<CorpusMeta> records;
  for (const auto& j : read_json_lines(path)) {
    try {
      records.push_back({j.at("id").get<std::string>(), j.value("title", std::string{}),
                         j.value("text", std::string{})});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": bad corpus record: " + e.what());
    }
  }
  return records;
}

std::vector<QueryMeta> load_query_meta(const std::filesystem::path& path) {
  std::vector<QueryMeta> records;
  for (const auto& j : read_json_lines(path)) {
    try {
      QueryMeta q;
      q.id = j.at("id").get<std::string>();
      q.text = j.value("text", std::string{});
      q.answers = j.value("answers", std::vector<std::string>{});
      if (j.contains("gold_ids") && !j.at("gold_ids").is_null()) {
        q.gold_ids = j.at("gold_ids").get<std::vector<std::string>>();
      }
      records.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": bad query record: " + e.what());
    }
  }
  return records;
}

void save_corpus_meta(const std::filesystem::path& path, const std::vector<CorpusMeta>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    out << nlohmann::json{{"id", r.id}, {"title", r.title}, {"text", r.text}}.dump() << '\n';
  }
}

void save_query_meta(const std::filesystem::path& path, const std::vector<QueryMeta>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    nlohmann::json j{{"id", r.id}, {"text", r.text}, {"answers", r.answers}};
    if (r.gold_ids) j["gold_ids"] = *r.gold_ids;
    out << j.dump() << '\n';
  }
}

Corpus Corpus::assemble(EmbeddingMatrix vectors, std::vector<CorpusMeta> meta) {
  if (meta.size() != vectors.count()) {
    throw DataError("corpus metadata has " + std::to_string(meta.size()) + " records for " +
                    std::to_string(vectors.count()) + " vectors");
  }
  std::vector<std::string> ids;
  ids.reserve(meta.size());
  for (const auto& m : meta) ids.push_back(m.id);
  return Corpus{vectors.with_ids(std::move(ids)), std::move(meta)};
}

Corpus Corpus::load(const std::filesystem::path& embeddings, const std::filesystem::path& metadata) {
  return assemble(load_embeddings(embeddings), load_corpus_meta(metadata));
}

QuerySet QuerySet::assemble(EmbeddingMatrix vectors, std::vector<QueryMeta> meta, const Corpus& corpus) {
  if (meta.size() != vectors.count()) {
    throw DataError("query metadata has " + std::to_string(meta.size()) + " records for " +
                    std::to_string(vectors.count()) + " vectors");
  }
  if (vectors.count() > 0 && corpus.vectors.count() > 0 && vectors.dim() != corpus.vectors.dim()) {
    throw DimensionError("query dim " + std::to_string(vectors.dim()) + " does not match corpus dim " +
                         std::to_string(corpus.vectors.dim()));
  }
  std::vector<std::string> ids;
  ids.reserve(meta.size());
  for (const auto& m : meta) {
    if (m.gold_ids) {
      for (const auto& g : *m.gold_ids) {
        if (!corpus.vectors.find(g)) throw DataError("query '" + m.id + "' names unknown gold id '" + g + "'");
      }
    }
    ids.push_back(m.id);
  }
  return QuerySet{vectors.with_ids(std::move(ids)), std::move(meta)};
}

QuerySet QuerySet::load(const std::filesystem::path& embeddings, const std::filesystem::path& metadata,
                        const Corpus& corpus) {
  return assemble(load_embeddings(embeddings), load_query_meta(metadata), corpus);
}

}  // namespace tour
