#ifndef TOUR_EMBEDDING_STORE_HPP
#define TOUR_EMBEDDING_STORE_HPP

#include "tour/types.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tour {

/// Row-major float32 vectors with one unique string id per row.
///
/// Immutable after construction; every value is finite and ids are unique.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(RowMatrixXf data, std::vector<std::string> ids);

  std::size_t count() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }

  const RowMatrixXf& data() const { return data_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t row) const { return ids_[row]; }
  auto row(std::size_t i) const { return data_.row(static_cast<Eigen::Index>(i)); }

  std::optional<std::size_t> find(const std::string& id) const;

  /// Same values, new ids (must match count).
  EmbeddingMatrix with_ids(std::vector<std::string> ids) const;

 private:
  RowMatrixXf data_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reads the TOURMB01 binary format. Rows get ids "0", "1", ... until
/// replaced through with_ids() or the metadata loaders.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const RowMatrixXf& data);

struct RetrievalEntry {
  std::string context_id;
  std::size_t row = 0;  // row in the searched matrix
  std::size_t rank = 0;  // 1-based
  double sim = 0.0;
};

struct RetrievalResult {
  std::string query_id;
  std::vector<RetrievalEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

/// Exact maximum inner product search.
///
/// Products are accumulated in double, row by row, so the result does not
/// depend on how the scan is partitioned. Ordering is sim descending, then
/// context id ascending. Returns min(k, count) entries.
RetrievalResult top_k_search(const EmbeddingMatrix& matrix, const Eigen::Ref<const VectorXd>& query,
                             std::size_t k, std::size_t partitions = 1);

/// Inner product of one stored row with a query, in double.
double row_dot(const EmbeddingMatrix& matrix, std::size_t row, const Eigen::Ref<const VectorXd>& query);

/// Candidate rows of a result stacked in rank order, widened to double.
RowMatrixXd gather_candidates(const EmbeddingMatrix& matrix, const RetrievalResult& result);

// ---------------------------------------------------------------------------
// Sidecar metadata

struct CorpusMeta {
  std::string id;
  std::string title;
  std::string text;
};

struct QueryMeta {
  std::string id;
  std::string text;
  std::vector<std::string> answers;
  std::optional<std::vector<std::string>> gold_ids;
};

std::vector<CorpusMeta> load_corpus_meta(const std::filesystem::path& path);
std::vector<QueryMeta> load_query_meta(const std::filesystem::path& path);
void save_corpus_meta(const std::filesystem::path& path, const std::vector<CorpusMeta>& records);
void save_query_meta(const std::filesystem::path& path, const std::vector<QueryMeta>& records);

/// Context vectors plus their text, aligned row for row.
struct Corpus {
  EmbeddingMatrix vectors;
  std::vector<CorpusMeta> meta;

  static Corpus assemble(EmbeddingMatrix vectors, std::vector<CorpusMeta> meta);
  static Corpus load(const std::filesystem::path& embeddings, const std::filesystem::path& metadata);
};

struct QuerySet {
  EmbeddingMatrix vectors;
  std::vector<QueryMeta> meta;

  /// Checks ids, dims and that every gold id exists in the corpus.
  static QuerySet assemble(EmbeddingMatrix vectors, std::vector<QueryMeta> meta, const Corpus& corpus);
  static QuerySet load(const std::filesystem::path& embeddings, const std::filesystem::path& metadata,
                       const Corpus& corpus);
};

}  // namespace tour

#endif  // TOUR_EMBEDDING_STORE_HPP
