#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace eagle {

struct EmbeddingRecord {
  std::string id;
  std::string cohort;
  std::vector<float> vector;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

struct SearchMatch {
  std::string id;
  std::string cohort;
  double similarity = 0;
  std::map<std::string, std::string> metadata;
};

struct SearchOptions {
  std::size_t top_k = 3;
  std::optional<std::string> cohort;
  std::optional<std::string> exclude_id;
};

/// In-memory slide/patient embedding store with exact cosine search.
/// Searches take a shared lock, additions an exclusive one.
class EmbeddingStore {
public:
  EmbeddingStore() = default;
  EmbeddingStore(const EmbeddingStore& other);
  EmbeddingStore& operator=(const EmbeddingStore& other);

  /// Throws DuplicateId, DimMismatch, or InvalidArgument for zero-norm or
  /// non-finite vectors.
  void add(EmbeddingRecord record);

  std::size_t size() const;
  std::size_t dim() const;
  std::optional<EmbeddingRecord> get(const std::string& id) const;
  std::vector<std::string> ids() const;

  /// Brute-force scan over L2-normalized vectors, descending similarity,
  /// ties by id. Throws DimMismatch, EmptyStore (nothing left after
  /// filtering) or InvalidArgument for a zero query.
  std::vector<SearchMatch> search(std::span<const float> query, const SearchOptions& opts = {}) const;
  /// Searches with a stored record as the query, excluding the record itself.
  std::vector<SearchMatch> search_by_id(const std::string& id, SearchOptions opts = {}) const;

  void save(const std::filesystem::path& path) const;
  static EmbeddingStore load(const std::filesystem::path& path);

private:
  mutable std::shared_mutex mutex_;
  std::size_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::vector<float> normalized_;  // records_.size() x dim_
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace eagle
