#include "eagle/store.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include <nlohmann/json.hpp>

#include "eagle/embedding.hpp"
#include "eagle/error.hpp"

namespace eagle {

EmbeddingStore::EmbeddingStore(const EmbeddingStore& other) {
  std::shared_lock lock(other.mutex_);
  dim_ = other.dim_;
  records_ = other.records_;
  normalized_ = other.normalized_;
  index_ = other.index_;
}

EmbeddingStore& EmbeddingStore::operator=(const EmbeddingStore& other) {
  if (this == &other) return *this;
  EmbeddingStore copy(other);
  std::unique_lock lock(mutex_);
  dim_ = copy.dim_;
  records_ = std::move(copy.records_);
  normalized_ = std::move(copy.normalized_);
  index_ = std::move(copy.index_);
  return *this;
}

namespace {

double l2_norm(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

}  // namespace

void EmbeddingStore::add(EmbeddingRecord record) {
  if (record.vector.empty()) throw Error(ErrorCode::kInvalidArgument, "empty vector for " + record.id);
  for (float v : record.vector) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite vector for " + record.id);
  }
  const double norm = l2_norm(record.vector);
  if (norm == 0.0) throw Error(ErrorCode::kInvalidArgument, "zero-norm vector for " + record.id);

  std::unique_lock lock(mutex_);
  if (index_.contains(record.id)) throw Error(ErrorCode::kDuplicateId, record.id);
  if (records_.empty()) {
    dim_ = record.vector.size();
  } else if (record.vector.size() != dim_) {
    throw Error(ErrorCode::kDimMismatch, "record " + record.id + " has dim " +
                                             std::to_string(record.vector.size()) + ", store has " +
                                             std::to_string(dim_));
  }
  for (float v : record.vector) normalized_.push_back(static_cast<float>(v / norm));
  index_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
}

std::size_t EmbeddingStore::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

std::size_t EmbeddingStore::dim() const {
  std::shared_lock lock(mutex_);
  return dim_;
}

std::optional<EmbeddingRecord> EmbeddingStore::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return records_[it->second];
}

std::vector<std::string> EmbeddingStore::ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

std::vector<SearchMatch> EmbeddingStore::search(std::span<const float> query, const SearchOptions& opts) const {
  std::shared_lock lock(mutex_);
  if (records_.empty()) throw Error(ErrorCode::kEmptyStore, "store is empty");
  if (query.size() != dim_) {
    throw Error(ErrorCode::kDimMismatch, "query dim " + std::to_string(query.size()) + ", store dim " +
                                             std::to_string(dim_));
  }
  const double qn = l2_norm(query);
  if (!(qn > 0) || !std::isfinite(qn)) throw Error(ErrorCode::kInvalidArgument, "query must be finite and non-zero");
  Eigen::VectorXf q(static_cast<Eigen::Index>(dim_));
  for (std::size_t d = 0; d < dim_; ++d) q[static_cast<Eigen::Index>(d)] = static_cast<float>(query[d] / qn);

  const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> all(
      normalized_.data(), static_cast<Eigen::Index>(records_.size()), static_cast<Eigen::Index>(dim_));
  const Eigen::VectorXf sims = all * q;

  std::vector<std::size_t> candidates;
  candidates.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (opts.cohort && records_[i].cohort != *opts.cohort) continue;
    if (opts.exclude_id && records_[i].id == *opts.exclude_id) continue;
    candidates.push_back(i);
  }
  if (candidates.empty()) throw Error(ErrorCode::kEmptyStore, "no records left after filtering");

  auto better = [&](std::size_t a, std::size_t b) {
    const float sa = sims[static_cast<Eigen::Index>(a)], sb = sims[static_cast<Eigen::Index>(b)];
    if (sa != sb) return sa > sb;
    return records_[a].id < records_[b].id;
  };
  const std::size_t take = std::min(opts.top_k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(), better);
  std::vector<SearchMatch> out;
  out.reserve(take);
  for (std::size_t j = 0; j < take; ++j) {
    const auto& r = records_[candidates[j]];
    const double s = std::clamp(static_cast<double>(sims[static_cast<Eigen::Index>(candidates[j])]), -1.0, 1.0);
    out.push_back({r.id, r.cohort, s, r.metadata});
  }
  return out;
}

std::vector<SearchMatch> EmbeddingStore::search_by_id(const std::string& id, SearchOptions opts) const {
  const auto rec = get(id);
  if (!rec) throw Error(ErrorCode::kInvalidArgument, "unknown id " + id);
  opts.exclude_id = id;
  return search(rec->vector, opts);
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
  std::shared_lock lock(mutex_);
  EmbeddingContainer c;
  c.dim = static_cast<std::uint32_t>(dim_);
  c.count = records_.size();
  nlohmann::json recs = nlohmann::json::array();
  c.values.reserve(records_.size() * dim_);
  for (const auto& r : records_) {
    c.values.insert(c.values.end(), r.vector.begin(), r.vector.end());
    recs.push_back({{"id", r.id}, {"cohort", r.cohort}, {"metadata", r.metadata}});
  }
  c.trailer_json = nlohmann::json{{"kind", "store"}, {"records", recs}}.dump();
  write_container(c, path);
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  const auto c = read_container(path);
  nlohmann::json trailer;
  try {
    trailer = nlohmann::json::parse(c.trailer_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("store trailer: ") + e.what());
  }
  const auto& recs = trailer.at("records");
  if (recs.size() != c.count) throw Error(ErrorCode::kShapeMismatch, "record count mismatch in store file");
  EmbeddingStore store;
  for (std::size_t i = 0; i < c.count; ++i) {
    EmbeddingRecord r;
    r.id = recs[i].at("id").get<std::string>();
    r.cohort = recs[i].value("cohort", "");
    r.metadata = recs[i].value("metadata", std::map<std::string, std::string>{});
    r.vector.assign(c.values.begin() + static_cast<std::ptrdiff_t>(i * c.dim),
                    c.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * c.dim));
    store.add(std::move(r));
  }
  return store;
}

}  // namespace eagle
