#include "apt/exemplar_pool.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "apt/common.hpp"

namespace apt {

namespace {

double norm(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace

void ExemplarPool::add(PoolEntry entry) {
  if (entry.label.empty()) throw DataError("exemplar \"" + entry.id + "\" has no gold label");
  if (!entries_.empty() && entries_.front().embedding.size() != entry.embedding.size()) {
    throw DataError("exemplar \"" + entry.id + "\" embedding length differs from the pool");
  }
  const double n = norm(entry.embedding);
  if (!(n > 0.0)) throw DataError("exemplar \"" + entry.id + "\" has a zero-norm embedding");
  norms_.push_back(n);
  entries_.push_back(std::move(entry));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("cosine similarity of vectors with different lengths");
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw DataError("cosine similarity of a zero-norm vector");
  const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

std::vector<Exemplar> top_n_exemplars(const ExemplarPool& pool, std::span<const double> query, std::size_t n,
                                      std::optional<std::string_view> exclude_id) {
  if (n == 0) throw UsageError("exemplar count must be at least 1");
  const double qn = norm(query);
  if (!(qn > 0.0)) throw DataError("query embedding has zero norm");

  struct Scored {
    double sim;
    std::size_t index;
  };
  std::vector<Scored> scored;
  scored.reserve(pool.entries_.size());
  for (std::size_t i = 0; i < pool.entries_.size(); ++i) {
    const auto& e = pool.entries_[i];
    if (exclude_id && e.id == *exclude_id) continue;
    if (e.embedding.size() != query.size()) throw DataError("query embedding length differs from the pool");
    const double dot = std::inner_product(query.begin(), query.end(), e.embedding.begin(), 0.0);
    scored.push_back({std::clamp(dot / (qn * pool.norms_[i]), -1.0, 1.0), i});
  }
  if (scored.size() < n) {
    throw DataError("exemplar pool has " + std::to_string(scored.size()) + " candidates, fewer than n=" +
                    std::to_string(n));
  }
  auto better = [&](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return pool.entries_[a.index].id < pool.entries_[b.index].id;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  std::vector<Exemplar> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& e = pool.entries_[scored[k].index];
    out.push_back({e.id, e.text, e.label});
  }
  return out;
}

}  // namespace apt
