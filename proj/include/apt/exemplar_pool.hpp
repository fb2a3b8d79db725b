#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apt/prompt_doc.hpp"

namespace apt {

struct PoolEntry {
  std::string id;
  std::string text;
  std::string label;
  std::vector<double> embedding;
};

/// Gold-labelled candidates for few-shot demonstrations.
class ExemplarPool {
 public:
  void add(PoolEntry entry);
  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  friend std::vector<Exemplar> top_n_exemplars(const ExemplarPool&, std::span<const double>, std::size_t,
                                               std::optional<std::string_view>);
  std::vector<PoolEntry> entries_;
  std::vector<double> norms_;
};

/// dot(a,b) / (|a||b|), clamped to [-1, 1].
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// The `n` entries most similar to `query`, by similarity descending then id ascending.
std::vector<Exemplar> top_n_exemplars(const ExemplarPool& pool, std::span<const double> query, std::size_t n,
                                      std::optional<std::string_view> exclude_id = std::nullopt);

}  // namespace apt
