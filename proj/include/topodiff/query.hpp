#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace topodiff {

inline constexpr std::size_t kDefaultQueryDim = 384;

struct QueryContext {
  std::string task_id;
  std::string text;
  std::vector<double> embedding;

  friend bool operator==(const QueryContext&, const QueryContext&) = default;
};

std::uint64_t fnv1a(std::string_view bytes);

// Feature-hashed bag of lower-cased tokens: every token seeds a pseudo-random
// vector in [-1, 1]^dim, the vectors are summed and rescaled by the max entry.
// Texts sharing words share embedding directions.
std::vector<double> fallback_embedding(std::string_view text, std::size_t dim = kDefaultQueryDim);

// task_id -> embedding vector, read from a JSON object document.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  static EmbeddingTable load(const std::string& path);

  void insert(std::string task_id, std::vector<double> embedding);
  const std::vector<double>* find(const std::string& task_id) const;
  bool empty() const { return table_.empty(); }

 private:
  std::map<std::string, std::vector<double>> table_;
};

QueryContext make_query(std::string task_id, std::string text, std::size_t dim = kDefaultQueryDim,
                        const EmbeddingTable* table = nullptr);

}  // namespace topodiff
