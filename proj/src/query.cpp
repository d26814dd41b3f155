#include "topodiff/query.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "topodiff/rng.hpp"

namespace topodiff {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> fallback_embedding(std::string_view text, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    Rng rng(fnv1a(token));
    for (auto& v : out) v += 2.0 * uniform01(rng) - 1.0;
    token.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (auto& v : out) v /= peak;
  return out;
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file: " + path);
  nlohmann::json doc;
  in >> doc;
  if (!doc.is_object()) throw std::runtime_error("embedding file must map task ids to vectors");
  EmbeddingTable table;
  for (auto& [key, value] : doc.items()) table.insert(key, value.get<std::vector<double>>());
  return table;
}

void EmbeddingTable::insert(std::string task_id, std::vector<double> embedding) {
  for (double v : embedding) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite embedding entry for task " + task_id);
  }
  table_[std::move(task_id)] = std::move(embedding);
}

const std::vector<double>* EmbeddingTable::find(const std::string& task_id) const {
  auto it = table_.find(task_id);
  return it == table_.end() ? nullptr : &it->second;
}

QueryContext make_query(std::string task_id, std::string text, std::size_t dim, const EmbeddingTable* table) {
  QueryContext q;
  if (table != nullptr) {
    if (const auto* e = table->find(task_id)) {
      if (e->size() != dim) {
        throw std::invalid_argument("embedding for task " + task_id + " has dimension " +
                                    std::to_string(e->size()) + ", expected " + std::to_string(dim));
      }
      q.embedding = *e;
    }
  }
  if (q.embedding.empty()) q.embedding = fallback_embedding(text, dim);
  q.task_id = std::move(task_id);
  q.text = std::move(text);
  return q;
}

}  // namespace topodiff
