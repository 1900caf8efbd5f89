// SPDX-License-Identifier: Apache-2.0
/**
 * @file   oracle.hpp
 * @brief  Budgeted black-box wrapper around a frozen victim. Only ranked
 *         item ids leave this class, never scores or parameters.
 */
#pragma once

#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "recattack/recmodel.hpp"

namespace recattack {

struct QueryRecord {
  Sequence prefix;
  RankedList ranking;

  bool operator==(const QueryRecord&) const = default;
};

/// Collected (sequence, top-k response) pairs.
struct QuerySet {
  std::vector<QueryRecord> records;
  /// Set when generation stopped early on an exhausted budget.
  bool truncated = false;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

class BlackBox {
 public:
  BlackBox(RecommenderParams victim, std::size_t k, std::uint64_t budget, bool logging = true)
      : victim_(std::make_shared<const RecommenderParams>(std::move(victim))),
        k_(k),
        budget_(budget),
        logging_(logging) {
    if (k_ < 1 || k_ > victim_->num_items) throw ConfigError("black-box list length must satisfy 1 <= k <= V");
  }

  /// Shares an already frozen victim (used when several oracles partition a budget).
  BlackBox(std::shared_ptr<const RecommenderParams> victim, std::size_t k, std::uint64_t budget,
           bool logging = true)
      : victim_(std::move(victim)), k_(k), budget_(budget), logging_(logging) {
    if (k_ < 1 || k_ > victim_->num_items) throw ConfigError("black-box list length must satisfy 1 <= k <= V");
  }

  RankedList query(std::span<const ItemId> x) {
    if (used_ >= budget_)
      throw BudgetExhausted("query budget of " + std::to_string(budget_) + " exhausted");
    auto ranking = recommend_topk(*victim_, x, k_);
    ++used_;
    if (logging_) log_.push_back({Sequence(x.begin(), x.end()), ranking});
    return ranking;
  }

  QuerySet drain_log() const {
    if (!logging_) throw ConfigError("query logging is disabled on this black box");
    return {log_, false};
  }

  /// Resumes accounting of a session whose queries were already spent
  /// (e.g. a query set reloaded from disk).
  void restore_usage(std::uint64_t used) {
    if (used > budget_) throw ConfigError("restored usage exceeds the query budget");
    used_ = used;
  }

  std::size_t k() const noexcept { return k_; }
  std::size_t num_items() const noexcept { return victim_->num_items; }
  std::uint64_t budget() const noexcept { return budget_; }
  std::uint64_t used() const noexcept { return used_; }
  std::uint64_t remaining() const noexcept { return budget_ - used_; }

 private:
  std::shared_ptr<const RecommenderParams> victim_;
  std::size_t k_;
  std::uint64_t budget_;
  std::uint64_t used_ = 0;
  bool logging_;
  std::vector<QueryRecord> log_;
};

/// Line-delimited "prefix ids TAB ranked ids".
inline void write_query_set(const QuerySet& qs, std::ostream& out) {
  for (const auto& r : qs.records)
    out << detail::join_ids(r.prefix) << '\t' << detail::join_ids(r.ranking.items) << '\n';
}

inline QuerySet read_query_set(std::istream& in) {
  QuerySet qs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "expected 'prefix<TAB>ranking'");
    try {
      qs.records.push_back({detail::parse_ids(std::string_view(line).substr(0, tab)),
                            {detail::parse_ids(std::string_view(line).substr(tab + 1))}});
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
    if (qs.records.back().prefix.empty() || qs.records.back().ranking.items.empty())
      throw ParseError(lineno, "empty prefix or ranking");
  }
  return qs;
}

inline void save_query_set(const QuerySet& qs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_query_set(qs, out);
}

inline QuerySet load_query_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_query_set(in);
}

}  // namespace recattack
