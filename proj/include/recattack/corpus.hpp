// SPDX-License-Identifier: Apache-2.0
/**
 * @file   corpus.hpp
 * @brief  Interaction corpus ingestion, leave-one-out splits and the
 *         item-item co-occurrence matrix backing collaborative scores.
 */
#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "recattack/common.hpp"

namespace recattack {

struct UserSequence {
  std::string user;
  Sequence items;

  bool operator==(const UserSequence&) const = default;
};

/// User behaviour sequences over a dense item vocabulary 0..num_items-1.
struct InteractionCorpus {
  std::vector<UserSequence> sequences;
  std::size_t num_items = 0;
  /// Original item tokens, indexed by dense id.
  std::vector<std::string> item_labels;

  bool operator==(const InteractionCorpus&) const = default;
};

enum class CorpusFormat { tsv_triples, sequence_lines };

inline constexpr std::size_t kMinSequenceLength = 3;

namespace detail {

inline bool all_numeric(const std::vector<std::string>& tokens) {
  return std::all_of(tokens.begin(), tokens.end(), [](const std::string& s) {
    return !s.empty() && s.size() < 19 &&
           std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  });
}

/// Drops short sequences, then assigns dense ids in (numeric or lexical)
/// order of the original tokens.
inline InteractionCorpus finalize_corpus(
    std::vector<std::pair<std::string, std::vector<std::string>>> raw) {
  std::erase_if(raw, [](const auto& r) { return r.second.size() < kMinSequenceLength; });
  if (raw.empty()) throw EmptyCorpusError("no sequence of length >= 3 in corpus");

  std::vector<std::string> tokens;
  for (const auto& [user, items] : raw) tokens.insert(tokens.end(), items.begin(), items.end());
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  if (all_numeric(tokens)) {
    std::sort(tokens.begin(), tokens.end(), [](const std::string& a, const std::string& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
  }
  std::unordered_map<std::string, ItemId> index;
  for (std::size_t i = 0; i < tokens.size(); ++i) index.emplace(tokens[i], static_cast<ItemId>(i));

  InteractionCorpus corpus;
  corpus.num_items = tokens.size();
  corpus.item_labels = std::move(tokens);
  corpus.sequences.reserve(raw.size());
  for (auto& [user, items] : raw) {
    UserSequence us{std::move(user), {}};
    us.items.reserve(items.size());
    for (const auto& tok : items) us.items.push_back(index.at(tok));
    corpus.sequences.push_back(std::move(us));
  }
  return corpus;
}

}  // namespace detail

/**
 * Parses a corpus from a stream.
 *
 * `sequence_lines`: one whitespace-separated item sequence per line; the
 * user id is the 1-based line number. `tsv_triples`: `user item [rating]
 * [timestamp]` records (`::` is accepted as a separator); with three fields
 * the third is the timestamp, with four it is the fourth. Events are sorted
 * per user by timestamp (stable, so file order breaks ties).
 */
inline InteractionCorpus parse_corpus(std::istream& in, CorpusFormat format) {
  std::vector<std::pair<std::string, std::vector<std::string>>> raw;
  std::string line;
  std::size_t lineno = 0;

  if (format == CorpusFormat::sequence_lines) {
    while (std::getline(in, line)) {
      ++lineno;
      auto toks = detail::split_ws(line);
      if (toks.empty()) continue;
      if (toks.front().starts_with('#')) continue;
      std::vector<std::string> items(toks.begin(), toks.end());
      raw.emplace_back(std::to_string(lineno), std::move(items));
    }
    return detail::finalize_corpus(std::move(raw));
  }

  struct Event {
    double ts;
    std::size_t order;
    std::string item;
  };
  std::map<std::string, std::size_t> user_slot;
  std::vector<std::pair<std::string, std::vector<Event>>> events;
  std::size_t order = 0;
  while (std::getline(in, line)) {
    ++lineno;
    for (std::size_t p = line.find("::"); p != std::string::npos; p = line.find("::", p))
      line.replace(p, 2, " ");
    auto toks = detail::split_ws(line);
    if (toks.empty() || toks.front().starts_with('#')) continue;
    if (toks.size() < 2 || toks.size() > 4)
      throw ParseError(lineno, "expected 2-4 fields (user item [rating] [timestamp]), got " +
                                   std::to_string(toks.size()));
    double ts = static_cast<double>(order);
    if (toks.size() >= 3) {
      try {
        ts = detail::parse_double(toks.back());
      } catch (const Error&) {
        throw ParseError(lineno, "bad timestamp '" + std::string(toks.back()) + "'");
      }
      if (toks.size() == 4) {
        try {
          (void)detail::parse_double(toks[2]);
        } catch (const Error&) {
          throw ParseError(lineno, "bad rating '" + std::string(toks[2]) + "'");
        }
      }
    }
    std::string user(toks[0]);
    auto [it, inserted] = user_slot.emplace(user, events.size());
    if (inserted) events.emplace_back(user, std::vector<Event>{});
    events[it->second].second.push_back({ts, order++, std::string(toks[1])});
  }
  raw.reserve(events.size());
  for (auto& [user, evs] : events) {
    std::stable_sort(evs.begin(), evs.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });
    std::vector<std::string> items;
    items.reserve(evs.size());
    for (auto& e : evs) items.push_back(std::move(e.item));
    raw.emplace_back(user, std::move(items));
  }
  return detail::finalize_corpus(std::move(raw));
}

inline InteractionCorpus load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file '" + path + "'");
  return parse_corpus(in, format);
}

/// Writes a corpus as `sequence_lines` using dense ids.
inline void save_corpus(const InteractionCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& s : corpus.sequences) out << detail::join_ids(s.items) << '\n';
}

/// Builds a corpus from already-dense sequences, applying the length filter.
inline InteractionCorpus make_corpus(std::vector<Sequence> seqs, std::size_t num_items) {
  InteractionCorpus corpus;
  corpus.num_items = num_items;
  corpus.item_labels.reserve(num_items);
  for (std::size_t i = 0; i < num_items; ++i) corpus.item_labels.push_back(std::to_string(i));
  for (std::size_t u = 0; u < seqs.size(); ++u) {
    if (seqs[u].size() < kMinSequenceLength) continue;
    for (ItemId id : seqs[u])
      if (id >= num_items) throw Error("item id " + std::to_string(id) + " out of range");
    corpus.sequences.push_back({std::to_string(u + 1), std::move(seqs[u])});
  }
  if (corpus.sequences.empty()) throw EmptyCorpusError("no sequence of length >= 3 in corpus");
  return corpus;
}

// ---------------------------------------------------------------------------
// Leave-one-out split
// ---------------------------------------------------------------------------

struct PrefixTarget {
  Sequence prefix;
  ItemId target = 0;

  bool operator==(const PrefixTarget&) const = default;
};

struct SplitDataset {
  std::vector<Sequence> train;
  std::vector<PrefixTarget> valid;
  std::vector<PrefixTarget> test;
  std::size_t num_items = 0;
};

inline SplitDataset leave_one_out_split(const InteractionCorpus& corpus) {
  if (corpus.sequences.empty()) throw EmptyCorpusError("cannot split an empty corpus");
  SplitDataset out;
  out.num_items = corpus.num_items;
  for (const auto& s : corpus.sequences) {
    const auto& x = s.items;
    const std::size_t T = x.size();
    Sequence head(x.begin(), x.end() - 2);
    out.valid.push_back({head, x[T - 2]});
    out.test.push_back({Sequence(x.begin(), x.end() - 1), x[T - 1]});
    out.train.push_back(std::move(head));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Co-occurrence statistics
// ---------------------------------------------------------------------------

enum class CorelKind { jaccard, ppmi };

/// Sparse symmetric window co-occurrence counts.
class CoMatrix {
 public:
  CoMatrix() = default;
  CoMatrix(std::size_t num_items, std::size_t window)
      : rows_(num_items), item_counts_(num_items, 0), window_(window) {}

  std::size_t num_items() const noexcept { return item_counts_.size(); }
  std::size_t window() const noexcept { return window_; }
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t item_count(ItemId i) const { return item_counts_.at(i); }

  std::uint64_t pair_count(ItemId i, ItemId j) const {
    const auto& row = rows_.at(i);
    auto it = std::lower_bound(row.begin(), row.end(), j,
                               [](const auto& e, ItemId v) { return e.first < v; });
    return (it != row.end() && it->first == j) ? it->second : 0;
  }

  /// Non-zero entries of row i, sorted by column.
  const std::vector<std::pair<ItemId, std::uint64_t>>& row(ItemId i) const { return rows_.at(i); }

 private:
  friend CoMatrix build_comatrix(const InteractionCorpus&, std::size_t);

  std::vector<std::vector<std::pair<ItemId, std::uint64_t>>> rows_;
  std::vector<std::uint64_t> item_counts_;
  std::uint64_t total_ = 0;
  std::size_t window_ = 1;
};

/**
 * Counts every position pair (p, q), 0 < q - p <= window, holding distinct
 * items. c(i) is the number of occurrences of i and N the number of positions.
 */
inline CoMatrix build_comatrix(const InteractionCorpus& corpus, std::size_t window) {
  if (window < 1) throw ConfigError("co-occurrence window must be >= 1");
  CoMatrix m(corpus.num_items, window);
  std::vector<std::map<ItemId, std::uint64_t>> acc(corpus.num_items);
  for (const auto& s : corpus.sequences) {
    const auto& x = s.items;
    for (std::size_t p = 0; p < x.size(); ++p) {
      ++m.item_counts_[x[p]];
      ++m.total_;
      const std::size_t end = std::min(x.size(), p + window + 1);
      for (std::size_t q = p + 1; q < end; ++q) {
        if (x[p] == x[q]) continue;
        ++acc[x[p]][x[q]];
        ++acc[x[q]][x[p]];
      }
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) m.rows_[i].assign(acc[i].begin(), acc[i].end());
  return m;
}

/**
 * Collaborative relatedness of i and j.
 *
 * Jaccard is clamped to [0, 1]: with windowed position-pair counting a pair
 * count can exceed the occurrence count of a repeated item.
 */
inline double corel(const CoMatrix& m, ItemId i, ItemId j, CorelKind kind) {
  if (i == j) {
    if (kind == CorelKind::jaccard) return 1.0;
    const auto ci = m.item_count(i);
    return ci == 0 ? 0.0 : std::max(0.0, std::log(static_cast<double>(m.total()) / static_cast<double>(ci)));
  }
  const auto cij = m.pair_count(i, j);
  if (cij == 0) return 0.0;
  const double c = static_cast<double>(cij);
  const double ci = static_cast<double>(m.item_count(i));
  const double cj = static_cast<double>(m.item_count(j));
  if (kind == CorelKind::jaccard) {
    const double denom = ci + cj - c;
    if (denom <= 0.0) return 1.0;
    return std::clamp(c / denom, 0.0, 1.0);
  }
  if (ci == 0.0 || cj == 0.0) return 0.0;
  return std::max(0.0, std::log(c * static_cast<double>(m.total()) / (ci * cj)));
}

/// corel(i, t) for every item i.
inline std::vector<double> corel_row(const CoMatrix& m, ItemId t, CorelKind kind) {
  std::vector<double> out(m.num_items(), 0.0);
  for (const auto& [j, c] : m.row(t)) out[j] = corel(m, j, t, kind);
  out[t] = corel(m, t, t, kind);
  return out;
}

/// The K items most related to t (t excluded), ties by ascending id.
inline Sequence topk_neighbors(const CoMatrix& m, ItemId t, std::size_t k, CorelKind kind) {
  if (k < 1) throw ConfigError("neighbour count must be >= 1");
  auto scores = corel_row(m, t, kind);
  scores[t] = -std::numeric_limits<double>::infinity();
  auto top = detail::top_k_indices(scores, std::min(k, m.num_items() - 1));
  return top;
}

inline const char* to_string(CorelKind k) { return k == CorelKind::jaccard ? "jaccard" : "ppmi"; }

inline CorelKind parse_corel_kind(std::string_view s) {
  if (s == "jaccard") return CorelKind::jaccard;
  if (s == "ppmi") return CorelKind::ppmi;
  throw ConfigError("unknown corel kind '" + std::string(s) + "'");
}

inline CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "sequence_lines") return CorpusFormat::sequence_lines;
  if (s == "tsv_triples") return CorpusFormat::tsv_triples;
  throw ConfigError("unknown corpus format '" + std::string(s) + "'");
}

}  // namespace recattack
