// SPDX-License-Identifier: Apache-2.0
/**
 * @file   harness.hpp
 * @brief  Experiment orchestration: corpus -> victim -> query synthesis ->
 *         distillation -> pollution -> evaluation, plus the ablation and
 *         alpha-sweep drivers and report emission.
 *
 * Artifacts written under the output directory:
 *   corpus.txt, victim.params, queries.tsv, surrogate.params,
 *   polluted.tsv, attack_details.tsv, report.json, report.csv, report.txt
 */
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recattack/attack.hpp"
#include "recattack/config.hpp"
#include "recattack/corpus.hpp"
#include "recattack/distill.hpp"
#include "recattack/evalkit.hpp"
#include "recattack/oracle.hpp"
#include "recattack/recmodel.hpp"
#include "recattack/synthetic.hpp"
#include "recattack/synthgen.hpp"

namespace recattack {

using Json = nlohmann::ordered_json;

/// A pipeline stage failed; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Headline metrics of one run at cut-off k.
struct MetricReport {
  std::size_t k = 10;
  double recall = 0.0;        // victim, test split
  double ndcg = 0.0;          // victim, test split
  double agr1 = 0.0;          // surrogate vs victim
  double agrk = 0.0;
  double pre_hit_rate = 0.0;  // target in victim top-k before pollution
  double post_hit_rate = 0.0;
  double post_mrr = 0.0;
  double plausibility = 0.0;  // polluted sequences

  /// Flat "key=value" lines.
  std::string to_kv() const {
    std::ostringstream os;
    const auto ks = std::to_string(k);
    os << "recall@" << ks << '=' << detail::format_double(recall) << '\n'
       << "ndcg@" << ks << '=' << detail::format_double(ndcg) << '\n'
       << "agr@1=" << detail::format_double(agr1) << '\n'
       << "agr@" << ks << '=' << detail::format_double(agrk) << '\n'
       << "pre_hit@" << ks << '=' << detail::format_double(pre_hit_rate) << '\n'
       << "post_hit@" << ks << '=' << detail::format_double(post_hit_rate) << '\n'
       << "post_mrr@" << ks << '=' << detail::format_double(post_mrr) << '\n'
       << "plausibility=" << detail::format_double(plausibility) << '\n';
    return os.str();
  }

  static std::string csv_header() {
    return "k,recall,ndcg,agr1,agrk,pre_hit_rate,post_hit_rate,post_mrr,plausibility";
  }

  std::string to_csv_row() const {
    std::ostringstream os;
    os << k;
    for (double v : {recall, ndcg, agr1, agrk, pre_hit_rate, post_hit_rate, post_mrr, plausibility})
      os << ',' << detail::format_double(v);
    return os.str();
  }

  Json to_json() const {
    Json j;
    j["k"] = k;
    j["recall"] = recall;
    j["ndcg"] = ndcg;
    j["agr1"] = agr1;
    j["agrk"] = agrk;
    j["pre_hit_rate"] = pre_hit_rate;
    j["post_hit_rate"] = post_hit_rate;
    j["post_mrr"] = post_mrr;
    j["plausibility"] = plausibility;
    return j;
  }
};

/// One attacked (user, target) pair and every sequence built for it.
struct AttackRecord {
  std::string user;
  ItemId target = 0;
  Sequence original;
  Sequence polluted;       // dual-signal output after validation/refinement
  Sequence dual_unrefined; // dual-signal output before refinement
  Sequence grad_only;      // w_s = 0, empty unless stealth comparison is on
  Sequence rand_alter;
  Sequence sim_alter;
};

/// Mutable state threaded through the stages of one run.
struct PipelineState {
  std::optional<InteractionCorpus> corpus;
  std::optional<SplitDataset> split;
  std::optional<CoMatrix> comatrix;
  std::shared_ptr<const RecommenderParams> victim;
  std::shared_ptr<BlackBox> oracle;
  std::optional<QuerySet> queries;
  std::optional<RecommenderParams> surrogate;
  std::optional<std::vector<AttackRecord>> attacks;
  std::optional<MetricReport> metrics;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline std::filesystem::path artifact(const ExperimentConfig& cfg, const char* name) {
  return std::filesystem::path(cfg.output_dir) / name;
}

inline Json config_json(const ExperimentConfig& cfg) {
  Json j = Json::object();
  for (const auto& f : config_fields()) {
    if (f.key == "output.dir") continue;
    j[f.key] = f.get(cfg);
  }
  return j;
}

inline TrainConfig victim_train_config(const ExperimentConfig& cfg) {
  TrainConfig t = cfg.victim_train;
  t.seed = derive_seed(cfg.seed, "victim.train");
  return t;
}

inline DistillConfig distill_config(const ExperimentConfig& cfg) {
  DistillConfig d = cfg.distill;
  d.seed = derive_seed(cfg.seed, "distill.init");
  d.train.seed = derive_seed(cfg.seed, "distill.train");
  return d;
}

inline std::vector<Sequence> test_contexts(const SplitDataset& split) {
  std::vector<Sequence> out;
  out.reserve(split.test.size());
  for (const auto& pt : split.test) out.push_back(pt.prefix);
  return out;
}

inline std::size_t polluted_length(std::size_t original, double factor) {
  const auto scaled = static_cast<std::size_t>(std::ceil(factor * static_cast<double>(original) - 1e-9));
  return std::max(original + 1, scaled);
}

/// Items in the less popular half of the vocabulary, by occurrence count then id.
inline std::vector<ItemId> unpopular_items(const CoMatrix& m) {
  std::vector<ItemId> ids(m.num_items());
  std::iota(ids.begin(), ids.end(), ItemId{0});
  std::stable_sort(ids.begin(), ids.end(),
                   [&](ItemId a, ItemId b) { return m.item_count(a) < m.item_count(b); });
  ids.resize(std::max<std::size_t>(1, ids.size() / 2));
  return ids;
}

inline void write_attack_details(const std::vector<AttackRecord>& recs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  auto row = [&](const AttackRecord& r, const char* method, const Sequence& s) {
    if (!s.empty()) out << r.user << '\t' << r.target << '\t' << method << '\t' << join_ids(s) << '\n';
  };
  for (const auto& r : recs) {
    row(r, "original", r.original);
    row(r, "polluted", r.polluted);
    row(r, "dual_unrefined", r.dual_unrefined);
    row(r, "grad_only", r.grad_only);
    row(r, "rand_alter", r.rand_alter);
    row(r, "sim_alter", r.sim_alter);
  }
}

inline std::vector<AttackRecord> read_attack_details(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<AttackRecord> recs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, '\t')) cols.push_back(c);
    if (cols.size() != 4) throw ParseError(lineno, "expected user<TAB>target<TAB>method<TAB>items");
    const auto target = parse_int<ItemId>(cols[1]);
    if (cols[2] == "original") recs.push_back({cols[0], target, parse_ids(cols[3]), {}, {}, {}, {}, {}});
    if (recs.empty() || recs.back().user != cols[0] || recs.back().target != target)
      throw ParseError(lineno, "row does not follow its 'original' row");
    auto& r = recs.back();
    auto ids = parse_ids(cols[3]);
    if (cols[2] == "polluted") r.polluted = std::move(ids);
    else if (cols[2] == "dual_unrefined") r.dual_unrefined = std::move(ids);
    else if (cols[2] == "grad_only") r.grad_only = std::move(ids);
    else if (cols[2] == "rand_alter") r.rand_alter = std::move(ids);
    else if (cols[2] == "sim_alter") r.sim_alter = std::move(ids);
    else if (cols[2] != "original") throw ParseError(lineno, "unknown method '" + cols[2] + "'");
  }
  return recs;
}

/// Flattens nested objects into "a.b.c,value" CSV rows.
inline void flatten_csv(const Json& j, const std::string& prefix, std::ostream& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten_csv(*it, key, out);
    } else if (it->is_array()) {
      out << key << ',' << '"' << it->dump() << '"' << '\n';
    } else if (it->is_number_float()) {
      out << key << ',' << format_double(it->get<double>()) << '\n';
    } else {
      out << key << ',' << (it->is_string() ? it->get<std::string>() : it->dump()) << '\n';
    }
  }
}

}  // namespace detail

/// Report JSON without wall-clock fields, for reproducibility comparisons.
inline std::string report_without_timing(Json report) {
  report.erase("timing");
  return report.dump(2);
}

/// Writes report.json, report.csv and report.txt.
inline void write_report(const Json& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(std::filesystem::path(dir) / "report.json");
    out << report.dump(2) << '\n';
  }
  Json metrics = report;
  metrics.erase("config");
  metrics.erase("timing");
  {
    std::ofstream out(std::filesystem::path(dir) / "report.csv");
    out << "metric,value\n";
    detail::flatten_csv(metrics, "", out);
  }
  {
    std::ofstream out(std::filesystem::path(dir) / "report.txt");
    out << "arm: " << report.value("arm", std::string("default"))
        << "   config hash: " << report.value("config_hash", std::string()) << '\n';
    std::ostringstream csv;
    detail::flatten_csv(metrics, "", csv);
    std::string line;
    std::istringstream in(csv.str());
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      std::string key = line.substr(0, comma);
      key.resize(std::max<std::size_t>(key.size(), 44), ' ');
      out << key << line.substr(comma + 1) << '\n';
    }
    if (report.contains("timing")) {
      out << "\nwall-clock seconds\n";
      for (auto it = report["timing"].begin(); it != report["timing"].end(); ++it)
        out << "  " << it.key() << ": " << it->dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace stages {

inline void corpus(const ExperimentConfig& cfg, PipelineState& st, Json& rep, bool write) {
  if (cfg.corpus_source == "synthetic") {
    SyntheticSpec spec = cfg.synthetic;
    spec.seed = derive_seed(cfg.seed, "corpus");
    st.corpus = gen_synthetic_corpus(spec);
  } else {
    st.corpus = load_corpus(cfg.corpus_path, cfg.corpus_format);
  }
  st.split = leave_one_out_split(*st.corpus);
  st.comatrix = build_comatrix(*st.corpus, cfg.attack_window);
  double mean_len = 0.0;
  for (const auto& s : st.corpus->sequences) mean_len += static_cast<double>(s.items.size());
  mean_len /= static_cast<double>(st.corpus->sequences.size());
  rep["corpus"] = {{"users", st.corpus->sequences.size()},
                   {"items", st.corpus->num_items},
                   {"mean_length", mean_len},
                   {"positions", st.comatrix->total()}};
  if (write) save_corpus(*st.corpus, detail::artifact(cfg, "corpus.txt").string());
}

inline void victim(const ExperimentConfig& cfg, PipelineState& st, Json& rep) {
  auto init = init_params(st.corpus->num_items, cfg.victim_dim, cfg.victim_gamma, derive_seed(cfg.seed, "victim.init"));
  st.victim = std::make_shared<const RecommenderParams>(train(std::move(init), *st.split, detail::victim_train_config(cfg)));
  save_params(*st.victim, detail::artifact(cfg, "victim.params").string());
  Json j;
  j["fingerprint"] = params_fingerprint(*st.victim);
  for (auto k : cfg.eval_cutoffs()) {
    if (k > st.victim->num_items) continue;
    const auto v = evaluate_ranking(*st.victim, st.split->valid, k);
    const auto t = evaluate_ranking(*st.victim, st.split->test, k);
    const auto ks = std::to_string(k);
    j["valid"]["recall@" + ks] = v.recall;
    j["valid"]["ndcg@" + ks] = v.ndcg;
    j["test"]["recall@" + ks] = t.recall;
    j["test"]["ndcg@" + ks] = t.ndcg;
  }
  rep["victim"] = j;
}

inline void make_oracle(const ExperimentConfig& cfg, PipelineState& st) {
  st.oracle = std::make_shared<BlackBox>(st.victim, std::min(cfg.oracle_k, st.victim->num_items),
                                         cfg.effective_budget());
}

inline void synthesize(const ExperimentConfig& cfg, PipelineState& st, Json& rep) {
  make_oracle(cfg, st);
  st.queries = generate_sequences(*st.oracle, cfg.sampler, cfg.synth_count, cfg.synth_maxlen,
                                  derive_seed(cfg.seed, "synthesize"));
  save_query_set(*st.queries, detail::artifact(cfg, "queries.tsv").string());
  rep["synthesize"] = {{"pairs", st.queries->size()},
                       {"truncated", st.queries->truncated},
                       {"queries_used", st.oracle->used()}};
}

inline void distill(const ExperimentConfig& cfg, PipelineState& st, Json& rep) {
  const auto dc = detail::distill_config(cfg);
  auto init = init_params(st.victim->num_items, dc.dim, dc.gamma, dc.seed);
  const auto contexts = detail::test_contexts(*st.split);
  const auto k = std::min(cfg.eval_k, st.victim->num_items);
  const auto before = evaluate_agreement(*st.victim, init, contexts, k);
  st.surrogate = distill_train(std::move(init), *st.queries, dc);
  save_params(*st.surrogate, detail::artifact(cfg, "surrogate.params").string());
  Json j;
  j["fingerprint"] = params_fingerprint(*st.surrogate);
  j["trained_on_pairs"] = st.queries->size();
  const auto ks = std::to_string(k);
  j["untrained"] = {{"agr@1", before.at1}, {"agr@" + ks, before.atk}};
  Json trained;
  for (auto kk : cfg.eval_cutoffs()) {
    if (kk > st.victim->num_items) continue;
    const auto a = evaluate_agreement(*st.victim, *st.surrogate, contexts, kk);
    trained["agr@1"] = a.at1;
    trained["agr@" + std::to_string(kk)] = a.atk;
  }
  j["trained"] = trained;
  j["lift@" + ks] = trained["agr@" + ks].get<double>() - before.atk;
  for (auto kk : cfg.eval_cutoffs()) {
    if (kk > st.victim->num_items) continue;
    const auto q = evaluate_ranking(*st.surrogate, st.split->test, kk);
    j["test"]["recall@" + std::to_string(kk)] = q.recall;
    j["test"]["ndcg@" + std::to_string(kk)] = q.ndcg;
  }
  rep["distill"] = j;
}

inline void attack(const ExperimentConfig& cfg, PipelineState& st, Json& rep) {
  const auto& corpus = *st.corpus;
  const auto k = std::min(cfg.eval_k, st.oracle->k());
  Rng rng(derive_seed(cfg.seed, "attack.select"));

  auto pool = detail::unpopular_items(*st.comatrix);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(pool.size(), cfg.attack_targets));
  std::vector<std::size_t> users(corpus.sequences.size());
  std::iota(users.begin(), users.end(), std::size_t{0});
  std::shuffle(users.begin(), users.end(), rng);
  users.resize(std::min(users.size(), cfg.attack_users));

  std::vector<AttackRecord> recs;
  std::size_t validated = 0, validated_hits = 0, refined = 0, fallback = 0;
  bool truncated = false;
  for (ItemId t : pool) {
    for (auto u : users) {
      const auto& x = corpus.sequences[u].items;
      AttackConfig ac = cfg.attack;
      ac.target = t;
      ac.length = detail::polluted_length(x.size(), cfg.attack_length_factor);
      ac.seed = derive_seed(cfg.seed, "attack." + std::to_string(t) + "." + std::to_string(u));

      AttackRecord r{corpus.sequences[u].user, t, x, {}, {}, {}, {}, {}};
      r.dual_unrefined = pollute(*st.surrogate, *st.comatrix, x, ac).z;
      if (!truncated) {
        const auto out = attack_sequence(*st.surrogate, *st.comatrix, *st.oracle, x, ac, k);
        r.polluted = out.z;
        if (out.validated) {
          ++validated;
          validated_hits += out.exposure.in_top_k ? 1 : 0;
        } else {
          truncated = true;
        }
        refined += out.refined ? 1 : 0;
        fallback += out.fallback_used ? 1 : 0;
      } else {
        r.polluted = r.dual_unrefined;
      }
      if (cfg.attack_stealth_compare) {
        AttackConfig grad = ac;
        grad.w_grad = 1.0;
        r.grad_only = pollute(*st.surrogate, *st.comatrix, x, grad).z;
      }
      r.rand_alter = baseline_rand_alter(x, t, ac.length, st.victim->num_items, ac.seed);
      // White-box reference point: neighbours come from the victim's own embeddings.
      r.sim_alter = baseline_sim_alter(*st.victim, x, t, ac.length);
      recs.push_back(std::move(r));
    }
  }

  {
    std::ofstream out(detail::artifact(cfg, "polluted.tsv"));
    for (const auto& r : recs) out << r.user << '\t' << detail::join_ids(r.polluted) << '\n';
  }
  detail::write_attack_details(recs, detail::artifact(cfg, "attack_details.tsv"));

  Json targets = Json::array();
  for (ItemId t : pool) targets.push_back(t);
  rep["attack"] = {{"targets", targets},
                   {"users", users.size()},
                   {"sequences", recs.size()},
                   {"validated", validated},
                   {"validated_hits", validated_hits},
                   {"refined", refined},
                   {"fallback", fallback},
                   {"validation_truncated", truncated}};
  st.attacks = std::move(recs);
}

inline void evaluate(const ExperimentConfig& cfg, PipelineState& st, Json& rep) {
  const auto& recs = *st.attacks;
  if (recs.empty()) throw Error("no attack records to evaluate");
  const auto kind = cfg.attack.kind;
  const auto k = std::min(cfg.eval_k, st.victim->num_items);

  auto exposure = [&](auto member) {
    std::vector<ExposureResult> res;
    for (const auto& r : recs) {
      const Sequence& s = r.*member;
      if (s.empty()) continue;
      res.push_back(exposure_of(recommend_topk(*st.victim, s, k), r.target, k));
    }
    return res.empty() ? TargetExposure{} : aggregate_exposure(res);
  };
  auto plaus = [&](auto member) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : recs) {
      const Sequence& z = r.*member;
      if (z.size() < 2) continue;
      s += plausibility_score(z, *st.comatrix, kind);
      ++n;
    }
    return n ? s / static_cast<double>(n) : 0.0;
  };

  const auto ks = std::to_string(k);
  Json j;
  const std::vector<std::pair<const char*, Sequence AttackRecord::*>> methods = {
      {"original", &AttackRecord::original},     {"polluted", &AttackRecord::polluted},
      {"dual_unrefined", &AttackRecord::dual_unrefined}, {"grad_only", &AttackRecord::grad_only},
      {"rand_alter", &AttackRecord::rand_alter}, {"sim_alter", &AttackRecord::sim_alter}};
  for (const auto& [name, member] : methods) {
    if (std::none_of(recs.begin(), recs.end(), [&](const AttackRecord& r) { return !(r.*member).empty(); }))
      continue;
    const auto e = exposure(member);
    j[name] = {{"hit@" + ks, e.hit_rate}, {"mrr@" + ks, e.mrr}, {"plausibility", plaus(member)}};
  }
  // The success rate is reported as the post-pollution hit rate of the target.
  j["attack_success_rate@" + ks] = j["polluted"]["hit@" + ks];

  if (st.surrogate) {
    std::size_t monotone = 0;
    for (const auto& r : recs)
      if (target_probability(*st.surrogate, r.polluted, r.target) >=
          target_probability(*st.surrogate, r.original, r.target))
        ++monotone;
    j["surrogate_monotone_fraction"] = static_cast<double>(monotone) / static_cast<double>(recs.size());
  }

  MetricReport m;
  m.k = k;
  const auto q = evaluate_ranking(*st.victim, st.split->test, k);
  m.recall = q.recall;
  m.ndcg = q.ndcg;
  if (st.surrogate) {
    const auto a = evaluate_agreement(*st.victim, *st.surrogate, detail::test_contexts(*st.split), k);
    m.agr1 = a.at1;
    m.agrk = a.atk;
  }
  m.pre_hit_rate = j["original"]["hit@" + ks].get<double>();
  m.post_hit_rate = j["polluted"]["hit@" + ks].get<double>();
  m.post_mrr = j["polluted"]["mrr@" + ks].get<double>();
  m.plausibility = j["polluted"]["plausibility"].get<double>();
  j["summary"] = m.to_json();
  st.metrics = m;
  rep["evaluate"] = j;

  std::ofstream kv(detail::artifact(cfg, "metrics.kv"));
  kv << m.to_kv();
  std::ofstream csv(detail::artifact(cfg, "metrics.csv"));
  csv << MetricReport::csv_header() << '\n' << m.to_csv_row() << '\n';
}

}  // namespace stages

namespace detail {

/// Loads whatever a later stage needs but an earlier, disabled stage did not produce.
inline void ensure_victim(const ExperimentConfig& cfg, PipelineState& st) {
  if (!st.victim)
    st.victim = std::make_shared<const RecommenderParams>(load_params(artifact(cfg, "victim.params").string()));
}

inline void ensure_queries(const ExperimentConfig& cfg, PipelineState& st) {
  if (!st.queries) st.queries = load_query_set(artifact(cfg, "queries.tsv").string());
}

inline void ensure_oracle(const ExperimentConfig& cfg, PipelineState& st) {
  ensure_victim(cfg, st);
  if (st.oracle) return;
  stages::make_oracle(cfg, st);
  // Each synthesised pair cost exactly one query.
  if (std::filesystem::exists(artifact(cfg, "queries.tsv"))) {
    ensure_queries(cfg, st);
    st.oracle->restore_usage(std::min<std::uint64_t>(st.queries->size(), st.oracle->budget()));
  }
}

inline void ensure_surrogate(const ExperimentConfig& cfg, PipelineState& st) {
  if (!st.surrogate) st.surrogate = load_params(artifact(cfg, "surrogate.params").string());
}

inline void ensure_attacks(const ExperimentConfig& cfg, PipelineState& st) {
  if (!st.attacks) st.attacks = read_attack_details(artifact(cfg, "attack_details.tsv"));
}

template <typename F>
void run_stage(const char* name, Json& rep, F&& body) {
  const auto t0 = Clock::now();
  try {
    body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
  rep["timing"][name] = seconds_since(t0);
}

inline Json report_header(const ExperimentConfig& cfg) {
  Json rep;
  rep["arm"] = cfg.arm;
  rep["config_hash"] = config_hash(cfg);
  rep["config"] = config_json(cfg);
  return rep;
}

}  // namespace detail

/**
 * Runs the enabled stages in order. Inputs of a stage whose producer is
 * disabled are read back from the output directory. The report is written
 * even when a stage fails; the StageError is then rethrown.
 */
inline Json run_pipeline(const ExperimentConfig& cfg, PipelineState& st) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  const auto enabled = cfg.stage_set();
  auto on = [&](const char* s) { return enabled.count(s) > 0; };
  Json rep = detail::report_header(cfg);

  try {
    // The corpus is cheap and deterministic, so later stages always rebuild it.
    detail::run_stage("corpus", rep, [&] { stages::corpus(cfg, st, rep, on("corpus")); });
    if (on("victim")) detail::run_stage("victim", rep, [&] { stages::victim(cfg, st, rep); });
    if (on("synthesize"))
      detail::run_stage("synthesize", rep, [&] {
        detail::ensure_victim(cfg, st);
        stages::synthesize(cfg, st, rep);
      });
    if (on("distill"))
      detail::run_stage("distill", rep, [&] {
        detail::ensure_victim(cfg, st);
        detail::ensure_queries(cfg, st);
        stages::distill(cfg, st, rep);
      });
    if (on("attack"))
      detail::run_stage("attack", rep, [&] {
        detail::ensure_oracle(cfg, st);
        detail::ensure_surrogate(cfg, st);
        stages::attack(cfg, st, rep);
      });
    if (on("evaluate"))
      detail::run_stage("evaluate", rep, [&] {
        detail::ensure_victim(cfg, st);
        if (std::filesystem::exists(detail::artifact(cfg, "surrogate.params"))) detail::ensure_surrogate(cfg, st);
        detail::ensure_attacks(cfg, st);
        stages::evaluate(cfg, st, rep);
      });
  } catch (...) {
    if (st.oracle) rep["budget"] = {{"budget", st.oracle->budget()}, {"used", st.oracle->used()}};
    rep["failed"] = true;
    write_report(rep, cfg.output_dir);
    throw;
  }
  if (st.oracle) rep["budget"] = {{"budget", st.oracle->budget()}, {"used", st.oracle->used()}};
  write_report(rep, cfg.output_dir);
  return rep;
}

inline Json run_pipeline(const ExperimentConfig& cfg) {
  PipelineState st;
  return run_pipeline(cfg, st);
}

// ---------------------------------------------------------------------------
// Ablation and alpha sweep
// ---------------------------------------------------------------------------

struct AblationArm {
  std::string loss;    // kl_only | pair_only | combined
  std::string signal;  // grad_only | collab_only | dual

  std::string label() const { return loss + "+" + signal; }
};

inline AblationArm parse_arm(std::string_view text) {
  const auto plus = text.find('+');
  if (plus == std::string_view::npos) throw ConfigError("ablation arm must look like 'loss+signal'");
  AblationArm a{std::string(text.substr(0, plus)), std::string(text.substr(plus + 1))};
  static const std::set<std::string> losses{"kl_only", "pair_only", "combined"};
  static const std::set<std::string> signals{"grad_only", "collab_only", "dual"};
  if (!losses.count(a.loss)) throw ConfigError("unknown loss arm '" + a.loss + "'");
  if (!signals.count(a.signal)) throw ConfigError("unknown signal arm '" + a.signal + "'");
  return a;
}

inline ExperimentConfig apply_arm(ExperimentConfig cfg, const AblationArm& arm) {
  if (arm.loss == "kl_only") cfg.distill.lambda = 0.0;
  if (arm.loss == "pair_only") cfg.distill.lambda = 1.0;
  if (arm.signal == "grad_only") cfg.attack.w_grad = 1.0;
  if (arm.signal == "collab_only") cfg.attack.w_grad = 0.0;
  cfg.arm = arm.label();
  return cfg;
}

namespace detail {

/// Corpus, victim and one shared query set for drivers that compare arms.
inline PipelineState prepare_shared(const ExperimentConfig& cfg, Json& rep) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  PipelineState st;
  run_stage("corpus", rep, [&] { stages::corpus(cfg, st, rep, true); });
  run_stage("victim", rep, [&] { stages::victim(cfg, st, rep); });
  run_stage("synthesize", rep, [&] { stages::synthesize(cfg, st, rep); });
  return st;
}

}  // namespace detail

/**
 * One distill + attack + evaluate pipeline per arm on a shared victim and
 * query set. The budget left after synthesis is split evenly across arms.
 */
inline Json run_ablation(const ExperimentConfig& cfg, const std::vector<std::string>& arm_names) {
  std::vector<AblationArm> arms;
  std::set<std::string> seen;
  for (const auto& n : arm_names) {
    auto a = parse_arm(n);
    if (seen.insert(a.label()).second) arms.push_back(a);
  }
  if (arms.size() < 2) throw ConfigError("an ablation needs at least two distinct arms");

  Json rep = detail::report_header(cfg);
  PipelineState shared = detail::prepare_shared(cfg, rep);
  const auto share = shared.oracle->remaining() / arms.size();
  const auto k = std::min(cfg.eval_k, shared.victim->num_items);

  Json rows = Json::array();
  std::ofstream csv(detail::artifact(cfg, "ablation.csv"));
  csv << "arm,victim," << MetricReport::csv_header() << ",lift,budget_used\n";
  for (const auto& arm : arms) {
    ExperimentConfig acfg = apply_arm(cfg, arm);
    acfg.output_dir = (std::filesystem::path(cfg.output_dir) / "ablation" / arm.label()).string();
    std::filesystem::create_directories(acfg.output_dir);
    PipelineState st;
    st.corpus = shared.corpus;
    st.split = shared.split;
    st.comatrix = shared.comatrix;
    st.victim = shared.victim;
    st.queries = shared.queries;
    st.oracle = std::make_shared<BlackBox>(shared.victim, shared.oracle->k(), share);
    Json arep = detail::report_header(acfg);
    try {
      detail::run_stage("distill", arep, [&] { stages::distill(acfg, st, arep); });
      detail::run_stage("attack", arep, [&] { stages::attack(acfg, st, arep); });
      detail::run_stage("evaluate", arep, [&] { stages::evaluate(acfg, st, arep); });
    } catch (...) {
      arep["failed"] = true;
      write_report(arep, acfg.output_dir);
      throw;
    }
    arep["budget"] = {{"budget", st.oracle->budget()}, {"used", st.oracle->used()}};
    write_report(arep, acfg.output_dir);

    const auto& m = *st.metrics;
    const double lift = arep["distill"]["lift@" + std::to_string(k)].get<double>();
    csv << arm.label() << ',' << rep["victim"]["fingerprint"].get<std::string>() << ',' << m.to_csv_row() << ','
        << detail::format_double(lift) << ',' << st.oracle->used() << '\n';
    Json row;
    row["arm"] = arm.label();
    row["victim"] = rep["victim"]["fingerprint"];
    row["metrics"] = m.to_json();
    row["lift"] = lift;
    row["budget_used"] = st.oracle->used();
    rows.push_back(row);
  }
  rep["ablation"] = rows;
  write_report(rep, cfg.output_dir);
  return rep;
}

struct SweepRow {
  double alpha = 0.0;
  double agr1 = 0.0;
  double agrk = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;
  Json report;
};

/// One distillation per alpha on a shared query set; Agr@1 / Agr@k per alpha.
inline SweepResult run_alpha_sweep(const ExperimentConfig& cfg, const std::vector<double>& alphas) {
  SweepResult res;
  std::vector<double> unique;
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("sweep alphas must lie in (0, 1)");
    if (std::find(unique.begin(), unique.end(), a) != unique.end()) {
      res.warnings.push_back("duplicate alpha " + detail::format_double(a) + " ignored");
      continue;
    }
    unique.push_back(a);
  }
  if (unique.empty()) throw ConfigError("alpha sweep needs at least one alpha");

  Json rep = detail::report_header(cfg);
  PipelineState st = detail::prepare_shared(cfg, rep);
  const auto k = std::min(cfg.eval_k, st.victim->num_items);
  const auto contexts = detail::test_contexts(*st.split);
  for (double a : unique) {
    ExperimentConfig c = cfg;
    c.distill.alpha = a;
    const auto dc = detail::distill_config(c);
    RecommenderParams sur;
    detail::run_stage(("distill@" + detail::format_double(a)).c_str(), rep,
                      [&] { sur = distill_train(*st.queries, st.victim->num_items, dc); });
    const auto agr = evaluate_agreement(*st.victim, sur, contexts, k);
    res.rows.push_back({a, agr.at1, agr.atk});
  }

  const auto ks = std::to_string(k);
  Json rows = Json::array();
  for (const auto& r : res.rows) rows.push_back({{"alpha", r.alpha}, {"agr@1", r.agr1}, {"agr@" + ks, r.agrk}});
  rep["alpha_sweep"] = rows;
  rep["warnings"] = res.warnings;
  rep["budget"] = {{"budget", st.oracle->budget()}, {"used", st.oracle->used()}};
  write_report(rep, cfg.output_dir);

  std::ofstream plot(detail::artifact(cfg, "alpha_sweep.csv"));
  plot << "alpha,agr@1,agr@" << ks << '\n';
  for (const auto& r : res.rows)
    plot << detail::format_double(r.alpha) << ',' << detail::format_double(r.agr1) << ','
         << detail::format_double(r.agrk) << '\n';
  std::ofstream table(detail::artifact(cfg, "alpha_sweep.txt"));
  table << "alpha     Agr@1     Agr@" << ks << '\n';
  for (const auto& r : res.rows) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-9.4g %-9.4f %-9.4f\n", r.alpha, r.agr1, r.agrk);
    table << buf;
  }
  res.report = std::move(rep);
  return res;
}

}  // namespace recattack
