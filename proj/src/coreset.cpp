#include "prunekit/coreset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

// Slack for comparisons between user fractions such as beta = 0.1 and 1 - 0.9.
constexpr double kFractionSlack = 1e-12;

void require_budget(std::size_t m, std::size_t available) {
  if (m < 1 || m > available) {
    throw Error(ErrorCode::InvalidBudget,
                "budget " + std::to_string(m) + " outside [1, " + std::to_string(available) + "]");
  }
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

void require_distinct_ids(std::span<const InfluenceRecord> records) {
  std::vector<std::size_t> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.sample_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw Error(ErrorCode::MalformedFile, "duplicate sample ids among score records");
  }
}

}  // namespace

std::string_view strategy_name(Strategy s) noexcept {
  switch (s) {
    case Strategy::TopI: return "top_i";
    case Strategy::Cci: return "cci";
    case Strategy::Random: return "random";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  std::string lower(name);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "top_i" || lower == "topi") return Strategy::TopI;
  if (lower == "cci") return Strategy::Cci;
  if (lower == "random") return Strategy::Random;
  throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

void SelectionConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "beta must lie in [0, 1]");
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  if (beta > 1.0 - alpha + kFractionSlack) {
    throw Error(ErrorCode::BetaExceedsComplement,
                "beta " + format_real(beta) + " exceeds 1 - alpha = " + format_real(1.0 - alpha));
  }
}

std::size_t coreset_budget(std::size_t n, double alpha) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - alpha)));
}

std::size_t hard_cutoff_count(std::size_t n, double beta) {
  const double raw = static_cast<double>(n) * beta;
  return std::min(n, static_cast<std::size_t>(std::floor(raw + kFractionSlack * std::max(1.0, raw))));
}

std::vector<std::size_t> rank_by_score(std::span<const InfluenceRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].score != records[b].score) return records[a].score > records[b].score;
    return records[a].sample_id < records[b].sample_id;
  });
  return order;
}

Coreset select_top_i(std::span<const InfluenceRecord> records, std::size_t m) {
  require_budget(m, records.size());
  require_distinct_ids(records);
  const auto order = rank_by_score(records);
  Coreset c;
  c.config.strategy = Strategy::TopI;
  c.budget = m;
  c.pool_size = records.size();
  for (std::size_t i = 0; i < m; ++i) c.ids.push_back(records[order[i]].sample_id);
  c.ids = sorted(std::move(c.ids));
  return c;
}

Coreset select_random(std::span<const std::size_t> ids, std::size_t m, std::uint64_t seed) {
  require_budget(m, ids.size());
  Rng rng(derive_seed(seed, 0x72616e64u));
  Coreset c;
  c.config.strategy = Strategy::Random;
  c.config.seed = seed;
  c.budget = m;
  c.pool_size = ids.size();
  for (const auto pos : rng.sample_without_replacement(ids.size(), m)) c.ids.push_back(ids[pos]);
  c.ids = sorted(std::move(c.ids));
  if (std::adjacent_find(c.ids.begin(), c.ids.end()) != c.ids.end()) {
    throw Error(ErrorCode::InvalidBudget, "candidate id list contains duplicates");
  }
  return c;
}

Stratification stratify(std::span<const InfluenceRecord> records, double beta, std::size_t k) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "beta must lie in [0, 1]");
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
  require_distinct_ids(records);
  const auto order = rank_by_score(records);
  const std::size_t cut = hard_cutoff_count(records.size(), beta);
  if (cut >= records.size()) throw Error(ErrorCode::EmptyAfterCutoff, "hard cutoff removes every record");

  Stratification out;
  for (std::size_t i = 0; i < cut; ++i) out.pruned_ids.push_back(records[order[i]].sample_id);
  out.pruned_ids = sorted(std::move(out.pruned_ids));

  const double hi = records[order[cut]].score;
  const double lo = records[order.back()].score;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw Error(ErrorCode::InvalidConfig, "non-finite score");

  // Boundaries are computed once; membership is decided against them, so every
  // member provably lies inside its reported range.
  std::vector<double> bounds(k + 1);
  for (std::size_t i = 0; i <= k; ++i) {
    bounds[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k);
  }
  bounds[k] = hi;

  out.strata.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.strata[i].index = i;
    out.strata[i].lo = bounds[i];
    out.strata[i].hi = bounds[i + 1];
    out.strata[i].closed = i + 1 == k;
  }
  for (std::size_t r = cut; r < order.size(); ++r) {
    const double s = records[order[r]].score;
    std::size_t idx = k - 1;
    if (hi > lo) {
      // First boundary strictly above s, minus one; the maximum lands in the last stratum.
      const auto it = std::upper_bound(bounds.begin(), bounds.begin() + static_cast<std::ptrdiff_t>(k), s);
      idx = static_cast<std::size_t>(it - bounds.begin()) - 1;
    }
    out.strata[idx].member_ids.push_back(records[order[r]].sample_id);
  }
  for (auto& st : out.strata) st.member_ids = sorted(std::move(st.member_ids));
  return out;
}

Coreset select_cci(std::span<const InfluenceRecord> records, const SelectionConfig& cfg) {
  cfg.validate();
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, "no score records");
  const std::size_t n = records.size();
  std::size_t m = coreset_budget(n, cfg.alpha);
  if (m == 0) throw Error(ErrorCode::InvalidBudget, "budget round(n(1 - alpha)) is 0");

  auto strat = stratify(records, cfg.beta, cfg.k);
  const std::size_t pool = n - strat.pruned_ids.size();
  if (m > pool) {
    throw Error(ErrorCode::InfeasibleBudget, "budget " + std::to_string(m) + " exceeds the " +
                                                 std::to_string(pool) + " records left after the hard cutoff");
  }

  Coreset c;
  c.config = cfg;
  c.config.strategy = Strategy::Cci;
  c.budget = m;
  c.pool_size = n;
  c.pruned_ids = strat.pruned_ids;

  std::vector<std::size_t> remaining(strat.strata.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::size_t iteration = 0;
  while (!remaining.empty()) {
    // Equal widths make range start order the same as index order.
    const auto pick = std::min_element(remaining.begin(), remaining.end(), [&](std::size_t a, std::size_t b) {
      const auto sa = strat.strata[a].member_ids.size();
      const auto sb = strat.strata[b].member_ids.size();
      return sa != sb ? sa < sb : a < b;
    });
    const Stratum& st = strat.strata[*pick];
    const std::size_t take = std::min(st.member_ids.size(), m / remaining.size());
    Rng rng(derive_seed(cfg.seed, st.index));
    for (const auto pos : rng.sample_without_replacement(st.member_ids.size(), take)) {
      c.ids.push_back(st.member_ids[pos]);
    }
    c.allocations.push_back({iteration++, st.index, st.member_ids.size(), remaining.size(), m, take});
    m -= take;
    remaining.erase(pick);
  }
  c.ids = sorted(std::move(c.ids));
  return c;
}

Coreset select(std::span<const InfluenceRecord> records, const SelectionConfig& cfg) {
  cfg.validate();
  Coreset c;
  switch (cfg.strategy) {
    case Strategy::Cci:
      return select_cci(records, cfg);
    case Strategy::TopI:
      c = select_top_i(records, coreset_budget(records.size(), cfg.alpha));
      break;
    case Strategy::Random: {
      std::vector<std::size_t> ids;
      for (const auto& r : records) ids.push_back(r.sample_id);
      std::sort(ids.begin(), ids.end());
      c = select_random(ids, coreset_budget(records.size(), cfg.alpha), cfg.seed);
      break;
    }
  }
  c.config = cfg;
  return c;
}

// --------------------------------------------------------------------- io

void write_coreset(std::ostream& out, const Coreset& c) {
  out << "#strategy\t" << strategy_name(c.config.strategy) << '\n';
  out << "#alpha\t" << format_real(c.config.alpha) << '\n';
  out << "#beta\t" << format_real(c.config.beta) << '\n';
  out << "#k\t" << c.config.k << '\n';
  out << "#seed\t" << c.config.seed << '\n';
  out << "#score_digest\t" << (c.score_digest.empty() ? "-" : c.score_digest) << '\n';
  out << "#corpus_digest\t" << (c.corpus_digest.empty() ? "-" : c.corpus_digest) << '\n';
  out << "#pool_size\t" << c.pool_size << '\n';
  out << "#budget\t" << c.budget << '\n';
  for (const auto id : c.ids) out << id << '\n';
}

Coreset read_coreset(std::istream& in) {
  Coreset c;
  std::map<std::string, std::string> header;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw Error(ErrorCode::MalformedFile, "bad coreset header '" + line + "'");
      header[line.substr(1, tab - 1)] = line.substr(tab + 1);
      continue;
    }
    std::size_t pos = 0;
    unsigned long long id = 0;
    try {
      id = std::stoull(line, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != line.size()) throw Error(ErrorCode::MalformedFile, "bad coreset id '" + line + "'");
    c.ids.push_back(static_cast<std::size_t>(id));
  }
  const auto need = [&](const char* key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end()) throw Error(ErrorCode::MalformedFile, std::string("coreset header lacks #") + key);
    return it->second;
  };
  try {
    c.config.strategy = parse_strategy(need("strategy"));
    c.config.alpha = std::stod(need("alpha"));
    c.config.beta = std::stod(need("beta"));
    c.config.k = std::stoull(need("k"));
    c.config.seed = std::stoull(need("seed"));
    c.pool_size = std::stoull(need("pool_size"));
    c.budget = std::stoull(need("budget"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedFile, "unparseable coreset header value");
  }
  c.score_digest = need("score_digest") == "-" ? "" : need("score_digest");
  c.corpus_digest = need("corpus_digest") == "-" ? "" : need("corpus_digest");
  if (!std::is_sorted(c.ids.begin(), c.ids.end()) ||
      std::adjacent_find(c.ids.begin(), c.ids.end()) != c.ids.end()) {
    throw Error(ErrorCode::MalformedFile, "coreset ids must be ascending and distinct");
  }
  if (c.ids.size() != c.budget) throw Error(ErrorCode::MalformedFile, "coreset id count differs from #budget");
  return c;
}

void write_allocations(std::ostream& out, const Coreset& c) {
  out << "iteration\tstratum\tstratum_size\tstrata_left\tbudget_before\ttaken\n";
  for (const auto& a : c.allocations) {
    out << a.iteration << '\t' << a.stratum << '\t' << a.stratum_size << '\t' << a.strata_left << '\t'
        << a.budget_before << '\t' << a.taken << '\n';
  }
}

void write_coreset_file(const std::string& path, const Coreset& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write '" + path + "'");
  write_coreset(out, c);
  if (c.config.strategy == Strategy::Cci) {
    std::ofstream alloc(path + ".alloc.tsv", std::ios::binary);
    if (!alloc) throw Error(ErrorCode::FileNotFound, "cannot write '" + path + ".alloc.tsv'");
    write_allocations(alloc, c);
  }
}

Coreset read_coreset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path + "'");
  return read_coreset(in);
}

}  // namespace prunekit
