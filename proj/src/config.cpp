#include "prunekit/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>

#include "prunekit/digest.hpp"
#include "prunekit/error.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorCode::InvalidConfig, "cannot parse '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) bad_value(key, value);
  return v;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string text(value);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || errno == ERANGE) bad_value(key, value);
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  bad_value(key, value);
}

template <typename T>
void parse_into(std::string_view key, std::string_view value, T& out) {
  if constexpr (std::is_same_v<T, double>) {
    out = parse_double(key, value);
  } else if constexpr (std::is_same_v<T, bool>) {
    out = parse_bool(key, value);
  } else if constexpr (std::is_same_v<T, std::string>) {
    out = std::string(value);
  } else if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
    // "auto" defers to the global seed.
    if (value == "auto") out.reset();
    else out = parse_u64(key, value);
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    out.clear();
    std::size_t pos = 0;
    while (pos <= value.size()) {
      const auto comma = std::min(value.find(',', pos), value.size());
      out.push_back(parse_u64(key, trim(value.substr(pos, comma - pos))));
      pos = comma + 1;
    }
  } else {
    out = static_cast<T>(parse_u64(key, value));
  }
}

template <typename T>
std::string render(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return format_real(v);
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
    return v ? std::to_string(*v) : "auto";
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
  } else {
    return std::to_string(v);
  }
}

struct Entry {
  std::function<void(PipelineConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
Entry field(T& (*ref)(PipelineConfig&)) {
  return {[ref](PipelineConfig& c, std::string_view key, std::string_view value) { parse_into(key, value, ref(c)); },
          [ref](const PipelineConfig& c) { return render(ref(const_cast<PipelineConfig&>(c))); }};
}

#define PK_FIELD(expr) field(+[](PipelineConfig& c) -> auto& { return expr; })

const std::map<std::string, Entry, std::less<>>& registry() {
  static const std::map<std::string, Entry, std::less<>> table = [] {
    std::map<std::string, Entry, std::less<>> t;
    t["seed"] = PK_FIELD(c.seed);
    t["workers"] = PK_FIELD(c.workers);
    t["alphabet"] = PK_FIELD(c.alphabet);
    t["max_len"] = PK_FIELD(c.max_len);
    t["t_to_u"] = PK_FIELD(c.t_to_u);

    t["model.embed_dim"] = PK_FIELD(c.model.embed_dim);
    t["model.hidden_dim"] = PK_FIELD(c.model.hidden_dim);
    t["model.context_window"] = PK_FIELD(c.model.context_window);
    t["model.init_scale"] = PK_FIELD(c.model.init_scale);

    t["gen.n_sequences"] = PK_FIELD(c.gen.n_sequences);
    t["gen.min_length"] = PK_FIELD(c.gen.min_length);
    t["gen.max_length"] = PK_FIELD(c.gen.max_length);
    t["gen.n_classes"] = PK_FIELD(c.gen.n_classes);
    t["gen.redundancy"] = PK_FIELD(c.gen.redundancy);
    t["gen.mutation_rate"] = PK_FIELD(c.gen.mutation_rate);
    t["gen.seed_pool"] = PK_FIELD(c.gen.seed_pool);
    t["gen.pool_divergence"] = PK_FIELD(c.gen.pool_divergence);
    t["gen.motif_length"] = PK_FIELD(c.gen.motif_length);
    t["gen.motifs_per_sequence"] = PK_FIELD(c.gen.motifs_per_sequence);
    t["gen.heldout"] = PK_FIELD(c.gen.heldout);
    t["gen.seed"] = PK_FIELD(c.gen_seed);

    t["score.subset_fraction"] = PK_FIELD(c.score.subset_fraction);
    t["score.adapt_epochs"] = PK_FIELD(c.score.adapt_epochs);
    t["score.adapt_lr"] = PK_FIELD(c.score.adapt_lr);
    t["score.adapt_warmup"] = PK_FIELD(c.score.adapt_warmup);
    t["score.adapt_weight_decay"] = PK_FIELD(c.score.adapt_weight_decay);
    t["score.adapt_batch_size"] = PK_FIELD(c.score.adapt_batch_size);
    t["score.damping_rel"] = PK_FIELD(c.score.damping_rel);
    t["score.mask_rate"] = PK_FIELD(c.score.mask_rate);
    t["score.mask_samples"] = PK_FIELD(c.score.mask_samples);
    t["score.fisher_chunk"] = PK_FIELD(c.score.fisher_chunk);
    t["score.seed"] = PK_FIELD(c.score_seed);

    t["select.strategy"] = {
        [](PipelineConfig& c, std::string_view, std::string_view v) { c.select.strategy = parse_strategy(v); },
        [](const PipelineConfig& c) { return std::string(strategy_name(c.select.strategy)); }};
    t["select.alpha"] = PK_FIELD(c.select.alpha);
    t["select.beta"] = PK_FIELD(c.select.beta);
    t["select.k"] = PK_FIELD(c.select.k);
    t["select.seed"] = PK_FIELD(c.select_seed);

    t["train.epochs"] = PK_FIELD(c.train.epochs);
    t["train.batch_size"] = PK_FIELD(c.train.batch_size);
    t["train.lr"] = PK_FIELD(c.train.optimizer.lr);
    t["train.warmup"] = PK_FIELD(c.train.optimizer.warmup_steps);
    t["train.weight_decay"] = PK_FIELD(c.train.optimizer.weight_decay);
    t["train.beta1"] = PK_FIELD(c.train.optimizer.beta1);
    t["train.beta2"] = PK_FIELD(c.train.optimizer.beta2);
    t["train.eps"] = PK_FIELD(c.train.optimizer.eps);
    t["train.mask_rate"] = PK_FIELD(c.train.mask_rate);
    t["train.seed"] = PK_FIELD(c.train_seed);

    t["eval.mask_rate"] = PK_FIELD(c.eval.mask_rate);
    t["eval.mask_seed"] = PK_FIELD(c.eval.mask_seed);
    t["eval.probe_l2"] = PK_FIELD(c.eval.probe_l2);
    t["eval.probe_train_fraction"] = PK_FIELD(c.eval.probe_train_fraction);
    t["eval.probe_seeds"] = PK_FIELD(c.eval.probe_seeds);

    t["oracle.instance"] = PK_FIELD(c.oracle.instance);
    t["oracle.n_samples"] = PK_FIELD(c.oracle.probe.n_samples);
    t["oracle.n_classes"] = PK_FIELD(c.oracle.probe.n_classes);
    t["oracle.n_features"] = PK_FIELD(c.oracle.probe.n_features);
    t["oracle.duplicate_fraction"] = PK_FIELD(c.oracle.probe.duplicate_fraction);
    t["oracle.n_prototypes"] = PK_FIELD(c.oracle.probe.n_prototypes);
    t["oracle.feature_noise"] = PK_FIELD(c.oracle.probe.feature_noise);
    t["oracle.label_noise"] = PK_FIELD(c.oracle.probe.label_noise);
    t["oracle.l2_reg"] = PK_FIELD(c.oracle.probe.l2_reg);
    t["oracle.groups"] = PK_FIELD(c.oracle.orthogonal_groups);
    t["oracle.group_size"] = PK_FIELD(c.oracle.orthogonal_group_size);
    t["oracle.subset_fraction"] = PK_FIELD(c.oracle.oracle.scoring.subset_fraction);
    t["oracle.adapt_epochs"] = PK_FIELD(c.oracle.oracle.scoring.adapt_epochs);
    t["oracle.damping_rel"] = PK_FIELD(c.oracle.oracle.scoring.damping_rel);
    t["oracle.with_loo"] = PK_FIELD(c.oracle.oracle.with_loo);
    t["oracle.tie_tolerance"] = PK_FIELD(c.oracle.oracle.tie_tolerance);
    t["oracle.seed"] = PK_FIELD(c.oracle_seed);
    return t;
  }();
  return table;
}

#undef PK_FIELD

const Entry& lookup(std::string_view key) {
  const auto& table = registry();
  const auto it = table.find(key);
  if (it == table.end()) throw Error(ErrorCode::UnknownConfigKey, "unknown key '" + std::string(key) + "'");
  return it->second;
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
  lookup(key).set(*this, key, trim(value));
}

std::string PipelineConfig::get(std::string_view key) const { return lookup(key).get(*this); }

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : registry()) out.push_back(k);
    return out;
  }();
  return names;
}

std::uint64_t PipelineConfig::global_seed() const {
  if (seed) return *seed;
  if (const char* env = std::getenv("PRUNEKIT_SEED"); env != nullptr && *env != '\0') {
    return parse_u64("PRUNEKIT_SEED", trim(env));
  }
  return 0;
}

void PipelineConfig::finalize() {
  const auto alpha = Alphabet::from_name(alphabet);
  model.kind = ModelKind::MlmTiny;
  model.vocab_size = alpha.vocab_size();
  model.validate();
  gen.alphabet = alphabet;
  gen.seed = resolve(gen_seed);

  score.workers = workers;
  score.subset_seed = resolve(score_seed);
  score.mask_seed = derive_seed(resolve(score_seed), 0x6d61736bu);
  score.validate();

  select.seed = resolve(select_seed);
  train.seed = resolve(train_seed);
  train.workers = workers;

  oracle.probe.seed = resolve(oracle_seed);
  oracle.oracle.scoring.workers = workers;
  oracle.oracle.scoring.subset_seed = resolve(oracle_seed);
  if (workers < 1) throw Error(ErrorCode::InvalidConfig, "workers must be >= 1");
  if (max_len < 1) throw Error(ErrorCode::InvalidConfig, "max_len must be >= 1");
}

void load_config(std::istream& in, PipelineConfig& cfg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
  }
}

void load_config_file(const std::string& path, PipelineConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open config '" + path + "'");
  load_config(in, cfg);
}

void apply_assignment(std::string_view assignment, PipelineConfig& cfg) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::InvalidConfig, "expected key=value, got '" + std::string(assignment) + "'");
  }
  cfg.set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void write_config(std::ostream& out, const PipelineConfig& cfg, std::string_view prefix) {
  for (const auto& key : PipelineConfig::keys()) out << prefix << key << '=' << cfg.get(key) << '\n';
}

}  // namespace prunekit
