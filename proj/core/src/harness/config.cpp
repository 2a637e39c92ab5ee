#include "fedssl/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

#include "fedssl/errors.hpp"

namespace fedssl::harness {
namespace {

// Reads typed values out of one TOML table and remembers which keys were consumed, so the
// leftovers can be reported as unknown.
class TableReader {
 public:
  TableReader(const toml::table* table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

  std::string key_path(std::string_view key) const { return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key); }

  const toml::node* find(std::string_view key) {
    seen_.insert(std::string(key));
    return table_ ? table_->get(key) : nullptr;
  }

  void read(std::string_view key, double& out) {
    const auto* node = find(key);
    if (!node) return;
    if (auto v = node->value_exact<double>()) {
      out = *v;
    } else if (auto i = node->value_exact<std::int64_t>()) {
      out = static_cast<double>(*i);
    } else {
      throw ConfigError("type mismatch for key \"" + key_path(key) + "\": expected a number");
    }
  }

  void read(std::string_view key, std::size_t& out) {
    const auto* node = find(key);
    if (!node) return;
    auto i = node->value_exact<std::int64_t>();
    if (!i) throw ConfigError("type mismatch for key \"" + key_path(key) + "\": expected an integer");
    if (*i < 0) throw ConfigError("range error for key \"" + key_path(key) + "\": must be >= 0");
    out = static_cast<std::size_t>(*i);
  }

  void read(std::string_view key, bool& out) {
    const auto* node = find(key);
    if (!node) return;
    auto b = node->value_exact<bool>();
    if (!b) throw ConfigError("type mismatch for key \"" + key_path(key) + "\": expected a boolean");
    out = *b;
  }

  void read(std::string_view key, std::string& out) {
    const auto* node = find(key);
    if (!node) return;
    auto s = node->value_exact<std::string>();
    if (!s) throw ConfigError("type mismatch for key \"" + key_path(key) + "\": expected a string");
    out = *s;
  }

  void read(std::string_view key, std::vector<std::size_t>& out) {
    const auto* node = find(key);
    if (!node) return;
    const auto* arr = node->as_array();
    if (!arr) throw ConfigError("type mismatch for key \"" + key_path(key) + "\": expected an array of integers");
    std::vector<std::size_t> values;
    for (const auto& el : *arr) {
      auto i = el.value_exact<std::int64_t>();
      if (!i || *i <= 0) throw ConfigError("type mismatch for key \"" + key_path(key) + "\": expected positive integers");
      values.push_back(static_cast<std::size_t>(*i));
    }
    out = std::move(values);
  }

  const toml::table* subtable(std::string_view key) {
    const auto* node = find(key);
    if (!node) return nullptr;
    const auto* t = node->as_table();
    if (!t) throw ConfigError("type mismatch for key \"" + key_path(key) + "\": expected a table");
    return t;
  }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.contains(std::string(k.str()))) throw ConfigError("unknown key \"" + key_path(k.str()) + "\"");
    }
  }

 private:
  const toml::table* table_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void require_range(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ConfigError("range error for key \"" + key + "\": " + rule);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string enum_name(ssl::ConfidenceMetric m) { return std::string(ssl::to_string(m)); }
std::string enum_name(ssl::SelectionMode m) { return std::string(ssl::to_string(m)); }

ExperimentConfig from_table(const toml::table& root, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  TableReader top(&root, "");
  top.read("name", cfg.name);
  std::size_t seed = cfg.seed;
  top.read("seed", seed);
  cfg.seed = seed;
  top.read("decision_log", cfg.decision_log);
  std::string out_dir;
  top.read("output_dir", out_dir);
  if (!root.contains("output_dir")) throw ConfigError("missing required key \"output_dir\"");
  cfg.output_dir = resolve(base_dir, out_dir);

  {
    TableReader t(top.subtable("dataset"), "dataset");
    std::string kind = "synthetic";
    t.read("kind", kind);
    if (kind == "synthetic") {
      cfg.dataset.kind = DatasetKind::Synthetic;
    } else if (kind == "idx") {
      cfg.dataset.kind = DatasetKind::Idx;
    } else {
      throw ConfigError("range error for key \"dataset.kind\": expected \"synthetic\" or \"idx\"");
    }
    t.read("classes", cfg.dataset.classes);
    t.read("dim", cfg.dataset.dim);
    t.read("per_class", cfg.dataset.per_class);
    t.read("spread", cfg.dataset.spread);
    std::string images;
    std::string labels;
    t.read("images", images);
    t.read("labels", labels);
    cfg.dataset.images = resolve(base_dir, images);
    cfg.dataset.labels = resolve(base_dir, labels);
    t.read("train_fraction", cfg.dataset.train_fraction);
    t.read("validation_fraction", cfg.dataset.validation_fraction);
    t.read("test_fraction", cfg.dataset.test_fraction);
    t.reject_unknown();
  }
  {
    TableReader t(top.subtable("partition"), "partition");
    t.read("clients", cfg.partition.clients);
    t.read("dirichlet_alpha", cfg.partition.dirichlet_alpha);
    t.read("label_ratio", cfg.partition.label_ratio);
    t.reject_unknown();
  }
  {
    TableReader t(top.subtable("training"), "training");
    t.read("rounds", cfg.training.rounds);
    t.read("participation", cfg.training.participation);
    t.read("eval_every", cfg.training.eval_every);
    t.read("workers", cfg.training.workers);
    t.read("hidden", cfg.training.hidden);
    t.reject_unknown();
  }
  {
    TableReader t(top.subtable("method"), "method");
    std::string name(federation::to_string(cfg.method.method));
    t.read("name", name);
    const auto m = federation::parse_method(name);
    if (!m) throw ConfigError("range error for key \"method.name\": unknown method \"" + name + "\"");
    cfg.method.method = *m;
    t.read("tau", cfg.method.tau);
    t.read("tau_prime", cfg.method.tau_prime);
    t.read("lr", cfg.method.lr);
    t.read("batch_size", cfg.method.batch_size);
    // FedProx variants get a default proximal coefficient unless the document sets one.
    if (cfg.method.uses_proximal()) cfg.method.prox_mu = 0.01;
    t.read("prox_mu", cfg.method.prox_mu);
    t.read("uda_temperature", cfg.method.uda_temperature);
    t.reject_unknown();
  }
  {
    TableReader t(top.subtable("ssl"), "ssl");
    t.read("beta", cfg.method.ssl.beta);
    t.read("lambda0", cfg.method.ssl.lambda0);
    std::string metric = enum_name(cfg.method.ssl.confidence);
    t.read("confidence", metric);
    if (metric == "variance") {
      cfg.method.ssl.confidence = ssl::ConfidenceMetric::Variance;
    } else if (metric == "neg_entropy") {
      cfg.method.ssl.confidence = ssl::ConfidenceMetric::NegEntropy;
    } else {
      throw ConfigError("range error for key \"ssl.confidence\": expected \"variance\" or \"neg_entropy\"");
    }
    std::string mode = enum_name(cfg.method.ssl.selection);
    t.read("selection", mode);
    if (mode == "confidence") {
      cfg.method.ssl.selection = ssl::SelectionMode::ConfidenceSelect;
    } else if (mode == "local_only") {
      cfg.method.ssl.selection = ssl::SelectionMode::LocalOnly;
    } else if (mode == "global_only") {
      cfg.method.ssl.selection = ssl::SelectionMode::GlobalOnly;
    } else {
      throw ConfigError(
          "range error for key \"ssl.selection\": expected \"confidence\", \"local_only\" or \"global_only\"");
    }
    t.reject_unknown();
  }
  {
    TableReader t(top.subtable("augment"), "augment");
    t.read("n_ops", cfg.augment.n_ops);
    t.read("magnitude", cfg.augment.magnitude);
    t.read("strong", cfg.augment.strong_enabled);
    t.read("vector_noise", cfg.augment.vector_noise);
    t.read("vector_mask", cfg.augment.vector_mask);
    t.reject_unknown();
  }
  top.reject_unknown();
  validate(cfg);
  return cfg;
}

toml::table parse_toml(std::string_view text) {
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML syntax error: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

toml::node_view<toml::node> parse_value_snippet(std::string_view snippet, toml::table& holder) {
  holder = parse_toml("v = " + std::string(snippet));
  return holder["v"];
}

// TOML source text for a scalar, with doubles in shortest round-trip form.
std::string value_snippet(const toml::node& node, const std::string& key) {
  if (auto d = node.value_exact<double>()) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, *d);
    std::string text(buf, res.ptr);
    if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
    return text;
  }
  if (auto i = node.value_exact<std::int64_t>()) return std::to_string(*i);
  if (auto b = node.value_exact<bool>()) return *b ? "true" : "false";
  if (auto s = node.value_exact<std::string>()) {
    std::ostringstream ss;
    ss << toml::value<std::string>(*s);
    std::string text = ss.str();
    if (text.size() >= 2 && text.front() == '\'' && text.back() == '\'') text = '"' + text.substr(1, text.size() - 2) + '"';
    return text;
  }
  throw ConfigError(key + ": grid values must be scalars");
}

void set_dotted(toml::table& root, const std::string& dotted, const std::string& snippet) {
  toml::table* t = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      toml::table holder;
      auto v = parse_value_snippet(snippet, holder);
      t->insert_or_assign(part, *v.node());
      return;
    }
    auto* node = t->get(part);
    if (!node) {
      t->insert_or_assign(part, toml::table{});
      node = t->get(part);
    }
    t = node->as_table();
    if (!t) throw ConfigError("override \"" + dotted + "\": \"" + part + "\" is not a table");
    start = dot + 1;
  }
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

void validate(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  require_range(d.classes >= 2, "dataset.classes", "must be >= 2");
  if (d.kind == DatasetKind::Synthetic) {
    require_range(d.dim >= 2, "dataset.dim", "must be >= 2");
    require_range(d.per_class >= 1, "dataset.per_class", "must be >= 1");
    require_range(d.spread >= 0.0 && std::isfinite(d.spread), "dataset.spread", "must be >= 0");
  } else {
    if (!std::filesystem::exists(d.images)) throw ConfigError("dataset.images: file not found: " + d.images.string());
    if (!std::filesystem::exists(d.labels)) throw ConfigError("dataset.labels: file not found: " + d.labels.string());
  }
  require_range(d.train_fraction > 0.0 && d.train_fraction <= 1.0, "dataset.train_fraction", "must be in (0, 1]");
  require_range(d.validation_fraction >= 0.0, "dataset.validation_fraction", "must be >= 0");
  require_range(d.test_fraction > 0.0, "dataset.test_fraction", "must be > 0");
  require_range(std::abs(d.train_fraction + d.validation_fraction + d.test_fraction - 1.0) < 1e-9,
                "dataset.test_fraction", "train + validation + test fractions must sum to 1");

  require_range(cfg.partition.clients >= 1, "partition.clients", "must be >= 1");
  require_range(cfg.partition.dirichlet_alpha > 0.0, "partition.dirichlet_alpha", "must be > 0");
  require_range(cfg.partition.label_ratio > 0.0 && cfg.partition.label_ratio <= 1.0, "partition.label_ratio",
                "must be in (0, 1]");

  const auto& t = cfg.training;
  require_range(t.participation > 0.0 && t.participation <= 1.0, "training.participation", "must be in (0, 1]");
  require_range(t.eval_every >= 1, "training.eval_every", "must be >= 1");

  const auto& m = cfg.method;
  require_range(m.ssl.beta >= 0.0 && m.ssl.beta <= 1.0, "ssl.beta", "must be in [0, 1]");
  require_range(m.ssl.lambda0 >= 0.0, "ssl.lambda0", "must be >= 0");
  require_range(m.tau >= 1, "method.tau", "must be >= 1");
  require_range(m.tau_prime >= 1, "method.tau_prime", "must be >= 1");
  require_range(m.lr >= 0.0, "method.lr", "must be >= 0");
  require_range(m.batch_size >= 1, "method.batch_size", "must be >= 1");
  require_range(m.prox_mu >= 0.0, "method.prox_mu", "must be >= 0");
  require_range(m.prox_mu == 0.0 || m.uses_proximal(), "method.prox_mu", "only FedProx methods take a proximal term");
  require_range(m.uda_temperature > 0.0, "method.uda_temperature", "must be > 0");

  require_range(cfg.augment.magnitude >= 0.0 && cfg.augment.magnitude <= 30.0, "augment.magnitude", "must be in [0, 30]");
  require_range(cfg.augment.vector_noise >= 0.0, "augment.vector_noise", "must be >= 0");
  require_range(cfg.augment.vector_mask >= 0.0 && cfg.augment.vector_mask <= 1.0, "augment.vector_mask",
                "must be in [0, 1]");
}

ExperimentConfig parse_config_string(std::string_view toml_text, const std::filesystem::path& base_dir) {
  return from_table(parse_toml(toml_text), base_dir);
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  return parse_config_string(read_file(path), path.parent_path());
}

ExperimentConfig parse_config_with_overrides(std::string_view base_toml, const std::map<std::string, std::string>& overrides,
                                             const std::filesystem::path& base_dir) {
  auto root = parse_toml(base_toml);
  for (const auto& [key, value] : overrides) set_dotted(root, key, value);
  return from_table(root, base_dir);
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("FEDSSL_SEED"); s && *s) {
    char* end = nullptr;
    const auto v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw ConfigError("FEDSSL_SEED must be a non-negative integer");
    cfg.seed = v;
  }
}

std::string to_toml(const ExperimentConfig& cfg) {
  toml::table root;
  root.insert("name", cfg.name);
  root.insert("seed", static_cast<std::int64_t>(cfg.seed));
  root.insert("output_dir", cfg.output_dir.string());
  root.insert("decision_log", cfg.decision_log);

  toml::table dataset;
  dataset.insert("kind", cfg.dataset.kind == DatasetKind::Synthetic ? "synthetic" : "idx");
  dataset.insert("classes", static_cast<std::int64_t>(cfg.dataset.classes));
  dataset.insert("dim", static_cast<std::int64_t>(cfg.dataset.dim));
  dataset.insert("per_class", static_cast<std::int64_t>(cfg.dataset.per_class));
  dataset.insert("spread", cfg.dataset.spread);
  dataset.insert("images", cfg.dataset.images.string());
  dataset.insert("labels", cfg.dataset.labels.string());
  dataset.insert("train_fraction", cfg.dataset.train_fraction);
  dataset.insert("validation_fraction", cfg.dataset.validation_fraction);
  dataset.insert("test_fraction", cfg.dataset.test_fraction);
  root.insert("dataset", std::move(dataset));

  toml::table partition;
  partition.insert("clients", static_cast<std::int64_t>(cfg.partition.clients));
  partition.insert("dirichlet_alpha", cfg.partition.dirichlet_alpha);
  partition.insert("label_ratio", cfg.partition.label_ratio);
  root.insert("partition", std::move(partition));

  toml::table training;
  training.insert("rounds", static_cast<std::int64_t>(cfg.training.rounds));
  training.insert("participation", cfg.training.participation);
  training.insert("eval_every", static_cast<std::int64_t>(cfg.training.eval_every));
  training.insert("workers", static_cast<std::int64_t>(cfg.training.workers));
  toml::array hidden;
  for (auto h : cfg.training.hidden) hidden.push_back(static_cast<std::int64_t>(h));
  training.insert("hidden", std::move(hidden));
  root.insert("training", std::move(training));

  toml::table method;
  method.insert("name", std::string(federation::to_string(cfg.method.method)));
  method.insert("tau", static_cast<std::int64_t>(cfg.method.tau));
  method.insert("tau_prime", static_cast<std::int64_t>(cfg.method.tau_prime));
  method.insert("lr", cfg.method.lr);
  method.insert("batch_size", static_cast<std::int64_t>(cfg.method.batch_size));
  method.insert("prox_mu", cfg.method.prox_mu);
  method.insert("uda_temperature", cfg.method.uda_temperature);
  root.insert("method", std::move(method));

  toml::table s;
  s.insert("beta", cfg.method.ssl.beta);
  s.insert("lambda0", cfg.method.ssl.lambda0);
  s.insert("confidence", enum_name(cfg.method.ssl.confidence));
  s.insert("selection", enum_name(cfg.method.ssl.selection));
  root.insert("ssl", std::move(s));

  toml::table augment;
  augment.insert("n_ops", static_cast<std::int64_t>(cfg.augment.n_ops));
  augment.insert("magnitude", cfg.augment.magnitude);
  augment.insert("strong", cfg.augment.strong_enabled);
  augment.insert("vector_noise", cfg.augment.vector_noise);
  augment.insert("vector_mask", cfg.augment.vector_mask);
  root.insert("augment", std::move(augment));

  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

GridSpec parse_grid_string(std::string_view toml_text, const std::filesystem::path& base_dir) {
  const auto root = parse_toml(toml_text);
  GridSpec grid;
  TableReader top(&root, "");
  std::string base;
  std::string out;
  top.read("base", base);
  top.read("output_dir", out);
  if (base.empty()) throw ConfigError("missing required key \"base\"");
  if (out.empty()) throw ConfigError("missing required key \"output_dir\"");
  grid.base = resolve(base_dir, base);
  grid.output_dir = resolve(base_dir, out);
  if (const auto* axes = top.subtable("grid")) {
    for (const auto& [k, v] : *axes) {
      const auto* arr = v.as_array();
      const std::string key(k.str());
      if (!arr || arr->empty()) throw ConfigError("grid." + key + ": expected a non-empty array");
      auto& values = grid.axes[key];
      for (const auto& el : *arr) values.push_back(value_snippet(el, "grid." + key));
    }
  }
  top.reject_unknown();
  return grid;
}

GridSpec parse_grid(const std::filesystem::path& path) {
  return parse_grid_string(read_file(path), path.parent_path());
}

}  // namespace fedssl::harness
