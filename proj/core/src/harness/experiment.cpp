#include "fedssl/harness/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include "fedssl/data/idx.hpp"
#include "fedssl/data/partition.hpp"
#include "fedssl/errors.hpp"
#include "fedssl/nn/metrics.hpp"
#include "fedssl/nn/network.hpp"
#include "fedssl/rng.hpp"

namespace fedssl::harness {
namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string unquote(const std::string& v) {
  return v.size() >= 2 && v.front() == '"' && v.back() == '"' ? v.substr(1, v.size() - 2) : v;
}

federation::EvalSet eval_set(const data::Dataset& d) { return {data::feature_matrix(d), data::labels_of(d)}; }

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

// Buffers per-sample decisions so the log is ordered by (round, client, sample) whatever the
// client scheduling.
class DecisionLog {
 public:
  DecisionLog(const std::filesystem::path& path, ssl::ConfidenceMetric metric) : out_(open_output(path)), metric_(metric) {
    out_ << "round,client,sample,selected,conf_global,conf_local,pred_global,pred_local,label,true_label,kl_active,"
            "lambda\n";
  }

  void record(std::size_t round, const data::ClientDataset& client, std::span<const ssl::PseudoLabelDecision> ds) {
    std::ostringstream rows;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& d = ds[i];
      const bool global_selected = d.selected == ssl::ModelChoice::Global;
      const auto& g = global_selected ? d.s_star : d.s_minus_star;
      const auto& l = global_selected ? d.s_minus_star : d.s_star;
      rows << round << ',' << client.id << ',' << i << ',' << ssl::to_string(d.selected) << ','
           << fixed(ssl::confidence(g, metric_)) << ',' << fixed(ssl::confidence(l, metric_)) << ',' << g.argmax()
           << ',' << l.argmax() << ',' << (d.label ? std::to_string(*d.label) : std::string("discard")) << ','
           << data::QuarantineAudit::label(client.unlabeled, i) << ',' << (d.kl_active ? 1 : 0) << ','
           << fixed(d.lambda) << '\n';
    }
    std::lock_guard lock(mutex_);
    pending_[client.id] += rows.str();
  }

  void flush() {
    std::lock_guard lock(mutex_);
    for (const auto& [id, text] : pending_) out_ << text;
    pending_.clear();
  }

 private:
  std::ofstream out_;
  ssl::ConfidenceMetric metric_;
  std::mutex mutex_;
  std::map<std::size_t, std::string> pending_;
};

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
  validate(cfg);
  data::Dataset pool;
  if (cfg.dataset.kind == DatasetKind::Synthetic) {
    pool = data::generate_synthetic(cfg.dataset.classes, cfg.dataset.dim, cfg.dataset.per_class, cfg.dataset.spread,
                                    cfg.seed);
  } else {
    pool = data::load_idx(cfg.dataset.images, cfg.dataset.labels, cfg.dataset.classes);
  }
  const auto split =
      data::holdout_split(pool, cfg.dataset.train_fraction, cfg.dataset.validation_fraction, cfg.seed);
  auto pspec = cfg.partition;
  pspec.seed = cfg.seed;

  PreparedData out;
  out.clients = data::build_clients(split.train, pspec);
  out.validation = eval_set(split.validation);
  out.test = eval_set(split.test);
  out.augment = cfg.augment;
  out.augment.image = pool.image;
  out.classes = pool.classes;
  out.input_width = pool.dim;
  return out;
}

federation::TrainingOptions training_options(const ExperimentConfig& cfg) {
  auto opts = cfg.training;
  opts.seed = cfg.seed;
  return opts;
}

void write_metrics_csv(std::ostream& out, std::span<const federation::RoundMetrics> rounds) {
  out << kMetricsHeader << '\n';
  for (const auto& m : rounds) {
    out << m.round << ',' << fixed(m.test_accuracy) << ',' << fixed(m.mean_mismatch) << ','
        << fixed(m.accepted_fraction) << ',' << fixed(m.pseudo_accuracy) << ',' << fixed(m.mean_lambda) << ','
        << fixed(m.sup_loss) << ',' << fixed(m.unsup_ce) << ',' << fixed(m.unsup_kl) << '\n';
  }
}

RunOutcome run_experiment_detailed(const ExperimentConfig& cfg, std::ostream* log) {
  const auto prepared = prepare_data(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  {
    auto echo = open_output(cfg.output_dir / "config.toml");
    echo << to_toml(cfg);
  }

  const data::Augmenter augmenter(prepared.augment);
  federation::Observers observers;
  std::unique_ptr<DecisionLog> decisions;
  if (cfg.decision_log && cfg.method.method == federation::Method::FedLabel) {
    decisions = std::make_unique<DecisionLog>(cfg.output_dir / "decisions.csv", cfg.method.ssl.confidence);
    observers.on_decisions = [&](std::size_t round, const data::ClientDataset& client,
                                 std::span<const ssl::PseudoLabelDecision> ds) { decisions->record(round, client, ds); };
    observers.on_round = [&](const federation::ServerState&, std::span<const federation::ClientUpdate>,
                             std::span<const double>) { decisions->flush(); };
  }
  const auto options = training_options(cfg);
  if (log) {
    *log << cfg.name << ": " << federation::to_string(cfg.method.method) << ", " << prepared.clients.size()
         << " clients, " << options.rounds << " rounds, seed " << cfg.seed << '\n';
  }
  auto result = federation::run_training(prepared.clients, cfg.method, options, augmenter, prepared.test, observers);

  RunOutcome outcome;
  outcome.metrics_path = cfg.output_dir / "metrics.csv";
  {
    auto out = open_output(outcome.metrics_path);
    write_metrics_csv(out, result.rounds);
  }
  outcome.final_accuracy = result.rounds.empty() ? 0.0 : result.rounds.back().test_accuracy;
  double best = 0.0;
  for (const auto& m : result.rounds) best = std::max(best, m.test_accuracy);
  std::ostringstream summary;
  summary << "name=" << cfg.name << " method=" << federation::to_string(cfg.method.method) << " seed=" << cfg.seed
          << " rounds=" << result.rounds.size() << " final_test_acc=" << fixed(outcome.final_accuracy)
          << " best_test_acc=" << fixed(best) << '\n';
  {
    auto out = open_output(cfg.output_dir / "summary.txt");
    out << summary.str();
  }
  if (log) *log << summary.str();
  outcome.rounds = std::move(result.rounds);
  return outcome;
}

std::filesystem::path run_experiment(const ExperimentConfig& cfg) { return run_experiment_detailed(cfg).metrics_path; }

double evaluate(const nn::ModelParams& params, const data::Dataset& test) {
  return nn::top1_accuracy(params, data::feature_matrix(test), data::labels_of(test));
}

std::vector<SweepRow> sweep(const GridSpec& grid, std::ostream* log) {
  std::ifstream in(grid.base);
  if (!in) throw ConfigError("cannot open base config: " + grid.base.string());
  std::ostringstream text;
  text << in.rdbuf();
  const std::string base_text = text.str();
  const auto base_dir = grid.base.parent_path();

  std::vector<std::string> keys;
  std::vector<const std::vector<std::string>*> values;
  for (const auto& [k, v] : grid.axes) {
    keys.push_back(k);
    values.push_back(&v);
  }
  std::size_t total = 1;
  for (const auto* v : values) total *= v->size();

  // Parse everything first so a bad grid fails before any run starts.
  std::vector<std::pair<SweepRow, ExperimentConfig>> plan;
  for (std::size_t n = 0; n < total; ++n) {
    SweepRow row;
    row.index = n;
    std::size_t rest = n;
    for (std::size_t a = keys.size(); a-- > 0;) {
      const auto& v = *values[a];
      row.values[keys[a]] = v[rest % v.size()];
      rest /= v.size();
    }
    auto overrides = row.values;
    char dir[32];
    std::snprintf(dir, sizeof dir, "run_%03zu", n);
    overrides["output_dir"] = '"' + (grid.output_dir / dir).generic_string() + '"';
    auto cfg = parse_config_with_overrides(base_text, overrides, base_dir);
    apply_env_overrides(cfg);
    cfg.name = dir;
    row.output_dir = cfg.output_dir;
    plan.emplace_back(std::move(row), std::move(cfg));
  }

  std::filesystem::create_directories(grid.output_dir);
  std::vector<SweepRow> rows;
  for (auto& [row, cfg] : plan) {
    row.final_accuracy = run_experiment_detailed(cfg, log).final_accuracy;
    rows.push_back(row);
  }

  {
    auto out = open_output(grid.output_dir / "sweep.csv");
    out << "run";
    for (const auto& k : keys) out << ',' << k;
    out << ",final_test_acc\n";
    for (const auto& r : rows) {
      out << r.index;
      for (const auto& k : keys) out << ',' << unquote(r.values.at(k));
      out << ',' << fixed(r.final_accuracy) << '\n';
    }
  }
  auto ranked = rows;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.final_accuracy > b.final_accuracy; });
  {
    auto out = open_output(grid.output_dir / "summary.txt");
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      out << (i + 1) << ". run_" << ranked[i].index << " final_test_acc=" << fixed(ranked[i].final_accuracy);
      for (const auto& [k, v] : ranked[i].values) out << ' ' << k << '=' << unquote(v);
      out << '\n';
    }
  }
  return rows;
}

void partition_report(const ExperimentConfig& cfg, std::ostream& out) {
  const auto prepared = prepare_data(cfg);
  out << "client,labeled,unlabeled,mismatch";
  for (std::size_t c = 0; c < prepared.classes; ++c) out << ",labeled_c" << c;
  for (std::size_t c = 0; c < prepared.classes; ++c) out << ",unlabeled_c" << c;
  out << '\n';
  for (const auto& client : prepared.clients) {
    const auto lh = data::class_histogram(client.labeled.labels, client.classes);
    const auto uh = data::class_histogram(data::QuarantineAudit::labels(client.unlabeled), client.classes);
    out << client.id << ',' << client.labeled.size() << ',' << client.unlabeled.size() << ',';
    if (client.labeled.size() > 0 && client.unlabeled.size() > 0) {
      out << fixed(data::mismatch_score(client));
    } else {
      out << "nan";
    }
    for (auto v : lh) out << ',' << v;
    for (auto v : uh) out << ',' << v;
    out << '\n';
  }
}

std::vector<GradcheckResult> gradcheck(std::size_t pairs, std::uint64_t seed) {
  std::vector<GradcheckResult> results;
  constexpr std::size_t kIn = 6;
  constexpr std::size_t kClasses = 4;
  constexpr std::size_t kRows = 5;
  for (std::size_t p = 0; p < pairs; ++p) {
    Rng rng = make_rng(seed, {0x6c4e, p});
    const std::size_t widths[] = {kIn, 7, kClasses};
    const auto params = nn::ModelParams::random(nn::make_architecture(widths), rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, kClasses - 1);
    std::uniform_real_distribution<double> unit(0.05, 1.0);

    nn::Batch ce;
    ce.inputs = nn::Matrix(kRows, kIn);
    for (Eigen::Index i = 0; i < ce.inputs.size(); ++i) ce.inputs.data()[i] = normal(rng);
    for (std::size_t r = 0; r < kRows; ++r) ce.labels.push_back(cls(rng));

    nn::Batch kl = ce;
    kl.kl_inputs = nn::Matrix(kRows, kIn);
    for (Eigen::Index i = 0; i < kl.kl_inputs.size(); ++i) kl.kl_inputs.data()[i] = normal(rng);
    kl.kl_targets = nn::Matrix(kRows, kClasses);
    for (Eigen::Index i = 0; i < kl.kl_targets.size(); ++i) kl.kl_targets.data()[i] = unit(rng);
    for (std::size_t r = 0; r < kRows; ++r) {
      kl.kl_targets.row(static_cast<Eigen::Index>(r)) /= kl.kl_targets.row(static_cast<Eigen::Index>(r)).sum();
      kl.kl_weights.push_back(unit(rng));
    }

    const auto anchor = nn::ModelParams::random(params.layers(), rng);
    nn::LossSpec prox;
    prox.proximal = nn::ProximalTerm{&anchor, 0.1 + unit(rng)};

    const auto s = derive_seed(seed, {0x6c4e, p});
    results.push_back({"ce", s, nn::finite_diff_check(params, ce)});
    results.push_back({"ce+kl", s, nn::finite_diff_check(params, kl)});
    results.push_back({"ce+proximal", s, nn::finite_diff_check(params, ce, prox)});
  }
  return results;
}

}  // namespace fedssl::harness
