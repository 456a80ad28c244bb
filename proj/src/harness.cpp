#include "cisi/harness.hpp"

#include "cisi/errors.hpp"
#include "cisi/rng.hpp"
#include "cisi/simgen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <thread>
#include <tuple>

namespace cisi {

namespace {

constexpr std::uint64_t kSplitStream = 0x5B1;
constexpr std::uint64_t kTrainStream = 0x7A1;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

TrainConfig Variant::apply(TrainConfig config) const {
  if (alpha) config.alpha = *alpha;
  if (task_embedding) config.task_embedding = *task_embedding;
  return config;
}

Variant default_variant(Method method) {
  Variant v;
  v.name = method_name(method);
  v.method = method;
  if (method == Method::CfrWass) v.alpha = 1.0;
  return v;
}

std::vector<Variant> ablation_variants() {
  return {
      {"te_off_bp_off", Method::Cisi, 0.0, false},
      {"te_on_bp_off", Method::Cisi, 0.0, true},
      {"te_off_bp_on", Method::Cisi, std::nullopt, false},
      {"te_on_bp_on", Method::Cisi, std::nullopt, true},
  };
}

void ExperimentPlan::validate() const {
  if (scenario < 1 || scenario > 3) throw ConfigError("scenario must be 1, 2 or 3");
  if (n < 2) throw ConfigError("sample size must be at least 2");
  if (seeds.empty()) throw ConfigError("plan needs at least one seed");
  auto sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("plan seeds must be distinct");
  }
  if (variants.empty()) throw ConfigError("plan needs at least one method");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0,1)");
  }
  if (jobs < 1) throw ConfigError("jobs must be positive");
  config.validate();
}

std::vector<std::uint64_t> seed_range(int count) {
  if (count < 1) throw ConfigError("seed count must be positive");
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{1});
  return seeds;
}

Split split_indices(Index n, double train_fraction, std::uint64_t data_seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0,1)");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(derive_seed(data_seed, kSplitStream));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= order.size()) {
    throw ConfigError("split leaves an empty train or test set");
  }
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::uint64_t train_seed(std::uint64_t data_seed) { return derive_seed(data_seed, kTrainStream); }

SeedRun run_seed(int scenario, Index n, std::uint64_t data_seed, const Variant& variant,
                 const TrainConfig& config, double split_fraction, bool keep_model) {
  const SimDataset sim = generate(draw_spec(scenario, n, data_seed));
  const Split split = split_indices(n, split_fraction, data_seed);
  const Dataset all = sim.observed();
  const Dataset train_rows = all.select_rows(split.train);

  Matrix x_test(static_cast<Index>(split.test.size()), sim.x_observed.cols());
  Matrix x_true_test(static_cast<Index>(split.test.size()), sim.x_true.cols());
  for (std::size_t r = 0; r < split.test.size(); ++r) {
    x_test.row(static_cast<Index>(r)) = sim.x_observed.row(split.test[r]);
    x_true_test.row(static_cast<Index>(r)) = sim.x_true.row(split.test[r]);
  }

  TrainConfig cfg = variant.apply(config);
  cfg.seed = train_seed(data_seed);
  TrainResult trained = train(train_rows, cfg, variant.method);

  SeedRun run;
  run.truth = true_effects(sim.spec, x_true_test);
  run.estimate = effects_from_pattern_table(predict_all_patterns(trained.model, x_test),
                                            sim.spec.treatments);
  run.estimate.method = variant.name;
  run.estimate.seed = data_seed;
  for (const auto& [k, v] : run.estimate.ase) {
    if (!std::isfinite(v)) throw NumericError("non-finite ASE estimate");
  }
  for (const auto& [s, v] : run.estimate.aie) {
    if (!std::isfinite(v)) throw NumericError("non-finite AIE estimate");
  }
  run.errors = effect_errors(run.truth, run.estimate);
  if (keep_model) run.model = std::move(trained.model);
  return run;
}

std::vector<Aggregate> MetricsTable::aggregate() const {
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::vector<double>>
      groups;
  for (const auto& r : rows) groups[{r.group, r.method, r.kind, r.key}].push_back(r.error);
  std::vector<Aggregate> out;
  for (const auto& [key, errors] : groups) {
    Aggregate a;
    std::tie(a.group, a.method, a.kind, a.key) = key;
    a.count = errors.size();
    a.mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(a.count);
    if (a.count > 1) {
      double ss = 0.0;
      for (double e : errors) ss += (e - a.mean) * (e - a.mean);
      a.sd = std::sqrt(ss / static_cast<double>(a.count - 1));
    }
    out.push_back(a);
  }
  return out;
}

double MetricsTable::mean_error(const std::string& method, const std::string& kind,
                                const std::string& key, const std::string& group) const {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : rows) {
    if (r.method == method && r.kind == kind && r.key == key && r.group == group) {
      sum += r.error;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

void MetricsTable::sort() {
  auto key_order = [](const MetricRow& r) {
    return std::make_tuple(r.kind, parse_subset_key(r.key).size(), r.key);
  };
  std::sort(rows.begin(), rows.end(), [&](const MetricRow& a, const MetricRow& b) {
    return std::tie(a.group, a.method, a.seed) < std::tie(b.group, b.method, b.seed) ||
           (std::tie(a.group, a.method, a.seed) == std::tie(b.group, b.method, b.seed) &&
            key_order(a) < key_order(b));
  });
  std::sort(failures.begin(), failures.end(), [](const FailedRun& a, const FailedRun& b) {
    return std::tie(a.group, a.method, a.seed) < std::tie(b.group, b.method, b.seed);
  });
}

void MetricsTable::append(const MetricsTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  failures.insert(failures.end(), other.failures.begin(), other.failures.end());
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "group,method,seed,kind,key,error\n";
  for (const auto& r : table.rows) {
    out << csv_field(r.group) << ',' << csv_field(r.method) << ',' << r.seed << ',' << r.kind
        << ',' << csv_field(r.key) << ',' << format_double(r.error) << '\n';
  }
  for (const auto& f : table.failures) {
    out << csv_field(f.group) << ',' << csv_field(f.method) << ',' << f.seed << ",failed,,\n";
  }
}

nlohmann::json metrics_summary(const MetricsTable& table) {
  nlohmann::json j;
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : table.aggregate()) {
    j["aggregates"].push_back({{"group", a.group},
                               {"method", a.method},
                               {"kind", a.kind},
                               {"key", a.key},
                               {"mean", a.mean},
                               {"sd", a.sd},
                               {"count", a.count}});
  }
  j["failures"] = nlohmann::json::array();
  for (const auto& f : table.failures) {
    j["failures"].push_back(
        {{"group", f.group}, {"method", f.method}, {"seed", f.seed}, {"message", f.message}});
  }
  return j;
}

namespace {

struct Task {
  std::string group;
  Index n;
  std::uint64_t seed;
  Variant variant;
  TrainConfig config;
};

MetricsTable run_tasks(const std::vector<Task>& tasks, int scenario, double split_fraction,
                       int jobs) {
  std::vector<MetricsTable> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      MetricsTable& out = results[i];
      try {
        SeedRun run = run_seed(scenario, t.n, t.seed, t.variant, t.config, split_fraction);
        for (const auto& [k, e] : run.errors.ase) {
          out.rows.push_back({t.group, t.variant.name, t.seed, "ase", std::to_string(k), e});
        }
        for (const auto& [s, e] : run.errors.aie) {
          out.rows.push_back({t.group, t.variant.name, t.seed, "aie", subset_key(s), e});
        }
      } catch (const NumericError& e) {
        out.failures.push_back({t.group, t.variant.name, t.seed, e.what()});
      }
    }
  };
  const auto threads = static_cast<std::size_t>(
      std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size()))));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }

  MetricsTable merged;
  for (const auto& r : results) merged.append(r);
  merged.sort();
  if (!tasks.empty() && merged.failures.size() * 5 >= tasks.size()) {
    throw NumericError(std::to_string(merged.failures.size()) + " of " +
                       std::to_string(tasks.size()) + " runs failed; first: " +
                       merged.failures.front().message);
  }
  return merged;
}

std::vector<Task> plan_tasks(const ExperimentPlan& plan, const std::string& group) {
  std::vector<Task> tasks;
  for (std::uint64_t seed : plan.seeds) {
    for (const auto& v : plan.variants) tasks.push_back({group, plan.n, seed, v, plan.config});
  }
  return tasks;
}

}  // namespace

MetricsTable run_benchmark(const ExperimentPlan& plan) {
  plan.validate();
  return run_tasks(plan_tasks(plan, ""), plan.scenario, plan.split_fraction, plan.jobs);
}

MetricsTable run_ablation(ExperimentPlan plan) {
  plan.scenario = 1;
  plan.variants = ablation_variants();
  return run_benchmark(plan);
}

SweepParam parse_sweep_param(const std::string& name) {
  if (name == "alpha") return SweepParam::Alpha;
  if (name == "n") return SweepParam::SampleSize;
  throw ConfigError("sweep parameter must be 'alpha' or 'n'");
}

MetricsTable sweep(const ExperimentPlan& plan, SweepParam param, const std::vector<double>& values) {
  plan.validate();
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<Task> tasks;
  for (double v : values) {
    ExperimentPlan p = plan;
    std::string group;
    if (param == SweepParam::Alpha) {
      if (!(v >= 0.0)) throw ConfigError("alpha values must be nonnegative");
      group = "alpha=" + format_double(v);
      for (auto& variant : p.variants) {
        if (variant.method == Method::Cisi || variant.method == Method::CfrWass) variant.alpha = v;
      }
    } else {
      if (!(v >= 2.0) || v != std::floor(v)) throw ConfigError("n values must be integers >= 2");
      p.n = static_cast<Index>(v);
      group = "n=" + std::to_string(p.n);
    }
    auto more = plan_tasks(p, group);
    tasks.insert(tasks.end(), more.begin(), more.end());
  }
  return run_tasks(tasks, plan.scenario, plan.split_fraction, plan.jobs);
}

double jaccard(const TreatmentPattern& a, const TreatmentPattern& b) {
  if (a.size() != b.size()) throw ContractError("jaccard: pattern lengths differ");
  const auto inter = std::popcount(a.index() & b.index());
  const auto uni = std::popcount(a.index() | b.index());
  if (uni == 0) throw ContractError("jaccard: undefined for two all-zero patterns");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double cosine_similarity(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine similarity of a zero vector");
  return a.dot(b) / (na * nb);
}

std::vector<SimilarityRow> embedding_similarity(const ModelBundle& model) {
  if (model.method != Method::Cisi || !model.embedding) {
    throw ContractError("embedding_similarity: needs a cisi model with a task embedding network");
  }
  const int k = model.treatments;
  const std::uint32_t count = 1u << k;
  std::vector<Vector> codes;
  for (std::uint32_t p = 0; p < count; ++p) codes.push_back(task_embedding(model, TreatmentPattern(k, p)));
  std::vector<SimilarityRow> rows;
  for (std::uint32_t a = 1; a < count; ++a) {
    for (std::uint32_t b = a + 1; b < count; ++b) {
      if (codes[a].norm() == 0.0 || codes[b].norm() == 0.0) continue;
      SimilarityRow r{TreatmentPattern(k, a), TreatmentPattern(k, b), 0.0, 0.0};
      r.jaccard = jaccard(r.first, r.second);
      r.cosine = cosine_similarity(codes[a], codes[b]);
      rows.push_back(r);
    }
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ContractError("spearman: need two equal-length series of at least 2 values");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double similarity_trend(const std::vector<SimilarityRow>& rows) {
  std::map<double, std::vector<double>> bins;
  for (const auto& r : rows) bins[r.jaccard].push_back(r.cosine);
  std::vector<double> jac;
  std::vector<double> med;
  for (const auto& [j, cos] : bins) {
    jac.push_back(j);
    med.push_back(median(cos));
  }
  return spearman(jac, med);
}

void from_json(const nlohmann::json& j, IngestSchema& schema) {
  try {
    schema.covariates = j.at("covariates").get<std::vector<std::string>>();
    schema.treatments = j.at("treatments").get<std::vector<std::string>>();
    schema.outcome = j.at("outcome").get<std::string>();
    schema.standardize_outcome = j.value("standardize_outcome", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  if (schema.covariates.empty() || schema.treatments.empty()) {
    throw ConfigError("schema: need at least one covariate and one treatment column");
  }
}

IngestResult ingest_csv(const std::filesystem::path& path, const IngestSchema& schema) {
  CsvTable table = read_csv(path);
  auto locate = [&](const std::string& name) {
    const int c = table.column(name);
    if (c < 0) throw ConfigError("schema column '" + name + "' not found in " + path.string());
    return static_cast<std::size_t>(c);
  };
  std::vector<std::size_t> xcols;
  std::vector<std::size_t> tcols;
  for (const auto& c : schema.covariates) xcols.push_back(locate(c));
  for (const auto& c : schema.treatments) tcols.push_back(locate(c));
  const std::size_t ycol = locate(schema.outcome);

  auto number = [&](std::size_t row, std::size_t col) {
    const std::string& s = table.rows[row][col];
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw DataError("row " + std::to_string(row + 1) + ": invalid value '" + s +
                      "' in column '" + table.header[col] + "'");
    }
    return v;
  };

  const auto n = static_cast<Index>(table.rows.size());
  if (n == 0) throw DataError("no data rows in " + path.string());
  IngestResult out;
  Dataset& d = out.data;
  d.x.resize(n, static_cast<Index>(xcols.size()));
  d.t.resize(n, static_cast<Index>(tcols.size()));
  d.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < xcols.size(); ++j) d.x(i, static_cast<Index>(j)) = number(r, xcols[j]);
    for (std::size_t j = 0; j < tcols.size(); ++j) {
      const double v = number(r, tcols[j]);
      if (v != 0.0 && v != 1.0) {
        throw DataError("row " + std::to_string(r + 1) + ": non-binary treatment value '" +
                        table.rows[r][tcols[j]] + "' in column '" + table.header[tcols[j]] + "'");
      }
      d.t(i, static_cast<Index>(j)) = v;
    }
    d.y(i) = number(r, ycol);
  }

  if (schema.standardize_outcome) {
    if (n < 2) throw DataError("standardization needs at least two rows");
    OutcomeScaler s;
    s.mean = d.y.mean();
    s.sd = std::sqrt((d.y.array() - s.mean).square().sum() / static_cast<double>(n - 1));
    if (!(s.sd > 0.0)) throw DataError("outcome is constant; cannot standardize");
    d.y = ((d.y.array() - s.mean) / s.sd).matrix();
    out.scaler = s;
  }
  d.validate();
  return out;
}

}  // namespace cisi
