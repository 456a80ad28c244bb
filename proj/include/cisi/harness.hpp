#pragma once

#include "cisi/dataset.hpp"
#include "cisi/estimands.hpp"
#include "cisi/model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cisi {

/// A named training recipe: a method plus optional overrides of the shared
/// configuration.
struct Variant {
  std::string name;
  Method method = Method::Cisi;
  std::optional<double> alpha;
  std::optional<bool> task_embedding;

  TrainConfig apply(TrainConfig config) const;
};

/// The benchmark settings for a method; cfr-wass runs with α = 1.
Variant default_variant(Method method);
/// (TE off, BP off), (TE on, BP off), (TE off, BP on), (TE on, BP on).
std::vector<Variant> ablation_variants();

struct ExperimentPlan {
  int scenario = 1;
  Index n = 50000;
  std::vector<std::uint64_t> seeds;
  std::vector<Variant> variants;
  TrainConfig config;
  double split_fraction = 0.7;
  int jobs = 1;

  void validate() const;
};

/// Seeds 1..count.
std::vector<std::uint64_t> seed_range(int count);

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

/// Shuffled train/test split; a pure function of (n, fraction, data seed).
Split split_indices(Index n, double train_fraction, std::uint64_t data_seed);
/// Seed used for model initialisation and batch order of a replicate. It does
/// not depend on the method, so methods see identical streams.
std::uint64_t train_seed(std::uint64_t data_seed);

struct SeedRun {
  EffectReport truth;
  EffectReport estimate;
  ErrorReport errors;
  std::optional<ModelBundle> model;
};

/// generate → split → train on the train rows → effects on the test rows →
/// compare with the truth on the same test rows.
SeedRun run_seed(int scenario, Index n, std::uint64_t data_seed, const Variant& variant,
                 const TrainConfig& config, double split_fraction, bool keep_model = false);

struct MetricRow {
  std::string group;
  std::string method;
  std::uint64_t seed = 0;
  std::string kind;  // "ase" or "aie"
  std::string key;   // "2" or "1,2"
  double error = 0.0;
};

struct FailedRun {
  std::string group;
  std::string method;
  std::uint64_t seed = 0;
  std::string message;
};

struct Aggregate {
  std::string group;
  std::string method;
  std::string kind;
  std::string key;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single row
  std::size_t count = 0;
};

struct MetricsTable {
  std::vector<MetricRow> rows;
  std::vector<FailedRun> failures;

  /// Sorted by (group, method, kind, key).
  std::vector<Aggregate> aggregate() const;
  /// Mean error over seeds for one metric; NaN when absent.
  double mean_error(const std::string& method, const std::string& kind, const std::string& key,
                    const std::string& group = "") const;
  void sort();
  void append(const MetricsTable& other);
};

void write_metrics_csv(const std::filesystem::path& path, const MetricsTable& table);
nlohmann::json metrics_summary(const MetricsTable& table);

/// Failed replicates are recorded as failures; throws NumericError when at
/// least 20% of replicates fail.
MetricsTable run_benchmark(const ExperimentPlan& plan);
/// Scenario 1 with the four ablation variants in place of plan.variants.
MetricsTable run_ablation(ExperimentPlan plan);

enum class SweepParam { Alpha, SampleSize };
SweepParam parse_sweep_param(const std::string& name);
/// run_benchmark per value; rows are grouped as "alpha=<v>" or "n=<v>".
MetricsTable sweep(const ExperimentPlan& plan, SweepParam param, const std::vector<double>& values);

struct SimilarityRow {
  TreatmentPattern first;
  TreatmentPattern second;
  double jaccard = 0.0;
  double cosine = 0.0;
};

double jaccard(const TreatmentPattern& a, const TreatmentPattern& b);
double cosine_similarity(const Vector& a, const Vector& b);
/// Every unordered pair of distinct non-zero patterns, with the Jaccard
/// similarity of the patterns and the cosine similarity of their embeddings.
std::vector<SimilarityRow> embedding_similarity(const ModelBundle& model);
/// Spearman correlation between the distinct Jaccard values and the median
/// cosine similarity within each Jaccard bin.
double similarity_trend(const std::vector<SimilarityRow>& rows);

double median(std::vector<double> values);
/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct IngestSchema {
  std::vector<std::string> covariates;
  std::vector<std::string> treatments;
  std::string outcome;
  bool standardize_outcome = false;
};

void from_json(const nlohmann::json& j, IngestSchema& schema);

/// y_std = (y − mean) / sd
struct OutcomeScaler {
  double mean = 0.0;
  double sd = 1.0;

  double inverse(double standardized) const { return standardized * sd + mean; }
  /// Effects are differences, so only the scale applies.
  double inverse_effect(double effect) const { return effect * sd; }
};

struct IngestResult {
  Dataset data;
  std::optional<OutcomeScaler> scaler;
};

/// ConfigError for a missing column, DataError (with the row number) for a
/// non-binary treatment or non-numeric value.
IngestResult ingest_csv(const std::filesystem::path& path, const IngestSchema& schema);

}  // namespace cisi
