#include "cisi/dataset.hpp"
#include "cisi/errors.hpp"
#include "cisi/estimands.hpp"
#include "cisi/harness.hpp"
#include "cisi/model.hpp"
#include "cisi/simgen.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using cisi::ConfigError;
using cisi::DataError;
using nlohmann::json;

json read_json(const std::string& path, bool config) {
  std::ifstream in(path);
  if (!in) {
    const std::string msg = "cannot open '" + path + "'";
    if (config) throw ConfigError(msg);
    throw DataError(msg);
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    const std::string msg = path + ": " + e.what();
    if (config) throw ConfigError(msg);
    throw DataError(msg);
  }
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

cisi::TrainConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  cisi::TrainConfig c = read_json(path, true).get<cisi::TrainConfig>();
  c.validate();
  return c;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list '" + s + "'");
  return out;
}

std::string summary_path(const std::string& out) { return out + ".summary.json"; }

void write_table(const std::string& out, const cisi::MetricsTable& table) {
  cisi::write_metrics_csv(out, table);
  write_json(summary_path(out), cisi::metrics_summary(table));
  for (const auto& f : table.failures) {
    std::cerr << "warning: " << f.method << " seed " << f.seed << " failed: " << f.message << '\n';
  }
}

struct PlanFlags {
  int seeds = 10;
  cisi::Index n = 50000;
  std::string config;
  int jobs = 1;

  void add(CLI::App* app) {
    app->add_option("--seeds", seeds, "Number of replicates (seeds 1..S)");
    app->add_option("--n", n, "Sample size per replicate");
    app->add_option("--config", config, "TrainConfig JSON");
    app->add_option("--jobs", jobs, "Worker threads");
  }

  cisi::ExperimentPlan plan(int scenario) const {
    cisi::ExperimentPlan p;
    p.scenario = scenario;
    p.n = n;
    p.seeds = cisi::seed_range(seeds);
    p.config = load_config(config);
    p.jobs = jobs;
    return p;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-treatment single and interaction effect estimation"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Draw a simulated dataset");
  int sim_scenario = 1;
  cisi::Index sim_n = 50000;
  std::uint64_t sim_seed = 1;
  std::string sim_out, sim_truth, sim_spec;
  sim->add_option("--scenario", sim_scenario)->required();
  sim->add_option("--n", sim_n)->required();
  sim->add_option("--seed", sim_seed)->required();
  sim->add_option("--out", sim_out)->required();
  sim->add_option("--truth-out", sim_truth);
  sim->add_option("--spec-out", sim_spec);

  // train
  auto* tr = app.add_subcommand("train", "Fit a model on a dataset CSV");
  std::string tr_data, tr_method = "cisi", tr_config, tr_model;
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--method", tr_method);
  tr->add_option("--config", tr_config);
  tr->add_option("--model-out", tr_model)->required();

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate ASE and AIE with a trained model");
  std::string est_model, est_data, est_out, est_scaler;
  est->add_option("--model", est_model)->required();
  est->add_option("--data", est_data)->required();
  est->add_option("--out", est_out)->required();
  est->add_option("--scaler", est_scaler, "Outcome scaler JSON written by ingest");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Multi-seed benchmark on a simulated scenario");
  int ev_scenario = 1;
  std::string ev_methods = "cisi,tarnet,cfr-wass,ncore", ev_out;
  PlanFlags ev_flags;
  ev->add_option("--scenario", ev_scenario);
  ev->add_option("--methods", ev_methods);
  ev->add_option("--out", ev_out)->required();
  ev_flags.add(ev);

  // ablate
  auto* ab = app.add_subcommand("ablate", "Task-embedding / balancing-penalty ablation");
  std::string ab_out;
  PlanFlags ab_flags;
  ab->add_option("--out", ab_out)->required();
  ab_flags.add(ab);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Sweep alpha or the sample size");
  std::string sw_param, sw_values, sw_out, sw_methods = "cisi";
  int sw_scenario = 1;
  PlanFlags sw_flags;
  sw->add_option("--param", sw_param)->required();
  sw->add_option("--values", sw_values)->required();
  sw->add_option("--out", sw_out)->required();
  sw->add_option("--methods", sw_methods);
  sw->add_option("--scenario", sw_scenario);
  sw_flags.add(sw);

  // embedsim
  auto* es = app.add_subcommand("embedsim", "Cosine similarity of pattern embeddings");
  std::string es_model, es_out;
  es->add_option("--model", es_model)->required();
  es->add_option("--out", es_out)->required();

  // ingest
  auto* in = app.add_subcommand("ingest", "Convert a CSV to the dataset format");
  std::string in_data, in_schema, in_out, in_scaler;
  in->add_option("--data", in_data)->required();
  in->add_option("--schema", in_schema)->required();
  in->add_option("--out", in_out)->required();
  in->add_option("--scaler-out", in_scaler);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      const cisi::SimDataset data = cisi::generate(cisi::draw_spec(sim_scenario, sim_n, sim_seed));
      cisi::write_dataset_csv(sim_out, data.observed());
      if (!sim_truth.empty()) write_json(sim_truth, cisi::true_effects(data.spec, data.x_true));
      if (!sim_spec.empty()) write_json(sim_spec, data.spec);
    } else if (*tr) {
      const cisi::Dataset data = cisi::read_dataset_csv(tr_data);
      const cisi::Method method = cisi::parse_method(tr_method);
      const cisi::TrainConfig config = load_config(tr_config);
      auto result = cisi::train(data, config, method, [](int epoch, const cisi::LossBreakdown& l) {
        std::cerr << "epoch " << epoch << " loss " << l.total << " outcome " << l.outcome
                  << " balance " << l.balance << '\n';
      });
      write_json(tr_model, cisi::model_to_json(result.model));
    } else if (*est) {
      const cisi::ModelBundle model = cisi::model_from_json(read_json(est_model, false));
      const cisi::Dataset data = cisi::read_dataset_csv(est_data);
      if (data.covariate_dim() != model.covariate_dim) {
        throw DataError("dataset has " + std::to_string(data.covariate_dim()) +
                        " covariates, model expects " + std::to_string(model.covariate_dim));
      }
      cisi::EffectReport r = cisi::effects_from_pattern_table(
          cisi::predict_all_patterns(model, data.x), model.treatments);
      r.method = cisi::method_name(model.method);
      if (!est_scaler.empty()) {
        const json s = read_json(est_scaler, true);
        const cisi::OutcomeScaler scaler{s.at("mean").get<double>(), s.at("sd").get<double>()};
        for (auto& [k, v] : r.ase) v = scaler.inverse_effect(v);
        for (auto& [k, v] : r.aie) v = scaler.inverse_effect(v);
      }
      write_json(est_out, r);
    } else if (*ev) {
      cisi::ExperimentPlan plan = ev_flags.plan(ev_scenario);
      for (const auto& m : split_list(ev_methods)) {
        plan.variants.push_back(cisi::default_variant(cisi::parse_method(m)));
      }
      write_table(ev_out, cisi::run_benchmark(plan));
    } else if (*ab) {
      write_table(ab_out, cisi::run_ablation(ab_flags.plan(1)));
    } else if (*sw) {
      cisi::ExperimentPlan plan = sw_flags.plan(sw_scenario);
      for (const auto& m : split_list(sw_methods)) {
        plan.variants.push_back(cisi::default_variant(cisi::parse_method(m)));
      }
      std::vector<double> values;
      for (const auto& v : split_list(sw_values)) {
        try {
          values.push_back(std::stod(v));
        } catch (const std::exception&) {
          throw ConfigError("invalid sweep value '" + v + "'");
        }
      }
      write_table(sw_out, cisi::sweep(plan, cisi::parse_sweep_param(sw_param), values));
    } else if (*es) {
      const cisi::ModelBundle model = cisi::model_from_json(read_json(es_model, false));
      const auto rows = cisi::embedding_similarity(model);
      std::ofstream out(es_out);
      if (!out) throw DataError("cannot write '" + es_out + "'");
      out << "pattern_a,pattern_b,jaccard,cosine\n";
      for (const auto& r : rows) {
        out << '"' << r.first.str() << "\",\"" << r.second.str() << "\","
            << cisi::format_double(r.jaccard) << ',' << cisi::format_double(r.cosine) << '\n';
      }
      write_json(summary_path(es_out), json{{"pairs", rows.size()},
                                            {"trend", cisi::similarity_trend(rows)}});
    } else if (*in) {
      const cisi::IngestSchema schema = read_json(in_schema, true).get<cisi::IngestSchema>();
      const cisi::IngestResult result = cisi::ingest_csv(in_data, schema);
      cisi::write_dataset_csv(in_out, result.data);
      if (!in_scaler.empty()) {
        if (!result.scaler) throw ConfigError("--scaler-out needs standardize_outcome in the schema");
        write_json(in_scaler, json{{"mean", result.scaler->mean}, {"sd", result.scaler->sd}});
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const cisi::ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const cisi::ContractError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const cisi::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
