// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Optional arguments restrict the run
// to the listed criterion numbers.

#include "cisi/estimands.hpp"
#include "cisi/harness.hpp"
#include "cisi/model.hpp"
#include "cisi/simgen.hpp"
#include "cisi/sinkhorn.hpp"
#include "support/oracles.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <tuple>
#include <vector>

namespace {

using namespace cisi;
using cisi::testing::exact_wasserstein;
using cisi::testing::finite_difference_check;
using cisi::testing::random_matrix;
using Clock = std::chrono::steady_clock;

constexpr int kSeeds = 10;
constexpr Index kN = 50000;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Trained replicates, shared between criteria that use the same recipe.
class RunCache {
 public:
  const SeedRun& get(const Variant& variant, Index n, std::uint64_t seed, bool keep_model = false) {
    const TrainConfig cfg = variant.apply(TrainConfig{});
    const auto key = std::make_tuple(method_name(variant.method), cfg.alpha, cfg.task_embedding, n, seed);
    auto it = runs_.find(key);
    if (it != runs_.end() && (!keep_model || it->second.model)) return it->second;
    const auto start = Clock::now();
    SeedRun run = run_seed(1, n, seed, variant, TrainConfig{}, 0.7, keep_model);
    std::cerr << "  trained " << variant.name << " alpha=" << cfg.alpha << " n=" << n
              << " seed=" << seed << " in " << fmt(seconds_since(start)) << " s\n";
    return runs_.insert_or_assign(key, std::move(run)).first->second;
  }

 private:
  std::map<std::tuple<std::string, double, bool, Index, std::uint64_t>, SeedRun> runs_;
};

RunCache& cache() {
  static RunCache c;
  return c;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double total_error(const ErrorReport& e) {
  double t = 0.0;
  for (const auto& [k, v] : e.ase) t += v;
  for (const auto& [s, v] : e.aie) t += v;
  return t;
}

double mean_aie_error(const ErrorReport& e) {
  double t = 0.0;
  for (const auto& [s, v] : e.aie) t += v;
  return t / static_cast<double>(e.aie.size());
}

Variant cisi_variant(double alpha) {
  Variant v = default_variant(Method::Cisi);
  v.alpha = alpha;
  return v;
}

Verdict gradient_check() {
  const auto start = Clock::now();
  TrainConfig c;
  c.rep_dim = 8;
  c.embed_dim = 3;
  c.width = 8;
  c.alpha = 0.1;
  c.sinkhorn_eps = 0.1;
  c.sinkhorn_iters = 20;
  c.seed = 11;
  ModelBundle model = init_model(Method::Cisi, 6, 3, c);

  // Zero initial biases would put the all-zero pattern exactly on the
  // activation kink, where finite differences are meaningless.
  std::mt19937_64 rng(5);
  for (Matrix* p : model.parameters()) {
    if (p->rows() == 1) *p = random_matrix(1, p->cols(), rng, 0.3);
  }
  Dataset data;
  data.x = random_matrix(16, 6, rng);
  data.t.resize(16, 3);
  for (Index i = 0; i < 16; ++i) {
    // Four patterns with four units each, so every pair enters the penalty.
    const std::uint32_t pattern = std::array<std::uint32_t, 4>{0, 3, 5, 6}[static_cast<std::size_t>(i % 4)];
    for (int k = 0; k < 3; ++k) data.t(i, k) = (pattern >> (2 - k)) & 1u ? 1.0 : 0.0;
  }
  data.y = random_matrix(16, 1, rng).col(0);
  std::vector<Index> rows(16);
  std::iota(rows.begin(), rows.end(), Index{0});
  const Batch batch = make_batch(data, rows);
  const PatternWeights weights = pattern_weights(data);

  const LossAndGradient lg = loss_and_gradient(model, batch, weights);
  auto res = finite_difference_check(model.parameters(), {lg.grad.begin(), lg.grad.end()},
                                     [&] { return total_loss(model, batch, weights).total; },
                                     1e-4);
  const bool total_ok = res.max_rel <= 1e-4;

  // The penalty alone, differentiated with respect to the representation
  // points it receives.
  std::vector<Matrix> groups{random_matrix(4, 8, rng, 0.3), random_matrix(5, 8, rng, 0.3),
                             random_matrix(3, 8, rng, 0.3)};
  SinkhornOptions opts;
  opts.eps = 0.1;
  opts.iters = 20;
  auto penalty = [&](Tape& t) {
    std::vector<RepGroupVar> g;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      g.push_back({TreatmentPattern(3, static_cast<std::uint32_t>(i + 1)), t.parameter(groups[i])});
    }
    return balancing_penalty(t, g, opts);
  };
  Tape tape;
  const Grad g = tape.backward(penalty(tape));
  std::vector<Matrix*> ptrs;
  for (auto& m : groups) ptrs.push_back(&m);
  auto pen = finite_difference_check(ptrs, {g.begin(), g.end()}, [&] {
    Tape t;
    return t.scalar(penalty(t));
  });
  const bool penalty_ok = pen.max_rel <= 1e-3;
  const double elapsed = seconds_since(start);
  return {total_ok && penalty_ok && elapsed < 120.0,
          "total loss max rel " + fmt(res.max_rel) + " (tol 1e-4), penalty max rel " +
              fmt(pen.max_rel) + " (tol 1e-3), " + fmt(elapsed) + " s (limit 120)"};
}

Verdict ot_oracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 6);
  std::uniform_int_distribution<int> dim(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = dim(rng);
    const Matrix a = random_matrix(size(rng), d, rng);
    const Matrix b = random_matrix(size(rng), d, rng, 1.5);
    const double exact = exact_wasserstein(a, b);
    const double approx = sinkhorn_wasserstein(a, b, 1e-3, 500);
    worst = std::max(worst, std::abs(approx - exact) / std::max(exact, 1e-12));
  }
  const double elapsed = seconds_since(start);
  return {worst <= 0.05 && elapsed < 60.0,
          "worst relative gap " + fmt(worst) + " (tol 0.05), " + fmt(elapsed) + " s (limit 60)"};
}

Verdict estimand_oracle() {
  const SimDataset sim = generate(draw_spec(1, kN, 1));
  const EffectReport truth = true_effects(sim.spec, sim.x_true);
  const OutcomeFn f = oracle_outcome(sim.spec);
  double worst = 0.0;
  for (int k = 1; k <= 3; ++k) worst = std::max(worst, std::abs(ase(f, sim.x_true, 3, k) - truth.ase.at(k)));
  for (const Subset& s : subsets_of_size_at_least(3, 2)) {
    worst = std::max(worst, std::abs(aie(f, sim.x_true, 3, s) - truth.aie.at(s)));
  }

  bool zero = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SimDataset s3 = generate(draw_spec(3, 5000, seed));
    for (const auto& [s, v] : true_effects(s3.spec, s3.x_true).aie) zero = zero && v == 0.0;
  }

  // Integer-valued outcome tables keep every sum exact.
  bool brute = true;
  for (int k = 2; k <= 4; ++k) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(k));
    std::uniform_int_distribution<int> coef(-9, 9);
    Matrix table(16, Index{1} << k);
    for (Index i = 0; i < table.size(); ++i) table.data()[i] = coef(rng);
    const OutcomeFn mu = [table](const Matrix& x, const TreatmentPattern& t) {
      Vector out(x.rows());
      for (Index i = 0; i < x.rows(); ++i) out(i) = table(static_cast<Index>(x(i, 0)), t.index());
      return out;
    };
    Matrix x(48, 1);
    for (Index i = 0; i < 48; ++i) x(i, 0) = static_cast<double>(i % 16);
    for (const Subset& s : subsets_of_size_at_least(k, 2)) {
      std::uint32_t s_mask = 0;
      for (int j : s) s_mask |= 1u << (k - j);
      Vector acc = Vector::Zero(48);
      for (std::uint32_t q = s_mask;; q = (q - 1) & s_mask) {
        const int parity = std::popcount(s_mask) - std::popcount(q);
        acc += (parity % 2 == 0 ? 1.0 : -1.0) * mu(x, TreatmentPattern(k, q));
        if (q == 0) break;
      }
      brute = brute && aie(mu, x, k, s) == acc.mean();
    }
  }
  return {worst <= 1e-10 && zero && brute,
          "max |plug-in - truth| " + fmt(worst) + " (tol 1e-10), scenario-3 AIE exactly 0: " +
              (zero ? "yes" : "no") + ", brute force K<=4 exact: " + (brute ? "yes" : "no")};
}

Verdict table_reproduction() {
  std::map<std::string, std::vector<double>> cisi_errors;
  std::vector<double> tarnet_triple;
  std::vector<double> cisi_triple;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    const SeedRun& c = cache().get(default_variant(Method::Cisi), kN, s, true);
    for (const auto& [k, v] : c.errors.ase) cisi_errors["ase" + std::to_string(k)].push_back(v);
    for (const auto& [sub, v] : c.errors.aie) cisi_errors["aie" + subset_key(sub)].push_back(v);
    cisi_triple.push_back(c.errors.aie.at({1, 2, 3}));
    tarnet_triple.push_back(cache().get(default_variant(Method::Tarnet), kN, s).errors.aie.at({1, 2, 3}));
  }
  bool pass = true;
  std::string detail;
  for (const auto& [key, v] : cisi_errors) {
    const double limit = key.starts_with("ase") ? 0.15 : 0.20;
    const double m = mean_of(v);
    pass = pass && m <= limit;
    detail += key + "=" + fmt(m) + "(<=" + fmt(limit) + ") ";
  }
  const double ct = mean_of(cisi_triple);
  const double tt = mean_of(tarnet_triple);
  pass = pass && ct < tt;
  detail += "cisi aie1,2,3=" + fmt(ct) + " vs tarnet " + fmt(tt);
  return {pass, detail};
}

Verdict ablation_direction() {
  std::vector<double> full;
  std::vector<double> bare;
  const std::vector<Variant> variants = ablation_variants();
  const Variant& off = variants.front();
  const Variant& on = variants.back();
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    full.push_back(cache().get(on, kN, s).errors.aie.at({1, 2, 3}));
    bare.push_back(cache().get(off, kN, s).errors.aie.at({1, 2, 3}));
  }
  const double f = mean_of(full);
  const double b = mean_of(bare);
  return {f <= 0.5 * b, "aie1,2,3 TE+BP " + fmt(f) + " vs neither " + fmt(b) + " (need <= " + fmt(0.5 * b) + ")"};
}

Verdict embedding_property() {
  std::vector<double> trends;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const SeedRun& run = cache().get(default_variant(Method::Cisi), kN, static_cast<std::uint64_t>(seed), true);
    trends.push_back(similarity_trend(embedding_similarity(*run.model)));
  }
  const double m = mean_of(trends);
  return {m >= 0.8, "mean Spearman of bin medians vs Jaccard " + fmt(m) + " (need >= 0.8)"};
}

Verdict sensitivity_directions() {
  std::vector<double> small;
  std::vector<double> large;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    small.push_back(total_error(cache().get(cisi_variant(0.1), kN, s).errors));
    large.push_back(total_error(cache().get(cisi_variant(10.0), kN, s).errors));
  }
  const std::vector<double> sizes{5000, 10000, 20000, 50000};
  std::vector<double> aie_by_n;
  for (double n : sizes) {
    std::vector<double> v;
    for (int seed = 1; seed <= kSeeds; ++seed) {
      v.push_back(mean_aie_error(
          cache().get(default_variant(Method::Cisi), static_cast<Index>(n), static_cast<std::uint64_t>(seed)).errors));
    }
    aie_by_n.push_back(mean_of(v));
  }
  const double rho = spearman(sizes, aie_by_n);
  const double a = mean_of(small);
  const double b = mean_of(large);
  std::string curve;
  for (std::size_t i = 0; i < sizes.size(); ++i) curve += fmt(aie_by_n[i]) + (i + 1 < sizes.size() ? "/" : "");
  return {a <= b && rho <= -0.5, "total error alpha=0.1 " + fmt(a) + " vs alpha=10 " + fmt(b) +
                                    ", mean AIE error by n " + curve + ", Spearman " + fmt(rho) +
                                    " (need <= -0.5)"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CISI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cisi_acceptance";
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << R"({"epochs": 2, "width": 16, "rep_dim": 16})";
  const std::string flags = "evaluate --scenario 1 --seeds 3 --n 2000 --methods cisi,tarnet,cfr-wass,ncore --jobs 2 --config " +
                            (dir / "cfg.json").string() + " --out ";
  const int first = run_cli(flags + (dir / "a.csv").string());
  const int second = run_cli(flags + (dir / "b.csv").string());
  const std::string a = read_file(dir / "a.csv");
  const std::string b = read_file(dir / "b.csv");
  return {first == 0 && second == 0 && !a.empty() && a == b,
          "exit codes " + std::to_string(first) + "/" + std::to_string(second) + ", " +
              std::to_string(a.size()) + " bytes, identical: " + (a == b ? "yes" : "no")};
}

Verdict invariants() {
  std::vector<std::string> broken;

  std::vector<std::uint32_t> uniform;
  for (std::uint32_t t = 0; t < 8; ++t) uniform.insert(uniform.end(), 5, t);
  for (const auto& [p, w] : pattern_weights(uniform)) {
    if (w != 4.0) broken.push_back("uniform weight");
  }
  const std::vector<std::uint32_t> skew{0, 0, 1, 2};
  const PatternWeights w = pattern_weights(skew);
  if (w.at(0) != 1.0 || w.at(1) != 2.0 || w.at(2) != 2.0) broken.push_back("skewed weights");

  std::mt19937_64 rng(77);
  for (Method method : {Method::Cisi, Method::Tarnet, Method::CfrWass, Method::Ncore}) {
    TrainConfig c;
    c.rep_dim = 6;
    c.embed_dim = 3;
    c.width = 8;
    c.beta = 1e-2;
    c.alpha = 0.7;
    const ModelBundle m = init_model(method, 4, 3, c);
    Dataset d;
    d.x = random_matrix(40, 4, rng);
    d.t.resize(40, 3);
    std::bernoulli_distribution coin(0.5);
    for (Index i = 0; i < d.t.size(); ++i) d.t.data()[i] = coin(rng) ? 1.0 : 0.0;
    d.y = random_matrix(40, 1, rng).col(0);
    std::vector<Index> rows(40);
    std::iota(rows.begin(), rows.end(), Index{0});
    const LossBreakdown l = total_loss(m, make_batch(d, rows), pattern_weights(d));
    const double alpha = balance_coefficient(method, c);
    if (std::abs(l.total - (l.outcome + alpha * l.balance + l.regularization)) > 1e-12) {
      broken.push_back("loss identity " + method_name(method));
    }
  }

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(2 + trial % 5, 3, rng);
    const Matrix b = random_matrix(3 + trial % 4, 3, rng, 2.0);
    const double ab = sinkhorn_wasserstein(a, b, 0.1, 50);
    if (ab < 0.0) broken.push_back("penalty sign");
    if (ab != sinkhorn_wasserstein(b, a, 0.1, 50)) broken.push_back("penalty symmetry");
  }

  const Split s1 = split_indices(1000, 0.7, 9);
  const Split s2 = split_indices(1000, 0.7, 9);
  const Split s3 = split_indices(1000, 0.7, 10);
  std::set<Index> all(s1.train.begin(), s1.train.end());
  all.insert(s1.test.begin(), s1.test.end());
  if (s1.train != s2.train || s1.test != s2.test) broken.push_back("split reproducibility");
  if (s1.train == s3.train) broken.push_back("split seed dependence");
  if (s1.train.size() != 700 || all.size() != 1000) broken.push_back("split partition");

  std::string detail = broken.empty() ? "weights 4/2/1, loss identity, penalty symmetry and sign, split reproducibility"
                                      : "violated:";
  for (const auto& b : broken) detail += " " + b;
  return {broken.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", gradient_check},
      {"OT oracle equivalence", ot_oracle},
      {"estimand oracle", estimand_oracle},
      {"benchmark error bands", table_reproduction},
      {"ablation direction", ablation_direction},
      {"embedding similarity trend", embedding_property},
      {"alpha and sample-size directions", sensitivity_directions},
      {"determinism", determinism},
      {"invariants", invariants},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    const auto& [name, check] = criteria[i];
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << v.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
