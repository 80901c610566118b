// blockgp: generate datasets, train, predict, evaluate and compare against the
// dense reference, all through bundle directories on disk.

#include "blockgp/blockgp.hpp"
#include "blockgp/oracle.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <numeric>
#include <random>
#include <string>

#ifndef BLOCKGP_VERSION
#define BLOCKGP_VERSION "unknown"
#endif

namespace {

namespace fs = std::filesystem;
using namespace blockgp;
using Clock = std::chrono::steady_clock;

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitFormat = 3,
  kExitNumerical = 4,
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kOverlap:
    case ErrorKind::kInfeasible:
      return kExitUsage;
    case ErrorKind::kShape:
    case ErrorKind::kFormat:
      return kExitFormat;
    case ErrorKind::kFactorization:
    case ErrorKind::kConvergence:
    case ErrorKind::kDegenerate:
      return kExitNumerical;
  }
  return kExitInternal;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kFactorization: return "factorization failure";
    case ErrorKind::kConvergence: return "convergence failure";
    case ErrorKind::kDegenerate: return "degenerate representatives";
    case ErrorKind::kOverlap: return "overlapping clusters";
    case ErrorKind::kInfeasible: return "infeasible clustering";
  }
  return "error";
}

int default_threads() {
  if (const char* env = std::getenv("BLOCKGP_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring BLOCKGP_THREADS='" << env << "'\n";
  }
  return 1;
}

struct Options {
  // shared
  std::string bundle;
  std::string out;
  std::string precision = "f64";
  int threads = 1;
  std::uint64_t seed = 0;
  // generate
  std::string kind;
  Eigen::Index n_c = 8;
  Eigen::Index b = 64;
  std::optional<double> radius;
  double spacing = 1.0;
  double side = 4.0;
  double noise_sd = kDefaultLabelNoiseSd;
  std::string features;
  std::string labels;
  std::string reps = "centroid";
  std::optional<double> init_lengthscale, init_noise, init_output_scale;
  // train / predict
  int epochs = 50;
  double lr = 0.05;
  double cg_tol = 0.01;
  int cg_max_iter = 2000;
  double grad_threshold = 1e-3;
  std::optional<Eigen::Index> probes;
  std::string theta;
};

void ensure_out_dir(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw UsageError("cannot create output directory " + o.out + ": " + ec.message());
}

RunManifest start_manifest(const std::string& command, const Options& o) {
  RunManifest m;
  m.command = command;
  m.version = BLOCKGP_VERSION;
  m.seed = o.seed;
  m.config.set("precision", o.precision);
  m.config.set("threads", o.threads);
  if (!o.bundle.empty()) m.inputs.push_back(fs::absolute(o.bundle).string());
  return m;
}

void add_solver_config(RunManifest& m, const Options& o) {
  m.config.set("cg_tol", o.cg_tol);
  m.config.set("cg_max_iter", o.cg_max_iter);
}

template <typename Scalar>
Hyperparameters<Scalar> load_theta(const Options& o) {
  if (o.theta.empty()) throw UsageError("--theta is required (run 'train' first)");
  if (!fs::exists(o.theta)) throw UsageError("hyperparameter file " + o.theta + " does not exist (run 'train' first)");
  return load_hyperparameters<Scalar>(o.theta);
}

// ---------------------------------------------------------------- generate

// Initial hyperparameters drawn from the seed, unless given explicitly.
Hyperparameters<double> initial_hyperparameters(const Options& o) {
  const Hyperparameters<double> drawn = draw_initial_hyperparameters(o.seed);
  return Hyperparameters<double>(o.init_lengthscale.value_or(drawn.lengthscale), o.init_noise.value_or(drawn.noise),
                                 o.init_output_scale.value_or(drawn.output_scale));
}

ClusteredDataset<double> cluster_external(const Options& o, const Hyperparameters<double>& hp, KeyValues& info) {
  if (o.features.empty() || o.labels.empty()) throw UsageError("cluster-external needs --features and --labels");
  const Matrix<double> x = npy::read_matrix<double>(o.features);
  const Vector<double> y = npy::read_vector<double>(o.labels);
  if (x.rows() != y.size()) {
    throw FormatError(o.labels + ": " + std::to_string(y.size()) + " labels for " + std::to_string(x.rows()) +
                      " feature rows");
  }
  if (x.rows() < 2) throw UsageError("cluster-external needs at least two rows");

  // seeded 80/20 split, then balanced k-means on the training part
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(o.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::llround(static_cast<double>(x.rows()) * kTestFraction)));
  const Eigen::Index n_pool = x.rows() - n_test;
  Matrix<double> pool(n_pool, x.cols());
  Vector<double> pool_y(n_pool);
  for (Eigen::Index i = 0; i < n_pool; ++i) {
    pool.row(i) = x.row(order[static_cast<std::size_t>(i)]);
    pool_y(i) = y(order[static_cast<std::size_t>(i)]);
  }
  const auto km = kmeans_uniform(pool, o.n_c, o.b, o.seed);

  ClusteredDataset<double> ds;
  ds.n_c = o.n_c;
  ds.b = o.b;
  ds.x_train = km.x;
  ds.y_train.resize(km.x.rows());
  for (Eigen::Index i = 0; i < ds.y_train.size(); ++i) ds.y_train(i) = pool_y(km.source_rows[static_cast<std::size_t>(i)]);
  ds.reps = o.reps == "medoid" ? select_representatives(ds.x_train, o.n_c, o.b, hp, RepresentativeMode::kMedoid)
                               : km.reps;
  ds.x_test.resize(n_test, x.cols());
  ds.y_test.resize(n_test);
  for (Eigen::Index j = 0; j < n_test; ++j) {
    ds.x_test.row(j) = x.row(order[static_cast<std::size_t>(n_pool + j)]);
    ds.y_test(j) = y(order[static_cast<std::size_t>(n_pool + j)]);
  }
  info.set("features", fs::absolute(o.features).string());
  info.set("labels", fs::absolute(o.labels).string());
  info.set("kmeans_iterations", km.iterations);
  info.set("dropped_rows", static_cast<long long>(n_pool - km.x.rows()));
  return ds;
}

int cmd_generate(const Options& o) {
  ensure_out_dir(o);
  RunManifest manifest = start_manifest("generate " + o.kind, o);
  const auto t0 = Clock::now();

  Bundle<double> bundle;
  bundle.initial_hp = initial_hyperparameters(o);
  bundle.manifest.set("kind", o.kind);
  bundle.manifest.set("seed", o.seed);
  if (o.kind == "synth1d") {
    Synth1dParams p;
    p.n_c = o.n_c;
    p.b = o.b;
    p.radius = o.radius.value_or(p.radius);
    p.spacing = o.spacing;
    p.noise_sd = o.noise_sd;
    p.seed = o.seed;
    bundle.data = gen_1d<double>(p);
    bundle.manifest.set("radius", p.radius);
    bundle.manifest.set("spacing", p.spacing);
    bundle.manifest.set("noise_sd", p.noise_sd);
  } else if (o.kind == "synth3d") {
    Synth3dParams p;
    p.n_c = o.n_c;
    p.b = o.b;
    p.radius = o.radius.value_or(p.radius);
    p.side = o.side;
    p.noise_sd = o.noise_sd;
    p.seed = o.seed;
    bundle.data = gen_3d<double>(p);
    bundle.manifest.set("radius", p.radius);
    bundle.manifest.set("side", p.side);
    bundle.manifest.set("noise_sd", p.noise_sd);
  } else {
    bundle.data = cluster_external(o, bundle.initial_hp, bundle.manifest);
    bundle.manifest.set("representatives", o.reps);
  }
  bundle.probes = hutchinson_gen<double>(bundle.data.n(), o.probes.value_or(8), o.seed);
  write_bundle(o.out, bundle);

  manifest.config.set("kind", o.kind);
  manifest.config.set("n_c", static_cast<long long>(o.n_c));
  manifest.config.set("b", static_cast<long long>(o.b));
  manifest.time_phase("generate", t0);
  manifest.save(fs::path(o.out) / "run_manifest.txt");
  std::cout << "wrote bundle " << o.out << " (n_train=" << bundle.data.n() << ", n_test=" << bundle.data.x_test.rows()
            << ", d=" << bundle.data.dim() << ")\n";
  return kExitOk;
}

// ------------------------------------------------------------------- train

TrainConfig train_config(const Options& o) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.grad_threshold = o.grad_threshold;
  cfg.cg = CgConfig{o.cg_tol, o.cg_max_iter};
  cfg.seed = o.seed;
  if (o.probes) cfg.probes = *o.probes;
  cfg.validate();
  return cfg;
}

template <typename Scalar>
int cmd_train(const Options& o) {
  const TrainConfig cfg = train_config(o);
  ensure_out_dir(o);
  RunManifest manifest = start_manifest("train", o);
  add_solver_config(manifest, o);
  manifest.config.set("epochs", cfg.epochs);
  manifest.config.set("lr", cfg.learning_rate);
  manifest.config.set("grad_threshold", cfg.grad_threshold);

  auto t = Clock::now();
  const Bundle<Scalar> bundle = read_bundle<Scalar>(o.bundle);
  manifest.time_phase("load", t);
  // the bundle's probes, unless a probe count is forced
  const HutchinsonProbes<Scalar> probes =
      o.probes ? hutchinson_gen<Scalar>(bundle.data.n(), *o.probes, o.seed) : bundle.probes;
  manifest.config.set("probes", static_cast<long long>(probes.m()));
  manifest.config.set("probe_seed", probes.seed);

  t = Clock::now();
  const TrainReport<Scalar> report = train(bundle.data, bundle.initial_hp, cfg, probes,
                                           EpochCallback<Scalar>([](const EpochRecord<Scalar>& r) {
                                             std::cout << epoch_line(r) << "\n";
                                           }));
  manifest.time_phase("train", t);

  const fs::path out(o.out);
  write_train_report(out / "report.txt", report);
  save_hyperparameters(out / "theta.txt", report.final_hp);
  manifest.config.set("pcg_mean", report.iterations.mean());
  manifest.config.set("pcg_max", report.iterations.max);
  manifest.save(out / "run_manifest.txt");
  std::cout << "final lengthscale=" << KeyValues::format(report.final_hp.lengthscale)
            << " noise=" << KeyValues::format(report.final_hp.noise)
            << " output_scale=" << KeyValues::format(report.final_hp.output_scale) << "\n";
  return kExitOk;
}

// --------------------------------------------------------- predict/evaluate

template <typename Scalar>
int cmd_predict(const Options& o, bool evaluate) {
  ensure_out_dir(o);
  RunManifest manifest = start_manifest(evaluate ? "evaluate" : "predict", o);
  add_solver_config(manifest, o);
  const Hyperparameters<Scalar> hp = load_theta<Scalar>(o);
  manifest.inputs.push_back(fs::absolute(o.theta).string());

  auto t = Clock::now();
  const Bundle<Scalar> bundle = read_bundle<Scalar>(o.bundle);
  manifest.time_phase("load", t);

  PredictConfig cfg;
  cfg.cg = CgConfig{o.cg_tol, o.cg_max_iter};
  t = Clock::now();
  const PosteriorResult<Scalar> res = posterior(bundle.data, bundle.data.x_test, hp, cfg);
  manifest.time_phase("predict", t);

  const fs::path out(o.out);
  const Posterior<Scalar>& post = res.posterior;
  npy::write_vector(out / "mean.npy", post.mean);
  npy::write_vector(out / "variance.npy", post.variance);
  npy::write_vector(out / "lower.npy", post.lower);
  npy::write_vector(out / "upper.npy", post.upper);

  KeyValues metrics;
  metrics.set("n_test", static_cast<long long>(post.mean.size()));
  if (evaluate) metrics.set("rmse", static_cast<double>(rmse(post.mean, bundle.data.y_test)));
  metrics.set("pcg_mean", res.iterations.mean());
  metrics.set("pcg_max", res.iterations.max);
  metrics.set("clamped_variances", post.clamped);
  metrics.save(out / "metrics.txt");
  manifest.save(out / "run_manifest.txt");
  std::cout << metrics.str();
  return kExitOk;
}

// ---------------------------------------------------------- compare-oracle

template <typename Scalar>
int cmd_compare_oracle(const Options& o) {
  ensure_out_dir(o);
  RunManifest manifest = start_manifest("compare-oracle", o);
  add_solver_config(manifest, o);
  const Hyperparameters<Scalar> hp = load_theta<Scalar>(o);
  manifest.inputs.push_back(fs::absolute(o.theta).string());
  const Bundle<Scalar> bundle = read_bundle<Scalar>(o.bundle);
  const ClusteredDataset<Scalar>& ds = bundle.data;
  oracle::guard(ds.n());

  auto t = Clock::now();
  const CgConfig cg{o.cg_tol, o.cg_max_iter};
  const StructuredKernel<Scalar> sk = build_structured(ds, hp);
  const BlockCholesky<Scalar> bc = factorize_blocks(sk);
  const LossEvaluation ev = compute_loss(bc, ds, hp, shortcut::Baseline{}, bundle.probes, cg);
  PredictConfig pcfg;
  pcfg.cg = cg;
  const PosteriorResult<Scalar> post = posterior(ds, ds.x_test, hp, pcfg);
  manifest.time_phase("structured", t);

  // Reference quantities in double precision on the densified K''.
  t = Clock::now();
  const ClusteredDataset<double> dd = ds.template cast<double>();
  const Hyperparameters<double> hd = hp.template cast<double>();
  const Matrix<double> dense = oracle::densify(build_structured(dd, hd));
  const double loss_exact = oracle::exact_loss(dense, dd.y_train);
  const double logdet_exact = oracle::logdet_eig(dense);
  const Posterior<double> ref = oracle::dense_posterior(dd, dd.x_test, hd, true);
  manifest.time_phase("oracle", t);

  // Iteration count of a tight solve against the n_c + 1 bound.
  const PreconditionedOperator<Scalar> op(bc, sk.coupling, shortcut::Baseline{});
  const Matrix<Scalar> rhs = apply_r_inverse_transpose(bc, Matrix<Scalar>(ds.y_train));
  const Scalar tight_tol = std::is_same_v<Scalar, double> ? Scalar(1e-8) : Scalar(1e-5);
  const CgResult<Scalar> tight = batch_cg<Scalar>(op, rhs, tight_tol, o.cg_max_iter);

  const auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
  KeyValues cmp;
  cmp.set("n_train", static_cast<long long>(ds.n()));
  cmp.set("n_c", static_cast<long long>(ds.n_c));
  cmp.set("loss_structured", ev.loss);
  cmp.set("loss_oracle", loss_exact);
  cmp.set("loss_rel_delta", rel(ev.loss, loss_exact));
  cmp.set("logdet_estimate", ev.logdet);
  cmp.set("logdet_oracle", logdet_exact);
  cmp.set("logdet_rel_delta", rel(ev.logdet, logdet_exact));
  const Vector<double> mean = post.posterior.mean.template cast<double>();
  const Vector<double> var = post.posterior.variance.template cast<double>();
  cmp.set("posterior_mean_max_abs_delta", mean.size() ? (mean - ref.mean).cwiseAbs().maxCoeff() : 0.0);
  cmp.set("posterior_variance_max_abs_delta", var.size() ? (var - ref.variance).cwiseAbs().maxCoeff() : 0.0);
  cmp.set("pcg_loss_solve", ev.solve_iterations);
  cmp.set("pcg_logdet_solve", ev.logdet_iterations);
  cmp.set("pcg_posterior_mean", post.iterations.mean());
  cmp.set("pcg_posterior_max", post.iterations.max);
  cmp.set("tight_tol", static_cast<double>(tight_tol));
  cmp.set("tight_iterations", tight.report.iterations);
  cmp.set("tight_converged", tight.report.converged ? 1 : 0);
  cmp.set("iteration_bound", static_cast<long long>(ds.n_c + 1));
  cmp.save(fs::path(o.out) / "comparison.txt");
  manifest.save(fs::path(o.out) / "run_manifest.txt");
  std::cout << cmp.str();
  return kExitOk;
}

template <typename F>
int dispatch(const Options& o, F&& run) {
  Eigen::setNbThreads(o.threads);
  return o.precision == "f32" ? run(float{}) : run(double{});
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  o.threads = default_threads();

  CLI::App app{"Clustered Gaussian process regression with a block-structured covariance"};
  app.set_version_flag("--version", BLOCKGP_VERSION);
  app.require_subcommand(1);

  const auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--precision", o.precision, "Floating point precision")->check(CLI::IsMember({"f32", "f64"}));
    sub->add_option("--threads", o.threads,
                    "Eigen thread count (default 1, or $BLOCKGP_THREADS). Counts above 1 may change low-order bits")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Random seed");
  };
  const auto add_solver = [&](CLI::App* sub) {
    sub->add_option("--cg-tol", o.cg_tol, "Per-column residual tolerance of PCG")->check(CLI::PositiveNumber);
    sub->add_option("--cg-max-iter", o.cg_max_iter, "PCG iteration cap")->check(CLI::PositiveNumber);
  };

  CLI::App* gen = app.add_subcommand("generate", "Write a dataset bundle");
  gen->add_option("kind", o.kind, "Dataset kind")->required()->check(CLI::IsMember({"synth1d", "synth3d", "cluster-external"}));
  gen->add_option("--out", o.out, "Bundle directory")->required();
  gen->add_option("--n-c", o.n_c, "Number of clusters")->check(CLI::PositiveNumber);
  gen->add_option("--b", o.b, "Points per cluster")->check(CLI::PositiveNumber);
  gen->add_option("--radius", o.radius, "Cluster radius (synth1d 0.4, synth3d 1.5)");
  gen->add_option("--spacing", o.spacing, "Distance between 1-D representatives");
  gen->add_option("--side", o.side, "Lattice side length for synth3d");
  gen->add_option("--noise-sd", o.noise_sd, "Label noise standard deviation");
  gen->add_option("--features", o.features, "Feature matrix (.npy, n x d) for cluster-external");
  gen->add_option("--labels", o.labels, "Label vector (.npy, n) for cluster-external");
  gen->add_option("--reps", o.reps, "Representative choice for cluster-external")
      ->check(CLI::IsMember({"centroid", "medoid"}));
  gen->add_option("--probes", o.probes, "Number of Rademacher probe vectors")->check(CLI::PositiveNumber);
  gen->add_option("--init-lengthscale", o.init_lengthscale, "Initial lengthscale (default: drawn from seed)");
  gen->add_option("--init-noise", o.init_noise, "Initial noise variance (default: drawn from seed)");
  gen->add_option("--init-output-scale", o.init_output_scale, "Initial output scale (default: drawn from seed)");
  gen->add_option("--seed", o.seed, "Random seed");

  CLI::App* tr = app.add_subcommand("train", "Fit hyperparameters on a bundle");
  tr->add_option("--bundle", o.bundle, "Bundle directory")->required();
  tr->add_option("--out", o.out, "Output directory")->required();
  tr->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
  tr->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--grad-threshold", o.grad_threshold, "Step-halving stopping threshold, in [1e-6, 1e-2]");
  tr->add_option("--probes", o.probes, "Regenerate this many probes from --seed instead of the bundle's")
      ->check(CLI::PositiveNumber);
  add_solver(tr);
  add_shared(tr);

  CLI::App* pr = app.add_subcommand("predict", "Posterior mean, variance and bounds on the bundle's test inputs");
  CLI::App* ev = app.add_subcommand("evaluate", "predict, plus test RMSE");
  CLI::App* co = app.add_subcommand("compare-oracle", "Compare against dense reference computations");
  for (CLI::App* sub : {pr, ev, co}) {
    sub->add_option("--bundle", o.bundle, "Bundle directory")->required();
    sub->add_option("--theta", o.theta, "Hyperparameter file written by train");
    sub->add_option("--out", o.out, "Output directory")->required();
    add_solver(sub);
    add_shared(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(o);
    if (tr->parsed()) return dispatch(o, [&](auto s) { return cmd_train<decltype(s)>(o); });
    if (pr->parsed()) return dispatch(o, [&](auto s) { return cmd_predict<decltype(s)>(o, false); });
    if (ev->parsed()) return dispatch(o, [&](auto s) { return cmd_predict<decltype(s)>(o, true); });
    if (co->parsed()) return dispatch(o, [&](auto s) { return cmd_compare_oracle<decltype(s)>(o); });
  } catch (const Error& e) {
    std::cerr << "blockgp: " << kind_name(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "blockgp: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
