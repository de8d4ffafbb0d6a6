// Command-line front end for the few-shot inference library.
#include "fsi/bench.hpp"
#include "fsi/error.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct DataArgs {
  std::string features;
  std::string synthetic;
  std::string base_features;
  std::string base_synthetic;
  std::uint64_t data_seed = 1;
};

struct TaskArgs {
  int ways = 5;
  int shots = 1;
  int queries = 15;
  std::optional<double> kappa;
  int total_queries = 75;
  std::string negatives = "none";
  bool reuse_negatives = false;
  std::optional<std::uint64_t> seed;
};

struct SolverArgs {
  std::string method = "tim-gd";
  std::string tim_loss = "full";
  std::string mode = "transductive";
  std::optional<int> iters;
  std::optional<double> lr;
  std::optional<double> lambda;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> tau;
  std::optional<double> gamma;
  bool learn_scale = false;
  bool cosine = false;
};

struct RunArgs {
  int episodes = 10000;
  int jobs = 1;
  bool no_timing = false;
  std::string out;
  std::string trace;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw fsi::ConfigError("invalid " + what + ": '" + text + "'");
  return value;
}

fsi::SyntheticConfig parse_synthetic(const std::string& spec, std::uint64_t seed) {
  const auto parts = split(spec, ',');
  if (parts.size() != 4 && parts.size() != 5) throw fsi::ConfigError("--synthetic expects D,C,N,sigma[,shared]");
  fsi::SyntheticConfig cfg;
  cfg.dim = parse_number<int>(parts[0], "synthetic dim");
  cfg.num_classes = parse_number<int>(parts[1], "synthetic class count");
  cfg.per_class = parse_number<int>(parts[2], "synthetic samples per class");
  cfg.spread = parse_number<double>(parts[3], "synthetic spread");
  if (parts.size() == 5) cfg.shared = parse_number<double>(parts[4], "synthetic shared component");
  cfg.seed = seed;
  return cfg;
}

std::optional<fsi::EmbeddingSet> load_source(const std::string& path, const std::string& synth,
                                             std::uint64_t seed, const std::string& flag) {
  if (!path.empty() && !synth.empty()) throw fsi::ConfigError(flag + ": give a file or a synthetic spec, not both");
  if (!path.empty()) return fsi::load_embeddings(path);
  if (!synth.empty()) return fsi::generate_synthetic(parse_synthetic(synth, seed));
  return std::nullopt;
}

fsi::NegativeSource parse_negatives(const std::string& text, bool reuse) {
  if (text == "none") return fsi::NoNegatives{};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw fsi::ConfigError("--negatives expects none, base:N or uniform:N");
  const std::string kind = text.substr(0, colon);
  const int count = parse_number<int>(text.substr(colon + 1), "negative count");
  if (kind == "base") return fsi::BasePool{count, reuse};
  if (kind == "uniform") return fsi::UniformSphere{count, reuse};
  throw fsi::ConfigError("unknown negative source '" + kind + "'");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("FSI_SEED"); env != nullptr && *env != '\0') {
    return parse_number<std::uint64_t>(env, "FSI_SEED");
  }
  return 0;
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--features", d.features, "Embedding file (binary or .csv)");
  cmd->add_option("--synthetic", d.synthetic, "Generate the novel set: D,C,N,spread[,shared]");
  cmd->add_option("--base-features", d.base_features, "Base embedding file for negatives");
  cmd->add_option("--base-synthetic", d.base_synthetic, "Generate the base set: D,C,N,spread[,shared]");
  cmd->add_option("--data-seed", d.data_seed, "Seed for synthetic data");
}

void add_task_options(CLI::App* cmd, TaskArgs& t) {
  cmd->add_option("--ways", t.ways);
  cmd->add_option("--shots", t.shots);
  cmd->add_option("--queries", t.queries, "Queries per class (balanced mode)");
  cmd->add_option("--kappa", t.kappa, "Dirichlet concentration; enables imbalanced queries");
  cmd->add_option("--total-queries", t.total_queries, "Query total in Dirichlet mode");
  cmd->add_option("--negatives", t.negatives, "none, base:N or uniform:N");
  cmd->add_flag("--reuse-negatives", t.reuse_negatives, "Draw one negative pool for all episodes");
  cmd->add_option("--seed", t.seed, "Episode seed (falls back to FSI_SEED)");
}

void add_solver_options(CLI::App* cmd, SolverArgs& s) {
  cmd->add_option("--method", s.method, "inductive, tim-gd, tim-adm, poodle or entmin");
  cmd->add_option("--tim-loss", s.tim_loss, "full, ce, ce+cond or ce-marg");
  cmd->add_option("--mode", s.mode, "POODLE mode: transductive or inductive");
  cmd->add_option("--iters", s.iters);
  cmd->add_option("--lr", s.lr);
  cmd->add_option("--lambda", s.lambda, "TIM cross-entropy weight");
  cmd->add_option("--alpha", s.alpha, "TIM conditional-entropy weight or POODLE pull weight");
  cmd->add_option("--beta", s.beta, "POODLE push weight");
  cmd->add_option("--tau", s.tau, "TIM softmax temperature");
  cmd->add_option("--gamma", s.gamma, "POODLE logit scale");
  cmd->add_flag("--learn-scale", s.learn_scale, "Optimize the POODLE scale as well");
  cmd->add_flag("--cosine", s.cosine, "Keep prototypes on the unit sphere");
}

void add_run_options(CLI::App* cmd, RunArgs& r) {
  cmd->add_option("--episodes", r.episodes);
  cmd->add_option("--jobs", r.jobs, "Worker threads");
  cmd->add_flag("--no-timing", r.no_timing, "Skip wall-clock measurement (bit-reproducible output)");
  cmd->add_option("--out", r.out, "Output path (stdout when omitted)");
  cmd->add_option("--trace", r.trace, "Also write the mean convergence trace as CSV");
}

fsi::BenchConfig build_config(const TaskArgs& t, const SolverArgs& s, const RunArgs& r) {
  fsi::BenchConfig cfg;
  cfg.method = fsi::method_from_name(s.method);
  cfg.task.ways = t.ways;
  cfg.task.shots = t.shots;
  cfg.task.queries_per_class = t.queries;
  if (t.kappa) cfg.task.balance = fsi::Dirichlet{*t.kappa, t.total_queries};
  cfg.task.negatives = parse_negatives(t.negatives, t.reuse_negatives);
  cfg.task.seed = resolve_seed(t.seed);
  cfg.num_episodes = r.episodes;
  cfg.iters = s.iters;
  cfg.lr = s.lr;
  cfg.tim = fsi::TimWeights::from_label(s.tim_loss);
  if (s.lambda) cfg.tim.lambda_ce = *s.lambda;
  if (s.alpha) cfg.tim.alpha_cond = *s.alpha;
  if (s.alpha) cfg.poodle.alpha_pull = *s.alpha;
  if (s.beta) cfg.poodle.beta_push = *s.beta;
  if (s.mode == "transductive") {
    cfg.poodle_mode = fsi::PoodleMode::Transductive;
  } else if (s.mode == "inductive") {
    cfg.poodle_mode = fsi::PoodleMode::Inductive;
  } else {
    throw fsi::ConfigError("unknown POODLE mode '" + s.mode + "'");
  }
  cfg.learn_scale = s.learn_scale;
  if (s.tau) cfg.classifier.tau = *s.tau;
  if (s.gamma) cfg.classifier.gamma = *s.gamma;
  cfg.classifier.normalize_prototypes = s.cosine;
  cfg.jobs = r.jobs;
  cfg.measure_time = !r.no_timing;
  return cfg;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw fsi::DataError("cannot write " + path);
}

struct Loaded {
  fsi::EmbeddingSet novel;
  std::optional<fsi::EmbeddingSet> base;
  const fsi::EmbeddingSet* base_ptr() const { return base ? &*base : nullptr; }
};

Loaded load_data(const DataArgs& d) {
  auto novel = load_source(d.features, d.synthetic, d.data_seed, "--features");
  if (!novel) throw fsi::ConfigError("one of --features or --synthetic is required");
  auto base = load_source(d.base_features, d.base_synthetic, d.data_seed + 1, "--base-features");
  return {std::move(*novel), std::move(base)};
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_number<int>(part, what));
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Transductive few-shot inference benchmarks"};
  app.require_subcommand(1);

  DataArgs data;
  TaskArgs task;
  SolverArgs solver;
  RunArgs run_args;

  auto* bench = app.add_subcommand("bench", "Run an episode suite and print a JSON summary");
  add_data_options(bench, data);
  add_task_options(bench, task);
  add_solver_options(bench, solver);
  add_run_options(bench, run_args);

  std::string shots_list = "1,5";
  auto* ablation = app.add_subcommand("ablation", "Loss-term ablation grid for TIM-GD and TIM-ADM");
  add_data_options(ablation, data);
  add_task_options(ablation, task);
  add_solver_options(ablation, solver);
  add_run_options(ablation, run_args);
  ablation->add_option("--shots-list", shots_list, "Comma-separated shot settings");

  auto* trace = app.add_subcommand("trace", "Mean convergence trace as CSV");
  add_data_options(trace, data);
  add_task_options(trace, task);
  add_solver_options(trace, solver);
  add_run_options(trace, run_args);

  std::string methods_list = "inductive,tim-adm,tim-gd";
  int repeats = 5;
  auto* runtime = app.add_subcommand("runtime", "Solver-only seconds per task by method");
  add_data_options(runtime, data);
  add_task_options(runtime, task);
  add_solver_options(runtime, solver);
  add_run_options(runtime, run_args);
  runtime->add_option("--methods", methods_list);
  runtime->add_option("--repeats", repeats);

  std::string synth_spec = "64,20,100,0.3";
  std::string synth_out;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "Write a synthetic embedding file");
  synth->add_option("--synthetic", synth_spec, "D,C,N,spread[,shared]");
  synth->add_option("--data-seed", synth_seed);
  synth->add_option("--out", synth_out)->required();

  std::string convert_in, convert_out;
  auto* convert = app.add_subcommand("convert", "Convert between CSV and binary embedding files");
  convert->add_option("input", convert_in)->required();
  convert->add_option("output", convert_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (synth->parsed()) {
    fsi::save_embeddings(fsi::generate_synthetic(parse_synthetic(synth_spec, synth_seed)), synth_out);
    return 0;
  }
  if (convert->parsed()) {
    const fsi::EmbeddingSet set = fsi::load_embeddings(convert_in);
    if (convert_out.ends_with(".csv")) {
      fsi::save_embeddings_csv(set, convert_out);
    } else {
      fsi::save_embeddings(set, convert_out);
    }
    return 0;
  }

  const Loaded loaded = load_data(data);
  fsi::BenchConfig cfg = build_config(task, solver, run_args);

  if (bench->parsed()) {
    const fsi::Summary summary = fsi::run_benchmark(cfg, loaded.novel, loaded.base_ptr());
    emit(fsi::summary_to_json(summary), run_args.out);
    if (!run_args.trace.empty()) {
      fsi::export_trace(fsi::mean_trace(cfg, loaded.novel, loaded.base_ptr()), run_args.trace);
    }
  } else if (ablation->parsed()) {
    const auto grid = fsi::run_ablation(cfg, loaded.novel, parse_int_list(shots_list, "shot count"));
    emit(fsi::ablation_to_json(grid), run_args.out);
  } else if (trace->parsed()) {
    const std::string csv = fsi::trace_to_csv(fsi::mean_trace(cfg, loaded.novel, loaded.base_ptr()));
    emit(csv, run_args.trace.empty() ? run_args.out : run_args.trace);
  } else if (runtime->parsed()) {
    std::vector<fsi::Method> methods;
    for (const auto& name : split(methods_list, ',')) methods.push_back(fsi::method_from_name(name));
    const auto rows = fsi::time_per_task(cfg, loaded.novel, loaded.base_ptr(), methods, repeats);
    emit(fsi::timing_to_json(rows), run_args.out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const fsi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fsi::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const fsi::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
