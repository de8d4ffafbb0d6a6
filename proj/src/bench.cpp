#include "fsi/bench.hpp"

#include "fsi/error.hpp"

#include "json.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <thread>

namespace fsi {

using nlohmann::json;

namespace {

constexpr int kDefaultGdIters = 1000;
constexpr int kDefaultPoodleIters = 250;
constexpr double kDefaultLr = 1e-3;

SolveResult solve(const BenchConfig& cfg, const Task& task, std::span<const int> truth) {
  const double lr = cfg.lr.value_or(kDefaultLr);
  switch (cfg.method) {
    case Method::Inductive: {
      GdOptions none;
      none.iters = 0;
      return run_tim_gd(task, cfg.tim, none, cfg.classifier, truth);
    }
    case Method::TimGd:
      return run_tim_gd(task, cfg.tim, {cfg.iters.value_or(kDefaultGdIters), lr}, cfg.classifier, truth);
    case Method::EntMin: {
      TimWeights w = cfg.tim;
      w.use_ce = true;
      w.use_conditional = true;
      w.use_marginal = false;
      return run_tim_gd(task, w, {cfg.iters.value_or(kDefaultGdIters), lr}, cfg.classifier, truth);
    }
    case Method::TimAdm: {
      AdmOptions adm = cfg.adm;
      if (cfg.iters) adm.iters = *cfg.iters;
      return run_tim_adm(task, cfg.tim, adm, cfg.classifier, truth);
    }
    case Method::Poodle: {
      PoodleOptions opts;
      opts.iters = cfg.iters.value_or(kDefaultPoodleIters);
      opts.lr = lr;
      opts.mode = cfg.poodle_mode;
      opts.learn_scale = cfg.learn_scale;
      return run_poodle(task, cfg.poodle, opts, cfg.classifier, truth);
    }
  }
  throw ConfigError("unknown method");
}

ScaleSource scale_source(Method m) { return m == Method::Poodle ? ScaleSource::Gamma : ScaleSource::Tau; }

void validate(const BenchConfig& cfg) {
  if (cfg.num_episodes < 1) throw ConfigError("number of episodes must be at least 1");
  if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");
  if (cfg.iters && *cfg.iters < 0) throw ConfigError("iteration count must be non-negative");
  if (cfg.lr && !(*cfg.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(cfg.classifier.tau > 0.0) || !(cfg.classifier.gamma > 0.0)) {
    throw ConfigError("tau and gamma must be positive");
  }
  for (double v : {cfg.tim.lambda_ce, cfg.tim.alpha_cond, cfg.poodle.alpha_pull, cfg.poodle.beta_push}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

// Runs fn(i) for i in [0, n) on `jobs` threads. Rethrows the exception of
// the lowest failing index.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::min(jobs, n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

json negatives_json(const NegativeSource& src) {
  if (const auto* b = std::get_if<BasePool>(&src)) {
    return {{"kind", "base"}, {"count", b->count}, {"reuse", b->reuse}};
  }
  if (const auto* u = std::get_if<UniformSphere>(&src)) {
    return {{"kind", "uniform"}, {"count", u->count}, {"reuse", u->reuse}};
  }
  return {{"kind", "none"}};
}

NegativeSource negatives_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "base") return BasePool{j.at("count").get<int>(), j.at("reuse").get<bool>()};
  if (kind == "uniform") return UniformSphere{j.at("count").get<int>(), j.at("reuse").get<bool>()};
  return NoNegatives{};
}

json config_json(const BenchConfig& cfg) {
  json task = {{"ways", cfg.task.ways},
               {"shots", cfg.task.shots},
               {"queries_per_class", cfg.task.queries_per_class},
               {"negatives", negatives_json(cfg.task.negatives)},
               {"seed", cfg.task.seed}};
  if (const auto* d = std::get_if<Dirichlet>(&cfg.task.balance)) {
    task["balance"] = {{"kind", "dirichlet"}, {"concentration", d->concentration},
                       {"total_queries", d->total_queries}};
  } else {
    task["balance"] = {{"kind", "balanced"}};
  }
  json j = {
      {"method", method_name(cfg.method)},
      {"task", task},
      {"num_episodes", cfg.num_episodes},
      {"iters", cfg.iters ? json(*cfg.iters) : json(nullptr)},
      {"lr", cfg.lr ? json(*cfg.lr) : json(nullptr)},
      {"tim",
       {{"lambda_ce", cfg.tim.lambda_ce},
        {"alpha_cond", cfg.tim.alpha_cond},
        {"use_ce", cfg.tim.use_ce},
        {"use_marginal", cfg.tim.use_marginal},
        {"use_conditional", cfg.tim.use_conditional}}},
      {"poodle",
       {{"alpha_pull", cfg.poodle.alpha_pull},
        {"beta_push", cfg.poodle.beta_push},
        {"stop_grad_pull", cfg.poodle.stop_grad_pull},
        {"stop_grad_push", cfg.poodle.stop_grad_push},
        {"mode", cfg.poodle_mode == PoodleMode::Transductive ? "transductive" : "inductive"},
        {"learn_scale", cfg.learn_scale}}},
      {"classifier",
       {{"gamma", cfg.classifier.gamma},
        {"tau", cfg.classifier.tau},
        {"normalize_prototypes", cfg.classifier.normalize_prototypes}}},
      {"adm", {{"iters", cfg.adm.iters}, {"max_inner", cfg.adm.max_inner},
               {"inner_tolerance", cfg.adm.inner_tolerance}}},
      {"measure_time", cfg.measure_time},
  };
  return j;
}

BenchConfig config_from_json(const json& j) {
  BenchConfig cfg;
  cfg.method = method_from_name(j.at("method"));
  const json& t = j.at("task");
  cfg.task.ways = t.at("ways");
  cfg.task.shots = t.at("shots");
  cfg.task.queries_per_class = t.at("queries_per_class");
  cfg.task.seed = t.at("seed");
  cfg.task.negatives = negatives_from_json(t.at("negatives"));
  const json& b = t.at("balance");
  if (b.at("kind") == "dirichlet") {
    cfg.task.balance = Dirichlet{b.at("concentration").get<double>(), b.at("total_queries").get<int>()};
  }
  cfg.num_episodes = j.at("num_episodes");
  if (!j.at("iters").is_null()) cfg.iters = j.at("iters").get<int>();
  if (!j.at("lr").is_null()) cfg.lr = j.at("lr").get<double>();
  const json& tim = j.at("tim");
  cfg.tim = {tim.at("lambda_ce"), tim.at("alpha_cond"), tim.at("use_ce"), tim.at("use_marginal"),
             tim.at("use_conditional")};
  const json& p = j.at("poodle");
  cfg.poodle = {p.at("alpha_pull"), p.at("beta_push"), p.at("stop_grad_pull"), p.at("stop_grad_push")};
  cfg.poodle_mode = p.at("mode") == "inductive" ? PoodleMode::Inductive : PoodleMode::Transductive;
  cfg.learn_scale = p.at("learn_scale");
  const json& c = j.at("classifier");
  cfg.classifier = {c.at("gamma"), c.at("tau"), c.at("normalize_prototypes")};
  const json& a = j.at("adm");
  cfg.adm = {a.at("iters"), a.at("max_inner"), a.at("inner_tolerance")};
  cfg.measure_time = j.at("measure_time");
  return cfg;
}

json summary_json(const Summary& s) {
  return {{"method", method_name(s.method)},
          {"ways", s.ways},
          {"shots", s.shots},
          {"episodes", s.episodes},
          {"mean_accuracy", s.mean_accuracy},
          {"ci95", s.ci95},
          {"mean_task_seconds", s.mean_task_seconds},
          {"config", config_json(s.config)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::Inductive: return "inductive";
    case Method::TimGd: return "tim-gd";
    case Method::TimAdm: return "tim-adm";
    case Method::Poodle: return "poodle";
    case Method::EntMin: return "entmin";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "inductive") return Method::Inductive;
  if (name == "tim-gd") return Method::TimGd;
  if (name == "tim-adm") return Method::TimAdm;
  if (name == "poodle") return Method::Poodle;
  if (name == "entmin") return Method::EntMin;
  throw ConfigError("unknown method '" + name + "'");
}

std::pair<double, double> mean_ci95_percent(std::span<const double> fractions) {
  const std::size_t n = fractions.size();
  if (n == 0) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : fractions) sum += v;
  const double mean = sum / static_cast<double>(n);
  if (n == 1) return {100.0 * mean, 0.0};
  double ss = 0.0;
  for (double v : fractions) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {100.0 * mean, 100.0 * 1.96 * sd / std::sqrt(static_cast<double>(n))};
}

EpisodeRecord solve_episode(const BenchConfig& cfg, const Episode& episode) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const SolveResult result = solve(cfg, episode.task, {});
  const auto stop = Clock::now();

  EpisodeRecord rec;
  if (cfg.measure_time) rec.seconds = std::chrono::duration<double>(stop - start).count();
  const Posterior p = posterior(result.prototypes, episode.task.query_x, scale_source(cfg.method));
  rec.accuracy = accuracy(predict(p), episode.query_y);
  rec.marginal_entropy = marginal_entropy(p);
  rec.conditional_entropy = conditional_entropy(p);
  rec.num_queries = static_cast<int>(p.rows());
  return rec;
}

Summary run_benchmark(const BenchConfig& cfg, const EmbeddingSet& novel, const EmbeddingSet* base) {
  validate(cfg);
  const EpisodeSampler sampler(novel, base, cfg.task);
  std::vector<EpisodeRecord> records(cfg.num_episodes);
  parallel_for(cfg.num_episodes, cfg.jobs,
               [&](int i) { records[i] = solve_episode(cfg, sampler.sample(static_cast<std::uint64_t>(i))); });

  Summary s;
  s.method = cfg.method;
  s.ways = cfg.task.ways;
  s.shots = cfg.task.shots;
  s.episodes = cfg.num_episodes;
  s.config = cfg;
  std::vector<double> acc(records.size());
  double seconds = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    acc[i] = records[i].accuracy;
    seconds += records[i].seconds;
  }
  std::tie(s.mean_accuracy, s.ci95) = mean_ci95_percent(acc);
  s.mean_task_seconds = seconds / static_cast<double>(records.size());
  if (cfg.keep_records) s.records = std::move(records);
  return s;
}

AblationGrid run_ablation(const BenchConfig& cfg, const EmbeddingSet& novel, const std::vector<int>& shots) {
  if (shots.empty()) throw ConfigError("ablation needs at least one shot setting");
  AblationGrid grid;
  grid.shots = shots;
  const TimWeights variants[] = {TimWeights::ce_only(), TimWeights::ce_conditional(),
                                 TimWeights::ce_marginal(), TimWeights::full()};
  for (Method m : {Method::TimGd, Method::TimAdm}) {
    for (TimWeights w : variants) {
      w.lambda_ce = cfg.tim.lambda_ce;
      w.alpha_cond = cfg.tim.alpha_cond;
      AblationRow row{m, w, {}};
      for (int shot : shots) {
        BenchConfig c = cfg;
        c.method = m;
        c.tim = w;
        c.task.shots = shot;
        row.cells.push_back(run_benchmark(c, novel, nullptr));
      }
      grid.rows.push_back(std::move(row));
    }
  }
  return grid;
}

std::vector<TimingRow> time_per_task(const BenchConfig& cfg, const EmbeddingSet& novel,
                                     const EmbeddingSet* base, const std::vector<Method>& methods,
                                     int repeats) {
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  std::vector<TimingRow> rows;
  for (Method m : methods) {
    BenchConfig c = cfg;
    c.method = m;
    c.measure_time = true;
    c.jobs = 1;
    std::vector<double> per_repeat;
    for (int r = 0; r < repeats; ++r) per_repeat.push_back(run_benchmark(c, novel, base).mean_task_seconds);
    TimingRow row{m, 0.0, 0.0, repeats};
    for (double v : per_repeat) row.mean_seconds += v;
    row.mean_seconds /= repeats;
    if (repeats > 1) {
      double ss = 0.0;
      for (double v : per_repeat) ss += (v - row.mean_seconds) * (v - row.mean_seconds);
      row.sd_seconds = std::sqrt(ss / (repeats - 1));
    }
    rows.push_back(row);
  }
  return rows;
}

SolverTrace mean_trace(const BenchConfig& cfg, const EmbeddingSet& novel, const EmbeddingSet* base) {
  validate(cfg);
  const EpisodeSampler sampler(novel, base, cfg.task);
  std::vector<SolverTrace> traces(cfg.num_episodes);
  parallel_for(cfg.num_episodes, cfg.jobs, [&](int i) {
    const Episode ep = sampler.sample(static_cast<std::uint64_t>(i));
    traces[i] = solve(cfg, ep.task, ep.query_y).trace;
  });
  SolverTrace out;
  out.records.resize(traces.front().records.size());
  for (std::size_t t = 0; t < out.records.size(); ++t) {
    TraceRecord& r = out.records[t];
    r.iteration = static_cast<int>(t);
    for (const SolverTrace& tr : traces) {
      const TraceRecord& src = tr.records.at(t);
      r.wall_seconds += src.wall_seconds;
      r.loss += src.loss;
      r.accuracy += src.accuracy;
      r.mutual_information += src.mutual_information;
    }
    const double n = static_cast<double>(traces.size());
    r.wall_seconds /= n;
    r.loss /= n;
    r.accuracy /= n;
    r.mutual_information /= n;
  }
  return out;
}

std::string trace_to_csv(const SolverTrace& trace) {
  std::string out = "iteration,wall_seconds,loss,accuracy,mutual_information\n";
  for (const TraceRecord& r : trace.records) {
    out += std::to_string(r.iteration);
    for (double v : {r.wall_seconds, r.loss, r.accuracy, r.mutual_information}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void export_trace(const SolverTrace& trace, const std::filesystem::path& path) {
  write_text(path, trace_to_csv(trace));
}

std::string summary_to_json(const Summary& summary) { return summary_json(summary).dump(2) + "\n"; }

void export_summary(const Summary& summary, const std::filesystem::path& path) {
  write_text(path, summary_to_json(summary));
}

Summary summary_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Summary s;
    s.method = method_from_name(j.at("method"));
    s.ways = j.at("ways");
    s.shots = j.at("shots");
    s.episodes = j.at("episodes");
    s.mean_accuracy = j.at("mean_accuracy");
    s.ci95 = j.at("ci95");
    s.mean_task_seconds = j.at("mean_task_seconds");
    s.config = config_from_json(j.at("config"));
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed summary JSON: ") + e.what());
  }
}

std::string ablation_to_json(const AblationGrid& grid) {
  json rows = json::array();
  for (const AblationRow& row : grid.rows) {
    json cells = json::array();
    for (const Summary& s : row.cells) {
      cells.push_back({{"shots", s.shots}, {"mean_accuracy", s.mean_accuracy}, {"ci95", s.ci95},
                       {"mean_task_seconds", s.mean_task_seconds}});
    }
    rows.push_back({{"method", method_name(row.method)}, {"loss", row.weights.label()}, {"cells", cells}});
  }
  return json{{"shots", grid.shots}, {"rows", rows}}.dump(2) + "\n";
}

std::string timing_to_json(const std::vector<TimingRow>& rows) {
  json out = json::array();
  for (const TimingRow& r : rows) {
    out.push_back({{"method", method_name(r.method)}, {"mean_seconds", r.mean_seconds},
                   {"sd_seconds", r.sd_seconds}, {"repeats", r.repeats}});
  }
  return out.dump(2) + "\n";
}

}  // namespace fsi
