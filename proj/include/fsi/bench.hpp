#pragma once

#include "fsi/classifier.hpp"
#include "fsi/episodes.hpp"
#include "fsi/features.hpp"
#include "fsi/losses.hpp"
#include "fsi/optim.hpp"
#include "fsi/tim_adm.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fsi {

enum class Method { Inductive, TimGd, TimAdm, Poodle, EntMin };

std::string method_name(Method method);
Method method_from_name(const std::string& name);  // throws ConfigError

struct BenchConfig {
  Method method = Method::TimGd;
  TaskConfig task;
  int num_episodes = 10000;
  /// Overrides each method's default iteration count when set.
  std::optional<int> iters;
  std::optional<double> lr;
  TimWeights tim;
  PoodleWeights poodle;
  PoodleMode poodle_mode = PoodleMode::Transductive;
  bool learn_scale = false;
  ClassifierOptions classifier;
  AdmOptions adm;
  int jobs = 1;
  /// Solver wall time is measured per episode. Off makes every Summary field
  /// reproducible bit for bit (mean_task_seconds is then 0).
  bool measure_time = true;
  bool keep_records = false;
};

/// Per-episode outcome.
struct EpisodeRecord {
  double accuracy = 0.0;  // fraction in [0, 1]
  double seconds = 0.0;   // solver only
  double marginal_entropy = 0.0;     // H(Y_Q) of the final predictions
  double conditional_entropy = 0.0;  // H(Y_Q|X_Q) of the final predictions
  int num_queries = 0;
};

struct Summary {
  Method method = Method::TimGd;
  int ways = 0;
  int shots = 0;
  int episodes = 0;
  double mean_accuracy = 0.0;  // percent
  double ci95 = 0.0;           // percent, half-width
  double mean_task_seconds = 0.0;
  BenchConfig config;
  std::vector<EpisodeRecord> records;  // filled when config.keep_records
};

/// Mean and 1.96 * sample-sd / sqrt(n) of the values, both scaled by 100.
/// n = 1 gives a zero half-width.
std::pair<double, double> mean_ci95_percent(std::span<const double> fractions);

/// Solves one episode with the configured method.
EpisodeRecord solve_episode(const BenchConfig& cfg, const Episode& episode);

/// Solves episodes 0..n-1. Results are reduced in index order, so the output
/// does not depend on cfg.jobs.
Summary run_benchmark(const BenchConfig& cfg, const EmbeddingSet& novel,
                      const EmbeddingSet* base = nullptr);

struct AblationRow {
  Method method;
  TimWeights weights;
  std::vector<Summary> cells;  // one per shot setting
};

struct AblationGrid {
  std::vector<int> shots;
  std::vector<AblationRow> rows;
};

/// {TIM-GD, TIM-ADM} x {CE, CE+H(Y|X), CE-H(Y), full}, one column per shot
/// count. cfg.method and cfg.tim flags are overridden per row.
AblationGrid run_ablation(const BenchConfig& cfg, const EmbeddingSet& novel,
                          const std::vector<int>& shots);

struct TimingRow {
  Method method;
  double mean_seconds = 0.0;
  double sd_seconds = 0.0;  // across repeats
  int repeats = 0;
};

/// Solver-only seconds per episode for each method on the same episodes,
/// repeated `repeats` times.
std::vector<TimingRow> time_per_task(const BenchConfig& cfg, const EmbeddingSet& novel,
                                     const EmbeddingSet* base, const std::vector<Method>& methods,
                                     int repeats = 5);

/// Iteration-wise mean of the traces of episodes 0..n-1.
SolverTrace mean_trace(const BenchConfig& cfg, const EmbeddingSet& novel,
                       const EmbeddingSet* base = nullptr);

/// Header `iteration,wall_seconds,loss,accuracy,mutual_information`.
void export_trace(const SolverTrace& trace, const std::filesystem::path& path);
std::string trace_to_csv(const SolverTrace& trace);

/// Keys: method, ways, shots, episodes, mean_accuracy, ci95,
/// mean_task_seconds, config.
void export_summary(const Summary& summary, const std::filesystem::path& path);
std::string summary_to_json(const Summary& summary);
Summary summary_from_json(const std::string& text);

std::string ablation_to_json(const AblationGrid& grid);
std::string timing_to_json(const std::vector<TimingRow>& rows);

}  // namespace fsi
