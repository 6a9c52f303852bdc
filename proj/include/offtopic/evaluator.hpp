#pragma once

// Per-prompt threshold calibration to a target on-topic recall, the two
// benchmark metrics (average off-topic recall and the fraction of prompts
// with off-topic recall above 0.3), full benchmark runs over seen/unseen
// splits, and the ablation grid over the model-ladder configurations.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "offtopic/data.hpp"
#include "offtopic/model.hpp"
#include "offtopic/trainer.hpp"

namespace offtopic {

struct PromptEvalResult {
  std::string prompt_key;
  double threshold = 0.0;
  double on_topic_recall = 0.0;
  double off_topic_recall = 0.0;
  int n_on = 0;
  int n_off = 0;
  int recalled_off = 0;
};

struct Metrics {
  double aor = 0.0;   // mean off-topic recall over prompts
  double prr3 = 0.0;  // fraction of prompts with off-topic recall strictly above 0.3
};

struct BenchmarkReport {
  std::string split_name;
  double target_on_recall = 0.0;
  Metrics metrics;
  std::vector<PromptEvalResult> prompts;
  std::vector<std::string> skipped;  // prompts missing one of the two classes
};

// Largest threshold t such that fraction(on_scores >= t) >= target_recall;
// responses are classified on-topic iff p >= t.
double calibrate_threshold(const std::vector<double>& on_scores, double target_recall);

// Eval-mode probability of class on-topic for one example.
double score_example(const ModelParams<float>& params, const Example& example);

// Scores every example in index order (parallel across examples, output
// order fixed).
std::vector<double> score_examples(const ModelParams<float>& params,
                                   const std::vector<Example>& examples);

// Calibrates on the group's on-topic scores and computes both recalls at the
// resulting threshold. Empty when the group lacks one of the two classes.
std::optional<PromptEvalResult> evaluate_prompt(const ModelParams<float>& params,
                                                const PromptGroup& group, double target_recall);

Metrics aggregate(const std::vector<PromptEvalResult>& results);

BenchmarkReport run_benchmark(const ModelParams<float>& params,
                              const std::vector<PromptGroup>& groups, double target_recall,
                              const std::string& split_name);

// Human-readable aligned table for one report.
std::string format_report_table(const BenchmarkReport& report);

// One rung of the model ladder.
struct AblationRung {
  std::string name;
  Attention attention = Attention::Bi;
  Encoder encoder = Encoder::Cnn;
  Pooling pooling = Pooling::Max;
  bool gate_residual = true;
};

// The four incremental rungs, in ladder order; the last is the full model.
const std::vector<AblationRung>& ablation_ladder();
// The uni-attention recurrent baseline beneath the ladder.
const AblationRung& baseline_rung();
// Look up a rung (ladder or baseline) by name.
const AblationRung& rung_by_name(const std::string& name);

ModelConfig apply_rung(ModelConfig config, const AblationRung& rung);

struct AblationCell {
  std::string rung;
  std::uint32_t seed = 0;
  bool ok = false;
  std::string error;
  Metrics seen;
  Metrics unseen;
  int epochs_trained = 0;
};

// Trains and evaluates every (rung, seed) cell; failures are recorded in the
// cell, never abort the grid. When a pretrained table is given it replaces the
// embedding initialization of every cell. The callback, when given, observes
// finished cells (for progress logging).
std::vector<AblationCell> run_ablation(const CorpusSplit& corpus,
                                       const std::vector<AblationRung>& rungs,
                                       const std::vector<std::uint32_t>& seeds,
                                       const ModelConfig& base_config,
                                       const TrainConfig& train_config, double target_recall,
                                       const std::function<void(const AblationCell&)>& on_cell =
                                           nullptr,
                                       const TensorPtr<float>& pretrained = nullptr);

std::string format_ablation_table(const std::vector<AblationCell>& cells);

// One line-delimited record per response: prompt, label, score, decision at
// the given threshold, and the gated relevance vector.
void export_relevance_vectors(const ModelParams<float>& params, const PromptGroup& group,
                              double threshold, const std::string& path);

}  // namespace offtopic
