#include "offtopic/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "offtopic/kernels.hpp"

namespace offtopic {

double calibrate_threshold(const std::vector<double>& on_scores, double target_recall) {
  if (on_scores.empty()) throw ValueError("calibrate_threshold: no on-topic scores");
  if (target_recall <= 0.0 || target_recall > 1.0) {
    throw ValueError("calibrate_threshold: target recall must lie in (0, 1]");
  }
  std::vector<double> sorted(on_scores);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto n = static_cast<double>(sorted.size());
  // Rank of the lowest score that must clear the threshold. The epsilon
  // keeps ceil from overshooting when target*n is integral up to rounding.
  auto rank = static_cast<std::size_t>(std::ceil(target_recall * n - 1e-9));
  rank = std::min(std::max<std::size_t>(rank, 1), sorted.size());
  return sorted[rank - 1];
}

double score_example(const ModelParams<float>& params, const Example& example) {
  std::mt19937 unused(0);
  Graph<float> g(/*no_grad=*/true);
  auto res =
      forward(g, params, example.prompt_ids, example.response_ids, /*train_mode=*/false, unused);
  return static_cast<double>(res.p_on_topic->value[0]);
}

std::vector<double> score_examples(const ModelParams<float>& params,
                                   const std::vector<Example>& examples) {
  std::vector<double> scores(examples.size());
  kernels::parallel_for(static_cast<int>(examples.size()), [&](int i) {
    scores[static_cast<std::size_t>(i)] = score_example(params, examples[static_cast<std::size_t>(i)]);
  });
  return scores;
}

std::optional<PromptEvalResult> evaluate_prompt(const ModelParams<float>& params,
                                                const PromptGroup& group, double target_recall) {
  const auto scores = score_examples(params, group.examples);
  std::vector<double> on_scores, off_scores;
  for (std::size_t i = 0; i < group.examples.size(); ++i) {
    (group.examples[i].label == 1 ? on_scores : off_scores).push_back(scores[i]);
  }
  if (on_scores.empty() || off_scores.empty()) return std::nullopt;

  PromptEvalResult result;
  result.prompt_key = group.prompt_id;
  result.threshold = calibrate_threshold(on_scores, target_recall);
  int on_hits = 0;
  for (double s : on_scores) on_hits += s >= result.threshold ? 1 : 0;
  int off_hits = 0;
  for (double s : off_scores) off_hits += s < result.threshold ? 1 : 0;
  result.n_on = static_cast<int>(on_scores.size());
  result.n_off = static_cast<int>(off_scores.size());
  result.recalled_off = off_hits;
  result.on_topic_recall = static_cast<double>(on_hits) / result.n_on;
  result.off_topic_recall = static_cast<double>(off_hits) / result.n_off;
  return result;
}

Metrics aggregate(const std::vector<PromptEvalResult>& results) {
  if (results.empty()) throw ValueError("aggregate: no prompt results");
  Metrics m;
  int over = 0;
  for (const auto& r : results) {
    m.aor += r.off_topic_recall;
    over += r.off_topic_recall > 0.3 ? 1 : 0;
  }
  m.aor /= static_cast<double>(results.size());
  m.prr3 = static_cast<double>(over) / static_cast<double>(results.size());
  return m;
}

BenchmarkReport run_benchmark(const ModelParams<float>& params,
                              const std::vector<PromptGroup>& groups, double target_recall,
                              const std::string& split_name) {
  BenchmarkReport report;
  report.split_name = split_name;
  report.target_on_recall = target_recall;
  for (const auto& group : groups) {
    auto result = evaluate_prompt(params, group, target_recall);
    if (result) {
      report.prompts.push_back(*result);
    } else {
      report.skipped.push_back(group.prompt_id);
    }
  }
  if (report.prompts.empty()) {
    throw ValueError("run_benchmark: every prompt in split '" + split_name +
                     "' lacks one of the two classes");
  }
  report.metrics = aggregate(report.prompts);
  return report;
}

std::string format_report_table(const BenchmarkReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s  target on-recall %.4f\n", report.split_name.c_str(),
                report.target_on_recall);
  out << line;
  std::snprintf(line, sizeof(line), "%-12s %10s %10s %10s %12s\n", "prompt", "threshold",
                "on-recall", "off-recall", "off-counts");
  out << line;
  for (const auto& p : report.prompts) {
    std::snprintf(line, sizeof(line), "%-12s %10.6f %10.4f %10.4f %7d/%-4d\n",
                  p.prompt_key.c_str(), p.threshold, p.on_topic_recall, p.off_topic_recall,
                  p.recalled_off, p.n_off);
    out << line;
  }
  for (const auto& skipped : report.skipped) {
    std::snprintf(line, sizeof(line), "%-12s  skipped (missing a class)\n", skipped.c_str());
    out << line;
  }
  std::snprintf(line, sizeof(line), "AOR %.1f%%  PRR3 %.1f%%  (%zu prompts)\n",
                100.0 * report.metrics.aor, 100.0 * report.metrics.prr3, report.prompts.size());
  out << line;
  return out.str();
}

const std::vector<AblationRung>& ablation_ladder() {
  static const std::vector<AblationRung> ladder = {
      {"bi_attention", Attention::Bi, Encoder::Rnn, Pooling::Avg, false},
      {"cnn_encoder", Attention::Bi, Encoder::Cnn, Pooling::Avg, false},
      {"max_pooling", Attention::Bi, Encoder::Cnn, Pooling::Max, false},
      {"gate_residual", Attention::Bi, Encoder::Cnn, Pooling::Max, true},
  };
  return ladder;
}

const AblationRung& baseline_rung() {
  static const AblationRung baseline = {"uni_rnn_avg", Attention::UniPromptToResponse,
                                        Encoder::Rnn, Pooling::Avg, false};
  return baseline;
}

const AblationRung& rung_by_name(const std::string& name) {
  if (name == baseline_rung().name) return baseline_rung();
  for (const auto& rung : ablation_ladder()) {
    if (rung.name == name) return rung;
  }
  throw ValueError("unknown ablation rung '" + name + "'");
}

ModelConfig apply_rung(ModelConfig config, const AblationRung& rung) {
  config.attention = rung.attention;
  config.encoder = rung.encoder;
  config.pooling = rung.pooling;
  config.gate_residual = rung.gate_residual;
  return config;
}

std::vector<AblationCell> run_ablation(
    const CorpusSplit& corpus, const std::vector<AblationRung>& rungs,
    const std::vector<std::uint32_t>& seeds, const ModelConfig& base_config,
    const TrainConfig& train_config, double target_recall,
    const std::function<void(const AblationCell&)>& on_cell, const TensorPtr<float>& pretrained) {
  std::vector<AblationCell> cells;
  for (const auto& rung : rungs) {
    for (const auto seed : seeds) {
      AblationCell cell;
      cell.rung = rung.name;
      cell.seed = seed;
      try {
        const ModelConfig config = apply_rung(base_config, rung);
        auto params = init_params<float>(config, seed);
        if (pretrained) {
          auto& emb = params.at("embedding");
          if (pretrained->shape != emb->shape) {
            throw ShapeError("pretrained embedding table does not match model config");
          }
          emb->value = pretrained->value;
        }
        TrainConfig tc = train_config;
        tc.seed = seed;
        auto trained = train(params, corpus.train, corpus.dev, tc);
        if (trained.diverged) throw NumericError("training diverged");
        cell.epochs_trained = static_cast<int>(trained.history.size());
        cell.seen = run_benchmark(trained.best_params, corpus.test_seen, target_recall, "seen")
                        .metrics;
        cell.unseen =
            run_benchmark(trained.best_params, corpus.test_unseen, target_recall, "unseen")
                .metrics;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      if (on_cell) on_cell(cell);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string format_ablation_table(const std::vector<AblationCell>& cells) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof(line), "%-14s %6s %8s %10s %10s %12s %12s %7s\n", "rung", "seed",
                "status", "seen-AOR", "seen-PRR3", "unseen-AOR", "unseen-PRR3", "epochs");
  out << line;
  for (const auto& c : cells) {
    if (c.ok) {
      std::snprintf(line, sizeof(line), "%-14s %6u %8s %10.4f %10.4f %12.4f %12.4f %7d\n",
                    c.rung.c_str(), c.seed, "ok", c.seen.aor, c.seen.prr3, c.unseen.aor,
                    c.unseen.prr3, c.epochs_trained);
    } else {
      std::snprintf(line, sizeof(line), "%-14s %6u %8s  %s\n", c.rung.c_str(), c.seed, "FAILED",
                    c.error.c_str());
    }
    out << line;
  }
  return out.str();
}

void export_relevance_vectors(const ModelParams<float>& params, const PromptGroup& group,
                              double threshold, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot write relevance export: " + path);
  for (const auto& ex : group.examples) {
    std::mt19937 unused(0);
    Graph<float> g(/*no_grad=*/true);
    auto res = forward(g, params, ex.prompt_ids, ex.response_ids, /*train_mode=*/false, unused,
                       /*want_trace=*/true);
    const double p = static_cast<double>(res.p_on_topic->value[0]);
    nlohmann::json record = {{"prompt_id", ex.prompt_key},
                             {"label", ex.label},
                             {"p_on_topic", p},
                             {"decision", p >= threshold ? 1 : 0},
                             {"relevance", res.trace.relevance}};
    out << record.dump() << '\n';
  }
}

}  // namespace offtopic
