// Single pipeline binary: corpus generation, negative-sampling augmentation,
// training, benchmark evaluation, single-pair prediction, and attention
// export. Every artifact-producing run drops a run_manifest.json next to its
// outputs with the fully resolved configuration.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "offtopic/checkpoint.hpp"
#include "offtopic/data.hpp"
#include "offtopic/evaluator.hpp"
#include "offtopic/gradcheck.hpp"
#include "offtopic/graph.hpp"
#include "offtopic/model.hpp"
#include "offtopic/serialize.hpp"
#include "offtopic/trainer.hpp"

#ifndef OFFTOPIC_BUILD_ID
#define OFFTOPIC_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace offtopic;

namespace {

std::atomic<bool> g_interrupted{false};

void handle_interrupt(int) { g_interrupted.store(true); }

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValueError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw ValueError("write failed: " + path.string());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValueError("cannot open: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return j;
}

// The run manifest: enough to rerun the command and get the same artifacts.
void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint32_t seed, const json& inputs, const json& outputs,
                    double wall_seconds) {
  json manifest{{"command", command},          {"config", config},
                {"seed", seed},                {"inputs", inputs},
                {"outputs", outputs},          {"build_id", OFFTOPIC_BUILD_ID},
                {"wall_clock_seconds", wall_seconds}, {"started_at", utc_timestamp()}};
  write_json_file(dir / "run_manifest.json", manifest);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValueError("cannot create directory " + dir.string() + ": " + ec.message());
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ValueError("missing " + what + ": " + path.string());
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  GenSpec spec;
  std::uint32_t seed = 17;
  std::string out;
};

void run_gen_data(const GenDataArgs& args) {
  Stopwatch watch;
  const auto corpus = generate_synthetic_corpus(args.spec, args.seed);
  const auto vocab = build_corpus_vocab(corpus);
  const fs::path out(args.out);
  ensure_dir(out);
  write_corpus_file((out / "train.jsonl").string(), corpus.train);
  write_corpus_file((out / "dev.jsonl").string(), corpus.dev);
  write_corpus_file((out / "test_seen.jsonl").string(), corpus.test_seen);
  write_corpus_file((out / "test_unseen.jsonl").string(), corpus.test_unseen);
  vocab.save((out / "vocab.txt").string());
  write_embeddings_file((out / "embeddings.txt").string(), corpus.embeddings);
  write_manifest(out, "gen-data", json(args.spec), args.seed, json::object(),
                 json{{"dir", out.string()},
                      {"files", {"train.jsonl", "dev.jsonl", "test_seen.jsonl",
                                 "test_unseen.jsonl", "vocab.txt", "embeddings.txt"}}},
                 watch.seconds());
  std::printf("corpus written to %s\n", out.string().c_str());
  std::printf("  train %zu  dev %zu  test_seen %zu  test_unseen %zu  vocab %d  lexicon %zu\n",
              corpus.train.size(), corpus.dev.size(), corpus.test_seen.size(),
              corpus.test_unseen.size(), vocab.size(), corpus.lexicon.size());
}

// ----------------------------------------------------------------- augment

struct AugmentArgs {
  std::string in;
  std::string out;
  std::string mode = "shuffle";
  std::uint32_t seed = 18;
};

void run_augment(const AugmentArgs& args) {
  Stopwatch watch;
  if (args.mode != "shuffle") {
    throw ValueError("unsupported augmentation mode: " + args.mode + " (only: shuffle)");
  }
  const fs::path in(args.in), out(args.out);
  require_file(in / "train.jsonl", "corpus train split");
  if (fs::weakly_canonical(in) == fs::weakly_canonical(out)) {
    throw ValueError("augment requires distinct --in and --out directories");
  }
  ensure_dir(out);

  const auto records = read_corpus_file((in / "train.jsonl").string());
  std::vector<RawRecord> augmented;
  std::map<std::string, int> positives_per_prompt;
  for (const auto& r : records) {
    if (r.label == 1) {
      augmented.push_back(r);
      positives_per_prompt[r.prompt_id]++;
    }
  }
  if (augmented.empty()) throw ValueError("train split has no on-topic records to augment from");
  const auto pools = collect_pools(augmented);
  std::mt19937 rng(args.seed);
  for (const auto& [prompt_id, count] : positives_per_prompt) {
    auto negs = sample_negatives(pools, prompt_id, count, NegativeMode::ShuffleAugmented, rng);
    augmented.insert(augmented.end(), negs.begin(), negs.end());
  }
  write_corpus_file((out / "train.jsonl").string(), augmented);

  // Everything that is not the train split passes through unchanged.
  for (const char* name :
       {"dev.jsonl", "test_seen.jsonl", "test_unseen.jsonl", "vocab.txt", "embeddings.txt"}) {
    if (fs::exists(in / name)) {
      fs::copy_file(in / name, out / name, fs::copy_options::overwrite_existing);
    }
  }
  write_manifest(out, "augment", json{{"mode", args.mode}}, args.seed,
                 json{{"corpus", in.string()}}, json{{"dir", out.string()}}, watch.seconds());
  std::printf("augmented corpus written to %s (train %zu records)\n", out.string().c_str(),
              augmented.size());
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string corpus;
  std::string out;
  std::string embeddings;
  ModelConfig model;
  TrainConfig train;
  std::uint32_t seed = 1;
  std::vector<int> min_tokens;  // per test part, 1-based
  bool grad_check = false;
};

// Finite-difference audit of the whole model at a small double-precision
// configuration; returns true when every parameter's gradient checks out.
bool run_grad_check(std::uint32_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = 50;
  cfg.embed_dim = 8;
  cfg.filters = 4;
  cfg.kernel_size = 3;
  cfg.conv_layers = 2;
  cfg.prompt_len = 6;
  cfg.response_len = 10;
  cfg.head_hidden = 8;
  cfg.dropout_rate = 0.0;

  auto params = init_params<double>(cfg, seed);
  std::mt19937 rng(seed);
  std::vector<int> prompt(static_cast<std::size_t>(cfg.prompt_len));
  std::vector<int> response(static_cast<std::size_t>(cfg.response_len));
  std::vector<int> prompt2(prompt.size()), response2(response.size());
  for (auto* ids : {&prompt, &response, &prompt2, &response2}) {
    for (auto& id : *ids) id = 2 + static_cast<int>(rng() % 40);
    ids->back() = 0;  // exercise the padding path
  }

  const auto loss_fn = [&](bool with_grad) {
    Graph<double> g(/*no_grad=*/!with_grad);
    std::mt19937 unused(1);
    auto on = forward(g, params, prompt, response, false, unused);
    auto off = forward(g, params, prompt2, response2, false, unused);
    auto loss =
        g.add(g.weighted_bce(on.p_on_topic, 1, 1.0), g.weighted_bce(off.p_on_topic, 0, 0.5));
    if (with_grad) g.backward(loss);
    return loss->value[0];
  };
  std::vector<std::pair<std::string, TensorPtr<double>>> named;
  for (const auto& name : params.names) named.emplace_back(name, params.at(name));

  const auto result = finite_difference_check(loss_fn, named, 1e-5);
  std::printf("grad-check max error %.3e (param %s[%zu]: analytic %.6e numeric %.6e)\n",
              result.max_error, result.worst_param.c_str(), result.worst_index, result.analytic,
              result.numeric);
  return result.max_error < 1e-4;
}

void run_train(const TrainArgs& args) {
  Stopwatch watch;
  const fs::path corpus_dir(args.corpus), out(args.out);
  require_file(corpus_dir / "train.jsonl", "corpus train split");
  require_file(corpus_dir / "dev.jsonl", "corpus dev split");
  require_file(corpus_dir / "vocab.txt", "corpus vocabulary");
  args.train.validate();

  const auto vocab = Vocabulary::load((corpus_dir / "vocab.txt").string());
  ModelConfig cfg = args.model;
  cfg.vocab_size = vocab.size();
  cfg.validate();

  auto train_records = read_corpus_file((corpus_dir / "train.jsonl").string());
  auto dev_records = read_corpus_file((corpus_dir / "dev.jsonl").string());
  if (!args.min_tokens.empty()) {
    train_records = filter_by_min_length(train_records, args.min_tokens);
    dev_records = filter_by_min_length(dev_records, args.min_tokens);
  }
  const auto train_examples = encode_records(train_records, vocab, cfg.prompt_len, cfg.response_len);
  const auto dev_examples = encode_records(dev_records, vocab, cfg.prompt_len, cfg.response_len);
  if (train_examples.empty()) throw ValueError("train split is empty after filtering");
  if (dev_examples.empty()) throw ValueError("dev split is empty after filtering");

  auto params = init_params<float>(cfg, args.seed);
  double coverage = -1.0;
  if (!args.embeddings.empty()) {
    require_file(args.embeddings, "pretrained embeddings file");
    auto loaded = load_pretrained_embeddings(args.embeddings, vocab, cfg.embed_dim, args.seed);
    params.at("embedding")->value = loaded.table->value;
    coverage = loaded.coverage;
    std::printf("pretrained embeddings: coverage %.3f\n", coverage);
  }

  TrainConfig tc = args.train;
  tc.seed = args.seed;

  ensure_dir(out);
  std::signal(SIGINT, handle_interrupt);
  std::printf("training on %zu examples (dev %zu), vocab %d\n", train_examples.size(),
              dev_examples.size(), vocab.size());
  auto result = train(params, train_examples, dev_examples, tc, &g_interrupted,
                      [](const EpochStats& s) {
                        std::printf("epoch %d  train %.6f  dev %.6f  (%.1fs)\n", s.epoch,
                                    s.train_loss, s.dev_loss, s.seconds);
                        std::fflush(stdout);
                      });
  std::signal(SIGINT, SIG_DFL);

  const std::string status =
      result.diverged ? "diverged" : (result.interrupted ? "interrupted" : "complete");
  save_checkpoint((out / "checkpoint").string(), result.best_params, vocab);
  json history{{"status", status},
               {"best_epoch", result.best_epoch},
               {"best_dev_loss", result.best_dev_loss},
               {"epochs", result.history}};
  write_json_file(out / "history.json", history);

  json config{{"model", cfg}, {"train", tc}};
  if (coverage >= 0.0) config["embedding_coverage"] = coverage;
  write_manifest(out, "train", config, args.seed,
                 json{{"corpus", corpus_dir.string()},
                      {"embeddings", args.embeddings.empty() ? json() : json(args.embeddings)}},
                 json{{"checkpoint", (out / "checkpoint").string()},
                      {"history", (out / "history.json").string()},
                      {"status", status}},
                 watch.seconds());
  std::printf("%s: best epoch %d (dev %.6f), checkpoint at %s\n", status.c_str(),
              result.best_epoch, result.best_dev_loss, (out / "checkpoint").string().c_str());
  if (result.diverged) {
    throw NumericError("training diverged (non-finite loss); checkpoint holds the best state");
  }
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  double target_on_recall = 0.999;
  std::string relevance_prompt;
  std::string relevance_out;
};

json report_to_json(const BenchmarkReport& report) {
  json prompts = json::array();
  for (const auto& p : report.prompts) {
    prompts.push_back(json{{"prompt_id", p.prompt_key},
                           {"threshold", p.threshold},
                           {"on_topic_recall", p.on_topic_recall},
                           {"off_topic_recall", p.off_topic_recall},
                           {"n_on", p.n_on},
                           {"n_off", p.n_off},
                           {"recalled_off", p.recalled_off}});
  }
  return json{{"split", report.split_name},
              {"target_on_recall", report.target_on_recall},
              {"aor", report.metrics.aor},
              {"prr3", report.metrics.prr3},
              {"prompts", prompts},
              {"skipped", report.skipped}};
}

void run_eval(const EvalArgs& args) {
  Stopwatch watch;
  if (args.target_on_recall <= 0.0 || args.target_on_recall > 1.0) {
    throw ValueError("target-on-recall must lie in (0, 1]");
  }
  const fs::path corpus_dir(args.corpus), out(args.out);
  require_file(corpus_dir / "test_seen.jsonl", "corpus seen test split");
  require_file(corpus_dir / "test_unseen.jsonl", "corpus unseen test split");
  const auto ck = load_checkpoint(args.checkpoint);
  const auto& cfg = ck.params.config;

  const auto load_groups = [&](const char* name) {
    const auto records = read_corpus_file((corpus_dir / name).string());
    return group_by_prompt(records, ck.vocab, cfg.prompt_len, cfg.response_len);
  };
  const auto seen_groups = load_groups("test_seen.jsonl");
  const auto unseen_groups = load_groups("test_unseen.jsonl");

  const auto seen = run_benchmark(ck.params, seen_groups, args.target_on_recall, "seen");
  const auto unseen = run_benchmark(ck.params, unseen_groups, args.target_on_recall, "unseen");
  std::fputs(format_report_table(seen).c_str(), stdout);
  std::fputs(format_report_table(unseen).c_str(), stdout);

  ensure_dir(out);
  write_json_file(out / "report.json",
                  json{{"seen", report_to_json(seen)}, {"unseen", report_to_json(unseen)}});

  if (!args.relevance_prompt.empty()) {
    if (args.relevance_out.empty()) {
      throw ValueError("--relevance-prompt requires --relevance-out");
    }
    const auto find = [&](const std::vector<PromptGroup>& groups) -> const PromptGroup* {
      for (const auto& g : groups) {
        if (g.prompt_id == args.relevance_prompt) return &g;
      }
      return nullptr;
    };
    const PromptGroup* group = find(seen_groups);
    const BenchmarkReport* report = &seen;
    if (!group) {
      group = find(unseen_groups);
      report = &unseen;
    }
    if (!group) throw ValueError("prompt not found in either test split: " + args.relevance_prompt);
    double threshold = 0.5;
    for (const auto& p : report->prompts) {
      if (p.prompt_key == args.relevance_prompt) threshold = p.threshold;
    }
    export_relevance_vectors(ck.params, *group, threshold, args.relevance_out);
    std::printf("relevance vectors for %s written to %s\n", args.relevance_prompt.c_str(),
                args.relevance_out.c_str());
  }

  write_manifest(out, "eval",
                 json{{"target_on_recall", args.target_on_recall}, {"model", cfg}}, 0,
                 json{{"checkpoint", args.checkpoint}, {"corpus", corpus_dir.string()}},
                 json{{"report", (out / "report.json").string()}}, watch.seconds());
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string prompt;
  std::string response;
  std::string report;
  std::string prompt_id;
  double threshold = -1.0;
};

void run_predict(const PredictArgs& args) {
  if (tokenize(args.prompt).empty()) throw ValueError("prompt has no tokens");
  if (tokenize(args.response).empty()) throw ValueError("response has no tokens");
  const auto ck = load_checkpoint(args.checkpoint);
  const auto& cfg = ck.params.config;

  RawRecord record;
  record.prompt = args.prompt;
  record.response = args.response;
  record.label = 1;  // encoding requires one; scoring ignores it
  const auto example = encode_record(record, ck.vocab, cfg.prompt_len, cfg.response_len);
  const double p = score_example(ck.params, example);
  std::printf("p_on_topic %.6f\n", p);

  double threshold = args.threshold;
  if (threshold < 0.0 && !args.report.empty()) {
    if (args.prompt_id.empty()) throw ValueError("--report requires --prompt-id");
    const json report = read_json_file(args.report);
    for (const char* split : {"seen", "unseen"}) {
      if (!report.contains(split)) continue;
      for (const auto& entry : report.at(split).at("prompts")) {
        if (entry.at("prompt_id").get<std::string>() == args.prompt_id) {
          threshold = entry.at("threshold").get<double>();
        }
      }
    }
    if (threshold < 0.0) throw ValueError("prompt id not present in report: " + args.prompt_id);
  }
  if (threshold >= 0.0) {
    std::printf("decision %s (threshold %.6f)\n", p >= threshold ? "on-topic" : "off-topic",
                threshold);
  }
}

// --------------------------------------------------------- export-attention

struct ExportAttentionArgs {
  std::string checkpoint;
  std::string prompt;
  std::string response;
  std::string out;
};

void run_export_attention(const ExportAttentionArgs& args) {
  Stopwatch watch;
  const auto prompt_tokens = tokenize(args.prompt);
  const auto response_tokens = tokenize(args.response);
  if (prompt_tokens.empty()) throw ValueError("prompt has no tokens");
  if (response_tokens.empty()) throw ValueError("response has no tokens");
  const auto ck = load_checkpoint(args.checkpoint);
  const auto& cfg = ck.params.config;

  RawRecord record;
  record.prompt = args.prompt;
  record.response = args.response;
  record.label = 1;  // encoding requires one; the trace ignores it
  const auto example = encode_record(record, ck.vocab, cfg.prompt_len, cfg.response_len);

  Graph<float> g(/*no_grad=*/true);
  std::mt19937 rng(1);
  const auto result = forward(g, ck.params, example.prompt_ids, example.response_ids,
                              /*train_mode=*/false, rng, /*want_trace=*/true);

  const auto kept_p = std::min(prompt_tokens.size(), static_cast<std::size_t>(cfg.prompt_len));
  const auto kept_r = std::min(response_tokens.size(), static_cast<std::size_t>(cfg.response_len));
  const auto pairs = [](const std::vector<std::string>& tokens, const std::vector<float>& alpha,
                        std::size_t kept) {
    json arr = json::array();
    for (std::size_t i = 0; i < kept; ++i) {
      arr.push_back(json{{"token", tokens[i]}, {"alpha", alpha[i]}});
    }
    return arr;
  };
  json record_json{{"attention", to_string(cfg.attention)},
                   {"p_on_topic", result.trace.p_on_topic},
                   {"prompt_to_response", pairs(response_tokens, result.trace.alpha_p2r, kept_r)}};
  if (!result.trace.alpha_r2p.empty()) {
    record_json["response_to_prompt"] = pairs(prompt_tokens, result.trace.alpha_r2p, kept_p);
  }
  const fs::path out(args.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_json_file(out, record_json);
  write_manifest(out.has_parent_path() ? out.parent_path() : fs::path("."), "export-attention",
                 json{{"model", cfg}}, 0,
                 json{{"checkpoint", args.checkpoint}}, json{{"record", out.string()}},
                 watch.seconds());
  std::printf("attention record written to %s\n", out.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-topic spoken-response detector"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file with key=value lines ([subcommand] sections)");
  std::string backend = "openmp";
  app.add_option("--backend", backend, "Kernel backend: serial or openmp")
      ->check(CLI::IsMember({"serial", "openmp"}));
  // Subcommand callbacks run inside parse(), so the backend switch must be
  // applied at the top of each callback rather than after parsing.
  const auto apply_backend = [&backend] {
    kernels::set_backend(backend == "serial" ? kernels::Backend::Serial
                                             : kernels::Backend::OpenMP);
  };

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic prompt/response corpus");
  gen->add_option("--seed", gen_args.seed, "Corpus seed");
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--seen-prompts", gen_args.spec.n_seen_prompts, "Seen prompt count");
  gen->add_option("--unseen-prompts", gen_args.spec.n_unseen_prompts, "Unseen prompt count");
  gen->add_option("--responses-per-prompt", gen_args.spec.responses_per_prompt,
                  "Training on-topic responses per prompt");
  gen->add_option("--test-responses-per-prompt", gen_args.spec.test_responses_per_prompt,
                  "Test on-topic responses per prompt");
  gen->add_option("--topic-vocab", gen_args.spec.topic_vocab_size, "Words per topic vocabulary");
  gen->add_option("--shared-vocab", gen_args.spec.shared_vocab_size, "Shared vocabulary size");
  gen->add_option("--topic-word-rate", gen_args.spec.topic_word_rate,
                  "Probability a response token is topical");
  gen->add_option("--response-len-min", gen_args.spec.response_len_min, "Shortest response");
  gen->add_option("--response-len-max", gen_args.spec.response_len_max, "Longest response");
  gen->add_option("--divergent-fraction", gen_args.spec.divergent_fraction,
                  "Fraction of prompts with halved topic rate");
  gen->add_option("--dev-fraction", gen_args.spec.dev_fraction, "Held-out dev fraction");
  gen->add_option("--embed-dim", gen_args.spec.embed_dim, "Emitted embedding width");
  gen->add_option("--embed-center-scale", gen_args.spec.embed_center_scale,
                  "Topic cluster center scale");
  gen->add_option("--embed-noise-scale", gen_args.spec.embed_noise_scale,
                  "Within-cluster noise scale");
  gen->callback([&] {
    apply_backend();
    run_gen_data(gen_args);
  });

  AugmentArgs aug_args;
  auto* aug = app.add_subcommand("augment", "Rebuild train negatives with shuffled copies");
  aug->add_option("--in", aug_args.in, "Input corpus directory")->required();
  aug->add_option("--out", aug_args.out, "Output corpus directory")->required();
  aug->add_option("--mode", aug_args.mode, "Augmentation mode (shuffle)");
  aug->add_option("--seed", aug_args.seed, "Sampling seed");
  aug->callback([&] {
    apply_backend();
    run_augment(aug_args);
  });

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train a detector on a corpus directory");
  tr->add_option("--corpus", train_args.corpus, "Corpus directory (train/dev/vocab)");
  tr->add_option("--out", train_args.out, "Output directory for checkpoint and history");
  tr->add_option("--seed", train_args.seed, "Initialization and shuffling seed");
  tr->add_option("--embeddings", train_args.embeddings, "Pretrained embedding file (optional)");
  tr->add_option("--embed-dim", train_args.model.embed_dim, "Embedding width");
  tr->add_option("--conv-layers", train_args.model.conv_layers, "Encoder depth");
  tr->add_option("--kernel-size", train_args.model.kernel_size, "Convolution kernel width (odd)");
  tr->add_option("--filters", train_args.model.filters, "Encoder output channels");
  tr->add_option("--prompt-len", train_args.model.prompt_len, "Prompt length (ids)");
  tr->add_option("--response-len", train_args.model.response_len, "Response length (ids)");
  tr->add_option("--head-hidden", train_args.model.head_hidden, "Output head hidden width");
  tr->add_option("--dropout", train_args.model.dropout_rate, "Head dropout rate");
  std::string encoder = "cnn", pooling = "max", attention = "bi";
  tr->add_option("--encoder", encoder, "Encoder: cnn or rnn")
      ->check(CLI::IsMember({"cnn", "rnn"}));
  tr->add_option("--pooling", pooling, "Pooling: max or avg")->check(CLI::IsMember({"max", "avg"}));
  tr->add_option("--attention", attention, "Attention: bi or uni")
      ->check(CLI::IsMember({"bi", "uni"}));
  tr->add_flag("--gate-residual,!--no-gate-residual", train_args.model.gate_residual,
               "Concatenate pooled summaries into the gate input");
  tr->add_option("--lr", train_args.train.learning_rate, "Learning rate");
  tr->add_option("--batch-size", train_args.train.batch_size, "Training batch size");
  tr->add_option("--dev-batch-size", train_args.train.dev_batch_size, "Dev scoring batch size");
  tr->add_option("--max-epochs", train_args.train.max_epochs, "Epoch cap");
  tr->add_option("--patience", train_args.train.early_stop_patience,
                 "Early-stop patience (epochs without dev improvement)");
  tr->add_option("--min-tokens", train_args.min_tokens,
                 "Per-part response length floors (records in part i with fewer tokens "
                 "than the i-th value are dropped)");
  tr->add_flag("--grad-check", train_args.grad_check,
               "Run the finite-difference gradient audit and exit");
  tr->callback([&] {
    apply_backend();
    train_args.model.encoder = parse_encoder(encoder);
    train_args.model.pooling = parse_pooling(pooling);
    train_args.model.attention = parse_attention(attention);
    if (train_args.grad_check) {
      if (!run_grad_check(train_args.seed)) {
        throw NumericError("gradient audit failed (max relative error >= 1e-4)");
      }
      return;
    }
    if (train_args.corpus.empty()) throw ValueError("--corpus is required to train");
    if (train_args.out.empty()) throw ValueError("--out is required to train");
    run_train(train_args);
  });

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Benchmark a checkpoint on a corpus's test splits");
  ev->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory")->required();
  ev->add_option("--corpus", eval_args.corpus, "Corpus directory with test splits")->required();
  ev->add_option("--out", eval_args.out, "Output directory for report.json")->required();
  ev->add_option("--target-on-recall", eval_args.target_on_recall,
                 "Calibration floor for on-topic recall");
  ev->add_option("--relevance-prompt", eval_args.relevance_prompt,
                 "Prompt id whose relevance vectors to export");
  ev->add_option("--relevance-out", eval_args.relevance_out,
                 "Path for the exported relevance records");
  ev->callback([&] {
    apply_backend();
    run_eval(eval_args);
  });

  PredictArgs pred_args;
  auto* pr = app.add_subcommand("predict", "Score one prompt/response pair");
  pr->add_option("--checkpoint", pred_args.checkpoint, "Checkpoint directory")->required();
  pr->add_option("--prompt", pred_args.prompt, "Prompt text")->required();
  pr->add_option("--response", pred_args.response, "Response text")->required();
  pr->add_option("--threshold", pred_args.threshold, "Decision threshold (p >= t is on-topic)");
  pr->add_option("--report", pred_args.report, "Evaluation report with stored thresholds");
  pr->add_option("--prompt-id", pred_args.prompt_id, "Prompt id to look up in the report");
  pr->callback([&] {
    apply_backend();
    run_predict(pred_args);
  });

  ExportAttentionArgs att_args;
  auto* ex = app.add_subcommand("export-attention", "Emit per-token attention for one pair");
  ex->add_option("--checkpoint", att_args.checkpoint, "Checkpoint directory")->required();
  ex->add_option("--prompt", att_args.prompt, "Prompt text")->required();
  ex->add_option("--response", att_args.response, "Response text")->required();
  ex->add_option("--out", att_args.out, "Output file for the attention record")->required();
  ex->callback([&] {
    apply_backend();
    run_export_attention(att_args);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: validation: %s\n", e.what());
    return 2;
  } catch (const ValueError& e) {
    std::fprintf(stderr, "error: validation: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: validation: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: validation: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: runtime: %s\n", e.what());
    return 1;
  }
  return 0;
}
