#pragma once

// Corpus machinery: tokenization, vocabulary, fixed-length encoding, negative
// sampling (basic and shuffle-augmented), batching, line-delimited corpus
// I/O, pretrained-embedding loading, and a synthetic seen/unseen corpus
// generator for desk-scale experiments.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "offtopic/errors.hpp"
#include "offtopic/tensor.hpp"

namespace offtopic {

std::vector<std::string> tokenize(const std::string& text);

std::string join_tokens(const std::vector<std::string>& tokens);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  // Frequency-descending, ties broken lexicographically; tokens below
  // min_count are dropped (they map to unk at lookup time).
  static Vocabulary build(const std::vector<std::vector<std::string>>& documents, int min_count);

  int id(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()) + 2; }
  const std::string& token(int id) const;  // ids >= 2 only
  bool contains(const std::string& token) const { return map_.count(token) > 0; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::map<std::string, int> map_;
  std::vector<std::string> tokens_;
};

std::vector<int> pad_or_truncate(const std::vector<std::string>& tokens, int target_len,
                                 const Vocabulary& vocab);

struct Example {
  std::vector<int> prompt_ids;
  std::vector<int> response_ids;
  int label = 0;
  double weight = 1.0;
  std::string prompt_key;
};

// One line of a corpus file. part 0, label -1, and weight < 0 mean "absent".
struct RawRecord {
  std::string prompt_id;
  int part = 0;
  std::string prompt;
  std::string response;
  int label = -1;
  double weight = -1.0;
};

std::vector<RawRecord> read_corpus_file(const std::string& path);
void write_corpus_file(const std::string& path, const std::vector<RawRecord>& records);

Example encode_record(const RawRecord& record, const Vocabulary& vocab, int prompt_len,
                      int response_len);
std::vector<Example> encode_records(const std::vector<RawRecord>& records, const Vocabulary& vocab,
                                    int prompt_len, int response_len);

// Optional per-part minimum response length (in tokens); records without a
// part field pass through.
std::vector<RawRecord> filter_by_min_length(const std::vector<RawRecord>& records,
                                            const std::vector<int>& min_tokens_per_part);

// Pretrained embeddings in word2vec/GloVe text format: token then dim reals
// per line. Tokens absent from the file get uniform(-0.05, 0.05) rows from
// the seed; row 0 is forced to zero.
struct EmbeddingLoadResult {
  TensorPtr<float> table;
  double coverage = 0.0;  // fraction of vocab ids >= 2 found in the file
};
EmbeddingLoadResult load_pretrained_embeddings(const std::string& path, const Vocabulary& vocab,
                                               int dim, std::uint32_t seed);

// In-place Fisher-Yates permutation driven by rng.
void fisher_yates_shuffle(std::vector<std::string>& tokens, std::mt19937& rng);

// Raw per-prompt response pools used by negative sampling.
struct RawPools {
  std::map<std::string, std::string> prompt_text;
  std::map<std::string, std::vector<std::string>> responses;  // on-topic response texts
};
RawPools collect_pools(const std::vector<RawRecord>& records);

enum class NegativeMode { Basic, ShuffleAugmented };

// Basic: `count` responses drawn uniformly from other prompts' pools, label 0,
// weight 1.0. ShuffleAugmented: per drawn negative a second one with the same
// tokens in Fisher-Yates-shuffled order, both at weight 0.5 (2*count total).
std::vector<RawRecord> sample_negatives(const RawPools& pools, const std::string& target_prompt,
                                        int count, NegativeMode mode, std::mt19937& rng);

// Index batches; the final partial batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n_examples, int batch_size,
                                                   bool shuffle, std::mt19937& rng);

struct PromptGroup {
  std::string prompt_id;
  std::vector<Example> examples;
};

// Groups records by prompt_id, sorted by id for determinism.
std::vector<PromptGroup> group_by_prompt(const std::vector<RawRecord>& records,
                                         const Vocabulary& vocab, int prompt_len,
                                         int response_len);

struct CorpusSplit {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<PromptGroup> test_seen;
  std::vector<PromptGroup> test_unseen;
};

// Throws when an unseen-test prompt id appears among train/dev prompt keys,
// or when dev uses a prompt absent from train.
void assert_no_leakage(const CorpusSplit& split);

struct GenSpec {
  int n_seen_prompts = 20;
  int n_unseen_prompts = 5;
  int responses_per_prompt = 200;       // training-side on-topic responses per seen prompt
  int test_responses_per_prompt = 100;  // per-prompt on-topic responses in its test pool
  int topic_vocab_size = 30;
  int shared_vocab_size = 150;
  double topic_word_rate = 0.35;
  int response_len_min = 10;
  int response_len_max = 35;
  double divergent_fraction = 0.25;     // fraction of prompts with halved topic rate
  double dev_fraction = 0.10;
  int embed_dim = 32;                   // width of the emitted embedding table
  double embed_center_scale = 0.08;     // topic cluster centers ~ U(+-scale)
  double embed_noise_scale = 0.03;      // per-word offset from its cluster center
  void validate() const;
};

struct GeneratedCorpus {
  std::vector<RawRecord> train;
  std::vector<RawRecord> dev;
  std::vector<RawRecord> test_seen;
  std::vector<RawRecord> test_unseen;
  std::vector<std::string> lexicon;  // every word the generator can emit
  // Stand-in for pretrained vectors: one entry per lexicon word. Words of the
  // same topic vocabulary cluster around a shared direction, the way
  // distributional embeddings group words of one subject; scaffold and shared
  // words get independent vectors. Unseen-topic clusters are what let a
  // trained matcher carry over to prompts it never saw.
  std::vector<std::pair<std::string, std::vector<float>>> embeddings;
};

GeneratedCorpus generate_synthetic_corpus(const GenSpec& spec, std::uint32_t seed);

// Text format accepted by load_pretrained_embeddings: "word v1 .. vd" per line.
void write_embeddings_file(const std::string& path,
                           const std::vector<std::pair<std::string, std::vector<float>>>& rows);

// Vocabulary over the full generated lexicon (all splits), mirroring
// pretrained-embedding coverage: unseen-prompt topic words receive their own
// (untrained) embedding rows instead of collapsing to unk.
Vocabulary build_corpus_vocab(const GeneratedCorpus& corpus);

}  // namespace offtopic
