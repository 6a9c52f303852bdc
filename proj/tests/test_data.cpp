// Corpus machinery: tokenizer and vocabulary oracles, corpus-file round
// trips, negative sampling (including donor uniformity), the synthetic
// generator's counts/determinism/topic structure, and the pretrained
// embedding table it emits.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "offtopic/data.hpp"

using namespace offtopic;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    char tmpl[] = "/tmp/offtopic_data_XXXXXX";
    path = mkdtemp(tmpl);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

GenSpec tiny_spec() {
  GenSpec s;
  s.n_seen_prompts = 3;
  s.n_unseen_prompts = 2;
  s.responses_per_prompt = 8;
  s.test_responses_per_prompt = 5;
  s.topic_vocab_size = 4;
  s.shared_vocab_size = 10;
  s.topic_word_rate = 0.5;
  s.response_len_min = 4;
  s.response_len_max = 7;
  s.divergent_fraction = 0.34;
  s.dev_fraction = 0.125;
  s.embed_dim = 8;
  return s;
}

bool same_records(const std::vector<RawRecord>& a, const std::vector<RawRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].prompt_id != b[i].prompt_id || a[i].part != b[i].part ||
        a[i].prompt != b[i].prompt || a[i].response != b[i].response ||
        a[i].label != b[i].label || a[i].weight != b[i].weight) {
      return false;
    }
  }
  return true;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double num = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return num / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
}

}  // namespace

TEST_CASE("tokenizer lowercases and strips edge punctuation") {
  CHECK(tokenize("I like Iris.") == std::vector<std::string>{"i", "like", "iris"});
  CHECK(tokenize("what's  up") == std::vector<std::string>{"what's", "up"});
  CHECK(tokenize("Hello, world!") == std::vector<std::string>{"hello", "world"});
  CHECK(tokenize("  --  ") == std::vector<std::string>{});
  CHECK(tokenize("don't stop... 3rd time") ==
        std::vector<std::string>{"don't", "stop", "3rd", "time"});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(join_tokens({"a", "b", "c"}) == "a b c");
}

TEST_CASE("vocabulary orders by frequency then lexicographically") {
  const std::vector<std::vector<std::string>> docs{{"b", "a", "b", "c", "a", "b", "d"}};
  auto v = Vocabulary::build(docs, 1);
  CHECK(v.size() == 6);  // pad + unk + 4 tokens
  CHECK(v.id("b") == 2);
  CHECK(v.id("a") == 3);
  CHECK(v.id("c") == 4);  // ties at count 1 break alphabetically
  CHECK(v.id("d") == 5);
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  CHECK(v.token(2) == "b");
  CHECK(v.contains("a"));
  CHECK_FALSE(v.contains("zzz"));
  CHECK_THROWS_AS(static_cast<void>(v.token(0)), ValueError);
  CHECK_THROWS_AS(static_cast<void>(v.token(6)), ValueError);

  auto filtered = Vocabulary::build(docs, 2);
  CHECK(filtered.size() == 4);  // only a and b survive
  CHECK(filtered.id("c") == Vocabulary::kUnk);

  CHECK_THROWS_AS(static_cast<void>(Vocabulary::build(docs, 0)), ValueError);
  CHECK_THROWS_AS(static_cast<void>(Vocabulary::build({{}}, 1)), ValueError);
}

TEST_CASE("vocabulary save and load round trip") {
  TempDir dir;
  const std::vector<std::vector<std::string>> docs{{"x", "y", "x", "z"}};
  auto v = Vocabulary::build(docs, 1);
  v.save(dir.file("vocab.txt"));
  auto loaded = Vocabulary::load(dir.file("vocab.txt"));
  CHECK(loaded.size() == v.size());
  for (const auto& tok : {"x", "y", "z"}) CHECK(loaded.id(tok) == v.id(tok));

  std::ofstream dup(dir.file("dup.txt"));
  dup << "a\nb\na\n";
  dup.close();
  CHECK_THROWS_AS(static_cast<void>(Vocabulary::load(dir.file("dup.txt"))), FormatError);
  CHECK_THROWS_AS(static_cast<void>(Vocabulary::load(dir.file("missing.txt"))), ValueError);
}

TEST_CASE("pad_or_truncate pads with zero and maps unknowns to unk") {
  auto v = Vocabulary::build({{"a", "b"}}, 1);
  CHECK(pad_or_truncate({"a", "b"}, 4, v) == std::vector<int>{2, 3, 0, 0});
  CHECK(pad_or_truncate({"a", "b", "a"}, 2, v) == std::vector<int>{2, 3});
  CHECK(pad_or_truncate({"mystery"}, 2, v) == std::vector<int>{1, 0});
  CHECK_THROWS_AS(static_cast<void>(pad_or_truncate({"a"}, 0, v)), ValueError);
}

TEST_CASE("corpus file round trip preserves every field") {
  TempDir dir;
  std::vector<RawRecord> records;
  RawRecord full;
  full.prompt_id = "p1";
  full.part = 2;
  full.prompt = "tell me about cats";
  full.response = "cats are great";
  full.label = 1;
  full.weight = 0.5;
  records.push_back(full);
  RawRecord bare;
  bare.prompt_id = "p2";
  bare.prompt = "talk about dogs";
  bare.response = "dogs bark";
  records.push_back(bare);

  const auto path = dir.file("corpus.jsonl");
  write_corpus_file(path, records);
  auto loaded = read_corpus_file(path);
  REQUIRE(loaded.size() == 2);
  CHECK(same_records(loaded, records));
  CHECK(loaded[1].part == 0);
  CHECK(loaded[1].label == -1);
  CHECK(loaded[1].weight == -1.0);
}

TEST_CASE("corpus file errors carry line numbers") {
  TempDir dir;
  const auto path = dir.file("bad.jsonl");
  {
    std::ofstream out(path);
    out << R"({"prompt_id":"p1","prompt":"a","response":"b"})" << "\n";
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(read_corpus_file(path)), doctest::Contains("line 2"),
                       FormatError);

  {
    std::ofstream out(path);
    out << R"({"prompt_id":"p1","prompt":"a","response":"b","label":7})" << "\n";
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(read_corpus_file(path)),
                       doctest::Contains("label"), FormatError);

  {
    std::ofstream out(path);
    out << R"({"prompt_id":"","prompt":"a","response":"b"})" << "\n";
  }
  CHECK_THROWS_AS(static_cast<void>(read_corpus_file(path)), FormatError);
  CHECK_THROWS_AS(static_cast<void>(read_corpus_file(dir.file("missing.jsonl"))), ValueError);
}

TEST_CASE("encoding requires labels and defaults weights") {
  auto v = Vocabulary::build({{"cats", "bark"}}, 1);
  RawRecord rec;
  rec.prompt_id = "p1";
  rec.prompt = "cats";
  rec.response = "bark bark";
  CHECK_THROWS_AS(static_cast<void>(encode_record(rec, v, 3, 4)), ValueError);

  rec.label = 1;
  auto ex = encode_record(rec, v, 3, 4);
  CHECK(ex.prompt_ids == std::vector<int>{3, 0, 0});       // "cats" sorts after "bark"
  CHECK(ex.response_ids == std::vector<int>{2, 2, 0, 0});
  CHECK(ex.label == 1);
  CHECK(ex.weight == 1.0);  // absent weight defaults to 1
  CHECK(ex.prompt_key == "p1");

  rec.weight = 0.5;
  CHECK(encode_record(rec, v, 3, 4).weight == 0.5);
}

TEST_CASE("minimum-length filtering is per part") {
  auto rec = [](int part, const std::string& response) {
    RawRecord r;
    r.prompt_id = "p";
    r.part = part;
    r.prompt = "q";
    r.response = response;
    return r;
  };
  const std::vector<RawRecord> records{rec(1, "a b"), rec(1, "a b c d"), rec(2, "x"),
                                       rec(0, "y"), rec(3, "z")};
  auto kept = filter_by_min_length(records, {3, 2});
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].response == "a b c d");  // part 1 short one dropped
  CHECK(kept[1].response == "y");        // no part field passes through
  CHECK(kept[2].response == "z");        // part beyond the config passes through
}

TEST_CASE("negative sampling never draws from the target prompt") {
  std::vector<RawRecord> positives;
  auto add = [&](const std::string& pid, const std::string& resp) {
    RawRecord r;
    r.prompt_id = pid;
    r.prompt = "prompt " + pid;
    r.response = resp;
    r.label = 1;
    positives.push_back(r);
  };
  add("a", "alpha one");
  add("a", "alpha two");
  add("b", "beta one");
  add("c", "gamma one");
  auto pools = collect_pools(positives);
  CHECK(pools.responses.size() == 3);

  std::mt19937 rng(5);
  auto negs = sample_negatives(pools, "a", 50, NegativeMode::Basic, rng);
  REQUIRE(negs.size() == 50);
  for (const auto& n : negs) {
    CHECK(n.prompt_id == "a");
    CHECK(n.prompt == "prompt a");
    CHECK(n.label == 0);
    CHECK(n.weight == 1.0);
    CHECK(n.response.substr(0, 5) != "alpha");  // never its own pool
  }

  CHECK_THROWS_AS(static_cast<void>(sample_negatives(pools, "nope", 1, NegativeMode::Basic, rng)),
                  ValueError);
  CHECK_THROWS_AS(static_cast<void>(sample_negatives(pools, "a", 0, NegativeMode::Basic, rng)),
                  ValueError);
  auto one_pool = collect_pools({positives[0]});
  CHECK_THROWS_AS(static_cast<void>(sample_negatives(one_pool, "a", 1, NegativeMode::Basic, rng)),
                  ValueError);
}

TEST_CASE("negative donors are drawn uniformly") {
  std::vector<RawRecord> positives;
  auto add = [&](const std::string& pid, const std::string& resp) {
    RawRecord r;
    r.prompt_id = pid;
    r.prompt = "p";
    r.response = resp;
    r.label = 1;
    positives.push_back(r);
  };
  add("target", "own");
  add("b", "donor0");
  add("b", "donor1");
  add("c", "donor2");
  add("d", "donor3");
  auto pools = collect_pools(positives);

  std::mt19937 rng(11);
  std::map<std::string, int> counts;
  const int n = 8000;
  for (const auto& neg : sample_negatives(pools, "target", n, NegativeMode::Basic, rng))
    ++counts[neg.response];
  REQUIRE(counts.size() == 4);
  for (const auto& [resp, c] : counts) {
    CAPTURE(resp);
    CHECK(c > 1850);  // 4 sigma around n/4
    CHECK(c < 2150);
  }
}

TEST_CASE("shuffle augmentation pairs every negative with a permuted copy") {
  std::vector<RawRecord> positives;
  auto add = [&](const std::string& pid, const std::string& resp) {
    RawRecord r;
    r.prompt_id = pid;
    r.prompt = "p " + pid;
    r.response = resp;
    r.label = 1;
    positives.push_back(r);
  };
  add("a", "own response here");
  add("b", "one two three four five six");
  add("c", "seven eight nine ten eleven");
  auto pools = collect_pools(positives);

  std::mt19937 rng(13);
  auto negs = sample_negatives(pools, "a", 20, NegativeMode::ShuffleAugmented, rng);
  REQUIRE(negs.size() == 40);
  bool any_reordered = false;
  for (std::size_t i = 0; i < negs.size(); i += 2) {
    const auto& orig = negs[i];
    const auto& shuf = negs[i + 1];
    CHECK(orig.weight == 0.5);
    CHECK(shuf.weight == 0.5);
    CHECK(orig.label == 0);
    CHECK(shuf.label == 0);
    CHECK(shuf.prompt_id == orig.prompt_id);
    auto a = tokenize(orig.response);
    auto b = tokenize(shuf.response);
    auto sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    CHECK(sa == sb);  // same multiset of tokens
    any_reordered |= a != b;
  }
  CHECK(any_reordered);
}

TEST_CASE("fisher-yates preserves the multiset and follows the rng") {
  std::vector<std::string> tokens{"a", "b", "c", "d", "e"};
  auto copy1 = tokens, copy2 = tokens;
  std::mt19937 r1(3), r2(3);
  fisher_yates_shuffle(copy1, r1);
  fisher_yates_shuffle(copy2, r2);
  CHECK(copy1 == copy2);
  auto sorted = copy1;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == tokens);
}

TEST_CASE("batching keeps the final partial batch") {
  std::mt19937 rng(1);
  auto batches = make_batches(10, 4, false, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0] == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(batches[2] == std::vector<std::size_t>{8, 9});

  std::mt19937 ra(2), rb(2);
  auto sa = make_batches(10, 4, true, ra);
  auto sb = make_batches(10, 4, true, rb);
  CHECK(sa == sb);
  std::set<std::size_t> seen;
  for (const auto& b : sa) seen.insert(b.begin(), b.end());
  CHECK(seen.size() == 10);
  CHECK_THROWS_AS(static_cast<void>(make_batches(10, 0, false, rng)), ValueError);
}

TEST_CASE("grouping by prompt sorts ids and leakage checks fire") {
  auto v = Vocabulary::build({{"q", "r"}}, 1);
  auto rec = [](const std::string& pid, int label) {
    RawRecord r;
    r.prompt_id = pid;
    r.prompt = "q";
    r.response = "r";
    r.label = label;
    return r;
  };
  auto groups = group_by_prompt({rec("b", 1), rec("a", 0), rec("a", 1)}, v, 2, 2);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].prompt_id == "a");
  CHECK(groups[0].examples.size() == 2);
  CHECK(groups[1].prompt_id == "b");

  CorpusSplit split;
  split.train = encode_records({rec("a", 1), rec("b", 0)}, v, 2, 2);
  split.dev = encode_records({rec("a", 0)}, v, 2, 2);
  split.test_unseen = group_by_prompt({rec("u", 1)}, v, 2, 2);
  CHECK_NOTHROW(assert_no_leakage(split));

  auto leaking = split;
  leaking.test_unseen = group_by_prompt({rec("a", 1)}, v, 2, 2);
  CHECK_THROWS_AS(assert_no_leakage(leaking), ValueError);

  auto orphan_dev = split;
  orphan_dev.dev = encode_records({rec("zz", 0)}, v, 2, 2);
  CHECK_THROWS_AS(assert_no_leakage(orphan_dev), ValueError);
}

TEST_CASE("generator is deterministic and honors the spec counts") {
  const auto spec = tiny_spec();
  auto a = generate_synthetic_corpus(spec, 9);
  auto b = generate_synthetic_corpus(spec, 9);
  CHECK(same_records(a.train, b.train));
  CHECK(same_records(a.dev, b.dev));
  CHECK(same_records(a.test_seen, b.test_seen));
  CHECK(same_records(a.test_unseen, b.test_unseen));
  CHECK(a.lexicon == b.lexicon);
  REQUIRE(a.embeddings.size() == b.embeddings.size());
  for (std::size_t i = 0; i < a.embeddings.size(); ++i) {
    CHECK(a.embeddings[i].first == b.embeddings[i].first);
    CHECK(a.embeddings[i].second == b.embeddings[i].second);
  }

  auto c = generate_synthetic_corpus(spec, 10);
  CHECK_FALSE(same_records(a.train, c.train));

  // Per seen prompt: responses_per_prompt positives + as many negatives,
  // dev_fraction of each 16-record bucket held out (2 records here).
  CHECK(a.train.size() + a.dev.size() ==
        static_cast<std::size_t>(3 * 2 * spec.responses_per_prompt));
  CHECK(a.dev.size() == 6);
  CHECK(a.test_seen.size() == static_cast<std::size_t>(3 * 2 * spec.test_responses_per_prompt));
  CHECK(a.test_unseen.size() == static_cast<std::size_t>(2 * 2 * spec.test_responses_per_prompt));

  int train_pos = 0, train_neg = 0;
  for (const auto& r : a.train) (r.label == 1 ? train_pos : train_neg)++;
  for (const auto& r : a.dev) (r.label == 1 ? train_pos : train_neg)++;
  CHECK(train_pos == 3 * spec.responses_per_prompt);
  CHECK(train_neg == 3 * spec.responses_per_prompt);

  std::set<std::string> seen_ids, unseen_ids;
  for (const auto& r : a.test_seen) seen_ids.insert(r.prompt_id);
  for (const auto& r : a.test_unseen) unseen_ids.insert(r.prompt_id);
  CHECK(seen_ids.size() == 3);
  CHECK(unseen_ids.size() == 2);
  for (const auto& id : seen_ids) CHECK(id.starts_with("seen_"));
  for (const auto& id : unseen_ids) CHECK(id.starts_with("unseen_"));
}

TEST_CASE("generated prompts use disjoint topic vocabularies") {
  auto corpus = generate_synthetic_corpus(tiny_spec(), 9);
  // Each prompt's text ends with 3 sampled topic words; blocks never overlap.
  std::map<std::string, std::set<std::string>> topic_samples;
  for (const auto* split : {&corpus.test_seen, &corpus.test_unseen}) {
    for (const auto& rec : *split) {
      auto toks = tokenize(rec.prompt);
      REQUIRE(toks.size() > 3);
      topic_samples[rec.prompt_id].insert(toks.end() - 3, toks.end());
    }
  }
  REQUIRE(topic_samples.size() == 5);
  std::vector<std::set<std::string>> sets;
  for (auto& [pid, words] : topic_samples) sets.push_back(words);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      for (const auto& w : sets[i]) CHECK(sets[j].count(w) == 0);
    }
  }
}

TEST_CASE("generated embeddings cluster by topic and cover the lexicon") {
  const auto spec = tiny_spec();
  auto corpus = generate_synthetic_corpus(spec, 9);
  REQUIRE(corpus.embeddings.size() == corpus.lexicon.size());
  for (std::size_t i = 0; i < corpus.lexicon.size(); ++i) {
    CHECK(corpus.embeddings[i].first == corpus.lexicon[i]);
    CHECK(corpus.embeddings[i].second.size() == static_cast<std::size_t>(spec.embed_dim));
  }

  // Topic blocks sit after the scaffold and shared words, one block per
  // prompt; within-block cosine should dominate cross-block cosine.
  const int n_prompts = spec.n_seen_prompts + spec.n_unseen_prompts;
  const std::size_t scaffold =
      corpus.lexicon.size() -
      static_cast<std::size_t>(spec.shared_vocab_size + n_prompts * spec.topic_vocab_size);
  auto block_vec = [&](int k, int i) -> const std::vector<float>& {
    return corpus.embeddings[scaffold + static_cast<std::size_t>(spec.shared_vocab_size) +
                             static_cast<std::size_t>(k * spec.topic_vocab_size + i)]
        .second;
  };
  double within = 0, cross = 0;
  int n_within = 0, n_cross = 0;
  for (int k = 0; k < n_prompts; ++k) {
    for (int i = 0; i < spec.topic_vocab_size; ++i) {
      for (int j = i + 1; j < spec.topic_vocab_size; ++j) {
        within += cosine(block_vec(k, i), block_vec(k, j));
        ++n_within;
      }
      cross += cosine(block_vec(k, i), block_vec((k + 1) % n_prompts, i));
      ++n_cross;
    }
  }
  CHECK(within / n_within > cross / n_cross + 0.3);
  CHECK(within / n_within > 0.5);
}

TEST_CASE("embedding parameters do not disturb the generated text") {
  auto base = tiny_spec();
  auto wider = base;
  wider.embed_dim = 16;
  wider.embed_noise_scale = 0.01;
  auto a = generate_synthetic_corpus(base, 9);
  auto b = generate_synthetic_corpus(wider, 9);
  CHECK(same_records(a.train, b.train));
  CHECK(same_records(a.test_unseen, b.test_unseen));
  CHECK(b.embeddings[0].second.size() == 16);
}

TEST_CASE("embeddings file round trips through the loader") {
  TempDir dir;
  const auto spec = tiny_spec();
  auto corpus = generate_synthetic_corpus(spec, 9);
  const auto path = dir.file("embeddings.txt");
  write_embeddings_file(path, corpus.embeddings);

  auto vocab = build_corpus_vocab(corpus);
  CHECK(vocab.size() == static_cast<int>(corpus.lexicon.size()) + 2);

  auto loaded = load_pretrained_embeddings(path, vocab, spec.embed_dim, 1);
  CHECK(loaded.coverage == 1.0);
  REQUIRE(loaded.table->shape == Shape{vocab.size(), spec.embed_dim});
  for (int j = 0; j < spec.embed_dim; ++j) CHECK(loaded.table->value[j] == 0.0f);

  for (const auto& [word, vec] : corpus.embeddings) {
    const int id = vocab.id(word);
    REQUIRE(id >= 2);
    for (int j = 0; j < spec.embed_dim; ++j) {
      CHECK(loaded.table->value[static_cast<std::size_t>(id * spec.embed_dim + j)] ==
            doctest::Approx(vec[static_cast<std::size_t>(j)]).epsilon(1e-6));
    }
  }

  CHECK_THROWS_AS(write_embeddings_file((dir.path / "no" / "dir.txt").string(), corpus.embeddings),
                  ValueError);
}

TEST_CASE("embedding loader reports coverage and seeds fallbacks stably") {
  TempDir dir;
  auto vocab = Vocabulary::build({{"apple", "berry", "cherry"}}, 1);

  {
    std::ofstream out(dir.file("partial.txt"));
    out << "apple 0.5 -0.25\n";
    out << "unrelated 1 2\n";
  }
  auto partial = load_pretrained_embeddings(dir.file("partial.txt"), vocab, 2, 7);
  CHECK(partial.coverage == doctest::Approx(1.0 / 3.0));
  const int apple = vocab.id("apple");
  CHECK(partial.table->value[static_cast<std::size_t>(apple * 2)] == 0.5f);
  CHECK(partial.table->value[static_cast<std::size_t>(apple * 2 + 1)] == -0.25f);

  // A fallback row depends only on (seed, id), not on file contents.
  {
    std::ofstream out(dir.file("other.txt"));
    out << "berry 9 9\n";
  }
  auto other = load_pretrained_embeddings(dir.file("other.txt"), vocab, 2, 7);
  const int cherry = vocab.id("cherry");
  for (int j = 0; j < 2; ++j) {
    CHECK(partial.table->value[static_cast<std::size_t>(cherry * 2 + j)] ==
          other.table->value[static_cast<std::size_t>(cherry * 2 + j)]);
  }

  {
    std::ofstream out(dir.file("short.txt"));
    out << "apple 0.5\n";
  }
  CHECK_THROWS_WITH_AS(
      static_cast<void>(load_pretrained_embeddings(dir.file("short.txt"), vocab, 2, 7)),
      doctest::Contains("line 1"), FormatError);

  {
    std::ofstream out(dir.file("junk.txt"));
    out << "apple 0.5 oops\n";
  }
  CHECK_THROWS_AS(static_cast<void>(load_pretrained_embeddings(dir.file("junk.txt"), vocab, 2, 7)),
                  FormatError);
  CHECK_THROWS_AS(
      static_cast<void>(load_pretrained_embeddings(dir.file("missing.txt"), vocab, 2, 7)),
      ValueError);
}

TEST_CASE("generator spec validation") {
  auto bad = tiny_spec();
  bad.n_seen_prompts = 1;
  CHECK_THROWS_AS(static_cast<void>(generate_synthetic_corpus(bad, 1)), ValueError);
  bad = tiny_spec();
  bad.topic_word_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = tiny_spec();
  bad.response_len_max = 2;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = tiny_spec();
  bad.dev_fraction = 0.9;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = tiny_spec();
  bad.embed_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = tiny_spec();
  bad.shared_vocab_size = 100000;  // beyond the pseudo-word pool
  CHECK_THROWS_WITH_AS(static_cast<void>(generate_synthetic_corpus(bad, 1)),
                       doctest::Contains("capacity"), ValueError);
}
