#include "offtopic/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace offtopic {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream stream(text);
  std::string raw;
  while (stream >> raw) {
    for (auto& ch : raw) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::size_t begin = 0, end = raw.size();
    while (begin < end && !std::isalnum(static_cast<unsigned char>(raw[begin]))) ++begin;
    while (end > begin && !std::isalnum(static_cast<unsigned char>(raw[end - 1]))) --end;
    if (end > begin) out.push_back(raw.substr(begin, end - begin));
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& documents,
                             int min_count) {
  if (min_count < 1) throw ValueError("build_vocab: min_count must be at least 1");
  std::unordered_map<std::string, long long> counts;
  long long total = 0;
  for (const auto& doc : documents) {
    for (const auto& tok : doc) {
      ++counts[tok];
      ++total;
    }
  }
  if (total == 0) throw ValueError("build_vocab: corpus is empty");
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, cnt] : counts) {
    if (cnt >= min_count) kept.emplace_back(tok, cnt);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, cnt] : kept) {
    v.map_.emplace(tok, static_cast<int>(v.tokens_.size()) + 2);
    v.tokens_.push_back(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = map_.find(token);
  return it == map_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 2 || id >= size()) {
    throw ValueError("vocabulary: id " + std::to_string(id) + " has no token");
  }
  return tokens_[static_cast<std::size_t>(id - 2)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot write vocabulary file: " + path);
  for (const auto& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot read vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (v.map_.count(line)) throw FormatError("vocabulary file has duplicate token: " + line);
    v.map_.emplace(line, static_cast<int>(v.tokens_.size()) + 2);
    v.tokens_.push_back(line);
  }
  return v;
}

std::vector<int> pad_or_truncate(const std::vector<std::string>& tokens, int target_len,
                                 const Vocabulary& vocab) {
  if (target_len < 1) throw ValueError("pad_or_truncate: target length must be positive");
  std::vector<int> ids(static_cast<std::size_t>(target_len), Vocabulary::kPad);
  const std::size_t n = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(target_len));
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(tokens[i]);
  return ids;
}

std::vector<RawRecord> read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("cannot read corpus file: " + path);
  std::vector<RawRecord> records;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      RawRecord rec;
      rec.prompt_id = obj.at("prompt_id").get<std::string>();
      rec.prompt = obj.at("prompt").get<std::string>();
      rec.response = obj.at("response").get<std::string>();
      if (obj.contains("part")) rec.part = obj.at("part").get<int>();
      if (obj.contains("label")) rec.label = obj.at("label").get<int>();
      if (obj.contains("weight")) rec.weight = obj.at("weight").get<double>();
      if (rec.prompt_id.empty()) {
        throw FormatError(path + " line " + std::to_string(line_no) + ": empty prompt_id");
      }
      if (rec.label != -1 && rec.label != 0 && rec.label != 1) {
        throw FormatError(path + " line " + std::to_string(line_no) + ": label must be 0 or 1");
      }
      records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_corpus_file(const std::string& path, const std::vector<RawRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ValueError("cannot write corpus file: " + path);
  for (const auto& rec : records) {
    json obj;
    obj["prompt_id"] = rec.prompt_id;
    if (rec.part != 0) obj["part"] = rec.part;
    obj["prompt"] = rec.prompt;
    obj["response"] = rec.response;
    if (rec.label != -1) obj["label"] = rec.label;
    if (rec.weight >= 0.0) obj["weight"] = rec.weight;
    out << obj.dump() << '\n';
  }
}

Example encode_record(const RawRecord& record, const Vocabulary& vocab, int prompt_len,
                      int response_len) {
  if (record.label != 0 && record.label != 1) {
    throw ValueError("cannot encode record without a 0/1 label (prompt " + record.prompt_id + ")");
  }
  Example ex;
  ex.prompt_ids = pad_or_truncate(tokenize(record.prompt), prompt_len, vocab);
  ex.response_ids = pad_or_truncate(tokenize(record.response), response_len, vocab);
  ex.label = record.label;
  ex.weight = record.weight >= 0.0 ? record.weight : 1.0;
  ex.prompt_key = record.prompt_id;
  return ex;
}

std::vector<Example> encode_records(const std::vector<RawRecord>& records, const Vocabulary& vocab,
                                    int prompt_len, int response_len) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(encode_record(rec, vocab, prompt_len, response_len));
  return out;
}

std::vector<RawRecord> filter_by_min_length(const std::vector<RawRecord>& records,
                                            const std::vector<int>& min_tokens_per_part) {
  std::vector<RawRecord> out;
  for (const auto& rec : records) {
    if (rec.part >= 1 && rec.part <= static_cast<int>(min_tokens_per_part.size())) {
      const auto n = tokenize(rec.response).size();
      if (static_cast<int>(n) < min_tokens_per_part[static_cast<std::size_t>(rec.part - 1)]) {
        continue;
      }
    }
    out.push_back(rec);
  }
  return out;
}

EmbeddingLoadResult load_pretrained_embeddings(const std::string& path, const Vocabulary& vocab,
                                               int dim, std::uint32_t seed) {
  if (dim < 1) throw ValueError("embedding dim must be positive");
  std::ifstream in(path);
  if (!in) throw ValueError("cannot read embedding file: " + path);
  const int v_size = vocab.size();
  auto table = make_tensor<float>({v_size, dim}, false);
  // Pre-fill every row from the seed so a token's fallback row depends only
  // on (seed, id), not on which tokens the file happens to cover.
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  for (auto& x : table->value) x = static_cast<float>(dist(rng));

  std::vector<char> found(static_cast<std::size_t>(v_size), 0);
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<float> row;
    row.reserve(static_cast<std::size_t>(dim));
    std::string field;
    while (fields >> field) {
      try {
        std::size_t used = 0;
        const float value = std::stof(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        row.push_back(value);
      } catch (const std::exception&) {
        throw FormatError(path + " line " + std::to_string(line_no) + ": unparseable value '" +
                          field + "'");
      }
    }
    if (static_cast<int>(row.size()) != dim) {
      throw FormatError(path + " line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, got " + std::to_string(row.size()));
    }
    if (!vocab.contains(token)) continue;
    const int id = vocab.id(token);
    std::copy(row.begin(), row.end(),
              table->value.begin() + static_cast<std::ptrdiff_t>(id) * dim);
    found[static_cast<std::size_t>(id)] = 1;
  }
  for (int j = 0; j < dim; ++j) table->value[static_cast<std::size_t>(j)] = 0.0f;

  int covered = 0;
  for (int id = 2; id < v_size; ++id) covered += found[static_cast<std::size_t>(id)];
  EmbeddingLoadResult result;
  result.table = table;
  result.coverage = v_size > 2 ? static_cast<double>(covered) / (v_size - 2) : 0.0;
  return result;
}

void fisher_yates_shuffle(std::vector<std::string>& tokens, std::mt19937& rng) {
  for (std::size_t i = tokens.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(tokens[i - 1], tokens[j]);
  }
}

RawPools collect_pools(const std::vector<RawRecord>& records) {
  RawPools pools;
  for (const auto& rec : records) {
    if (rec.label == 0) continue;  // negatives never enter the pool
    pools.prompt_text.emplace(rec.prompt_id, rec.prompt);
    pools.responses[rec.prompt_id].push_back(rec.response);
  }
  return pools;
}

std::vector<RawRecord> sample_negatives(const RawPools& pools, const std::string& target_prompt,
                                        int count, NegativeMode mode, std::mt19937& rng) {
  if (count < 1) throw ValueError("sample_negatives: count must be positive");
  if (pools.responses.size() < 2) {
    throw ValueError("sample_negatives: need responses from at least 2 prompts");
  }
  auto prompt_it = pools.prompt_text.find(target_prompt);
  if (prompt_it == pools.prompt_text.end()) {
    throw ValueError("sample_negatives: unknown target prompt '" + target_prompt + "'");
  }
  // Flatten the other prompts' responses for uniform drawing.
  std::vector<const std::string*> donors;
  for (const auto& [pid, responses] : pools.responses) {
    if (pid == target_prompt) continue;
    for (const auto& r : responses) donors.push_back(&r);
  }
  if (donors.empty()) {
    throw ValueError("sample_negatives: no responses outside prompt '" + target_prompt + "'");
  }
  const double weight = mode == NegativeMode::Basic ? 1.0 : 0.5;
  std::vector<RawRecord> out;
  out.reserve(static_cast<std::size_t>(mode == NegativeMode::Basic ? count : 2 * count));
  for (int i = 0; i < count; ++i) {
    const std::string& drawn = *donors[rng() % donors.size()];
    RawRecord rec;
    rec.prompt_id = target_prompt;
    rec.prompt = prompt_it->second;
    rec.response = drawn;
    rec.label = 0;
    rec.weight = weight;
    out.push_back(rec);
    if (mode == NegativeMode::ShuffleAugmented) {
      auto tokens = tokenize(drawn);
      fisher_yates_shuffle(tokens, rng);
      RawRecord shuffled = out.back();
      shuffled.response = join_tokens(tokens);
      out.push_back(std::move(shuffled));
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n_examples, int batch_size,
                                                   bool shuffle, std::mt19937& rng) {
  if (batch_size < 1) throw ValueError("make_batches: batch size must be positive");
  std::vector<std::size_t> order(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;
  if (shuffle) {
    for (std::size_t i = n_examples; i > 1; --i) {
      const std::size_t j = rng() % i;
      std::swap(order[i - 1], order[j]);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n_examples; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n_examples, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<PromptGroup> group_by_prompt(const std::vector<RawRecord>& records,
                                         const Vocabulary& vocab, int prompt_len,
                                         int response_len) {
  std::map<std::string, PromptGroup> grouped;
  for (const auto& rec : records) {
    auto& group = grouped[rec.prompt_id];
    group.prompt_id = rec.prompt_id;
    group.examples.push_back(encode_record(rec, vocab, prompt_len, response_len));
  }
  std::vector<PromptGroup> out;
  out.reserve(grouped.size());
  for (auto& [pid, group] : grouped) out.push_back(std::move(group));
  return out;
}

void assert_no_leakage(const CorpusSplit& split) {
  std::unordered_set<std::string> train_keys;
  for (const auto& ex : split.train) train_keys.insert(ex.prompt_key);
  for (const auto& ex : split.dev) {
    if (!train_keys.count(ex.prompt_key)) {
      throw ValueError("corpus leakage: dev prompt '" + ex.prompt_key + "' absent from train");
    }
  }
  for (const auto& group : split.test_unseen) {
    if (train_keys.count(group.prompt_id)) {
      throw ValueError("corpus leakage: unseen-test prompt '" + group.prompt_id +
                       "' appears in train");
    }
  }
}

void GenSpec::validate() const {
  if (n_seen_prompts < 2) throw ValueError("gen: need at least 2 seen prompts for negatives");
  if (n_unseen_prompts < 1) throw ValueError("gen: need at least 1 unseen prompt");
  if (responses_per_prompt < 1) throw ValueError("gen: responses_per_prompt must be positive");
  if (test_responses_per_prompt < 1) {
    throw ValueError("gen: test_responses_per_prompt must be positive");
  }
  if (topic_vocab_size < 1) throw ValueError("gen: topic_vocab_size must be positive");
  if (shared_vocab_size < 1) throw ValueError("gen: shared_vocab_size must be positive");
  if (topic_word_rate < 0.0 || topic_word_rate > 1.0) {
    throw ValueError("gen: topic_word_rate must lie in [0, 1]");
  }
  if (response_len_min < 1 || response_len_max < response_len_min) {
    throw ValueError("gen: invalid response length range");
  }
  if (divergent_fraction < 0.0 || divergent_fraction > 1.0) {
    throw ValueError("gen: divergent_fraction must lie in [0, 1]");
  }
  if (dev_fraction < 0.0 || dev_fraction > 0.5) {
    throw ValueError("gen: dev_fraction must lie in [0, 0.5]");
  }
  if (embed_dim < 1) throw ValueError("gen: embed_dim must be positive");
  if (embed_center_scale <= 0.0 || embed_noise_scale < 0.0) {
    throw ValueError("gen: embedding scales must be positive");
  }
}

namespace {

const std::vector<std::vector<std::string>>& prompt_templates() {
  static const std::vector<std::vector<std::string>> templates = {
      {"what", "do", "you", "think", "about"},
      {"please", "describe", "your", "experience", "with"},
      {"tell", "me", "about"},
      {"how", "do", "you", "feel", "about"},
      {"why", "do", "people", "enjoy"},
      {"talk", "about", "your", "opinion", "of"},
      {"would", "you", "recommend"},
      {"describe", "a", "typical"},
  };
  return templates;
}

std::vector<std::string> scaffold_words() {
  std::set<std::string> words;
  for (const auto& t : prompt_templates()) words.insert(t.begin(), t.end());
  return {words.begin(), words.end()};
}

// Deterministic pseudo-word pool: every consonant-vowel bigram pair, shuffled.
std::vector<std::string> pseudo_word_pool(std::mt19937& rng, std::size_t need) {
  static const std::string consonants = "bdfgjklmnprstvz";
  static const std::string vowels = "aeiou";
  std::vector<std::string> syllables;
  for (char c : consonants) {
    for (char v : vowels) syllables.push_back(std::string{c, v});
  }
  std::vector<std::string> words;
  words.reserve(syllables.size() * syllables.size());
  std::set<std::string> reserved;
  for (const auto& w : scaffold_words()) reserved.insert(w);
  for (const auto& a : syllables) {
    for (const auto& b : syllables) {
      std::string w = a + b;
      if (!reserved.count(w)) words.push_back(std::move(w));
    }
  }
  if (need > words.size()) {
    throw ValueError("gen: requested vocabularies need " + std::to_string(need) +
                     " distinct words, generator capacity is " + std::to_string(words.size()));
  }
  for (std::size_t i = words.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(words[i - 1], words[j]);
  }
  words.resize(need);
  return words;
}

struct PromptSpec {
  std::string id;
  std::string text;
  std::vector<std::string> topic;
  bool divergent = false;
};

std::string make_response(const PromptSpec& prompt, const std::vector<std::string>& shared,
                          const GenSpec& spec, std::mt19937& rng) {
  const int len = spec.response_len_min +
                  static_cast<int>(rng() % static_cast<std::uint32_t>(
                                       spec.response_len_max - spec.response_len_min + 1));
  const double rate = prompt.divergent ? spec.topic_word_rate / 2.0 : spec.topic_word_rate;
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) {
    const bool topical = static_cast<double>(rng() % 1000000u) / 1e6 < rate;
    if (topical) {
      tokens.push_back(prompt.topic[rng() % prompt.topic.size()]);
    } else {
      tokens.push_back(shared[rng() % shared.size()]);
    }
  }
  return join_tokens(tokens);
}

// Negatives for one test split; when the split has a single prompt, donors
// fall back to the opposite split's pool (still off-topic for the target).
std::vector<RawRecord> test_negatives(const std::vector<PromptSpec>& prompts,
                                      const RawPools& own_pool, const RawPools& fallback_pool,
                                      int count, std::mt19937& rng) {
  const RawPools* pool = &own_pool;
  RawPools merged;
  if (own_pool.responses.size() < 2) {
    merged = fallback_pool;
    for (const auto& [pid, text] : own_pool.prompt_text) merged.prompt_text.emplace(pid, text);
    for (const auto& [pid, responses] : own_pool.responses) {
      auto& dst = merged.responses[pid];
      dst.insert(dst.end(), responses.begin(), responses.end());
    }
    pool = &merged;
  }
  std::vector<RawRecord> out;
  for (const auto& prompt : prompts) {
    auto negs = sample_negatives(*pool, prompt.id, count, NegativeMode::Basic, rng);
    out.insert(out.end(), negs.begin(), negs.end());
  }
  return out;
}

}  // namespace

GeneratedCorpus generate_synthetic_corpus(const GenSpec& spec, std::uint32_t seed) {
  spec.validate();
  std::mt19937 rng(seed);
  const int n_prompts = spec.n_seen_prompts + spec.n_unseen_prompts;
  const std::size_t need = static_cast<std::size_t>(n_prompts) * spec.topic_vocab_size +
                           static_cast<std::size_t>(spec.shared_vocab_size);
  auto words = pseudo_word_pool(rng, need);

  std::vector<std::string> shared(words.begin(), words.begin() + spec.shared_vocab_size);
  std::size_t next = static_cast<std::size_t>(spec.shared_vocab_size);

  auto build_prompts = [&](const std::string& tag, int count, int n_divergent) {
    std::vector<PromptSpec> prompts;
    for (int i = 0; i < count; ++i) {
      PromptSpec p;
      p.id = tag + "_" + (i < 10 ? "0" : "") + std::to_string(i);
      p.topic.assign(words.begin() + static_cast<std::ptrdiff_t>(next),
                     words.begin() + static_cast<std::ptrdiff_t>(next + spec.topic_vocab_size));
      next += static_cast<std::size_t>(spec.topic_vocab_size);
      p.divergent = i < n_divergent;
      const auto& tpl = prompt_templates()[rng() % prompt_templates().size()];
      std::vector<std::string> text = tpl;
      std::set<std::size_t> picked;
      while (picked.size() < std::min<std::size_t>(3, p.topic.size())) {
        picked.insert(rng() % p.topic.size());
      }
      for (auto idx : picked) text.push_back(p.topic[idx]);
      p.text = join_tokens(text);
      prompts.push_back(std::move(p));
    }
    return prompts;
  };

  const int div_seen = static_cast<int>(std::lround(spec.divergent_fraction * spec.n_seen_prompts));
  const int div_unseen =
      static_cast<int>(std::lround(spec.divergent_fraction * spec.n_unseen_prompts));
  auto seen = build_prompts("seen", spec.n_seen_prompts, div_seen);
  auto unseen = build_prompts("unseen", spec.n_unseen_prompts, div_unseen);

  auto positive_record = [](const PromptSpec& p, std::string response) {
    RawRecord rec;
    rec.prompt_id = p.id;
    rec.prompt = p.text;
    rec.response = std::move(response);
    rec.label = 1;
    rec.weight = 1.0;
    return rec;
  };

  // Training-side positives for seen prompts.
  std::map<std::string, std::vector<RawRecord>> train_by_prompt;
  for (const auto& p : seen) {
    auto& bucket = train_by_prompt[p.id];
    for (int i = 0; i < spec.responses_per_prompt; ++i) {
      bucket.push_back(positive_record(p, make_response(p, shared, spec, rng)));
    }
  }
  std::vector<RawRecord> train_positives;
  for (const auto& [pid, bucket] : train_by_prompt) {
    train_positives.insert(train_positives.end(), bucket.begin(), bucket.end());
  }
  auto train_pools = collect_pools(train_positives);
  for (const auto& p : seen) {
    auto negs =
        sample_negatives(train_pools, p.id, spec.responses_per_prompt, NegativeMode::Basic, rng);
    auto& bucket = train_by_prompt[p.id];
    bucket.insert(bucket.end(), negs.begin(), negs.end());
  }

  // Dev: a per-prompt fraction held out after shuffling.
  GeneratedCorpus out;
  for (auto& [pid, bucket] : train_by_prompt) {
    std::vector<std::size_t> order(bucket.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng() % i;
      std::swap(order[i - 1], order[j]);
    }
    const std::size_t n_dev =
        static_cast<std::size_t>(spec.dev_fraction * static_cast<double>(bucket.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto& dst = i < n_dev ? out.dev : out.train;
      dst.push_back(bucket[order[i]]);
    }
  }

  // Test pools: fresh on-topic responses per prompt, negatives drawn within
  // the same split so the unseen benchmark stays self-contained.
  std::vector<RawRecord> seen_test_pos, unseen_test_pos;
  for (const auto& p : seen) {
    for (int i = 0; i < spec.test_responses_per_prompt; ++i) {
      seen_test_pos.push_back(positive_record(p, make_response(p, shared, spec, rng)));
    }
  }
  for (const auto& p : unseen) {
    for (int i = 0; i < spec.test_responses_per_prompt; ++i) {
      unseen_test_pos.push_back(positive_record(p, make_response(p, shared, spec, rng)));
    }
  }
  auto seen_pool = collect_pools(seen_test_pos);
  auto unseen_pool = collect_pools(unseen_test_pos);
  out.test_seen = seen_test_pos;
  {
    auto negs =
        test_negatives(seen, seen_pool, unseen_pool, spec.test_responses_per_prompt, rng);
    out.test_seen.insert(out.test_seen.end(), negs.begin(), negs.end());
  }
  out.test_unseen = unseen_test_pos;
  {
    auto negs =
        test_negatives(unseen, unseen_pool, seen_pool, spec.test_responses_per_prompt, rng);
    out.test_unseen.insert(out.test_unseen.end(), negs.begin(), negs.end());
  }

  out.lexicon = scaffold_words();
  out.lexicon.insert(out.lexicon.end(), words.begin(), words.end());

  // Embedding table, drawn from a derived stream so the text above is a
  // function of (spec, seed) alone. Topic blocks sit at
  // words[shared + k*topic_vocab_size ..]; everything else is unclustered.
  std::mt19937 erng(rng());
  const auto uniform = [&erng](double bound) {
    return static_cast<float>((static_cast<double>(erng()) / 4294967296.0 * 2.0 - 1.0) * bound);
  };
  std::map<std::string, std::vector<float>> by_word;
  for (const auto& w : out.lexicon) {
    std::vector<float> vec(static_cast<std::size_t>(spec.embed_dim));
    for (auto& x : vec) x = uniform(spec.embed_center_scale);
    by_word.emplace(w, std::move(vec));
  }
  for (int k = 0; k < n_prompts; ++k) {
    std::vector<float> center(static_cast<std::size_t>(spec.embed_dim));
    for (auto& x : center) x = uniform(spec.embed_center_scale);
    const std::size_t base =
        static_cast<std::size_t>(spec.shared_vocab_size) +
        static_cast<std::size_t>(k) * static_cast<std::size_t>(spec.topic_vocab_size);
    for (int i = 0; i < spec.topic_vocab_size; ++i) {
      auto& vec = by_word.at(words[base + static_cast<std::size_t>(i)]);
      for (std::size_t d = 0; d < vec.size(); ++d) {
        vec[d] = center[d] + uniform(spec.embed_noise_scale);
      }
    }
  }
  out.embeddings.reserve(out.lexicon.size());
  for (const auto& w : out.lexicon) out.embeddings.emplace_back(w, by_word.at(w));
  return out;
}

void write_embeddings_file(const std::string& path,
                           const std::vector<std::pair<std::string, std::vector<float>>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValueError("cannot open for writing: " + path);
  out << std::setprecision(8);
  for (const auto& [word, vec] : rows) {
    out << word;
    for (float x : vec) out << ' ' << x;
    out << '\n';
  }
  if (!out) throw ValueError("write failed: " + path);
}

Vocabulary build_corpus_vocab(const GeneratedCorpus& corpus) {
  std::vector<std::vector<std::string>> docs;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test_seen, &corpus.test_unseen}) {
    for (const auto& rec : *split) {
      docs.push_back(tokenize(rec.prompt));
      docs.push_back(tokenize(rec.response));
    }
  }
  // One synthetic document covering the whole lexicon so every generatable
  // word owns an embedding row, the way broad pretrained coverage would.
  docs.push_back(corpus.lexicon);
  return Vocabulary::build(docs, 1);
}

}  // namespace offtopic
