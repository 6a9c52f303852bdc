#pragma once

// JSON adapters for the configuration and reporting value types (ADL hooks
// for nlohmann::json).

#include "json.hpp"
#include "offtopic/data.hpp"
#include "offtopic/model.hpp"
#include "offtopic/trainer.hpp"

namespace offtopic {

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"embed_dim", c.embed_dim},
                     {"conv_layers", c.conv_layers},
                     {"kernel_size", c.kernel_size},
                     {"filters", c.filters},
                     {"prompt_len", c.prompt_len},
                     {"response_len", c.response_len},
                     {"encoder", to_string(c.encoder)},
                     {"pooling", to_string(c.pooling)},
                     {"attention", to_string(c.attention)},
                     {"gate_residual", c.gate_residual},
                     {"dropout_rate", c.dropout_rate},
                     {"head_hidden", c.head_hidden}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("conv_layers").get_to(c.conv_layers);
  j.at("kernel_size").get_to(c.kernel_size);
  j.at("filters").get_to(c.filters);
  j.at("prompt_len").get_to(c.prompt_len);
  j.at("response_len").get_to(c.response_len);
  c.encoder = parse_encoder(j.at("encoder").get<std::string>());
  c.pooling = parse_pooling(j.at("pooling").get<std::string>());
  c.attention = parse_attention(j.at("attention").get<std::string>());
  j.at("gate_residual").get_to(c.gate_residual);
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("head_hidden").get_to(c.head_hidden);
}

inline void to_json(nlohmann::json& j, const GenSpec& s) {
  j = nlohmann::json{{"n_seen_prompts", s.n_seen_prompts},
                     {"n_unseen_prompts", s.n_unseen_prompts},
                     {"responses_per_prompt", s.responses_per_prompt},
                     {"test_responses_per_prompt", s.test_responses_per_prompt},
                     {"topic_vocab_size", s.topic_vocab_size},
                     {"shared_vocab_size", s.shared_vocab_size},
                     {"topic_word_rate", s.topic_word_rate},
                     {"response_len_min", s.response_len_min},
                     {"response_len_max", s.response_len_max},
                     {"divergent_fraction", s.divergent_fraction},
                     {"dev_fraction", s.dev_fraction},
                     {"embed_dim", s.embed_dim},
                     {"embed_center_scale", s.embed_center_scale},
                     {"embed_noise_scale", s.embed_noise_scale}};
}

inline void from_json(const nlohmann::json& j, GenSpec& s) {
  j.at("n_seen_prompts").get_to(s.n_seen_prompts);
  j.at("n_unseen_prompts").get_to(s.n_unseen_prompts);
  j.at("responses_per_prompt").get_to(s.responses_per_prompt);
  j.at("test_responses_per_prompt").get_to(s.test_responses_per_prompt);
  j.at("topic_vocab_size").get_to(s.topic_vocab_size);
  j.at("shared_vocab_size").get_to(s.shared_vocab_size);
  j.at("topic_word_rate").get_to(s.topic_word_rate);
  j.at("response_len_min").get_to(s.response_len_min);
  j.at("response_len_max").get_to(s.response_len_max);
  j.at("divergent_fraction").get_to(s.divergent_fraction);
  j.at("dev_fraction").get_to(s.dev_fraction);
  j.at("embed_dim").get_to(s.embed_dim);
  j.at("embed_center_scale").get_to(s.embed_center_scale);
  j.at("embed_noise_scale").get_to(s.embed_noise_scale);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"dev_batch_size", c.dev_batch_size},
                     {"max_epochs", c.max_epochs},
                     {"early_stop_patience", c.early_stop_patience},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps_hat", c.eps_hat},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("batch_size").get_to(c.batch_size);
  j.at("dev_batch_size").get_to(c.dev_batch_size);
  j.at("max_epochs").get_to(c.max_epochs);
  j.at("early_stop_patience").get_to(c.early_stop_patience);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("eps_hat").get_to(c.eps_hat);
  j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const EpochStats& s) {
  j = nlohmann::json{{"epoch", s.epoch},
                     {"train_loss", s.train_loss},
                     {"dev_loss", s.dev_loss},
                     {"seconds", s.seconds}};
}

inline void from_json(const nlohmann::json& j, EpochStats& s) {
  j.at("epoch").get_to(s.epoch);
  j.at("train_loss").get_to(s.train_loss);
  j.at("dev_loss").get_to(s.dev_loss);
  j.at("seconds").get_to(s.seconds);
}

}  // namespace offtopic
