#include "zett/cli/run_config.hpp"

#include "json.hpp"
#include "zett/common/error.hpp"
#include "zett/common/json_fields.hpp"
#include "zett/eval/metrics.hpp"

namespace zett::cli {

using nlohmann::json;

namespace {

json parse(std::string_view text, const char* what) {
  try {
    json j = json::parse(text);
    require(j.is_object(), ErrorCode::InvalidFormat, std::string(what) + " must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidFormat, std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string sampler_config_to_json(const sampler::SamplerConfig& c) {
  return json{{"pool_size", c.pool_size},
              {"batch_size", c.batch_size},
              {"max_token_len", c.max_token_len},
              {"vocab_size", c.vocab_size},
              {"mu", c.mu},
              {"sigma", c.sigma},
              {"seed", c.seed},
              {"log_scores", c.log_scores}}
      .dump();
}

sampler::SamplerConfig sampler_config_from_json(std::string_view text) {
  json j = parse(text, "sampler config");
  sampler::SamplerConfig c;
  JsonFields f(j, "sampler");
  f.get("pool_size", c.pool_size).get("batch_size", c.batch_size).get("max_token_len", c.max_token_len);
  f.get("vocab_size", c.vocab_size).get("mu", c.mu).get("sigma", c.sigma).get("seed", c.seed);
  f.get("log_scores", c.log_scores);
  f.finish();
  c.validate();
  return c;
}

std::string continued_config_to_json(const hyper::ContinuedConfig& c) {
  return json{{"steps", c.steps},
              {"lr", c.lr},
              {"tokens_per_batch", c.tokens_per_batch},
              {"subset_size", c.subset_size},
              {"alpha", c.alpha},
              {"max_grad_norm", c.max_grad_norm},
              {"seed", c.seed}}
      .dump();
}

hyper::ContinuedConfig continued_config_from_json(std::string_view text) {
  json j = parse(text, "continued-training config");
  hyper::ContinuedConfig c;
  JsonFields f(j, "continued");
  f.get("steps", c.steps).get("lr", c.lr).get("tokens_per_batch", c.tokens_per_batch);
  f.get("subset_size", c.subset_size).get("alpha", c.alpha).get("max_grad_norm", c.max_grad_norm).get("seed", c.seed);
  f.finish();
  return c;
}

hyper::HypernetConfig RunConfig::hypernet_for(const lm::LmConfig& model) const {
  return hyper::hypernet_config_from_json(hypernet, model);
}

RunConfig run_config_from_json(std::string_view text) {
  json j = parse(text, "run config");
  RunConfig c;
  json lm = json::object(), lm_train = json::object(), hyper = json::object(), hyper_train = json::object(),
       samp = json::object(), cont = json::object();
  JsonFields f(j, "run");
  f.get("seed", c.seed).get("corpus", c.corpus).get("tokenizer", c.tokenizer);
  f.get("lm", lm).get("lm_train", lm_train).get("hypernet", hyper).get("hypernet_train", hyper_train);
  f.get("sampler", samp).get("continued", cont);
  f.finish();
  for (json* section : {&lm_train, &hyper_train, &samp, &cont})
    if (!section->contains("seed")) (*section)["seed"] = c.seed;
  c.lm = lm::lm_config_from_json(lm.dump());
  c.lm_train = lm::lm_train_config_from_json(lm_train.dump());
  c.hypernet = hyper.dump();
  c.hypernet_for(c.lm);  // validates
  c.hypernet_train = hyper::hypernet_train_config_from_json(hyper_train.dump());
  c.sampler = sampler_config_from_json(samp.dump());
  c.continued = continued_config_from_json(cont.dump());
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j{{"seed", c.seed},
         {"corpus", c.corpus},
         {"tokenizer", c.tokenizer},
         {"lm", json::parse(lm::lm_config_to_json(c.lm))},
         {"lm_train", json::parse(lm::lm_train_config_to_json(c.lm_train))},
         {"hypernet", json::parse(hyper::hypernet_config_to_json(c.hypernet_for(c.lm)))},
         {"hypernet_train", json::parse(hyper::hypernet_train_config_to_json(c.hypernet_train))},
         {"sampler", json::parse(sampler_config_to_json(c.sampler))},
         {"continued", json::parse(continued_config_to_json(c.continued))}};
  return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) { return eval::content_hash(run_config_to_json(cfg)); }

}  // namespace zett::cli
