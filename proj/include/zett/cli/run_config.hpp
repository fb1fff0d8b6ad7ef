#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "zett/hyper/hypernet.hpp"
#include "zett/lm/model.hpp"
#include "zett/lm/train.hpp"
#include "zett/sampler/sampler.hpp"

namespace zett::cli {

// One JSON file configures every stage; unknown keys are rejected and
// missing keys keep their defaults. The top-level seed is copied into every
// stage that has none of its own.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string corpus;
  std::string tokenizer;
  lm::LmConfig lm;
  lm::LmTrainConfig lm_train;
  std::string hypernet = "{}";  // overrides applied to HypernetConfig::for_lm
  hyper::HypernetTrainConfig hypernet_train;
  sampler::SamplerConfig sampler;
  hyper::ContinuedConfig continued;

  hyper::HypernetConfig hypernet_for(const lm::LmConfig& lm) const;
};

RunConfig run_config_from_json(std::string_view text);
std::string run_config_to_json(const RunConfig& cfg);  // canonical: sorted keys, every field
std::string config_hash(const RunConfig& cfg);

std::string sampler_config_to_json(const sampler::SamplerConfig& cfg);
sampler::SamplerConfig sampler_config_from_json(std::string_view text);
std::string continued_config_to_json(const hyper::ContinuedConfig& cfg);
hyper::ContinuedConfig continued_config_from_json(std::string_view text);

}  // namespace zett::cli
