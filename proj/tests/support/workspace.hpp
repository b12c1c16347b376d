#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <string>

#include "dlap/corpus.hpp"
#include "dlap/llmclient.hpp"
#include "dlap/pipeline.hpp"
#include "tempdir.hpp"

namespace dlap::testing {

/// Mock script answering each prepared prompt with the provider's own verdict.
inline std::map<std::string, std::string> echo_provider_script(
    const std::vector<eval::PreparedPrompt>& prompts) {
  std::map<std::string, std::string> script;
  for (const auto& p : prompts)
    script[p.first_hash] = p.prediction && p.prediction->vulnerable
                               ? "Yes. The detection model flags this function."
                               : "No. The detection model considers this function safe.";
  return script;
}

/// Minimal DLAP run config over `corpus_path` with the builtin provider,
/// offline COT and a mock LLM reading `script_path`.
inline nlohmann::json dlap_config(const std::string& corpus_path, const std::string& script_path) {
  return {{"corpus", corpus_path},
          {"seed", 7},
          {"undersample_ratio", 1.0},
          {"train_fraction", 0.8},
          {"provider", {{"kind", "builtin"}, {"training", {{"epochs", 200}}}}},
          {"prompt", {{"mode", "dlap"}, {"icl_size", 3}, {"top_k", 2}, {"cot_completion", "offline"}}},
          {"llm", {{"transport", "mock"}, {"script", script_path}, {"max_in_flight", 4}}}};
}

}  // namespace dlap::testing
