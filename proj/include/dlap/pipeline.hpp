#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dlap/llmclient.hpp"
#include "dlap/metrics.hpp"
#include "dlap/modelplug.hpp"
#include "dlap/promptgen.hpp"
#include "dlap/simindex.hpp"

namespace dlap::eval {

enum class PromptMode { kDlap, kRole, kAuxiliary, kCot2Step };

const char* to_string(PromptMode mode);
PromptMode prompt_mode_from_string(std::string_view s);

/// Everything a run needs, read from one JSON config file. Relative paths
/// resolve against the config file's directory.
struct RunConfig {
  std::string corpus_path;
  std::uint64_t seed = 7;
  std::optional<double> undersample_ratio = 1.0;  // nullopt: keep all benign
  double train_fraction = 0.8;

  simindex::IndexParams index;
  std::string index_path;  // prebuilt index over the train split; empty = build

  modelplug::ProviderConfig provider;
  modelplug::TrainParams training;

  std::string library_path;  // empty = shipped default
  std::string mapping_path;  // empty = shipped default
  std::string findings_path;  // canonical findings JSONL; empty = none
  std::string function_map_path;

  PromptMode mode = PromptMode::kDlap;
  std::size_t icl_size = 3;
  std::size_t top_k = 2;
  std::size_t token_budget = 0;
  promptgen::CompletionMode cot_completion = promptgen::CompletionMode::kOffline;

  llm::LlmConfig llm;
  bool unparseable_as_positive = false;

  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::string& path);
  /// Resolved snapshot for manifests. Never contains credentials.
  nlohmann::ordered_json to_json() const;
};

/// One test sample's prompt(s), ready to send.
struct PreparedPrompt {
  std::string id;
  std::string project;
  bool vulnerable = false;
  std::vector<std::string> turns;  // one turn, or two for cot2step
  std::string first_hash;          // prompt_hash of the first request
  std::optional<modelplug::ModelPrediction> prediction;  // dlap only
  std::string query_key;                                   // dlap only
  std::size_t token_estimate = 0;
};

struct SampleResult {
  std::string id;
  std::string project;
  bool vulnerable = false;
  std::string mode;
  std::string prompt_hash;
  llm::Decision decision = llm::Decision::kUnparseable;
  std::string explanation;
  std::string response;
  int attempts = 0;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  std::optional<double> provider_probability;
  std::string query_key;

  friend bool operator==(const SampleResult&, const SampleResult&) = default;
};

std::string results_to_jsonl(const std::vector<SampleResult>& results);
std::vector<SampleResult> results_from_jsonl(std::string_view text,
                                             const std::string& origin = "<memory>");

/// Counts and metrics over per-sample results under an unparseable policy.
MetricsReport score_results(const std::vector<SampleResult>& results,
                            bool unparseable_as_positive);

struct RunOutput {
  std::vector<SampleResult> results;  // sorted by id
  MetricsReport metrics;
  std::optional<MetricsReport> provider_metrics;  // provider's own verdicts, dlap only
  std::optional<double> provider_cv;
  nlohmann::ordered_json manifest;
};

/// End-to-end driver: split, model, index, static findings, prompt synthesis,
/// detection, scoring. Failures name the sample and stage.
class Pipeline {
 public:
  /// `transport` overrides the one named by the LLM config (tests).
  explicit Pipeline(RunConfig config, std::shared_ptr<llm::ChatTransport> transport = nullptr);
  ~Pipeline();

  /// Builds every test-sample prompt without contacting the detector LLM.
  std::vector<PreparedPrompt> prepare();
  RunOutput run();

  const RunConfig& config() const { return config_; }

 private:
  struct State;
  void setup();
  PreparedPrompt prepare_one(const corpus::FunctionRecord& target) const;

  RunConfig config_;
  std::shared_ptr<llm::ChatTransport> transport_;
  std::unique_ptr<State> state_;
};

/// results.jsonl, metrics.json and manifest.json under `dir`.
void write_run(const RunOutput& out, const std::filesystem::path& dir);
/// One prompt file per sample plus prompts.jsonl (id, hash, turns) under `dir`.
void write_prompts(const std::vector<PreparedPrompt>& prompts, const std::filesystem::path& dir);

nlohmann::ordered_json metrics_to_json(const MetricsReport& m);

}  // namespace dlap::eval
