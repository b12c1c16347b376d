#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlap/corpus.hpp"
#include "dlap/modelplug.hpp"
#include "dlap/taxonomy.hpp"

namespace dlap::promptgen {

struct IclPair {
  std::string id;
  std::string code;
  double probability = 0.0;
  double similarity = 0.0;
};

/// Reference (question, answer) pairs, most similar first.
struct IclBlock {
  std::string target_id;
  std::vector<IclPair> pairs;

  std::string render() const;
};

struct CandidateRef {
  const corpus::FunctionRecord* record = nullptr;
  double similarity = 0.0;
};

/// Pairs candidates with their model probabilities and keeps the top `m` by
/// similarity (ties by id). Throws kInvalidArgument when sizes differ or m == 0.
IclBlock assemble_icl(std::string target_id, const std::vector<CandidateRef>& candidates,
                      const std::vector<modelplug::ModelPrediction>& predictions, std::size_t m);

/// The five rendered steps of the detection chain.
struct CotBlock {
  std::string target_id;
  std::array<std::string, taxonomy::kStepCount> steps;
  std::string guidance_source;

  std::string render() const;
};

/// Placeholder values derived from the target and its key.
std::string render_step(std::string_view step, const corpus::FunctionRecord& target,
                        const taxonomy::QueryKey& key);

/// Sends one prompt to an LLM and returns its reply text.
using ChatFn = std::function<std::string(const std::string& prompt)>;

enum class CompletionMode { kOffline, kLive };

/// Offline: pure placeholder substitution. Live: one LLM call expands the
/// substituted guidance; a reply missing any step heading is retried once,
/// then the offline rendering is used.
class CotCompleter {
 public:
  static CotCompleter offline() { return CotCompleter(nullptr); }
  static CotCompleter live(ChatFn chat) { return CotCompleter(std::move(chat)); }

  CompletionMode mode() const { return chat_ ? CompletionMode::kLive : CompletionMode::kOffline; }

  CotBlock complete(const taxonomy::CotGuidance& guidance, const corpus::FunctionRecord& target,
                    const taxonomy::QueryKey& key) const;

 private:
  explicit CotCompleter(ChatFn chat) : chat_(std::move(chat)) {}
  ChatFn chat_;
};

/// Splits a reply into the five headed steps; nullopt if any heading is
/// missing or out of order.
std::optional<std::array<std::string, taxonomy::kStepCount>> split_steps(std::string_view text);

/// Rough token estimate (4 bytes per token, rounded up).
std::size_t estimate_tokens(std::string_view text);

struct DlapPrompt {
  IclBlock icl;
  CotBlock cot;
  std::string target_id;
  std::string target_code;
  std::string instruction;
  std::size_t token_estimate = 0;
  std::size_t trimmed_candidates = 0;

  /// ICL, COT, target, instruction, in that order.
  std::string text() const;
};

/// token_budget == 0 disables trimming; otherwise the longest candidates are
/// dropped until the prompt fits (or no candidates remain).
DlapPrompt assemble_dlap(IclBlock icl, CotBlock cot, const corpus::FunctionRecord& target,
                         std::size_t token_budget = 0);

enum class BaselineKind { kRole, kAuxiliary, kCot2Step };

const char* to_string(BaselineKind kind);
BaselineKind baseline_from_string(std::string_view s);

/// Baseline prompt(s) with slots substituted; two prompts for kCot2Step.
/// `aux` is required iff kind == kAuxiliary.
std::vector<std::string> render_baseline(BaselineKind kind, std::string_view code,
                                         std::optional<std::string_view> aux = std::nullopt);

/// Per-line def/use summary ("line N: defines a; uses b, c; calls f").
std::string summarize_dataflow(std::string_view source, std::size_t max_chars = 2000);

}  // namespace dlap::promptgen
