#include "dlap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iterator>
#include <mutex>
#include <set>
#include <thread>

#include "dlap/defaults.hpp"
#include "dlap/error.hpp"
#include "dlap/hashing.hpp"
#include "dlap/staticscan.hpp"
#include "dlap/taxonomy.hpp"
#include "dlap/version.hpp"

namespace dlap::eval {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::kFormat, "run config: " + where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::kFormat, "run config: unknown key \"" + key + "\" in " + where);
}

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty() || base.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. On failure, the
// error of the lowest failing index is rethrown so aborts are deterministic.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto body = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
        stop = true;
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  }
  if (failure) std::rethrow_exception(failure);
}

template <typename Fn>
auto at_stage(const std::string& id, const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), "sample \"" + id + "\" failed at stage " + stage + ": " + e.what());
  }
}

std::string safe_file_name(const std::string& id) {
  std::string out;
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
  if (out != id || out.empty() || out[0] == '.') out += "-" + sha256_hex(id).substr(0, 8);
  return out;
}

}  // namespace

const char* to_string(PromptMode mode) {
  switch (mode) {
    case PromptMode::kDlap: return "dlap";
    case PromptMode::kRole: return "role";
    case PromptMode::kAuxiliary: return "auxiliary";
    case PromptMode::kCot2Step: return "cot2step";
  }
  return "?";
}

PromptMode prompt_mode_from_string(std::string_view s) {
  if (s == "dlap") return PromptMode::kDlap;
  if (s == "role") return PromptMode::kRole;
  if (s == "auxiliary") return PromptMode::kAuxiliary;
  if (s == "cot2step") return PromptMode::kCot2Step;
  throw Error(ErrorCode::kInvalidArgument, "unknown prompt mode \"" + std::string(s) + "\"");
}

// ---- config --------------------------------------------------------------

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base) {
  RunConfig c;
  try {
    check_keys(j, {"corpus", "seed", "undersample_ratio", "train_fraction", "index", "provider",
                   "taxonomy", "static", "prompt", "llm", "unparseable_as_positive"},
               "top level");
    c.corpus_path = resolve(base, j.at("corpus").get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("undersample_ratio"))
      c.undersample_ratio = j["undersample_ratio"].is_null()
                                ? std::nullopt
                                : std::optional<double>(j["undersample_ratio"].get<double>());
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.unparseable_as_positive = j.value("unparseable_as_positive", false);

    if (const auto it = j.find("index"); it != j.end()) {
      check_keys(*it, {"path", "shingle", "slots", "bands", "rows", "seed"}, "index");
      c.index_path = resolve(base, it->value("path", ""));
      c.index.shingle = it->value("shingle", c.index.shingle);
      c.index.slots = it->value("slots", c.index.slots);
      c.index.bands = it->value("bands", c.index.bands);
      c.index.rows = it->value("rows", c.index.rows);
      c.index.seed = it->value("seed", c.index.seed);
    }
    if (const auto it = j.find("provider"); it != j.end()) {
      check_keys(*it, {"kind", "location", "threshold", "max_in_flight", "timeout_ms", "training"},
                 "provider");
      auto& p = c.provider;
      p.kind = modelplug::provider_kind_from_string(it->value("kind", "builtin"));
      p.location = it->value("location", "");
      if (p.kind != modelplug::ProviderKind::kHttp) p.location = resolve(base, p.location);
      p.threshold = it->value("threshold", p.threshold);
      p.max_in_flight = it->value("max_in_flight", p.max_in_flight);
      p.timeout_ms = it->value("timeout_ms", p.timeout_ms);
      if (const auto t = it->find("training"); t != it->end()) {
        check_keys(*t, {"seed", "epochs", "learning_rate", "l2"}, "provider.training");
        c.training.seed = t->value("seed", c.training.seed);
        c.training.epochs = t->value("epochs", c.training.epochs);
        c.training.learning_rate = t->value("learning_rate", c.training.learning_rate);
        c.training.l2 = t->value("l2", c.training.l2);
      }
    }
    if (const auto it = j.find("taxonomy"); it != j.end()) {
      check_keys(*it, {"library", "mapping"}, "taxonomy");
      c.library_path = resolve(base, it->value("library", ""));
      c.mapping_path = resolve(base, it->value("mapping", ""));
    }
    if (const auto it = j.find("static"); it != j.end()) {
      check_keys(*it, {"findings", "function_map"}, "static");
      c.findings_path = resolve(base, it->value("findings", ""));
      c.function_map_path = resolve(base, it->value("function_map", ""));
    }
    if (const auto it = j.find("prompt"); it != j.end()) {
      check_keys(*it, {"mode", "icl_size", "top_k", "token_budget", "cot_completion"}, "prompt");
      c.mode = prompt_mode_from_string(it->value("mode", "dlap"));
      c.icl_size = it->value("icl_size", c.icl_size);
      c.top_k = it->value("top_k", c.top_k);
      c.token_budget = it->value("token_budget", c.token_budget);
      const auto completion = it->value("cot_completion", "offline");
      if (completion == "offline") c.cot_completion = promptgen::CompletionMode::kOffline;
      else if (completion == "live") c.cot_completion = promptgen::CompletionMode::kLive;
      else throw Error(ErrorCode::kFormat, "run config: cot_completion must be offline or live");
    }
    if (const auto it = j.find("llm"); it != j.end()) {
      check_keys(*it, {"transport", "script", "endpoint", "model", "temperature", "max_tokens",
                       "timeout_ms", "max_in_flight", "requests_per_second", "retry", "api_key_env"},
                 "llm");
      auto& l = c.llm;
      const auto transport = it->value("transport", "mock");
      if (transport == "mock") l.transport = llm::TransportKind::kMock;
      else if (transport == "live") l.transport = llm::TransportKind::kLive;
      else throw Error(ErrorCode::kFormat, "run config: llm.transport must be mock or live");
      l.mock_script = resolve(base, it->value("script", ""));
      l.endpoint = it->value("endpoint", l.endpoint);
      l.model = it->value("model", l.model);
      l.temperature = it->value("temperature", l.temperature);
      l.max_tokens = it->value("max_tokens", l.max_tokens);
      l.timeout = std::chrono::milliseconds(it->value("timeout_ms", static_cast<long>(l.timeout.count())));
      l.max_in_flight = it->value("max_in_flight", l.max_in_flight);
      l.requests_per_second = it->value("requests_per_second", l.requests_per_second);
      l.api_key_env = it->value("api_key_env", l.api_key_env);
      if (const auto r = it->find("retry"); r != it->end()) {
        check_keys(*r, {"max_attempts", "backoff_base_ms", "backoff_cap_ms"}, "llm.retry");
        l.retry.max_attempts = r->value("max_attempts", l.retry.max_attempts);
        l.retry.backoff_base = std::chrono::milliseconds(
            r->value("backoff_base_ms", static_cast<long>(l.retry.backoff_base.count())));
        l.retry.backoff_cap = std::chrono::milliseconds(
            r->value("backoff_cap_ms", static_cast<long>(l.retry.backoff_cap.count())));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("run config: ") + e.what());
  }
  if (c.icl_size == 0) throw Error(ErrorCode::kInvalidArgument, "run config: icl_size must be >= 1");
  if (c.top_k == 0) throw Error(ErrorCode::kInvalidArgument, "run config: top_k must be >= 1");
  c.index.validate();
  c.provider.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
  return from_json(j, std::filesystem::absolute(path).parent_path());
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["corpus"] = corpus_path;
  j["seed"] = seed;
  j["undersample_ratio"] = undersample_ratio ? ordered_json(*undersample_ratio) : ordered_json(nullptr);
  j["train_fraction"] = train_fraction;
  j["index"] = {{"path", index_path}, {"shingle", index.shingle}, {"slots", index.slots},
                {"bands", index.bands}, {"rows", index.rows}, {"seed", index.seed}};
  j["provider"] = {{"kind", modelplug::to_string(provider.kind)},
                   {"location", provider.location},
                   {"threshold", provider.threshold},
                   {"max_in_flight", provider.max_in_flight},
                   {"timeout_ms", provider.timeout_ms},
                   {"training",
                    {{"seed", training.seed},
                     {"epochs", training.epochs},
                     {"learning_rate", training.learning_rate},
                     {"l2", training.l2}}}};
  j["taxonomy"] = {{"library", library_path}, {"mapping", mapping_path}};
  j["static"] = {{"findings", findings_path}, {"function_map", function_map_path}};
  j["prompt"] = {{"mode", to_string(mode)},
                 {"icl_size", icl_size},
                 {"top_k", top_k},
                 {"token_budget", token_budget},
                 {"cot_completion",
                  cot_completion == promptgen::CompletionMode::kLive ? "live" : "offline"}};
  j["llm"] = {{"transport", llm.transport == llm::TransportKind::kLive ? "live" : "mock"},
              {"script", llm.mock_script},
              {"endpoint", llm.endpoint},
              {"model", llm.model},
              {"temperature", llm.temperature},
              {"max_tokens", llm.max_tokens},
              {"timeout_ms", llm.timeout.count()},
              {"max_in_flight", llm.max_in_flight},
              {"requests_per_second", llm.requests_per_second},
              {"retry",
               {{"max_attempts", llm.retry.max_attempts},
                {"backoff_base_ms", llm.retry.backoff_base.count()},
                {"backoff_cap_ms", llm.retry.backoff_cap.count()}}},
              {"api_key_env", llm.api_key_env}};
  j["unparseable_as_positive"] = unparseable_as_positive;
  return j;
}

// ---- results -------------------------------------------------------------

std::string results_to_jsonl(const std::vector<SampleResult>& results) {
  std::string out;
  for (const auto& r : results) {
    ordered_json j;
    j["id"] = r.id;
    j["project"] = r.project;
    j["label"] = r.vulnerable ? 1 : 0;
    j["mode"] = r.mode;
    j["prompt_hash"] = r.prompt_hash;
    j["decision"] = llm::to_string(r.decision);
    j["explanation"] = r.explanation;
    j["response"] = r.response;
    j["attempts"] = r.attempts;
    j["prompt_tokens"] = r.prompt_tokens;
    j["completion_tokens"] = r.completion_tokens;
    j["provider_probability"] =
        r.provider_probability ? ordered_json(*r.provider_probability) : ordered_json(nullptr);
    j["query_key"] = r.query_key;
    out += j.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

std::vector<SampleResult> results_from_jsonl(std::string_view text, const std::string& origin) {
  std::vector<SampleResult> out;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = json::parse(line);
      SampleResult r;
      r.id = j.at("id").get<std::string>();
      r.project = j.value("project", "");
      r.vulnerable = j.at("label").get<int>() == 1;
      r.mode = j.value("mode", "");
      r.prompt_hash = j.value("prompt_hash", "");
      const auto d = j.at("decision").get<std::string>();
      if (d == "yes") r.decision = llm::Decision::kYes;
      else if (d == "no") r.decision = llm::Decision::kNo;
      else if (d == "unparseable") r.decision = llm::Decision::kUnparseable;
      else throw Error(ErrorCode::kFormat, "unknown decision \"" + d + "\"");
      r.explanation = j.value("explanation", "");
      r.response = j.value("response", "");
      r.attempts = j.value("attempts", 0);
      r.prompt_tokens = j.value("prompt_tokens", 0L);
      r.completion_tokens = j.value("completion_tokens", 0L);
      if (j.contains("provider_probability") && !j["provider_probability"].is_null())
        r.provider_probability = j["provider_probability"].get<double>();
      r.query_key = j.value("query_key", "");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat, origin + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kFormat, origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

MetricsReport score_results(const std::vector<SampleResult>& results, bool unparseable_as_positive) {
  std::vector<llm::Decision> decisions;
  std::vector<bool> labels;
  std::uint64_t unparseable = 0;
  for (const auto& r : results) {
    decisions.push_back(r.decision);
    labels.push_back(r.vulnerable);
    unparseable += r.decision == llm::Decision::kUnparseable;
  }
  return make_report(confusion(decisions, labels, unparseable_as_positive), unparseable);
}

ordered_json metrics_to_json(const MetricsReport& m) {
  ordered_json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["fpr"] = m.fpr;
  j["mcc"] = m.mcc;
  j["counts"] = {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"tn", m.counts.tn}, {"fn", m.counts.fn}};
  j["unparseable"] = m.unparseable;
  j["notes"] = m.notes;
  return j;
}

// ---- pipeline ------------------------------------------------------------

struct Pipeline::State {
  corpus::Corpus full;
  std::size_t after_undersample = 0;
  corpus::DatasetSplit split;
  std::unique_ptr<modelplug::Provider> provider;
  std::optional<simindex::LshIndex> index;
  std::optional<taxonomy::CotLibrary> library;
  std::string library_sha;
  staticscan::ScanMapping mapping;
  std::string mapping_sha;
  std::optional<staticscan::FindingIndex> findings;
  std::string findings_sha;
  std::shared_ptr<llm::LlmClient> client;
  std::mutex client_mu;
  std::string started_at;

  std::shared_ptr<llm::LlmClient> llm_client(const RunConfig& c,
                                             const std::shared_ptr<llm::ChatTransport>& transport) {
    std::lock_guard lock(client_mu);
    if (!client)
      client = transport ? std::make_shared<llm::LlmClient>(c.llm, transport)
                         : std::make_shared<llm::LlmClient>(c.llm);
    return client;
  }
};

Pipeline::Pipeline(RunConfig config, std::shared_ptr<llm::ChatTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

Pipeline::~Pipeline() = default;

void Pipeline::setup() {
  if (state_) return;
  auto s = std::make_unique<State>();
  s->started_at = utc_now();
  s->full = corpus::load_corpus(config_.corpus_path);
  corpus::Corpus working = config_.undersample_ratio
                               ? corpus::undersample(s->full, *config_.undersample_ratio, config_.seed)
                               : s->full;
  s->after_undersample = working.size();
  s->split = corpus::split(working, config_.train_fraction, config_.seed);

  if (config_.mode == PromptMode::kDlap) {
    s->provider = modelplug::make_provider(config_.provider, &s->split.train, config_.training);
    if (!config_.index_path.empty()) {
      s->index = simindex::LshIndex::load(config_.index_path);
    } else {
      std::vector<simindex::LshIndex::Entry> entries;
      for (const auto& r : s->split.train.records()) entries.emplace_back(r.id, r.source);
      s->index = simindex::LshIndex::build(entries, config_.index);
    }
    const std::string lib_text = config_.library_path.empty()
                                     ? std::string(defaults::cot_library_yaml())
                                     : read_file(config_.library_path);
    s->library = taxonomy::CotLibrary::parse(
        lib_text, config_.library_path.empty() ? "<default library>" : config_.library_path);
    s->library_sha = sha256_hex(lib_text);
    const std::string map_text = config_.mapping_path.empty()
                                     ? std::string(defaults::scan_mapping_yaml())
                                     : read_file(config_.mapping_path);
    s->mapping = staticscan::ScanMapping::parse(
        map_text, config_.mapping_path.empty() ? "<default mapping>" : config_.mapping_path);
    s->mapping_sha = sha256_hex(map_text);

    std::vector<staticscan::StaticFinding> findings;
    if (!config_.findings_path.empty()) {
      const auto text = read_file(config_.findings_path);
      findings = staticscan::findings_from_jsonl(text, config_.findings_path);
      s->findings_sha = sha256_hex(text);
    }
    std::map<std::string, staticscan::FunctionSpan> spans;
    if (!config_.function_map_path.empty())
      spans = staticscan::FindingIndex::load_spans(config_.function_map_path);
    s->findings.emplace(std::move(findings), std::move(spans));
  }
  state_ = std::move(s);
}

PreparedPrompt Pipeline::prepare_one(const corpus::FunctionRecord& target) const {
  PreparedPrompt p;
  p.id = target.id;
  p.project = target.project;
  p.vulnerable = target.vulnerable();
  auto& s = *state_;

  switch (config_.mode) {
    case PromptMode::kDlap: {
      auto icl = at_stage(target.id, "icl", [&] {
        const auto sig = simindex::signature_of(target.source, s.index->params());
        auto hits = s.index->query(sig, config_.icl_size);
        if (hits.size() < config_.icl_size) {
          for (auto& c : s.index->nearest(sig, config_.icl_size))
            if (std::none_of(hits.begin(), hits.end(), [&](const auto& h) { return h.id == c.id; }))
              hits.push_back(std::move(c));
          std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
            return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
          });
          hits.resize(std::min(hits.size(), config_.icl_size));
        }
        std::vector<promptgen::CandidateRef> candidates;
        std::vector<const corpus::FunctionRecord*> records;
        for (const auto& hit : hits) {
          const auto* r = s.split.train.find(hit.id);
          if (r == nullptr)
            throw Error(ErrorCode::kNotFound,
                        "index entry \"" + hit.id + "\" is not in the training split");
          candidates.push_back({r, hit.similarity});
          records.push_back(r);
        }
        const auto predictions = s.provider->predict_batch(records);
        return promptgen::assemble_icl(target.id, candidates, predictions, config_.icl_size);
      });
      const auto prediction = at_stage(target.id, "predict", [&] { return s.provider->predict(target); });
      const auto key = at_stage(target.id, "static", [&] {
        const auto scores = staticscan::map_to_taxonomy(s.findings->for_function(target.id),
                                                        s.mapping, *s.library);
        return taxonomy::build_query_key(staticscan::top_k(scores, config_.top_k), prediction);
      });
      auto cot = at_stage(target.id, "cot", [&] {
        const auto& guidance = taxonomy::retrieve_guidance(*s.library, key);
        if (config_.cot_completion == promptgen::CompletionMode::kLive) {
          auto client = s.llm_client(config_, transport_);
          return promptgen::CotCompleter::live([client](const std::string& prompt) {
                   return client->chat({{"user", prompt}}).text;
                 }).complete(guidance, target, key);
        }
        return promptgen::CotCompleter::offline().complete(guidance, target, key);
      });
      const auto prompt = at_stage(target.id, "assemble", [&] {
        return promptgen::assemble_dlap(std::move(icl), std::move(cot), target, config_.token_budget);
      });
      p.turns = {prompt.text()};
      p.prediction = prediction;
      p.query_key = key.serialize();
      p.token_estimate = prompt.token_estimate;
      break;
    }
    case PromptMode::kRole:
      p.turns = promptgen::render_baseline(promptgen::BaselineKind::kRole, target.source);
      break;
    case PromptMode::kAuxiliary: {
      const auto flow = promptgen::summarize_dataflow(target.source);
      p.turns = promptgen::render_baseline(promptgen::BaselineKind::kAuxiliary, target.source,
                                           std::string_view(flow));
      break;
    }
    case PromptMode::kCot2Step:
      p.turns = promptgen::render_baseline(promptgen::BaselineKind::kCot2Step, target.source);
      break;
  }
  if (p.token_estimate == 0)
    for (const auto& t : p.turns) p.token_estimate += promptgen::estimate_tokens(t);
  p.first_hash = llm::prompt_hash(llm::detection_messages(p.turns.front()));
  return p;
}

std::vector<PreparedPrompt> Pipeline::prepare() {
  setup();
  std::vector<const corpus::FunctionRecord*> targets;
  for (const auto& r : state_->split.test.records()) targets.push_back(&r);
  std::sort(targets.begin(), targets.end(),
            [](const auto* a, const auto* b) { return a->id < b->id; });
  std::vector<PreparedPrompt> prompts(targets.size());
  parallel_for(targets.size(), config_.llm.max_in_flight,
               [&](std::size_t i) { prompts[i] = prepare_one(*targets[i]); });
  return prompts;
}

RunOutput Pipeline::run() {
  auto prompts = prepare();
  auto client = state_->llm_client(config_, transport_);

  RunOutput out;
  out.results.resize(prompts.size());
  parallel_for(prompts.size(), config_.llm.max_in_flight, [&](std::size_t i) {
    const auto& p = prompts[i];
    auto& r = out.results[i];
    r.id = p.id;
    r.project = p.project;
    r.vulnerable = p.vulnerable;
    r.mode = to_string(config_.mode);
    r.prompt_hash = p.first_hash;
    r.query_key = p.query_key;
    if (p.prediction) r.provider_probability = p.prediction->probability;
    const auto responses = at_stage(p.id, "detect", [&] {
      if (p.turns.size() == 1) return std::vector<llm::LlmResponse>{client->detect(p.turns.front())};
      return client->converse(p.turns);
    });
    for (const auto& resp : responses) {
      r.attempts += resp.attempts;
      r.prompt_tokens += resp.usage.prompt;
      r.completion_tokens += resp.usage.completion;
    }
    const auto verdict = llm::parse_verdict(responses.back());
    r.decision = verdict.decision;
    r.explanation = verdict.explanation;
    r.response = responses.back().text;
  });

  out.metrics = score_results(out.results, config_.unparseable_as_positive);

  if (config_.mode == PromptMode::kDlap) {
    std::vector<bool> predicted, actual;
    std::vector<double> probs;
    for (const auto& p : prompts) {
      predicted.push_back(p.prediction->vulnerable);
      actual.push_back(p.vulnerable);
      probs.push_back(p.prediction->probability);
    }
    out.provider_metrics = make_report(confusion(predicted, actual));
    try {
      out.provider_cv = cv(probs);
    } catch (const Error&) {
      out.provider_cv.reset();
    }
  }

  auto& s = *state_;
  ordered_json m;
  m["tool"] = "dlap";
  m["version"] = DLAP_VERSION_STRING;
  m["config"] = config_.to_json();
  m["seeds"] = {{"split", config_.seed}, {"index", config_.index.seed}, {"training", config_.training.seed}};
  ordered_json inputs;
  inputs["corpus_sha256"] = s.full.content_hash();
  inputs["train_sha256"] = s.split.train.content_hash();
  inputs["test_sha256"] = s.split.test.content_hash();
  if (s.library) inputs["library"] = {{"version", s.library->version()}, {"sha256", s.library_sha}};
  if (!s.mapping_sha.empty()) inputs["mapping_sha256"] = s.mapping_sha;
  if (!s.findings_sha.empty()) inputs["findings_sha256"] = s.findings_sha;
  if (config_.llm.transport == llm::TransportKind::kMock && !config_.llm.mock_script.empty() && !transport_)
    inputs["mock_script_sha256"] = sha256_file(config_.llm.mock_script);
  m["inputs"] = inputs;
  m["provider"] = s.provider ? ordered_json(s.provider->id()) : ordered_json(nullptr);
  m["prompt_mode"] = to_string(config_.mode);
  m["counts"] = {{"corpus", s.full.size()},
                 {"after_undersample", s.after_undersample},
                 {"train", s.split.train.size()},
                 {"test", s.split.test.size()}};
  m["started_at"] = s.started_at;
  m["finished_at"] = utc_now();
  out.manifest = std::move(m);
  return out;
}

void write_run(const RunOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "results.jsonl", results_to_jsonl(out.results));
  ordered_json metrics;
  metrics["metrics"] = metrics_to_json(out.metrics);
  metrics["provider_metrics"] =
      out.provider_metrics ? metrics_to_json(*out.provider_metrics) : ordered_json(nullptr);
  metrics["provider_cv"] = out.provider_cv ? ordered_json(*out.provider_cv) : ordered_json(nullptr);
  write_file(dir / "metrics.json", metrics.dump(2) + "\n");
  write_file(dir / "manifest.json", out.manifest.dump(2) + "\n");
}

void write_prompts(const std::vector<PreparedPrompt>& prompts, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string index;
  std::set<std::string> used;
  for (const auto& p : prompts) {
    ordered_json j;
    j["id"] = p.id;
    j["project"] = p.project;
    j["label"] = p.vulnerable ? 1 : 0;
    j["prompt_hash"] = p.first_hash;
    j["query_key"] = p.query_key;
    j["provider_probability"] = p.prediction ? ordered_json(p.prediction->probability) : ordered_json(nullptr);
    j["provider_verdict"] = p.prediction ? ordered_json(p.prediction->vulnerable) : ordered_json(nullptr);
    j["token_estimate"] = p.token_estimate;
    j["turns"] = p.turns;
    index += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";

    std::string text;
    for (std::size_t t = 0; t < p.turns.size(); ++t) {
      if (t) text += "\n----- next turn -----\n";
      text += p.turns[t];
    }
    auto name = safe_file_name(p.id);
    if (!used.insert(name).second) throw Error(ErrorCode::kInternal, "prompt file name collision for " + p.id);
    write_file(dir / (name + ".txt"), text);
  }
  write_file(dir / "prompts.jsonl", index);
}

}  // namespace dlap::eval
