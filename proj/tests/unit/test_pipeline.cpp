#include <gtest/gtest.h>

#include <regex>
#include <set>

#include "dlap/error.hpp"
#include "dlap/pipeline.hpp"
#include "dlap/prompt_templates.hpp"
#include "dlap/report.hpp"
#include "dlap/staticscan.hpp"
#include "synthetic.hpp"
#include "workspace.hpp"

using namespace dlap;
using namespace dlap::eval;
using dlap::testing::TempDir;
using json = nlohmann::json;

namespace {

struct World {
  TempDir dir{"pipeline"};
  std::string corpus_path;
  std::string script_path;

  explicit World(std::size_t n = 50, std::uint64_t seed = 3) {
    corpus_path = dir.file("corpus.jsonl");
    corpus::save_corpus(dlap::testing::synthetic_corpus(n, seed), corpus_path);
    script_path = dir.write("script.json", "[]");
  }

  json config() const { return dlap::testing::dlap_config(corpus_path, script_path); }
  RunConfig run_config(const json& j) const { return RunConfig::from_json(j, dir.path()); }
};

// Test split computed the same way the pipeline does.
corpus::DatasetSplit expected_split(const std::string& corpus_path) {
  return corpus::split(corpus::undersample(corpus::load_corpus(corpus_path), 1.0, 7), 0.8, 7);
}

std::shared_ptr<llm::MockTransport> echo_transport(const RunConfig& cfg) {
  Pipeline dry(cfg, std::make_shared<llm::MockTransport>(std::map<std::string, std::string>{}));
  return std::make_shared<llm::MockTransport>(dlap::testing::echo_provider_script(dry.prepare()));
}

template <typename F>
Error error_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  return Error(ErrorCode::kInternal, "no error raised");
}

SampleResult result(std::string id, std::string mode, std::string project, bool vulnerable,
                    llm::Decision d) {
  SampleResult r;
  r.id = std::move(id);
  r.mode = std::move(mode);
  r.project = std::move(project);
  r.vulnerable = vulnerable;
  r.decision = d;
  return r;
}

}  // namespace

// ---- config ----------------------------------------------------------------

TEST(RunConfigTest, ParsesAndResolvesRelativePaths) {
  const json j = {{"corpus", "data/c.jsonl"},
                  {"undersample_ratio", nullptr},
                  {"index", {{"slots", 128}, {"bands", 32}, {"rows", 4}}},
                  {"provider", {{"kind", "file"}, {"location", "probs.json"}, {"threshold", 0.4}}},
                  {"static", {{"findings", "f.jsonl"}}},
                  {"prompt", {{"mode", "cot2step"}, {"icl_size", 5}}},
                  {"llm", {{"transport", "mock"}, {"script", "s.json"}, {"retry", {{"max_attempts", 2}}}}}};
  const auto c = RunConfig::from_json(j, "/base");
  EXPECT_EQ(c.corpus_path, "/base/data/c.jsonl");
  EXPECT_FALSE(c.undersample_ratio.has_value());
  EXPECT_EQ(c.index.slots, 128u);
  EXPECT_EQ(c.provider.kind, modelplug::ProviderKind::kFile);
  EXPECT_EQ(c.provider.location, "/base/probs.json");
  EXPECT_EQ(c.provider.threshold, 0.4);
  EXPECT_EQ(c.findings_path, "/base/f.jsonl");
  EXPECT_EQ(c.mode, PromptMode::kCot2Step);
  EXPECT_EQ(c.icl_size, 5u);
  EXPECT_EQ(c.top_k, 2u);
  EXPECT_EQ(c.llm.mock_script, "/base/s.json");
  EXPECT_EQ(c.llm.retry.max_attempts, 2);
  EXPECT_EQ(RunConfig::from_json({{"corpus", "/abs/c.jsonl"}}, "/base").corpus_path, "/abs/c.jsonl");
}

TEST(RunConfigTest, HttpLocationIsNotAPath) {
  const auto c = RunConfig::from_json(
      {{"corpus", "c"}, {"provider", {{"kind", "http"}, {"location", "http://127.0.0.1:9"}}}}, "/base");
  EXPECT_EQ(c.provider.location, "http://127.0.0.1:9");
}

TEST(RunConfigTest, RejectsBadConfigs) {
  auto code = [](const json& j) { return error_of([&] { RunConfig::from_json(j, "/b"); }).code(); };
  EXPECT_EQ(code({{"corpus", "c"}, {"bogus", 1}}), ErrorCode::kFormat);
  EXPECT_EQ(code({{"corpus", "c"}, {"prompt", {{"icl", 3}}}}), ErrorCode::kFormat);
  EXPECT_EQ(code(json::object()), ErrorCode::kFormat);
  EXPECT_EQ(code({{"corpus", "c"}, {"prompt", {{"icl_size", 0}}}}), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code({{"corpus", "c"}, {"prompt", {{"top_k", 0}}}}), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code({{"corpus", "c"}, {"prompt", {{"cot_completion", "maybe"}}}}), ErrorCode::kFormat);
  EXPECT_EQ(code({{"corpus", "c"}, {"prompt", {{"mode", "grace"}}}}), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code({{"corpus", "c"}, {"llm", {{"transport", "carrier-pigeon"}}}}), ErrorCode::kFormat);
  EXPECT_EQ(code({{"corpus", "c"}, {"index", {{"slots", 100}, {"bands", 3}, {"rows", 4}}}}),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code({{"corpus", 5}}), ErrorCode::kFormat);
}

TEST(RunConfigTest, SnapshotCarriesNoCredentials) {
  ::setenv("DLAP_SNAPSHOT_KEY", "sk-secret-value", 1);
  const auto c = RunConfig::from_json({{"corpus", "c"}, {"llm", {{"api_key_env", "DLAP_SNAPSHOT_KEY"}}}}, "/b");
  const auto dumped = c.to_json().dump();
  EXPECT_EQ(dumped.find("sk-secret-value"), std::string::npos);
  EXPECT_NE(dumped.find("DLAP_SNAPSHOT_KEY"), std::string::npos);
  ::unsetenv("DLAP_SNAPSHOT_KEY");
  // The snapshot parses back to the same snapshot.
  EXPECT_EQ(RunConfig::from_json(json::parse(dumped), "/b").to_json().dump(), dumped);
}

// ---- end to end ------------------------------------------------------------

TEST(PipelineRun, EchoingProviderVerdictReproducesProviderMetrics) {
  World w;
  const auto cfg = w.run_config(w.config());
  Pipeline pipeline(cfg, echo_transport(cfg));
  const auto out = pipeline.run();

  // Independent path: same split, freshly trained model, direct confusion.
  const auto split = expected_split(w.corpus_path);
  const auto model = modelplug::BuiltinClassifier::train(split.train, cfg.training);
  std::vector<bool> predicted, actual;
  for (const auto& r : split.test.records()) {
    predicted.push_back(model.predict_proba(r.source) >= cfg.provider.threshold);
    actual.push_back(r.vulnerable());
  }
  const auto independent = make_report(confusion(predicted, actual));

  ASSERT_TRUE(out.provider_metrics.has_value());
  EXPECT_EQ(out.metrics, *out.provider_metrics);
  EXPECT_EQ(out.metrics, independent);
  EXPECT_EQ(out.metrics.unparseable, 0u);
  EXPECT_TRUE(out.provider_cv.has_value());
  EXPECT_TRUE(std::isfinite(*out.provider_cv));
}

TEST(PipelineRun, ConservationAndCanonicalOrder) {
  World w;
  const auto cfg = w.run_config(w.config());
  const auto out = Pipeline(cfg, echo_transport(cfg)).run();
  const auto split = expected_split(w.corpus_path);
  ASSERT_EQ(out.results.size(), split.test.size());
  EXPECT_EQ(out.metrics.counts.total(), split.test.size());
  std::set<std::string> test_ids;
  for (const auto& r : split.test.records()) test_ids.insert(r.id);
  for (std::size_t i = 0; i < out.results.size(); ++i) {
    EXPECT_TRUE(test_ids.count(out.results[i].id));
    if (i) EXPECT_LT(out.results[i - 1].id, out.results[i].id);
    EXPECT_EQ(out.results[i].attempts, 1);
    EXPECT_EQ(out.results[i].mode, "dlap");
    EXPECT_TRUE(out.results[i].provider_probability.has_value());
    EXPECT_EQ(out.results[i].query_key.rfind("{categories:[", 0), 0u);
  }
  EXPECT_EQ(out.manifest["counts"]["test"], split.test.size());
  EXPECT_EQ(out.manifest["counts"]["train"], split.train.size());
  EXPECT_EQ(out.manifest["prompt_mode"], "dlap");
  EXPECT_EQ(out.manifest["inputs"]["library"]["version"], "1.0-default");
  EXPECT_EQ(out.manifest["inputs"]["test_sha256"], split.test.content_hash());
}

TEST(PipelineRun, RepeatedRunsAreByteIdentical) {
  World w;
  const auto cfg = w.run_config(w.config());
  const auto transport = echo_transport(cfg);
  TempDir out_dir("pipeline_out");
  for (const char* name : {"a", "b"}) {
    Pipeline p(cfg, transport);
    write_prompts(p.prepare(), out_dir.path() / name / "prompts");
    write_run(p.run(), out_dir.path() / name / "run");
  }
  for (const char* file : {"run/results.jsonl", "run/metrics.json", "prompts/prompts.jsonl"})
    EXPECT_EQ(dlap::testing::slurp(out_dir.path() / "a" / file),
              dlap::testing::slurp(out_dir.path() / "b" / file))
        << file;
  std::size_t txt = 0;
  for (const auto& e : std::filesystem::directory_iterator(out_dir.path() / "a" / "prompts")) {
    if (e.path().extension() != ".txt") continue;
    ++txt;
    EXPECT_EQ(dlap::testing::slurp(e.path()),
              dlap::testing::slurp(out_dir.path() / "b" / "prompts" / e.path().filename()));
  }
  EXPECT_EQ(txt, 10u);
}

TEST(PipelineRun, EveryDlapPromptHasTheFourSections) {
  World w;
  const auto prompts = Pipeline(w.run_config(w.config())).prepare();
  ASSERT_EQ(prompts.size(), 10u);
  for (const auto& p : prompts) {
    ASSERT_EQ(p.turns.size(), 1u);
    const auto& t = p.turns[0];
    auto count = [&](std::string_view s) {
      std::size_t n = 0;
      for (auto pos = t.find(s); pos != std::string::npos; pos = t.find(s, pos + 1)) ++n;
      return n;
    };
    EXPECT_EQ(count(promptgen::templates::kIclMarker), 1u);
    EXPECT_EQ(count(promptgen::templates::kCotMarker), 1u);
    EXPECT_EQ(count(promptgen::templates::kTargetMarker), 1u);
    EXPECT_EQ(count(promptgen::templates::kInstructionMarker), 1u);
    EXPECT_EQ(count("A: Detection probability: "), 3u);
    for (auto h : promptgen::templates::kStepHeadings) EXPECT_EQ(count(h), 1u);
    EXPECT_EQ(p.first_hash, llm::prompt_hash(llm::detection_messages(t)));
  }
}

TEST(PipelineRun, ProviderMissingATestIdNamesItAndThePredictStage) {
  World w;
  const auto split = expected_split(w.corpus_path);
  json probs = json::object();
  for (const auto& r : split.train.records()) probs[r.id] = 0.5;
  const auto& records = split.test.records();
  std::vector<std::string> test_ids;
  for (const auto& r : records) test_ids.push_back(r.id);
  std::sort(test_ids.begin(), test_ids.end());
  for (std::size_t i = 1; i < test_ids.size(); ++i) probs[test_ids[i]] = 0.25;
  auto j = w.config();
  j["provider"] = {{"kind", "file"}, {"location", w.dir.write("probs.json", probs.dump())}};
  const auto e = error_of([&] { Pipeline(w.run_config(j)).prepare(); });
  const std::string msg = e.what();
  EXPECT_NE(msg.find("sample \"" + test_ids[0] + "\""), std::string::npos) << msg;
  EXPECT_NE(msg.find("stage predict"), std::string::npos) << msg;
}

TEST(PipelineRun, UnscriptedPromptFailsAtDetect) {
  World w;
  const auto e = error_of([&] { Pipeline(w.run_config(w.config())).run(); });
  EXPECT_EQ(e.code(), ErrorCode::kProtocol);
  EXPECT_NE(std::string(e.what()).find("stage detect"), std::string::npos);
}

TEST(PipelineRun, MissingCorpusIsIoError) {
  World w;
  auto j = w.config();
  j["corpus"] = w.dir.file("absent.jsonl");
  EXPECT_EQ(error_of([&] { Pipeline(w.run_config(j)).prepare(); }).code(), ErrorCode::kIo);
}

TEST(PipelineRun, StaticFindingsReachTheQueryKey) {
  World w;
  const auto split = expected_split(w.corpus_path);
  std::vector<std::string> test_ids;
  for (const auto& r : split.test.records()) test_ids.push_back(r.id);
  std::sort(test_ids.begin(), test_ids.end());
  const auto target = test_ids.front();

  staticscan::StaticFinding f;
  f.tool = staticscan::Tool::kCppcheck;
  f.rule_id = "nullPointer";
  f.severity = 5;
  f.file = "src/" + target + ".c";
  f.line = 3;
  auto j = w.config();
  j["static"] = {{"findings", w.dir.write("findings.jsonl", staticscan::findings_to_jsonl({f}))}};
  const auto prompts = Pipeline(w.run_config(j)).prepare();
  for (const auto& p : prompts) {
    if (p.id == target) {
      EXPECT_EQ(p.query_key.rfind("{categories:[IDN], refine:[CWE-476], dl:", 0), 0u) << p.query_key;
      EXPECT_NE(p.turns[0].find("NULL pointer dependency"), std::string::npos);
    } else {
      EXPECT_EQ(p.query_key.rfind("{categories:[], dl:", 0), 0u) << p.query_key;
    }
  }
}

TEST(PipelineRun, BaselineModesSkipProviderAndIndex) {
  World w;
  for (const char* mode : {"role", "auxiliary"}) {
    auto j = w.config();
    j["prompt"]["mode"] = mode;
    // A provider that cannot load proves baseline modes never touch it.
    j["provider"] = {{"kind", "file"}, {"location", w.dir.file("nope.json")}};
    const auto cfg = w.run_config(j);
    Pipeline dry(cfg);
    std::map<std::string, std::string> script;
    for (const auto& p : dry.prepare()) script[p.first_hash] = "No.";
    const auto out = Pipeline(cfg, std::make_shared<llm::MockTransport>(script)).run();
    EXPECT_EQ(out.results.size(), 10u);
    EXPECT_FALSE(out.provider_metrics.has_value());
    EXPECT_EQ(out.metrics.counts.tp + out.metrics.counts.fp, 0u);
    EXPECT_EQ(out.manifest["provider"], nullptr);
    for (const auto& r : out.results) EXPECT_EQ(r.mode, mode);
  }
}

TEST(PipelineRun, TwoStepBaselineConverses) {
  World w;
  auto j = w.config();
  j["prompt"]["mode"] = "cot2step";
  const auto cfg = w.run_config(j);
  const auto prompts = Pipeline(cfg).prepare();
  std::map<std::string, std::string> script;
  for (const auto& p : prompts) {
    ASSERT_EQ(p.turns.size(), 2u);
    std::vector<llm::ChatMessage> msgs = llm::detection_messages(p.turns[0]);
    script[llm::prompt_hash(msgs)] = "It copies input into a local buffer.";
    msgs.push_back({"assistant", "It copies input into a local buffer."});
    msgs.push_back({"user", p.turns[1]});
    script[llm::prompt_hash(msgs)] = p.vulnerable ? "Yes. Unbounded copy." : "It depends.";
  }
  const auto out = Pipeline(cfg, std::make_shared<llm::MockTransport>(script)).run();
  const auto split = expected_split(w.corpus_path);
  const auto counts = split.test.label_counts();
  EXPECT_EQ(out.metrics.counts.tp, counts.vulnerable);
  EXPECT_EQ(out.metrics.counts.tn, counts.benign);
  EXPECT_EQ(out.metrics.unparseable, counts.benign);
  for (const auto& r : out.results) EXPECT_EQ(r.attempts, 2);

  auto flipped = cfg;
  flipped.unparseable_as_positive = true;
  const auto out2 = Pipeline(flipped, std::make_shared<llm::MockTransport>(script)).run();
  EXPECT_EQ(out2.metrics.counts.fp, counts.benign);
}

// ---- results and reports ---------------------------------------------------

TEST(ResultsJsonl, RoundTrip) {
  World w;
  const auto cfg = w.run_config(w.config());
  const auto out = Pipeline(cfg, echo_transport(cfg)).run();
  const auto text = results_to_jsonl(out.results);
  EXPECT_EQ(results_from_jsonl(text), out.results);
  EXPECT_EQ(results_to_jsonl(results_from_jsonl(text)), text);
  const auto e = error_of([] { results_from_jsonl("{\"id\":\"a\",\"label\":1,\"decision\":\"maybe\"}\n", "r.jsonl"); });
  EXPECT_EQ(e.code(), ErrorCode::kFormat);
  EXPECT_NE(std::string(e.what()).find("r.jsonl:1"), std::string::npos);
}

TEST(ScoreResults, UnparseablePolicy) {
  const std::vector<SampleResult> rs = {result("a", "dlap", "p", true, llm::Decision::kUnparseable),
                                        result("b", "dlap", "p", false, llm::Decision::kUnparseable),
                                        result("c", "dlap", "p", true, llm::Decision::kYes)};
  const auto as_no = score_results(rs, false);
  EXPECT_EQ(as_no.counts, (ConfusionCounts{1, 0, 1, 1}));
  EXPECT_EQ(as_no.unparseable, 2u);
  const auto as_yes = score_results(rs, true);
  EXPECT_EQ(as_yes.counts, (ConfusionCounts{2, 1, 0, 0}));
}

TEST(Report, SingleRunOneRowFiveMetricColumns) {
  const std::vector<SampleResult> rs = {result("a", "dlap", "qemu", true, llm::Decision::kYes),
                                        result("b", "dlap", "qemu", false, llm::Decision::kYes),
                                        result("c", "dlap", "qemu", false, llm::Decision::kNo),
                                        result("d", "dlap", "qemu", true, llm::Decision::kNo)};
  const auto rows = aggregate(rs, false);
  ASSERT_EQ(rows.size(), 1u);
  const auto csv = render_report(rows, ReportFormat::kCsv);
  EXPECT_EQ(csv,
            "framework,project,precision_pct,recall_pct,f1_pct,fpr_pct,mcc_pct,unparseable_count\n"
            "dlap,qemu,50.0,50.0,50.0,50.0,0.0,0\n");
  const auto md = render_report(rows, ReportFormat::kMarkdown);
  EXPECT_NE(md.find("| Framework | Project | P_vul (%) | R_vul (%) | F1 (%) | FPR (%) | MCC (%) | Unparseable |"),
            std::string::npos);
  EXPECT_NE(md.find("| dlap | qemu | 50.0 | 50.0 | 50.0 | 50.0 | 0.0 | 0 |"), std::string::npos);
}

TEST(Report, CsvAndMarkdownCarryIdenticalNumbers) {
  std::vector<SampleResult> rs;
  std::mt19937_64 rng(41);
  const std::vector<std::string> modes = {"dlap", "role"}, projects = {"ffmpeg", "qemu", "linux"};
  for (int i = 0; i < 300; ++i) {
    const auto d = static_cast<llm::Decision>(rng() % 3);
    rs.push_back(result("s" + std::to_string(i), modes[rng() % 2], projects[rng() % 3], rng() % 2, d));
  }
  const auto rows = aggregate(rs, false);
  EXPECT_EQ(rows.size(), 6u);
  const auto csv = render_report(rows, ReportFormat::kCsv);
  const auto md = render_report(rows, ReportFormat::kMarkdown);

  std::vector<std::vector<std::string>> csv_rows, md_rows;
  std::istringstream cin(csv), min(md);
  std::string line;
  std::getline(cin, line);
  while (std::getline(cin, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    csv_rows.push_back(cells);
  }
  const std::regex md_row(R"(^\| (\w+) \| (\w+) \| ([-\d.]+) \| ([-\d.]+) \| ([-\d.]+) \| ([-\d.]+) \| ([-\d.]+) \| (\d+) \|$)");
  while (std::getline(min, line)) {
    std::smatch m;
    if (std::regex_match(line, m, md_row)) {
      std::vector<std::string> cells;
      for (std::size_t k = 1; k < m.size(); ++k) cells.push_back(m[k]);
      md_rows.push_back(cells);
    }
  }
  ASSERT_EQ(csv_rows.size(), 6u);
  EXPECT_EQ(csv_rows, md_rows);
  // Rows sorted by framework, then project.
  for (std::size_t i = 1; i < csv_rows.size(); ++i)
    EXPECT_LE(std::tie(csv_rows[i - 1][0], csv_rows[i - 1][1]), std::tie(csv_rows[i][0], csv_rows[i][1]));
}

TEST(Report, DuplicateIdInOneGroupIsRejected) {
  const std::vector<SampleResult> rs = {result("a", "dlap", "p", true, llm::Decision::kYes),
                                        result("a", "dlap", "p", true, llm::Decision::kYes)};
  EXPECT_THROW(aggregate(rs, false), Error);
  const std::vector<SampleResult> ok = {result("a", "dlap", "p", true, llm::Decision::kYes),
                                        result("a", "role", "p", true, llm::Decision::kYes)};
  EXPECT_EQ(aggregate(ok, false).size(), 2u);
}

TEST(Report, ZeroDenominatorNotesAreListed) {
  const auto rows = aggregate({result("a", "dlap", "p", false, llm::Decision::kNo)}, false);
  const auto md = render_report(rows, ReportFormat::kMarkdown);
  EXPECT_NE(md.find("Notes:"), std::string::npos);
  EXPECT_EQ(report_format_from_string("md"), ReportFormat::kMarkdown);
  EXPECT_EQ(report_format_from_string("csv"), ReportFormat::kCsv);
  EXPECT_THROW(report_format_from_string("html"), Error);
}

TEST(Report, LoadsRunDirectories) {
  World w;
  const auto cfg = w.run_config(w.config());
  const auto out = Pipeline(cfg, echo_transport(cfg)).run();
  TempDir d("report_load");
  write_run(out, d.path() / "run1");
  EXPECT_EQ(load_results({(d.path() / "run1").string()}), out.results);
  EXPECT_EQ(load_results({(d.path() / "run1" / "results.jsonl").string()}), out.results);
  EXPECT_THROW(load_results({(d.path() / "none").string()}), Error);
}
