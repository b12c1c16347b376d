// Command-line front end. Talks to the core exclusively through dlap.h.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dlap/dlap.h"

namespace {

struct CliFailure {
  dlap_status status;
};

void check(dlap_status st) {
  if (st != DLAP_OK) throw CliFailure{st};
}

struct CorpusHandle {
  dlap_corpus* p = nullptr;
  ~CorpusHandle() { dlap_corpus_free(p); }
};

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { dlap_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    std::fprintf(stderr, "error: cannot write %s\n", path.c_str());
    throw CliFailure{DLAP_ERR_IO};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vulnerability detection prompting toolkit"};
  app.set_version_flag("--version", std::string(dlap_version()));
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus, rebalance it and split train/test");
  std::string ingest_corpus, ingest_out, ingest_sources;
  double ingest_ratio = 1.0, ingest_fraction = 0.8;
  bool ingest_keep_all = false;
  std::uint64_t ingest_seed = 7;
  ingest->add_option("--corpus", ingest_corpus, "Corpus JSON-Lines file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out-dir", ingest_out, "Directory for train.jsonl and test.jsonl")->required();
  ingest->add_option("--undersample-ratio", ingest_ratio, "Benign records kept per vulnerable record")->capture_default_str();
  ingest->add_flag("--no-undersample", ingest_keep_all, "Keep every benign record");
  ingest->add_option("--train-fraction", ingest_fraction, "Share of records in the training split")->capture_default_str();
  ingest->add_option("--seed", ingest_seed, "Seed for undersampling and splitting")->capture_default_str();
  ingest->add_option("--export-sources", ingest_sources,
                     "Also write each test function to <dir>/<id>.c for the static analyzers");

  // index
  auto* index = app.add_subcommand("index", "Build a MinHash LSH index over a corpus");
  std::string index_corpus, index_out;
  dlap_index_params iparams = dlap_index_params_default();
  index->add_option("--corpus", index_corpus, "Corpus to index (normally train.jsonl)")->required()->check(CLI::ExistingFile);
  index->add_option("--out", index_out, "Index file to write")->required();
  index->add_option("--shingle", iparams.shingle, "Tokens per shingle")->capture_default_str();
  index->add_option("--slots", iparams.slots, "Signature length")->capture_default_str();
  index->add_option("--bands", iparams.bands, "LSH bands")->capture_default_str();
  index->add_option("--rows", iparams.rows, "Rows per band")->capture_default_str();
  index->add_option("--seed", iparams.seed, "Hash family seed")->capture_default_str();

  // train-model
  auto* train = app.add_subcommand("train-model", "Train the builtin probability model");
  std::string train_corpus, train_out;
  std::uint64_t train_seed = 7;
  std::size_t train_epochs = 300;
  double train_lr = 1.0, train_l2 = 1e-4;
  train->add_option("--corpus", train_corpus, "Training corpus")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Model file to write")->required();
  train->add_option("--seed", train_seed, "Initialization seed")->capture_default_str();
  train->add_option("--epochs", train_epochs, "Gradient descent epochs")->capture_default_str();
  train->add_option("--learning-rate", train_lr, "Step size")->capture_default_str();
  train->add_option("--l2", train_l2, "L2 penalty")->capture_default_str();

  // scan-import
  auto* scan = app.add_subcommand("scan-import", "Convert analyzer reports to canonical findings");
  std::string scan_ff, scan_cc, scan_out;
  scan->add_option("--flawfinder", scan_ff, "Flawfinder --csv report")->check(CLI::ExistingFile);
  scan->add_option("--cppcheck", scan_cc, "Cppcheck --xml-version=2 report")->check(CLI::ExistingFile);
  scan->add_option("--out", scan_out, "Findings JSON-Lines file to write")->required();

  // taxonomy check
  auto* taxonomy = app.add_subcommand("taxonomy", "Inspect the COT knowledge library");
  taxonomy->require_subcommand(1);
  auto* tax_check = taxonomy->add_subcommand("check", "Validate the library and mapping completeness");
  std::string tax_library, tax_mapping;
  tax_check->add_option("--library", tax_library, "Library YAML (default: shipped)")->check(CLI::ExistingFile);
  tax_check->add_option("--mapping", tax_mapping, "Scan mapping YAML (default: shipped)")->check(CLI::ExistingFile);

  // prompt dump
  auto* prompt = app.add_subcommand("prompt", "Prompt utilities");
  prompt->require_subcommand(1);
  auto* dump = prompt->add_subcommand("dump", "Write every test-sample prompt without calling the LLM");
  std::string dump_config, dump_out;
  dump->add_option("--config", dump_config, "Run config JSON")->required()->check(CLI::ExistingFile);
  dump->add_option("--out-dir", dump_out, "Directory for prompt files")->required();

  // run
  auto* run = app.add_subcommand("run", "Run detection end to end and score it");
  std::string run_config, run_out;
  run->add_option("--config", run_config, "Run config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out-dir", run_out, "Directory for results, metrics and manifest")->required();

  // report
  auto* report = app.add_subcommand("report", "Tabulate one or more runs");
  std::vector<std::string> report_inputs;
  std::string report_format = "markdown", report_out;
  bool report_unparseable_positive = false;
  report->add_option("results", report_inputs, "results.jsonl files or run directories")->required();
  report->add_option("--format", report_format, "markdown or csv")->capture_default_str()
      ->check(CLI::IsMember({"markdown", "csv"}));
  report->add_flag("--unparseable-as-positive", report_unparseable_positive,
                   "Count unparseable verdicts as vulnerable");
  report->add_option("--out", report_out, "Write the table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      CorpusHandle full, balanced, tr, te;
      check(dlap_corpus_load(ingest_corpus.c_str(), &full.p));
      const dlap_corpus* working = full.p;
      if (!ingest_keep_all) {
        check(dlap_corpus_undersample(full.p, ingest_ratio, ingest_seed, &balanced.p));
        working = balanced.p;
      }
      check(dlap_corpus_split(working, ingest_fraction, ingest_seed, &tr.p, &te.p));
      std::filesystem::create_directories(ingest_out);
      const std::string train_path = ingest_out + "/train.jsonl", test_path = ingest_out + "/test.jsonl";
      check(dlap_corpus_save(tr.p, train_path.c_str()));
      check(dlap_corpus_save(te.p, test_path.c_str()));
      if (!ingest_sources.empty()) check(dlap_corpus_export_sources(te.p, ingest_sources.c_str()));
      size_t v = 0, b = 0, tv = 0, tb = 0, ev = 0, eb = 0;
      check(dlap_corpus_label_counts(full.p, &v, &b));
      check(dlap_corpus_label_counts(tr.p, &tv, &tb));
      check(dlap_corpus_label_counts(te.p, &ev, &eb));
      std::printf("loaded %zu records (%zu vulnerable, %zu benign)\n", v + b, v, b);
      std::printf("train %zu (%zu vulnerable), test %zu (%zu vulnerable)\n", tv + tb, tv, ev + eb, ev);
    } else if (*index) {
      CorpusHandle c;
      check(dlap_corpus_load(index_corpus.c_str(), &c.p));
      dlap_index* idx = nullptr;
      check(dlap_index_build(c.p, &iparams, &idx));
      std::unique_ptr<dlap_index, void (*)(dlap_index*)> guard(idx, dlap_index_free);
      check(dlap_index_save(idx, index_out.c_str()));
      size_t n = 0;
      check(dlap_index_size(idx, &n));
      std::printf("indexed %zu functions into %s\n", n, index_out.c_str());
    } else if (*train) {
      CorpusHandle c;
      check(dlap_corpus_load(train_corpus.c_str(), &c.p));
      dlap_model* model = nullptr;
      check(dlap_model_train(c.p, train_seed, train_epochs, train_lr, train_l2, &model));
      std::unique_ptr<dlap_model, void (*)(dlap_model*)> guard(model, dlap_model_free);
      check(dlap_model_save(model, train_out.c_str()));
      OwnedString fp;
      check(dlap_model_fingerprint(model, &fp.p));
      std::printf("model %s written to %s\n", fp.str().c_str(), train_out.c_str());
    } else if (*scan) {
      size_t count = 0;
      check(dlap_scan_import(scan_ff.empty() ? nullptr : scan_ff.c_str(),
                             scan_cc.empty() ? nullptr : scan_cc.c_str(), scan_out.c_str(), &count));
      std::printf("%zu findings written to %s\n", count, scan_out.c_str());
    } else if (*tax_check) {
      OwnedString summary;
      const auto st = dlap_taxonomy_check(tax_library.empty() ? nullptr : tax_library.c_str(),
                                          tax_mapping.empty() ? nullptr : tax_mapping.c_str(), &summary.p);
      if (summary.p) std::printf("%s\n", summary.p);
      check(st);
    } else if (*dump) {
      size_t count = 0;
      check(dlap_prompt_dump(dump_config.c_str(), dump_out.c_str(), &count));
      std::printf("%zu prompts written to %s\n", count, dump_out.c_str());
    } else if (*run) {
      OwnedString summary;
      check(dlap_run(run_config.c_str(), run_out.c_str(), &summary.p));
      std::printf("%s\n", summary.p);
    } else if (*report) {
      std::vector<const char*> paths;
      for (const auto& p : report_inputs) paths.push_back(p.c_str());
      OwnedString text;
      check(dlap_report(paths.data(), paths.size(), report_format.c_str(),
                        report_unparseable_positive ? 1 : 0, &text.p));
      write_text(report_out, text.str());
    }
  } catch (const CliFailure& f) {
    const char* msg = dlap_last_error();
    if (msg && *msg) std::fprintf(stderr, "error (%s): %s\n", dlap_status_name(f.status), msg);
    return static_cast<int>(f.status);
  }
  return 0;
}
