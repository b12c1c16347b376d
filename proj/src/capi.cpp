#include "dlap/dlap.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <string>

#include "dlap/corpus.hpp"
#include "dlap/defaults.hpp"
#include "dlap/error.hpp"
#include "dlap/llmclient.hpp"
#include "dlap/modelplug.hpp"
#include "dlap/pipeline.hpp"
#include "dlap/promptgen.hpp"
#include "dlap/report.hpp"
#include "dlap/simindex.hpp"
#include "dlap/staticscan.hpp"
#include "dlap/taxonomy.hpp"
#include "dlap/version.hpp"

struct dlap_corpus {
  dlap::corpus::Corpus value;
};
struct dlap_index {
  dlap::simindex::LshIndex value;
};
struct dlap_model {
  dlap::modelplug::BuiltinClassifier value;
};

namespace {

thread_local std::string g_last_error;

dlap_status fail(dlap_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename Fn>
dlap_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return DLAP_OK;
  } catch (const dlap::Error& e) {
    return fail(static_cast<dlap_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(DLAP_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DLAP_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(DLAP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DLAP_ERR_INTERNAL, "unknown exception");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr)
    throw dlap::Error(dlap::ErrorCode::kInvalidArgument, std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dlap::Error(dlap::ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool safe_stem(const std::string& id) {
  if (id.empty() || id[0] == '.') return false;
  for (unsigned char c : id)
    if (!(std::isalnum(c) || c == '-' || c == '_')) return false;
  return true;
}

}  // namespace

extern "C" {

const char* dlap_version(void) { return DLAP_VERSION_STRING; }

const char* dlap_last_error(void) { return g_last_error.c_str(); }

const char* dlap_status_name(dlap_status status) {
  if (status == DLAP_OK) return "ok";
  if (status < DLAP_ERR_INVALID_ARGUMENT || status > DLAP_ERR_INTERNAL) return "unknown";
  return dlap::to_string(static_cast<dlap::ErrorCode>(status));
}

void dlap_string_free(char* s) { std::free(s); }

// ---- corpus ----

dlap_status dlap_corpus_load(const char* path, dlap_corpus** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dlap_corpus{dlap::corpus::load_corpus(path)};
  });
}

void dlap_corpus_free(dlap_corpus* corpus) { delete corpus; }

dlap_status dlap_corpus_size(const dlap_corpus* corpus, size_t* out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = corpus->value.size();
  });
}

dlap_status dlap_corpus_label_counts(const dlap_corpus* corpus, size_t* vulnerable, size_t* benign) {
  return guarded([&] {
    require(corpus, "corpus");
    const auto counts = corpus->value.label_counts();
    if (vulnerable) *vulnerable = counts.vulnerable;
    if (benign) *benign = counts.benign;
  });
}

dlap_status dlap_corpus_hash(const dlap_corpus* corpus, char** out_hex) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out_hex, "out_hex");
    *out_hex = dup_string(corpus->value.content_hash());
  });
}

dlap_status dlap_corpus_undersample(const dlap_corpus* corpus, double ratio, uint64_t seed,
                                    dlap_corpus** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = new dlap_corpus{dlap::corpus::undersample(corpus->value, ratio, seed)};
  });
}

dlap_status dlap_corpus_split(const dlap_corpus* corpus, double train_fraction, uint64_t seed,
                              dlap_corpus** train, dlap_corpus** test) {
  return guarded([&] {
    require(corpus, "corpus");
    require(train, "train");
    require(test, "test");
    auto s = dlap::corpus::split(corpus->value, train_fraction, seed);
    auto tr = std::make_unique<dlap_corpus>(dlap_corpus{std::move(s.train)});
    auto te = std::make_unique<dlap_corpus>(dlap_corpus{std::move(s.test)});
    *train = tr.release();
    *test = te.release();
  });
}

dlap_status dlap_corpus_save(const dlap_corpus* corpus, const char* path) {
  return guarded([&] {
    require(corpus, "corpus");
    require(path, "path");
    dlap::corpus::save_corpus(corpus->value, path);
  });
}

dlap_status dlap_corpus_export_sources(const dlap_corpus* corpus, const char* dir) {
  return guarded([&] {
    require(corpus, "corpus");
    require(dir, "dir");
    for (const auto& r : corpus->value.records())
      if (!safe_stem(r.id))
        throw dlap::Error(dlap::ErrorCode::kInvalidArgument,
                          "id \"" + r.id + "\" cannot be used as a file name; supply a function map instead");
    std::filesystem::create_directories(dir);
    for (const auto& r : corpus->value.records()) {
      const auto path = std::filesystem::path(dir) / (r.id + ".c");
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      f << r.source;
      if (!r.source.empty() && r.source.back() != '\n') f << '\n';
      if (!f) throw dlap::Error(dlap::ErrorCode::kIo, "cannot write " + path.string());
    }
  });
}

// ---- index ----

dlap_index_params dlap_index_params_default(void) {
  const dlap::simindex::IndexParams p;
  return {p.shingle, p.slots, p.bands, p.rows, p.seed};
}

dlap_status dlap_index_build(const dlap_corpus* corpus, const dlap_index_params* params,
                             dlap_index** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    dlap::simindex::IndexParams p;
    if (params) {
      p.shingle = params->shingle;
      p.slots = params->slots;
      p.bands = params->bands;
      p.rows = params->rows;
      p.seed = params->seed;
    }
    std::vector<dlap::simindex::LshIndex::Entry> entries;
    for (const auto& r : corpus->value.records()) entries.emplace_back(r.id, r.source);
    *out = new dlap_index{dlap::simindex::LshIndex::build(entries, p)};
  });
}

dlap_status dlap_index_save(const dlap_index* index, const char* path) {
  return guarded([&] {
    require(index, "index");
    require(path, "path");
    index->value.save(path);
  });
}

dlap_status dlap_index_load(const char* path, dlap_index** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dlap_index{dlap::simindex::LshIndex::load(path)};
  });
}

dlap_status dlap_index_size(const dlap_index* index, size_t* out) {
  return guarded([&] {
    require(index, "index");
    require(out, "out");
    *out = index->value.size();
  });
}

dlap_status dlap_index_query(const dlap_index* index, const char* source, size_t m, char** out_json) {
  return guarded([&] {
    require(index, "index");
    require(source, "source");
    require(out_json, "out_json");
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& c : index->value.query(source, m))
      arr.push_back({{"id", c.id}, {"similarity", c.similarity}});
    *out_json = dup_string(arr.dump());
  });
}

void dlap_index_free(dlap_index* index) { delete index; }

// ---- model ----

dlap_status dlap_model_train(const dlap_corpus* train, uint64_t seed, size_t epochs,
                             double learning_rate, double l2, dlap_model** out) {
  return guarded([&] {
    require(train, "train");
    require(out, "out");
    dlap::modelplug::TrainParams p;
    p.seed = seed;
    p.epochs = epochs;
    p.learning_rate = learning_rate;
    p.l2 = l2;
    *out = new dlap_model{dlap::modelplug::BuiltinClassifier::train(train->value, p)};
  });
}

dlap_status dlap_model_save(const dlap_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    model->value.save(path);
  });
}

dlap_status dlap_model_load(const char* path, dlap_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dlap_model{dlap::modelplug::BuiltinClassifier::load(path)};
  });
}

dlap_status dlap_model_predict(const dlap_model* model, const char* source, double* out) {
  return guarded([&] {
    require(model, "model");
    require(source, "source");
    require(out, "out");
    *out = model->value.predict_proba(source);
  });
}

dlap_status dlap_model_fingerprint(const dlap_model* model, char** out_hex) {
  return guarded([&] {
    require(model, "model");
    require(out_hex, "out_hex");
    *out_hex = dup_string(model->value.fingerprint());
  });
}

void dlap_model_free(dlap_model* model) { delete model; }

// ---- static findings ----

dlap_status dlap_scan_import(const char* flawfinder_csv_path, const char* cppcheck_xml_path,
                             const char* out_path, size_t* count) {
  return guarded([&] {
    require(out_path, "out_path");
    if (!flawfinder_csv_path && !cppcheck_xml_path)
      throw dlap::Error(dlap::ErrorCode::kInvalidArgument, "no report given");
    std::vector<dlap::staticscan::StaticFinding> all;
    if (flawfinder_csv_path) all = dlap::staticscan::parse_flawfinder(slurp(flawfinder_csv_path));
    if (cppcheck_xml_path) {
      const auto mapping = dlap::staticscan::ScanMapping::parse(dlap::defaults::scan_mapping_yaml(),
                                                                "<default mapping>");
      auto more = dlap::staticscan::parse_cppcheck(slurp(cppcheck_xml_path), mapping.cppcheck_severity);
      all.insert(all.end(), more.begin(), more.end());
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    out << dlap::staticscan::findings_to_jsonl(all);
    if (!out) throw dlap::Error(dlap::ErrorCode::kIo, std::string("cannot write ") + out_path);
    if (count) *count = all.size();
  });
}

// ---- taxonomy ----

dlap_status dlap_taxonomy_check(const char* library_path, const char* mapping_path, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    const auto library =
        library_path ? dlap::taxonomy::CotLibrary::load(library_path)
                     : dlap::taxonomy::CotLibrary::parse(dlap::defaults::cot_library_yaml(), "<default library>");
    const auto mapping =
        mapping_path ? dlap::staticscan::ScanMapping::load(mapping_path)
                     : dlap::staticscan::ScanMapping::parse(dlap::defaults::scan_mapping_yaml(), "<default mapping>");
    const auto unresolved = mapping.unresolved(library);
    nlohmann::ordered_json j;
    j["version"] = library.version();
    j["majors"] = dlap::taxonomy::kMajorCategories.size();
    j["subcategories"] = library.subcategory_count();
    std::vector<std::string> codes;
    for (const auto& n : library.nodes()) codes.push_back(n.code);
    j["nodes"] = codes;
    j["unresolved"] = unresolved;
    *out_json = dup_string(j.dump(2));
    if (!unresolved.empty()) {
      std::string msg = "mapping entries do not resolve to library nodes:";
      for (const auto& u : unresolved) msg += " " + u + ";";
      throw dlap::Error(dlap::ErrorCode::kSchema, msg);
    }
  });
}

// ---- prompts and runs ----

dlap_status dlap_prompt_dump(const char* config_path, const char* out_dir, size_t* count) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out_dir, "out_dir");
    dlap::eval::Pipeline pipeline(dlap::eval::RunConfig::load(config_path));
    const auto prompts = pipeline.prepare();
    dlap::eval::write_prompts(prompts, out_dir);
    if (count) *count = prompts.size();
  });
}

dlap_status dlap_run(const char* config_path, const char* out_dir, char** out_summary_json) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out_dir, "out_dir");
    dlap::eval::Pipeline pipeline(dlap::eval::RunConfig::load(config_path));
    const auto out = pipeline.run();
    dlap::eval::write_run(out, out_dir);
    if (out_summary_json) {
      nlohmann::ordered_json j;
      j["samples"] = out.results.size();
      j["metrics"] = dlap::eval::metrics_to_json(out.metrics);
      if (out.provider_metrics) j["provider_metrics"] = dlap::eval::metrics_to_json(*out.provider_metrics);
      if (out.provider_cv) j["provider_cv"] = *out.provider_cv;
      *out_summary_json = dup_string(j.dump(2));
    }
  });
}

dlap_status dlap_report(const char* const* paths, size_t n_paths, const char* format,
                        int unparseable_as_positive, char** out_text) {
  return guarded([&] {
    require(out_text, "out_text");
    if (n_paths > 0) require(paths, "paths");
    std::vector<std::string> list;
    for (size_t i = 0; i < n_paths; ++i) {
      require(paths[i], "paths[i]");
      list.emplace_back(paths[i]);
    }
    const auto fmt = dlap::eval::report_format_from_string(format ? format : "markdown");
    const auto rows = dlap::eval::aggregate(dlap::eval::load_results(list), unparseable_as_positive != 0);
    *out_text = dup_string(dlap::eval::render_report(rows, fmt));
  });
}

dlap_status dlap_render_baseline(const char* kind, const char* code, const char* aux, char** out_json) {
  return guarded([&] {
    require(kind, "kind");
    require(code, "code");
    require(out_json, "out_json");
    const auto k = dlap::promptgen::baseline_from_string(kind);
    std::optional<std::string> aux_text;
    if (aux) aux_text = aux;
    else if (k == dlap::promptgen::BaselineKind::kAuxiliary)
      aux_text = dlap::promptgen::summarize_dataflow(code);
    const auto turns = dlap::promptgen::render_baseline(
        k, code, aux_text ? std::optional<std::string_view>(*aux_text) : std::nullopt);
    *out_json = dup_string(nlohmann::json(turns).dump());
  });
}

dlap_status dlap_prompt_hash(const char* prompt, char** out_hex) {
  return guarded([&] {
    require(prompt, "prompt");
    require(out_hex, "out_hex");
    *out_hex = dup_string(dlap::llm::prompt_hash(dlap::llm::detection_messages(prompt)));
  });
}

}  // extern "C"
