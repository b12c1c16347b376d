#include "dlap/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "dlap/error.hpp"
#include "dlap/hashing.hpp"
#include "dlap/random.hpp"

namespace dlap::corpus {

namespace {

using ordered_json = nlohmann::ordered_json;

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
        (extra == 3 && (cp < 0x10000 || cp > 0x10FFFF)) ||
        (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

FunctionRecord parse_record(const std::string& line, std::size_t line_no,
                            const std::string& origin) {
  auto fail = [&](const std::string& why) {
    return Error(ErrorCode::kFormat,
                 origin + ":" + std::to_string(line_no) + ": " + why);
  };
  if (!valid_utf8(line)) throw fail("invalid UTF-8");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw fail("record is not a JSON object");

  FunctionRecord r;
  auto need_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      throw fail(std::string("missing or non-string field \"") + key + "\"");
    return it->get<std::string>();
  };
  r.id = need_string("id");
  r.project = need_string("project");
  r.source = need_string("code");
  if (r.id.empty()) throw fail("empty id");
  if (r.source.empty()) throw fail("empty code for id \"" + r.id + "\"");

  auto label = j.find("label");
  if (label == j.end() || !label->is_number_integer())
    throw fail("missing or non-integer field \"label\"");
  const auto v = label->get<long long>();
  if (v != 0 && v != 1) throw fail("label must be 0 or 1, got " + std::to_string(v));
  r.label = v == 1 ? Label::kVulnerable : Label::kBenign;

  if (auto commit = j.find("commit"); commit != j.end() && !commit->is_null()) {
    if (!commit->is_string()) throw fail("non-string field \"commit\"");
    r.commit = commit->get<std::string>();
  }
  return r;
}

}  // namespace

Corpus::Corpus(std::vector<FunctionRecord> records, Provenance provenance)
    : records_(std::move(records)), provenance_(std::move(provenance)) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(records_.size());
  for (const auto& r : records_) {
    if (r.source.empty())
      throw Error(ErrorCode::kFormat, "empty source for id \"" + r.id + "\"");
    if (!seen.insert(r.id).second)
      throw Error(ErrorCode::kFormat, "duplicate id \"" + r.id + "\"");
  }
}

LabelCounts Corpus::label_counts() const {
  LabelCounts c;
  for (const auto& r : records_) (r.vulnerable() ? c.vulnerable : c.benign)++;
  return c;
}

const FunctionRecord* Corpus::find(std::string_view id) const {
  for (const auto& r : records_)
    if (r.id == id) return &r;
  return nullptr;
}

std::string Corpus::to_jsonl() const {
  std::string out;
  for (const auto& r : records_) {
    ordered_json j;
    j["id"] = r.id;
    j["project"] = r.project;
    j["code"] = r.source;
    j["label"] = static_cast<int>(r.label);
    if (r.commit) j["commit"] = *r.commit;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string Corpus::content_hash() const { return sha256_hex(to_jsonl()); }

Corpus parse_corpus(std::string_view text, const std::string& origin) {
  std::vector<FunctionRecord> records;
  std::unordered_set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto r = parse_record(line, line_no, origin);
    if (!seen.insert(r.id).second)
      throw Error(ErrorCode::kFormat, origin + ":" + std::to_string(line_no) +
                                          ": duplicate id \"" + r.id + "\"");
    records.push_back(std::move(r));
  }
  return Corpus(std::move(records), Provenance{origin, utc_now()});
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open corpus " + path);
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_corpus(text, path);
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << corpus.to_jsonl();
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Corpus undersample(const Corpus& corpus, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw Error(ErrorCode::kPrecondition, "undersample ratio must be > 0");
  const auto counts = corpus.label_counts();
  if (counts.vulnerable == 0)
    throw Error(ErrorCode::kPrecondition,
                "undersample needs at least one vulnerable record");

  const auto target = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(counts.vulnerable)));
  const std::size_t keep = std::min(counts.benign, target);

  std::vector<std::size_t> benign;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (!corpus.records()[i].vulnerable()) benign.push_back(i);
  SeededRng rng(seed);
  rng.shuffle(benign);
  std::vector<bool> selected(corpus.size(), false);
  for (std::size_t i = 0; i < keep; ++i) selected[benign[i]] = true;

  std::vector<FunctionRecord> out;
  out.reserve(counts.vulnerable + keep);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus.records()[i];
    if (r.vulnerable() || selected[i]) out.push_back(r);
  }
  return Corpus(std::move(out), corpus.provenance());
}

DatasetSplit split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorCode::kPrecondition, "train_fraction must lie in (0, 1)");
  const std::size_t n = corpus.size();
  if (n < 2) throw Error(ErrorCode::kPrecondition, "split needs at least 2 records");

  const auto total_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (total_train == 0 || total_train == n)
    throw Error(ErrorCode::kPrecondition,
                "corpus of " + std::to_string(n) +
                    " records is too small to place one record on each side");

  // Index 0 = benign, 1 = vulnerable.
  std::vector<std::size_t> groups[2];
  for (std::size_t i = 0; i < n; ++i)
    groups[corpus.records()[i].vulnerable() ? 1 : 0].push_back(i);

  std::size_t quota[2];
  double remainder[2];
  std::size_t assigned = 0;
  for (int g = 0; g < 2; ++g) {
    const double exact = train_fraction * static_cast<double>(groups[g].size());
    quota[g] = static_cast<std::size_t>(std::floor(exact));
    remainder[g] = exact - static_cast<double>(quota[g]);
    assigned += quota[g];
  }
  while (assigned < total_train) {
    // Larger remainder first; the vulnerable group wins ties.
    int g = remainder[1] >= remainder[0] ? 1 : 0;
    if (quota[g] == groups[g].size()) g = 1 - g;
    ++quota[g];
    remainder[g] = -1.0;
    ++assigned;
  }

  SeededRng rng(seed);
  std::vector<bool> in_train(n, false);
  for (int g = 0; g < 2; ++g) {
    auto order = groups[g];
    rng.shuffle(order);
    for (std::size_t k = 0; k < quota[g]; ++k) in_train[order[k]] = true;
  }

  std::vector<FunctionRecord> train, test;
  for (std::size_t i = 0; i < n; ++i)
    (in_train[i] ? train : test).push_back(corpus.records()[i]);
  return DatasetSplit{Corpus(std::move(train), corpus.provenance()),
                      Corpus(std::move(test), corpus.provenance()), seed,
                      train_fraction};
}

}  // namespace dlap::corpus
