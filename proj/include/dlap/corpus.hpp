#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dlap::corpus {

enum class Label : int { kBenign = 0, kVulnerable = 1 };

/// One labeled function-level sample.
struct FunctionRecord {
  std::string id;
  std::string project;
  std::string source;
  Label label = Label::kBenign;
  std::optional<std::string> commit;

  bool vulnerable() const { return label == Label::kVulnerable; }
  friend bool operator==(const FunctionRecord&, const FunctionRecord&) = default;
};

struct Provenance {
  std::string source_path;
  std::string loaded_at;  // ISO-8601 UTC
};

struct LabelCounts {
  std::size_t vulnerable = 0;
  std::size_t benign = 0;
  std::size_t total() const { return vulnerable + benign; }
  friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

/// Ordered, id-unique collection of records. Immutable once built.
class Corpus {
 public:
  Corpus() = default;
  /// Throws kFormat on a duplicate id or an empty source.
  explicit Corpus(std::vector<FunctionRecord> records, Provenance provenance = {});

  const std::vector<FunctionRecord>& records() const { return records_; }
  const Provenance& provenance() const { return provenance_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  LabelCounts label_counts() const;

  /// nullptr when absent.
  const FunctionRecord* find(std::string_view id) const;

  /// One JSON object per line, keys in schema order.
  std::string to_jsonl() const;
  /// SHA-256 of to_jsonl().
  std::string content_hash() const;

 private:
  std::vector<FunctionRecord> records_;
  Provenance provenance_;
};

struct DatasetSplit {
  Corpus train;
  Corpus test;
  std::uint64_t seed = 0;
  double train_fraction = 0.0;
};

/// Parses one JSON-Lines document. `origin` names the source in errors.
Corpus parse_corpus(std::string_view text, const std::string& origin = "<memory>");

/// Reads a JSON-Lines file: {"id", "project", "code", "label": 0|1, "commit"?}.
Corpus load_corpus(const std::string& path);

void save_corpus(const Corpus& corpus, const std::string& path);

/// Keeps every vulnerable record and a seeded random subset of benign ones,
/// min(benign, round(ratio * vulnerable)) of them. Input order is preserved.
Corpus undersample(const Corpus& corpus, double ratio, std::uint64_t seed);

/// Stratified, seeded train/test split. The train size is
/// round(train_fraction * N); per-label shares use largest-remainder
/// allocation so each label lands within one record of its exact share.
DatasetSplit split(const Corpus& corpus, double train_fraction, std::uint64_t seed);

}  // namespace dlap::corpus
