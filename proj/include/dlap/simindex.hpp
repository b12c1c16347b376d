#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dlap::simindex {

/// Splits C-family source into identifiers, literals, operators and
/// punctuation. Whitespace and comments are dropped. Never fails.
std::vector<std::string> tokenize(std::string_view source);

/// Hashed k-token windows, sorted and unique.
struct ShingleSet {
  std::vector<std::uint64_t> hashes;
  std::size_t k = 0;

  bool empty() const { return hashes.empty(); }
};

/// Empty when tokens.size() < k. k must be >= 1.
ShingleSet shingle(const std::vector<std::string>& tokens, std::size_t k);

inline constexpr std::size_t kMinSignatureLength = 16;

struct MinHashSignature {
  std::vector<std::uint64_t> slots;
  std::uint64_t seed = 0;
  // Set for the empty shingle set; such a signature matches nothing.
  bool sentinel = false;

  std::size_t size() const { return slots.size(); }
  friend bool operator==(const MinHashSignature&, const MinHashSignature&) = default;
};

/// slot i = min over shingles of an independent 64-bit mix keyed by (seed, i).
MinHashSignature minhash(const ShingleSet& shingles, std::size_t n, std::uint64_t seed);

/// Fraction of equal slots; 0 when either side is the sentinel. Throws
/// kInvalidArgument when lengths or seeds differ.
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

struct IndexParams {
  std::size_t shingle = 5;   // k
  std::size_t slots = 256;   // n
  std::size_t bands = 32;    // b
  std::size_t rows = 8;      // r, b * r == n
  std::uint64_t seed = 1;

  /// Throws kInvalidArgument on an inconsistent combination.
  void validate() const;
  friend bool operator==(const IndexParams&, const IndexParams&) = default;
};

MinHashSignature signature_of(std::string_view source, const IndexParams& params);

struct Candidate {
  std::string id;
  double similarity = 0.0;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Banded LSH over MinHash signatures. Immutable after construction; queries
/// are safe from any number of threads.
class LshIndex {
 public:
  using Entry = std::pair<std::string, std::string>;  // (id, source)

  static LshIndex build(const std::vector<Entry>& entries, const IndexParams& params);

  /// Versioned binary file: magic, params header, signatures, buckets.
  void save(const std::string& path) const;
  static LshIndex load(const std::string& path);
  std::string serialize() const;
  static LshIndex deserialize(std::string_view bytes);

  /// Bucket collisions re-scored by full-signature Jaccard, descending, ties
  /// by id ascending, zero-similarity hits dropped, at most `m` long.
  std::vector<Candidate> query(std::string_view source, std::size_t m) const;
  std::vector<Candidate> query(const MinHashSignature& sig, std::size_t m) const;
  /// Exhaustive scan: the m entries with the highest estimated similarity,
  /// zero-similarity entries included. Used to top up short LSH answers.
  std::vector<Candidate> nearest(const MinHashSignature& sig, std::size_t m) const;

  const IndexParams& params() const { return params_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const MinHashSignature& signature(std::size_t i) const { return signatures_[i]; }

  /// (band, bucket key) pairs holding entry `i`, one per band.
  std::vector<std::pair<std::size_t, std::uint64_t>> buckets_of(std::size_t i) const;
  std::size_t bucket_count(std::size_t band) const { return buckets_.at(band).size(); }

  friend bool operator==(const LshIndex&, const LshIndex&) = default;

 private:
  std::uint64_t band_key(const MinHashSignature& sig, std::size_t band) const;

  IndexParams params_;
  std::vector<std::string> ids_;
  std::vector<MinHashSignature> signatures_;
  // One map per band: band key -> entry positions (ascending).
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> buckets_;
};

}  // namespace dlap::simindex
