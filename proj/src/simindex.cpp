#include "dlap/simindex.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <unordered_set>

#include "dlap/error.hpp"
#include "dlap/hashing.hpp"

namespace dlap::simindex {

namespace {

constexpr std::array<std::string_view, 5> kThreeCharOps = {"<<=", ">>=", "...", "->*", "<=>"};
constexpr std::array<std::string_view, 22> kTwoCharOps = {
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "::", ".*", "##"};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

}  // namespace

std::vector<std::string> tokenize(std::string_view src) {
  std::vector<std::string> out;
  const std::size_t n = src.size();
  std::size_t i = 0;
  auto at = [&](std::size_t k) -> unsigned char { return k < n ? src[k] : '\0'; };

  while (i < n) {
    const unsigned char c = src[i];
    if (std::isspace(c)) {
      ++i;
    } else if (c == '/' && at(i + 1) == '/') {
      while (i < n && src[i] != '\n') ++i;
    } else if (c == '/' && at(i + 1) == '*') {
      const auto end = src.find("*/", i + 2);
      i = end == std::string_view::npos ? n : end + 2;
    } else if (ident_start(c)) {
      const std::size_t start = i;
      while (i < n && ident_char(src[i])) ++i;
      out.emplace_back(src.substr(start, i - start));
    } else if (std::isdigit(c) || (c == '.' && std::isdigit(at(i + 1)))) {
      const std::size_t start = i;
      while (i < n) {
        const unsigned char d = src[i];
        if (std::isalnum(d) || d == '.' || d == '_' || d == '\'') {
          ++i;
        } else if ((d == '+' || d == '-') && i > start &&
                   std::strchr("eEpP", src[i - 1]) != nullptr &&
                   !(src[start] == '0' && (at(start + 1) == 'x' || at(start + 1) == 'X') &&
                     (src[i - 1] == 'e' || src[i - 1] == 'E'))) {
          ++i;
        } else {
          break;
        }
      }
      out.emplace_back(src.substr(start, i - start));
    } else if (c == '"' || c == '\'') {
      const std::size_t start = i++;
      while (i < n && src[i] != c && src[i] != '\n') {
        if (src[i] == '\\' && i + 1 < n) ++i;
        ++i;
      }
      if (i < n && src[i] == c) ++i;
      out.emplace_back(src.substr(start, i - start));
    } else {
      std::size_t len = 1;
      for (auto op : kThreeCharOps)
        if (src.substr(i, 3) == op) len = 3;
      if (len == 1)
        for (auto op : kTwoCharOps)
          if (src.substr(i, 2) == op) len = 2;
      out.emplace_back(src.substr(i, len));
      i += len;
    }
  }
  return out;
}

ShingleSet shingle(const std::vector<std::string>& tokens, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "shingle length must be >= 1");
  ShingleSet set;
  set.k = k;
  if (tokens.size() < k) return set;
  set.hashes.reserve(tokens.size() - k + 1);
  for (std::size_t i = 0; i + k <= tokens.size(); ++i) {
    std::uint64_t h = fnv1a64("");
    for (std::size_t j = 0; j < k; ++j) {
      h = fnv1a64(tokens[i + j], h);
      h = fnv1a64("\x1f", h);
    }
    set.hashes.push_back(h);
  }
  std::sort(set.hashes.begin(), set.hashes.end());
  set.hashes.erase(std::unique(set.hashes.begin(), set.hashes.end()), set.hashes.end());
  return set;
}

MinHashSignature minhash(const ShingleSet& shingles, std::size_t n, std::uint64_t seed) {
  if (n < kMinSignatureLength)
    throw Error(ErrorCode::kInvalidArgument,
                "signature length " + std::to_string(n) + " is below the minimum of " +
                    std::to_string(kMinSignatureLength));
  MinHashSignature sig;
  sig.seed = seed;
  sig.slots.assign(n, std::numeric_limits<std::uint64_t>::max());
  if (shingles.empty()) {
    sig.sentinel = true;
    return sig;
  }
  std::vector<std::uint64_t> keys(n);
  std::uint64_t state = seed;
  for (auto& key : keys) key = splitmix64(state++ ^ 0x5bd1e9955bd1e995ULL);
  for (const std::uint64_t h : shingles.hashes) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t v = splitmix64(h ^ keys[i]);
      if (v < sig.slots[i]) sig.slots[i] = v;
    }
  }
  return sig;
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::kInvalidArgument, "signature lengths differ (" +
                                                 std::to_string(a.size()) + " vs " +
                                                 std::to_string(b.size()) + ")");
  if (a.seed != b.seed) throw Error(ErrorCode::kInvalidArgument, "signature seeds differ");
  if (a.sentinel || b.sentinel || a.size() == 0) return 0.0;
  std::size_t equal = 0;
  for (std::size_t i = 0; i < a.size(); ++i) equal += a.slots[i] == b.slots[i];
  return static_cast<double>(equal) / static_cast<double>(a.size());
}

void IndexParams::validate() const {
  if (shingle == 0) throw Error(ErrorCode::kInvalidArgument, "shingle length must be >= 1");
  if (slots < kMinSignatureLength)
    throw Error(ErrorCode::kInvalidArgument,
                "signature length must be >= " + std::to_string(kMinSignatureLength));
  if (bands == 0 || rows == 0 || bands * rows != slots)
    throw Error(ErrorCode::kInvalidArgument,
                "bands (" + std::to_string(bands) + ") x rows (" + std::to_string(rows) +
                    ") must equal signature length (" + std::to_string(slots) + ")");
}

MinHashSignature signature_of(std::string_view source, const IndexParams& params) {
  return minhash(shingle(tokenize(source), params.shingle), params.slots, params.seed);
}

std::uint64_t LshIndex::band_key(const MinHashSignature& sig, std::size_t band) const {
  std::uint64_t h = splitmix64(band);
  for (std::size_t r = 0; r < params_.rows; ++r) {
    const std::uint64_t v = sig.slots[band * params_.rows + r];
    h = splitmix64(h ^ v) + 0x9e3779b97f4a7c15ULL * (r + 1);
  }
  return h;
}

LshIndex LshIndex::build(const std::vector<Entry>& entries, const IndexParams& params) {
  params.validate();
  LshIndex index;
  index.params_ = params;
  index.buckets_.resize(params.bands);
  std::unordered_set<std::string> seen;
  for (const auto& [id, source] : entries) {
    if (!seen.insert(id).second)
      throw Error(ErrorCode::kInvalidArgument, "duplicate index id \"" + id + "\"");
    const auto pos = static_cast<std::uint32_t>(index.ids_.size());
    index.ids_.push_back(id);
    index.signatures_.push_back(signature_of(source, params));
    for (std::size_t b = 0; b < params.bands; ++b)
      index.buckets_[b][index.band_key(index.signatures_.back(), b)].push_back(pos);
  }
  return index;
}

std::vector<std::pair<std::size_t, std::uint64_t>> LshIndex::buckets_of(std::size_t i) const {
  std::vector<std::pair<std::size_t, std::uint64_t>> out;
  for (std::size_t b = 0; b < buckets_.size(); ++b)
    for (const auto& [key, members] : buckets_[b])
      if (std::binary_search(members.begin(), members.end(), static_cast<std::uint32_t>(i)))
        out.emplace_back(b, key);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Candidate> LshIndex::query(std::string_view source, std::size_t m) const {
  return query(signature_of(source, params_), m);
}

std::vector<Candidate> LshIndex::query(const MinHashSignature& sig, std::size_t m) const {
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "candidate count m must be >= 1");
  if (sig.size() != params_.slots || sig.seed != params_.seed)
    throw Error(ErrorCode::kInvalidArgument, "query signature does not match index params");
  if (sig.sentinel) return {};

  std::vector<std::uint32_t> hits;
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    auto it = buckets_[b].find(band_key(sig, b));
    if (it != buckets_[b].end()) hits.insert(hits.end(), it->second.begin(), it->second.end());
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());

  std::vector<Candidate> ranked;
  ranked.reserve(hits.size());
  for (const auto pos : hits) {
    const double s = estimate_jaccard(sig, signatures_[pos]);
    if (s > 0.0) ranked.push_back({ids_[pos], s});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  if (ranked.size() > m) ranked.resize(m);
  return ranked;
}

std::vector<Candidate> LshIndex::nearest(const MinHashSignature& sig, std::size_t m) const {
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "candidate count m must be >= 1");
  if (sig.size() != params_.slots || sig.seed != params_.seed)
    throw Error(ErrorCode::kInvalidArgument, "query signature does not match index params");
  std::vector<Candidate> ranked;
  ranked.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i)
    ranked.push_back({ids_[i], estimate_jaccard(sig, signatures_[i])});
  const auto keep = std::min(m, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                    [](const Candidate& a, const Candidate& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.id < b.id;
                    });
  ranked.resize(keep);
  return ranked;
}

// ---- persistence ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'L', 'A', 'P', 'L', 'S', 'H', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void need(std::size_t n) {
    if (pos_ + n > in_.size())
      throw Error(ErrorCode::kFormat, "index file truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::string str() {
    const auto len = u32();
    need(len);
    std::string s(in_.substr(pos_, len));
    pos_ += len;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string LshIndex::serialize() const {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(params_.shingle));
  w.u32(static_cast<std::uint32_t>(params_.slots));
  w.u32(static_cast<std::uint32_t>(params_.bands));
  w.u32(static_cast<std::uint32_t>(params_.rows));
  w.u64(params_.seed);
  w.u64(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    w.str(ids_[i]);
    w.u8(signatures_[i].sentinel ? 1 : 0);
    for (auto v : signatures_[i].slots) w.u64(v);
  }
  for (const auto& band : buckets_) {
    // Sorted keys keep the file byte-stable across runs.
    std::vector<std::uint64_t> keys;
    keys.reserve(band.size());
    for (const auto& kv : band) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    w.u64(keys.size());
    for (auto key : keys) {
      const auto& members = band.at(key);
      w.u64(key);
      w.u32(static_cast<std::uint32_t>(members.size()));
      for (auto pos : members) w.u32(pos);
    }
  }
  return w.take();
}

LshIndex LshIndex::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic))
    throw Error(ErrorCode::kFormat, "not an LSH index file (bad magic)");
  if (const auto version = r.u32(); version != kFormatVersion)
    throw Error(ErrorCode::kFormat, "unsupported index format version " + std::to_string(version));
  LshIndex index;
  index.params_.shingle = r.u32();
  index.params_.slots = r.u32();
  index.params_.bands = r.u32();
  index.params_.rows = r.u32();
  index.params_.seed = r.u64();
  try {
    index.params_.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kFormat, std::string("index header: ") + e.what());
  }
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    index.ids_.push_back(r.str());
    MinHashSignature sig;
    sig.seed = index.params_.seed;
    sig.sentinel = r.u8() != 0;
    r.need(index.params_.slots * sizeof(std::uint64_t));
    sig.slots.resize(index.params_.slots);
    for (auto& v : sig.slots) v = r.u64();
    index.signatures_.push_back(std::move(sig));
  }
  index.buckets_.resize(index.params_.bands);
  for (auto& band : index.buckets_) {
    const auto keys = r.u64();
    for (std::uint64_t k = 0; k < keys; ++k) {
      const auto key = r.u64();
      auto& members = band[key];
      const auto m = r.u32();
      for (std::uint32_t j = 0; j < m; ++j) {
        const auto pos = r.u32();
        if (pos >= count) throw Error(ErrorCode::kFormat, "bucket references unknown entry");
        members.push_back(pos);
      }
    }
  }
  if (!r.done()) throw Error(ErrorCode::kFormat, "trailing bytes after index payload");
  return index;
}

void LshIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  const auto bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

LshIndex LshIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open index " + path);
  std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

}  // namespace dlap::simindex
