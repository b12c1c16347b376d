#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dlap/corpus.hpp"

namespace dlap::modelplug {

/// A detection probability from some provider, with its thresholded verdict.
struct ModelPrediction {
  double probability = 0.0;
  bool vulnerable = false;
  std::string model_id;
  double threshold = 0.5;

  friend bool operator==(const ModelPrediction&, const ModelPrediction&) = default;
};

/// Throws kProtocol when p is outside [0, 1] or not finite.
ModelPrediction make_prediction(double p, double threshold, std::string model_id);

enum class ProviderKind { kFile, kHttp, kBuiltin };

const char* to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(std::string_view s);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kBuiltin;
  // file: JSON {id: probability}; http: base URL; builtin: saved model JSON
  // (empty means "train on the run's training split").
  std::string location;
  double threshold = 0.5;
  std::size_t max_in_flight = 4;
  int timeout_ms = 10000;

  void validate() const;
};

/// Interface to the detection model M. Implementations are immutable after
/// construction and safe for concurrent predict calls.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual ModelPrediction predict(const corpus::FunctionRecord& fn) const = 0;
  /// Order-preserving; elementwise equal to predict(). Reports every failed id.
  virtual std::vector<ModelPrediction> predict_batch(
      const std::vector<const corpus::FunctionRecord*>& fns) const;

  virtual std::string id() const = 0;
  virtual ProviderKind kind() const = 0;
};

// ---- builtin logistic-regression classifier ------------------------------

struct TrainParams {
  std::uint64_t seed = 7;
  std::size_t epochs = 300;
  double learning_rate = 1.0;
  double l2 = 1e-4;
};

/// Sparse feature vector: sorted (vocabulary position, value) pairs.
using SparseFeatures = std::vector<std::pair<std::uint32_t, double>>;

/// Logistic regression over log-scaled, L2-normalized bag-of-token counts.
class BuiltinClassifier {
 public:
  /// Full-batch gradient descent on mean cross-entropy plus an L2 penalty.
  /// Throws kPrecondition unless both labels are present.
  static BuiltinClassifier train(const corpus::Corpus& train, const TrainParams& params);

  double predict_proba(std::string_view source) const;

  std::string to_json() const;
  static BuiltinClassifier from_json(std::string_view text);
  void save(const std::string& path) const;
  static BuiltinClassifier load(const std::string& path);

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  const TrainParams& params() const { return params_; }
  const std::vector<double>& loss_history() const { return loss_history_; }
  /// Short content digest, stable for identical weights.
  std::string fingerprint() const;

  SparseFeatures featurize(std::string_view source) const;

 private:
  std::vector<std::string> vocabulary_;  // sorted
  std::vector<double> weights_;
  double bias_ = 0.0;
  TrainParams params_;
  std::vector<double> loss_history_;
};

/// Objective and gradient used by train(); exposed for gradient checks.
/// `params` = weights followed by the bias as the last element.
struct LogisticObjective {
  const std::vector<SparseFeatures>& features;
  const std::vector<double>& targets;  // 0 or 1
  double l2 = 0.0;

  double loss(const std::vector<double>& params) const;
  std::vector<double> gradient(const std::vector<double>& params) const;
};

// ---- providers -----------------------------------------------------------

class FileProvider final : public Provider {
 public:
  FileProvider(std::map<std::string, double> table, double threshold, std::string origin);
  /// JSON object mapping id -> probability.
  static std::unique_ptr<FileProvider> open(const std::string& path, double threshold);

  ModelPrediction predict(const corpus::FunctionRecord& fn) const override;
  std::vector<ModelPrediction> predict_batch(
      const std::vector<const corpus::FunctionRecord*>& fns) const override;
  std::string id() const override { return "file:" + origin_; }
  ProviderKind kind() const override { return ProviderKind::kFile; }

 private:
  std::map<std::string, double> table_;
  double threshold_;
  std::string origin_;
};

class BuiltinProvider final : public Provider {
 public:
  BuiltinProvider(BuiltinClassifier model, double threshold);

  ModelPrediction predict(const corpus::FunctionRecord& fn) const override;
  std::string id() const override;
  ProviderKind kind() const override { return ProviderKind::kBuiltin; }
  const BuiltinClassifier& model() const { return model_; }

 private:
  BuiltinClassifier model_;
  double threshold_;
};

/// Client for the probability-server protocol:
///   POST /predict        {"id", "code"}           -> {"probability"}
///   POST /predict_batch  {"ids": [], "codes": []} -> {"probabilities": []}
///   GET  /health         -> 200
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(const ProviderConfig& config);
  ~HttpProvider() override;

  ModelPrediction predict(const corpus::FunctionRecord& fn) const override;
  std::vector<ModelPrediction> predict_batch(
      const std::vector<const corpus::FunctionRecord*>& fns) const override;
  std::string id() const override { return "http:" + config_.location; }
  ProviderKind kind() const override { return ProviderKind::kHttp; }
  bool healthy() const;

 private:
  struct Impl;
  ProviderConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Builds the configured provider. A builtin provider without a model path is
/// trained on `train` (required in that case).
std::unique_ptr<Provider> make_provider(const ProviderConfig& config,
                                        const corpus::Corpus* train = nullptr,
                                        const TrainParams& params = {});

}  // namespace dlap::modelplug
