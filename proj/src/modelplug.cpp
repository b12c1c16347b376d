#include "dlap/modelplug.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_map>

#include "dlap/concurrency.hpp"
#include "dlap/error.hpp"
#include "dlap/hashing.hpp"
#include "dlap/http.hpp"
#include "dlap/random.hpp"
#include "dlap/simindex.hpp"

namespace dlap::modelplug {

namespace {

using json = nlohmann::json;

constexpr const char* kModelFormat = "dlap-builtin-logreg/1";

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

}  // namespace

ModelPrediction make_prediction(double p, double threshold, std::string model_id) {
  if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
    std::ostringstream msg;
    msg << "probability " << p << " from " << model_id << " is outside [0, 1]";
    throw Error(ErrorCode::kProtocol, msg.str());
  }
  return ModelPrediction{p, p >= threshold, std::move(model_id), threshold};
}

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kFile: return "file";
    case ProviderKind::kHttp: return "http";
    case ProviderKind::kBuiltin: return "builtin";
  }
  return "?";
}

ProviderKind provider_kind_from_string(std::string_view s) {
  if (s == "file") return ProviderKind::kFile;
  if (s == "http") return ProviderKind::kHttp;
  if (s == "builtin") return ProviderKind::kBuiltin;
  throw Error(ErrorCode::kInvalidArgument, "unknown provider kind \"" + std::string(s) + "\"");
}

void ProviderConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "provider threshold must lie in [0, 1]");
  if ((kind == ProviderKind::kFile || kind == ProviderKind::kHttp) && location.empty())
    throw Error(ErrorCode::kInvalidArgument,
                std::string(to_string(kind)) + " provider needs a location");
  if (max_in_flight == 0)
    throw Error(ErrorCode::kInvalidArgument, "provider max_in_flight must be >= 1");
}

std::vector<ModelPrediction> Provider::predict_batch(
    const std::vector<const corpus::FunctionRecord*>& fns) const {
  std::vector<ModelPrediction> out;
  out.reserve(fns.size());
  std::vector<std::string> failed;
  std::string first_error;
  ErrorCode code = ErrorCode::kInternal;
  for (const auto* fn : fns) {
    try {
      out.push_back(predict(*fn));
    } catch (const Error& e) {
      if (failed.empty()) {
        first_error = e.what();
        code = e.code();
      }
      failed.push_back(fn->id);
    }
  }
  if (!failed.empty())
    throw Error(code, "prediction failed for ids [" + join_ids(failed) + "]: " + first_error);
  return out;
}

// ---- objective -----------------------------------------------------------

double LogisticObjective::loss(const std::vector<double>& params) const {
  const std::size_t dim = params.size() - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double z = params[dim];
    for (const auto& [j, v] : features[i]) z += params[j] * v;
    // Cross-entropy in logit form: softplus(z) - y*z.
    total += softplus(z) - targets[i] * z;
  }
  double penalty = 0.0;
  for (std::size_t j = 0; j < dim; ++j) penalty += params[j] * params[j];
  const double n = features.empty() ? 1.0 : static_cast<double>(features.size());
  return total / n + 0.5 * l2 * penalty;
}

std::vector<double> LogisticObjective::gradient(const std::vector<double>& params) const {
  const std::size_t dim = params.size() - 1;
  std::vector<double> g(params.size(), 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    double z = params[dim];
    for (const auto& [j, v] : features[i]) z += params[j] * v;
    const double r = sigmoid(z) - targets[i];
    for (const auto& [j, v] : features[i]) g[j] += r * v;
    g[dim] += r;
  }
  const double n = features.empty() ? 1.0 : static_cast<double>(features.size());
  for (auto& x : g) x /= n;
  for (std::size_t j = 0; j < dim; ++j) g[j] += l2 * params[j];
  return g;
}

// ---- builtin classifier --------------------------------------------------

SparseFeatures BuiltinClassifier::featurize(std::string_view source) const {
  std::unordered_map<std::uint32_t, double> counts;
  for (const auto& tok : simindex::tokenize(source)) {
    auto it = std::lower_bound(vocabulary_.begin(), vocabulary_.end(), tok);
    if (it != vocabulary_.end() && *it == tok)
      counts[static_cast<std::uint32_t>(it - vocabulary_.begin())] += 1.0;
  }
  SparseFeatures f(counts.begin(), counts.end());
  std::sort(f.begin(), f.end());
  double norm = 0.0;
  for (auto& [j, v] : f) {
    v = std::log1p(v);
    norm += v * v;
  }
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& [j, v] : f) v /= norm;
  }
  return f;
}

BuiltinClassifier BuiltinClassifier::train(const corpus::Corpus& train, const TrainParams& params) {
  const auto counts = train.label_counts();
  if (counts.vulnerable == 0 || counts.benign == 0)
    throw Error(ErrorCode::kPrecondition,
                "builtin classifier needs both labels in the training corpus (got " +
                    std::to_string(counts.vulnerable) + " vulnerable, " +
                    std::to_string(counts.benign) + " benign)");
  if (!(params.learning_rate > 0.0) || !(params.l2 >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be > 0 and l2 >= 0");

  BuiltinClassifier model;
  model.params_ = params;
  for (const auto& r : train.records())
    for (auto& tok : simindex::tokenize(r.source)) model.vocabulary_.push_back(std::move(tok));
  std::sort(model.vocabulary_.begin(), model.vocabulary_.end());
  model.vocabulary_.erase(std::unique(model.vocabulary_.begin(), model.vocabulary_.end()),
                          model.vocabulary_.end());

  std::vector<SparseFeatures> features;
  std::vector<double> targets;
  for (const auto& r : train.records()) {
    features.push_back(model.featurize(r.source));
    targets.push_back(r.vulnerable() ? 1.0 : 0.0);
  }

  const std::size_t dim = model.vocabulary_.size();
  std::vector<double> theta(dim + 1, 0.0);
  SeededRng rng(params.seed);
  for (std::size_t j = 0; j < dim; ++j) theta[j] = (rng.unit() - 0.5) * 0.02;

  LogisticObjective objective{features, targets, params.l2};
  model.loss_history_.push_back(objective.loss(theta));
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    const auto g = objective.gradient(theta);
    for (std::size_t j = 0; j <= dim; ++j) theta[j] -= params.learning_rate * g[j];
    model.loss_history_.push_back(objective.loss(theta));
  }
  model.bias_ = theta[dim];
  theta.pop_back();
  model.weights_ = std::move(theta);
  return model;
}

double BuiltinClassifier::predict_proba(std::string_view source) const {
  double z = bias_;
  for (const auto& [j, v] : featurize(source)) z += weights_[j] * v;
  return sigmoid(z);
}

std::string BuiltinClassifier::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["bias"] = bias_;
  nlohmann::ordered_json weights = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) weights[vocabulary_[i]] = weights_[i];
  j["weights"] = std::move(weights);
  j["manifest"] = {{"seed", params_.seed},
                   {"epochs", params_.epochs},
                   {"learning_rate", params_.learning_rate},
                   {"l2", params_.l2},
                   {"loss_history", loss_history_}};
  return j.dump(1);
}

BuiltinClassifier BuiltinClassifier::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, std::string("model file: ") + e.what());
  }
  if (j.value("format", "") != kModelFormat)
    throw Error(ErrorCode::kFormat, std::string("model file is not ") + kModelFormat);
  BuiltinClassifier m;
  try {
    m.bias_ = j.at("bias").get<double>();
    // json objects iterate in key order, which matches the sorted vocabulary.
    for (const auto& [tok, w] : j.at("weights").items()) {
      m.vocabulary_.push_back(tok);
      m.weights_.push_back(w.get<double>());
    }
    const auto& man = j.at("manifest");
    m.params_.seed = man.at("seed").get<std::uint64_t>();
    m.params_.epochs = man.at("epochs").get<std::size_t>();
    m.params_.learning_rate = man.at("learning_rate").get<double>();
    m.params_.l2 = man.at("l2").get<double>();
    m.loss_history_ = man.value("loss_history", std::vector<double>{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("model file: ") + e.what());
  }
  for (double w : m.weights_)
    if (!std::isfinite(w)) throw Error(ErrorCode::kFormat, "model file has non-finite weight");
  if (!std::isfinite(m.bias_)) throw Error(ErrorCode::kFormat, "model file has non-finite bias");
  return m;
}

void BuiltinClassifier::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << to_json() << '\n';
}

BuiltinClassifier BuiltinClassifier::load(const std::string& path) {
  return from_json(read_file(path));
}

std::string BuiltinClassifier::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << bias_;
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) os << '|' << vocabulary_[i] << '=' << weights_[i];
  return sha256_hex(os.str()).substr(0, 12);
}

// ---- file provider -------------------------------------------------------

FileProvider::FileProvider(std::map<std::string, double> table, double threshold,
                           std::string origin)
    : table_(std::move(table)), threshold_(threshold), origin_(std::move(origin)) {
  for (const auto& [id, p] : table_) make_prediction(p, threshold_, "file:" + origin_);
}

std::unique_ptr<FileProvider> FileProvider::open(const std::string& path, double threshold) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
  if (!j.is_object())
    throw Error(ErrorCode::kFormat, path + ": expected a JSON object of id -> probability");
  std::map<std::string, double> table;
  for (const auto& [id, v] : j.items()) {
    if (!v.is_number()) throw Error(ErrorCode::kFormat, path + ": non-numeric entry for " + id);
    table.emplace(id, v.get<double>());
  }
  return std::make_unique<FileProvider>(std::move(table), threshold, path);
}

ModelPrediction FileProvider::predict(const corpus::FunctionRecord& fn) const {
  auto it = table_.find(fn.id);
  if (it == table_.end())
    throw Error(ErrorCode::kNotFound, "file provider " + origin_ + " has no probability for id \"" +
                                          fn.id + "\"");
  return make_prediction(it->second, threshold_, id());
}

std::vector<ModelPrediction> FileProvider::predict_batch(
    const std::vector<const corpus::FunctionRecord*>& fns) const {
  std::vector<std::string> missing;
  for (const auto* fn : fns)
    if (!table_.count(fn->id)) missing.push_back(fn->id);
  if (!missing.empty())
    throw Error(ErrorCode::kNotFound,
                "file provider " + origin_ + " has no probability for ids [" + join_ids(missing) + "]");
  return Provider::predict_batch(fns);
}

// ---- builtin provider ----------------------------------------------------

BuiltinProvider::BuiltinProvider(BuiltinClassifier model, double threshold)
    : model_(std::move(model)), threshold_(threshold) {}

ModelPrediction BuiltinProvider::predict(const corpus::FunctionRecord& fn) const {
  return make_prediction(model_.predict_proba(fn.source), threshold_, id());
}

std::string BuiltinProvider::id() const { return "builtin:" + model_.fingerprint(); }

// ---- http provider -------------------------------------------------------

struct HttpProvider::Impl {
  Impl(const ProviderConfig& c)
      : endpoint(c.location, std::chrono::milliseconds(c.timeout_ms)), in_flight(c.max_in_flight) {}
  net::HttpEndpoint endpoint;
  mutable Semaphore in_flight;
};

HttpProvider::HttpProvider(const ProviderConfig& config)
    : config_(config), impl_(std::make_unique<Impl>(config)) {
  config_.validate();
}

HttpProvider::~HttpProvider() = default;

namespace {

json parse_body(const net::HttpResponse& r, const std::string& where) {
  if (r.status != 200)
    throw Error(ErrorCode::kProtocol, where + " returned HTTP " + std::to_string(r.status));
  try {
    return json::parse(r.body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kProtocol, where + " returned malformed JSON: " + e.what());
  }
}

}  // namespace

ModelPrediction HttpProvider::predict(const corpus::FunctionRecord& fn) const {
  SemaphoreGuard guard(impl_->in_flight);
  const json body = {{"id", fn.id}, {"code", fn.source}};
  json reply = parse_body(impl_->endpoint.post_json("/predict", body.dump()), id() + "/predict");
  auto p = reply.find("probability");
  if (p == reply.end() || !p->is_number())
    throw Error(ErrorCode::kProtocol, id() + "/predict reply lacks a numeric \"probability\"");
  return make_prediction(p->get<double>(), config_.threshold, id());
}

std::vector<ModelPrediction> HttpProvider::predict_batch(
    const std::vector<const corpus::FunctionRecord*>& fns) const {
  if (fns.empty()) return {};
  SemaphoreGuard guard(impl_->in_flight);
  json ids = json::array(), codes = json::array();
  for (const auto* fn : fns) {
    ids.push_back(fn->id);
    codes.push_back(fn->source);
  }
  const json body = {{"ids", ids}, {"codes", codes}};
  json reply = parse_body(impl_->endpoint.post_json("/predict_batch", body.dump()),
                          id() + "/predict_batch");
  auto ps = reply.find("probabilities");
  if (ps == reply.end() || !ps->is_array() || ps->size() != fns.size())
    throw Error(ErrorCode::kProtocol,
                id() + "/predict_batch reply must carry one probability per id");
  std::vector<ModelPrediction> out;
  std::vector<std::string> failed;
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const auto& v = (*ps)[i];
    try {
      if (!v.is_number()) throw Error(ErrorCode::kProtocol, "non-numeric probability");
      out.push_back(make_prediction(v.get<double>(), config_.threshold, id()));
    } catch (const Error&) {
      failed.push_back(fns[i]->id);
    }
  }
  if (!failed.empty())
    throw Error(ErrorCode::kProtocol,
                id() + "/predict_batch returned invalid probabilities for ids [" + join_ids(failed) + "]");
  return out;
}

bool HttpProvider::healthy() const {
  try {
    return impl_->endpoint.get("/health").status == 200;
  } catch (const Error&) {
    return false;
  }
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& config, const corpus::Corpus* train,
                                        const TrainParams& params) {
  config.validate();
  switch (config.kind) {
    case ProviderKind::kFile:
      return FileProvider::open(config.location, config.threshold);
    case ProviderKind::kHttp:
      return std::make_unique<HttpProvider>(config);
    case ProviderKind::kBuiltin:
      if (!config.location.empty())
        return std::make_unique<BuiltinProvider>(BuiltinClassifier::load(config.location),
                                                 config.threshold);
      if (train == nullptr)
        throw Error(ErrorCode::kPrecondition,
                    "builtin provider without a model file needs a training corpus");
      return std::make_unique<BuiltinProvider>(BuiltinClassifier::train(*train, params),
                                               config.threshold);
  }
  throw Error(ErrorCode::kInternal, "unhandled provider kind");
}

}  // namespace dlap::modelplug
