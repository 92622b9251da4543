#pragma once

// Labeled datasets and the small classifiers used as students and as
// artificial-crowd members: softmax regression and a one-hidden-layer MLP,
// trained by mini-batch SGD or AdamW with decoupled weight decay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "irtcl/csv.hpp"
#include "irtcl/curriculum.hpp"
#include "irtcl/error.hpp"
#include "irtcl/rasch.hpp"

namespace irtcl {

/// Row-major feature matrix with integer class labels in [0, n_classes).
struct LabeledDataset {
  std::vector<ItemId> ids;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<TextFields> texts;  // empty, or one entry per item

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  bool has_text() const noexcept { return !texts.empty(); }

  std::span<const double> row(std::size_t k) const {
    return std::span<const double>(features).subspan(k * n_features, n_features);
  }

  void validate() const {
    require(labels.size() == ids.size(), "dataset: label count differs from item count");
    require(features.size() == ids.size() * n_features, "dataset: feature matrix has the wrong size");
    require(texts.empty() || texts.size() == ids.size(), "dataset: text count differs from item count");
    for (int y : labels)
      require(y >= 0 && static_cast<std::size_t>(y) < n_classes, "dataset: label out of range");
  }

  std::size_t distinct_labels() const {
    std::vector<bool> seen(n_classes, false);
    std::size_t n = 0;
    for (int y : labels)
      if (!seen[y]) {
        seen[y] = true;
        ++n;
      }
    return n;
  }

  /// Subset in the given index order.
  LabeledDataset subset(std::span<const std::size_t> idx) const {
    LabeledDataset out;
    out.n_features = n_features;
    out.n_classes = n_classes;
    out.ids.reserve(idx.size());
    out.labels.reserve(idx.size());
    out.features.reserve(idx.size() * n_features);
    for (std::size_t k : idx) {
      out.ids.push_back(ids[k]);
      out.labels.push_back(labels[k]);
      auto r = row(k);
      out.features.insert(out.features.end(), r.begin(), r.end());
      if (has_text()) out.texts.push_back(texts[k]);
    }
    return out;
  }

  TextCorpus text_corpus() const {
    require(has_text(), "dataset has no text column");
    TextCorpus c;
    for (std::size_t k = 0; k < size(); ++k) c.emplace(ids[k], texts[k]);
    return c;
  }
};

/// Dataset CSV: `item_id,f1..fd,label[,text[,text2]]`; labels are class indices.
/// `n_classes` of 0 infers max label + 1.
inline LabeledDataset parse_dataset_csv(const csv::Table& t, std::size_t n_classes = 0) {
  const auto& h = t.header();
  auto ci = t.col("item_id");
  auto cl = t.col("label");
  std::vector<std::size_t> fcols;
  for (std::size_t d = 1;; ++d) {
    std::string name = "f" + std::to_string(d);
    if (!t.has(name)) break;
    fcols.push_back(t.col(name));
  }
  require(!fcols.empty(), t.source() + ": no feature columns f1..fd");
  for (const auto& name : h) {
    bool known = name == "item_id" || name == "label" || name == "text" || name == "text2" ||
                 (name.size() > 1 && name[0] == 'f' &&
                  std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; }));
    require(known, t.source() + ": unexpected column '" + name + "'");
  }
  std::optional<std::size_t> ct, ct2;
  if (t.has("text")) ct = t.col("text");
  if (t.has("text2")) ct2 = t.col("text2");

  LabeledDataset ds;
  ds.n_features = fcols.size();
  int max_label = -1;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& row : t.rows()) {
    auto where = t.where(row);
    ItemId id(row.fields[ci]);
    if (!seen.emplace(id.str(), row.line).second) throw ValidationError(where + ": duplicate item '" + id.str() + "'");
    ds.ids.push_back(id);
    for (auto c : fcols) {
      double v = csv::to_double(row.fields[c], where);
      require(std::isfinite(v), where + ": non-finite feature");
      ds.features.push_back(v);
    }
    auto y = csv::to_int(row.fields[cl], where);
    require(y >= 0, where + ": labels must be non-negative class indices");
    ds.labels.push_back(static_cast<int>(y));
    max_label = std::max(max_label, static_cast<int>(y));
    if (ct) {
      TextFields f{row.fields[*ct]};
      if (ct2) f.push_back(row.fields[*ct2]);
      ds.texts.push_back(std::move(f));
    }
  }
  ds.n_classes = n_classes ? n_classes : static_cast<std::size_t>(max_label + 1);
  ds.validate();
  return ds;
}

inline LabeledDataset read_dataset(const std::filesystem::path& path, std::size_t n_classes = 0) {
  return parse_dataset_csv(csv::read(path), n_classes);
}

inline std::string format_dataset_csv(const LabeledDataset& ds) {
  std::vector<std::string> header{"item_id"};
  for (std::size_t d = 1; d <= ds.n_features; ++d) header.push_back("f" + std::to_string(d));
  header.push_back("label");
  std::size_t n_text = ds.has_text() ? ds.texts.front().size() : 0;
  if (n_text >= 1) header.push_back("text");
  if (n_text >= 2) header.push_back("text2");
  std::string out;
  csv::append_row(out, header);
  std::vector<std::string> fields;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    fields.clear();
    fields.push_back(ds.ids[k].str());
    for (double v : ds.row(k)) fields.push_back(csv::fmt(v));
    fields.push_back(std::to_string(ds.labels[k]));
    for (std::size_t f = 0; f < n_text; ++f) fields.push_back(f < ds.texts[k].size() ? ds.texts[k][f] : "");
    csv::append_row(out, fields);
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  csv::write_atomic(path, format_dataset_csv(ds));
}

// ---- models -------------------------------------------------------------------

enum class ModelKind { logistic, mlp };

struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  std::size_t hidden = 0;  // mlp only

  bool operator==(const ModelSpec&) const = default;
};

/// Softmax regression or ReLU MLP over a fixed subset of input features.
/// Parameters live in one flat vector:
///   logistic: W[k][d], b[k]
///   mlp:      W1[h][d], b1[h], W2[k][h], b2[k]
class Classifier {
public:
  Classifier() = default;

  /// `feature_mask` lists the input columns the model reads (empty = all).
  Classifier(ModelSpec spec, std::size_t n_inputs, std::size_t n_classes, std::uint64_t seed,
             std::vector<std::size_t> feature_mask = {})
      : spec_(spec), n_inputs_(n_inputs), n_classes_(n_classes), mask_(std::move(feature_mask)) {
    require(n_classes >= 2, "classifier: need at least two classes");
    require(n_inputs >= 1, "classifier: need at least one feature");
    if (mask_.empty())
      for (std::size_t d = 0; d < n_inputs; ++d) mask_.push_back(d);
    for (auto d : mask_) require(d < n_inputs, "classifier: feature mask out of range");
    dense_ = mask_.size() == n_inputs;
    for (std::size_t d = 0; dense_ && d < mask_.size(); ++d) dense_ = mask_[d] == d;
    require(spec_.kind == ModelKind::logistic || spec_.hidden >= 1, "classifier: mlp needs hidden >= 1");
    params_.assign(n_params(), 0.0);
    if (spec_.kind == ModelKind::mlp) {
      // He-uniform first layer, Glorot-uniform output layer, zero biases.
      std::mt19937_64 rng(seed);
      double a1 = std::sqrt(6.0 / static_cast<double>(width()));
      double a2 = std::sqrt(6.0 / static_cast<double>(spec_.hidden + n_classes_));
      std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
      for (std::size_t k = 0; k < spec_.hidden * width(); ++k) params_[k] = u1(rng);
      std::size_t w2 = spec_.hidden * width() + spec_.hidden;
      for (std::size_t k = 0; k < n_classes_ * spec_.hidden; ++k) params_[w2 + k] = u2(rng);
    }
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  std::size_t n_inputs() const noexcept { return n_inputs_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  const std::vector<std::size_t>& feature_mask() const noexcept { return mask_; }
  std::size_t width() const noexcept { return mask_.size(); }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }

  std::size_t n_params() const {
    if (spec_.kind == ModelKind::logistic) return n_classes_ * width() + n_classes_;
    return spec_.hidden * width() + spec_.hidden + n_classes_ * spec_.hidden + n_classes_;
  }

  /// Class probabilities for one input row. `scratch` must hold hidden units.
  void probabilities(std::span<const double> x, std::span<double> probs, std::span<double> hidden_out) const {
    const std::size_t d = width();
    const double* p = params_.data();
    std::span<const double> in;
    std::size_t in_dim = 0;
    if (spec_.kind == ModelKind::mlp) {
      const double* w1 = p;
      const double* b1 = p + spec_.hidden * d;
      for (std::size_t h = 0; h < spec_.hidden; ++h) {
        double a = b1[h];
        const double* wr = w1 + h * d;
        a += dot_input(wr, x);
        hidden_out[h] = a > 0 ? a : 0.0;
      }
      in = std::span<const double>(hidden_out.data(), spec_.hidden);
      in_dim = spec_.hidden;
      p = b1 + spec_.hidden;
    }
    const double* w = p;
    const double* b = p + n_classes_ * (spec_.kind == ModelKind::mlp ? in_dim : d);
    double mx = -INFINITY;
    for (std::size_t k = 0; k < n_classes_; ++k) {
      double a = b[k];
      if (spec_.kind == ModelKind::mlp) {
        const double* wr = w + k * in_dim;
        for (std::size_t c = 0; c < in_dim; ++c) a += wr[c] * in[c];
      } else {
        a += dot_input(w + k * d, x);
      }
      probs[k] = a;
      mx = std::max(mx, a);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < n_classes_; ++k) {
      probs[k] = std::exp(probs[k] - mx);
      z += probs[k];
    }
    for (std::size_t k = 0; k < n_classes_; ++k) probs[k] /= z;
  }

  /// Adds the gradient of the mean cross-entropy over `batch` to `grad`;
  /// returns the number of correct argmax predictions in the batch.
  std::size_t accumulate_gradient(const LabeledDataset& data, std::span<const std::size_t> batch,
                                  std::span<double> grad, double& loss) const {
    const std::size_t d = width();
    std::vector<double> probs(n_classes_), hid(spec_.hidden), dh(spec_.hidden);
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::size_t correct = 0;
    for (std::size_t idx : batch) {
      auto x = data.row(idx);
      int y = data.labels[idx];
      probabilities(x, probs, hid);
      if (argmax(probs) == y) ++correct;
      loss -= std::log(std::max(probs[y], 1e-300)) * scale;
      // dL/dlogit = p - onehot(y)
      for (std::size_t k = 0; k < n_classes_; ++k) probs[k] = (probs[k] - (static_cast<int>(k) == y)) * scale;
      if (spec_.kind == ModelKind::logistic) {
        double* gw = grad.data();
        double* gb = gw + n_classes_ * d;
        for (std::size_t k = 0; k < n_classes_; ++k) {
          double g = probs[k];
          double* gr = gw + k * d;
          add_input(gr, g, x);
          gb[k] += g;
        }
      } else {
        const std::size_t H = spec_.hidden;
        const double* w2 = params_.data() + H * d + H;
        double* gw1 = grad.data();
        double* gb1 = gw1 + H * d;
        double* gw2 = gb1 + H;
        double* gb2 = gw2 + n_classes_ * H;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t k = 0; k < n_classes_; ++k) {
          double g = probs[k];
          const double* wr = w2 + k * H;
          double* gr = gw2 + k * H;
          for (std::size_t h = 0; h < H; ++h) {
            gr[h] += g * hid[h];
            dh[h] += g * wr[h];
          }
          gb2[k] += g;
        }
        for (std::size_t h = 0; h < H; ++h) {
          if (hid[h] <= 0) continue;
          double g = dh[h];
          double* gr = gw1 + h * d;
          add_input(gr, g, x);
          gb1[h] += g;
        }
      }
    }
    return correct;
  }

  /// sum_c w[c] * x[mask[c]], contiguous when the mask is the identity.
  double dot_input(const double* w, std::span<const double> x) const {
    const std::size_t d = width();
    double a = 0.0;
    if (dense_) {
      const double* xp = x.data();
      for (std::size_t c = 0; c < d; ++c) a += w[c] * xp[c];
    } else {
      for (std::size_t c = 0; c < d; ++c) a += w[c] * x[mask_[c]];
    }
    return a;
  }

  /// g[c] += s * x[mask[c]].
  void add_input(double* g, double s, std::span<const double> x) const {
    const std::size_t d = width();
    if (dense_) {
      const double* xp = x.data();
      for (std::size_t c = 0; c < d; ++c) g[c] += s * xp[c];
    } else {
      for (std::size_t c = 0; c < d; ++c) g[c] += s * x[mask_[c]];
    }
  }

  /// Lowest index among the maxima.
  static int argmax(std::span<const double> probs) {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }

  bool operator==(const Classifier& o) const {
    return spec_ == o.spec_ && n_inputs_ == o.n_inputs_ && n_classes_ == o.n_classes_ && mask_ == o.mask_ &&
           params_ == o.params_;
  }

private:
  ModelSpec spec_;
  std::size_t n_inputs_ = 0;
  std::size_t n_classes_ = 0;
  std::vector<std::size_t> mask_;
  std::vector<double> params_;
  bool dense_ = false;
};

struct Predictions {
  std::vector<int> labels;
  std::vector<double> probs;  // row-major [n][n_classes]
  std::size_t n_classes = 0;

  double prob(std::size_t k, int cls) const { return probs[k * n_classes + static_cast<std::size_t>(cls)]; }
};

/// Argmax labels and class probabilities. Deterministic given model state.
inline Predictions predict(const Classifier& model, const LabeledDataset& data) {
  if (!data.empty())
    require(data.n_features == model.n_inputs(), "predict: dataset has " + std::to_string(data.n_features) +
                                                      " features, model expects " + std::to_string(model.n_inputs()));
  Predictions out;
  out.n_classes = model.n_classes();
  out.labels.resize(data.size());
  out.probs.resize(data.size() * model.n_classes());
  std::vector<double> hid(model.spec().hidden);
  for (std::size_t k = 0; k < data.size(); ++k) {
    std::span<double> p(out.probs.data() + k * out.n_classes, out.n_classes);
    model.probabilities(data.row(k), p, hid);
    out.labels[k] = Classifier::argmax(p);
  }
  return out;
}

/// Labels only, for a subset of rows.
inline std::vector<int> predict_labels(const Classifier& model, const LabeledDataset& data,
                                       std::span<const std::size_t> rows) {
  require(data.n_features == model.n_inputs(), "predict: feature dimension mismatch");
  std::vector<double> probs(model.n_classes()), hid(model.spec().hidden);
  std::vector<int> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    model.probabilities(data.row(rows[k]), probs, hid);
    out[k] = Classifier::argmax(probs);
  }
  return out;
}

inline double accuracy(const Classifier& model, const LabeledDataset& data) {
  if (data.empty()) return 0.0;
  auto p = predict(model, data);
  std::size_t c = 0;
  for (std::size_t k = 0; k < data.size(); ++k) c += p.labels[k] == data.labels[k];
  return static_cast<double>(c) / static_cast<double>(data.size());
}

// ---- optimizer ----------------------------------------------------------------

enum class OptimizerKind { sgd, adamw };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.1;
  double weight_decay = 0.0;  // decoupled: w <- w - lr * wd * w
  double momentum = 0.9;      // sgd only

  bool operator==(const OptimizerConfig&) const = default;
};

class Optimizer {
public:
  Optimizer(const OptimizerConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, std::span<const double> grad) {
    ++t_;
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
    if (cfg_.kind == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        m_[k] = cfg_.momentum * m_[k] + grad[k];
        params[k] = params[k] * decay - cfg_.lr * m_[k];
      }
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = b1 * m_[k] + (1 - b1) * grad[k];
      v_[k] = b2 * v_[k] + (1 - b2) * grad[k] * grad[k];
      params[k] = params[k] * decay - cfg_.lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps);
    }
  }

private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

/// One pass of mini-batch training over `rows` in the given order.
/// Returns the fraction of rows classified correctly as they were visited.
inline double train_epoch(Classifier& model, Optimizer& opt, const LabeledDataset& data,
                          std::span<const std::size_t> rows, std::size_t batch_size, double* mean_loss = nullptr) {
  require(batch_size >= 1, "train_epoch: batch_size must be >= 1");
  std::vector<double> grad(model.n_params());
  std::size_t correct = 0;
  double loss_sum = 0.0;
  std::size_t n_batches = 0;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    auto batch = rows.subspan(start, std::min(batch_size, rows.size() - start));
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    correct += model.accumulate_gradient(data, batch, grad, loss);
    if (!std::isfinite(loss)) throw RuntimeError("train_epoch: non-finite loss");
    loss_sum += loss;
    ++n_batches;
    opt.step(model.params(), grad);
  }
  if (mean_loss) *mean_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
  return rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(rows.size());
}

// ---- checkpoint ---------------------------------------------------------------

inline nlohmann::json classifier_to_json(const Classifier& m) {
  return {{"kind", m.spec().kind == ModelKind::logistic ? "logistic" : "mlp"},
          {"hidden", m.spec().hidden},
          {"n_inputs", m.n_inputs()},
          {"n_classes", m.n_classes()},
          {"feature_mask", m.feature_mask()},
          {"params", m.params()}};
}

inline Classifier classifier_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  auto kind = j.at("kind").get<std::string>();
  require(kind == "logistic" || kind == "mlp", "checkpoint: unknown model kind '" + kind + "'");
  spec.kind = kind == "logistic" ? ModelKind::logistic : ModelKind::mlp;
  spec.hidden = j.at("hidden").get<std::size_t>();
  Classifier m(spec, j.at("n_inputs").get<std::size_t>(), j.at("n_classes").get<std::size_t>(), 0,
               j.at("feature_mask").get<std::vector<std::size_t>>());
  auto params = j.at("params").get<std::vector<double>>();
  require(params.size() == m.n_params(), "checkpoint: parameter count mismatch");
  m.params() = std::move(params);
  return m;
}

}  // namespace irtcl
