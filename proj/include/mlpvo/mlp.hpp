#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpvo/features.hpp"
#include "mlpvo/text_io.hpp"

namespace mlpvo {

constexpr int kFeatureDim = 3;
constexpr int kClassCount = 2;  // index 0 = static, 1 = dynamic

/// Fully-connected classifier with rectifier hidden layers and a softmax
/// output, plus the zero-mean normalization statistics fitted on the
/// training split. The discriminator configuration is 3-10-10-2.
struct MlpModel {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::Vector3d norm_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d norm_std = Eigen::Vector3d::Ones();

  std::size_t layer_count() const { return weights.size(); }
};

struct Prediction {
  Eigen::Vector2d probs = Eigen::Vector2d::Zero();
  int label = 0;
};

struct TrainConfig {
  int epochs = 150;
  int batch_size = 8;
  double learning_rate = 0.1;
  double lr_decay_gamma = 0.1;
  std::vector<int> lr_milestones = {75, 120};
  std::uint64_t seed = 0;
  // adaptive-moment optimizer constants
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  bool valid() const {
    if (epochs <= 0 || batch_size <= 0) return false;
    if (!(lr_decay_gamma > 0.0 && lr_decay_gamma <= 1.0)) return false;
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
      if (lr_milestones[i] >= epochs) return false;
      if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) return false;
    }
    return true;
  }
};

struct LabeledFeature {
  FeatureVector feature;
  int label = 0;  // 0 static, 1 dynamic
};

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> history;
  int best_epoch = 0;  // zero-based index into history
};

inline Eigen::Vector3d to_input(const FeatureVector& v) {
  return Eigen::Vector3d(v.intensity, v.epipolar, v.reprojection);
}

inline Eigen::Vector3d normalize(const FeatureVector& v, const Eigen::Vector3d& mean,
                                 const Eigen::Vector3d& stddev) {
  return (to_input(v) - mean).cwiseQuotient(stddev);
}

/// Population mean/stddev per feature dimension. Throws when a dimension is
/// constant; a zero divisor cannot be normalized with.
inline void fit_normalization(std::span<const LabeledFeature> data,
                              Eigen::Vector3d& mean, Eigen::Vector3d& stddev) {
  if (data.empty()) {
    throw std::invalid_argument("fit_normalization: empty data");
  }
  mean.setZero();
  for (const auto& s : data) mean += to_input(s.feature);
  mean /= static_cast<double>(data.size());
  Eigen::Vector3d var = Eigen::Vector3d::Zero();
  for (const auto& s : data) {
    const Eigen::Vector3d d = to_input(s.feature) - mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(data.size());
  stddev = var.cwiseSqrt();
  for (int j = 0; j < kFeatureDim; ++j) {
    if (!(stddev[j] > 0.0)) {
      throw std::invalid_argument("fit_normalization: feature dimension " +
                                  std::to_string(j) + " is constant");
    }
  }
}

/// Builds the 3-10-10-2 discriminator with uniform +-sqrt(6/(fan_in+fan_out))
/// weights and zero biases.
inline MlpModel make_discriminator_model(std::uint64_t seed,
                                         const std::vector<int>& layer_sizes = {3, 10, 10,
                                                                                2}) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("make_discriminator_model: need at least two layers");
  }
  std::mt19937_64 rng(seed);
  MlpModel m;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return m;
}

namespace detail {

/// Per-layer pre-activations and activations for one batch (columns are
/// samples). activations[0] is the input; probs holds the softmax output.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre_activations;
  std::vector<Eigen::MatrixXd> activations;
  Eigen::MatrixXd probs;
};

inline void forward_batch(const MlpModel& m, const Eigen::MatrixXd& inputs,
                          ForwardCache& cache) {
  const std::size_t layers = m.layer_count();
  cache.pre_activations.assign(layers, Eigen::MatrixXd());
  cache.activations.assign(layers + 1, Eigen::MatrixXd());
  cache.activations[0] = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    cache.pre_activations[l] =
        (m.weights[l] * cache.activations[l]).colwise() + m.biases[l];
    if (l + 1 < layers) {
      cache.activations[l + 1] = cache.pre_activations[l].cwiseMax(0.0);
    } else {
      cache.activations[l + 1] = cache.pre_activations[l];
    }
  }
  // column-wise stable softmax over the two output logits
  const Eigen::MatrixXd& logits = cache.activations[layers];
  Eigen::RowVectorXd max = logits.colwise().maxCoeff();
  Eigen::MatrixXd shifted = logits.rowwise() - max;
  Eigen::MatrixXd exps = shifted.array().exp();
  Eigen::RowVectorXd sums = exps.colwise().sum();
  cache.probs = exps.array().rowwise() / sums.array();
}

}  // namespace detail

/// Forward pass on an already normalized input.
inline Prediction forward(const MlpModel& m, const Eigen::Vector3d& x) {
  detail::ForwardCache cache;
  detail::forward_batch(m, x, cache);
  Prediction p;
  p.probs = cache.probs.col(0);
  Eigen::Index label = 0;
  p.probs.maxCoeff(&label);
  p.label = static_cast<int>(label);
  return p;
}

/// Binary cross-entropy on the dynamic-class probability, clamped away from
/// the log singularities.
inline double bce_loss(int label_true, double prob_dynamic) {
  constexpr double kEps = 1e-12;
  const double p = std::clamp(prob_dynamic, kEps, 1.0 - kEps);
  return label_true == 1 ? -std::log(p) : -std::log(1.0 - p);
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Analytic gradient of the mean batch BCE over all parameters. inputs holds
/// one normalized sample per column. Returns the mean loss.
inline double backward(const MlpModel& m, const Eigen::MatrixXd& inputs,
                       std::span<const int> labels, Gradients& grads) {
  const auto batch = static_cast<std::size_t>(inputs.cols());
  if (batch == 0 || labels.size() != batch) {
    throw std::invalid_argument("backward: bad batch");
  }
  detail::ForwardCache cache;
  detail::forward_batch(m, inputs, cache);

  const std::size_t layers = m.layer_count();
  grads.weights.assign(layers, Eigen::MatrixXd());
  grads.biases.assign(layers, Eigen::VectorXd());

  double loss = 0.0;
  // softmax + cross-entropy: d(loss)/d(logits) = probs - onehot(label)
  Eigen::MatrixXd delta = cache.probs;
  for (std::size_t i = 0; i < batch; ++i) {
    loss += bce_loss(labels[i], cache.probs(1, i));
    delta(labels[i] == 1 ? 1 : 0, static_cast<Eigen::Index>(i)) -= 1.0;
  }
  loss /= static_cast<double>(batch);
  delta /= static_cast<double>(batch);

  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l] = delta * cache.activations[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (m.weights[l].transpose() * delta)
                  .cwiseProduct((cache.pre_activations[l - 1].array() > 0.0)
                                    .cast<double>()
                                    .matrix());
    }
  }
  return loss;
}

namespace detail {

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  std::int64_t step = 0;

  explicit AdamState(const MlpModel& model) {
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
      m_w.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
      v_w.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
      m_b.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
      v_b.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
  }
};

template <typename Param>
void adam_update(Param& param, const Param& grad, Param& m, Param& v, double lr,
                 const TrainConfig& cfg, double bias1, double bias2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  param.array() -=
      lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + cfg.adam_epsilon);
}

inline void adam_step(MlpModel& model, const Gradients& grads, AdamState& state,
                      double lr, const TrainConfig& cfg) {
  ++state.step;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    adam_update(model.weights[l], grads.weights[l], state.m_w[l], state.v_w[l], lr, cfg,
                bias1, bias2);
    adam_update(model.biases[l], grads.biases[l], state.m_b[l], state.v_b[l], lr, cfg,
                bias1, bias2);
  }
}

inline Eigen::MatrixXd normalized_inputs(const MlpModel& m,
                                         std::span<const LabeledFeature> data) {
  Eigen::MatrixXd inputs(kFeatureDim, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    inputs.col(static_cast<Eigen::Index>(i)) =
        normalize(data[i].feature, m.norm_mean, m.norm_std);
  }
  return inputs;
}

/// Mean loss and accuracy over a whole set, evaluated in chunks.
inline std::pair<double, double> evaluate(const MlpModel& m,
                                          std::span<const LabeledFeature> data) {
  constexpr std::size_t kChunk = 1024;
  double loss = 0.0;
  std::size_t correct = 0;
  ForwardCache cache;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - start);
    Eigen::MatrixXd inputs = normalized_inputs(m, data.subspan(start, count));
    forward_batch(m, inputs, cache);
    for (std::size_t i = 0; i < count; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      loss += bce_loss(data[start + i].label, cache.probs(1, col));
      const int predicted = cache.probs(1, col) > cache.probs(0, col) ? 1 : 0;
      correct += static_cast<std::size_t>(predicted == data[start + i].label);
    }
  }
  return {loss / static_cast<double>(data.size()),
          static_cast<double>(correct) / static_cast<double>(data.size())};
}

}  // namespace detail

/// Multi-step learning rate: multiplied by gamma at every milestone epoch
/// (zero-based) reached so far.
inline double learning_rate_at(const TrainConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (int milestone : cfg.lr_milestones) {
    if (epoch >= milestone) lr *= cfg.lr_decay_gamma;
  }
  return lr;
}

/// Trains the discriminator. Normalization statistics come from the training
/// split only. The returned model is the epoch with the best validation
/// accuracy (ties: lower validation loss, then earlier epoch).
inline TrainResult train(std::span<const LabeledFeature> train_set,
                         std::span<const LabeledFeature> val_set,
                         const TrainConfig& cfg) {
  if (!cfg.valid()) {
    throw std::invalid_argument("train: invalid config");
  }
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train: empty train or validation set");
  }
  bool has_static = false;
  bool has_dynamic = false;
  for (const auto& s : train_set) {
    has_static |= s.label == 0;
    has_dynamic |= s.label == 1;
  }
  if (!has_static || !has_dynamic) {
    throw std::invalid_argument("train: training data has a single class");
  }

  MlpModel model = make_discriminator_model(cfg.seed);
  fit_normalization(train_set, model.norm_mean, model.norm_std);

  detail::AdamState adam(model);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.best_epoch = -1;
  double best_val_accuracy = -1.0;
  double best_val_loss = std::numeric_limits<double>::infinity();

  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  Eigen::MatrixXd batch_inputs;
  std::vector<int> batch_labels;
  Gradients grads;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      batch_inputs.resize(kFeatureDim, static_cast<Eigen::Index>(count));
      batch_labels.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto& sample = train_set[order[start + i]];
        batch_inputs.col(static_cast<Eigen::Index>(i)) =
            normalize(sample.feature, model.norm_mean, model.norm_std);
        batch_labels[i] = sample.label;
      }
      epoch_loss += backward(model, batch_inputs, batch_labels, grads);
      detail::adam_step(model, grads, adam, lr, cfg);
      ++batches;
    }

    EpochStats stats;
    stats.learning_rate = lr;
    stats.train_loss = epoch_loss / static_cast<double>(batches);
    std::tie(std::ignore, stats.train_accuracy) = detail::evaluate(model, train_set);
    std::tie(stats.val_loss, stats.val_accuracy) = detail::evaluate(model, val_set);
    result.history.push_back(stats);

    const bool better =
        stats.val_accuracy > best_val_accuracy ||
        (stats.val_accuracy == best_val_accuracy && stats.val_loss < best_val_loss);
    if (better) {
      best_val_accuracy = stats.val_accuracy;
      best_val_loss = stats.val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

/// Normalizes with the stored statistics and forwards every sample through
/// the same code path as forward(), so batched and one-at-a-time prediction
/// are bit-identical.
inline std::vector<Prediction> predict_batch(const MlpModel& m,
                                             std::span<const FeatureVector> features) {
  std::vector<Prediction> predictions;
  predictions.reserve(features.size());
  for (const FeatureVector& v : features) {
    predictions.push_back(forward(m, normalize(v, m.norm_mean, m.norm_std)));
  }
  return predictions;
}

inline Prediction predict(const MlpModel& m, const FeatureVector& v) {
  return forward(m, normalize(v, m.norm_mean, m.norm_std));
}

// --- model file format (text, "mlp-v1") ------------------------------------

inline void save_model(const MlpModel& m, std::ostream& out) {
  out << "mlp-v1\n";
  out << "norm_mean";
  for (int j = 0; j < kFeatureDim; ++j) out << ' ' << format_double(m.norm_mean[j]);
  out << "\nnorm_std";
  for (int j = 0; j < kFeatureDim; ++j) out << ' ' << format_double(m.norm_std[j]);
  out << '\n';
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    const auto& w = m.weights[l];
    out << 'W' << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (c > 0) out << ' ';
        out << format_double(w(r, c));
      }
      out << '\n';
    }
    const auto& b = m.biases[l];
    out << 'b' << l << ' ' << b.size() << '\n';
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      if (r > 0) out << ' ';
      out << format_double(b[r]);
    }
    out << '\n';
  }
}

inline MlpModel load_model(std::istream& in) {
  const auto fail = [](const std::string& what) -> MlpModel {
    throw std::runtime_error("load_model: " + what);
  };

  std::string header;
  if (!std::getline(in, header) || trim(header) != "mlp-v1") {
    return fail("missing mlp-v1 header");
  }
  // token stream from here on; the layout is self-describing
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  std::size_t pos = 0;
  const auto next = [&](const char* what) -> const std::string& {
    if (pos >= tokens.size()) fail(std::string("truncated file, expected ") + what);
    return tokens[pos++];
  };
  const auto next_double = [&](const char* what) {
    double v = 0.0;
    if (!parse_double(next(what), v)) fail(std::string("bad number in ") + what);
    return v;
  };

  MlpModel m;
  if (next("norm_mean") != "norm_mean") fail("expected norm_mean");
  for (int j = 0; j < kFeatureDim; ++j) m.norm_mean[j] = next_double("norm_mean");
  if (next("norm_std") != "norm_std") fail("expected norm_std");
  for (int j = 0; j < kFeatureDim; ++j) m.norm_std[j] = next_double("norm_std");

  while (pos < tokens.size()) {
    const std::string w_tag = "W" + std::to_string(m.layer_count());
    const std::string b_tag = "b" + std::to_string(m.layer_count());
    if (next(w_tag.c_str()) != w_tag) fail("expected " + w_tag);
    const auto rows = static_cast<Eigen::Index>(next_double("rows"));
    const auto cols = static_cast<Eigen::Index>(next_double("cols"));
    if (rows <= 0 || cols <= 0) fail("bad matrix shape");
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = next_double("weight");
    }
    if (next(b_tag.c_str()) != b_tag) fail("expected " + b_tag);
    const auto n = static_cast<Eigen::Index>(next_double("bias size"));
    if (n != rows) fail("bias size does not match weight rows");
    Eigen::VectorXd b(n);
    for (Eigen::Index r = 0; r < n; ++r) b[r] = next_double("bias");
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  if (m.layer_count() == 0) fail("no layers");
  if (m.weights.front().cols() != kFeatureDim) fail("input dimension mismatch");
  if (m.weights.back().rows() != kClassCount) fail("output dimension mismatch");
  return m;
}

}  // namespace mlpvo
