#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "mlpvo/mlp.hpp"

using namespace mlpvo;

namespace {

MlpModel zero_model() {
  MlpModel m;
  m.weights = {Eigen::MatrixXd::Zero(10, 3), Eigen::MatrixXd::Zero(10, 10),
               Eigen::MatrixXd::Zero(2, 10)};
  m.biases = {Eigen::VectorXd::Zero(10), Eigen::VectorXd::Zero(10),
              Eigen::VectorXd::Zero(2)};
  return m;
}

/// Mean batch BCE via the forward pass only; drives the finite differences.
double batch_loss(const MlpModel& m, const Eigen::MatrixXd& inputs,
                  const std::vector<int>& labels) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
    const Prediction p = forward(m, inputs.col(i));
    loss += bce_loss(labels[static_cast<std::size_t>(i)], p.probs[1]);
  }
  return loss / static_cast<double>(inputs.cols());
}

/// Rectifier on/off pattern; central differences are only valid when a probe
/// does not flip it.
std::vector<bool> relu_pattern(const MlpModel& m, const Eigen::MatrixXd& inputs) {
  std::vector<bool> pattern;
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l + 1 < m.layer_count(); ++l) {
    Eigen::MatrixXd z = (m.weights[l] * a).colwise() + m.biases[l];
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      for (Eigen::Index r = 0; r < z.rows(); ++r) pattern.push_back(z(r, c) > 0.0);
    }
    a = z.cwiseMax(0.0);
  }
  return pattern;
}

std::vector<LabeledFeature> two_clusters(std::size_t per_class, std::uint64_t seed,
                                         double spread = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, spread);
  std::vector<LabeledFeature> data;
  for (std::size_t i = 0; i < per_class; ++i) {
    data.push_back({FeatureVector{1.0 + g(rng), 0.01 + 0.002 * g(rng), 2.0 + g(rng)}, 0});
    data.push_back(
        {FeatureVector{12.0 + g(rng), 0.09 + 0.002 * g(rng), 40.0 + g(rng)}, 1});
  }
  return data;
}

std::string serialize(const MlpModel& m) {
  std::ostringstream out;
  save_model(m, out);
  return out.str();
}

}  // namespace

TEST_CASE("normalize maps mean to zero and mean+std to one") {
  const Eigen::Vector3d mean(1.0, 2.0, 3.0);
  const Eigen::Vector3d stddev(0.5, 4.0, 2.0);
  REQUIRE(normalize(FeatureVector{1.0, 2.0, 3.0}, mean, stddev).norm() == 0.0);
  REQUIRE((normalize(FeatureVector{1.5, 6.0, 5.0}, mean, stddev) -
           Eigen::Vector3d::Ones())
              .norm() < 1e-12);
}

TEST_CASE("fitted normalization statistics standardize the data") {
  const auto data = two_clusters(200, 5);
  Eigen::Vector3d mean, stddev;
  fit_normalization(data, mean, stddev);

  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sq = Eigen::Vector3d::Zero();
  for (const auto& s : data) {
    const Eigen::Vector3d z = normalize(s.feature, mean, stddev);
    sum += z;
    sq += z.cwiseProduct(z);
  }
  sum /= static_cast<double>(data.size());
  sq /= static_cast<double>(data.size());
  REQUIRE(sum.norm() < 1e-9);
  REQUIRE((sq - Eigen::Vector3d::Ones()).norm() < 1e-9);
}

TEST_CASE("fit_normalization rejects a constant dimension") {
  std::vector<LabeledFeature> data;
  for (int i = 0; i < 10; ++i) {
    data.push_back({FeatureVector{5.0, static_cast<double>(i), 1.0 * i}, i % 2});
  }
  Eigen::Vector3d mean, stddev;
  REQUIRE_THROWS_AS(fit_normalization(data, mean, stddev), std::invalid_argument);
}

TEST_CASE("all-zero parameters output equal probabilities") {
  const Prediction p = forward(zero_model(), Eigen::Vector3d(0.3, -0.2, 1.0));
  REQUIRE(p.probs[0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(p.probs[1] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(p.probs.sum() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("softmax output is shift invariant in the logits") {
  MlpModel m = make_discriminator_model(7);
  const Eigen::Vector3d x(0.4, -1.2, 0.9);
  const Prediction base = forward(m, x);
  m.biases.back().array() += 3.7;  // same constant on both output nodes
  const Prediction shifted = forward(m, x);
  REQUIRE((base.probs - shifted.probs).norm() < 1e-12);
  REQUIRE(base.label == shifted.label);
}

TEST_CASE("forward matches a pencil-and-paper network") {
  // 3 -> 1 -> 2 with hand-picked parameters
  MlpModel m;
  m.weights = {Eigen::MatrixXd(1, 3), Eigen::MatrixXd(2, 1)};
  m.weights[0] << 0.2, -0.4, 0.1;
  m.weights[1] << 2.0, -1.0;
  m.biases = {Eigen::VectorXd(1), Eigen::VectorXd(2)};
  m.biases[0] << 0.05;
  m.biases[1] << 0.1, -0.3;

  const Eigen::Vector3d x(1.0, 0.5, 0.25);
  // hidden pre-activation: 0.2 - 0.2 + 0.025 + 0.05 = 0.075, positive so the
  // rectifier passes it through; logits (2*0.075 + 0.1, -0.075 - 0.3)
  const double z0 = 0.25;
  const double z1 = -0.375;
  const double p1 = std::exp(z1) / (std::exp(z0) + std::exp(z1));
  const Prediction p = forward(m, x);
  REQUIRE(p.probs[1] == Catch::Approx(p1).margin(1e-12));
  REQUIRE(p.probs[0] == Catch::Approx(1.0 - p1).margin(1e-12));
  REQUIRE(p.label == 0);

  // the rectifier clips a negative hidden unit to zero
  const Eigen::Vector3d x_neg(-2.0, 1.0, 0.0);  // pre-activation -0.75
  const Prediction q = forward(m, x_neg);
  const double pz = std::exp(-0.3) / (std::exp(0.1) + std::exp(-0.3));
  REQUIRE(q.probs[1] == Catch::Approx(pz).margin(1e-12));
}

TEST_CASE("binary cross-entropy closed forms") {
  REQUIRE(bce_loss(1, 1.0) < 1e-9);
  REQUIRE(bce_loss(1, 0.5) == Catch::Approx(std::log(2.0)).margin(1e-12));
  REQUIRE(bce_loss(0, 0.9) == Catch::Approx(-std::log(0.1)).margin(1e-12));
  REQUIRE(std::isfinite(bce_loss(0, 1.0)));
  REQUIRE(std::isfinite(bce_loss(1, 0.0)));
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1);
  const double h = 1e-6;

  for (int model_idx = 0; model_idx < 5; ++model_idx) {
    MlpModel m = make_discriminator_model(100 + model_idx);
    const int batch = 6;
    Eigen::MatrixXd inputs(3, batch);
    std::vector<int> labels(batch);
    for (int i = 0; i < batch; ++i) {
      inputs.col(i) = Eigen::Vector3d(g(rng), g(rng), g(rng));
      labels[static_cast<std::size_t>(i)] = coin(rng);
    }

    Gradients grads;
    backward(m, inputs, labels, grads);

    for (int probe = 0; probe < 25; ++probe) {
      const std::size_t layer = rng() % m.layer_count();
      const bool is_weight = coin(rng) == 0;
      double* param = nullptr;
      double analytic = 0.0;
      if (is_weight) {
        const auto r = static_cast<Eigen::Index>(rng() % m.weights[layer].rows());
        const auto c = static_cast<Eigen::Index>(rng() % m.weights[layer].cols());
        param = &m.weights[layer](r, c);
        analytic = grads.weights[layer](r, c);
      } else {
        const auto r = static_cast<Eigen::Index>(rng() % m.biases[layer].size());
        param = &m.biases[layer](r);
        analytic = grads.biases[layer](r);
      }
      const double saved = *param;
      *param = saved + h;
      const std::vector<bool> pattern_up = relu_pattern(m, inputs);
      const double up = batch_loss(m, inputs, labels);
      *param = saved - h;
      const std::vector<bool> pattern_down = relu_pattern(m, inputs);
      const double down = batch_loss(m, inputs, labels);
      *param = saved;
      if (pattern_up != pattern_down) continue;  // probe straddles a kink
      const double numeric = (up - down) / (2.0 * h);
      const double scale = std::max({1e-6, std::abs(analytic), std::abs(numeric)});
      REQUIRE(std::abs(analytic - numeric) / scale < 1e-5);
    }
  }
}

TEST_CASE("saturated correct predictions have a vanishing gradient") {
  MlpModel m = zero_model();
  m.biases.back() << 20.0, -20.0;  // logits frozen at (20, -20): confident static
  Eigen::MatrixXd inputs(3, 4);
  inputs.setRandom();
  const std::vector<int> labels{0, 0, 0, 0};
  Gradients grads;
  backward(m, inputs, labels, grads);
  double norm = 0.0;
  for (const auto& w : grads.weights) norm += w.squaredNorm();
  for (const auto& b : grads.biases) norm += b.squaredNorm();
  REQUIRE(std::sqrt(norm) < 1e-6);
}

TEST_CASE("symmetric hidden units receive symmetric gradients") {
  MlpModel m;
  m.weights = {Eigen::MatrixXd(2, 3), Eigen::MatrixXd(2, 2)};
  m.weights[0] << 0.3, -0.2, 0.5,
                  0.3, -0.2, 0.5;
  m.weights[1] << 0.4, 0.4,
                 -0.7, -0.7;
  m.biases = {Eigen::VectorXd(2), Eigen::VectorXd(2)};
  m.biases[0] << 0.1, 0.1;
  m.biases[1] << 0.0, 0.0;

  Eigen::MatrixXd inputs(3, 3);
  inputs << 0.5, 1.0, -0.4,
            0.2, -0.6, 0.9,
            1.1, 0.3, 0.7;
  const std::vector<int> labels{1, 0, 1};
  Gradients grads;
  backward(m, inputs, labels, grads);
  REQUIRE((grads.weights[0].row(0) - grads.weights[0].row(1)).norm() < 1e-12);
  REQUIRE((grads.weights[1].col(0) - grads.weights[1].col(1)).norm() < 1e-12);
  REQUIRE(grads.biases[0][0] == Catch::Approx(grads.biases[0][1]).margin(1e-12));
}

TEST_CASE("multi-step learning rate decays at the milestones") {
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.learning_rate = 0.1;
  cfg.lr_decay_gamma = 0.1;
  cfg.lr_milestones = {75, 120};
  REQUIRE(learning_rate_at(cfg, 0) == Catch::Approx(0.1));
  REQUIRE(learning_rate_at(cfg, 74) == Catch::Approx(0.1));
  REQUIRE(learning_rate_at(cfg, 75) == Catch::Approx(0.01));
  REQUIRE(learning_rate_at(cfg, 119) == Catch::Approx(0.01));
  REQUIRE(learning_rate_at(cfg, 120) == Catch::Approx(0.001));
  REQUIRE(learning_rate_at(cfg, 149) == Catch::Approx(0.001));
}

TEST_CASE("training separates linearly separable clusters") {
  const auto train_set = two_clusters(200, 17);
  const auto val_set = two_clusters(25, 18);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.lr_milestones = {20, 32};
  cfg.seed = 5;
  const TrainResult result = train(train_set, val_set, cfg);

  std::size_t correct = 0;
  for (const auto& s : train_set) {
    correct += predict(result.model, s.feature).label == s.label;
  }
  const double accuracy =
      static_cast<double>(correct) / static_cast<double>(train_set.size());
  REQUIRE(accuracy >= 0.99);

  // learning happened: the selected epoch's validation loss does not exceed
  // the first epoch's
  REQUIRE(result.history[static_cast<std::size_t>(result.best_epoch)].val_loss <=
          result.history.front().val_loss);
}

TEST_CASE("training is reproducible for a fixed seed") {
  const auto train_set = two_clusters(60, 23);
  const auto val_set = two_clusters(10, 24);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.lr_milestones = {8};
  cfg.seed = 99;
  const TrainResult a = train(train_set, val_set, cfg);
  const TrainResult b = train(train_set, val_set, cfg);
  REQUIRE(serialize(a.model) == serialize(b.model));
  REQUIRE(a.best_epoch == b.best_epoch);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    REQUIRE(a.history[e].train_loss == b.history[e].train_loss);
    REQUIRE(a.history[e].val_loss == b.history[e].val_loss);
    REQUIRE(a.history[e].val_accuracy == b.history[e].val_accuracy);
  }
}

TEST_CASE("normalization statistics come from the training split only") {
  const auto train_set = two_clusters(100, 29);
  const auto val_set = two_clusters(15, 30);
  auto leak_check = two_clusters(100, 31, 1.5);  // a differently scaled "test" set
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr_milestones = {};
  const TrainResult result = train(train_set, val_set, cfg);

  Eigen::Vector3d mean, stddev;
  fit_normalization(train_set, mean, stddev);
  REQUIRE((result.model.norm_mean - mean).norm() == 0.0);
  REQUIRE((result.model.norm_std - stddev).norm() == 0.0);

  std::vector<LabeledFeature> train_plus_test = train_set;
  train_plus_test.insert(train_plus_test.end(), leak_check.begin(), leak_check.end());
  Eigen::Vector3d mean_leak, stddev_leak;
  fit_normalization(train_plus_test, mean_leak, stddev_leak);
  REQUIRE((mean_leak - mean).norm() > 1e-6);
}

TEST_CASE("training rejects single-class data") {
  std::vector<LabeledFeature> single;
  for (int i = 0; i < 50; ++i) {
    single.push_back({FeatureVector{1.0 * i, 0.1 * i, 2.0 * i}, 0});
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr_milestones = {};
  REQUIRE_THROWS_AS(train(single, single, cfg), std::invalid_argument);
}

TEST_CASE("predict_batch equals one-at-a-time prediction") {
  const auto data = two_clusters(50, 37);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr_milestones = {};
  const TrainResult result = train(data, two_clusters(10, 38), cfg);

  REQUIRE(predict_batch(result.model, std::vector<FeatureVector>{}).empty());

  std::vector<FeatureVector> features;
  for (const auto& s : data) features.push_back(s.feature);
  const auto batched = predict_batch(result.model, features);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Prediction single = predict(result.model, features[i]);
    REQUIRE(batched[i].label == single.label);
    REQUIRE((batched[i].probs - single.probs).norm() == 0.0);
    REQUIRE(batched[i].probs.sum() == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("model file round-trips bit-exactly") {
  const auto data = two_clusters(40, 41);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.lr_milestones = {};
  const TrainResult result = train(data, two_clusters(8, 42), cfg);

  const std::string text = serialize(result.model);
  std::istringstream in(text);
  const MlpModel loaded = load_model(in);
  REQUIRE(serialize(loaded) == text);
  for (const auto& s : data) {
    const Prediction a = predict(result.model, s.feature);
    const Prediction b = predict(loaded, s.feature);
    REQUIRE(a.label == b.label);
    REQUIRE((a.probs - b.probs).norm() == 0.0);
  }
}

TEST_CASE("model loader rejects malformed files") {
  std::istringstream bad_header("nope\n");
  REQUIRE_THROWS_AS(load_model(bad_header), std::runtime_error);
  std::istringstream truncated("mlp-v1\nnorm_mean 0 0 0\nnorm_std 1 1 1\nW0 2 3\n1 2\n");
  REQUIRE_THROWS_AS(load_model(truncated), std::runtime_error);
}
