#include "dfolio/softmax_dfl.hpp"

#include <cmath>
#include <random>
#include <string>

#include "dfolio/errors.hpp"

namespace dfolio {

SoftmaxAllocator SoftmaxAllocator::init(std::size_t n_assets, std::size_t n_features,
                                        std::size_t hidden, std::uint64_t seed) {
  if (n_assets == 0 || n_features == 0 || hidden == 0) {
    throw TrainingError("softmax allocator: dimensions must be positive");
  }
  const auto n = static_cast<Eigen::Index>(n_assets);
  const auto H = static_cast<Eigen::Index>(hidden);
  std::mt19937_64 rng(seed);
  auto fill = [&](Eigen::Index rows, Eigen::Index cols, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
  };
  SoftmaxAllocator a;
  a.inferencer = LinearPredictor::zeros(n_features);
  const double b_in = 1.0 / std::sqrt(static_cast<double>(n));
  const double b_hid = 1.0 / std::sqrt(static_cast<double>(H));
  a.W1 = fill(H, n, b_in);
  a.b1 = fill(H, 1, b_in);
  a.W2 = fill(n, H, b_hid);
  a.b2 = fill(n, 1, b_hid);
  return a;
}

std::size_t SoftmaxAllocator::n_params() const {
  return static_cast<std::size_t>(inferencer.theta.size() + 1 + W1.size() + b1.size() + W2.size() +
                                  b2.size());
}

Eigen::VectorXd SoftmaxAllocator::flatten() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(n_params()));
  Eigen::Index o = 0;
  auto put = [&](const auto& m) {
    p.segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    o += m.size();
  };
  put(inferencer.theta);
  p(o++) = inferencer.intercept;
  put(W1);
  put(b1);
  put(W2);
  put(b2);
  return p;
}

void SoftmaxAllocator::unflatten(const Eigen::VectorXd& p) {
  if (p.size() != static_cast<Eigen::Index>(n_params())) {
    throw TrainingError("softmax allocator: parameter vector has the wrong length");
  }
  Eigen::Index o = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = p.segment(o, m.size());
    o += m.size();
  };
  take(inferencer.theta);
  inferencer.intercept = p(o++);
  take(W1);
  take(b1);
  take(W2);
  take(b2);
}

namespace {

struct Forward {
  Eigen::VectorXd r_hat, z1, h, w;
};

Forward forward(const SoftmaxAllocator& m, const Eigen::MatrixXd& x) {
  Forward f;
  f.r_hat = predict(m.inferencer, x);
  if (f.r_hat.size() != m.W1.cols()) throw TrainingError("allocate: asset count mismatch");
  f.z1 = m.W1 * f.r_hat + m.b1;
  f.h = f.z1.cwiseMax(0.0);
  const Eigen::VectorXd z2 = m.W2 * f.h + m.b2;
  const Eigen::ArrayXd e = (z2.array() - z2.maxCoeff()).exp();
  f.w = e / e.sum();
  return f;
}

Eigen::VectorXd loss_gradient_weights(const Eigen::VectorXd& w, const Eigen::VectorXd& r,
                                      DflObjective objective, const Eigen::MatrixXd* sigma,
                                      double& loss) {
  if (objective == DflObjective::MaxReturn) {
    loss = -r.dot(w);
    return -r;
  }
  const Eigen::VectorXd sw = *sigma * w;
  const double var = w.dot(sw);
  if (!(var > 0.0)) throw TrainingError("dfl loss: zero portfolio variance under MaxSharpe");
  const double s = std::sqrt(var);
  const double ret = r.dot(w);
  loss = -ret / s;
  return -r / s + ret * sw / (var * s);
}

const Eigen::MatrixXd* sharpe_sigma(DflObjective objective, const CovarianceEstimate* est,
                                    Eigen::MatrixXd& storage) {
  if (objective != DflObjective::MaxSharpe) return nullptr;
  if (est == nullptr) throw TrainingError("dfl loss: MaxSharpe requires a covariance estimate");
  storage = est->loaded();
  return &storage;
}

}  // namespace

Eigen::VectorXd allocate_weights(const SoftmaxAllocator& model, const Eigen::MatrixXd& features) {
  return forward(model, features).w;
}

Portfolio allocate(const SoftmaxAllocator& model, const Eigen::MatrixXd& features) {
  return Portfolio(allocate_weights(model, features));
}

double dfl_loss(const Eigen::VectorXd& weights, const Eigen::VectorXd& realized,
                DflObjective objective, const CovarianceEstimate* est) {
  if (weights.size() != realized.size()) throw TrainingError("dfl loss: dimension mismatch");
  Eigen::MatrixXd storage;
  const Eigen::MatrixXd* sigma = sharpe_sigma(objective, est, storage);
  if (sigma != nullptr && sigma->rows() != weights.size()) {
    throw TrainingError("dfl loss: covariance dimension mismatch");
  }
  double loss = 0.0;
  loss_gradient_weights(weights, realized, objective, sigma, loss);
  return loss;
}

namespace {

void accumulate_gradient(const SoftmaxAllocator& m, const Eigen::MatrixXd& x,
                         const Eigen::VectorXd& r, DflObjective objective,
                         const Eigen::MatrixXd* sigma, double& loss, Eigen::VectorXd& grad) {
  const Forward f = forward(m, x);
  const Eigen::VectorXd g = loss_gradient_weights(f.w, r, objective, sigma, loss);
  const Eigen::VectorXd dz2 = f.w.cwiseProduct((g.array() - f.w.dot(g)).matrix());
  const Eigen::VectorXd dh = m.W2.transpose() * dz2;
  const Eigen::VectorXd dz1 = (f.z1.array() > 0.0).select(dh, 0.0);
  const Eigen::VectorXd dr = m.W1.transpose() * dz1;

  Eigen::Index o = 0;
  const Eigen::Index F = m.inferencer.theta.size();
  grad.segment(o, F).noalias() += x.transpose() * dr;
  o += F;
  grad(o++) += dr.sum();
  Eigen::Map<Eigen::MatrixXd>(grad.data() + o, m.W1.rows(), m.W1.cols()).noalias() +=
      dz1 * f.r_hat.transpose();
  o += m.W1.size();
  grad.segment(o, dz1.size()) += dz1;
  o += dz1.size();
  Eigen::Map<Eigen::MatrixXd>(grad.data() + o, m.W2.rows(), m.W2.cols()).noalias() +=
      dz2 * f.h.transpose();
  o += m.W2.size();
  grad.segment(o, dz2.size()) += dz2;
}

}  // namespace

DflEvaluation dfl_loss_and_gradient(const SoftmaxAllocator& model, const Eigen::MatrixXd& features,
                                    const Eigen::VectorXd& realized, DflObjective objective,
                                    const CovarianceEstimate* est) {
  Eigen::MatrixXd storage;
  const Eigen::MatrixXd* sigma = sharpe_sigma(objective, est, storage);
  DflEvaluation ev;
  ev.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.n_params()));
  accumulate_gradient(model, features, realized, objective, sigma, ev.loss, ev.gradient);
  return ev;
}

void DflConfig::validate() const {
  if (epochs < 1 || epochs > 1000) throw ConfigError("dfl: epochs must be in [1, 1000]");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("dfl: learning_rate must be finite and >= 0");
  }
  if (batch_size < 1) throw ConfigError("dfl: batch_size must be >= 1");
  if (hidden < 1) throw ConfigError("dfl: hidden must be >= 1");
}

DflTrainResult train_dfl(const Dataset& data, const DflConfig& config,
                         const CovarianceEstimate* est) {
  data.validate();
  config.validate();
  const std::size_t N = data.size();
  if (N < static_cast<std::size_t>(config.batch_size)) {
    throw TrainingError("train_dfl: " + std::to_string(N) + " samples, fewer than batch size " +
                        std::to_string(config.batch_size));
  }
  Eigen::MatrixXd storage;
  const Eigen::MatrixXd* sigma = sharpe_sigma(config.objective, est, storage);

  DflTrainResult result;
  result.model = SoftmaxAllocator::init(data.n_assets(), data.n_features(), config.hidden, config.seed);
  Eigen::VectorXd params = result.model.flatten();
  AdamState state(params.size());
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t begin = 0; begin < N; begin += batch) {
      const std::size_t end = std::min(N, begin + batch);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
      for (std::size_t k = begin; k < end; ++k) {
        double loss = 0.0;
        accumulate_gradient(result.model, data.features[k], data.targets[k], config.objective, sigma,
                            loss, grad);
        if (!std::isfinite(loss)) {
          throw TrainingError("train_dfl: non-finite loss at epoch " + std::to_string(epoch) +
                              ", sample " + std::to_string(k));
        }
        total += loss;
      }
      grad /= static_cast<double>(end - begin);
      adam_step(params, state, grad, config.learning_rate, config.adam);
      result.model.unflatten(params);
    }
    result.epoch_loss.push_back(total / static_cast<double>(N));
  }
  return result;
}

double dfl_score(const SoftmaxAllocator& model, const Dataset& validation, const Portfolio& w_prev,
                 double fee_rate) {
  if (validation.size() == 0) throw TrainingError("dfl_score: empty validation set");
  double total = 0.0;
  for (std::size_t k = 0; k < validation.size(); ++k) {
    const Eigen::VectorXd w = allocate_weights(model, validation.features[k]);
    total += validation.targets[k].dot(w) - fee_rate * (w - w_prev.weights()).lpNorm<1>();
  }
  return total / static_cast<double>(validation.size());
}

DflChoice dfl_search(const Dataset& train_set, const Dataset& validation, const SearchSpace& space,
                     const DflConfig& base, const Portfolio& w_prev, double fee_rate,
                     const CovarianceEstimate* est) {
  std::vector<SoftmaxAllocator> models;
  const SearchOutcome outcome = random_search(space, [&](std::size_t, const TrialDraw& draw) {
    DflConfig cfg = base;
    cfg.learning_rate = draw.learning_rate;
    cfg.epochs = draw.epochs;
    DflTrainResult tr = train_dfl(train_set, cfg, est);
    TrialResult res;
    res.score = dfl_score(tr.model, validation, w_prev, fee_rate);
    res.trace = std::move(tr.epoch_loss);
    models.push_back(std::move(tr.model));
    return res;
  });
  DflChoice choice;
  choice.config = base;
  choice.config.learning_rate = outcome.best_trial().draw.learning_rate;
  choice.config.epochs = outcome.best_trial().draw.epochs;
  choice.model = models[outcome.best];
  choice.outcome = outcome;
  return choice;
}

}  // namespace dfolio
