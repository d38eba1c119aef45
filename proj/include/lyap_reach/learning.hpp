#pragma once

// Learned reaching controller: a small MLP regressor mapping (joint state,
// target pose) to a value estimate V-hat and a joint-velocity command u-hat.
//
// Training minimizes a sum of mean-absolute-error terms on (V, u) labels plus
// an optional first-order differential-consistency term: a Siamese pass
// re-evaluates V-hat at joint states perturbed by dtheta along each joint axis
// and penalizes
//     | e_i^T J^T Q J u-hat + (V-hat(q + dtheta e_i) - V-hat(q)) / dtheta |,
// which is the finite-difference form of the exact controller's decrease
// identity. Both branches share parameters and the target encoding, J is the
// analytic body Jacobian at q, and gradients flow through both branches and
// u-hat. All training runs on a single thread so a fixed seed reproduces
// parameters bitwise.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "datagen.hpp"

namespace lyap_reach {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Feature encoding
// ---------------------------------------------------------------------------

inline constexpr int kFeatureDim = 18;  // 6 joints + 9 rotation + 3 translation
inline constexpr int kOutputDim = 7;    // V head + 6 command components

// Raw features: joint angles, then the target rotation row-major, then the
// target translation. Joint perturbations touch exactly one feature, so the
// Siamese branch reuses the target encoding verbatim.
inline Eigen::Matrix<double, kFeatureDim, 1> encode_features(const Vector6d& q, const Pose& target) {
  Eigen::Matrix<double, kFeatureDim, 1> x;
  x.head<6>() = q;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) x(6 + 3 * r + c) = target.R(r, c);
  x.tail<3>() = target.t;
  return x;
}

// ---------------------------------------------------------------------------
// Loss weights and perturbation schedule
// ---------------------------------------------------------------------------

struct LossWeights {
  double lambda_V = 0.2;
  double lambda_u = 1.0;
  double lambda_diff = 0.1;
  // Presence-confidence weights kept for config fidelity; this pipeline has no
  // detection task, so they never contribute to the objective.
  double lambda_obj = 0.8;
  double lambda_no_obj = 0.08;
};

struct PerturbationSchedule {
  double initial = 0.05;    // rad
  double decrement = 0.002; // rad per epoch
  double floor = 0.003;     // rad

  double at(int epoch) const {
    if (floor <= 0.0 || initial < floor) throw std::invalid_argument("perturbation schedule: invalid bounds");
    return std::max(initial - decrement * static_cast<double>(epoch), floor);
  }
};

// ---------------------------------------------------------------------------
// Regressor
// ---------------------------------------------------------------------------

inline double stable_softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double stable_sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Fully connected net with tanh hidden layers. The last layer is linear; its
// first output passes through a squared-softplus transform, giving a smooth
// nonnegative value head that can still flatten to machine zero near goals.
class Regressor {
 public:
  explicit Regressor(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw std::invalid_argument("Regressor: need at least input and output widths");
    if (widths_.back() != kOutputDim) throw std::invalid_argument("Regressor: output width must be 7");
    for (const int w : widths_)
      if (w < 1) throw std::invalid_argument("Regressor: widths must be positive");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      W_.emplace_back(MatrixXd::Zero(widths_[l + 1], widths_[l]));
      b_.emplace_back(VectorXd::Zero(widths_[l + 1]));
    }
  }

  static std::vector<int> default_widths() { return {kFeatureDim, 128, 128, 128, kOutputDim}; }

  // Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for both
  // weights and biases; fill order is fixed (per layer: W row-major, then b).
  void init_params(Rng& rng) {
    for (std::size_t l = 0; l < W_.size(); ++l) {
      const double k = 1.0 / std::sqrt(static_cast<double>(W_[l].cols()));
      for (Eigen::Index r = 0; r < W_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < W_[l].cols(); ++c) W_[l](r, c) = rng.uniform(-k, k);
      for (Eigen::Index r = 0; r < b_[l].size(); ++r) b_[l](r) = rng.uniform(-k, k);
    }
  }

  int input_dim() const { return widths_.front(); }
  const std::vector<int>& widths() const { return widths_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l)
      n += static_cast<std::size_t>(W_[l].size()) + static_cast<std::size_t>(b_[l].size());
    return n;
  }

  std::vector<double> parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t l = 0; l < W_.size(); ++l) {
      for (Eigen::Index r = 0; r < W_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < W_[l].cols(); ++c) out.push_back(W_[l](r, c));
      for (Eigen::Index r = 0; r < b_[l].size(); ++r) out.push_back(b_[l](r));
    }
    return out;
  }

  void set_parameters(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("Regressor: parameter count mismatch");
    std::size_t k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      for (Eigen::Index r = 0; r < W_[l].rows(); ++r)
        for (Eigen::Index c = 0; c < W_[l].cols(); ++c) W_[l](r, c) = flat[k++];
      for (Eigen::Index r = 0; r < b_[l].size(); ++r) b_[l](r) = flat[k++];
    }
  }

  // Batched forward. Rows of X are inputs; outputs are the value estimates and
  // commands per row. When `cache` is given, layer activations are recorded
  // for a later backward pass.
  struct Cache {
    std::vector<MatrixXd> act;  // act[0] = X, act[l+1] = tanh output of layer l
    MatrixXd z_out;             // final linear layer output
  };

  void forward(const MatrixXd& X, VectorXd& V_hat, MatrixXd& U_hat, Cache* cache = nullptr) const {
    if (X.cols() != widths_.front()) throw std::invalid_argument("Regressor: input dimension mismatch");
    MatrixXd a = X;
    if (cache) {
      cache->act.clear();
      cache->act.push_back(a);
    }
    for (std::size_t l = 0; l + 1 < W_.size(); ++l) {
      a = ((a * W_[l].transpose()).rowwise() + b_[l].transpose()).array().tanh().matrix();
      if (cache) cache->act.push_back(a);
    }
    MatrixXd z = (a * W_.back().transpose()).rowwise() + b_.back().transpose();
    if (cache) cache->z_out = z;
    const Eigen::Index n = X.rows();
    V_hat.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = stable_softplus(z(i, 0));
      V_hat(i) = 0.5 * s * s;
    }
    U_hat = z.rightCols(kOutputDim - 1);
  }

  std::pair<double, Vector6d> evaluate(const Eigen::Matrix<double, kFeatureDim, 1>& x) const {
    MatrixXd X = x.transpose();
    VectorXd V;
    MatrixXd U;
    forward(X, V, U);
    return {V(0), Vector6d(U.row(0))};
  }

  // Backward pass from head gradients (dL/dV_hat and dL/dU_hat) to parameter
  // gradients, accumulated into grads (same layout as parameters()).
  void backward(const Cache& cache, const VectorXd& dV_hat, const MatrixXd& dU_hat,
                std::vector<double>& grads) const {
    const Eigen::Index n = cache.act.front().rows();
    MatrixXd dZ(n, kOutputDim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z0 = cache.z_out(i, 0);
      const double s = stable_softplus(z0);
      dZ(i, 0) = dV_hat(i) * s * stable_sigmoid(z0);  // d(0.5 s^2)/dz = s * sigmoid(z)
    }
    dZ.rightCols(kOutputDim - 1) = dU_hat;

    // Offsets of each layer's W block inside the flat gradient vector.
    std::vector<std::size_t> offset(W_.size());
    std::size_t k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      offset[l] = k;
      k += static_cast<std::size_t>(W_[l].size()) + static_cast<std::size_t>(b_[l].size());
    }
    if (grads.size() != k) throw std::invalid_argument("Regressor: gradient buffer size mismatch");

    for (std::size_t l = W_.size(); l-- > 0;) {
      const MatrixXd& a_in = cache.act[l];
      const MatrixXd dW = dZ.transpose() * a_in;
      const VectorXd db = dZ.colwise().sum();
      std::size_t g = offset[l];
      for (Eigen::Index r = 0; r < dW.rows(); ++r)
        for (Eigen::Index c = 0; c < dW.cols(); ++c) grads[g++] += dW(r, c);
      for (Eigen::Index r = 0; r < db.size(); ++r) grads[g++] += db(r);
      if (l == 0) break;
      const MatrixXd dA = dZ * W_[l];
      dZ = dA.cwiseProduct((1.0 - cache.act[l].array().square()).matrix());
    }
  }

 private:
  std::vector<int> widths_;
  std::vector<MatrixXd> W_;
  std::vector<VectorXd> b_;
};

// ---------------------------------------------------------------------------
// Losses and metrics
// ---------------------------------------------------------------------------

// Mean over samples of lambda_V |V - V_hat| + (lambda_u / 6) sum_i |u_i - u_hat_i|.
inline double regression_loss(const VectorXd& V_hat, const MatrixXd& U_hat, const VectorXd& V,
                              const MatrixXd& U, const LossWeights& w) {
  if (V_hat.size() != V.size() || U_hat.rows() != U.rows() || U_hat.cols() != U.cols() ||
      V_hat.size() != U_hat.rows())
    throw std::invalid_argument("regression_loss: shape mismatch");
  if (V_hat.size() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < V_hat.size(); ++i) {
    total += w.lambda_V * std::abs(V_hat(i) - V(i));
    double du = 0.0;
    for (int j = 0; j < 6; ++j) du += std::abs(U_hat(i, j) - U(i, j));
    total += w.lambda_u / 6.0 * du;
  }
  return total / static_cast<double>(V_hat.size());
}

// First-order consistency penalty of a model on one state, averaged over the
// targets and joint directions:
//   (lambda_diff / (6 T)) sum_targets sum_i | e_i^T J^T Q J u_hat
//                                            + (V_hat(q+dtheta e_i) - V_hat(q)) / dtheta |.
// `model(q, pose)` must return the (V_hat, u_hat) pair; the exact controller
// plugs in as an oracle. This overload takes the body Jacobian directly.
template <typename ModelFn>
double siamese_differential_loss(const Matrix6d& J, const Vector6d& q, const std::vector<Pose>& targets,
                                 ModelFn&& model, double dtheta, const LossWeights& w) {
  if (targets.empty()) throw std::invalid_argument("siamese_differential_loss: no targets");
  if (dtheta <= 0.0) throw std::invalid_argument("siamese_differential_loss: dtheta must be positive");
  const Matrix6d G = J.transpose() * q_weight() * J;
  double total = 0.0;
  for (const auto& pose : targets) {
    const auto base = model(q, pose);
    const Vector6d Gu = G * base.second;
    for (int i = 0; i < 6; ++i) {
      Vector6d qp = q;
      qp(i) += dtheta;
      const auto perturbed = model(qp, pose);
      total += std::abs(Gu(i) + (perturbed.first - base.first) / dtheta);
    }
  }
  return w.lambda_diff / (6.0 * static_cast<double>(targets.size())) * total;
}

template <typename ModelFn>
double siamese_differential_loss(const KinematicChain& chain, const Vector6d& q,
                                 const std::vector<Pose>& targets, ModelFn&& model, double dtheta,
                                 const LossWeights& w) {
  return siamese_differential_loss(body_jacobian(chain, q), q, targets, std::forward<ModelFn>(model),
                                   dtheta, w);
}

inline double metric_mae(const VectorXd& pred, const VectorXd& label) {
  if (pred.size() != label.size()) throw std::invalid_argument("metric_mae: shape mismatch");
  if (pred.size() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) total += std::abs(pred(i) - label(i));
  return total / static_cast<double>(pred.size());
}

inline constexpr double kMreEpsilon = 1e-3;

inline double metric_mre(const VectorXd& pred, const VectorXd& label) {
  if (pred.size() != label.size()) throw std::invalid_argument("metric_mre: shape mismatch");
  if (pred.size() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    total += std::abs(pred(i) - label(i)) / (std::abs(label(i)) + kMreEpsilon);
  return total / static_cast<double>(pred.size());
}

// Symmetry-aware pose distance: mean over model points of the distance to the
// closest transformed model point.
inline double metric_adds(const std::vector<Vector3d>& points, const Pose& pose_true, const Pose& pose_est) {
  if (points.empty()) throw std::invalid_argument("metric_adds: empty point set");
  double total = 0.0;
  for (const auto& x1 : points) {
    const Vector3d p = pose_true.R * x1 + pose_true.t;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x2 : points) best = std::min(best, (p - (pose_est.R * x2 + pose_est.t)).norm());
    total += best;
  }
  return total / static_cast<double>(points.size());
}

// ---------------------------------------------------------------------------
// Training tensors
// ---------------------------------------------------------------------------

// Dataset views used by training and evaluation: per-sample features against
// the labeled target, labels, and the constant curvature matrix J^T Q J at q.
struct Tensors {
  MatrixXd X;              // n x 18
  VectorXd V;              // n
  MatrixXd U;              // n x 6
  std::vector<Matrix6d> G;  // J^T Q J per sample
};

inline Tensors build_tensors(const KinematicChain& chain, const Dataset& d,
                             const std::vector<std::size_t>& indices) {
  Tensors t;
  const Eigen::Index n = static_cast<Eigen::Index>(indices.size());
  t.X.resize(n, kFeatureDim);
  t.V.resize(n);
  t.U.resize(n, 6);
  t.G.resize(indices.size());
  for (Eigen::Index row = 0; row < n; ++row) {
    const Sample& s = d.samples[indices[static_cast<std::size_t>(row)]];
    t.X.row(row) = encode_features(s.q, s.targets[static_cast<std::size_t>(s.selected)]).transpose();
    t.V(row) = s.V;
    t.U.row(row) = s.u.transpose();
    const Matrix6d J = body_jacobian(chain, s.q);
    t.G[static_cast<std::size_t>(row)] = J.transpose() * q_weight() * J;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Loss + gradient of one minibatch
// ---------------------------------------------------------------------------

// Evaluates L = L_reg (+ L_diff when use_diff) on rows `rows` of `t` and
// accumulates parameter gradients. The Siamese branches are stacked into one
// batched forward/backward, so each perturbed branch shares the unperturbed
// branch's target encoding columns verbatim.
inline double batch_loss_and_gradient(const Regressor& reg, const Tensors& t,
                                      const std::vector<std::size_t>& rows, bool use_diff, double dtheta,
                                      const LossWeights& w, std::vector<double>* grads) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) return 0.0;
  const int branches = use_diff ? 7 : 1;
  MatrixXd X(n * branches, kFeatureDim);
  for (Eigen::Index i = 0; i < n; ++i) X.row(i) = t.X.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
  for (int b = 1; b < branches; ++b) {
    X.middleRows(b * n, n) = X.topRows(n);
    X.col(b - 1).segment(b * n, n).array() += dtheta;
  }

  Regressor::Cache cache;
  VectorXd V_hat;
  MatrixXd U_hat;
  reg.forward(X, V_hat, U_hat, grads ? &cache : nullptr);

  const double nd = static_cast<double>(n);
  VectorXd dV = VectorXd::Zero(n * branches);
  MatrixXd dU = MatrixXd::Zero(n * branches, 6);

  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t s = rows[static_cast<std::size_t>(i)];
    const double v_err = V_hat(i) - t.V(static_cast<Eigen::Index>(s));
    loss += w.lambda_V / nd * std::abs(v_err);
    dV(i) += w.lambda_V / nd * (v_err > 0 ? 1.0 : (v_err < 0 ? -1.0 : 0.0));
    for (int j = 0; j < 6; ++j) {
      const double u_err = U_hat(i, j) - t.U(static_cast<Eigen::Index>(s), j);
      loss += w.lambda_u / (6.0 * nd) * std::abs(u_err);
      dU(i, j) += w.lambda_u / (6.0 * nd) * (u_err > 0 ? 1.0 : (u_err < 0 ? -1.0 : 0.0));
    }
  }

  if (use_diff) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t s = rows[static_cast<std::size_t>(i)];
      const Vector6d u_hat = U_hat.row(i).transpose();
      const Vector6d Gu = t.G[s] * u_hat;
      Vector6d sign_r = Vector6d::Zero();
      for (int j = 0; j < 6; ++j) {
        const double r = Gu(j) + (V_hat((j + 1) * n + i) - V_hat(i)) / dtheta;
        loss += w.lambda_diff / (6.0 * nd) * std::abs(r);
        const double sr = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
        sign_r(j) = sr;
        dV((j + 1) * n + i) += w.lambda_diff / (6.0 * nd) * sr / dtheta;
        dV(i) -= w.lambda_diff / (6.0 * nd) * sr / dtheta;
      }
      dU.row(i) += (w.lambda_diff / (6.0 * nd) * (t.G[s] * sign_r)).transpose();
    }
  }

  if (grads) reg.backward(cache, dV, dU, *grads);
  return loss;
}

// ---------------------------------------------------------------------------
// Evaluation metrics over a tensor view
// ---------------------------------------------------------------------------

struct EvalMetrics {
  double mae_V = 0.0;
  double mae_u = 0.0;
  double mre_V = 0.0;
  double mre_u = 0.0;
  double diff_err = 0.0;  // differential error at the floor step, unit weight
};

inline constexpr double kDiffErrStep = 0.003;

// Mean differential residual magnitude of the model over a tensor view,
// evaluated at a fixed small step with unit weight.
inline double differential_error(const Regressor& reg, const Tensors& t, double dtheta = kDiffErrStep) {
  const Eigen::Index n = t.X.rows();
  if (n == 0) return 0.0;
  MatrixXd X(7 * n, kFeatureDim);
  X.topRows(n) = t.X;
  for (int b = 1; b < 7; ++b) {
    X.middleRows(b * n, n) = t.X;
    X.col(b - 1).segment(b * n, n).array() += dtheta;
  }
  VectorXd V_hat;
  MatrixXd U_hat;
  reg.forward(X, V_hat, U_hat);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector6d Gu = t.G[static_cast<std::size_t>(i)] * Vector6d(U_hat.row(i).transpose());
    for (int j = 0; j < 6; ++j)
      total += std::abs(Gu(j) + (V_hat((j + 1) * n + i) - V_hat(i)) / dtheta);
  }
  return total / (6.0 * static_cast<double>(n));
}

inline EvalMetrics evaluate_metrics(const Regressor& reg, const Tensors& t) {
  EvalMetrics m;
  const Eigen::Index n = t.X.rows();
  if (n == 0) return m;
  VectorXd V_hat;
  MatrixXd U_hat;
  reg.forward(t.X, V_hat, U_hat);
  m.mae_V = metric_mae(V_hat, t.V);
  m.mre_V = metric_mre(V_hat, t.V);
  VectorXd u_pred(n * 6), u_label(n * 6);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < 6; ++j) {
      u_pred(i * 6 + j) = U_hat(i, j);
      u_label(i * 6 + j) = t.U(i, j);
    }
  m.mae_u = metric_mae(u_pred, u_label);
  m.mre_u = metric_mre(u_pred, u_label);
  m.diff_err = differential_error(reg, t);
  return m;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 15;
  int batch_size = 64;
  double lr = 1e-3;
  int lr_step = 15;       // halve-order decay cadence (epochs)
  double lr_gamma = 0.1;
  bool use_diff = true;
  LossWeights weights;
  PerturbationSchedule schedule;
  std::vector<int> widths = Regressor::default_widths();
  std::uint64_t seed = 0;
  double divergence_threshold = 1e6;
  int eval_modulus = 10;
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["lr_step"] = c.lr_step;
  j["lr_gamma"] = c.lr_gamma;
  j["use_diff"] = c.use_diff;
  j["weights"] = {{"lambda_V", c.weights.lambda_V},
                  {"lambda_u", c.weights.lambda_u},
                  {"lambda_diff", c.weights.lambda_diff},
                  {"lambda_obj", c.weights.lambda_obj},
                  {"lambda_no_obj", c.weights.lambda_no_obj}};
  j["schedule"] = {{"initial", c.schedule.initial},
                   {"decrement", c.schedule.decrement},
                   {"floor", c.schedule.floor}};
  j["widths"] = c.widths;
  j["seed"] = c.seed;
  j["eval_modulus"] = c.eval_modulus;
  return j;
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  EvalMetrics metrics;
  double dtheta = 0.0;
};

inline constexpr const char* kTrainingLogHeader =
    "epoch,train_loss,eval_loss,mae_V,mae_u,mre_V,mre_u,diff_err,dtheta";

inline std::string training_log_to_csv(const std::vector<EpochLog>& log) {
  std::string out = kTrainingLogHeader;
  out += '\n';
  for (const auto& e : log) {
    out += std::to_string(e.epoch);
    out += "," + format_double(e.train_loss);
    out += "," + format_double(e.eval_loss);
    out += "," + format_double(e.metrics.mae_V);
    out += "," + format_double(e.metrics.mae_u);
    out += "," + format_double(e.metrics.mre_V);
    out += "," + format_double(e.metrics.mre_u);
    out += "," + format_double(e.metrics.diff_err);
    out += "," + format_double(e.dtheta);
    out += '\n';
  }
  return out;
}

struct TrainResult {
  Regressor model{Regressor::default_widths()};
  std::vector<EpochLog> log;
  bool diverged = false;
  int diverged_epoch = -1;
};

// Adam with the conventional defaults and a stepped learning-rate decay.
// Batches come from an epoch-shuffled index stream; the "init" and "shuffle"
// substreams both derive from the config seed, so two configs differing only
// in use_diff train from identical initializations on identical batch orders.
inline TrainResult train(const KinematicChain& chain, const Dataset& dataset, const TrainConfig& cfg) {
  if (dataset.samples.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.lr <= 0.0 || cfg.lr_step < 1 || cfg.eval_modulus < 2)
    throw std::invalid_argument("train: bad config");

  const auto train_idx = dataset.train_indices(cfg.eval_modulus);
  const auto eval_idx = dataset.eval_indices(cfg.eval_modulus);
  if (train_idx.empty()) throw std::invalid_argument("train: no training samples after the split");
  const Tensors t_train = build_tensors(chain, dataset, train_idx);
  const Tensors t_eval = build_tensors(chain, dataset, eval_idx);

  const Rng master(cfg.seed);
  Rng init_rng = master.substream("init");
  Rng shuffle_rng = master.substream("shuffle");

  TrainResult result;
  result.model = Regressor(cfg.widths);
  result.model.init_params(init_rng);

  const std::size_t n_params = result.model.parameter_count();
  std::vector<double> params = result.model.parameters();
  std::vector<double> grads(n_params, 0.0);
  std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  long step_count = 0;

  std::vector<std::size_t> order(train_idx.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double dtheta = cfg.schedule.at(epoch);
    const double lr = cfg.lr * std::pow(cfg.lr_gamma, epoch / cfg.lr_step);

    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::fill(grads.begin(), grads.end(), 0.0);
      const double loss = batch_loss_and_gradient(result.model, t_train, rows, cfg.use_diff, dtheta,
                                                  cfg.weights, &grads);
      if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
        result.diverged = true;
        result.diverged_epoch = epoch;
        return result;
      }
      epoch_loss += loss * static_cast<double>(rows.size());
      epoch_samples += rows.size();

      ++step_count;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
      for (std::size_t k = 0; k < n_params; ++k) {
        adam_m[k] = beta1 * adam_m[k] + (1.0 - beta1) * grads[k];
        adam_v[k] = beta2 * adam_v[k] + (1.0 - beta2) * grads[k] * grads[k];
        params[k] -= lr * (adam_m[k] / bc1) / (std::sqrt(adam_v[k] / bc2) + adam_eps);
      }
      result.model.set_parameters(params);
    }

    EpochLog log;
    log.epoch = epoch;
    log.dtheta = dtheta;
    log.train_loss = epoch_loss / static_cast<double>(epoch_samples);
    if (t_eval.X.rows() > 0) {
      std::vector<std::size_t> all(static_cast<std::size_t>(t_eval.X.rows()));
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      log.eval_loss = batch_loss_and_gradient(result.model, t_eval, all, cfg.use_diff, dtheta,
                                              cfg.weights, nullptr);
      log.metrics = evaluate_metrics(result.model, t_eval);
    }
    result.log.push_back(log);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline nlohmann::json checkpoint_to_json(const Regressor& reg, const std::string& config_hash) {
  nlohmann::json j;
  j["arch"]["widths"] = reg.widths();
  j["arch"]["activation"] = "tanh";
  j["arch"]["value_head"] = "squared_softplus";
  j["params"] = reg.parameters();
  j["config_hash"] = config_hash;
  return j;
}

inline Regressor checkpoint_from_json(const nlohmann::json& j) {
  Regressor reg(j.at("arch").at("widths").get<std::vector<int>>());
  reg.set_parameters(j.at("params").get<std::vector<double>>());
  return reg;
}

inline void save_checkpoint(const std::filesystem::path& path, const Regressor& reg,
                            const std::string& config_hash) {
  write_text_file(path, json_dump(checkpoint_to_json(reg, config_hash)));
}

inline Regressor load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(json_load(path));
}

// ---------------------------------------------------------------------------
// Simulator integration
// ---------------------------------------------------------------------------

// Scores every candidate with the regressor; one batched forward per step.
class LearnedProvider final : public ControlProvider {
 public:
  explicit LearnedProvider(Regressor reg) : reg_(std::move(reg)) {
    if (reg_.input_dim() != kFeatureDim)
      throw std::invalid_argument("LearnedProvider: regressor input width must match the feature encoding");
  }

  void evaluate(const Vector6d& q, const std::vector<TargetInstance>& targets,
                std::vector<TargetEvaluation>& out) const override {
    MatrixXd X(static_cast<Eigen::Index>(targets.size()), kFeatureDim);
    for (std::size_t k = 0; k < targets.size(); ++k)
      X.row(static_cast<Eigen::Index>(k)) = encode_features(q, targets[k].goal).transpose();
    VectorXd V_hat;
    MatrixXd U_hat;
    reg_.forward(X, V_hat, U_hat);
    out.resize(targets.size());
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const Eigen::Index i = static_cast<Eigen::Index>(k);
      out[k] = TargetEvaluation{V_hat(i), Vector6d(U_hat.row(i).transpose()), false};
    }
  }

 private:
  Regressor reg_;
};

}  // namespace lyap_reach
