#pragma once

// DBPnet training and inference, the deterministic PINN baseline and the
// ablation variants, plus the losses and error metrics they share.
//
// Training works in normalized units: inputs are z-scored with training-split
// statistics and each corner load is expressed as (F - F0) / F0.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dbpnet/adam.hpp"
#include "dbpnet/dataset.hpp"
#include "dbpnet/dynamics.hpp"
#include "dbpnet/errors.hpp"
#include "dbpnet/neural.hpp"
#include "dbpnet/rng.hpp"
#include "dbpnet/types.hpp"

namespace dbpnet::est {

using nn::Mat;
using nn::Vec;

// ---------------------------------------------------------------------------
// Losses and metrics (newtons)
// ---------------------------------------------------------------------------

/// Mean over the batch of the squared 4-wheel error norm.
inline double data_loss(const std::vector<WheelLoads>& pred, const std::vector<WheelLoads>& truth) {
  if (pred.empty()) throw EmptyBatch("data loss over an empty batch");
  if (pred.size() != truth.size()) throw LengthMismatch("prediction and truth batch sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int c = 0; c < 4; ++c) s += (pred[i][c] - truth[i][c]) * (pred[i][c] - truth[i][c]);
  return s / static_cast<double>(pred.size());
}

/// Mean over the batch of the squared quarter-car residual, summed over corners.
inline double physics_loss(const std::vector<WheelLoads>& pred, const std::vector<SensorSample>& in,
                           const dyn::QuarterCarParams& q) {
  if (pred.empty()) throw EmptyBatch("physics loss over an empty batch");
  if (pred.size() != in.size()) throw LengthMismatch("prediction and input batch sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (Corner c : all_corners) {
      const double r = dyn::quarter_car_residual(in[i], pred[i], q, c);
      s += r * r;
    }
  return s / static_cast<double>(pred.size());
}

/// (1/K) sum_k (w_d L_d,k / |B| + w_p L_p,k / |B|) + KL / |D|, where L_d,k and
/// L_p,k are batch sums for weight sample k.
inline double total_objective(const std::vector<double>& l_d, const std::vector<double>& l_p,
                              double kl, double w_d, double w_p, double batch, double dataset) {
  if (l_d.size() != l_p.size() || l_d.empty())
    throw LengthMismatch("per-sample loss lists must be non-empty and equally long");
  double s = 0.0;
  for (std::size_t k = 0; k < l_d.size(); ++k) s += w_d * l_d[k] / batch + w_p * l_p[k] / batch;
  return s / static_cast<double>(l_d.size()) + kl / dataset;
}

struct Metrics {
  Quad rmse{};
  Quad max_error{};
  double rmse_mean = 0.0;       ///< mean over wheels
  double max_error_mean = 0.0;  ///< mean over wheels
  std::size_t samples = 0;
};

inline Metrics evaluate(const std::vector<WheelLoads>& pred, const std::vector<WheelLoads>& truth) {
  if (pred.size() != truth.size())
    throw LengthMismatch("prediction series has " + std::to_string(pred.size()) +
                         " samples, truth has " + std::to_string(truth.size()));
  if (pred.empty()) throw EmptyBatch("no samples to evaluate");
  Metrics m;
  m.samples = pred.size();
  for (int c = 0; c < 4; ++c) {
    double ss = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = pred[i][c] - truth[i][c];
      ss += e * e;
      mx = std::max(mx, std::abs(e));
    }
    m.rmse[c] = std::sqrt(ss / static_cast<double>(pred.size()));
    m.max_error[c] = std::max(mx, m.rmse[c]);  // guards the last-ulp rounding of sqrt
  }
  m.rmse_mean = std::accumulate(m.rmse.begin(), m.rmse.end(), 0.0) / 4.0;
  m.max_error_mean = std::accumulate(m.max_error.begin(), m.max_error.end(), 0.0) / 4.0;
  return m;
}

// ---------------------------------------------------------------------------
// Configuration and model
// ---------------------------------------------------------------------------

enum class Variant { full, no_physics, no_bayesian, no_dpc, pinn, mlp };

inline const char* variant_method(Variant v) {
  switch (v) {
    case Variant::full: return "dbpnet";
    case Variant::no_physics: return "dbpnet_no_physics";
    case Variant::no_bayesian: return "dbpnet_no_bayesian";
    case Variant::no_dpc: return "dbpnet_no_dpc";
    case Variant::pinn: return "pinn";
    default: return "mlp";
  }
}

inline Variant parse_method(const std::string& s) {
  for (Variant v : {Variant::full, Variant::no_physics, Variant::no_bayesian, Variant::no_dpc,
                    Variant::pinn, Variant::mlp})
    if (s == variant_method(v)) return v;
  throw ConfigError("unknown method '" + s + "'");
}

struct TrainConfig {
  int epochs = 20;
  int batch_size = 64;
  int k_samples = 2;        ///< weight samples per batch
  int s_samples = 20;       ///< posterior samples at inference
  double lr = 1e-3;
  double sigma_n = 1.0;     ///< NS-dropout scale
  double w_d = 100.0;  ///< in normalised units: data noise variance 1/(2 w_d)
  double w_p = 1.0;
  double prior_sigma = 1.0;
  double init_std = 1e-3;   ///< initial posterior standard deviation
  double dpc_init_scale = 0.01;
  double damper_nominal = 2500.0;  ///< linear damper rate of the prior, N*s/m at the wheel
  std::uint64_t seed = 1;
  int width = 64;
  int layers = 4;
  std::vector<int> dpc_hidden{64, 64};
  // variant switches
  bool bayesian = true;
  bool dpc = true;
  bool ns_dropout = true;

  void validate() const {
    if (epochs < 0 || batch_size < 1 || k_samples < 1 || s_samples < 1)
      throw ConfigError("epochs >= 0, batch size, K and S >= 1 required");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(w_d >= 0.0 && w_p >= 0.0)) throw ConfigError("loss weights must be >= 0");
    if (!(prior_sigma > 0.0)) throw ConfigError("prior standard deviation must be > 0");
    if (!(sigma_n >= 0.0)) throw ConfigError("NS-dropout scale must be >= 0");
    if (!(init_std > 0.0)) throw ConfigError("initial posterior std must be > 0");
    if (width < 1 || layers < 1) throw ConfigError("network width and depth must be >= 1");
    for (int h : dpc_hidden)
      if (h < 1) throw ConfigError("DPC hidden widths must be >= 1");
  }
};

/// Applies a variant's switches on top of a base configuration.
inline TrainConfig configure_variant(TrainConfig c, Variant v) {
  switch (v) {
    case Variant::full: break;
    case Variant::no_physics: c.w_p = 0.0; break;
    case Variant::no_bayesian:
      c.bayesian = false;
      c.ns_dropout = false;
      break;
    case Variant::no_dpc: c.dpc = false; break;
    case Variant::pinn:
    case Variant::mlp:
      c.bayesian = false;
      c.ns_dropout = false;
      c.dpc = false;
      if (v == Variant::mlp) c.w_p = 0.0;
      break;
  }
  return c;
}

struct Normalizer {
  Vec mean = Vec::Zero(SensorSample::input_dim);
  Vec sd = Vec::Ones(SensorSample::input_dim);
  Quad f0{};

  Vec features(const SensorSample& s) const {
    const auto f = s.features();
    Vec v(SensorSample::input_dim);
    for (std::size_t i = 0; i < f.size(); ++i) v[i] = (f[i] - mean[i]) / sd[i];
    return v;
  }
  double to_norm(double f, int c) const { return (f - f0[c]) / f0[c]; }
  double to_newton(double y, int c) const { return f0[c] * (1.0 + y); }
};

inline Normalizer fit_normalizer(const Dataset& ds, const dyn::QuarterCarParams& q) {
  const auto train = ds.split(SplitName::train);
  std::size_t n = 0;
  Normalizer z;
  Vec sum = Vec::Zero(SensorSample::input_dim), sq = Vec::Zero(SensorSample::input_dim);
  for (const auto* sc : train)
    for (const auto& s : sc->inputs) {
      const auto f = s.features();
      for (std::size_t i = 0; i < f.size(); ++i) sum[i] += f[i];
      ++n;
    }
  if (n == 0) throw EmptySplit("training split has no samples");
  z.mean = sum / static_cast<double>(n);
  for (const auto* sc : train)
    for (const auto& s : sc->inputs) {
      const auto f = s.features();
      for (std::size_t i = 0; i < f.size(); ++i) sq[i] += (f[i] - z.mean[i]) * (f[i] - z.mean[i]);
    }
  for (Eigen::Index i = 0; i < sq.size(); ++i) {
    const double v = std::sqrt(sq[i] / static_cast<double>(n));
    z.sd[i] = v > 1e-12 ? v : 1.0;
  }
  for (Corner c : all_corners) z.f0[idx(c)] = q.f0(c);
  return z;
}

struct EpochLog {
  int epoch = 0;
  double l_d = 0.0;  ///< mean per-sample data loss (normalized units)
  double l_p = 0.0;  ///< mean per-sample physics loss
  double kl = 0.0;
  double total = 0.0;
  double val_rmse = 0.0;  ///< N, mean-weight network on the validation split
};

struct Model {
  std::string method = "dbpnet";
  nn::NetworkShape shape;
  nn::VariationalParams post;  ///< rho is empty for point-weight models
  bool has_dpc = false;
  nn::DpcParams dpc;
  bool ns_dropout = true;
  Normalizer norm;
  dyn::QuarterCarParams qc;
  TrainConfig cfg;
  std::size_t train_size = 0;
  std::vector<EpochLog> log;

  bool bayesian() const { return post.rho.size() == post.mu.size() && post.mu.size() > 0; }
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainingSet {
  Mat x, xprev;  ///< in_dim x n, normalized
  Mat y;         ///< 4 x n normalized loads
  Mat yphy;      ///< 4 x n normalized quarter-car targets (valid where has_phy)
  std::vector<char> has_phy;
  std::size_t size() const { return static_cast<std::size_t>(x.cols()); }
};

/// Pairs (x_t, x_{t-1}) per scenario; the first frame pairs with itself.
inline TrainingSet make_set(const std::vector<const ScenarioData*>& scen, const Normalizer& z,
                            const dyn::QuarterCarParams& q) {
  std::size_t n = 0;
  for (const auto* sc : scen) n += sc->inputs.size();
  TrainingSet t;
  const auto d = static_cast<Eigen::Index>(SensorSample::input_dim);
  t.x.resize(d, static_cast<Eigen::Index>(n));
  t.xprev.resize(d, static_cast<Eigen::Index>(n));
  t.y.resize(4, static_cast<Eigen::Index>(n));
  t.yphy = Mat::Zero(4, static_cast<Eigen::Index>(n));
  t.has_phy.assign(n, 0);
  Eigen::Index col = 0;
  for (const auto* sc : scen) {
    const Eigen::Index base = col;
    for (std::size_t r = 0; r < sc->inputs.size(); ++r, ++col) {
      t.x.col(col) = z.features(sc->inputs[r]);
      t.xprev.col(col) = z.features(sc->inputs[r == 0 ? 0 : r - 1]);
      for (int c = 0; c < 4; ++c) t.y(c, col) = z.to_norm(sc->loads[r][c], c);
    }
    for (std::size_t k = 0; k < sc->colloc.size(); ++k) {
      const Eigen::Index j = base + static_cast<Eigen::Index>(sc->colloc_rows[k]);
      for (Corner c : all_corners)
        t.yphy(idx(c), j) = z.to_norm(dyn::quarter_car_force(sc->colloc[k], q, c), idx(c));
      t.has_phy[static_cast<std::size_t>(j)] = 1;
    }
  }
  return t;
}

inline Mat gather(const Mat& m, const std::vector<Eigen::Index>& cols) {
  Mat out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

inline Vec draw_normals(Eigen::Index n, Rng& rng) {
  Vec e(n);
  for (Eigen::Index i = 0; i < n; ++i) e[i] = rng.normal();
  return e;
}

/// Initializes a model of the configured variant without training it.
inline Model init_model(const TrainConfig& cfg, const Normalizer& z, const dyn::QuarterCarParams& q,
                        const std::string& method) {
  cfg.validate();
  Model m;
  m.method = method;
  m.cfg = cfg;
  m.shape = {static_cast<int>(SensorSample::input_dim), cfg.width, cfg.layers, 4};
  m.norm = z;
  m.qc = q;
  m.ns_dropout = cfg.ns_dropout;
  Rng rng(Rng::derive(cfg.seed, 0));
  const auto n = static_cast<Eigen::Index>(m.shape.param_count());
  m.post.mu = Vec::Zero(n);
  nn::mlp_init(m.post.mu.data(), m.shape.sizes(), rng);
  if (cfg.bayesian) m.post.rho = Vec::Constant(n, nn::softplus_inverse(cfg.init_std));
  m.has_dpc = cfg.dpc;
  if (cfg.dpc) {
    nn::DpcShape ds;
    ds.in_dim = m.shape.in_dim;
    ds.width = cfg.width;
    ds.hidden = cfg.dpc_hidden;
    m.dpc = nn::dpc_init(ds, rng, cfg.dpc_init_scale);
  }
  return m;
}

using EpochCallback = std::function<void(const Model&, const EpochLog&)>;

namespace detail {

/// Mean-weight prediction in normalized units.
inline Mat mean_forward(const Model& m, const Mat& x, const Mat& xprev) {
  Rng unused(0);
  nn::ConditionedOptions opt{m.cfg.sigma_n, m.ns_dropout, nn::Mode::eval};
  return nn::conditioned_forward(m.shape, x, xprev, m.post.mu, m.has_dpc ? &m.dpc : nullptr, opt,
                                 unused);
}

inline double set_rmse(const Model& m, const TrainingSet& s) {
  if (s.size() == 0) return 0.0;
  const Mat out = mean_forward(m, s.x, s.xprev);
  double ss = 0.0;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (int c = 0; c < 4; ++c) {
      const double e = m.norm.f0[c] * (out(c, j) - s.y(c, j));
      ss += e * e;
    }
  return std::sqrt(ss / static_cast<double>(4 * out.cols()));
}

}  // namespace detail

/// Training loop for every variant (the switches live in cfg).
inline Model train(const Dataset& ds, const TrainConfig& cfg, const dyn::QuarterCarParams& q, const std::string& method,
                   const EpochCallback& on_epoch = {}) {
  cfg.validate();
  q.validate();
  const auto train_sc = ds.split(SplitName::train);
  if (train_sc.empty()) throw EmptySplit("training split is empty");
  const Normalizer z = fit_normalizer(ds, q);
  const TrainingSet tr = make_set(train_sc, z, q);
  const TrainingSet va = make_set(ds.split(SplitName::validation), z, q);
  Model m = init_model(cfg, z, q, method);
  m.train_size = tr.size();

  const bool bayes = m.bayesian();
  const Eigen::Index n_theta = m.post.mu.size();
  const Eigen::Index n_dpc = m.has_dpc ? m.dpc.p.size() : 0;
  const Eigen::Index n_total = n_theta * (bayes ? 2 : 1) + n_dpc;
  nn::Adam opt(n_total, cfg.lr);
  Vec params(n_total), grad(n_total);
  auto pack = [&]() {
    params.head(n_theta) = m.post.mu;
    if (bayes) params.segment(n_theta, n_theta) = m.post.rho;
    if (n_dpc) params.tail(n_dpc) = m.dpc.p;
  };
  auto unpack = [&]() {
    m.post.mu = params.head(n_theta);
    if (bayes) m.post.rho = params.segment(n_theta, n_theta);
    if (n_dpc) m.dpc.p = params.tail(n_dpc);
  };
  pack();

  Rng rng(Rng::derive(cfg.seed, 1));
  const double dsize = static_cast<double>(tr.size());
  const nn::PriorSpec prior{cfg.prior_sigma};
  std::vector<Eigen::Index> order(tr.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const nn::ConditionedOptions fopt{cfg.sigma_n, cfg.ns_dropout, nn::Mode::train};

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    EpochLog lg;
    lg.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Eigen::Index> cols(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      const Mat xb = gather(tr.x, cols), pb = gather(tr.xprev, cols), yb = gather(tr.y, cols);
      const Mat fb = gather(tr.yphy, cols);
      Vec mask(static_cast<Eigen::Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) mask[static_cast<Eigen::Index>(j)] = tr.has_phy[static_cast<std::size_t>(cols[j])];
      const double bsz = static_cast<double>(cols.size());

      grad.setZero();
      Vec dmu = Vec::Zero(n_theta), drho = Vec::Zero(bayes ? n_theta : 0);
      Vec ddpc = Vec::Zero(n_dpc);
      std::vector<double> lds, lps;
      for (int k = 0; k < cfg.k_samples; ++k) {
        Vec eps, theta;
        if (bayes) {
          eps = draw_normals(n_theta, rng);
          theta = nn::variational_sample(m.post, eps);
        } else {
          theta = m.post.mu;
        }
        nn::ForwardTape tape;
        const Mat out = nn::conditioned_forward(m.shape, xb, pb, theta,
                                                m.has_dpc ? &m.dpc : nullptr, fopt, rng, &tape);
        const Mat rd = out - yb;
        Mat rp = out - fb;
        rp.array().rowwise() *= mask.transpose().array();
        const double ld = rd.squaredNorm(), lp = rp.squaredNorm();
        lds.push_back(ld);
        lps.push_back(lp);
        const Mat dout = (2.0 / (cfg.k_samples * bsz)) * (cfg.w_d * rd + cfg.w_p * rp);
        Vec dtheta = Vec::Zero(n_theta);
        nn::conditioned_backward(m.shape, theta, m.has_dpc ? &m.dpc : nullptr, tape, dout, dtheta,
                                 m.has_dpc ? &ddpc : nullptr);
        if (bayes)
          nn::variational_backward(m.post, eps, dtheta, dmu, drho);
        else
          dmu += dtheta;
      }
      double kl = 0.0;
      if (bayes) {
        kl = nn::kl_mean_field(m.post, prior);
        nn::kl_gradient(m.post, prior, 1.0 / dsize, dmu, drho);
      }
      const double total = total_objective(lds, lps, kl, cfg.w_d, cfg.w_p, bsz, dsize);
      if (!std::isfinite(total))
        throw NonFiniteLoss("objective became non-finite at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches) + " (data " +
                            std::to_string(lds.back()) + ", physics " + std::to_string(lps.back()) +
                            ", KL " + std::to_string(kl) + ")");
      grad.head(n_theta) = dmu;
      if (bayes) grad.segment(n_theta, n_theta) = drho;
      if (n_dpc) grad.tail(n_dpc) = ddpc;
      opt.step(params, grad);
      unpack();

      double ld_mean = 0.0, lp_mean = 0.0;
      for (std::size_t k = 0; k < lds.size(); ++k) {
        ld_mean += lds[k] / bsz;
        lp_mean += lps[k] / bsz;
      }
      lg.l_d += ld_mean / static_cast<double>(lds.size());
      lg.l_p += lp_mean / static_cast<double>(lps.size());
      lg.kl += kl;
      lg.total += total;
      ++batches;
    }
    if (batches) {
      lg.l_d /= static_cast<double>(batches);
      lg.l_p /= static_cast<double>(batches);
      lg.kl /= static_cast<double>(batches);
      lg.total /= static_cast<double>(batches);
    }
    lg.val_rmse = detail::set_rmse(m, va);
    m.log.push_back(lg);
    if (on_epoch) on_epoch(m, lg);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct PredictiveOutput {
  std::vector<WheelLoads> mean;
  std::vector<WheelLoads> variance;  ///< N^2
};

/// Posterior-predictive mean and variance over a batch of normalized inputs (columns).
inline PredictiveOutput predict_normalized(const Model& m, const Mat& x, const Mat& xprev, int s_samples,
                                           Rng& rng) {
  if (s_samples < 1) throw ConfigError("posterior sample count must be >= 1");
  const Eigen::Index n = x.cols();
  Mat sum = Mat::Zero(4, n), sq = Mat::Zero(4, n);
  std::vector<Mat> draws;
  nn::ConditionedOptions opt{m.cfg.sigma_n, m.ns_dropout, nn::Mode::eval};
  const bool bayes = m.bayesian();
  for (int s = 0; s < s_samples; ++s) {
    Vec theta = bayes ? nn::variational_sample(m.post, draw_normals(m.post.mu.size(), rng)) : m.post.mu;
    Mat out = nn::conditioned_forward(m.shape, x, xprev, theta, m.has_dpc ? &m.dpc : nullptr, opt, rng);
    for (int c = 0; c < 4; ++c) out.row(c) = (m.norm.f0[c] * (1.0 + out.row(c).array())).matrix();
    sum += out;
    draws.push_back(std::move(out));
  }
  const Mat mean = sum / static_cast<double>(s_samples);
  for (const auto& d : draws) sq += (d - mean).cwiseAbs2();
  const Mat var = sq / static_cast<double>(s_samples);
  PredictiveOutput po;
  po.mean.resize(static_cast<std::size_t>(n));
  po.variance.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j)
    for (int c = 0; c < 4; ++c) {
      po.mean[static_cast<std::size_t>(j)][c] = mean(c, j);
      po.variance[static_cast<std::size_t>(j)][c] = var(c, j);
    }
  return po;
}

/// Single-frame prediction from raw sensor samples.
inline PredictiveOutput predict(const Model& m, const SensorSample& xt, const SensorSample& xprev,
                                int s_samples, Rng& rng) {
  Mat x(m.shape.in_dim, 1), p(m.shape.in_dim, 1);
  x.col(0) = m.norm.features(xt);
  p.col(0) = m.norm.features(xprev);
  return predict_normalized(m, x, p, s_samples, rng);
}

/// Whole-scenario prediction; frame 0 pairs with itself.
inline PredictiveOutput predict_series(const Model& m, const std::vector<SensorSample>& in,
                                       int s_samples, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(in.size());
  Mat x(m.shape.in_dim, n), p(m.shape.in_dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    x.col(j) = m.norm.features(in[static_cast<std::size_t>(j)]);
    p.col(j) = m.norm.features(in[static_cast<std::size_t>(j == 0 ? 0 : j - 1)]);
  }
  return predict_normalized(m, x, p, s_samples, rng);
}

}  // namespace dbpnet::est
