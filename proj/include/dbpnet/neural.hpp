#pragma once

// Dense networks with hand-written reverse mode, batched column-wise
// (features x batch). Parameters live in flat vectors so the optimizer and
// the variational layer treat every network the same way.
//
// Flat layout of an MLP with sizes {n0, n1, ..., nk}: for each layer the
// weight matrix (n_{i+1} x n_i, column-major) followed by its bias.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "dbpnet/errors.hpp"
#include "dbpnet/rng.hpp"

namespace dbpnet::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// ln(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

// ---------------------------------------------------------------------------
// Plain MLP (tanh hidden layers, linear output)
// ---------------------------------------------------------------------------

inline std::size_t mlp_param_count(const std::vector<int>& sizes) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    n += static_cast<std::size_t>(sizes[i + 1]) * (sizes[i] + 1);
  return n;
}

struct MlpTape {
  std::vector<Mat> act;  ///< act[0] input, act[i] tanh output of hidden layer i
};

inline Mat mlp_forward(const double* p, const std::vector<int>& sizes, const Mat& x,
                       MlpTape* tape = nullptr) {
  if (x.rows() != sizes.front()) throw ShapeError("MLP input has wrong row count");
  Mat h = x;
  if (tape) {
    tape->act.clear();
    tape->act.push_back(x);
  }
  const std::size_t n = sizes.size() - 1;
  for (std::size_t i = 0; i < n; ++i) {
    const int in = sizes[i], out = sizes[i + 1];
    Eigen::Map<const Mat> w(p, out, in);
    Eigen::Map<const Vec> b(p + static_cast<std::ptrdiff_t>(out) * in, out);
    p += static_cast<std::ptrdiff_t>(out) * (in + 1);
    Mat z = w * h;
    z.colwise() += b;
    if (i + 1 < n) {
      h = z.array().tanh().matrix();
      if (tape) tape->act.push_back(h);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

/// Accumulates parameter gradients into g and returns d(loss)/d(input).
inline Mat mlp_backward(const double* p, const std::vector<int>& sizes, const MlpTape& tape,
                        const Mat& dout, double* g) {
  const std::size_t n = sizes.size() - 1;
  std::vector<std::ptrdiff_t> off(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i)
    off[i + 1] = off[i] + static_cast<std::ptrdiff_t>(sizes[i + 1]) * (sizes[i] + 1);
  Mat d = dout;
  for (std::size_t ii = n; ii-- > 0;) {
    const int in = sizes[ii], out = sizes[ii + 1];
    Eigen::Map<const Mat> w(p + off[ii], out, in);
    Eigen::Map<Mat> gw(g + off[ii], out, in);
    Eigen::Map<Vec> gb(g + off[ii] + static_cast<std::ptrdiff_t>(out) * in, out);
    const Mat& h_in = tape.act[ii];
    gw.noalias() += d * h_in.transpose();
    gb += d.rowwise().sum();
    Mat dh = w.transpose() * d;
    if (ii > 0) dh.array() *= 1.0 - h_in.array().square();
    d = std::move(dh);
  }
  return d;
}

/// Fills p with N(0, 1/fan_in) weights and zero biases.
inline void mlp_init(double* p, const std::vector<int>& sizes, Rng& rng) {
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int in = sizes[i], out = sizes[i + 1];
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    for (int k = 0; k < out * in; ++k) *p++ = sd * rng.normal();
    for (int k = 0; k < out; ++k) *p++ = 0.0;
  }
}

// ---------------------------------------------------------------------------
// Variational layer over a flat parameter vector
// ---------------------------------------------------------------------------

struct VariationalParams {
  Vec mu;
  Vec rho;

  Vec std_dev() const { return rho.unaryExpr([](double r) { return softplus(r); }); }
};

struct PriorSpec {
  double sigma = 1.0;
};

/// theta = mu + softplus(rho) * eps
inline Vec variational_sample(const VariationalParams& z, const Vec& eps) {
  if (eps.size() != z.mu.size() || z.rho.size() != z.mu.size())
    throw ShapeError("variational sample: eps has " + std::to_string(eps.size()) +
                     " entries, parameters have " + std::to_string(z.mu.size()));
  Vec th(z.mu.size());
  for (Eigen::Index i = 0; i < th.size(); ++i) th[i] = z.mu[i] + softplus(z.rho[i]) * eps[i];
  return th;
}

/// Pulls d/dtheta back onto (mu, rho) along the reparameterization path.
inline void variational_backward(const VariationalParams& z, const Vec& eps, const Vec& dtheta,
                                 Vec& dmu, Vec& drho) {
  dmu += dtheta;
  for (Eigen::Index i = 0; i < dtheta.size(); ++i)
    drho[i] += dtheta[i] * eps[i] * sigmoid(z.rho[i]);
}

/// Closed-form KL(N(mu, s^2) || N(0, sigma^2)) summed over all parameters.
inline double kl_mean_field(const VariationalParams& z, const PriorSpec& prior) {
  const double sp2 = prior.sigma * prior.sigma;
  double kl = 0.0;
  for (Eigen::Index i = 0; i < z.mu.size(); ++i) {
    const double s = softplus(z.rho[i]);
    kl += std::log(prior.sigma / s) + (s * s + z.mu[i] * z.mu[i]) / (2.0 * sp2) - 0.5;
  }
  return kl;
}

inline void kl_gradient(const VariationalParams& z, const PriorSpec& prior, double scale, Vec& dmu,
                        Vec& drho) {
  const double sp2 = prior.sigma * prior.sigma;
  for (Eigen::Index i = 0; i < z.mu.size(); ++i) {
    const double s = softplus(z.rho[i]);
    dmu[i] += scale * z.mu[i] / sp2;
    drho[i] += scale * (-1.0 / s + s / sp2) * sigmoid(z.rho[i]);
  }
}

// ---------------------------------------------------------------------------
// NS-dropout and FiLM
// ---------------------------------------------------------------------------

enum class DropoutMode {
  sampled,  ///< H = 1/2 sigmoid(N(0, sigma_n^2)) + 1/2 per entry
  mean,     ///< H fixed at its mean 0.75
  off,      ///< H = 1
};

inline Mat ns_dropout_factors(Eigen::Index rows, Eigen::Index cols, double sigma_n,
                              DropoutMode mode, Rng& rng) {
  if (mode == DropoutMode::off) return Mat::Ones(rows, cols);
  if (mode == DropoutMode::mean) return Mat::Constant(rows, cols, 0.75);
  Mat h(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) h(i, j) = 0.5 * sigmoid(sigma_n * rng.normal()) + 0.5;
  return h;
}

struct DropoutResult {
  Mat x;
  Mat h;
};

inline DropoutResult ns_dropout(const Mat& x, double sigma_n, Rng& rng) {
  if (!(sigma_n >= 0.0)) throw ConfigError("NS-dropout scale must be >= 0");
  DropoutResult r;
  r.h = ns_dropout_factors(x.rows(), x.cols(), sigma_n, DropoutMode::sampled, rng);
  r.x = x.cwiseProduct(r.h);
  return r;
}

struct FilmPair {
  Mat gamma;  ///< width x batch
  Mat beta;
};

inline Mat film_modulate(const Mat& f, const FilmPair& fp) {
  if (f.rows() != fp.gamma.rows() || f.cols() != fp.gamma.cols() ||
      f.rows() != fp.beta.rows() || f.cols() != fp.beta.cols())
    throw ShapeError("FiLM pair shape does not match the activations");
  return (fp.gamma.array() * f.array() + fp.beta.array()).matrix();
}

inline FilmPair identity_film(Eigen::Index width, Eigen::Index batch) {
  return {Mat::Ones(width, batch), Mat::Zero(width, batch)};
}

// ---------------------------------------------------------------------------
// Damper-characteristic conditioning (DPC) encoder
// ---------------------------------------------------------------------------

struct DpcShape {
  int in_dim = 21;
  int width = 64;               ///< conditioned network hidden width
  std::vector<int> hidden{64, 64};

  std::vector<int> d_sizes() const {
    std::vector<int> s{2 * in_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(width);
    return s;
  }
  std::vector<int> g_sizes() const {
    std::vector<int> s{in_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(width);
    return s;
  }
  std::size_t d_count() const { return mlp_param_count(d_sizes()); }
  std::size_t g_count() const { return mlp_param_count(g_sizes()); }
  std::size_t final_count() const { return static_cast<std::size_t>(2 * width) * (width + 1); }
  std::size_t param_count() const { return d_count() + g_count() + final_count(); }
};

struct DpcParams {
  DpcShape shape;
  Vec p;

  const double* d_ptr() const { return p.data(); }
  const double* g_ptr() const { return p.data() + shape.d_count(); }
  const double* final_ptr() const { return p.data() + shape.d_count() + shape.g_count(); }
};

/// Small random encoder whose final layer starts near the identity
/// modulation (gamma = 1, beta = 0).
inline DpcParams dpc_init(const DpcShape& s, Rng& rng, double final_scale = 0.01) {
  DpcParams d;
  d.shape = s;
  d.p = Vec::Zero(static_cast<Eigen::Index>(s.param_count()));
  mlp_init(d.p.data(), s.d_sizes(), rng);
  mlp_init(d.p.data() + s.d_count(), s.g_sizes(), rng);
  double* f = d.p.data() + s.d_count() + s.g_count();
  const int w = s.width;
  for (int k = 0; k < 2 * w * w; ++k) f[k] = final_scale * rng.normal() / std::sqrt(double(w));
  for (int k = 0; k < w; ++k) f[2 * w * w + k] = 1.0;      // gamma bias
  for (int k = 0; k < w; ++k) f[2 * w * w + w + k] = 0.0;  // beta bias
  return d;
}

struct DpcTape {
  MlpTape d_tape, g_tape;
  Mat d, g, gated;
};

inline FilmPair dpc_forward(const Mat& xt, const Mat& xprev, const DpcParams& dp,
                            DpcTape* tape = nullptr) {
  const DpcShape& s = dp.shape;
  if (xt.rows() != s.in_dim || xprev.rows() != s.in_dim || xt.cols() != xprev.cols())
    throw ShapeError("DPC inputs do not match the encoder shape");
  Mat u(2 * s.in_dim, xt.cols());
  u.topRows(s.in_dim) = xt - xprev;
  u.bottomRows(s.in_dim) = xt;
  DpcTape local;
  DpcTape& tp = tape ? *tape : local;
  tp.d = mlp_forward(dp.d_ptr(), s.d_sizes(), u, &tp.d_tape);
  tp.g = mlp_forward(dp.g_ptr(), s.g_sizes(), xt, &tp.g_tape).unaryExpr([](double v) { return sigmoid(v); });
  tp.gated = tp.g.cwiseProduct(tp.d);
  const int w = s.width;
  Eigen::Map<const Mat> wf(dp.final_ptr(), 2 * w, w);
  Eigen::Map<const Vec> bf(dp.final_ptr() + 2 * w * w, 2 * w);
  Mat gb = wf * tp.gated;
  gb.colwise() += bf;
  return {gb.topRows(w), gb.bottomRows(w)};
}

/// Accumulates d(loss)/d(dpc params) into grad.
inline void dpc_backward(const DpcParams& dp, const DpcTape& tp, const Mat& dgamma,
                         const Mat& dbeta, Vec& grad) {
  const DpcShape& s = dp.shape;
  const int w = s.width;
  Mat dgb(2 * w, dgamma.cols());
  dgb.topRows(w) = dgamma;
  dgb.bottomRows(w) = dbeta;
  double* gf = grad.data() + s.d_count() + s.g_count();
  Eigen::Map<Mat> gwf(gf, 2 * w, w);
  Eigen::Map<Vec> gbf(gf + 2 * w * w, 2 * w);
  Eigen::Map<const Mat> wf(dp.final_ptr(), 2 * w, w);
  gwf.noalias() += dgb * tp.gated.transpose();
  gbf += dgb.rowwise().sum();
  const Mat dgated = wf.transpose() * dgb;
  const Mat dd = dgated.cwiseProduct(tp.g);
  const Mat dz = (dgated.array() * tp.d.array() * tp.g.array() * (1.0 - tp.g.array())).matrix();
  mlp_backward(dp.d_ptr(), s.d_sizes(), tp.d_tape, dd, grad.data());
  mlp_backward(dp.g_ptr(), s.g_sizes(), tp.g_tape, dz, grad.data() + s.d_count());
}

// ---------------------------------------------------------------------------
// Conditioned network
// ---------------------------------------------------------------------------

struct NetworkShape {
  int in_dim = 21;
  int width = 64;
  int layers = 4;  ///< hidden layers
  int out_dim = 4;

  void validate() const {
    if (in_dim < 1 || width < 1 || layers < 1 || out_dim < 1)
      throw ConfigError("network shape entries must be >= 1");
  }
  std::vector<int> sizes() const {
    std::vector<int> s{in_dim};
    for (int l = 0; l < layers; ++l) s.push_back(width);
    s.push_back(out_dim);
    return s;
  }
  std::size_t param_count() const { return mlp_param_count(sizes()); }
};

enum class Mode { train, eval };

struct ForwardTape {
  Mat x;
  FilmPair film;
  bool has_dpc = false;
  DpcTape dpc;
  std::vector<Mat> h_in;  ///< input to each hidden layer
  std::vector<Mat> t;     ///< tanh outputs
  std::vector<Mat> H;     ///< dropout factors
  Mat h_last;
};

struct ConditionedOptions {
  double sigma_n = 0.0;
  bool ns_dropout = true;
  Mode mode = Mode::train;
};

/// Hidden layer l: h <- (gamma * tanh(W h + b) + beta) * H; output is affine.
/// Without a DPC encoder the modulation is the identity.
inline Mat conditioned_forward(const NetworkShape& shape, const Mat& xt, const Mat& xprev,
                               const Vec& theta, const DpcParams* dpc,
                               const ConditionedOptions& opt, Rng& rng,
                               ForwardTape* tape = nullptr) {
  if (static_cast<std::size_t>(theta.size()) != shape.param_count())
    throw ShapeError("parameter vector has " + std::to_string(theta.size()) + " entries, network needs " +
                     std::to_string(shape.param_count()));
  if (xt.rows() != shape.in_dim) throw ShapeError("input has wrong feature count");
  if (dpc && dpc->shape.width != shape.width)
    throw ShapeError("DPC width differs from the network hidden width");
  ForwardTape local;
  ForwardTape& tp = tape ? *tape : local;
  const Eigen::Index b = xt.cols();
  tp.x = xt;
  tp.has_dpc = dpc != nullptr;
  tp.film = dpc ? dpc_forward(xt, xprev, *dpc, &tp.dpc) : identity_film(shape.width, b);
  const DropoutMode dm = !opt.ns_dropout          ? DropoutMode::off
                         : opt.mode == Mode::eval ? DropoutMode::mean
                                                  : DropoutMode::sampled;
  tp.h_in.clear();
  tp.t.clear();
  tp.H.clear();
  const auto sizes = shape.sizes();
  const double* p = theta.data();
  Mat h = xt;
  for (int l = 0; l < shape.layers; ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    Eigen::Map<const Mat> w(p, out, in);
    Eigen::Map<const Vec> bias(p + static_cast<std::ptrdiff_t>(out) * in, out);
    p += static_cast<std::ptrdiff_t>(out) * (in + 1);
    Mat z = w * h;
    z.colwise() += bias;
    Mat t = z.array().tanh().matrix();
    Mat hd = ns_dropout_factors(out, b, opt.sigma_n, dm, rng);
    Mat next = film_modulate(t, tp.film).cwiseProduct(hd);
    tp.h_in.push_back(std::move(h));
    tp.t.push_back(std::move(t));
    tp.H.push_back(std::move(hd));
    h = std::move(next);
  }
  Eigen::Map<const Mat> wo(p, shape.out_dim, shape.width);
  Eigen::Map<const Vec> bo(p + static_cast<std::ptrdiff_t>(shape.out_dim) * shape.width, shape.out_dim);
  Mat out = wo * h;
  out.colwise() += bo;
  tp.h_last = std::move(h);
  return out;
}

/// Gradients of a loss with d(loss)/d(output) = dout. The dropout factors
/// recorded on the tape are treated as constants.
inline void conditioned_backward(const NetworkShape& shape, const Vec& theta, const DpcParams* dpc,
                                 const ForwardTape& tp, const Mat& dout, Vec& dtheta,
                                 Vec* ddpc) {
  const auto sizes = shape.sizes();
  std::vector<std::ptrdiff_t> off(shape.layers + 2, 0);
  for (int l = 0; l <= shape.layers; ++l)
    off[l + 1] = off[l] + static_cast<std::ptrdiff_t>(sizes[l + 1]) * (sizes[l] + 1);
  const double* p = theta.data();
  double* g = dtheta.data();

  Eigen::Map<const Mat> wo(p + off[shape.layers], shape.out_dim, shape.width);
  Eigen::Map<Mat> gwo(g + off[shape.layers], shape.out_dim, shape.width);
  Eigen::Map<Vec> gbo(g + off[shape.layers] + static_cast<std::ptrdiff_t>(shape.out_dim) * shape.width,
                      shape.out_dim);
  gwo.noalias() += dout * tp.h_last.transpose();
  gbo += dout.rowwise().sum();
  Mat dh = wo.transpose() * dout;

  Mat dgamma = Mat::Zero(shape.width, dout.cols());
  Mat dbeta = Mat::Zero(shape.width, dout.cols());
  for (int l = shape.layers; l-- > 0;) {
    const int in = sizes[l], out = sizes[l + 1];
    const Mat df = dh.cwiseProduct(tp.H[l]);
    dgamma += df.cwiseProduct(tp.t[l]);
    dbeta += df;
    Mat dz = df.cwiseProduct(tp.film.gamma);
    dz.array() *= 1.0 - tp.t[l].array().square();
    Eigen::Map<const Mat> w(p + off[l], out, in);
    Eigen::Map<Mat> gw(g + off[l], out, in);
    Eigen::Map<Vec> gb(g + off[l] + static_cast<std::ptrdiff_t>(out) * in, out);
    gw.noalias() += dz * tp.h_in[l].transpose();
    gb += dz.rowwise().sum();
    if (l > 0) dh = w.transpose() * dz;
  }
  if (dpc && ddpc) dpc_backward(*dpc, tp.dpc, dgamma, dbeta, *ddpc);
}

/// Unconditioned reference forward: tanh hidden layers, affine output.
inline Mat plain_forward(const NetworkShape& shape, const Mat& x, const Vec& theta) {
  return mlp_forward(theta.data(), shape.sizes(), x);
}

}  // namespace dbpnet::nn
