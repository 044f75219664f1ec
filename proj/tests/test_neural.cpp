#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "dbpnet/neural.hpp"

using namespace dbpnet;
using namespace dbpnet::nn;

namespace {

Vec randn(Eigen::Index n, Rng& rng, double s = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = s * rng.normal();
  return v;
}

Mat randn(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = s * rng.normal();
  return m;
}

/// Central differences of a scalar function of a vector.
Vec numeric_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5) {
  Vec g(x.size());
  Vec y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double x0 = y[i];
    y[i] = x0 + h;
    const double fp = f(y);
    y[i] = x0 - h;
    const double fm = f(y);
    y[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double rel_error(const Vec& a, const Vec& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

struct Case {
  NetworkShape shape;
  DpcShape dshape;
  Mat xt, xprev, weights;
  Vec theta;
  DpcParams dpc;
  ConditionedOptions opt;
  std::uint64_t drop_seed;
};

Case random_case(std::uint64_t seed) {
  Rng rng(seed);
  Case c;
  c.shape.in_dim = 2 + static_cast<int>(rng.below(4));
  c.shape.width = 3 + static_cast<int>(rng.below(6));
  c.shape.layers = 1 + static_cast<int>(rng.below(3));
  c.shape.out_dim = 1 + static_cast<int>(rng.below(4));
  c.dshape.in_dim = c.shape.in_dim;
  c.dshape.width = c.shape.width;
  c.dshape.hidden = {3 + static_cast<int>(rng.below(4))};
  const int b = 2 + static_cast<int>(rng.below(4));
  c.xt = randn(c.shape.in_dim, b, rng);
  c.xprev = randn(c.shape.in_dim, b, rng);
  c.weights = randn(c.shape.out_dim, b, rng);
  c.theta = randn(static_cast<Eigen::Index>(c.shape.param_count()), rng, 0.5);
  c.dpc = dpc_init(c.dshape, rng, 0.5);
  c.dpc.p += randn(c.dpc.p.size(), rng, 0.1);
  c.opt.sigma_n = rng.uniform(0.2, 2.0);
  c.opt.ns_dropout = true;
  c.opt.mode = Mode::train;
  c.drop_seed = rng.next_u64();
  return c;
}

double case_loss(const Case& c, const Vec& theta, const DpcParams& dpc) {
  Rng rng(c.drop_seed);
  const Mat y = conditioned_forward(c.shape, c.xt, c.xprev, theta, &dpc, c.opt, rng);
  return (y.array() * c.weights.array()).sum() + 0.5 * y.squaredNorm();
}

}  // namespace

TEST(Activations, SoftplusAtZeroIsLn2) { EXPECT_EQ(softplus(0.0), std::log(2.0)); }

TEST(Activations, StableAtExtremes) {
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_EQ(softplus(-800.0), 0.0);
  EXPECT_EQ(softplus(800.0), 800.0);
  for (double y : {1e-6, 1e-3, 0.5, 2.0, 40.0}) EXPECT_NEAR(softplus(softplus_inverse(y)), y, 1e-12 * std::max(1.0, y));
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  const std::vector<int> sizes{4, 7, 5, 3};
  const Vec p = randn(static_cast<Eigen::Index>(mlp_param_count(sizes)), rng, 0.7);
  const Mat x = randn(4, 6, rng);
  const Mat w = randn(3, 6, rng);
  MlpTape tape;
  mlp_forward(p.data(), sizes, x, &tape);
  Vec g = Vec::Zero(p.size());
  const Mat dx = mlp_backward(p.data(), sizes, tape, w, g.data());
  const Vec gn = numeric_gradient([&](const Vec& q) { return (mlp_forward(q.data(), sizes, x).array() * w.array()).sum(); }, p);
  EXPECT_LT(rel_error(g, gn), 1e-7);
  const Vec xv = Eigen::Map<const Vec>(x.data(), x.size());
  const Vec gx = numeric_gradient(
      [&](const Vec& q) {
        const Mat xm = Eigen::Map<const Mat>(q.data(), 4, 6);
        return (mlp_forward(p.data(), sizes, xm).array() * w.array()).sum();
      },
      xv);
  EXPECT_LT(rel_error(Eigen::Map<const Vec>(dx.data(), dx.size()), gx), 1e-7);
}

TEST(Mlp, RejectsWrongInput) {
  const std::vector<int> sizes{3, 2};
  const Vec p = Vec::Zero(static_cast<Eigen::Index>(mlp_param_count(sizes)));
  EXPECT_THROW(mlp_forward(p.data(), sizes, Mat::Zero(4, 1)), ShapeError);
}

TEST(Variational, SampleIsMeanPlusScaledNoise) {
  VariationalParams z{Vec::LinSpaced(4, -1, 1), Vec::LinSpaced(4, -3, 0)};
  const Vec eps = Vec::LinSpaced(4, 0.5, 2.0);
  const Vec th = variational_sample(z, eps);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(th[i], z.mu[i] + softplus(z.rho[i]) * eps[i]);
  EXPECT_THROW(variational_sample(z, Vec::Zero(3)), ShapeError);
  const Vec same = variational_sample(z, Vec::Zero(4));
  EXPECT_EQ(same, z.mu);
}

TEST(Variational, ReparameterizationGradient) {
  Rng rng(5);
  const NetworkShape shape{3, 5, 2, 2};
  const auto n = static_cast<Eigen::Index>(shape.param_count());
  VariationalParams z{randn(n, rng, 0.5), randn(n, rng, 0.3).array() - 3.0};
  const Vec eps = randn(n, rng);
  const Mat x = randn(3, 4, rng);
  const Mat w = randn(2, 4, rng);
  auto loss_theta = [&](const Vec& th) { return (plain_forward(shape, x, th).array() * w.array()).sum(); };
  MlpTape tape;
  const Vec th = variational_sample(z, eps);
  mlp_forward(th.data(), shape.sizes(), x, &tape);
  Vec dth = Vec::Zero(n);
  mlp_backward(th.data(), shape.sizes(), tape, w, dth.data());
  Vec dmu = Vec::Zero(n), drho = Vec::Zero(n);
  variational_backward(z, eps, dth, dmu, drho);
  const Vec nmu = numeric_gradient([&](const Vec& m) { return loss_theta(variational_sample({m, z.rho}, eps)); }, z.mu);
  const Vec nrho = numeric_gradient([&](const Vec& r) { return loss_theta(variational_sample({z.mu, r}, eps)); }, z.rho);
  EXPECT_LT(rel_error(dmu, nmu), 1e-6);
  EXPECT_LT(rel_error(drho, nrho), 1e-6);
}

TEST(Variational, KlGradientMatchesFiniteDifferences) {
  Rng rng(8);
  VariationalParams z{randn(12, rng), randn(12, rng)};
  const PriorSpec prior{0.7};
  Vec dmu = Vec::Zero(12), drho = Vec::Zero(12);
  kl_gradient(z, prior, 1.0, dmu, drho);
  EXPECT_LT(rel_error(dmu, numeric_gradient([&](const Vec& m) { return kl_mean_field({m, z.rho}, prior); }, z.mu)), 1e-7);
  EXPECT_LT(rel_error(drho, numeric_gradient([&](const Vec& r) { return kl_mean_field({z.mu, r}, prior); }, z.rho)), 1e-7);
}

TEST(Variational, KlIsZeroAtThePrior) {
  VariationalParams z{Vec::Zero(5), Vec::Constant(5, softplus_inverse(1.3))};
  EXPECT_NEAR(kl_mean_field(z, {1.3}), 0.0, 1e-12);
  z.mu[2] = 0.1;
  EXPECT_GT(kl_mean_field(z, {1.3}), 0.0);
}

TEST(Variational, KlMatchesMonteCarlo) {
  Rng rng(21);
  VariationalParams z{randn(6, rng, 0.8), randn(6, rng, 0.5).array() - 0.5};
  const PriorSpec prior{1.0};
  const Vec s = z.std_dev();
  const int N = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < N; ++k) {
    double lr = 0.0;  // log q(w) - log p(w)
    for (Eigen::Index i = 0; i < 6; ++i) {
      const double e = rng.normal();
      const double w = z.mu[i] + s[i] * e;
      lr += -std::log(s[i]) - 0.5 * e * e + std::log(prior.sigma) + 0.5 * w * w / (prior.sigma * prior.sigma);
    }
    sum += lr;
    sum2 += lr * lr;
  }
  const double mean = sum / N;
  const double se = std::sqrt((sum2 / N - mean * mean) / N);
  EXPECT_LT(std::abs(mean - kl_mean_field(z, prior)), 3.0 * se) << "mc " << mean << " se " << se;
}

TEST(NsDropout, FactorsBoundedWithMeanThreeQuarters) {
  Rng rng(17);
  const Mat h = ns_dropout_factors(1000, 1000, 1.0, DropoutMode::sampled, rng);
  EXPECT_GT(h.minCoeff(), 0.5);
  EXPECT_LT(h.maxCoeff(), 1.0);
  EXPECT_NEAR(h.mean(), 0.75, 1e-3);
}

TEST(NsDropout, ModesAndScale) {
  Rng rng(1);
  EXPECT_EQ(ns_dropout_factors(3, 2, 1.0, DropoutMode::mean, rng), Mat::Constant(3, 2, 0.75));
  EXPECT_EQ(ns_dropout_factors(3, 2, 1.0, DropoutMode::off, rng), Mat::Ones(3, 2));
  EXPECT_EQ(ns_dropout_factors(3, 2, 0.0, DropoutMode::sampled, rng), Mat::Constant(3, 2, 0.75));
  const Mat x = Mat::Constant(4, 4, 2.0);
  const auto r = ns_dropout(x, 1.0, rng);
  EXPECT_EQ(r.x, x.cwiseProduct(r.h));
  EXPECT_THROW(ns_dropout(x, -1.0, rng), ConfigError);
}

TEST(Film, IdentityAndOverride) {
  Rng rng(2);
  const Mat f = randn(5, 3, rng);
  EXPECT_EQ(film_modulate(f, identity_film(5, 3)), f);
  const Mat beta = randn(5, 3, rng);
  EXPECT_EQ(film_modulate(f, {Mat::Zero(5, 3), beta}), beta);
  const Mat gamma = randn(5, 3, rng);
  EXPECT_EQ(film_modulate(f, {gamma, beta}), (gamma.array() * f.array() + beta.array()).matrix());
  EXPECT_THROW(film_modulate(f, identity_film(4, 3)), ShapeError);
}

TEST(Dpc, InitialModulationIsNearIdentity) {
  Rng rng(4);
  DpcShape s{6, 8, {5, 5}};
  const auto d = dpc_init(s, rng, 0.0);
  const auto fp = dpc_forward(randn(6, 3, rng), randn(6, 3, rng), d);
  EXPECT_EQ(fp.gamma, Mat::Ones(8, 3));
  EXPECT_EQ(fp.beta, Mat::Zero(8, 3));
  EXPECT_EQ(static_cast<std::size_t>(d.p.size()), s.param_count());
}

TEST(Dpc, SaturatedGateReturnsFinalBias) {
  Rng rng(6);
  DpcShape s{4, 6, {5}};
  auto d = dpc_init(s, rng, 1.0);
  const auto gs = s.g_sizes();
  const std::size_t g_last_bias = s.d_count() + mlp_param_count(gs) - static_cast<std::size_t>(gs.back());
  for (int k = 0; k < gs.back(); ++k) d.p[static_cast<Eigen::Index>(g_last_bias) + k] = -50.0;
  const auto fp = dpc_forward(randn(4, 3, rng), randn(4, 3, rng), d);
  const double* bias = d.final_ptr() + 2 * s.width * s.width;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < s.width; ++i) {
      EXPECT_NEAR(fp.gamma(i, j), bias[i], 1e-12);
      EXPECT_NEAR(fp.beta(i, j), bias[s.width + i], 1e-12);
    }
}

TEST(Dpc, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  DpcShape s{4, 5, {6, 3}};
  auto d = dpc_init(s, rng, 0.7);
  d.p += randn(d.p.size(), rng, 0.2);
  const Mat xt = randn(4, 3, rng), xp = randn(4, 3, rng);
  const Mat cg = randn(5, 3, rng), cb = randn(5, 3, rng);
  auto loss = [&](const Vec& p) {
    DpcParams q{s, p};
    const auto fp = dpc_forward(xt, xp, q);
    return (fp.gamma.array() * cg.array()).sum() + (fp.beta.array() * cb.array()).sum();
  };
  DpcTape tape;
  dpc_forward(xt, xp, d, &tape);
  Vec g = Vec::Zero(d.p.size());
  dpc_backward(d, tape, cg, cb, g);
  EXPECT_LT(rel_error(g, numeric_gradient(loss, d.p)), 1e-5);
}

TEST(Dpc, RejectsWrongInputs) {
  Rng rng(1);
  DpcShape s{4, 5, {3}};
  const auto d = dpc_init(s, rng);
  EXPECT_THROW(dpc_forward(Mat::Zero(3, 2), Mat::Zero(3, 2), d), ShapeError);
  EXPECT_THROW(dpc_forward(Mat::Zero(4, 2), Mat::Zero(4, 3), d), ShapeError);
}

// Twenty random shapes; dropout factors held fixed by replaying the same stream.
TEST(Conditioned, GradientsMatchFiniteDifferencesOnRandomConfigurations) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const Case c = random_case(seed);
    ForwardTape tape;
    Rng rng(c.drop_seed);
    const Mat y = conditioned_forward(c.shape, c.xt, c.xprev, c.theta, &c.dpc, c.opt, rng, &tape);
    const Mat dout = c.weights + y;
    Vec gt = Vec::Zero(c.theta.size()), gd = Vec::Zero(c.dpc.p.size());
    conditioned_backward(c.shape, c.theta, &c.dpc, tape, dout, gt, &gd);
    const Vec nt = numeric_gradient([&](const Vec& t) { return case_loss(c, t, c.dpc); }, c.theta);
    const Vec nd = numeric_gradient([&](const Vec& p) { return case_loss(c, c.theta, {c.dshape, p}); }, c.dpc.p);
    EXPECT_LT(rel_error(gt, nt), 1e-5) << "seed " << seed;
    EXPECT_LT(rel_error(gd, nd), 1e-5) << "seed " << seed;
  }
}

TEST(Conditioned, ThreeLayerWidthEightGradients) {
  Case c = random_case(7);
  c.shape = {5, 8, 3, 4};
  c.dshape = {5, 8, {8, 8}};
  Rng rng(77);
  c.xt = randn(5, 4, rng);
  c.xprev = randn(5, 4, rng);
  c.weights = randn(4, 4, rng);
  c.theta = randn(static_cast<Eigen::Index>(c.shape.param_count()), rng, 0.4);
  c.dpc = dpc_init(c.dshape, rng, 0.5);
  ForwardTape tape;
  Rng r2(c.drop_seed);
  const Mat y = conditioned_forward(c.shape, c.xt, c.xprev, c.theta, &c.dpc, c.opt, r2, &tape);
  Vec gt = Vec::Zero(c.theta.size()), gd = Vec::Zero(c.dpc.p.size());
  conditioned_backward(c.shape, c.theta, &c.dpc, tape, c.weights + y, gt, &gd);
  EXPECT_LT(rel_error(gt, numeric_gradient([&](const Vec& t) { return case_loss(c, t, c.dpc); }, c.theta)), 1e-5);
  EXPECT_LT(rel_error(gd, numeric_gradient([&](const Vec& p) { return case_loss(c, c.theta, {c.dshape, p}); }, c.dpc.p)), 1e-5);
}

TEST(Conditioned, ReducesToPlainMlpBitExactly) {
  Rng rng(12);
  const NetworkShape shape{6, 10, 3, 4};
  const Vec theta = randn(static_cast<Eigen::Index>(shape.param_count()), rng, 0.5);
  const Mat x = randn(6, 7, rng);
  ConditionedOptions opt;
  opt.ns_dropout = false;
  Rng r1(1);
  EXPECT_EQ(conditioned_forward(shape, x, x, theta, nullptr, opt, r1), plain_forward(shape, x, theta));

  // an encoder emitting exactly gamma = 1, beta = 0
  DpcShape ds{6, 10, {4}};
  Rng r2(2);
  DpcParams d = dpc_init(ds, r2, 0.0);
  Rng r3(1);
  EXPECT_EQ(conditioned_forward(shape, x, randn(6, 7, rng), theta, &d, opt, r3), plain_forward(shape, x, theta));
}

TEST(Conditioned, EvalModeIsDeterministic) {
  const Case c = random_case(31);
  ConditionedOptions opt = c.opt;
  opt.mode = Mode::eval;
  Rng a(1), b(999);
  EXPECT_EQ(conditioned_forward(c.shape, c.xt, c.xprev, c.theta, &c.dpc, opt, a),
            conditioned_forward(c.shape, c.xt, c.xprev, c.theta, &c.dpc, opt, b));
  Rng s1(5), s2(5), s3(6);
  opt.mode = Mode::train;
  const Mat y1 = conditioned_forward(c.shape, c.xt, c.xprev, c.theta, &c.dpc, opt, s1);
  EXPECT_EQ(y1, conditioned_forward(c.shape, c.xt, c.xprev, c.theta, &c.dpc, opt, s2));
  EXPECT_NE(y1, conditioned_forward(c.shape, c.xt, c.xprev, c.theta, &c.dpc, opt, s3));
}

TEST(Conditioned, RejectsMismatchedShapes) {
  const Case c = random_case(40);
  Rng rng(1);
  EXPECT_THROW(conditioned_forward(c.shape, c.xt, c.xprev, Vec::Zero(3), nullptr, c.opt, rng), ShapeError);
  EXPECT_THROW(conditioned_forward(c.shape, Mat::Zero(c.shape.in_dim + 1, 2), Mat::Zero(c.shape.in_dim + 1, 2),
                                   c.theta, nullptr, c.opt, rng),
               ShapeError);
  DpcShape wrong = c.dshape;
  wrong.width += 1;
  const auto d = dpc_init(wrong, rng);
  EXPECT_THROW(conditioned_forward(c.shape, c.xt, c.xprev, c.theta, &d, c.opt, rng), ShapeError);
  NetworkShape bad;
  bad.layers = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}
