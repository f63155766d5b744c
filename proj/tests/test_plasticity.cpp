#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "parsnet/error.hpp"
#include "parsnet/plasticity.hpp"

using namespace parsnet;

namespace {

GaussianComponent comp(Eigen::VectorXd c, Eigen::VectorXd s) {
  GaussianComponent g;
  g.center = std::move(c);
  g.spread = std::move(s);
  g.class_counts.assign(2, 0);
  return g;
}

} // namespace

TEST_CASE("running stat matches a two-pass computation") {
  Rng rng = make_rng(1, 0);
  std::uniform_real_distribution<double> d(-3.0, 5.0);
  RunningStat s;
  std::vector<double> xs;
  for (int i = 0; i < 500; ++i) {
    xs.push_back(d(rng));
    s.add(xs.back());
  }
  double mean = 0.0;
  for (double x : xs) {
    mean += x;
  }
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) {
    var += (x - mean) * (x - mean);
  }
  var /= static_cast<double>(xs.size());
  CHECK(s.count() == 500);
  CHECK(s.mean() == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s.stddev() == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
  CHECK(RunningStat{}.stddev() == 0.0);
}

TEST_CASE("min trackers follow the mean downward and reset on demand") {
  RunningStat s;
  s.add(5.0);
  s.update_min();
  s.add(1.0);
  s.update_min();
  CHECK(s.min_mean() == doctest::Approx(3.0));
  CHECK(s.min_std() == doctest::Approx(2.0));
  s.add(9.0);
  s.update_min();
  CHECK(s.min_mean() == doctest::Approx(3.0));
  CHECK(s.min_mean() <= s.mean());
  s.reset_min();
  CHECK(s.min_mean() == s.mean());
  CHECK(s.min_std() == s.stddev());
}

TEST_CASE("confidence factors") {
  CHECK(kappa_factor(0.0) == doctest::Approx(2.0));
  CHECK(xi_factor(0.0) == doctest::Approx(2.0));
  double last = 3.0;
  for (double b = 0.0; b < 50.0; b += 0.25) {
    const double k = kappa_factor(b);
    CHECK(k >= 0.8);
    CHECK(k <= 2.0);
    CHECK(k <= last);
    last = k;
  }
}

TEST_CASE("expected activation closed forms") {
  Rng rng = make_rng(2, 0);
  NetworkParams net = oracle::random_network(3, 2, 4, rng);
  const std::vector<GaussianComponent> at_zero{comp(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3))};
  const Eigen::VectorXd e0 = expected_activation(net, at_zero, Eigen::VectorXd::Ones(1));
  CHECK((e0 - sigmoid(net.b_in)).norm() <= 1e-15);

  const std::vector<GaussianComponent> sharp{comp(Eigen::Vector3d(0.2, 0.5, 0.9), Eigen::VectorXd::Zero(3)),
                                             comp(Eigen::Vector3d(0.7, 0.1, 0.3), Eigen::VectorXd::Zero(3))};
  Eigen::VectorXd w(2);
  w << 0.3, 0.7;
  const Eigen::VectorXd e1 = expected_activation(net, sharp, w);
  const Eigen::VectorXd ref = 0.3 * sigmoid(net.w_in * sharp[0].center + net.b_in) +
                              0.7 * sigmoid(net.w_in * sharp[1].center + net.b_in);
  CHECK((e1 - ref).norm() <= 1e-15);
  CHECK((e1.array() > 0.0).all());
  CHECK((e1.array() < 1.0).all());

  CHECK_THROWS_AS(expected_activation(net, {}, Eigen::VectorXd()), UninitializedError);
  CHECK_THROWS_AS(expected_activation(net, sharp, Eigen::VectorXd::Ones(3)), ValidationError);
}

TEST_CASE("expected activation agrees with Monte-Carlo integration") {
  Rng rng = make_rng(3, 0);
  for (int trial = 0; trial < 3; ++trial) {
    NetworkParams net = oracle::random_network(4, 2, 1, rng);
    const std::vector<GaussianComponent> mix{
        comp(oracle::uniform_vector(4, rng), oracle::uniform_vector(4, rng, 0.05, 0.4)),
        comp(oracle::uniform_vector(4, rng), oracle::uniform_vector(4, rng, 0.05, 0.4))};
    Eigen::VectorXd w(2);
    w << 0.4, 0.6;
    const Eigen::VectorXd closed = expected_activation(net, mix, w);
    const Eigen::VectorXd mc = oracle::monte_carlo_expected_activation(net, mix, w, 100000, rng);
    CHECK(std::abs(closed[0] - mc[0]) / mc[0] <= 0.05);
  }
}

TEST_CASE("expected activation from the mixture uses prior weights") {
  Rng rng = make_rng(4, 0);
  NetworkParams net = oracle::random_network(2, 2, 3, rng);
  Agmm model(2, 2);
  model.insert_component(Eigen::Vector2d(0.1, 0.2));
  model.insert_component(Eigen::Vector2d(0.9, 0.4));
  model.mutable_components()[0].support = 3;
  const Eigen::VectorXd direct = expected_activation(net, model.components(), Eigen::Vector2d(0.75, 0.25));
  CHECK((expected_activation(net, model) - direct).norm() <= 1e-15);
}

TEST_CASE("ns decomposition") {
  Rng rng = make_rng(5, 0);
  NetworkParams net = oracle::random_network(3, 2, 4, rng);

  SUBCASE("binary hidden responses reduce variance to m(1 - m)") {
    Eigen::VectorXd e(4);
    e << 1, 0, 1, 1;
    const Eigen::VectorXd m = classify_hidden(net, e);
    const double expect = (m.array() * (1.0 - m.array())).sum() / 2.0;
    CHECK(ns_decompose(e, Eigen::Vector2d(1, 0), net, Phase::discriminative).variance == doctest::Approx(expect));
  }
  SUBCASE("perfect prediction has zero bias") {
    const Eigen::VectorXd e = oracle::uniform_vector(4, rng);
    const NsDecomposition d = ns_decompose(e, classify_hidden(net, e), net, Phase::discriminative);
    CHECK(d.bias_sq == doctest::Approx(0.0));
  }
  SUBCASE("values equal a direct re-evaluation of the output maps") {
    const Eigen::VectorXd e = oracle::uniform_vector(4, rng);
    const Eigen::VectorXd y = one_hot(1, 2);
    const NsDecomposition d = ns_decompose(e, y, net, Phase::discriminative);
    const Eigen::VectorXd m1 = classify_hidden(net, e);
    const Eigen::VectorXd m2 = classify_hidden(net, e.cwiseProduct(e));
    CHECK(d.bias_sq == doctest::Approx((m1 - y).squaredNorm() / 2.0));
    CHECK(d.variance == doctest::Approx((m2 - m1.cwiseProduct(m1)).sum() / 2.0));

    const Eigen::VectorXd x = oracle::uniform_vector(3, rng);
    const NsDecomposition g = ns_decompose(e, x, net, Phase::generative);
    const Eigen::VectorXd r1 = decode(net, e);
    const Eigen::VectorXd r2 = decode(net, e.cwiseProduct(e));
    CHECK(g.bias_sq == doctest::Approx((r1 - x).squaredNorm() / 3.0));
    CHECK(g.variance == doctest::Approx((r2 - r1.cwiseProduct(r1)).sum() / 3.0));
  }
  SUBCASE("bounded targets keep kappa at or above 1") {
    for (int t = 0; t < 100; ++t) {
      const Eigen::VectorXd e = oracle::uniform_vector(4, rng);
      const NsDecomposition d = ns_decompose(e, one_hot(static_cast<std::size_t>(t % 2), 2), net,
                                             Phase::discriminative);
      CHECK(d.bias_sq <= 1.0);
      CHECK(kappa_factor(d.bias_sq) >= 1.0);
    }
  }
  CHECK_THROWS_AS(ns_decompose(Eigen::VectorXd::Ones(4), Eigen::VectorXd::Ones(5), net, Phase::generative),
                  ValidationError);
}

TEST_CASE("grow trigger") {
  SUBCASE("single observation never fires") {
    NsState ns;
    CHECK_FALSE(check_grow(ns, 0.3));
  }
  SUBCASE("bias zero gives kappa 2") {
    NsState ns;
    check_grow(ns, 0.0);
    CHECK(ns.last_kappa == doctest::Approx(2.0));
  }
  SUBCASE("constant bias fires once the statistics settle") {
    NsState ns;
    bool fired = false;
    for (int i = 0; i < 10; ++i) {
      fired = check_grow(ns, 0.4) || fired;
    }
    CHECK(fired);
  }
  SUBCASE("strictly decreasing bias never fires") {
    NsState ns;
    for (int i = 0; i < 100; ++i) {
      CHECK_FALSE(check_grow(ns, 1.0 - 0.009 * i));
    }
  }
  SUBCASE("a jump after a plateau fires and resets the minima") {
    NsState ns;
    for (int i = 0; i < 100; ++i) {
      check_grow(ns, 0.1 + 0.01 * (i % 3));
    }
    CHECK(check_grow(ns, 0.9));
    CHECK(ns.bias_stat.min_mean() == ns.bias_stat.mean());
  }
  SUBCASE("replaying a sequence reproduces firing times") {
    Rng rng = make_rng(6, 0);
    std::vector<double> seq;
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
      seq.push_back(d(rng) * (i > 150 ? 2.0 : 1.0));
    }
    NsState a;
    NsState b;
    for (double v : seq) {
      CHECK(check_grow(a, v) == check_grow(b, v));
    }
  }
}

TEST_CASE("prune trigger") {
  NsState ns(Phase::discriminative);
  CHECK_FALSE(check_prune_trigger(ns, 0.0));
  CHECK(ns.last_xi == doctest::Approx(2.0));
  NsState plateau;
  for (int i = 0; i < 100; ++i) {
    check_prune_trigger(plateau, 0.1 + 0.001 * (i % 2));
  }
  CHECK(check_prune_trigger(plateau, 1.0));

  NsState quiet;
  observe_variance(quiet, 0.2);
  observe_variance(quiet, 0.3);
  CHECK(quiet.var_stat.count() == 2);
}

TEST_CASE("prune candidates") {
  CHECK(select_prune_candidates(Eigen::Vector3d(0.9, 0.9, 0.01)) == std::vector<std::size_t>{2});
  CHECK(select_prune_candidates(Eigen::VectorXd::Constant(1, 0.3)).empty());
  // All equal: every unit meets the condition; one survivor is kept.
  CHECK(select_prune_candidates(Eigen::VectorXd::Constant(4, 0.5)) == std::vector<std::size_t>{1, 2, 3});
  Rng rng = make_rng(7, 0);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd e = oracle::uniform_vector(2 + static_cast<std::size_t>(t % 6), rng);
    const auto idx = select_prune_candidates(e);
    CHECK(idx.size() < static_cast<std::size_t>(e.size()));
    Eigen::Index top = 0;
    e.maxCoeff(&top);
    CHECK(std::find(idx.begin(), idx.end(), static_cast<std::size_t>(top)) == idx.end());
  }
}
