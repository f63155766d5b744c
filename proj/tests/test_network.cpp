#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "parsnet/error.hpp"
#include "parsnet/network.hpp"

using namespace parsnet;

TEST_CASE("init shapes, zero biases and Xavier bounds") {
  Rng rng = make_rng(3, 0);
  const NetworkParams p = init_network(784, 10, 1, rng);
  CHECK(p.w_in.rows() == 1);
  CHECK(p.w_in.cols() == 784);
  CHECK(p.w_out.rows() == 1);
  CHECK(p.w_out.cols() == 10);
  CHECK(p.b_in.isZero(0.0));
  CHECK(p.d.isZero(0.0));
  CHECK(p.c_out.isZero(0.0));
  CHECK(p.w_in.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 785.0));
  CHECK(p.w_out.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 11.0));

  Rng a = make_rng(9, 0);
  Rng b = make_rng(9, 0);
  const NetworkParams pa = init_network(4, 3, 5, a);
  const NetworkParams pb = init_network(4, 3, 5, b);
  CHECK(pa.w_in == pb.w_in);
  CHECK(pa.w_out == pb.w_out);
}

TEST_CASE("mask zeroes floor(fraction * u) coordinates") {
  Rng rng = make_rng(1, 0);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(10, 1.0, 10.0);
  CHECK(mask(x, 0.0, rng) == x);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd m = mask(x, 0.1, rng);
    CHECK((m.array() == 0.0).count() == 1);
    const Eigen::VectorXd m3 = mask(x, 0.35, rng);
    CHECK((m3.array() == 0.0).count() == 3);
  }
  CHECK_THROWS_AS(mask(x, 1.0, rng), ValidationError);
  CHECK_THROWS_AS(mask(x, -0.1, rng), ValidationError);
}

TEST_CASE("zero parameters give symmetric outputs") {
  NetworkParams p;
  p.w_in = Eigen::MatrixXd::Zero(3, 4);
  p.b_in = Eigen::VectorXd::Zero(3);
  p.d = Eigen::VectorXd::Zero(4);
  p.w_out = Eigen::MatrixXd::Zero(3, 5);
  p.c_out = Eigen::VectorXd::Zero(5);
  Rng rng = make_rng(1, 0);
  const ForwardCache f = forward(p, Eigen::VectorXd::Ones(4), 0.0, rng);
  CHECK(f.hidden.isApproxToConstant(0.5));
  CHECK(f.recon.isApproxToConstant(0.5));
  CHECK(f.probs.isApproxToConstant(0.2));
}

TEST_CASE("softmax is a partition of unity, including extreme logits") {
  Rng rng = make_rng(2, 0);
  for (int t = 0; t < 50; ++t) {
    const NetworkParams p = oracle::random_network(5, 4, 3, rng);
    const Eigen::VectorXd y = predict_proba(p, oracle::uniform_vector(5, rng, -5, 5));
    CHECK(std::abs(y.sum() - 1.0) <= 1e-9);
    CHECK((y.array() >= 0.0).all());
  }
  Eigen::VectorXd z(3);
  z << 1e4, -1e4, 0.0;
  const Eigen::VectorXd s = softmax(z);
  CHECK(s.allFinite());
  CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("generative gradient matches finite differences (tied weights)") {
  Rng rng = make_rng(4, 0);
  for (int t = 0; t < 20; ++t) {
    NetworkParams p = oracle::random_network(5, 2, 3, rng);
    const Eigen::VectorXd target = oracle::uniform_vector(5, rng);
    Eigen::VectorXd input = target;
    input[t % 5] = 0.0;
    const GenerativeGradient g = generative_gradient(p, target, input);
    CHECK(g.loss == doctest::Approx(oracle::recon_loss(p, target, input)).epsilon(1e-12));

    std::vector<double*> slots;
    std::vector<double> analytic;
    for (Eigen::Index i = 0; i < p.w_in.size(); ++i) {
      slots.push_back(p.w_in.data() + i);
      analytic.push_back(g.w_in.data()[i]);
    }
    for (Eigen::Index i = 0; i < p.b_in.size(); ++i) {
      slots.push_back(p.b_in.data() + i);
      analytic.push_back(g.b_in[i]);
    }
    for (Eigen::Index i = 0; i < p.d.size(); ++i) {
      slots.push_back(p.d.data() + i);
      analytic.push_back(g.d[i]);
    }
    const auto numeric =
        oracle::central_differences(slots, [&] { return oracle::recon_loss(p, target, input); });
    CHECK(oracle::relative_error(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("discriminative gradient matches finite differences") {
  Rng rng = make_rng(5, 0);
  for (int t = 0; t < 20; ++t) {
    const std::size_t c = 2 + static_cast<std::size_t>(t % 3);
    NetworkParams p = oracle::random_network(4, c, 3, rng);
    const Eigen::VectorXd x = oracle::uniform_vector(4, rng);
    const Eigen::VectorXd y = one_hot(static_cast<std::size_t>(t) % c, c);
    const DiscriminativeGradient g = discriminative_gradient(p, x, y);
    CHECK(g.loss == doctest::Approx(oracle::class_loss(p, x, y)).epsilon(1e-12));
    const auto numeric =
        oracle::central_differences(oracle::theta_slots(p), [&] { return oracle::class_loss(p, x, y); });
    CHECK(oracle::relative_error(oracle::flatten(g.grad), numeric) <= 1e-5);
  }
}

TEST_CASE("steps with zero learning rate leave parameters unchanged") {
  Rng rng = make_rng(6, 0);
  NetworkParams p = oracle::random_network(3, 2, 2, rng);
  const NetworkParams before = p;
  const Eigen::VectorXd x = oracle::uniform_vector(3, rng);
  const double e = generative_step(p, x, 0.0, 0.0, rng);
  CHECK(e == doctest::Approx(oracle::recon_loss(before, x, x)));
  discriminative_step(p, x, one_hot(1, 2), 0.0);
  CHECK(p.w_in == before.w_in);
  CHECK(p.d == before.d);
  CHECK(p.w_out == before.w_out);
  CHECK_THROWS_AS(discriminative_step(p, x, one_hot(1, 2), -1.0), ValidationError);
}

TEST_CASE("generative training decreases reconstruction error on a fixed input") {
  Rng rng = make_rng(7, 0);
  NetworkParams p = init_network(6, 2, 3, rng);
  Eigen::VectorXd x(6);
  x << 0.9, 0.1, 0.8, 0.2, 0.7, 0.3;
  double last = reconstruction_loss(p, x, x);
  for (int block = 0; block < 10; ++block) {
    for (int i = 0; i < 100; ++i) {
      generative_step(p, x, 0.1, 0.0, rng);
    }
    const double now = reconstruction_loss(p, x, x);
    CHECK(now < last);
    last = now;
  }
}

TEST_CASE("memorized pattern reconstructs better than an orthogonal one") {
  Rng rng = make_rng(8, 0);
  NetworkParams p = init_network(4, 2, 2, rng);
  Eigen::VectorXd seen(4);
  seen << 1, 1, 0, 0;
  Eigen::VectorXd other(4);
  other << 0, 0, 1, 1;
  for (int i = 0; i < 500; ++i) {
    generative_step(p, seen, 0.1, 0.0, rng);
  }
  CHECK(reconstruction_loss(p, seen, seen) < reconstruction_loss(p, other, other));
}

TEST_CASE("hedge addend pulls toward the anchor when the data gradient vanishes") {
  Rng rng = make_rng(9, 0);
  NetworkParams p = oracle::random_network(3, 2, 2, rng);
  // Zero output weights and a target equal to the uniform prediction give a
  // zero data gradient.
  p.w_out.setZero();
  p.c_out.setZero();
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(2, 0.5);
  const Eigen::VectorXd x = oracle::uniform_vector(3, rng);
  CHECK(discriminative_gradient(p, x, y).grad.squared_norm() == doctest::Approx(0.0));

  Theta anchor = Theta::of(p);
  anchor.w_in.array() += 0.3;
  anchor.w_out.array() -= 0.2;
  Theta gamma = Theta::zeros_like(anchor);
  gamma.w_in.setOnes();
  gamma.b_in.setOnes();
  gamma.w_out.setOnes();
  gamma.c_out.setOnes();
  const Theta addend = gamma.cwise_product(Theta::of(p) - anchor);
  const double before = (Theta::of(p) - anchor).squared_norm();
  discriminative_step(p, x, y, 0.1, &addend);
  CHECK((Theta::of(p) - anchor).squared_norm() < before);

  const Theta wrong = Theta::zeros(3, 3, 2);
  CHECK_THROWS_AS(discriminative_step(p, x, y, 0.1, &wrong), ValidationError);
}

TEST_CASE("discriminative step reports data gradient and applied movement") {
  Rng rng = make_rng(10, 0);
  NetworkParams p = oracle::random_network(3, 3, 4, rng);
  const Theta start = Theta::of(p);
  const Eigen::VectorXd x = oracle::uniform_vector(3, rng);
  const DiscriminativeStep s = discriminative_step(p, x, one_hot(2, 3), 0.05);
  const Theta moved = Theta::of(p) - start;
  const Theta expected = -0.05 * s.grad;
  CHECK((moved - s.delta).squared_norm() == doctest::Approx(0.0));
  CHECK((moved - expected).squared_norm() == doctest::Approx(0.0));
  CHECK(s.grad.squared_norm() > 0.0);
}

TEST_CASE("add_nodes leaves old units untouched") {
  Rng rng = make_rng(11, 0);
  NetworkParams p = init_network(4, 3, 1, rng);
  p.b_in[0] = 0.4;
  const NetworkParams before = p;
  add_nodes(p, 3, rng);
  CHECK(p.hidden() == 4);
  CHECK(p.w_in.topRows(1) == before.w_in);
  CHECK(p.w_out.topRows(1) == before.w_out);
  CHECK(p.b_in[0] == 0.4);
  CHECK(p.b_in.tail(3).isZero(0.0));
  CHECK_THROWS_AS(add_nodes(p, 0, rng), ValidationError);

  // With the new outgoing rows zeroed the classifier output is unchanged.
  NetworkParams zeroed = p;
  zeroed.w_out.bottomRows(3).setZero();
  const Eigen::VectorXd x = oracle::uniform_vector(4, rng);
  CHECK((predict_proba(zeroed, x) - predict_proba(before, x)).norm() <= 1e-15);
  CHECK((encode(p, x).head(1) - encode(before, x)).norm() == 0.0);
}

TEST_CASE("prune_nodes removes rows and preserves survivor order") {
  Rng rng = make_rng(12, 0);
  NetworkParams p = init_network(3, 2, 4, rng);
  const NetworkParams before = p;
  const std::vector<std::size_t> drop{1, 3};
  prune_nodes(p, drop);
  CHECK(p.hidden() == 2);
  CHECK(p.w_in.row(0) == before.w_in.row(0));
  CHECK(p.w_in.row(1) == before.w_in.row(2));
  CHECK(p.w_out.row(1) == before.w_out.row(2));

  const std::vector<std::size_t> all{0, 1};
  CHECK_THROWS_AS(prune_nodes(p, all), ValidationError);

  // A unit with zero outgoing weights can be removed without changing y_hat.
  NetworkParams q = init_network(3, 2, 3, rng);
  q.w_out.row(2).setZero();
  const NetworkParams q0 = q;
  const std::vector<std::size_t> last{2};
  prune_nodes(q, last);
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd x = oracle::uniform_vector(3, rng);
    CHECK((predict_proba(q, x) - predict_proba(q0, x)).norm() <= 1e-15);
  }
}

TEST_CASE("add then prune the new units is an identity") {
  Rng rng = make_rng(13, 0);
  NetworkParams p = init_network(5, 3, 2, rng);
  const NetworkParams before = p;
  add_nodes(p, 3, rng);
  const std::vector<std::size_t> fresh{2, 3, 4};
  prune_nodes(p, fresh);
  CHECK(p.w_in == before.w_in);
  CHECK(p.b_in == before.b_in);
  CHECK(p.w_out == before.w_out);
  CHECK(p.c_out == before.c_out);
  CHECK(p.d == before.d);
}

TEST_CASE("normalized_top2") {
  CHECK(normalized_top2(Eigen::Vector2d(0.5, 0.5)) == doctest::Approx(0.5));
  CHECK(normalized_top2(Eigen::Vector3d(0.7, 0.2, 0.1)) == doctest::Approx(0.7 / 0.9));
  CHECK(normalized_top2(Eigen::Vector3d(0.0, 1.0, 0.0)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(normalized_top2(Eigen::VectorXd::Ones(1)), ValidationError);

  // Permutation invariance.
  Eigen::VectorXd v(4);
  v << 0.1, 0.4, 0.3, 0.2;
  std::vector<int> order{0, 1, 2, 3};
  const double ref = normalized_top2(v);
  while (std::next_permutation(order.begin(), order.end())) {
    Eigen::VectorXd w(4);
    for (int i = 0; i < 4; ++i) {
      w[i] = v[order[static_cast<std::size_t>(i)]];
    }
    CHECK(normalized_top2(w) == doctest::Approx(ref));
  }
}

TEST_CASE("one_hot validates its label") {
  CHECK(one_hot(1, 3) == Eigen::Vector3d(0, 1, 0));
  CHECK_THROWS_AS(one_hot(3, 3), ValidationError);
}

TEST_CASE("non-finite inputs are rejected") {
  Rng rng = make_rng(14, 0);
  NetworkParams p = init_network(2, 2, 2, rng);
  Eigen::VectorXd x(2);
  x << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(predict_proba(p, x));
  CHECK_THROWS(generative_step(p, x, 0.01, 0.0, rng));
}

TEST_CASE("network snapshot round-trips and rejects corrupt data") {
  Rng rng = make_rng(15, 0);
  const NetworkParams p = oracle::random_network(4, 3, 5, rng);
  std::stringstream buf;
  p.save(buf);
  const NetworkParams q = NetworkParams::load(buf);
  CHECK(q.w_in == p.w_in);
  CHECK(q.b_in == p.b_in);
  CHECK(q.d == p.d);
  CHECK(q.w_out == p.w_out);
  CHECK(q.c_out == p.c_out);

  std::string bytes;
  {
    std::stringstream s;
    p.save(s);
    bytes = s.str();
  }
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(NetworkParams::load(truncated), FormatError);
  std::stringstream garbage("not a snapshot");
  CHECK_THROWS_AS(NetworkParams::load(garbage), FormatError);
}
