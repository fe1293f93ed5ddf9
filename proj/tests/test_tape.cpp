#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "nlogic/errors.hpp"
#include "nlogic/optim.hpp"
#include "nlogic/tape.hpp"
#include "testutil.hpp"

using namespace nlogic;
using namespace nlogic::testutil;

namespace {

NodeId vec_leaf(Tape& t, std::vector<double> v) {
  return t.leaf(Shape{static_cast<int>(v.size()), 1}, v.data());
}

NodeId mat_leaf(Tape& t, int r, int c, std::vector<double> v) {
  return t.leaf(Shape{r, c}, v.data());
}

}  // namespace

TEST_CASE("affine forward matches hand examples") {
  Tape t;
  NodeId w = mat_leaf(t, 2, 2, {1, 0, 0, 1});
  NodeId x = vec_leaf(t, {3, 4});
  NodeId b = vec_leaf(t, {0, 0});
  NodeId y = t.affine(w, x, b);
  CHECK(t.data(y)[0] == doctest::Approx(3));
  CHECK(t.data(y)[1] == doctest::Approx(4));

  NodeId w2 = mat_leaf(t, 1, 2, {1, 1});
  NodeId x2 = vec_leaf(t, {2, 5});
  NodeId b2 = vec_leaf(t, {1});
  NodeId y2 = t.affine(w2, x2, b2);
  CHECK(t.value(y2) == doctest::Approx(8));
}

TEST_CASE("affine rejects shape mismatches naming both shapes") {
  Tape t;
  NodeId w = mat_leaf(t, 2, 3, {1, 2, 3, 4, 5, 6});
  NodeId x = vec_leaf(t, {1, 2});
  NodeId b = vec_leaf(t, {0, 0});
  try {
    t.affine(w, x, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x1") != std::string::npos);
  }
}

TEST_CASE("affine gradient matches central finite differences (random 4x4)") {
  Rng rng(42);
  std::vector<double> W(16), x(4), b(4);
  for (auto& v : W) v = rng.normal();
  for (auto& v : x) v = rng.normal();
  for (auto& v : b) v = rng.normal();

  // analytic pass: d(sum of outputs)/d(inputs)
  Tape t;
  NodeId nw = t.leaf(Shape{4, 4}, W.data());
  NodeId nx = t.leaf(Shape{4, 1}, x.data());
  NodeId nb = t.leaf(Shape{4, 1}, b.data());
  NodeId y = t.affine(nw, nx, nb);
  NodeId s = t.l2_norm_sq(y);  // scalar composition over the output
  t.backward(s);

  std::vector<double> gw(t.grad(nw), t.grad(nw) + 16);
  std::vector<double> gx(t.grad(nx), t.grad(nx) + 4);
  std::vector<double> gb(t.grad(nb), t.grad(nb) + 4);

  auto eval = [&]() {
    Tape t2;
    NodeId a = t2.leaf(Shape{4, 4}, W.data());
    NodeId c = t2.leaf(Shape{4, 1}, x.data());
    NodeId d = t2.leaf(Shape{4, 1}, b.data());
    return t2.value(t2.l2_norm_sq(t2.affine(a, c, d)));
  };
  Rng pick(7);
  FdOutcome fd = fd_check(eval,
                          {{W.data(), gw.data(), 16},
                           {x.data(), gx.data(), 4},
                           {b.data(), gb.data(), 4}},
                          pick, 16);
  CHECK(fd.failed == 0);
  CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("concat values and gradient split") {
  Tape t;
  NodeId a = vec_leaf(t, {1, 2});
  NodeId b = vec_leaf(t, {3});
  NodeId c = t.concat(a, b);
  REQUIRE(t.shape(c).rows == 3);
  CHECK(t.data(c)[0] == 1);
  CHECK(t.data(c)[1] == 2);
  CHECK(t.data(c)[2] == 3);

  // upstream (g1,g2,g3) splits at |a|
  NodeId s = t.l2_norm_sq(c);
  t.backward(s);
  CHECK(t.grad(a)[0] == doctest::Approx(2 * 1));
  CHECK(t.grad(a)[1] == doctest::Approx(2 * 2));
  CHECK(t.grad(b)[0] == doctest::Approx(2 * 3));
}

TEST_CASE("concat length property over random sizes") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    int na = 1 + static_cast<int>(rng.below(128));
    int nb = 1 + static_cast<int>(rng.below(128));
    std::vector<double> va(static_cast<size_t>(na), 1.0), vb(static_cast<size_t>(nb), 2.0);
    Tape t;
    NodeId c = t.concat(vec_leaf(t, va), vec_leaf(t, vb));
    CHECK(t.shape(c).rows == na + nb);
  }
}

TEST_CASE("relu forward, subgradient at zero, idempotence") {
  Tape t;
  NodeId x = vec_leaf(t, {-1, 0, 2});
  NodeId y = t.relu(x);
  CHECK(t.data(y)[0] == 0);
  CHECK(t.data(y)[1] == 0);
  CHECK(t.data(y)[2] == 2);

  // upstream (1,1,1): mask picks only strictly-positive inputs
  Tape t2;
  NodeId x2 = vec_leaf(t2, {-1, 0, 2});
  NodeId y2 = t2.relu(x2);
  NodeId s = t2.sum_list({t2.dot(y2, vec_leaf(t2, {1, 1, 1}))});
  t2.backward(s);
  CHECK(t2.grad(x2)[0] == 0);
  CHECK(t2.grad(x2)[1] == 0);
  CHECK(t2.grad(x2)[2] == 1);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    double v = rng.normal(0, 3);
    Tape t3;
    NodeId a = vec_leaf(t3, {v});
    CHECK(t3.data(t3.relu(t3.relu(a)))[0] == t3.data(t3.relu(a))[0]);
  }
}

TEST_CASE("sigmoid closed-form values") {
  Tape t;
  CHECK(t.value(t.sigmoid(t.constant(0))) == doctest::Approx(0.5));
  CHECK(t.value(t.sigmoid(t.constant(10))) == doctest::Approx(0.9999546).epsilon(1e-6));
  CHECK(t.value(t.sigmoid(t.constant(-10))) == doctest::Approx(4.5398e-5).epsilon(1e-4));
  // numerically stable far into the tails
  CHECK(t.value(t.sigmoid(t.constant(700))) == doctest::Approx(1.0));
  CHECK(t.value(t.sigmoid(t.constant(-700))) == doctest::Approx(0.0));
}

TEST_CASE("cosine values, degenerate guard, finite differences") {
  Tape t;
  NodeId a = vec_leaf(t, {1, 1});
  CHECK(t.value(t.cosine(a, a)) == doctest::Approx(1.0));
  NodeId e1 = vec_leaf(t, {1, 0});
  NodeId e2 = vec_leaf(t, {0, 1});
  CHECK(t.value(t.cosine(e1, e2)) == doctest::Approx(0.0));

  NodeId z = vec_leaf(t, {0, 0});
  CHECK_THROWS_AS(t.cosine(a, z), DegenerateVectorError);

  Rng rng(11);
  std::vector<double> u(8), v(8);
  for (auto& x : u) x = rng.normal();
  for (auto& x : v) x = rng.normal();
  Tape t2;
  NodeId nu = t2.leaf(Shape{8, 1}, u.data());
  NodeId nv = t2.leaf(Shape{8, 1}, v.data());
  NodeId c = t2.cosine(nu, nv);
  t2.backward(c);
  std::vector<double> gu(t2.grad(nu), t2.grad(nu) + 8);
  std::vector<double> gv(t2.grad(nv), t2.grad(nv) + 8);
  auto eval = [&]() {
    Tape t3;
    return t3.value(t3.cosine(t3.leaf(Shape{8, 1}, u.data()),
                              t3.leaf(Shape{8, 1}, v.data())));
  };
  Rng pick(13);
  FdOutcome fd = fd_check(eval, {{u.data(), gu.data(), 8}, {v.data(), gv.data(), 8}}, pick);
  CHECK(fd.failed == 0);
  CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("dropout: rate 0 identity, eval handled by callers, Monte-Carlo stats") {
  Rng rng(21);
  std::vector<double> x(100000, 1.0);
  Tape t;
  NodeId nx = t.leaf(Shape{100000, 1}, x.data());
  Rng drng = Rng::stream(99, "dropout");
  NodeId y = t.dropout(nx, 0.2, drng);

  long survivors = 0;
  double mean = 0;
  for (int i = 0; i < 100000; ++i) {
    if (t.data(y)[i] != 0.0) ++survivors;
    mean += t.data(y)[i];
  }
  mean /= 100000;
  double surv_frac = static_cast<double>(survivors) / 100000.0;
  CHECK(surv_frac == doctest::Approx(0.8).epsilon(0.0125));  // 0.8 +- 0.01
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));  // inverted scaling keeps the mean

  Rng d2 = Rng::stream(99, "dropout");
  NodeId y0 = t.dropout(nx, 0.0, d2);
  for (int i = 0; i < 100; ++i) CHECK(t.data(y0)[i] == 1.0);

  CHECK_THROWS_AS(t.dropout(nx, 1.0, d2), ConfigError);
}

TEST_CASE("backward basics: leaf root, sigmoid'(0), diamond accumulation") {
  {
    Tape t;
    NodeId x = t.constant(3.0);
    t.backward(x);
    CHECK(t.grad(x)[0] == 1.0);
  }
  {
    Tape t;
    NodeId c = t.constant(0.0);
    NodeId s = t.sigmoid(c);
    t.backward(s);
    CHECK(t.grad(c)[0] == doctest::Approx(0.25));
  }
  {
    Tape t;
    NodeId x = t.constant(5.0);
    NodeId y = t.add(x, x);  // diamond: x used twice
    t.backward(y);
    CHECK(t.grad(x)[0] == doctest::Approx(2.0));
  }
}

TEST_CASE("backward rejects non-scalar roots; unreachable nodes keep zero grad") {
  Tape t;
  NodeId v = vec_leaf(t, {1, 2});
  CHECK_THROWS_AS(t.backward(v), ContractError);

  NodeId a = t.constant(1.0);
  NodeId unreachable = t.add_const(a, 5.0);
  NodeId b = t.constant(2.0);
  NodeId root = t.mul(b, b);
  t.backward(root);
  CHECK(t.grad(unreachable)[0] == 0.0);
  CHECK(t.grad(a)[0] == 0.0);
  CHECK(t.grad(b)[0] == doctest::Approx(4.0));
}

TEST_CASE("grad is zero on creation and after zero_grad") {
  Tape t;
  NodeId x = t.constant(2.0);
  NodeId y = t.mul(x, x);
  for (NodeId n : {x, y}) CHECK(t.grad(n)[0] == 0.0);
  t.backward(y);
  CHECK(t.grad(x)[0] != 0.0);
  t.zero_grad();
  CHECK(t.grad(x)[0] == 0.0);
  CHECK(t.grad(y)[0] == 0.0);
}

TEST_CASE("tape ids are topological") {
  Rng rng(31);
  Tape t;
  std::vector<NodeId> pool;
  pool.push_back(t.constant(1.0));
  for (int i = 0; i < 200; ++i) {
    NodeId a = pool[rng.below(pool.size())];
    NodeId b = pool[rng.below(pool.size())];
    NodeId c = rng.coin() ? t.add(a, b) : t.mul(a, b);
    CHECK(t.input0(c) < c);
    CHECK(t.input1(c) < c);
    pool.push_back(c);
  }
}

TEST_CASE("l2_norm_sq values and gradient") {
  Tape t;
  CHECK(t.value(t.l2_norm_sq(vec_leaf(t, {1, 0}))) == 1);
  CHECK(t.value(t.l2_norm_sq(vec_leaf(t, {0, 2}))) == 4);
  NodeId x = vec_leaf(t, {1, 2});
  NodeId s = t.l2_norm_sq(x);
  t.backward(s);
  CHECK(t.grad(x)[0] == doctest::Approx(2));
  CHECK(t.grad(x)[1] == doctest::Approx(4));
}

TEST_CASE("adam: first step size, zero gradient, bit determinism") {
  {
    ParamStore ps;
    int p = ps.add("w", Shape{1, 1});
    ps[p].value[0] = 1.0;
    ps[p].grad[0] = 1.0;
    AdamState st;
    adam_step(ps, st, 0.001);
    CHECK(std::abs((1.0 - ps[p].value[0]) - 0.001) < 1e-6);
    CHECK(st.t == 1);
  }
  {
    ParamStore ps;
    int p = ps.add("w", Shape{2, 1});
    ps[p].value = {1.0, -2.0};
    AdamState st;
    adam_step(ps, st, 0.001);  // g = 0
    CHECK(ps[p].value[0] == 1.0);
    CHECK(ps[p].value[1] == -2.0);
    CHECK(st.t == 1);
  }
  {
    auto run = [](uint64_t seed) {
      Rng rng(seed);
      ParamStore ps;
      int p = ps.add("w", Shape{4, 1});
      for (auto& v : ps[p].value) v = rng.normal();
      AdamState st;
      for (int step = 0; step < 10; ++step) {
        for (size_t i = 0; i < 4; ++i) ps[p].grad[i] = rng.normal();
        adam_step(ps, st, 0.001);
      }
      return ps[p].value;
    };
    CHECK(run(7) == run(7));
  }
}

TEST_CASE("frozen parameters are skipped by adam") {
  ParamStore ps;
  int p = ps.add("anchor", Shape{2, 1}, /*trainable=*/false);
  ps[p].value = {1.0, 2.0};
  ps[p].grad = {10.0, 10.0};
  AdamState st;
  adam_step(ps, st, 0.1);
  CHECK(ps[p].value[0] == 1.0);
  CHECK(ps[p].value[1] == 2.0);
}

TEST_CASE("random scalar compositions match finite differences over 100 trials") {
  Rng trial_rng(1234);
  int total_failed = 0;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(6);
    for (auto& v : x) v = trial_rng.normal(0, 1.5);

    // composition touching most primitives, rebuilt identically per call
    auto build = [&](Tape& t) {
      NodeId vx = t.leaf(Shape{6, 1}, x.data());
      NodeId sh = t.add_const(vx, 0.7);
      NodeId r = t.relu(sh);
      NodeId safe = t.add_const(r, 0.05);  // keep norms away from zero
      NodeId c = t.cosine(safe, vx);
      NodeId s = t.sigmoid(t.scale(c, 3.0));
      NodeId l = t.l2_norm_sq(t.concat(vx, safe));
      NodeId mixed = t.mul(s, t.ln(t.add_const(l, 1.0)));
      NodeId root = t.sub(mixed, t.clamp(s, 0.05, 0.95));
      return std::pair<NodeId, NodeId>(root, vx);
    };

    Tape t;
    auto [root, vx] = build(t);
    t.backward(root);
    std::vector<double> gx(t.grad(vx), t.grad(vx) + 6);

    auto eval = [&]() {
      Tape t2;
      return t2.value(build(t2).first);
    };
    Rng pick(static_cast<uint64_t>(trial));
    FdOutcome fd = fd_check(eval, {{x.data(), gx.data(), 6}}, pick, 6);
    total_failed += fd.failed;
    worst = std::max(worst, fd.max_rel);
  }
  CHECK(total_failed == 0);
  CHECK(worst < 1e-4);
}

TEST_CASE("rng streams are bit-identical across instantiations") {
  Rng a = Rng::stream(5, "dropout", 3, 9);
  Rng b = Rng::stream(5, "dropout", 3, 9);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c = Rng::stream(5, "dropout", 3, 10);
  Rng d = Rng::stream(5, "shuffle", 3, 9);
  CHECK(c.next_u64() != d.next_u64());
}
