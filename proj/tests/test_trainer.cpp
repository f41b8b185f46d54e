#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "stepbcd/errors.hpp"
#include "stepbcd/prox.hpp"
#include "stepbcd/trainer.hpp"

using namespace stepbcd;

namespace {

Hyperparams theory_regime(double lambda) {
  Hyperparams hp;
  hp.tau = 1e-3;
  hp.pi = 1e-3;
  hp.beta = 1.0;
  hp.gamma = 1.01;
  hp.lambda = lambda;
  hp.L = 100;
  hp.K = 50;
  return hp;
}

SolverSettings tight_cg() {
  SolverSettings s;
  s.cg.tol = 1e-13;
  return s;
}

TrainOptions quiet(double scale = 0.1) {
  TrainOptions o;
  o.init_scale = scale;
  o.timing = false;
  return o;
}

enum class Version { Old, New, Data };

const char* name(Version v) {
  return v == Version::Old ? "old" : v == Version::New ? "new" : "data";
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("objective of the all-zero state") {
  const auto shape = NetworkShape::parse("3,4,5");
  Rng rng(1);
  const Dataset data = oracle::separable_data(3, 5, 7, rng);
  TrainState s{{Matrix(4, 3), Matrix(5, 4)}, {Matrix(4, 7), Matrix(5, 7)}, {Matrix(4, 7)}};
  Hyperparams hp;
  hp.lambda = 123.0;
  const ObjectiveTerms t = objective_f(s, data, hp);
  CHECK(t.total() == doctest::Approx((5.0 - 1.0) / 2.0).epsilon(1e-15));
  CHECK(t.l20 == 0.0);
  CHECK(t.upen == 0.0);
  CHECK(t.vpen == 0.0);
}

TEST_CASE("objective of an exactly fitting state is the regularizer") {
  // One-layer net W = I on one-hot inputs reproduces the labels.
  Dataset data{Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {}};
  Matrix w = Matrix::identity(3);
  TrainState s{{w}, {matmul(w, data.X)}, {}};
  Hyperparams hp;
  hp.lambda = 0.5;
  hp.gamma = 0.2;
  const ObjectiveTerms t = objective_f(s, data, hp);
  CHECK(t.loss == 0.0);
  CHECK(t.upen == 0.0);
  CHECK(t.total() == doctest::Approx(0.5 * 3 + 0.1 * 3));
}

TEST_CASE("objective matches a straight-line implementation") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto shape = NetworkShape::parse("5,6,4,3");
    const Dataset data = oracle::separable_data(5, 3, 9, rng);
    TrainState s;
    for (std::size_t i = 1; i <= 3; ++i) {
      Matrix w = oracle::random_matrix(shape.dims[i], shape.dims[i - 1], rng);
      if (trial % 2) w.set_column(0, std::vector<double>(w.rows(), 0.0));
      s.W.push_back(w);
      s.U.push_back(oracle::random_matrix(shape.dims[i], 9, rng));
      if (i < 3) s.V.push_back(oracle::random_matrix(shape.dims[i], 9, rng));
    }
    Hyperparams hp;
    hp.tau = rng.uniform(0.1, 2.0);
    hp.pi = rng.uniform(0.1, 2.0);
    hp.gamma = rng.uniform(0.1, 2.0);
    hp.lambda = rng.uniform(0.0, 1.0);
    const double ref = oracle::objective_ref(s, data, hp);
    CHECK(objective_f(s, data, hp).total() == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("objective rejects inconsistent states") {
  Rng rng(3);
  const Dataset data = oracle::separable_data(3, 2, 4, rng);
  TrainState s{{Matrix(2, 3)}, {Matrix(2, 5)}, {}};
  CHECK_THROWS_AS(objective_f(s, data, Hyperparams{}), DimensionError);
}

TEST_CASE("column counters") {
  CHECK(nonzero_columns(Matrix::identity(3)) == 3);
  CHECK(nonzero_columns(Matrix(3, 4)) == 0);
  CHECK(multi_max_columns(Matrix{{1, 2, 0}, {1, 0, 0}}) == 2);
  CHECK(multi_max_columns(Matrix{{1, 2}, {0, 3}}) == 0);
}

TEST_CASE("update order and iterate versions") {
  const auto shape = NetworkShape::parse("4,6,5,3");
  Rng rng(4);
  const Dataset data = oracle::separable_data(4, 3, 12, rng);
  Hyperparams hp = theory_regime(0.0);
  hp.tau = 0.05;
  hp.pi = 0.02;
  hp.beta = 0.1;
  hp.gamma = 0.1;
  hp.L = 1;
  Rng init(5);
  TrainState state = init_gaussian(shape, 0.3, init, data.X);
  // Desynchronize U and V from the forward pass so every block changes.
  for (auto& u : state.U) u += oracle::random_matrix(u.rows(), u.cols(), rng, 0.5);
  for (auto& v : state.V) v = oracle::random_matrix(v.rows(), v.cols(), rng);
  const TrainState before = state;

  struct Seen {
    Block block;
    std::size_t layer;
    std::vector<Matrix> inputs;
  };
  std::vector<Seen> seen;
  bcd_iteration(state, data, hp, tight_cg(), [&](const SubproblemCall& call) {
    Seen s{call.block, call.layer, {}};
    for (const Matrix* m : call.inputs) s.inputs.push_back(*m);
    seen.push_back(std::move(s));
  });
  const TrainState& after = state;

  // Which iterate each sub-solver must receive, block by block.
  struct Expect {
    Block block;
    std::size_t layer;
    std::vector<std::pair<char, Version>> inputs;  // (W/U/V, version), index = layer offset below
    std::vector<int> offsets;
  };
  const std::vector<Expect> table{
      {Block::OutputU, 3, {{'W', Version::Old}, {'V', Version::Old}}, {0, -1}},
      {Block::Weights, 3, {{'U', Version::New}, {'V', Version::Old}, {'W', Version::Old}}, {0, -1, 0}},
      {Block::HiddenV, 2, {{'W', Version::New}, {'U', Version::New}, {'U', Version::Old}}, {1, 1, 0}},
      {Block::HiddenU, 2, {{'V', Version::New}, {'W', Version::Old}, {'V', Version::Old}}, {0, 0, -1}},
      {Block::Weights, 2, {{'U', Version::New}, {'V', Version::Old}, {'W', Version::Old}}, {0, -1, 0}},
      {Block::HiddenV, 1, {{'W', Version::New}, {'U', Version::New}, {'U', Version::Old}}, {1, 1, 0}},
      {Block::HiddenU, 1, {{'V', Version::New}, {'W', Version::Old}, {'V', Version::Data}}, {0, 0, -1}},
      {Block::Weights, 1, {{'U', Version::New}, {'V', Version::Data}, {'W', Version::Old}}, {0, -1, 0}},
  };
  REQUIRE(seen.size() == table.size());

  auto lookup = [&](const TrainState& s, char kind, std::size_t layer) -> const Matrix& {
    if (kind == 'W') return s.W[layer - 1];
    if (kind == 'U') return s.U[layer - 1];
    return s.V[layer - 1];
  };
  for (std::size_t c = 0; c < table.size(); ++c) {
    const Expect& e = table[c];
    CAPTURE(c);
    CHECK(seen[c].block == e.block);
    CHECK(seen[c].layer == e.layer);
    REQUIRE(seen[c].inputs.size() == e.inputs.size());
    for (std::size_t k = 0; k < e.inputs.size(); ++k) {
      const auto [kind, version] = e.inputs[k];
      const std::size_t layer = static_cast<std::size_t>(static_cast<int>(e.layer) + e.offsets[k]);
      const Matrix& got = seen[c].inputs[k];
      INFO("call " << c << " input " << k << " should be " << name(version) << " " << kind << layer);
      if (version == Version::Data) {
        CHECK(bit_equal(got, data.X));
        continue;
      }
      const Matrix& old_m = lookup(before, kind, layer);
      const Matrix& new_m = lookup(after, kind, layer);
      REQUIRE_FALSE(bit_equal(old_m, new_m));
      CHECK(bit_equal(got, version == Version::Old ? old_m : new_m));
    }
  }
}

TEST_CASE("single-layer iteration only touches U_h and W_h") {
  const auto shape = NetworkShape::parse("4,3");
  Rng rng(6);
  const Dataset data = oracle::separable_data(4, 3, 10, rng);
  Rng init(1);
  TrainState state = init_gaussian(shape, 0.1, init, data.X);
  std::vector<Block> blocks;
  bcd_iteration(state, data, theory_regime(0.0), tight_cg(),
                [&](const SubproblemCall& c) { blocks.push_back(c.block); });
  CHECK(blocks == std::vector<Block>{Block::OutputU, Block::Weights});
  CHECK(state.V.empty());
}

TEST_CASE("descent inequality in the gamma >= 1/beta regime") {
  for (int t = 0; t < 6; ++t) {
    Rng rng(100 + t);
    const Dataset data = oracle::separable_data(4, 3, 32, rng);
    const Hyperparams hp = theory_regime(t % 2 ? 1e-6 : 0.0);
    const TrainResult r = train(data, NetworkShape::parse("4,8,3"), hp, tight_cg(), quiet(), rng);
    const DescentCheck c = check_descent(r.report, hp, 1e-9);
    CHECK(c.applicable);
    CHECK(c.satisfied);
    CHECK(r.report.records.size() == 51);
    CHECK(r.report.records.back().dW < 1e-8);
    CHECK(r.report.records.back().dV < 1e-8);
    for (std::size_t k = 1; k < r.report.records.size(); ++k)
      CHECK(r.report.records[k].terms.total() <= r.report.records[k - 1].terms.total() + 1e-9);
  }
}

TEST_CASE("a converged state is a fixed point") {
  Rng rng(7);
  const Dataset data = oracle::separable_data(4, 3, 32, rng);
  Hyperparams hp = theory_regime(0.0);
  hp.K = 200;
  TrainResult r = train(data, NetworkShape::parse("4,8,3"), hp, tight_cg(), quiet(), rng);
  const TrainState fixed = r.state;
  bcd_iteration(r.state, data, hp, tight_cg());
  bcd_iteration(r.state, data, hp, tight_cg());
  for (std::size_t i = 0; i < fixed.W.size(); ++i) {
    CHECK(distance_sq(r.state.W[i], fixed.W[i]) <= 1e-24);
    CHECK(distance_sq(r.state.U[i], fixed.U[i]) <= 1e-24);
  }
  CHECK(distance_sq(r.state.V[0], fixed.V[0]) <= 1e-24);
}

TEST_CASE("descent check bookkeeping") {
  BcdReport flat;
  for (std::size_t k = 0; k < 4; ++k) flat.records.push_back({k, {1.0, 0, 0, 0, 0}, 0.0, 0.0, 0.0});
  Hyperparams hp = theory_regime(0.0);
  CHECK(check_descent(flat, hp).satisfied);
  CHECK(check_descent(flat, hp).applicable);

  BcdReport rising = flat;
  rising.records[2].terms.loss = 1.5;
  const DescentCheck c = check_descent(rising, hp);
  CHECK_FALSE(c.satisfied);
  CHECK(c.worst_k == 2);
  CHECK(c.worst_violation == doctest::Approx(0.5));

  // The default hyperparameters sit outside the regime where descent is guaranteed.
  CHECK_FALSE(check_descent(flat, Hyperparams{}).applicable);
}

TEST_CASE("train with K = 0 keeps the initial state") {
  Rng rng(8);
  const Dataset data = oracle::separable_data(4, 3, 16, rng);
  Hyperparams hp;
  hp.K = 0;
  Rng a(3);
  const TrainResult r = train(data, NetworkShape::parse("4,8,3"), hp, {}, quiet(0.01), a);
  CHECK(r.report.records.size() == 1);
  Rng init = Rng(3).fork("init");
  const TrainState expect = init_gaussian(NetworkShape::parse("4,8,3"), 0.01, init, data.X);
  CHECK(bit_equal(r.state.W[0], expect.W[0]));
  CHECK(bit_equal(r.state.W[1], expect.W[1]));
}

TEST_CASE("train is bit-reproducible") {
  Rng rng(9);
  const Dataset data = oracle::separable_data(6, 3, 40, rng);
  Hyperparams hp;
  hp.K = 5;
  auto run = [&] {
    Rng r(77);
    return train(data, NetworkShape::parse("6,10,8,3"), hp, {}, quiet(0.01), r);
  };
  const TrainResult a = run(), b = run();
  for (std::size_t i = 0; i < a.state.W.size(); ++i) {
    CHECK(bit_equal(a.state.W[i], b.state.W[i]));
    CHECK(bit_equal(a.state.U[i], b.state.U[i]));
  }
  std::ostringstream ca, cb;
  a.report.write_csv(ca);
  b.report.write_csv(cb);
  CHECK(ca.str() == cb.str());
  CHECK(a.report.records.size() == 6);
}

TEST_CASE("report csv layout") {
  BcdReport r;
  r.records.push_back({0, {0.5, 0.25, 0, 0, 0}, 0.0, 0.0, 0.0});
  r.records.push_back({1, {0.5, 0.125, 0, 0, 0}, 1e-3, 2e-3, 0.0});
  std::ostringstream out;
  r.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "k,F,loss,l20,frob,upen,vpen,dW,dV,seconds");
  std::getline(in, line);
  CHECK(line == "0,0.75,0.5,0.25,0,0,0,0,0,0");
  std::getline(in, line);
  CHECK(line.rfind("1,0.625,0.5,0.125,0,0,0,0.001", 0) == 0);
}

TEST_CASE("early stop and timing switches") {
  Rng rng(10);
  const Dataset data = oracle::separable_data(4, 3, 32, rng);
  Hyperparams hp = theory_regime(0.0);
  hp.K = 500;
  TrainOptions o = quiet();
  o.early_stop_tol = 1e-12;
  Rng r1(1);
  const TrainResult r = train(data, NetworkShape::parse("4,8,3"), hp, tight_cg(), o, r1);
  CHECK(r.report.records.size() < 501);
  for (const auto& rec : r.report.records) CHECK(rec.seconds == 0.0);
}

TEST_CASE("mini-batch sweeps and warm-up") {
  Rng rng(11);
  const Dataset data = oracle::separable_data(6, 3, 50, rng);
  Hyperparams hp;
  hp.K = 3;
  TrainOptions o = quiet(0.01);
  o.batch_size = 16;
  o.warmup_epochs = 1;
  o.warmup_batch = 8;
  auto run = [&] {
    Rng r(5);
    return train(data, NetworkShape::parse("6,10,3"), hp, {}, o, r);
  };
  const TrainResult a = run(), b = run();
  CHECK(a.report.records.size() == 4);
  CHECK(bit_equal(a.state.W[0], b.state.W[0]));
  // U and V describe the full data set after every sweep.
  CHECK(a.state.samples() == 50);
  CHECK(bit_equal(a.state.U[0], matmul(a.state.W[0], data.X)));
  CHECK(bit_equal(a.state.V[0], step(a.state.U[0])));
}

TEST_CASE("train rejects mismatched data") {
  Rng rng(12);
  const Dataset data = oracle::separable_data(4, 3, 8, rng);
  CHECK_THROWS_AS(train(data, NetworkShape::parse("5,8,3"), {}, {}, quiet(), rng), DimensionError);
  CHECK_THROWS_AS(train(data, NetworkShape::parse("4,8,2"), {}, {}, quiet(), rng), DimensionError);
  Hyperparams bad;
  bad.pi = -1;
  CHECK_THROWS_AS(train(data, NetworkShape::parse("4,8,3"), bad, {}, quiet(), rng), std::invalid_argument);
}

TEST_CASE("automatic step size runs and stays finite") {
  Rng rng(13);
  const Dataset data = oracle::separable_data(4, 3, 20, rng);
  Hyperparams hp;
  hp.tau = 0.1;
  hp.pi = 0.1;
  hp.gamma = 0.01;
  hp.K = 5;
  SolverSettings s;
  s.auto_beta = true;
  Rng r(2);
  const TrainResult res = train(data, NetworkShape::parse("4,8,3"), hp, s, quiet(), r);
  for (const auto& w : res.state.W) CHECK(all_finite(w));
}

}  // TEST_SUITE
