#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fundcast/recurrent.hpp"

using namespace fundcast;

namespace {

LstmParams zero_params(std::size_t hidden, std::size_t input) {
  Rng rng(0);
  LstmParams p = LstmParams::init(hidden, input, rng);
  p = LstmParams::zeros_like(p);
  p.hidden = hidden;
  p.input = input;
  return p;
}

}  // namespace

TEST_CASE("lstm_step all-zero network is a fixed point") {
  const LstmParams p = zero_params(3, 2);
  const CellState prev{Vector(3, 0.0), Vector(3, 0.0)};
  const CellState next = lstm_step(p, prev, {4.0, -7.0});
  for (double v : next.c) CHECK(v == 0.0);
  for (double v : next.h) CHECK(v == 0.0);
}

TEST_CASE("lstm_step saturated gates carry the cell state") {
  LstmParams p = zero_params(1, 1);
  p.input_b = {20.0};
  p.forget_b = {20.0};
  p.output_b = {20.0};
  p.cell_b = {0.0};
  const CellState prev{Vector{0.0}, Vector{0.7}};
  const CellState next = lstm_step(p, prev, {0.3});
  CHECK(next.c[0] == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(next.h[0] == doctest::Approx(0.6044).epsilon(1e-3));
  CHECK(next.h[0] == doctest::Approx(0.60436777495566141).epsilon(1e-9));
}

TEST_CASE("lstm_step hand-computed scalar oracle") {
  LstmParams p = zero_params(1, 1);
  p.input_w.data = {0.1, 0.2};
  p.forget_w.data = {0.3, 0.4};
  p.cell_w.data = {0.5, 0.6};
  p.output_w.data = {0.7, 0.8};
  p.input_b = {0.01};
  p.forget_b = {0.02};
  p.cell_b = {0.03};
  p.output_b = {0.04};
  const CellState prev{Vector{0.5}, Vector{-0.3}};
  const CellState next = lstm_step(p, prev, {1.0});
  // frozen values from direct scalar evaluation of the gate formulas
  CHECK(std::abs(next.c[0] - 0.20724103298245841) < 1e-12);
  CHECK(std::abs(next.h[0] - 0.15666376325785483) < 1e-12);
}

TEST_CASE("lstm_step shape errors") {
  const LstmParams p = zero_params(2, 3);
  const CellState prev{Vector(2, 0.0), Vector(2, 0.0)};
  CHECK_THROWS_AS(lstm_step(p, prev, {1.0}), ShapeError);
  const CellState bad{Vector(1, 0.0), Vector(1, 0.0)};
  CHECK_THROWS_AS(lstm_step(p, bad, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("init_hidden_from_conditions zero projection") {
  ConditionParams cp;
  cp.weight = Matrix(3, 4, 0.0);
  cp.bias = Vector(3, 0.0);
  const Vector h = init_hidden_from_conditions(cp, {9.0, -3.0, 0.5, 2.0});
  for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("init_hidden_from_conditions identity case") {
  ConditionParams cp;
  cp.weight = Matrix(1, 1, 1.0);
  cp.bias = Vector(1, 0.0);
  const Vector h = init_hidden_from_conditions(cp, {0.5});
  CHECK(h[0] == doctest::Approx(0.46211715726000974).epsilon(1e-12));
}

TEST_CASE("init_hidden_from_conditions output stays inside (-1,1)") {
  Rng rng(21);
  const ConditionParams cp = ConditionParams::init(4, 6, rng);
  Rng data_rng(22);
  for (int trial = 0; trial < 1000; ++trial) {
    Vector cond(6);
    for (double& v : cond) v = data_rng.uniform(-5.0, 5.0);
    for (double v : init_hidden_from_conditions(cp, cond)) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("run_sequence zero mode on a zero network returns zero") {
  std::vector<LstmParams> stack{zero_params(3, 2), zero_params(2, 3)};
  const std::vector<Vector> inputs{{1.0, 2.0}, {-1.0, 0.5}, {3.0, 3.0}};
  const Vector out = run_sequence(stack, nullptr, nullptr, inputs, InitMode::Zero);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("run_sequence severed condition pathway ignores conditions") {
  Rng rng(23);
  std::vector<LstmParams> stack{LstmParams::init(3, 2, rng)};
  ConditionParams cp;
  cp.weight = Matrix(3, 5, 0.0);
  cp.bias = Vector(3, 0.0);
  const std::vector<Vector> inputs{{0.3, -0.4}, {1.0, 0.2}};
  Rng cond_rng(24);
  Vector first_cond(5);
  for (double& v : first_cond) v = cond_rng.normal();
  const Vector base =
      run_sequence(stack, &cp, &first_cond, inputs, InitMode::Conditioned);
  for (int trial = 0; trial < 100; ++trial) {
    Vector cond(5);
    for (double& v : cond) v = cond_rng.uniform(-30.0, 30.0);
    const Vector out = run_sequence(stack, &cp, &cond, inputs, InitMode::Conditioned);
    CHECK(out == base);  // exact equality: pathway fully severed
  }
}

TEST_CASE("run_sequence length-1 conditioned output is the condition projection") {
  Rng rng(25);
  std::vector<LstmParams> stack{LstmParams::init(3, 2, rng)};
  const ConditionParams cp = ConditionParams::init(3, 4, rng);
  const Vector cond{0.2, -0.6, 1.0, 0.4};
  const std::vector<Vector> inputs{{0.5, 0.8}};
  const Vector out = run_sequence(stack, &cp, &cond, inputs, InitMode::Conditioned);
  const Vector expect = init_hidden_from_conditions(cp, cond);
  CHECK(out == expect);
}

TEST_CASE("run_sequence perturbing conditions moves the output when W_con != 0") {
  Rng rng(26);
  std::vector<LstmParams> stack{LstmParams::init(3, 2, rng)};
  const ConditionParams cp = ConditionParams::init(3, 4, rng);
  Rng data_rng(27);
  const std::vector<Vector> inputs{{0.1, 0.9}, {0.4, -0.2}, {0.6, 0.6}};
  for (int trial = 0; trial < 20; ++trial) {
    Vector cond(4);
    for (double& v : cond) v = data_rng.normal();
    Vector cond2 = cond;
    cond2[static_cast<std::size_t>(trial) % 4] += 0.5;
    const Vector a = run_sequence(stack, &cp, &cond, inputs, InitMode::Conditioned);
    const Vector b = run_sequence(stack, &cp, &cond2, inputs, InitMode::Conditioned);
    CHECK(a != b);
  }
}

TEST_CASE("run_sequence truncation consistency") {
  Rng rng(28);
  std::vector<LstmParams> stack{LstmParams::init(3, 2, rng), LstmParams::init(2, 3, rng)};
  const ConditionParams cp = ConditionParams::init(3, 4, rng);
  const Vector cond{0.3, 0.3, -0.5, 0.9};
  Rng data_rng(29);
  std::vector<Vector> inputs;
  for (int t = 0; t < 6; ++t) {
    Vector x(2);
    for (double& v : x) v = data_rng.normal();
    inputs.push_back(x);
  }
  LstmRunCache cache;
  run_sequence_cached(stack, &cp, &cond, inputs, InitMode::Conditioned, cache);
  for (std::size_t d = 1; d <= inputs.size(); ++d) {
    const std::vector<Vector> prefix(inputs.begin(), inputs.begin() + d);
    const Vector out = run_sequence(stack, &cp, &cond, prefix, InitMode::Conditioned);
    const Vector& full_at_d = cache.layers.back().steps[d - 1].h;
    CHECK(out == full_at_d);
  }
}

TEST_CASE("run_sequence usage errors") {
  std::vector<LstmParams> stack{zero_params(2, 2)};
  CHECK_THROWS_AS(run_sequence(stack, nullptr, nullptr, {}, InitMode::Zero), UsageError);
  const std::vector<Vector> inputs{{1.0, 1.0}};
  CHECK_THROWS_AS(run_sequence(stack, nullptr, nullptr, inputs, InitMode::Conditioned),
                  UsageError);
}

namespace {

struct FlatLstm {
  std::vector<LstmParams>* stack;
  ConditionParams* cp;

  Vector get() const {
    Vector theta;
    auto push_mat = [&](const Matrix& m) {
      theta.insert(theta.end(), m.data.begin(), m.data.end());
    };
    auto push_vec = [&](const Vector& v) {
      theta.insert(theta.end(), v.begin(), v.end());
    };
    for (const auto& p : *stack) {
      push_mat(p.input_w);
      push_mat(p.forget_w);
      push_mat(p.cell_w);
      push_mat(p.output_w);
      push_vec(p.input_b);
      push_vec(p.forget_b);
      push_vec(p.cell_b);
      push_vec(p.output_b);
    }
    if (cp) {
      push_mat(cp->weight);
      push_vec(cp->bias);
    }
    return theta;
  }

  void set(const Vector& theta) {
    std::size_t off = 0;
    auto pull_mat = [&](Matrix& m) {
      std::copy(theta.begin() + off, theta.begin() + off + m.data.size(),
                m.data.begin());
      off += m.data.size();
    };
    auto pull_vec = [&](Vector& v) {
      std::copy(theta.begin() + off, theta.begin() + off + v.size(), v.begin());
      off += v.size();
    };
    for (auto& p : *stack) {
      pull_mat(p.input_w);
      pull_mat(p.forget_w);
      pull_mat(p.cell_w);
      pull_mat(p.output_w);
      pull_vec(p.input_b);
      pull_vec(p.forget_b);
      pull_vec(p.cell_b);
      pull_vec(p.output_b);
    }
    if (cp) {
      pull_mat(cp->weight);
      pull_vec(cp->bias);
    }
  }
};

// scalar test loss: squared norm of the final hidden state
double seq_loss(const std::vector<LstmParams>& stack, const ConditionParams* cp,
                const Vector* cond, const std::vector<Vector>& inputs, InitMode mode) {
  const Vector h = run_sequence(stack, cp, cond, inputs, mode);
  double acc = 0.0;
  for (double v : h) acc += v * v;
  return acc;
}

}  // namespace

TEST_CASE("BPTT matches finite differences including condition parameters") {
  Rng rng(31);
  std::vector<LstmParams> stack{LstmParams::init(4, 3, rng), LstmParams::init(2, 4, rng)};
  ConditionParams cp = ConditionParams::init(4, 5, rng);
  Vector cond{0.4, -0.2, 0.7, 0.1, -0.9};
  Rng data_rng(32);
  std::vector<Vector> inputs;
  for (int t = 0; t < 5; ++t) {
    Vector x(3);
    for (double& v : x) v = data_rng.normal();
    inputs.push_back(x);
  }

  for (InitMode mode : {InitMode::Conditioned, InitMode::Zero}) {
    const ConditionParams* cp_used = mode == InitMode::Conditioned ? &cp : nullptr;
    LstmRunCache cache;
    const Vector h = run_sequence_cached(stack, cp_used, &cond, inputs, mode, cache);
    std::vector<LstmParams> grads;
    for (const auto& p : stack) grads.push_back(LstmParams::zeros_like(p));
    ConditionParams cond_grads = ConditionParams::zeros_like(cp);
    Vector d_cond(cond.size(), 0.0);
    Vector d_h(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) d_h[i] = 2.0 * h[i];
    std::vector<Vector> d_inputs;
    run_sequence_backward(stack, cp_used, cache, d_h, grads,
                          mode == InitMode::Conditioned ? &cond_grads : nullptr,
                          mode == InitMode::Conditioned ? &d_cond : nullptr, &d_inputs);

    FlatLstm flat_grads{&grads, mode == InitMode::Conditioned ? &cond_grads : nullptr};
    const Vector analytic = flat_grads.get();

    auto probe_stack = stack;
    auto probe_cp = cp;
    FlatLstm flat_probe{&probe_stack,
                        mode == InitMode::Conditioned ? &probe_cp : nullptr};
    auto f = [&](const Vector& theta) {
      flat_probe.set(theta);
      return seq_loss(probe_stack,
                      mode == InitMode::Conditioned ? &probe_cp : nullptr, &cond,
                      inputs, mode);
    };
    FlatLstm flat_orig{&stack, mode == InitMode::Conditioned ? &cp : nullptr};
    const Vector numeric = finite_diff_gradient(f, flat_orig.get(), 1e-5);
    REQUIRE(analytic.size() == numeric.size());
    double max_err = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
      max_err = std::max(max_err, gradient_rel_error(analytic[i], numeric[i]));
    CHECK(max_err < 1e-5);

    // gradient flowing into the conditions vector
    if (mode == InitMode::Conditioned) {
      auto f_cond = [&](const Vector& c) {
        return seq_loss(stack, &cp, &c, inputs, mode);
      };
      const Vector numeric_cond = finite_diff_gradient(f_cond, cond, 1e-5);
      for (std::size_t i = 0; i < cond.size(); ++i)
        CHECK(gradient_rel_error(d_cond[i], numeric_cond[i]) < 1e-5);
    }

    // gradient flowing into the step inputs
    auto f_x = [&](const Vector& x0) {
      auto perturbed = inputs;
      perturbed[2] = x0;
      return seq_loss(stack, cp_used, &cond, perturbed, mode);
    };
    const Vector numeric_x = finite_diff_gradient(f_x, inputs[2], 1e-5);
    for (std::size_t i = 0; i < numeric_x.size(); ++i)
      CHECK(gradient_rel_error(d_inputs[2][i], numeric_x[i]) < 1e-5);
  }
}

TEST_CASE("run_sequence is deterministic and runs T steps per layer") {
  Rng rng(33);
  std::vector<LstmParams> stack{LstmParams::init(3, 2, rng)};
  Rng data_rng(34);
  std::vector<Vector> inputs;
  for (int t = 0; t < 7; ++t) inputs.push_back({data_rng.normal(), data_rng.normal()});
  LstmRunCache c1, c2;
  const Vector a = run_sequence_cached(stack, nullptr, nullptr, inputs, InitMode::Zero, c1);
  const Vector b = run_sequence_cached(stack, nullptr, nullptr, inputs, InitMode::Zero, c2);
  CHECK(a == b);
  CHECK(c1.layers[0].steps.size() == 7);
}
