#include "fundcast/recurrent.hpp"

#include <cmath>
#include <string>

#include "fundcast/layers.hpp"

namespace fundcast {

LstmParams LstmParams::init(std::size_t hidden, std::size_t input, Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  p.input = input;
  const std::size_t fan_in = hidden + input;
  auto make_w = [&] {
    Matrix w(hidden, fan_in);
    init_uniform_fan_in(w, fan_in, rng);
    return w;
  };
  p.input_w = make_w();
  p.forget_w = make_w();
  p.cell_w = make_w();
  p.output_w = make_w();
  p.input_b = Vector(hidden, 0.0);
  p.forget_b = Vector(hidden, 1.0);
  p.cell_b = Vector(hidden, 0.0);
  p.output_b = Vector(hidden, 0.0);
  return p;
}

LstmParams LstmParams::zeros_like(const LstmParams& other) {
  LstmParams p = other;
  for (Matrix* w : {&p.input_w, &p.forget_w, &p.cell_w, &p.output_w})
    std::fill(w->data.begin(), w->data.end(), 0.0);
  for (Vector* b : {&p.input_b, &p.forget_b, &p.cell_b, &p.output_b})
    std::fill(b->begin(), b->end(), 0.0);
  return p;
}

ConditionParams ConditionParams::init(std::size_t hidden, std::size_t cond_len,
                                      Rng& rng) {
  ConditionParams p;
  p.weight = Matrix(hidden, cond_len);
  init_uniform_fan_in(p.weight, cond_len, rng);
  p.bias = Vector(hidden, 0.0);
  return p;
}

ConditionParams ConditionParams::zeros_like(const ConditionParams& other) {
  ConditionParams p = other;
  std::fill(p.weight.data.begin(), p.weight.data.end(), 0.0);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  return p;
}

namespace {

Vector concat(const Vector& a, const Vector& b) {
  Vector out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

void gate_preact(const Matrix& w, const Vector& z, const Vector& b, Vector& out) {
  out = matvec(w, z);
  add_to(out, b);
}

LstmStepCache step_cached(const LstmParams& p, const CellState& prev,
                          const Vector& x) {
  if (prev.h.size() != p.hidden || prev.c.size() != p.hidden)
    throw ShapeError("lstm_step: state size " + std::to_string(prev.h.size()) +
                     " does not match hidden size " + std::to_string(p.hidden));
  if (x.size() != p.input)
    throw ShapeError("lstm_step: input size " + std::to_string(x.size()) +
                     " does not match declared input " + std::to_string(p.input));
  LstmStepCache s;
  s.z = concat(prev.h, x);
  s.c_prev = prev.c;
  Vector pre;
  gate_preact(p.input_w, s.z, p.input_b, pre);
  s.in_gate = apply_activation(Activation::Sigmoid, pre);
  gate_preact(p.forget_w, s.z, p.forget_b, pre);
  s.forget_gate = apply_activation(Activation::Sigmoid, pre);
  gate_preact(p.cell_w, s.z, p.cell_b, pre);
  s.candidate = apply_activation(Activation::Tanh, pre);
  gate_preact(p.output_w, s.z, p.output_b, pre);
  s.out_gate = apply_activation(Activation::Sigmoid, pre);
  s.c = Vector(p.hidden);
  s.tanh_c = Vector(p.hidden);
  s.h = Vector(p.hidden);
  for (std::size_t i = 0; i < p.hidden; ++i) {
    s.c[i] = s.forget_gate[i] * prev.c[i] + s.in_gate[i] * s.candidate[i];
    s.tanh_c[i] = std::tanh(s.c[i]);
    s.h[i] = s.out_gate[i] * s.tanh_c[i];
  }
  return s;
}

}  // namespace

CellState lstm_step(const LstmParams& params, const CellState& prev, const Vector& x) {
  LstmStepCache s = step_cached(params, prev, x);
  return {std::move(s.h), std::move(s.c)};
}

Vector init_hidden_from_conditions(const ConditionParams& cp, const Vector& conditions) {
  if (cp.weight.cols != conditions.size())
    throw ShapeError("init_hidden_from_conditions: condition length " +
                     std::to_string(conditions.size()) + " does not match weight " +
                     std::to_string(cp.weight.rows) + "x" +
                     std::to_string(cp.weight.cols));
  Vector pre = matvec(cp.weight, conditions);
  add_to(pre, cp.bias);
  return apply_activation(Activation::Tanh, pre);
}

Vector run_sequence_cached(const std::vector<LstmParams>& stack,
                           const ConditionParams* cp, const Vector* conditions,
                           const std::vector<Vector>& inputs, InitMode mode,
                           LstmRunCache& cache) {
  if (inputs.empty()) throw UsageError("run_sequence: empty input sequence");
  if (stack.empty()) throw UsageError("run_sequence: empty layer stack");
  const bool conditioned = mode == InitMode::Conditioned;
  if (conditioned && (cp == nullptr || conditions == nullptr))
    throw UsageError("run_sequence: conditioned mode needs condition params and vector");

  cache.layers.assign(stack.size(), {});
  cache.conditioned = conditioned;
  if (conditioned) {
    cache.conditions = *conditions;
    cache.cond_h = init_hidden_from_conditions(*cp, *conditions);
    if (cache.cond_h.size() != stack.front().hidden)
      throw ShapeError("run_sequence: condition projection width does not match "
                       "first layer hidden size");
  }

  std::vector<Vector> layer_in = inputs;
  Vector last_h;
  for (std::size_t li = 0; li < stack.size(); ++li) {
    const auto& p = stack[li];
    auto& lc = cache.layers[li];
    lc.steps.reserve(layer_in.size());
    CellState state{Vector(p.hidden, 0.0), Vector(p.hidden, 0.0)};
    std::vector<Vector> layer_out;
    layer_out.reserve(layer_in.size());
    for (std::size_t t = 0; t < layer_in.size(); ++t) {
      LstmStepCache s = step_cached(p, state, layer_in[t]);
      if (conditioned && li == 0 && t == 0) s.h = cache.cond_h;
      state.h = s.h;
      state.c = s.c;
      layer_out.push_back(s.h);
      lc.steps.push_back(std::move(s));
    }
    last_h = state.h;
    layer_in = std::move(layer_out);
  }
  return last_h;
}

Vector run_sequence(const std::vector<LstmParams>& stack, const ConditionParams* cp,
                    const Vector* conditions, const std::vector<Vector>& inputs,
                    InitMode mode) {
  LstmRunCache cache;
  return run_sequence_cached(stack, cp, conditions, inputs, mode, cache);
}

void run_sequence_backward(const std::vector<LstmParams>& stack,
                           const ConditionParams* cp, const LstmRunCache& cache,
                           const Vector& d_final_h,
                           std::vector<LstmParams>& layer_grads,
                           ConditionParams* cond_grads, Vector* d_conditions,
                           std::vector<Vector>* d_inputs) {
  const std::size_t n_layers = stack.size();
  const std::size_t T = cache.layers.front().steps.size();
  if (cache.conditioned && (cp == nullptr || cond_grads == nullptr))
    throw UsageError("run_sequence_backward: conditioned cache needs condition params");

  // d_h[t] accumulated for the layer currently being walked
  std::vector<Vector> d_h(T);
  for (std::size_t t = 0; t < T; ++t)
    d_h[t] = Vector(stack[n_layers - 1].hidden, 0.0);
  d_h[T - 1] = d_final_h;

  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& p = stack[li];
    const auto& lc = cache.layers[li];
    auto& lg = layer_grads[li];
    std::vector<Vector> d_below;
    if (li > 0) {
      d_below.assign(T, Vector(stack[li - 1].hidden, 0.0));
    } else if (d_inputs) {
      d_inputs->assign(T, Vector(p.input, 0.0));
    }

    Vector d_c_next(p.hidden, 0.0);
    for (std::size_t t = T; t-- > 0;) {
      const auto& s = lc.steps[t];
      Vector d_h_t = d_h[t];
      Vector d_c = d_c_next;

      const bool replaced = cache.conditioned && li == 0 && t == 0;
      if (replaced) {
        // h at step 1 came from tanh(W_con . c + b_con); all of d_h routes
        // through that projection, none through o * tanh(c).
        Vector d_pre(p.hidden);
        for (std::size_t i = 0; i < p.hidden; ++i)
          d_pre[i] = d_h_t[i] * (1.0 - cache.cond_h[i] * cache.cond_h[i]);
        add_outer(cond_grads->weight, d_pre, cache.conditions);
        add_to(cond_grads->bias, d_pre);
        if (d_conditions) {
          Vector dc_vec = matvec_transposed(cp->weight, d_pre);
          add_to(*d_conditions, dc_vec);
        }
        std::fill(d_h_t.begin(), d_h_t.end(), 0.0);
      }

      Vector d_o_pre(p.hidden), d_i_pre(p.hidden), d_f_pre(p.hidden),
          d_g_pre(p.hidden);
      for (std::size_t i = 0; i < p.hidden; ++i) {
        const double o = s.out_gate[i];
        d_o_pre[i] = d_h_t[i] * s.tanh_c[i] * o * (1.0 - o);
        d_c[i] += d_h_t[i] * o * (1.0 - s.tanh_c[i] * s.tanh_c[i]);
        const double ig = s.in_gate[i];
        const double fg = s.forget_gate[i];
        const double g = s.candidate[i];
        d_i_pre[i] = d_c[i] * g * ig * (1.0 - ig);
        d_f_pre[i] = d_c[i] * s.c_prev[i] * fg * (1.0 - fg);
        d_g_pre[i] = d_c[i] * ig * (1.0 - g * g);
      }

      add_outer(lg.input_w, d_i_pre, s.z);
      add_to(lg.input_b, d_i_pre);
      add_outer(lg.forget_w, d_f_pre, s.z);
      add_to(lg.forget_b, d_f_pre);
      add_outer(lg.cell_w, d_g_pre, s.z);
      add_to(lg.cell_b, d_g_pre);
      add_outer(lg.output_w, d_o_pre, s.z);
      add_to(lg.output_b, d_o_pre);

      Vector d_z = matvec_transposed(p.input_w, d_i_pre);
      {
        Vector tmp = matvec_transposed(p.forget_w, d_f_pre);
        add_to(d_z, tmp);
        tmp = matvec_transposed(p.cell_w, d_g_pre);
        add_to(d_z, tmp);
        tmp = matvec_transposed(p.output_w, d_o_pre);
        add_to(d_z, tmp);
      }

      // split d_z into previous hidden and step input parts
      if (t > 0)
        for (std::size_t i = 0; i < p.hidden; ++i) d_h[t - 1][i] += d_z[i];
      if (li > 0) {
        for (std::size_t i = 0; i < p.input; ++i)
          d_below[t][i] += d_z[p.hidden + i];
      } else if (d_inputs) {
        for (std::size_t i = 0; i < p.input; ++i)
          (*d_inputs)[t][i] += d_z[p.hidden + i];
      }

      d_c_next = Vector(p.hidden);
      for (std::size_t i = 0; i < p.hidden; ++i)
        d_c_next[i] = d_c[i] * s.forget_gate[i];
    }
    if (li > 0) d_h = std::move(d_below);
  }
}

}  // namespace fundcast
