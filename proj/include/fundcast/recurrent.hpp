#pragma once

#include <cstddef>
#include <vector>

#include "fundcast/numcore.hpp"

namespace fundcast {

/// Gate parameters for one LSTM layer. Each weight is hidden x (hidden+input)
/// and acts on the concatenation [h_prev, x].
struct LstmParams {
  std::size_t hidden = 0;
  std::size_t input = 0;
  Matrix input_w, forget_w, cell_w, output_w;
  Vector input_b, forget_b, cell_b, output_b;

  /// Uniform +-1/sqrt(fan_in); forget bias starts at +1 so early gradients
  /// survive long sequences.
  static LstmParams init(std::size_t hidden, std::size_t input, Rng& rng);
  static LstmParams zeros_like(const LstmParams& other);
};

/// Projection that turns the condition vector into the first hidden state.
struct ConditionParams {
  Matrix weight;  // hidden x condition length
  Vector bias;    // hidden

  static ConditionParams init(std::size_t hidden, std::size_t cond_len, Rng& rng);
  static ConditionParams zeros_like(const ConditionParams& other);
};

struct CellState {
  Vector h;
  Vector c;
};

/// One cell update: sigmoid gates on W.[h_prev, x] + b, candidate through
/// tanh, c = f*c_prev + i*cand, h = o*tanh(c).
CellState lstm_step(const LstmParams& params, const CellState& prev, const Vector& x);

/// tanh(W_con . conditions + b_con); used as the first layer's h at step 1.
/// The companion cell state starts at zero.
Vector init_hidden_from_conditions(const ConditionParams& cp, const Vector& conditions);

enum class InitMode { Zero, Conditioned };

/// Runs the layer stack over the inputs and returns the top layer's hidden
/// state at the final step. In Conditioned mode the first layer's hidden
/// output at step 1 is replaced by init_hidden_from_conditions; gates and the
/// cell state at step 1 are still computed from x[0] with a zero previous
/// state, so the cell memory path stays live.
Vector run_sequence(const std::vector<LstmParams>& stack, const ConditionParams* cp,
                    const Vector* conditions, const std::vector<Vector>& inputs,
                    InitMode mode);

// --- training-path API -----------------------------------------------------

struct LstmStepCache {
  Vector z;       // [h_prev, x]
  Vector c_prev;
  Vector in_gate, forget_gate, out_gate, candidate;
  Vector c, tanh_c, h;
};

struct LstmLayerCache {
  std::vector<LstmStepCache> steps;
};

struct LstmRunCache {
  std::vector<LstmLayerCache> layers;
  bool conditioned = false;
  Vector conditions;
  Vector cond_h;  // tanh(W_con . c + b_con)
};

Vector run_sequence_cached(const std::vector<LstmParams>& stack,
                           const ConditionParams* cp, const Vector* conditions,
                           const std::vector<Vector>& inputs, InitMode mode,
                           LstmRunCache& cache);

/// Backpropagation through time over the cached run. d_final_h is the loss
/// gradient at the top layer's final hidden state. Parameter gradients
/// accumulate into layer_grads / cond_grads; d_conditions (optional) receives
/// the gradient into the condition vector; d_inputs (optional) receives
/// gradients into the bottom layer's per-step inputs.
void run_sequence_backward(const std::vector<LstmParams>& stack,
                           const ConditionParams* cp, const LstmRunCache& cache,
                           const Vector& d_final_h,
                           std::vector<LstmParams>& layer_grads,
                           ConditionParams* cond_grads, Vector* d_conditions,
                           std::vector<Vector>* d_inputs);

}  // namespace fundcast
