#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "seqxfer/tensor.hpp"

namespace seqxfer {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Define-by-run reverse-mode tape. Build a fresh tape per minibatch, record
/// the forward computation through the ops in namespace `ad`, then call
/// backward() once on a scalar loss.
class Tape {
 public:
  /// Receives the gradient w.r.t. the node's output and one accumulator per
  /// input (nullptr where that input needs no gradient).
  using Backward = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  /// Registers a named parameter leaf. Repeated calls with the same name
  /// return the same leaf so uses accumulate into a single gradient.
  /// Frozen names are recorded as constants.
  Var parameter(const std::string& name, const Tensor& value);

  void freeze(const std::string& name) { frozen_.insert(name); }
  bool is_frozen(const std::string& name) const { return frozen_.count(name) > 0; }

  Var record(Tensor value, std::vector<Var> inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Returns d loss / d p for every
  /// trainable parameter registered on this tape (zeros where unreachable).
  Gradients backward(Var loss);

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    Backward backward;
    std::string param_name;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  std::set<std::string> frozen_;
};

/// Differentiable operations. Matrices are rank-2 row-major; rank-1 tensors
/// act as a single row.
namespace ad {

Var matmul(Var a, Var b);                // [m,k] x [k,n]
Var matmul_nt(Var x, Var w);             // x [m,k] times w^T, w [n,k]
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                   // elementwise
Var scale(Var a, double s);
Var add_row(Var x, Var bias);            // broadcast bias [n] over rows of x [m,n]
Var linear(Var x, Var weight, Var bias); // x W^T + b
Var sigmoid(Var a);
Var tanh(Var a);
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var gather_rows(Var table, std::span<const std::size_t> ids);

/// Sliding windows of `width` consecutive rows inside each group of
/// `group_len` rows, flattened into one row per window:
/// [groups*group_len, d] -> [groups*(group_len-width+1), width*d].
Var unfold(Var x, std::size_t group_len, std::size_t width);

/// Column-wise max over the first valid[g] rows of each group of
/// `group_len` rows: [groups*group_len, n] -> [groups, n].
Var segment_max(Var x, std::size_t group_len, std::span<const std::size_t> valid);

/// Single-layer LSTM over a sequence. `gate_inputs` holds the precomputed
/// input contribution plus bias, [T, 4H] in gate order (input, forget,
/// cell, output). Returns hidden states [T, H]; with `reverse` the sequence
/// is consumed from the last row to the first and row t still holds the
/// state at position t.
Var lstm_sequence(Var gate_inputs, Var recurrent_weight, bool reverse);

/// Summed negative log-likelihood of softmax(logits) rows at the target
/// columns. Targets equal to -1 are ignored.
Var softmax_cross_entropy(Var logits, std::span<const int> targets);

/// Inverted dropout with a mask drawn from `seed`.
Var dropout(Var x, double rate, std::uint64_t seed);

Var sum(Var a);
/// sum((a - anchor)^2)
Var squared_distance(Var a, const Tensor& anchor);

}  // namespace ad
}  // namespace seqxfer
