#include "seqxfer/autodiff.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>

#include "seqxfer/errors.hpp"
#include "seqxfer/numerics.hpp"

namespace seqxfer {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap view(const Tensor& t) {
  return ConstMatMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MatMap view(Tensor& t) {
  return MatMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

Tape& tape_of(Var a) {
  require(a.tape != nullptr, "Var is not attached to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, "operands live on different tapes");
  return *a.tape;
}

Tensor matrix_of(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant contains non-finite values");
  nodes_.push_back(Node{std::move(value), {}, nullptr, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = params_.find(name); it != params_.end()) return Var{this, it->second};
  if (!value.all_finite()) throw NumericError("parameter " + name + " contains non-finite values");
  const bool trainable = !is_frozen(name);
  nodes_.push_back(Node{value, {}, nullptr, trainable ? name : std::string{}, trainable});
  params_.emplace(name, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, Backward backward) {
  if (!value.all_finite()) throw NumericError("operation produced non-finite values");
  Node node;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    require(in.tape == this, "operand recorded on a different tape");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Gradients Tape::backward(Var loss) {
  require(loss.tape == this, "loss recorded on a different tape");
  require(nodes_[loss.id].value.size() == 1,
          "backward requires a scalar loss, got shape " + shape_string(nodes_[loss.id].value.shape()));

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id] = Tensor(nodes_[loss.id].value.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || grads[i].empty() || !node.backward) continue;
    slots.clear();
    for (auto in : node.inputs) {
      if (!nodes_[in].requires_grad) {
        slots.push_back(nullptr);
        continue;
      }
      if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape());
      slots.push_back(&grads[in]);
    }
    node.backward(grads[i], slots);
    // Interior gradients are no longer needed once propagated.
    if (node.param_name.empty()) grads[i] = Tensor();
  }

  Gradients out;
  for (const auto& [name, id] : params_) {
    if (!nodes_[id].requires_grad) continue;
    Tensor g = grads[id].empty() ? Tensor(nodes_[id].value.shape()) : std::move(grads[id]);
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter " + name);
    out.emplace(name, std::move(g));
  }
  return out;
}

namespace ad {

// Forward products are evaluated coefficient-wise so each output row depends
// only on its own input row, independent of how many rows are batched.
Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.cols() == bv.rows(), "matmul: inner dimensions differ " + shape_string(av.shape()) +
                                      " x " + shape_string(bv.shape()));
  Tensor out = matrix_of(av.rows(), bv.cols());
  view(out).noalias() = view(av).lazyProduct(view(bv));
  return tape.record(std::move(out), {a, b}, [&tape, a = a.id, b = b.id](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0]) view(*gi[0]).noalias() += view(g) * view(tape.value(b)).transpose();
    if (gi[1]) view(*gi[1]).noalias() += view(tape.value(a)).transpose() * view(g);
  });
}

Var matmul_nt(Var x, Var w) {
  Tape& tape = tape_of(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(xv.cols() == wv.cols(), "matmul_nt: " + shape_string(xv.shape()) + " against weight " +
                                      shape_string(wv.shape()));
  Tensor out = matrix_of(xv.rows(), wv.rows());
  view(out).noalias() = view(xv).lazyProduct(view(wv).transpose());
  return tape.record(std::move(out), {x, w}, [&tape, x = x.id, w = w.id](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0]) view(*gi[0]).noalias() += view(g) * view(tape.value(w));
    if (gi[1]) view(*gi[1]).noalias() += view(g).transpose() * view(tape.value(x));
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require(a.value().size() == b.value().size() && a.value().cols() == b.value().cols(),
          "add: shapes differ " + shape_string(a.value().shape()) + " vs " + shape_string(b.value().shape()));
  Tensor out = a.value();
  view(out) += view(b.value());
  return tape.record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> gi) {
    for (auto* slot : gi) {
      if (slot) view(*slot) += view(g);
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require(a.value().size() == b.value().size() && a.value().cols() == b.value().cols(),
          "sub: shapes differ " + shape_string(a.value().shape()) + " vs " + shape_string(b.value().shape()));
  Tensor out = a.value();
  view(out) -= view(b.value());
  return tape.record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0]) view(*gi[0]) += view(g);
    if (gi[1]) view(*gi[1]) -= view(g);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require(a.value().size() == b.value().size() && a.value().cols() == b.value().cols(),
          "mul: shapes differ " + shape_string(a.value().shape()) + " vs " + shape_string(b.value().shape()));
  Tensor out = a.value();
  view(out).array() *= view(b.value()).array();
  return tape.record(std::move(out), {a, b}, [&tape, a = a.id, b = b.id](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0]) view(*gi[0]).array() += view(g).array() * view(tape.value(b)).array();
    if (gi[1]) view(*gi[1]).array() += view(g).array() * view(tape.value(a)).array();
  });
}

Var scale(Var a, double s) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  view(out) *= s;
  return tape.record(std::move(out), {a}, [s](const Tensor& g, std::span<Tensor* const> gi) {
    view(*gi[0]) += s * view(g);
  });
}

Var add_row(Var x, Var bias) {
  Tape& tape = tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require(bv.size() == xv.cols(), "add_row: bias " + shape_string(bv.shape()) + " against " +
                                      shape_string(xv.shape()));
  Tensor out = xv;
  view(out).rowwise() += view(bv).row(0);
  return tape.record(std::move(out), {x, bias}, [](const Tensor& g, std::span<Tensor* const> gi) {
    if (gi[0]) view(*gi[0]) += view(g);
    if (gi[1]) view(*gi[1]).row(0) += view(g).colwise().sum();
  });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul_nt(x, weight), bias); }

Var sigmoid(Var a) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), {a}, [&tape, out_id](const Tensor& g, std::span<Tensor* const> gi) {
    const auto y = view(tape.value(out_id)).array();
    view(*gi[0]).array() += view(g).array() * y * (1.0 - y);
  });
}

Var tanh(Var a) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), {a}, [&tape, out_id](const Tensor& g, std::span<Tensor* const> gi) {
    const auto y = view(tape.value(out_id)).array();
    view(*gi[0]).array() += view(g).array() * (1.0 - y * y);
  });
}

Var hcat(std::span<const Var> parts) {
  require(!parts.empty(), "hcat of nothing");
  Tape& tape = tape_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    tape_of(parts[0], p);
    require(p.value().rows() == rows, "hcat: row counts differ");
    offsets.push_back(cols);
    cols += p.value().cols();
  }
  Tensor out = matrix_of(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    view(out).middleCols(static_cast<Eigen::Index>(offsets[i]), static_cast<Eigen::Index>(pv.cols())) = view(pv);
  }
  return tape.record(std::move(out), {parts.begin(), parts.end()},
                     [offsets](const Tensor& g, std::span<Tensor* const> gi) {
                       for (std::size_t i = 0; i < gi.size(); ++i) {
                         if (!gi[i]) continue;
                         view(*gi[i]) += view(g).middleCols(static_cast<Eigen::Index>(offsets[i]),
                                                            static_cast<Eigen::Index>(gi[i]->cols()));
                       }
                     });
}

Var vcat(std::span<const Var> parts) {
  require(!parts.empty(), "vcat of nothing");
  Tape& tape = tape_of(parts[0]);
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    tape_of(parts[0], p);
    require(p.value().cols() == cols, "vcat: column counts differ");
    offsets.push_back(rows);
    rows += p.value().rows();
  }
  Tensor out = matrix_of(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    view(out).middleRows(static_cast<Eigen::Index>(offsets[i]), static_cast<Eigen::Index>(pv.rows())) = view(pv);
  }
  return tape.record(std::move(out), {parts.begin(), parts.end()},
                     [offsets](const Tensor& g, std::span<Tensor* const> gi) {
                       for (std::size_t i = 0; i < gi.size(); ++i) {
                         if (!gi[i]) continue;
                         view(*gi[i]) += view(g).middleRows(static_cast<Eigen::Index>(offsets[i]),
                                                            static_cast<Eigen::Index>(gi[i]->rows()));
                       }
                     });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  require(count > 0 && start + count <= av.cols(), "slice_cols out of range");
  Tensor out = matrix_of(av.rows(), count);
  view(out) = view(av).middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  return tape.record(std::move(out), {a}, [start, count](const Tensor& g, std::span<Tensor* const> gi) {
    view(*gi[0]).middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) += view(g);
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  require(count > 0 && start + count <= av.rows(), "slice_rows out of range");
  Tensor out = matrix_of(count, av.cols());
  view(out) = view(av).middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
  return tape.record(std::move(out), {a}, [start, count](const Tensor& g, std::span<Tensor* const> gi) {
    view(*gi[0]).middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) += view(g);
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Tape& tape = tape_of(table);
  const Tensor& tv = table.value();
  require(!ids.empty(), "gather_rows with no ids");
  const std::size_t d = tv.cols();
  Tensor out = matrix_of(ids.size(), d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] < tv.rows(), "gather_rows: id " + std::to_string(ids[r]) + " out of range");
    std::copy_n(tv.values().begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d,
                out.values().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return tape.record(std::move(out), {table}, [rows = std::move(rows), d](const Tensor& g, std::span<Tensor* const> gi) {
    auto& dst = gi[0]->values();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < d; ++c) dst[rows[r] * d + c] += g[r * d + c];
    }
  });
}

Var unfold(Var x, std::size_t group_len, std::size_t width) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require(width >= 1 && width <= group_len, "unfold: window wider than group");
  require(xv.rows() % group_len == 0, "unfold: rows not a multiple of group length");
  const std::size_t groups = xv.rows() / group_len;
  const std::size_t windows = group_len - width + 1;
  const std::size_t d = xv.cols();
  Tensor out = matrix_of(groups * windows, width * d);
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    for (std::size_t s = 0; s < windows; ++s) {
      const double* src = xv.values().data() + (gidx * group_len + s) * d;
      std::copy_n(src, width * d, out.values().data() + (gidx * windows + s) * width * d);
    }
  }
  return tape.record(std::move(out), {x}, [groups, windows, group_len, width, d](const Tensor& g, std::span<Tensor* const> gi) {
    auto& dst = gi[0]->values();
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
      for (std::size_t s = 0; s < windows; ++s) {
        const double* src = g.values().data() + (gidx * windows + s) * width * d;
        double* base = dst.data() + (gidx * group_len + s) * d;
        for (std::size_t k = 0; k < width * d; ++k) base[k] += src[k];
      }
    }
  });
}

Var segment_max(Var x, std::size_t group_len, std::span<const std::size_t> valid) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require(group_len > 0 && xv.rows() == valid.size() * group_len, "segment_max: group layout mismatch");
  const std::size_t groups = valid.size();
  const std::size_t n = xv.cols();
  Tensor out = matrix_of(groups, n);
  std::vector<std::size_t> argmax(groups * n);
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    require(valid[gidx] >= 1 && valid[gidx] <= group_len, "segment_max: invalid row count");
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t best = gidx * group_len;
      for (std::size_t r = 1; r < valid[gidx]; ++r) {
        const std::size_t row = gidx * group_len + r;
        if (xv.at(row, c) > xv.at(best, c)) best = row;
      }
      argmax[gidx * n + c] = best;
      out.at(gidx, c) = xv.at(best, c);
    }
  }
  return tape.record(std::move(out), {x}, [argmax = std::move(argmax), n](const Tensor& g, std::span<Tensor* const> gi) {
    for (std::size_t k = 0; k < argmax.size(); ++k) {
      gi[0]->at(argmax[k], k % n) += g[k];
    }
  });
}

Var lstm_sequence(Var gate_inputs, Var recurrent_weight, bool reverse) {
  Tape& tape = tape_of(gate_inputs, recurrent_weight);
  const Tensor& xv = gate_inputs.value();
  const Tensor& wv = recurrent_weight.value();
  const std::size_t hidden = wv.cols();
  const std::size_t steps = xv.rows();
  require(wv.rows() == 4 * hidden, "lstm_sequence: recurrent weight must be [4H, H], got " + shape_string(wv.shape()));
  require(xv.cols() == 4 * hidden, "lstm_sequence: gate inputs must be [T, 4H], got " + shape_string(xv.shape()));

  const auto H = static_cast<Eigen::Index>(hidden);
  // Per step: activated gates (i, f, g, o) and cell state.
  auto acts = std::make_shared<RowMatrix>(static_cast<Eigen::Index>(steps), 4 * H);
  auto cells = std::make_shared<RowMatrix>(static_cast<Eigen::Index>(steps), H);
  Tensor out = matrix_of(steps, hidden);
  auto W = view(wv);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(H);
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(H);
  for (std::size_t k = 0; k < steps; ++k) {
    const auto t = static_cast<Eigen::Index>(reverse ? steps - 1 - k : k);
    Eigen::RowVectorXd z = view(xv).row(t) + h * W.transpose();
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (Eigen::Index j = 0; j < H; ++j) {
      z(j) = sig(z(j));
      z(H + j) = sig(z(H + j));
      z(2 * H + j) = std::tanh(z(2 * H + j));
      z(3 * H + j) = sig(z(3 * H + j));
    }
    c = z.segment(H, H).cwiseProduct(c) + z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
    h = z.segment(3 * H, H).cwiseProduct(c.array().tanh().matrix());
    acts->row(t) = z;
    cells->row(t) = c;
    view(out).row(t) = h;
  }

  const std::size_t out_id = tape.size();
  return tape.record(
      std::move(out), {gate_inputs, recurrent_weight},
      [&tape, out_id, w_id = recurrent_weight.id, acts, cells, steps, H, reverse](
          const Tensor& g, std::span<Tensor* const> gi) {
        auto W = view(tape.value(w_id));
        auto hs = view(tape.value(out_id));
        Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(H);
        Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(H);
        Eigen::RowVectorXd dz(4 * H);
        for (std::size_t k = steps; k-- > 0;) {
          const auto t = static_cast<Eigen::Index>(reverse ? steps - 1 - k : k);
          const bool has_prev = k > 0;
          const auto prev = static_cast<Eigen::Index>(reverse ? t + 1 : t - 1);
          const auto z = acts->row(t);
          const Eigen::RowVectorXd tanh_c = cells->row(t).array().tanh();
          const Eigen::RowVectorXd dh = view(g).row(t) + dh_next;
          const auto i = z.segment(0, H).array();
          const auto f = z.segment(H, H).array();
          const auto gg = z.segment(2 * H, H).array();
          const auto o = z.segment(3 * H, H).array();
          const Eigen::ArrayXXd dc_row =
              (dh.array() * o * (1.0 - tanh_c.array().square()) + dc_next.array());
          Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(H);
          if (has_prev) c_prev = cells->row(prev);
          dz.segment(0, H) = (dc_row * gg * i * (1.0 - i)).matrix();
          dz.segment(H, H) = (dc_row * c_prev.array() * f * (1.0 - f)).matrix();
          dz.segment(2 * H, H) = (dc_row * i * (1.0 - gg.square())).matrix();
          dz.segment(3 * H, H) = (dh.array() * tanh_c.array() * o * (1.0 - o)).matrix();
          dc_next = (dc_row * f).matrix();
          if (gi[0]) view(*gi[0]).row(t) += dz;
          if (has_prev) {
            if (gi[1]) view(*gi[1]).noalias() += dz.transpose() * hs.row(prev);
            dh_next = dz * W;
          } else {
            dh_next.setZero();
          }
        }
      });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets) {
  Tape& tape = tape_of(logits);
  const Tensor& lv = logits.value();
  require(targets.size() == lv.rows(), "softmax_cross_entropy: one target per row required");
  const std::size_t n = lv.cols();
  auto probs = std::make_shared<RowMatrix>(static_cast<Eigen::Index>(lv.rows()), static_cast<Eigen::Index>(n));
  double total = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (targets[r] < 0) {
      probs->row(static_cast<Eigen::Index>(r)).setZero();
      continue;
    }
    require(static_cast<std::size_t>(targets[r]) < n, "softmax_cross_entropy: target out of range");
    const auto row = view(lv).row(static_cast<Eigen::Index>(r));
    const double hi = row.maxCoeff();
    const double lse = hi + std::log((row.array() - hi).exp().sum());
    probs->row(static_cast<Eigen::Index>(r)) = (row.array() - lse).exp();
    total += lse - row(targets[r]);
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  return tape.record(Tensor::scalar(total), {logits},
                     [probs, tgt = std::move(tgt)](const Tensor& g, std::span<Tensor* const> gi) {
                       const double s = g[0];
                       auto dst = view(*gi[0]);
                       dst += s * (*probs);
                       for (std::size_t r = 0; r < tgt.size(); ++r) {
                         if (tgt[r] >= 0) dst(static_cast<Eigen::Index>(r), tgt[r]) -= s;
                       }
                     });
}

Var dropout(Var x, double rate, std::uint64_t seed) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  Tape& tape = tape_of(x);
  Tensor mask(x.value().shape());
  Rng rng(seed);
  const double keep = 1.0 - rate;
  for (auto& m : mask.values()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, tape.constant(std::move(mask)));
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return tape.record(Tensor::scalar(total), {a}, [](const Tensor& g, std::span<Tensor* const> gi) {
    for (auto& v : gi[0]->values()) v += g[0];
  });
}

Var squared_distance(Var a, const Tensor& anchor) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  require(av.shape() == anchor.shape(), "squared_distance: anchor shape " + shape_string(anchor.shape()) +
                                             " differs from " + shape_string(av.shape()));
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - anchor[i];
    total += d * d;
  }
  return tape.record(Tensor::scalar(total), {a}, [&tape, a = a.id, anchor](const Tensor& g, std::span<Tensor* const> gi) {
    const Tensor& v = tape.value(a);
    for (std::size_t i = 0; i < v.size(); ++i) (*gi[0])[i] += 2.0 * g[0] * (v[i] - anchor[i]);
  });
}

}  // namespace ad
}  // namespace seqxfer
