#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pathtree/optim.hpp"
#include "pathtree/tensor.hpp"

namespace pathtree {

class Tape;

// Handle to a tape entry. Cheap to copy; valid for the tape's lifetime.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Eager reverse-mode tape over dense matrices. Every operation computes its
// value immediately and records a closure that routes the adjoint to its
// inputs. backward() walks entries in reverse creation order (creation order
// is topological) and finally adds leaf adjoints into bound Parameter grads.
class Tape {
 public:
  Var constant(Tensor value);
  Var parameter(Parameter& p);  // leaf bound to p; backward() accumulates into p.grad

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var matmul(Var a, Var b);
  Var transpose(Var a);

  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var tanh(Var a);
  Var sigmoid(Var a);  // numerically stable in both tails
  Var log(Var a);
  Var sqrt(Var a);     // adjoint 0 at 0 (subgradient choice)
  Var reciprocal(Var a);
  Var clamp_min(Var a, double lo);

  Var softmax_rows(Var a);
  Var sum_all(Var a);    // 1x1
  Var mean_rows(Var a);  // RxC -> 1xC
  Var row_sums(Var a);   // RxC -> Rx1
  Var max_all(Var a);    // 1x1; adjoint to the first argmax
  Var slice_row(Var a, std::size_t r);          // 1xC
  Var pick(Var a, std::size_t r, std::size_t c);  // 1x1
  Var stack_rows(std::span<const Var> rows);    // each 1xC -> NxC
  Var dot(Var a, Var b);                        // flat dot -> 1x1
  Var scale_by(Var a, Var s);                   // s is 1x1, broadcast multiply

  const Tensor& value(Var v) const { return entries_[v.id].value; }
  const Tensor& grad(Var v) const { return entries_[v.id].grad; }

  // Seeds d(root)=1 (root must be 1x1) and propagates. Parameter grads
  // accumulate; call zero_grad on parameters between steps.
  void backward(Var root);

  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;  // empty for leaves/constants
    Parameter* bound = nullptr;
  };

  Var push(Tensor value, std::function<void(Tape&)> back);
  Tensor& grad_ref(Var v) { return entries_[v.id].grad; }

  std::vector<Entry> entries_;
};

}  // namespace pathtree
