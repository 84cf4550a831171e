#include "pathtree/tape.hpp"

#include <cmath>

namespace pathtree {

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
  Entry e;
  e.grad = Tensor(value.rows(), value.cols());
  e.value = std::move(value);
  e.back = std::move(back);
  entries_.push_back(std::move(e));
  return Var{static_cast<int>(entries_.size()) - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value), {}); }

Var Tape::parameter(Parameter& p) {
  Var v = push(p.value, {});
  entries_[v.id].bound = &p;
  return v;
}

Var Tape::add(Var a, Var b) {
  Tensor out = pathtree::add(value(a), value(b));
  return push(std::move(out), [a, b, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  Tensor out = pathtree::sub(value(a), value(b));
  return push(std::move(out), [a, b, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

Var Tape::mul(Var a, Var b) {
  Tensor out = hadamard(value(a), value(b));
  return push(std::move(out), [a, b, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = pathtree::scale(value(a), c);
  return push(std::move(out), [a, c, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var Tape::add_scalar(Var a, double c) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = pathtree::matmul(value(a), value(b));
  return push(std::move(out), [a, b, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    // dA += g * B^T ; dB += A^T * g
    Tensor da = pathtree::matmul(g, pathtree::transpose(vb));
    Tensor db = pathtree::matmul(pathtree::transpose(va), g);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < da.size(); ++i) ga[i] += da[i];
    for (std::size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
  });
}

Var Tape::transpose(Var a) {
  Tensor out = pathtree::transpose(value(a));
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    Tensor gt = pathtree::transpose(t.entries_[self].grad);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < gt.size(); ++i) ga[i] += gt[i];
  });
}

Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (va[i] > 0.0) ga[i] += g[i];
    }
  });
}

Var Tape::leaky_relu(Var a, double slope) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) out[i] *= slope;
  }
  return push(std::move(out), [a, slope, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (va[i] > 0.0 ? 1.0 : slope) * g[i];
  });
}

Var Tape::tanh(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& y = t.entries_[self].value;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (1.0 - y[i] * y[i]) * g[i];
  });
}

Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = out[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& y = t.entries_[self].value;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (1.0 - y[i]) * g[i];
  });
}

Var Tape::log(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
  });
}

Var Tape::sqrt(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& y = t.entries_[self].value;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > 0.0) ga[i] += g[i] / (2.0 * y[i]);
    }
  });
}

Var Tape::reciprocal(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / out[i];
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& y = t.entries_[self].value;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * y[i] * y[i];
  });
}

Var Tape::clamp_min(Var a, double lo) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] < lo ? lo : out[i];
  return push(std::move(out), [a, lo, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (va[i] >= lo) ga[i] += g[i];
    }
  });
}

Var Tape::softmax_rows(Var a) {
  Tensor out = pathtree::softmax_rows(value(a));
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& y = t.entries_[self].value;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) acc += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) {
        ga.at(i, j) += y.at(i, j) * (g.at(i, j) - acc);
      }
    }
  });
}

Var Tape::sum_all(Var a) {
  double s = 0.0;
  const Tensor& va = value(a);
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
  return push(Tensor::scalar(s), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const double g = t.entries_[self].grad[0];
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var Tape::mean_rows(Var a) {
  const Tensor& va = value(a);
  if (va.rows() == 0) fail(ErrorCode::EmptyInput, "mean over zero rows");
  Tensor out(1, va.cols());
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = 0; j < va.cols(); ++j) out[j] += va.at(i, j);
  const double inv = 1.0 / static_cast<double>(va.rows());
  for (std::size_t j = 0; j < va.cols(); ++j) out[j] *= inv;
  return push(std::move(out), [a, inv, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += inv * g[j];
  });
}

Var Tape::row_sums(Var a) {
  const Tensor& va = value(a);
  Tensor out(va.rows(), 1);
  for (std::size_t i = 0; i < va.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < va.cols(); ++j) s += va.at(i, j);
    out[i] = s;
  }
  return push(std::move(out), [a, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += g[i];
  });
}

Var Tape::max_all(Var a) {
  const Tensor& va = value(a);
  if (va.empty()) fail(ErrorCode::EmptyInput, "max of empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < va.size(); ++i) {
    if (va[i] > va[arg]) arg = i;
  }
  return push(Tensor::scalar(va[arg]), [a, arg, self = static_cast<int>(entries_.size())](Tape& t) {
    t.grad_ref(a)[arg] += t.entries_[self].grad[0];
  });
}

Var Tape::slice_row(Var a, std::size_t r) {
  if (r >= value(a).rows()) fail(ErrorCode::ShapeMismatch, "slice_row out of range");
  Tensor out = value(a).slice_row(r);
  return push(std::move(out), [a, r, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    Tensor& ga = t.grad_ref(a);
    for (std::size_t j = 0; j < g.cols(); ++j) ga.at(r, j) += g[j];
  });
}

Var Tape::pick(Var a, std::size_t r, std::size_t c) {
  if (r >= value(a).rows() || c >= value(a).cols()) {
    fail(ErrorCode::ShapeMismatch, "pick out of range");
  }
  return push(Tensor::scalar(value(a).at(r, c)),
              [a, r, c, self = static_cast<int>(entries_.size())](Tape& t) {
                t.grad_ref(a).at(r, c) += t.entries_[self].grad[0];
              });
}

Var Tape::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) fail(ErrorCode::EmptyInput, "stack of zero rows");
  const std::size_t cols = value(rows[0]).cols();
  Tensor out(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& r = value(rows[i]);
    if (r.rows() != 1 || r.cols() != cols) fail(ErrorCode::ShapeMismatch, "stack_rows");
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = r[j];
  }
  std::vector<Var> srcs(rows.begin(), rows.end());
  return push(std::move(out),
              [srcs = std::move(srcs), self = static_cast<int>(entries_.size())](Tape& t) {
                const Tensor& g = t.entries_[self].grad;
                for (std::size_t i = 0; i < srcs.size(); ++i) {
                  Tensor& ga = t.grad_ref(srcs[i]);
                  for (std::size_t j = 0; j < g.cols(); ++j) ga[j] += g.at(i, j);
                }
              });
}

Var Tape::dot(Var a, Var b) {
  const double s = pathtree::dot(value(a), value(b));
  return push(Tensor::scalar(s), [a, b, self = static_cast<int>(entries_.size())](Tape& t) {
    const double g = t.entries_[self].grad[0];
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad_ref(a);
    Tensor& gb = t.grad_ref(b);
    for (std::size_t i = 0; i < va.size(); ++i) {
      ga[i] += g * vb[i];
      gb[i] += g * va[i];
    }
  });
}

Var Tape::scale_by(Var a, Var s) {
  const double sv = value(s).scalar_value();
  Tensor out = pathtree::scale(value(a), sv);
  return push(std::move(out), [a, s, sv, self = static_cast<int>(entries_.size())](Tape& t) {
    const Tensor& g = t.entries_[self].grad;
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_ref(a);
    double gs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += sv * g[i];
      gs += g[i] * va[i];
    }
    t.grad_ref(s)[0] += gs;
  });
}

void Tape::backward(Var root) {
  if (!root.valid()) fail(ErrorCode::ShapeMismatch, "backward on invalid var");
  Entry& r = entries_[root.id];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    fail(ErrorCode::ShapeMismatch, "backward root must be scalar");
  }
  r.grad[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    if (entries_[i].back) entries_[i].back(*this);
  }
  for (Entry& e : entries_) {
    if (e.bound != nullptr) {
      for (std::size_t i = 0; i < e.grad.size(); ++i) e.bound->grad[i] += e.grad[i];
    }
  }
}

}  // namespace pathtree
