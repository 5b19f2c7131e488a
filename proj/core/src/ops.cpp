// SPDX-License-Identifier: Apache-2.0
#include "nmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace nmt {

namespace {

using Args = Tape::BackwardArgs;

Tape& tape_of(Expr a) { return a.tape(); }

void add_into(Tensor* dst, const Tensor& src) {
  if (dst) axpy(1.0f, src, *dst);
}

std::string shapes(const char* op, const Tensor& a, const Tensor& b) {
  return std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
         to_string(b.shape());
}

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  return a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.size();
}

Tensor outer(const Tensor& u, const Tensor& v) {
  Tensor o({u.size(), v.size()});
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) o(i, j) = u[i] * v[j];
  return o;
}

Expr elementwise(std::string_view name, Expr a, float (*f)(float),
                 float (*df)(float x, float y)) {
  return tape_of(a).record(
      name, {a},
      [f](Tape::Inputs in) {
        Tensor y = *in[0];
        for (auto& v : y) v = f(v);
        return y;
      },
      [df](const Args& args) {
        if (!args.input_grads[0]) return;
        Tensor& gx = *args.input_grads[0];
        const Tensor& x = *args.inputs[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += args.grad[i] * df(x[i], args.value[i]);
      });
}

}  // namespace

// Linear algebra ----------------------------------------------------------------

Expr matmul(Expr a, Expr b) {
  if (a.shape().size() == 2 && a.shape()[1] != b.shape()[0]) {
    throw ShapeError(shapes("matmul", a.value(), b.value()));
  }
  return tape_of(a).record(
      "matmul", {a, b}, [](Tape::Inputs in) { return nmt::matmul(*in[0], *in[1]); },
      [](const Args& args) {
        const Tensor& a = *args.inputs[0];
        const Tensor& b = *args.inputs[1];
        const Tensor& g = args.grad;
        if (a.rank() == 2 && b.rank() == 2) {
          add_into(args.input_grads[0], nmt::matmul_nt(g, b));
          add_into(args.input_grads[1], nmt::matmul_tn(a, g));
        } else if (a.rank() == 2) {  // [m×k]·[k]
          add_into(args.input_grads[0], outer(g, b));
          add_into(args.input_grads[1], nmt::matmul(g, a));
        } else {  // [k]·[k×n]
          add_into(args.input_grads[0], nmt::matmul(b, g));
          add_into(args.input_grads[1], outer(a, g));
        }
      });
}

Expr matmul_nt(Expr a, Expr b) {
  return tape_of(a).record(
      "matmul_nt", {a, b}, [](Tape::Inputs in) { return nmt::matmul_nt(*in[0], *in[1]); },
      [](const Args& args) {
        add_into(args.input_grads[0], nmt::matmul(args.grad, *args.inputs[1]));
        add_into(args.input_grads[1], nmt::matmul_tn(args.grad, *args.inputs[0]));
      });
}

Expr transpose(Expr a) {
  return tape_of(a).record(
      "transpose", {a}, [](Tape::Inputs in) { return nmt::transpose(*in[0]); },
      [](const Args& args) {
        if (!args.input_grads[0]) return;
        Tensor gt = nmt::transpose(args.grad);
        add_into(args.input_grads[0], gt.reshaped(args.inputs[0]->shape()));
      });
}

Expr linear(Expr x, Expr w, Expr b) {
  Expr y = x.shape().size() == 1 ? matmul(w, x) : matmul_nt(x, w);
  return b.valid() ? add(y, b) : y;
}

// Elementwise ---------------------------------------------------------------------

Expr add(Expr a, Expr b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (same_shape(av, bv)) {
    return tape_of(a).record(
        "add", {a, b}, [](Tape::Inputs in) { return nmt::add(*in[0], *in[1]); },
        [](const Args& args) {
          add_into(args.input_grads[0], args.grad);
          add_into(args.input_grads[1], args.grad);
        });
  }
  if (!is_row_broadcast(av, bv)) throw ShapeError(shapes("add", av, bv));
  return tape_of(a).record(
      "add_bias", {a, b},
      [](Tape::Inputs in) {
        Tensor y = *in[0];
        const Tensor& bias = *in[1];
        for (std::size_t r = 0; r < y.rows(); ++r) {
          auto row = y.row(r);
          for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
        }
        return y;
      },
      [](const Args& args) {
        add_into(args.input_grads[0], args.grad);
        if (Tensor* gb = args.input_grads[1]) {
          for (std::size_t r = 0; r < args.grad.rows(); ++r) {
            auto row = args.grad.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) (*gb)[c] += row[c];
          }
        }
      });
}

Expr sub(Expr a, Expr b) {
  require_same_shape(a.value(), b.value(), "sub");
  return tape_of(a).record(
      "sub", {a, b}, [](Tape::Inputs in) { return nmt::sub(*in[0], *in[1]); },
      [](const Args& args) {
        add_into(args.input_grads[0], args.grad);
        if (args.input_grads[1]) axpy(-1.0f, args.grad, *args.input_grads[1]);
      });
}

Expr mul(Expr a, Expr b) {
  require_same_shape(a.value(), b.value(), "mul");
  return tape_of(a).record(
      "mul", {a, b}, [](Tape::Inputs in) { return nmt::mul(*in[0], *in[1]); },
      [](const Args& args) {
        add_into(args.input_grads[0], nmt::mul(args.grad, *args.inputs[1]));
        add_into(args.input_grads[1], nmt::mul(args.grad, *args.inputs[0]));
      });
}

Expr div(Expr a, Expr b) {
  require_same_shape(a.value(), b.value(), "div");
  return tape_of(a).record(
      "div", {a, b},
      [](Tape::Inputs in) {
        Tensor y = *in[0];
        for (std::size_t i = 0; i < y.size(); ++i) y[i] /= (*in[1])[i];
        return y;
      },
      [](const Args& args) {
        const Tensor& a = *args.inputs[0];
        const Tensor& b = *args.inputs[1];
        for (std::size_t i = 0; i < a.size(); ++i) {
          if (args.input_grads[0]) (*args.input_grads[0])[i] += args.grad[i] / b[i];
          if (args.input_grads[1]) (*args.input_grads[1])[i] -= args.grad[i] * a[i] / (b[i] * b[i]);
        }
      });
}

Expr scale(Expr a, float factor) {
  return tape_of(a).record(
      "scale", {a}, [factor](Tape::Inputs in) { return nmt::scale(*in[0], factor); },
      [factor](const Args& args) {
        if (args.input_grads[0]) axpy(factor, args.grad, *args.input_grads[0]);
      });
}

Expr one_minus(Expr a) {
  return elementwise(
      "one_minus", a, [](float x) { return 1.0f - x; }, [](float, float) { return -1.0f; });
}

Expr square(Expr a) {
  return elementwise(
      "square", a, [](float x) { return x * x; }, [](float x, float) { return 2.0f * x; });
}

Expr exp(Expr a) {
  return elementwise(
      "exp", a, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

Expr log(Expr a) {
  return elementwise(
      "log", a, [](float x) { return std::log(std::max(x, kProbabilityFloor)); },
      [](float x, float) { return x > kProbabilityFloor ? 1.0f / x : 0.0f; });
}

Expr log_sigmoid(Expr a) {
  return elementwise(
      "log_sigmoid", a,
      [](float x) { return std::min(x, 0.0f) - std::log1p(std::exp(-std::fabs(x))); },
      [](float x, float) { return nmt::sigmoid(-x); });
}

Expr activate(Activation kind, Expr a) {
  switch (kind) {
    case Activation::kSigmoid: return sigmoid(a);
    case Activation::kTanh: return tanh(a);
    case Activation::kRelu: return relu(a);
    case Activation::kIdentity: return a;
  }
  return a;
}

Expr sigmoid(Expr a) {
  return elementwise(
      "sigmoid", a, [](float x) { return nmt::sigmoid(x); },
      [](float, float y) { return y * (1.0f - y); });
}

Expr tanh(Expr a) {
  return elementwise(
      "tanh", a, [](float x) { return std::tanh(x); }, [](float, float y) { return 1.0f - y * y; });
}

Expr relu(Expr a) {
  return elementwise(
      "relu", a, [](float x) { return std::max(0.0f, x); },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Expr stop_gradient(Expr a) {
  return tape_of(a).record(
      "stop_gradient", {a}, [](Tape::Inputs in) { return *in[0]; }, nullptr);
}

// Reductions and structure ----------------------------------------------------------

Expr sum(Expr a) {
  return tape_of(a).record(
      "sum", {a}, [](Tape::Inputs in) { return Tensor::scalar(static_cast<float>(nmt::sum(*in[0]))); },
      [](const Args& args) {
        if (!args.input_grads[0]) return;
        const float g = args.grad[0];
        for (auto& v : *args.input_grads[0]) v += g;
      });
}

Expr add_n(const std::vector<Expr>& terms) {
  if (terms.empty()) throw ShapeError("add_n of no terms");
  if (terms.size() == 1) return terms.front();
  for (const auto& t : terms) require_same_shape(terms.front().value(), t.value(), "add_n");
  return tape_of(terms.front())
      .record(
          "add_n", terms,
          [](Tape::Inputs in) {
            std::vector<double> acc(in[0]->size(), 0.0);
            for (const Tensor* t : in)
              for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (*t)[i];
            Tensor y(in[0]->shape());
            for (std::size_t i = 0; i < acc.size(); ++i) y[i] = static_cast<float>(acc[i]);
            return y;
          },
          [](const Args& args) {
            for (Tensor* g : args.input_grads) add_into(g, args.grad);
          });
}

Expr row_dot(Expr a, Expr b) {
  require_same_shape(a.value(), b.value(), "row_dot");
  return tape_of(a).record(
      "row_dot", {a, b},
      [](Tape::Inputs in) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        Tensor out({x.rows()});
        for (std::size_t r = 0; r < x.rows(); ++r) {
          double acc = 0.0;
          auto xr = x.row(r);
          auto yr = y.row(r);
          for (std::size_t c = 0; c < xr.size(); ++c) acc += static_cast<double>(xr[c]) * yr[c];
          out[r] = static_cast<float>(acc);
        }
        return out;
      },
      [](const Args& args) {
        const Tensor& x = *args.inputs[0];
        const Tensor& y = *args.inputs[1];
        const std::size_t n = x.cols();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const float g = args.grad[r];
          for (std::size_t c = 0; c < n; ++c) {
            if (args.input_grads[0]) (*args.input_grads[0])[r * n + c] += g * y[r * n + c];
            if (args.input_grads[1]) (*args.input_grads[1])[r * n + c] += g * x[r * n + c];
          }
        }
      });
}

Expr concat(const std::vector<Expr>& parts) {
  if (parts.empty()) throw ShapeError("concat of no parts");
  if (parts.size() == 1) return parts.front();
  const auto& first = parts.front().value();
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (v.rank() != first.rank() || v.rows() != first.rows()) throw ShapeError(shapes("concat", first, v));
  }
  return tape_of(parts.front())
      .record(
          "concat", parts,
          [](Tape::Inputs in) {
            std::size_t total = 0;
            for (const Tensor* t : in) total += t->cols();
            const std::size_t rows = in[0]->rows();
            Tensor out(in[0]->rank() == 1 ? Shape{total} : Shape{rows, total});
            for (std::size_t r = 0; r < rows; ++r) {
              std::size_t offset = 0;
              for (const Tensor* t : in) {
                auto src = t->row(r);
                std::copy(src.begin(), src.end(), out.row(r).begin() + offset);
                offset += src.size();
              }
            }
            return out;
          },
          [](const Args& args) {
            const std::size_t rows = args.grad.rows();
            for (std::size_t r = 0; r < rows; ++r) {
              std::size_t offset = 0;
              auto g = args.grad.row(r);
              for (std::size_t k = 0; k < args.inputs.size(); ++k) {
                const std::size_t n = args.inputs[k]->cols();
                if (Tensor* gi = args.input_grads[k]) {
                  auto dst = gi->row(r);
                  for (std::size_t c = 0; c < n; ++c) dst[c] += g[offset + c];
                }
                offset += n;
              }
            }
          });
}

Expr column(Expr a, std::size_t j) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || j >= av.cols()) throw RangeError("column " + std::to_string(j) + " of " + to_string(av.shape()));
  return tape_of(a).record(
      "column", {a},
      [j](Tape::Inputs in) {
        const Tensor& x = *in[0];
        Tensor out({x.rows()});
        for (std::size_t r = 0; r < x.rows(); ++r) out[r] = x(r, j);
        return out;
      },
      [j](const Args& args) {
        if (Tensor* g = args.input_grads[0])
          for (std::size_t r = 0; r < g->rows(); ++r) (*g)(r, j) += args.grad[r];
      });
}

Expr element(Expr a, std::size_t k) {
  if (k >= a.value().size()) throw RangeError("element " + std::to_string(k) + " out of range");
  return tape_of(a).record(
      "element", {a}, [k](Tape::Inputs in) { return Tensor::scalar((*in[0])[k]); },
      [k](const Args& args) {
        if (Tensor* g = args.input_grads[0]) (*g)[k] += args.grad[0];
      });
}

Expr stack_columns(const std::vector<Expr>& columns) {
  if (columns.empty()) throw ShapeError("stack_columns of nothing");
  for (const auto& c : columns) {
    if (c.value().rank() != 1 || c.value().size() != columns.front().value().size()) {
      throw ShapeError(shapes("stack_columns", columns.front().value(), c.value()));
    }
  }
  return tape_of(columns.front())
      .record(
          "stack_columns", columns,
          [](Tape::Inputs in) {
            const std::size_t rows = in[0]->size();
            Tensor out({rows, in.size()});
            for (std::size_t j = 0; j < in.size(); ++j)
              for (std::size_t r = 0; r < rows; ++r) out(r, j) = (*in[j])[r];
            return out;
          },
          [](const Args& args) {
            for (std::size_t j = 0; j < args.inputs.size(); ++j) {
              if (Tensor* g = args.input_grads[j])
                for (std::size_t r = 0; r < g->size(); ++r) (*g)[r] += args.grad(r, j);
            }
          });
}

Expr stack_rows(const std::vector<Expr>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows of nothing");
  const std::size_t n = rows.front().value().size();
  for (const auto& r : rows) {
    if (r.value().size() != n || r.value().rows() != 1) throw ShapeError(shapes("stack_rows", rows.front().value(), r.value()));
  }
  return tape_of(rows.front())
      .record(
          "stack_rows", rows,
          [n](Tape::Inputs in) {
            Tensor out({in.size(), n});
            for (std::size_t t = 0; t < in.size(); ++t) std::copy(in[t]->begin(), in[t]->end(), out.row(t).begin());
            return out;
          },
          [n](const Args& args) {
            for (std::size_t t = 0; t < args.inputs.size(); ++t) {
              if (Tensor* g = args.input_grads[t]) {
                auto src = args.grad.row(t);
                for (std::size_t c = 0; c < n; ++c) (*g)[c] += src[c];
              }
            }
          });
}

Expr row(Expr a, std::size_t r) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || r >= av.rows()) throw RangeError("row " + std::to_string(r) + " of " + to_string(av.shape()));
  return tape_of(a).record(
      "row", {a},
      [r](Tape::Inputs in) {
        auto src = in[0]->row(r);
        return Tensor({src.size()}, std::vector<float>(src.begin(), src.end()));
      },
      [r](const Args& args) {
        if (Tensor* g = args.input_grads[0]) {
          auto dst = g->row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += args.grad[c];
        }
      });
}

Expr scale_rows(Expr a, Expr v) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || v.value().rank() != 1 || v.value().size() != av.rows()) {
    throw ShapeError(shapes("scale_rows", av, v.value()));
  }
  return tape_of(a).record(
      "scale_rows", {a, v},
      [](Tape::Inputs in) {
        Tensor y = *in[0];
        for (std::size_t r = 0; r < y.rows(); ++r)
          for (auto& x : y.row(r)) x *= (*in[1])[r];
        return y;
      },
      [](const Args& args) {
        const Tensor& a = *args.inputs[0];
        const Tensor& v = *args.inputs[1];
        for (std::size_t r = 0; r < a.rows(); ++r) {
          auto g = args.grad.row(r);
          auto ar = a.row(r);
          if (Tensor* ga = args.input_grads[0]) {
            auto dst = ga->row(r);
            for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c] * v[r];
          }
          if (Tensor* gv = args.input_grads[1]) {
            double acc = 0.0;
            for (std::size_t c = 0; c < g.size(); ++c) acc += static_cast<double>(g[c]) * ar[c];
            (*gv)[r] += static_cast<float>(acc);
          }
        }
      });
}

Expr blend_rows(Expr fresh, Expr old, const std::vector<float>& mask) {
  require_same_shape(fresh.value(), old.value(), "blend_rows");
  if (mask.size() != fresh.value().rows()) throw ShapeError("blend_rows: mask length does not match rows");
  if (std::all_of(mask.begin(), mask.end(), [](float m) { return m != 0.0f; })) return fresh;
  return tape_of(fresh).record(
      "blend_rows", {fresh, old},
      [mask](Tape::Inputs in) {
        Tensor y = *in[0];
        for (std::size_t r = 0; r < y.rows(); ++r) {
          if (mask[r] == 0.0f) {
            auto src = in[1]->row(r);
            std::copy(src.begin(), src.end(), y.row(r).begin());
          }
        }
        return y;
      },
      [mask](const Args& args) {
        for (std::size_t r = 0; r < args.grad.rows(); ++r) {
          Tensor* dst = args.input_grads[mask[r] != 0.0f ? 0 : 1];
          if (!dst) continue;
          auto g = args.grad.row(r);
          auto d = dst->row(r);
          for (std::size_t c = 0; c < g.size(); ++c) d[c] += g[c];
        }
      });
}

Expr pick(Expr a, const std::vector<int>& ids) {
  const Tensor& av = a.value();
  if (ids.size() != av.rows()) throw ShapeError("pick: id count does not match rows");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= av.cols()) throw RangeError("pick: id " + std::to_string(id) + " out of range");
  }
  return tape_of(a).record(
      "pick", {a},
      [ids](Tape::Inputs in) {
        Tensor out({ids.size()});
        for (std::size_t r = 0; r < ids.size(); ++r) out[r] = in[0]->row(r)[ids[r]];
        return out;
      },
      [ids](const Args& args) {
        if (Tensor* g = args.input_grads[0])
          for (std::size_t r = 0; r < ids.size(); ++r) g->row(r)[ids[r]] += args.grad[r];
      });
}

Expr lookup(Expr table, const std::vector<int>& ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("lookup: table must be a matrix");
  if (ids.empty()) throw ShapeError("lookup: no ids");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tv.rows()) {
      throw RangeError("lookup: id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tv.rows()));
    }
  }
  return tape_of(table).record(
      "lookup", {table},
      [ids](Tape::Inputs in) {
        const std::size_t d = in[0]->cols();
        Tensor out({ids.size(), d});
        for (std::size_t r = 0; r < ids.size(); ++r) {
          auto src = in[0]->row(ids[r]);
          std::copy(src.begin(), src.end(), out.row(r).begin());
        }
        return out;
      },
      [ids](const Args& args) {
        if (Tensor* g = args.input_grads[0]) {
          for (std::size_t r = 0; r < ids.size(); ++r) {
            auto src = args.grad.row(r);
            auto dst = g->row(ids[r]);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
          }
        }
      });
}

// Normalisation ---------------------------------------------------------------------

namespace {

void softmax_backward(const Args& args) {
  Tensor* gx = args.input_grads[0];
  if (!gx) return;
  const Tensor& y = args.value;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto gr = args.grad.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < yr.size(); ++c) s += static_cast<double>(gr[c]) * yr[c];
    auto dst = gx->row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) dst[c] += static_cast<float>(yr[c] * (gr[c] - s));
  }
}

}  // namespace

Expr softmax(Expr a) {
  return tape_of(a).record(
      "softmax", {a}, [](Tape::Inputs in) { return nmt::softmax(*in[0]); }, softmax_backward);
}

Expr masked_softmax(Expr a, const Tensor& mask) {
  require_same_shape(a.value(), mask, "masked_softmax");
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    auto m = mask.row(r);
    if (std::all_of(m.begin(), m.end(), [](float v) { return v == 0.0f; })) {
      throw ShapeError("masked_softmax: row " + std::to_string(r) + " is fully masked");
    }
  }
  return tape_of(a).record(
      "masked_softmax", {a},
      [mask](Tape::Inputs in) {
        Tensor p = *in[0];
        for (std::size_t r = 0; r < p.rows(); ++r) {
          auto row = p.row(r);
          auto m = mask.row(r);
          float mx = -std::numeric_limits<float>::infinity();
          for (std::size_t c = 0; c < row.size(); ++c)
            if (m[c] != 0.0f) mx = std::max(mx, row[c]);
          double z = 0.0;
          for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = m[c] != 0.0f ? std::exp(row[c] - mx) : 0.0f;
            z += row[c];
          }
          for (auto& x : row) x = static_cast<float>(x / z);
        }
        return p;
      },
      softmax_backward);
}

Expr log_sum_exp(Expr a) {
  return tape_of(a).record(
      "log_sum_exp", {a}, [](Tape::Inputs in) { return nmt::log_sum_exp(*in[0]); },
      [](const Args& args) {
        Tensor* gx = args.input_grads[0];
        if (!gx) return;
        Tensor p = nmt::softmax(*args.inputs[0]);
        for (std::size_t r = 0; r < p.rows(); ++r) {
          auto pr = p.row(r);
          auto dst = gx->row(r);
          for (std::size_t c = 0; c < pr.size(); ++c) dst[c] += args.grad[r] * pr[c];
        }
      });
}

Expr layer_norm(Expr s, Expr gain, Expr bias) {
  (void)nmt::layer_norm(s.value(), gain.value(), bias.value());  // shape validation
  return tape_of(s).record(
      "layer_norm", {s, gain, bias},
      [](Tape::Inputs in) { return nmt::layer_norm(*in[0], *in[1], *in[2]); },
      [](const Args& args) {
        const Tensor& s = *args.inputs[0];
        const Tensor& g = *args.inputs[1];
        const std::size_t h = s.cols();
        std::vector<double> centred(h), d(h);
        for (std::size_t r = 0; r < s.rows(); ++r) {
          auto sr = s.row(r);
          auto gy = args.grad.row(r);
          double mean = 0.0;
          for (float x : sr) mean += x;
          mean /= static_cast<double>(h);
          double var = 0.0;
          for (std::size_t i = 0; i < h; ++i) {
            centred[i] = sr[i] - mean;
            var += centred[i] * centred[i];
          }
          const double sigma = std::sqrt(var / static_cast<double>(h));
          const double denom = sigma + kLayerNormEpsilon;
          double mean_d = 0.0;
          double dot_dc = 0.0;
          for (std::size_t i = 0; i < h; ++i) {
            d[i] = static_cast<double>(gy[i]) * g[i];
            mean_d += d[i];
            dot_dc += d[i] * centred[i];
          }
          mean_d /= static_cast<double>(h);
          if (Tensor* gs = args.input_grads[0]) {
            auto dst = gs->row(r);
            const double coef = sigma > 0.0 ? dot_dc / (static_cast<double>(h) * sigma * denom * denom) : 0.0;
            for (std::size_t i = 0; i < h; ++i) {
              dst[i] += static_cast<float>((d[i] - mean_d) / denom - coef * centred[i]);
            }
          }
          if (Tensor* gg = args.input_grads[1])
            for (std::size_t i = 0; i < h; ++i) (*gg)[i] += static_cast<float>(gy[i] * centred[i] / denom);
          if (Tensor* gb = args.input_grads[2])
            for (std::size_t i = 0; i < h; ++i) (*gb)[i] += gy[i];
        }
      });
}

// Losses ----------------------------------------------------------------------------

Expr l2_loss(Expr y, Expr t) {
  require_same_shape(y.value(), t.value(), "l2_loss");
  return tape_of(y).record(
      "l2_loss", {y, t},
      [](Tape::Inputs in) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          const double diff = static_cast<double>((*in[1])[i]) - (*in[0])[i];
          acc += 0.5 * diff * diff;
        }
        return Tensor::scalar(static_cast<float>(acc));
      },
      [](const Args& args) {
        const Tensor& y = *args.inputs[0];
        const Tensor& t = *args.inputs[1];
        const float g = args.grad[0];
        for (std::size_t i = 0; i < y.size(); ++i) {
          if (args.input_grads[0]) (*args.input_grads[0])[i] += g * (y[i] - t[i]);
          if (args.input_grads[1]) (*args.input_grads[1])[i] += g * (t[i] - y[i]);
        }
      });
}

Expr nll_loss(Expr p, int k) {
  const Tensor& pv = p.value();
  if (pv.rows() != 1) throw ShapeError("nll_loss expects a single distribution, got " + to_string(pv.shape()));
  if (k < 0 || static_cast<std::size_t>(k) >= pv.size()) {
    throw RangeError("nll_loss: id " + std::to_string(k) + " outside vocabulary of " + std::to_string(pv.size()));
  }
  return nll_rows(p, {k}, {1.0f});
}

Expr nll_rows(Expr p, const std::vector<int>& ids, const std::vector<float>& weights) {
  const Tensor& pv = p.value();
  if (ids.size() != pv.rows() || weights.size() != ids.size()) throw ShapeError("nll_rows: id/weight count does not match rows");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= pv.cols()) throw RangeError("nll_rows: id " + std::to_string(id) + " out of range");
  }
  return tape_of(p).record(
      "nll", {p},
      [ids, weights](Tape::Inputs in) {
        double acc = 0.0;
        for (std::size_t r = 0; r < ids.size(); ++r) {
          if (weights[r] == 0.0f) continue;
          const float pk = std::max(in[0]->row(r)[ids[r]], kProbabilityFloor);
          acc -= weights[r] * std::log(static_cast<double>(pk));
        }
        return Tensor::scalar(static_cast<float>(acc));
      },
      [ids, weights](const Args& args) {
        Tensor* gp = args.input_grads[0];
        if (!gp) return;
        for (std::size_t r = 0; r < ids.size(); ++r) {
          if (weights[r] == 0.0f) continue;
          const float pk = args.inputs[0]->row(r)[ids[r]];
          if (pk > kProbabilityFloor) gp->row(r)[ids[r]] -= args.grad[0] * weights[r] / pk;
        }
      });
}

// Attention kernels ---------------------------------------------------------------------

Expr additive_scores(Expr query, const std::vector<Expr>& keys, Expr v, Expr coverage,
                     Expr coverage_weight) {
  if (keys.empty()) throw ShapeError("additive_scores: no keys");
  const Tensor& q = query.value();
  if (q.rank() != 2 || v.value().rank() != 1 || v.value().size() != q.cols()) {
    throw ShapeError(shapes("additive_scores", q, v.value()));
  }
  for (const auto& k : keys) require_same_shape(q, k.value(), "additive_scores key");
  const bool with_coverage = coverage.valid();
  const std::size_t j_count = keys.size();
  if (with_coverage) {
    if (coverage.value().rank() != 2 || coverage.value().rows() != q.rows() || coverage.value().cols() != j_count ||
        coverage_weight.value().size() != q.cols()) {
      throw ShapeError(shapes("additive_scores coverage", coverage.value(), q));
    }
  }
  std::vector<Expr> inputs{query, v};
  inputs.insert(inputs.end(), keys.begin(), keys.end());
  if (with_coverage) {
    inputs.push_back(coverage);
    inputs.push_back(coverage_weight);
  }

  // z(b,j,:) = q_b + k_j,b + cov_bj·cw, recomputed in both passes.
  auto pre_activation = [j_count, with_coverage](Tape::Inputs in, std::size_t b, std::size_t j, std::vector<float>& z) {
    const std::size_t a = in[0]->cols();
    auto qb = in[0]->row(b);
    auto kb = in[2 + j]->row(b);
    for (std::size_t c = 0; c < a; ++c) z[c] = qb[c] + kb[c];
    if (with_coverage) {
      const float cov = (*in[2 + j_count])(b, j);
      const Tensor& cw = *in[3 + j_count];
      for (std::size_t c = 0; c < a; ++c) z[c] += cov * cw[c];
    }
  };

  return tape_of(query).record(
      "additive_scores", std::move(inputs),
      [pre_activation, j_count](Tape::Inputs in) {
        const std::size_t batch = in[0]->rows();
        const std::size_t a = in[0]->cols();
        const Tensor& v = *in[1];
        Tensor out({batch, j_count});
        std::vector<float> z(a);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t j = 0; j < j_count; ++j) {
            pre_activation(in, b, j, z);
            double acc = 0.0;
            for (std::size_t c = 0; c < a; ++c) acc += static_cast<double>(v[c]) * std::tanh(z[c]);
            out(b, j) = static_cast<float>(acc);
          }
        }
        return out;
      },
      [pre_activation, j_count, with_coverage](const Args& args) {
        const std::size_t batch = args.inputs[0]->rows();
        const std::size_t a = args.inputs[0]->cols();
        const Tensor& v = *args.inputs[1];
        std::vector<float> z(a);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t j = 0; j < j_count; ++j) {
            const float g = args.grad(b, j);
            if (g == 0.0f) continue;
            pre_activation(args.inputs, b, j, z);
            double gcov = 0.0;
            for (std::size_t c = 0; c < a; ++c) {
              const float t = std::tanh(z[c]);
              const float dz = g * v[c] * (1.0f - t * t);
              if (Tensor* gq = args.input_grads[0]) (*gq)(b, c) += dz;
              if (Tensor* gv = args.input_grads[1]) (*gv)[c] += g * t;
              if (Tensor* gk = args.input_grads[2 + j]) (*gk)(b, c) += dz;
              if (with_coverage) {
                gcov += static_cast<double>(dz) * (*args.inputs[3 + j_count])[c];
                if (Tensor* gcw = args.input_grads[3 + j_count]) (*gcw)[c] += dz * (*args.inputs[2 + j_count])(b, j);
              }
            }
            if (with_coverage) {
              if (Tensor* gc = args.input_grads[2 + j_count]) (*gc)(b, j) += static_cast<float>(gcov);
            }
          }
        }
      });
}

Expr weighted_sum(Expr alpha, const std::vector<Expr>& values) {
  const Tensor& av = alpha.value();
  if (values.empty() || av.rank() != 2 || av.cols() != values.size()) {
    throw ShapeError("weighted_sum: attention width does not match the number of values");
  }
  for (const auto& v : values) {
    if (v.value().rank() != 2 || v.value().rows() != av.rows() || v.value().cols() != values.front().value().cols()) {
      throw ShapeError(shapes("weighted_sum", av, v.value()));
    }
  }
  std::vector<Expr> inputs{alpha};
  inputs.insert(inputs.end(), values.begin(), values.end());
  return tape_of(alpha).record(
      "weighted_sum", std::move(inputs),
      [](Tape::Inputs in) {
        const Tensor& alpha = *in[0];
        const std::size_t batch = alpha.rows();
        const std::size_t n = in[1]->cols();
        Tensor out({batch, n});
        std::vector<double> acc(n);
        for (std::size_t b = 0; b < batch; ++b) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t j = 0; j < alpha.cols(); ++j) {
            const double w = alpha(b, j);
            if (w == 0.0) continue;
            auto vr = in[1 + j]->row(b);
            for (std::size_t c = 0; c < n; ++c) acc[c] += w * vr[c];
          }
          for (std::size_t c = 0; c < n; ++c) out(b, c) = static_cast<float>(acc[c]);
        }
        return out;
      },
      [](const Args& args) {
        const Tensor& alpha = *args.inputs[0];
        const std::size_t batch = alpha.rows();
        const std::size_t n = args.inputs[1]->cols();
        for (std::size_t b = 0; b < batch; ++b) {
          auto g = args.grad.row(b);
          for (std::size_t j = 0; j < alpha.cols(); ++j) {
            auto vr = args.inputs[1 + j]->row(b);
            if (Tensor* ga = args.input_grads[0]) {
              double acc = 0.0;
              for (std::size_t c = 0; c < n; ++c) acc += static_cast<double>(g[c]) * vr[c];
              (*ga)(b, j) += static_cast<float>(acc);
            }
            if (Tensor* gv = args.input_grads[1 + j]) {
              auto dst = gv->row(b);
              const float w = alpha(b, j);
              for (std::size_t c = 0; c < n; ++c) dst[c] += w * g[c];
            }
          }
        }
      });
}

// Regularisation --------------------------------------------------------------------------

Expr dropout(Expr a, float rate, Rng& rng, bool training) {
  if (rate < 0.0f || rate >= 1.0f) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (!training || rate == 0.0f) return a;
  auto mask = std::make_shared<Tensor>(a.value().shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const float survivor = 1.0f / (1.0f - rate);
  for (auto& m : *mask) m = keep(rng) ? survivor : 0.0f;
  return tape_of(a).record(
      "dropout", {a}, [mask](Tape::Inputs in) { return nmt::mul(*in[0], *mask); },
      [mask](const Args& args) { add_into(args.input_grads[0], nmt::mul(args.grad, *mask)); });
}

}  // namespace nmt
