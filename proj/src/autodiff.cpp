#include "halo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "halo/kernels.hpp"

namespace halo::ad {

namespace {
bool g_track_smoothness = false;
double g_min_kink = 1e300;
double g_min_ln_sigma = 1e300;

inline void note_kink(double dist) {
  if (g_track_smoothness && dist < g_min_kink) g_min_kink = dist;
}
inline void note_ln_sigma(double sigma) {
  if (g_track_smoothness && sigma < g_min_ln_sigma) g_min_ln_sigma = sigma;
}
}  // namespace

void set_smoothness_tracking(bool on) {
  g_track_smoothness = on;
  g_min_kink = 1e300;
  g_min_ln_sigma = 1e300;
}
double min_kink_distance() { return g_min_kink; }
double min_layernorm_sigma() { return g_min_ln_sigma; }

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::add(const std::string& name, Tensor init) {
  require(find(name) < 0, Err::InvalidParameter, "ParamStore: duplicate name " + name);
  Entry e;
  e.name = name;
  e.grad = Tensor(init.dims());
  e.value = std::move(init);
  entries.push_back(std::move(e));
  return static_cast<int>(entries.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries) e.grad.fill(0.0);
}

// ---------------------------------------------------------------------------
// Tape basics

int Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Tensor v) { return {this, push(std::move(v), false)}; }

Var Tape::input(Tensor v) { return {this, push(std::move(v), true)}; }

Var Tape::param(int param_id) {
  require(params_ != nullptr, Err::InvalidParameter, "Tape has no ParamStore bound");
  int id = push(params_->at(param_id).value, true);
  nodes_[static_cast<size_t>(id)].param_id = param_id;
  return {this, id};
}

const Tensor& Tape::val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }

const Tensor& Tape::grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.dims());
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::accum(int id, const double* g, int64_t n) {
  if (!nodes_[static_cast<size_t>(id)].needs_grad) return;
  Tensor& dst = grad_buf(id);
  double* d = dst.data();
  for (int64_t i = 0; i < n; ++i) d[i] += g[i];
}

void Tape::backward(Var loss) {
  require(loss.valid() && loss.tape == this, Err::InvalidParameter, "backward: bad loss var");
  require(val(loss).size() == 1, Err::InvalidParameter, "backward: loss must be scalar");
  grad_buf(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.needs_grad || !n.grad_alloc || !n.back) continue;
    n.back(*this, i);
  }
  if (params_) {
    for (auto& n : nodes_) {
      if (n.param_id < 0 || !n.grad_alloc) continue;
      auto& e = params_->at(n.param_id);
      for (int64_t i = 0; i < n.grad.size(); ++i) e.grad[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// elementwise

Var Tape::add(Var a, Var b) {
  require(val(a).same_shape(val(b)), Err::ShapeMismatch, "add: shape mismatch");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  for (int64_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const int ia = a.id, ib = b.id;
  int id = push(std::move(y), tracked(a) || tracked(b), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    t.accum(ia, g.data(), g.size());
    t.accum(ib, g.data(), g.size());
  });
  return {this, id};
}

Var Tape::sub(Var a, Var b) {
  require(val(a).same_shape(val(b)), Err::ShapeMismatch, "sub: shape mismatch");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  for (int64_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const int ia = a.id, ib = b.id;
  int id = push(std::move(y), tracked(a) || tracked(b), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    t.accum(ia, g.data(), g.size());
    if (t.nodes_[static_cast<size_t>(ib)].needs_grad) {
      Tensor neg = g;
      for (int64_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
      t.accum(ib, neg.data(), neg.size());
    }
  });
  return {this, id};
}

Var Tape::mul(Var a, Var b) {
  require(val(a).same_shape(val(b)), Err::ShapeMismatch, "mul: shape mismatch");
  Tensor y = val(a);
  const Tensor& bv = val(b);
  for (int64_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const int ia = a.id, ib = b.id;
  int id = push(std::move(y), tracked(a) || tracked(b), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& av = t.nodes_[static_cast<size_t>(ia)].value;
    const Tensor& bv2 = t.nodes_[static_cast<size_t>(ib)].value;
    if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
      Tensor ga = g;
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] *= bv2[i];
      t.accum(ia, ga.data(), ga.size());
    }
    if (t.nodes_[static_cast<size_t>(ib)].needs_grad) {
      Tensor gb = g;
      for (int64_t i = 0; i < gb.size(); ++i) gb[i] *= av[i];
      t.accum(ib, gb.data(), gb.size());
    }
  });
  return {this, id};
}

Var Tape::scale(Var a, double s) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y[i] *= s;
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia, s](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    Tensor ga = g;
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] *= s;
    t.accum(ia, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::add_const(Var a, double s) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y[i] += s;
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    t.accum(ia, g.data(), g.size());
  });
  return {this, id};
}

Var Tape::relu(Var a) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) {
    note_kink(std::abs(y[i]));
    y[i] = std::max(0.0, y[i]);
  }
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& x = t.nodes_[static_cast<size_t>(ia)].value;
    Tensor ga = g;
    for (int64_t i = 0; i < ga.size(); ++i)
      if (x[i] <= 0.0) ga[i] = 0.0;
    t.accum(ia, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::sigmoid(Var a) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia](Tape& t, int self) {
    const Node& n = t.nodes_[static_cast<size_t>(self)];
    Tensor ga = n.grad;
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] *= n.value[i] * (1.0 - n.value[i]);
    t.accum(ia, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::tanh_(Var a) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia](Tape& t, int self) {
    const Node& n = t.nodes_[static_cast<size_t>(self)];
    Tensor ga = n.grad;
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] *= 1.0 - n.value[i] * n.value[i];
    t.accum(ia, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::scalar_mul(Var a, Var s) {
  require(val(s).size() == 1, Err::ShapeMismatch, "scalar_mul: s must have one element");
  const double sv = val(s)[0];
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y[i] *= sv;
  const int ia = a.id, is = s.id;
  int id = push(std::move(y), tracked(a) || tracked(s), [ia, is, sv](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& av = t.nodes_[static_cast<size_t>(ia)].value;
    if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
      Tensor ga = g;
      for (int64_t i = 0; i < ga.size(); ++i) ga[i] *= sv;
      t.accum(ia, ga.data(), ga.size());
    }
    if (t.nodes_[static_cast<size_t>(is)].needs_grad) {
      double gs = 0.0;
      for (int64_t i = 0; i < g.size(); ++i) gs += g[i] * av[i];
      t.accum(is, &gs, 1);
    }
  });
  return {this, id};
}

Var Tape::add_scalarvar(Var a, Var s) {
  require(val(s).size() == 1, Err::ShapeMismatch, "add_scalarvar: s must have one element");
  const double sv = val(s)[0];
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) y[i] += sv;
  const int ia = a.id, is = s.id;
  int id = push(std::move(y), tracked(a) || tracked(s), [ia, is](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    t.accum(ia, g.data(), g.size());
    if (t.nodes_[static_cast<size_t>(is)].needs_grad) {
      double gs = 0.0;
      for (int64_t i = 0; i < g.size(); ++i) gs += g[i];
      t.accum(is, &gs, 1);
    }
  });
  return {this, id};
}

// ---------------------------------------------------------------------------
// shape

Var Tape::reshape(Var a, std::vector<int> dims) {
  Tensor y = val(a).reshaped(dims);
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    t.accum(ia, g.data(), g.size());
  });
  return {this, id};
}

Var Tape::transpose(Var a) {
  const int m = val(a).dim(0), n = val(a).dim(1);
  Tensor y({n, m});
  kernels::transpose(val(a).data(), m, n, y.data());
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia, m, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    Tensor gt({m, n});
    kernels::transpose(g.data(), n, m, gt.data());
    t.accum(ia, gt.data(), gt.size());
  });
  return {this, id};
}

Var Tape::row(Var mat, int i) {
  const int n = val(mat).dim(1);
  Tensor y({n});
  std::memcpy(y.data(), val(mat).data() + static_cast<int64_t>(i) * n, sizeof(double) * n);
  const int im = mat.id;
  int id = push(std::move(y), tracked(mat), [im, i, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    if (!t.nodes_[static_cast<size_t>(im)].needs_grad) return;
    Tensor& gm = t.grad_buf(im);
    double* dst = gm.data() + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) dst[j] += g[j];
  });
  return {this, id};
}

Var Tape::concat(Var a, Var b) {
  const int64_t na = val(a).size(), nb = val(b).size();
  Tensor y({static_cast<int>(na + nb)});
  std::memcpy(y.data(), val(a).data(), sizeof(double) * na);
  std::memcpy(y.data() + na, val(b).data(), sizeof(double) * nb);
  const int ia = a.id, ib = b.id;
  int id = push(std::move(y), tracked(a) || tracked(b), [ia, ib, na, nb](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    t.accum(ia, g.data(), na);
    t.accum(ib, g.data() + na, nb);
  });
  return {this, id};
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), Err::InvalidParameter, "stack_rows: empty");
  const int n = static_cast<int>(val(rows[0]).size());
  Tensor y({static_cast<int>(rows.size()), n});
  bool track = false;
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    require(val(rows[i]).size() == n, Err::ShapeMismatch, "stack_rows: row size mismatch");
    std::memcpy(y.data() + static_cast<int64_t>(i) * n, val(rows[i]).data(), sizeof(double) * n);
    track = track || tracked(rows[i]);
    ids.push_back(rows[i].id);
  }
  int id = push(std::move(y), track, [ids, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    for (size_t i = 0; i < ids.size(); ++i)
      t.accum(ids[i], g.data() + static_cast<int64_t>(i) * n, n);
  });
  return {this, id};
}

// ---------------------------------------------------------------------------
// linear algebra

Var Tape::matmul(Var a, Var b) {
  const int m = val(a).dim(0), k = val(a).dim(1), n = val(b).dim(1);
  require(val(b).dim(0) == k, Err::ShapeMismatch, "matmul: inner dims differ");
  Tensor y({m, n});
  kernels::matmul(val(a).data(), m, k, val(b).data(), n, y.data());
  const int ia = a.id, ib = b.id;
  int id = push(std::move(y), tracked(a) || tracked(b), [ia, ib, m, k, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& av = t.nodes_[static_cast<size_t>(ia)].value;
    const Tensor& bv = t.nodes_[static_cast<size_t>(ib)].value;
    if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
      Tensor bt({n, k}), ga({m, k});
      kernels::transpose(bv.data(), k, n, bt.data());
      kernels::matmul(g.data(), m, n, bt.data(), k, ga.data());
      t.accum(ia, ga.data(), ga.size());
    }
    if (t.nodes_[static_cast<size_t>(ib)].needs_grad) {
      Tensor at({k, m}), gb({k, n});
      kernels::transpose(av.data(), m, k, at.data());
      kernels::matmul(at.data(), k, m, g.data(), n, gb.data());
      t.accum(ib, gb.data(), gb.size());
    }
  });
  return {this, id};
}

Var Tape::affine(Var x, Var w, Var b) {
  const int n = static_cast<int>(val(x).size());
  require(val(w).dim(0) == n, Err::ShapeMismatch, "affine: w rows != x size");
  const int m = val(w).dim(1);
  Tensor y({m});
  kernels::matmul(val(x).data(), 1, n, val(w).data(), m, y.data());
  if (b.valid())
    for (int j = 0; j < m; ++j) y[j] += val(b)[j];
  const int ix = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
  bool track = tracked(x) || tracked(w) || (b.valid() && tracked(b));
  int id = push(std::move(y), track, [ix, iw, ib, n, m](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& xv = t.nodes_[static_cast<size_t>(ix)].value;
    const Tensor& wv = t.nodes_[static_cast<size_t>(iw)].value;
    if (t.nodes_[static_cast<size_t>(ix)].needs_grad) {
      Tensor gx({n});
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* wrow = wv.data() + static_cast<int64_t>(i) * m;
        for (int j = 0; j < m; ++j) acc += wrow[j] * g[j];
        gx[i] = acc;
      }
      t.accum(ix, gx.data(), n);
    }
    if (t.nodes_[static_cast<size_t>(iw)].needs_grad) {
      Tensor& gw = t.grad_buf(iw);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gw[static_cast<int64_t>(i) * m + j] += xv[i] * g[j];
    }
    if (ib >= 0) t.accum(ib, g.data(), m);
  });
  return {this, id};
}

Var Tape::broadcast_add_row(Var mat, Var vec) {
  const int k = val(mat).dim(0), n = val(mat).dim(1);
  require(val(vec).size() == n, Err::ShapeMismatch, "broadcast_add_row: size mismatch");
  Tensor y = val(mat);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) y[static_cast<int64_t>(i) * n + j] += val(vec)[j];
  const int im = mat.id, iv = vec.id;
  int id = push(std::move(y), tracked(mat) || tracked(vec), [im, iv, k, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    t.accum(im, g.data(), g.size());
    if (t.nodes_[static_cast<size_t>(iv)].needs_grad) {
      Tensor gv({n});
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) gv[j] += g[static_cast<int64_t>(i) * n + j];
      t.accum(iv, gv.data(), n);
    }
  });
  return {this, id};
}

Var Tape::row_sums(Var a) {
  const int m = val(a).dim(0), n = val(a).dim(1);
  Tensor y({m});
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += val(a).at(i, j);
    y[i] = s;
  }
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia, m, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    if (!t.nodes_[static_cast<size_t>(ia)].needs_grad) return;
    Tensor& ga = t.grad_buf(ia);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga[static_cast<int64_t>(i) * n + j] += g[i];
  });
  return {this, id};
}

Var Tape::rsqrt(Var a) {
  Tensor y = val(a);
  for (int64_t i = 0; i < y.size(); ++i) {
    require(y[i] > 0.0, Err::DegenerateGraph, "rsqrt: nonpositive input");
    y[i] = 1.0 / std::sqrt(y[i]);
  }
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia](Tape& t, int self) {
    const Node& nd = t.nodes_[static_cast<size_t>(self)];
    Tensor ga = nd.grad;
    for (int64_t i = 0; i < ga.size(); ++i)
      ga[i] *= -0.5 * nd.value[i] * nd.value[i] * nd.value[i];
    t.accum(ia, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::scale_rows(Var a, Var d) {
  const int m = val(a).dim(0), n = val(a).dim(1);
  require(val(d).size() == m, Err::ShapeMismatch, "scale_rows: size mismatch");
  Tensor y = val(a);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y[static_cast<int64_t>(i) * n + j] *= val(d)[i];
  const int ia = a.id, idd = d.id;
  int id = push(std::move(y), tracked(a) || tracked(d), [ia, idd, m, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& av = t.nodes_[static_cast<size_t>(ia)].value;
    const Tensor& dv = t.nodes_[static_cast<size_t>(idd)].value;
    if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
      Tensor ga = g;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga[static_cast<int64_t>(i) * n + j] *= dv[i];
      t.accum(ia, ga.data(), ga.size());
    }
    if (t.nodes_[static_cast<size_t>(idd)].needs_grad) {
      Tensor gd({m});
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          acc += g[static_cast<int64_t>(i) * n + j] * av[static_cast<int64_t>(i) * n + j];
        gd[i] = acc;
      }
      t.accum(idd, gd.data(), m);
    }
  });
  return {this, id};
}

Var Tape::scale_cols(Var a, Var d) {
  const int m = val(a).dim(0), n = val(a).dim(1);
  require(val(d).size() == n, Err::ShapeMismatch, "scale_cols: size mismatch");
  Tensor y = val(a);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y[static_cast<int64_t>(i) * n + j] *= val(d)[j];
  const int ia = a.id, idd = d.id;
  int id = push(std::move(y), tracked(a) || tracked(d), [ia, idd, m, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& av = t.nodes_[static_cast<size_t>(ia)].value;
    const Tensor& dv = t.nodes_[static_cast<size_t>(idd)].value;
    if (t.nodes_[static_cast<size_t>(ia)].needs_grad) {
      Tensor ga = g;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga[static_cast<int64_t>(i) * n + j] *= dv[j];
      t.accum(ia, ga.data(), ga.size());
    }
    if (t.nodes_[static_cast<size_t>(idd)].needs_grad) {
      Tensor gd({n});
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          gd[j] += g[static_cast<int64_t>(i) * n + j] * av[static_cast<int64_t>(i) * n + j];
      t.accum(idd, gd.data(), n);
    }
  });
  return {this, id};
}

// ---------------------------------------------------------------------------
// nets

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const int cin = val(x).dim(0), h = val(x).dim(1), ww = val(x).dim(2);
  const int cout = val(w).dim(0), kh = val(w).dim(2), kw = val(w).dim(3);
  require(val(w).dim(1) == cin, Err::ShapeMismatch, "conv2d: channel mismatch");
  const int ho = kernels::conv_out_dim(h, kh, stride, pad);
  const int wo = kernels::conv_out_dim(ww, kw, stride, pad);
  Tensor y({cout, ho, wo});
  kernels::conv2d_forward(val(x).data(), cin, h, ww, val(w).data(), cout, kh, kw,
                          b.valid() ? val(b).data() : nullptr, stride, pad, y.data());
  const int ix = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
  bool track = tracked(x) || tracked(w) || (b.valid() && tracked(b));
  int id = push(std::move(y), track,
                [ix, iw, ib, cin, h, ww, cout, kh, kw, stride, pad, ho, wo](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& xv = t.nodes_[static_cast<size_t>(ix)].value;
    const Tensor& wv = t.nodes_[static_cast<size_t>(iw)].value;
    if (t.nodes_[static_cast<size_t>(ix)].needs_grad) {
      Tensor dx({cin, h, ww});
      kernels::conv2d_backward_input(wv.data(), cin, cout, kh, kw, g.data(), ho, wo, stride, pad,
                                     dx.data(), h, ww);
      t.accum(ix, dx.data(), dx.size());
    }
    if (t.nodes_[static_cast<size_t>(iw)].needs_grad || ib >= 0) {
      Tensor dw({cout, cin, kh, kw});
      Tensor db({cout});
      kernels::conv2d_backward_params(xv.data(), cin, h, ww, g.data(), cout, ho, wo, kh, kw,
                                      stride, pad, dw.data(), db.data());
      t.accum(iw, dw.data(), dw.size());
      if (ib >= 0) t.accum(ib, db.data(), db.size());
    }
  });
  return {this, id};
}

Var Tape::resize_bilinear(Var x, int ho, int wo) {
  const int c = val(x).dim(0), h = val(x).dim(1), w = val(x).dim(2);
  Tensor y({c, ho, wo});
  kernels::resize_bilinear_forward(val(x).data(), c, h, w, y.data(), ho, wo);
  const int ix = x.id;
  int id = push(std::move(y), tracked(x), [ix, c, h, w, ho, wo](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    Tensor dx({c, h, w});
    kernels::resize_bilinear_backward(g.data(), c, ho, wo, dx.data(), h, w);
    t.accum(ix, dx.data(), dx.size());
  });
  return {this, id};
}

Var Tape::softmax_rows(Var a) {
  const Tensor& av = val(a);
  const int n = av.dim(av.rank() - 1);
  const int m = static_cast<int>(av.size() / n);
  Tensor y(av.dims());
  kernels::softmax_rows(av.data(), m, n, y.data());
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia, m, n](Tape& t, int self) {
    const Node& nd = t.nodes_[static_cast<size_t>(self)];
    Tensor ga(nd.value.dims());
    for (int i = 0; i < m; ++i) {
      const double* yr = nd.value.data() + static_cast<int64_t>(i) * n;
      const double* gr = nd.grad.data() + static_cast<int64_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += yr[j] * gr[j];
      double* out = ga.data() + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) out[j] = yr[j] * (gr[j] - dot);
    }
    t.accum(ia, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const int t_tok = val(x).dim(0), c = val(x).dim(1);
  Tensor y({t_tok, c});
  auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(t_tok));
  auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(t_tok));
  kernels::layernorm_forward(val(x).data(), t_tok, c, val(gamma).data(), val(beta).data(), eps,
                             y.data(), mean->data(), rstd->data());
  for (int i = 0; i < t_tok; ++i) note_ln_sigma(1.0 / (*rstd)[static_cast<size_t>(i)]);
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  bool track = tracked(x) || tracked(gamma) || tracked(beta);
  int id = push(std::move(y), track, [ix, ig, ib, t_tok, c, mean, rstd](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& xv = t.nodes_[static_cast<size_t>(ix)].value;
    const Tensor& gv = t.nodes_[static_cast<size_t>(ig)].value;
    Tensor dx({t_tok, c}), dgamma({c}), dbeta({c});
    kernels::layernorm_backward(xv.data(), t_tok, c, gv.data(), mean->data(), rstd->data(),
                                g.data(), dx.data(), dgamma.data(), dbeta.data());
    t.accum(ix, dx.data(), dx.size());
    t.accum(ig, dgamma.data(), dgamma.size());
    t.accum(ib, dbeta.data(), dbeta.size());
  });
  return {this, id};
}

Var Tape::attention(Var q, Var k, Var v, Var bias, int heads) {
  const int t_tok = val(q).dim(0), c = val(q).dim(1);
  require(c % heads == 0, Err::InvalidParameter, "attention: heads must divide channels");
  Tensor y({t_tok, c});
  const double* bptr = bias.valid() ? val(bias).data() : nullptr;
  kernels::attention_forward(val(q).data(), val(k).data(), val(v).data(), bptr, t_tok, c, heads,
                             y.data());
  const int iq = q.id, ik = k.id, iv = v.id, ibias = bias.valid() ? bias.id : -1;
  bool track = tracked(q) || tracked(k) || tracked(v) || (bias.valid() && tracked(bias));
  int id = push(std::move(y), track, [iq, ik, iv, ibias, t_tok, c, heads](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& qv = t.nodes_[static_cast<size_t>(iq)].value;
    const Tensor& kv = t.nodes_[static_cast<size_t>(ik)].value;
    const Tensor& vv = t.nodes_[static_cast<size_t>(iv)].value;
    const double* bp = ibias >= 0 ? t.nodes_[static_cast<size_t>(ibias)].value.data() : nullptr;
    Tensor dq({t_tok, c}), dk({t_tok, c}), dv({t_tok, c});
    Tensor db = ibias >= 0 ? Tensor({t_tok}) : Tensor();
    kernels::attention_backward(qv.data(), kv.data(), vv.data(), bp, g.data(), t_tok, c, heads,
                                dq.data(), dk.data(), dv.data(),
                                ibias >= 0 ? db.data() : nullptr);
    t.accum(iq, dq.data(), dq.size());
    t.accum(ik, dk.data(), dk.size());
    t.accum(iv, dv.data(), dv.size());
    if (ibias >= 0) t.accum(ibias, db.data(), db.size());
  });
  return {this, id};
}

// ---------------------------------------------------------------------------
// model-specific

Var Tape::cosine_map(Var feat, Var proto) {
  const int c = val(feat).dim(0), h = val(feat).dim(1), w = val(feat).dim(2);
  require(val(proto).size() == c, Err::ShapeMismatch, "cosine_map: proto size mismatch");
  double pn = 0.0;
  for (int i = 0; i < c; ++i) pn += val(proto)[i] * val(proto)[i];
  require(pn > 0.0, Err::DegeneratePrototype, "cosine_map: zero prototype");
  Tensor y({h, w});
  kernels::cosine_map_forward(val(feat).data(), c, static_cast<int64_t>(h) * w, val(proto).data(),
                              y.data());
  const int ifeat = feat.id, ip = proto.id;
  int id = push(std::move(y), tracked(feat) || tracked(proto), [ifeat, ip, c, h, w](Tape& t,
                                                                                    int self) {
    const Node& nd = t.nodes_[static_cast<size_t>(self)];
    const Tensor& fv = t.nodes_[static_cast<size_t>(ifeat)].value;
    const Tensor& pv = t.nodes_[static_cast<size_t>(ip)].value;
    const int64_t hw = static_cast<int64_t>(h) * w;
    const bool need_f = t.nodes_[static_cast<size_t>(ifeat)].needs_grad;
    const bool need_p = t.nodes_[static_cast<size_t>(ip)].needs_grad;
    Tensor df = need_f ? Tensor({c, h, w}) : Tensor();
    Tensor dp = need_p ? Tensor({c}) : Tensor();
    kernels::cosine_map_backward(fv.data(), c, hw, pv.data(), nd.value.data(), nd.grad.data(),
                                 need_f ? df.data() : nullptr, need_p ? dp.data() : nullptr);
    if (need_f) t.accum(ifeat, df.data(), df.size());
    if (need_p) t.accum(ip, dp.data(), dp.size());
  });
  return {this, id};
}

Var Tape::mul_map(Var feat, Var map) {
  const int c = val(feat).dim(0), h = val(feat).dim(1), w = val(feat).dim(2);
  require(val(map).size() == static_cast<int64_t>(h) * w, Err::ShapeMismatch,
          "mul_map: map size mismatch");
  const int64_t hw = static_cast<int64_t>(h) * w;
  Tensor y = val(feat);
  for (int ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < hw; ++i) y[ch * hw + i] *= val(map)[i];
  const int ifeat = feat.id, imap = map.id;
  int id = push(std::move(y), tracked(feat) || tracked(map), [ifeat, imap, c, hw](Tape& t,
                                                                                  int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& fv = t.nodes_[static_cast<size_t>(ifeat)].value;
    const Tensor& mv = t.nodes_[static_cast<size_t>(imap)].value;
    if (t.nodes_[static_cast<size_t>(ifeat)].needs_grad) {
      Tensor gf = g;
      for (int ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) gf[ch * hw + i] *= mv[i];
      t.accum(ifeat, gf.data(), gf.size());
    }
    if (t.nodes_[static_cast<size_t>(imap)].needs_grad) {
      Tensor gm(mv.dims());
      for (int64_t i = 0; i < hw; ++i) {
        double acc = 0.0;
        for (int ch = 0; ch < c; ++ch) acc += g[ch * hw + i] * fv[ch * hw + i];
        gm[i] = acc;
      }
      t.accum(imap, gm.data(), gm.size());
    }
  });
  return {this, id};
}

Var Tape::calibrate(Var raw, double eps) {
  Tensor y = val(raw);
  for (int64_t i = 0; i < y.size(); ++i) {
    const double c = (y[i] + 1.0) * 0.5;
    note_kink(std::min(std::abs(c - eps), std::abs(1.0 - eps - c)));
    y[i] = std::clamp(c, eps, 1.0 - eps);
  }
  const int ir = raw.id;
  int id = push(std::move(y), tracked(raw), [ir, eps](Tape& t, int self) {
    const Node& nd = t.nodes_[static_cast<size_t>(self)];
    Tensor ga = nd.grad;
    for (int64_t i = 0; i < ga.size(); ++i) {
      const bool clamped = nd.value[i] <= eps || nd.value[i] >= 1.0 - eps;
      ga[i] = clamped ? 0.0 : ga[i] * 0.5;
    }
    t.accum(ir, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::map_pool(Var feat, const Tensor& wstack) {
  const int c = val(feat).dim(0), h = val(feat).dim(1), w = val(feat).dim(2);
  const int n = wstack.dim(0);
  require(wstack.size() == static_cast<int64_t>(n) * h * w, Err::ShapeMismatch,
          "map_pool: weight stack shape mismatch");
  const int64_t hw = static_cast<int64_t>(h) * w;
  auto wsum = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    const double* row = wstack.data() + static_cast<int64_t>(i) * hw;
    for (int64_t p = 0; p < hw; ++p) s += row[p];
    require(s > 0.0, Err::ZeroWeight, "map_pool: weight channel sums to zero");
    (*wsum)[static_cast<size_t>(i)] = s;
  }
  Tensor y({n, c});
  kernels::map_pool_forward(val(feat).data(), c, hw, wstack.data(), n, wsum->data(), y.data());
  const int ifeat = feat.id;
  auto wcopy = std::make_shared<Tensor>(wstack);
  int id = push(std::move(y), tracked(feat), [ifeat, wcopy, wsum, c, n, hw](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    if (!t.nodes_[static_cast<size_t>(ifeat)].needs_grad) return;
    Tensor& gf = t.grad_buf(ifeat);
    kernels::map_pool_backward(wcopy->data(), n, hw, wsum->data(), g.data(), c, gf.data());
  });
  return {this, id};
}

Var Tape::cos_rows(Var mat, Var vec) {
  const int n = val(mat).dim(0), c = val(mat).dim(1);
  require(val(vec).size() == c, Err::ShapeMismatch, "cos_rows: size mismatch");
  double vn2 = 0.0;
  for (int i = 0; i < c; ++i) vn2 += val(vec)[i] * val(vec)[i];
  require(vn2 > 0.0, Err::DegeneratePrototype, "cos_rows: zero vector");
  Tensor y({n});
  for (int i = 0; i < n; ++i) {
    const double* r = val(mat).data() + static_cast<int64_t>(i) * c;
    double rn2 = 0.0, dot = 0.0;
    for (int j = 0; j < c; ++j) {
      rn2 += r[j] * r[j];
      dot += r[j] * val(vec)[j];
    }
    require(rn2 > 0.0, Err::DegeneratePrototype, "cos_rows: zero row");
    y[i] = dot / std::sqrt(rn2 * vn2);
  }
  const int im = mat.id, iv = vec.id;
  int id = push(std::move(y), tracked(mat) || tracked(vec), [im, iv, n, c](Tape& t, int self) {
    const Node& nd = t.nodes_[static_cast<size_t>(self)];
    const Tensor& mv = t.nodes_[static_cast<size_t>(im)].value;
    const Tensor& vv = t.nodes_[static_cast<size_t>(iv)].value;
    double vn2 = 0.0;
    for (int j = 0; j < c; ++j) vn2 += vv[j] * vv[j];
    const double vn = std::sqrt(vn2);
    Tensor gm({n, c}), gv({c});
    for (int i = 0; i < n; ++i) {
      const double* r = mv.data() + static_cast<int64_t>(i) * c;
      double rn2 = 0.0;
      for (int j = 0; j < c; ++j) rn2 += r[j] * r[j];
      const double rn = std::sqrt(rn2);
      const double cosv = nd.value[i];
      const double g = nd.grad[i];
      for (int j = 0; j < c; ++j) {
        gm[static_cast<int64_t>(i) * c + j] = g * (vv[j] / (rn * vn) - cosv * r[j] / rn2);
        gv[j] += g * (r[j] / (rn * vn) - cosv * vv[j] / vn2);
      }
    }
    t.accum(im, gm.data(), gm.size());
    t.accum(iv, gv.data(), gv.size());
  });
  return {this, id};
}

Var Tape::logsumexp(Var v) {
  const int64_t n = val(v).size();
  double mx = val(v)[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, val(v)[i]);
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += std::exp(val(v)[i] - mx);
  Tensor y({1});
  y[0] = mx + std::log(s);
  const int iv = v.id;
  int id = push(std::move(y), tracked(v), [iv, n](Tape& t, int self) {
    const Node& nd = t.nodes_[static_cast<size_t>(self)];
    const Tensor& vv = t.nodes_[static_cast<size_t>(iv)].value;
    Tensor gv({static_cast<int>(n)});
    for (int64_t i = 0; i < n; ++i) gv[i] = nd.grad[0] * std::exp(vv[i] - nd.value[0]);
    t.accum(iv, gv.data(), n);
  });
  return {this, id};
}

Var Tape::bilinear_sample(Var feat, Var pts) {
  const int c = val(feat).dim(0), h = val(feat).dim(1), w = val(feat).dim(2);
  const int k = val(pts).dim(0);
  require(val(pts).dim(1) == 2, Err::ShapeMismatch, "bilinear_sample: pts must be [k,2]");
  Tensor y({k, c});
  const Tensor& fv = val(feat);
  const Tensor& pv = val(pts);
  for (int i = 0; i < k; ++i) {
    const double r = std::clamp(pv.at(i, 0), 0.0, static_cast<double>(h - 1));
    const double cc = std::clamp(pv.at(i, 1), 0.0, static_cast<double>(w - 1));
    const double fr = r - std::floor(r), fc = cc - std::floor(cc);
    note_kink(std::min(std::min(fr, 1.0 - fr), std::min(fc, 1.0 - fc)));
    const int r0 = std::min(static_cast<int>(std::floor(r)), h - 1);
    const int c0 = std::min(static_cast<int>(std::floor(cc)), w - 1);
    const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
    const double tr = r - r0, tc = cc - c0;
    for (int ch = 0; ch < c; ++ch) {
      const double v00 = fv.at(ch, r0, c0), v01 = fv.at(ch, r0, c1);
      const double v10 = fv.at(ch, r1, c0), v11 = fv.at(ch, r1, c1);
      y.at(i, ch) = (1.0 - tr) * ((1.0 - tc) * v00 + tc * v01) +
                    tr * ((1.0 - tc) * v10 + tc * v11);
    }
  }
  const int ifeat = feat.id, ip = pts.id;
  int id = push(std::move(y), tracked(feat) || tracked(pts), [ifeat, ip, c, h, w, k](Tape& t,
                                                                                     int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& fv = t.nodes_[static_cast<size_t>(ifeat)].value;
    const Tensor& pv = t.nodes_[static_cast<size_t>(ip)].value;
    const bool need_f = t.nodes_[static_cast<size_t>(ifeat)].needs_grad;
    const bool need_p = t.nodes_[static_cast<size_t>(ip)].needs_grad;
    Tensor gp = need_p ? Tensor({k, 2}) : Tensor();
    for (int i = 0; i < k; ++i) {
      const double rraw = pv.at(i, 0), craw = pv.at(i, 1);
      const double r = std::clamp(rraw, 0.0, static_cast<double>(h - 1));
      const double cc = std::clamp(craw, 0.0, static_cast<double>(w - 1));
      const bool rin = rraw > 0.0 && rraw < static_cast<double>(h - 1);
      const bool cin = craw > 0.0 && craw < static_cast<double>(w - 1);
      const int r0 = std::min(static_cast<int>(std::floor(r)), h - 1);
      const int c0 = std::min(static_cast<int>(std::floor(cc)), w - 1);
      const int r1 = std::min(r0 + 1, h - 1), c1 = std::min(c0 + 1, w - 1);
      const double tr = r - r0, tc = cc - c0;
      double dr = 0.0, dc = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double gout = g.at(i, ch);
        const double v00 = fv.at(ch, r0, c0), v01 = fv.at(ch, r0, c1);
        const double v10 = fv.at(ch, r1, c0), v11 = fv.at(ch, r1, c1);
        if (need_f) {
          Tensor& gf = t.grad_buf(ifeat);
          gf.at(ch, r0, c0) += gout * (1.0 - tr) * (1.0 - tc);
          gf.at(ch, r0, c1) += gout * (1.0 - tr) * tc;
          gf.at(ch, r1, c0) += gout * tr * (1.0 - tc);
          gf.at(ch, r1, c1) += gout * tr * tc;
        }
        dr += gout * ((v10 - v00) * (1.0 - tc) + (v11 - v01) * tc);
        dc += gout * ((v01 - v00) * (1.0 - tr) + (v11 - v10) * tr);
      }
      if (need_p) {
        gp.at(i, 0) = rin ? dr : 0.0;
        gp.at(i, 1) = cin ? dc : 0.0;
      }
    }
    if (need_p) t.accum(ip, gp.data(), gp.size());
  });
  return {this, id};
}

Var Tape::weighted_rows(Var w, Var rows) {
  const int k = val(rows).dim(0), n = val(rows).dim(1);
  require(val(w).size() == k, Err::ShapeMismatch, "weighted_rows: size mismatch");
  Tensor y({n});
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) y[j] += val(w)[i] * val(rows).at(i, j);
  const int iw = w.id, ir = rows.id;
  int id = push(std::move(y), tracked(w) || tracked(rows), [iw, ir, k, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& wv = t.nodes_[static_cast<size_t>(iw)].value;
    const Tensor& rv = t.nodes_[static_cast<size_t>(ir)].value;
    if (t.nodes_[static_cast<size_t>(iw)].needs_grad) {
      Tensor gw({k});
      for (int i = 0; i < k; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += g[j] * rv.at(i, j);
        gw[i] = acc;
      }
      t.accum(iw, gw.data(), k);
    }
    if (t.nodes_[static_cast<size_t>(ir)].needs_grad) {
      Tensor gr({k, n});
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) gr.at(i, j) = wv[i] * g[j];
      t.accum(ir, gr.data(), gr.size());
    }
  });
  return {this, id};
}

Var Tape::clamp_coords(Var pts, double rmax, double cmax) {
  Tensor y = val(pts);
  const int k = y.dim(0);
  for (int i = 0; i < k; ++i) {
    note_kink(std::min(std::abs(y.at(i, 0)), std::abs(rmax - y.at(i, 0))));
    note_kink(std::min(std::abs(y.at(i, 1)), std::abs(cmax - y.at(i, 1))));
    y.at(i, 0) = std::clamp(y.at(i, 0), 0.0, rmax);
    y.at(i, 1) = std::clamp(y.at(i, 1), 0.0, cmax);
  }
  const int ip = pts.id;
  int id = push(std::move(y), tracked(pts), [ip, rmax, cmax, k](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& pv = t.nodes_[static_cast<size_t>(ip)].value;
    Tensor gp({k, 2});
    for (int i = 0; i < k; ++i) {
      gp.at(i, 0) = (pv.at(i, 0) > 0.0 && pv.at(i, 0) < rmax) ? g.at(i, 0) : 0.0;
      gp.at(i, 1) = (pv.at(i, 1) > 0.0 && pv.at(i, 1) < cmax) ? g.at(i, 1) : 0.0;
    }
    t.accum(ip, gp.data(), gp.size());
  });
  return {this, id};
}

// ---------------------------------------------------------------------------
// reductions / losses

Var Tape::sum(Var a) {
  Tensor y({1});
  for (int64_t i = 0; i < val(a).size(); ++i) y[0] += val(a)[i];
  const int ia = a.id;
  int id = push(std::move(y), tracked(a), [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& av = t.nodes_[static_cast<size_t>(ia)].value;
    Tensor ga(av.dims());
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] = g[0];
    t.accum(ia, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(val(a).size())); }

Var Tape::sse(Var a, const Tensor& target) {
  require(val(a).same_shape(target), Err::ShapeMismatch, "sse: shape mismatch");
  Tensor y({1});
  for (int64_t i = 0; i < val(a).size(); ++i) {
    const double d = val(a)[i] - target[i];
    y[0] += d * d;
  }
  const int ia = a.id;
  auto tc = std::make_shared<Tensor>(target);
  int id = push(std::move(y), tracked(a), [ia, tc](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& av = t.nodes_[static_cast<size_t>(ia)].value;
    Tensor ga(av.dims());
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] = 2.0 * (av[i] - (*tc)[i]) * g[0];
    t.accum(ia, ga.data(), ga.size());
  });
  return {this, id};
}

Var Tape::bce_mean(Var p, const Tensor& target) {
  require(val(p).same_shape(target), Err::ShapeMismatch, "bce_mean: shape mismatch");
  const int64_t n = val(p).size();
  Tensor y({1});
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double pv = val(p)[i];
    acc += target[i] * std::log(pv) + (1.0 - target[i]) * std::log(1.0 - pv);
  }
  y[0] = -acc / static_cast<double>(n);
  const int ip = p.id;
  auto tc = std::make_shared<Tensor>(target);
  int id = push(std::move(y), tracked(p), [ip, tc, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& pv = t.nodes_[static_cast<size_t>(ip)].value;
    Tensor gp(pv.dims());
    const double s = g[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i)
      gp[i] = s * (-(*tc)[i] / pv[i] + (1.0 - (*tc)[i]) / (1.0 - pv[i]));
    t.accum(ip, gp.data(), gp.size());
  });
  return {this, id};
}

Var Tape::mean_sq_point_dist(Var pts, const Tensor& gt) {
  require(val(pts).same_shape(gt), Err::ShapeMismatch, "mean_sq_point_dist: shape mismatch");
  const int n = val(pts).dim(0);
  Tensor y({1});
  for (int i = 0; i < n; ++i) {
    const double dr = val(pts).at(i, 0) - gt.at(i, 0);
    const double dc = val(pts).at(i, 1) - gt.at(i, 1);
    y[0] += dr * dr + dc * dc;
  }
  y[0] /= static_cast<double>(n);
  const int ip = pts.id;
  auto gc = std::make_shared<Tensor>(gt);
  int id = push(std::move(y), tracked(pts), [ip, gc, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
    const Tensor& pv = t.nodes_[static_cast<size_t>(ip)].value;
    Tensor gp({n, 2});
    const double s = 2.0 * g[0] / static_cast<double>(n);
    for (int i = 0; i < n; ++i) {
      gp.at(i, 0) = s * (pv.at(i, 0) - gc->at(i, 0));
      gp.at(i, 1) = s * (pv.at(i, 1) - gc->at(i, 1));
    }
    t.accum(ip, gp.data(), gp.size());
  });
  return {this, id};
}

}  // namespace halo::ad
