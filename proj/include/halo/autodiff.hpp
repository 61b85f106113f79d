#pragma once

#include <functional>
#include <string>
#include <vector>

#include "halo/tensor.hpp"

namespace halo::ad {

class Tape;

// Diagnostics for finite-difference gradient checks, which are only valid
// away from non-smooth points. When tracking is on, forward ops record the
// smallest distance to a kink (ReLU zero, calibrate/clamp boundary, bilinear
// integer grid line) and the smallest LayerNorm row stddev seen.
void set_smoothness_tracking(bool on);
double min_kink_distance();
double min_layernorm_sigma();

// Handle to a tape node. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Named learnable tensors plus gradient and optimizer state.
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v;  // Adam moments, sized lazily by the optimizer
  };

  std::vector<Entry> entries;

  int add(const std::string& name, Tensor init);
  Entry& at(int i) { return entries[static_cast<size_t>(i)]; }
  const Entry& at(int i) const { return entries[static_cast<size_t>(i)]; }
  int find(const std::string& name) const;
  int64_t total_size() const;
  void zero_grad();
};

// Dynamic reverse-mode tape. One tape per forward pass; ops append nodes and
// backward() walks them in reverse. Gradients of param leaves are accumulated
// into the bound ParamStore.
class Tape {
public:
  explicit Tape(ParamStore* params = nullptr) : params_(params) {}

  // leaves
  Var constant(Tensor v);        // not differentiated through
  Var input(Tensor v);           // differentiated; gradient readable via grad()
  Var param(int param_id);       // gradient accumulated into the ParamStore

  const Tensor& val(Var v) const;
  const Tensor& grad(Var v) const;  // valid after backward()

  void backward(Var loss);  // loss must have exactly one element

  size_t node_count() const { return nodes_.size(); }

  // ---- elementwise / scalar ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_const(Var a, double s);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh_(Var a);
  Var scalar_mul(Var a, Var s);      // s has one element
  Var add_scalarvar(Var a, Var s);   // broadcast add of a one-element var

  // ---- shape / slicing ----
  Var reshape(Var a, std::vector<int> dims);
  Var transpose(Var a);  // [m,n] -> [n,m]
  Var row(Var mat, int i);
  Var concat(Var a, Var b);  // 1-d
  Var stack_rows(const std::vector<Var>& rows);

  // ---- linear algebra ----
  Var matmul(Var a, Var b);
  Var affine(Var x, Var w, Var b);          // x[n] w[n,m] (+b[m]) -> [m]; pass Var{} for no bias
  Var broadcast_add_row(Var mat, Var vec);  // [k,n] + [n]
  Var row_sums(Var a);                      // [m,n] -> [m]
  Var rsqrt(Var a);
  Var scale_rows(Var a, Var d);  // a[m,n] * d[m]
  Var scale_cols(Var a, Var d);  // a[m,n] * d[n]

  // ---- nets ----
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  Var resize_bilinear(Var x, int ho, int wo);
  Var softmax_rows(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var attention(Var q, Var k, Var v, Var bias, int heads);  // bias optional (Var{})

  // ---- model-specific ----
  Var cosine_map(Var feat, Var proto);         // [C,H,W],[C] -> [H,W]
  Var mul_map(Var feat, Var map);              // [C,H,W] * [H,W]
  Var calibrate(Var raw, double eps);          // clamp((x+1)/2, eps, 1-eps)
  Var map_pool(Var feat, const Tensor& wstack);  // const weights [N,H,W] -> [N,C]
  Var cos_rows(Var mat, Var vec);              // [N,C],[C] -> [N]
  Var logsumexp(Var v);                        // [N] -> [1]
  Var bilinear_sample(Var feat, Var pts);      // [C,H,W],[k,2] -> [k,C], clamped
  Var weighted_rows(Var w, Var rows);          // [k],[k,n] -> [n]
  Var clamp_coords(Var pts, double rmax, double cmax);

  // ---- reductions / losses ----
  Var sum(Var a);
  Var mean(Var a);
  Var sse(Var a, const Tensor& target);              // sum((a-t)^2)
  Var bce_mean(Var p, const Tensor& target);         // mean binary cross-entropy
  Var mean_sq_point_dist(Var pts, const Tensor& gt); // (1/N) sum_i |row_i - gt_i|^2

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool grad_alloc = false;
    int param_id = -1;
    std::function<void(Tape&, int)> back;  // pulls this node's grad into parents
  };

  std::vector<Node> nodes_;
  ParamStore* params_ = nullptr;

  int push(Tensor value, bool needs_grad, std::function<void(Tape&, int)> back = nullptr);
  bool tracked(Var v) const { return v.valid() && nodes_[static_cast<size_t>(v.id)].needs_grad; }
  Tensor& grad_buf(int id);
  void accum(int id, const double* g, int64_t n);  // grad[id] += g
  friend struct GradAccess;
};

}  // namespace halo::ad
