#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "midas/common.hpp"

// Reverse-mode autodiff over Eigen double matrices. The graph is built
// eagerly; `backward(loss)` runs the adjoints in reverse topological order.
// Heavy sequence kernels (per-frame attention, LSTM, derivative accumulation)
// are single fused nodes with hand-written adjoints so the tape stays small
// and the forward math matches the plain inference path.
namespace midas::ad {

using Mat = Eigen::MatrixXd;

struct Node {
  Mat val;
  Mat grad;  // lazily sized on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backfn;

  void accumulate(const Mat& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Mat& val() const { return node_->val; }
  const Mat& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While a guard is alive on this thread, ops record no parents or adjoints;
// intermediate values are freed as soon as their Vars go out of scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

Var leaf(Mat value, bool requires_grad = false);
Var constant(Mat value);

// Runs adjoints from `loss` (1x1) back to the leaves.
void backward(const Var& loss);

// --- elementwise / linear algebra -----------------------------------------
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_rowbc(const Var& x, const Var& bias);  // bias: 1 x C broadcast over rows
Var cmul(const Var& a, const Var& b);
Var cmul_colbc(const Var& col, const Var& x);  // col: N x 1 broadcast over cols
Var scal(const Var& a, double s);
Var sigmoid(const Var& a);
Var tanh_(const Var& a);
Var relu(const Var& a);
Var exp_(const Var& a);
Var abs_(const Var& a);
Var neg(const Var& a);
Var softmax_rows(const Var& a);
Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// --- shape ops -------------------------------------------------------------
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, int start, int count);
Var tile_rows(const Var& x, int times);          // stack `times` copies of x
Var repeat_each_row(const Var& x, int times);    // each row repeated `times` consecutively

// --- reductions ------------------------------------------------------------
Var sum_all(const Var& a);                       // 1x1
Var masked_sum(const Var& a, const Mat& mask);   // 1x1, mask is a constant 0/1 matrix

// Inverted dropout; `keep` drawn per element. Identity when p == 0.
Var dropout(const Var& a, double p, Rng& rng);

// --- fused sequence kernels -------------------------------------------------
// Scaled dot-product attention applied independently per frame block.
// q: (frames*nq) x m, k/v: (frames*nk) x m, m % heads == 0. Row reductions are
// accumulated in index order so that swapping two adjacent key rows is exact.
Var frame_attention(const Var& q, const Var& k, const Var& v, int frames, int nq, int nk,
                    int heads);

// Full LSTM pass over a frame-major pack: x is (frames*rows) x in, wx:
// in x 4h, wh: h x 4h, b: 1 x 4h. Gate order [i f g o]; h_0 = c_0 = 0.
// `reverse` runs frames back to front. Output (frames*rows) x h.
Var lstm_seq(const Var& x, const Var& wx, const Var& wh, const Var& b, int frames, int rows,
             bool reverse);

}  // namespace midas::ad
