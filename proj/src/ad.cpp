#include "midas/ad.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace midas::ad {

namespace {
thread_local int g_no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Var leaf(Mat value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->requires_grad = requires_grad && grad_enabled();
  return Var(n);
}

Var constant(Mat value) { return leaf(std::move(value), false); }

namespace {

// Wires a result node to its parents unless gradients are off or no parent
// needs them.
Var make_node(Mat value, std::vector<Var> parents, std::function<void(Node&)> backfn) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  bool need = false;
  if (grad_enabled())
    for (const auto& p : parents) need = need || p.requires_grad();
  if (need) {
    n->requires_grad = true;
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backfn = std::move(backfn);
  }
  return Var(n);
}

}  // namespace

void backward(const Var& loss) {
  if (!loss.defined() || !loss.requires_grad()) return;
  if (loss.val().size() != 1) throw Error("backward: loss must be a 1x1 value");

  // Iterative post-order DFS for a reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad = Mat::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backfn && n->grad.size() != 0) n->backfn(*n);
  }
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Mat y = a.val() * b.val();
  return make_node(std::move(y), {a, b}, [a, b](Node& n) mutable {
    if (a.requires_grad()) a.node()->accumulate(n.grad * b.val().transpose());
    if (b.requires_grad()) b.node()->accumulate(a.val().transpose() * n.grad);
  });
}

Var add(const Var& a, const Var& b) {
  return make_node(a.val() + b.val(), {a, b}, [a, b](Node& n) mutable {
    if (a.requires_grad()) a.node()->accumulate(n.grad);
    if (b.requires_grad()) b.node()->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  return make_node(a.val() - b.val(), {a, b}, [a, b](Node& n) mutable {
    if (a.requires_grad()) a.node()->accumulate(n.grad);
    if (b.requires_grad()) b.node()->accumulate(-n.grad);
  });
}

Var add_rowbc(const Var& x, const Var& bias) {
  Mat y = x.val().rowwise() + bias.val().row(0);
  return make_node(std::move(y), {x, bias}, [x, bias](Node& n) mutable {
    if (x.requires_grad()) x.node()->accumulate(n.grad);
    if (bias.requires_grad()) bias.node()->accumulate(n.grad.colwise().sum());
  });
}

Var cmul(const Var& a, const Var& b) {
  Mat y = a.val().cwiseProduct(b.val());
  return make_node(std::move(y), {a, b}, [a, b](Node& n) mutable {
    if (a.requires_grad()) a.node()->accumulate(n.grad.cwiseProduct(b.val()));
    if (b.requires_grad()) b.node()->accumulate(n.grad.cwiseProduct(a.val()));
  });
}

Var cmul_colbc(const Var& col, const Var& x) {
  Mat y = x.val().array().colwise() * col.val().col(0).array();
  return make_node(std::move(y), {col, x}, [col, x](Node& n) mutable {
    if (col.requires_grad())
      col.node()->accumulate(n.grad.cwiseProduct(x.val()).rowwise().sum());
    if (x.requires_grad())
      x.node()->accumulate(n.grad.array().colwise() * col.val().col(0).array());
  });
}

Var scal(const Var& a, double s) {
  return make_node(a.val() * s, {a}, [a, s](Node& n) mutable {
    if (a.requires_grad()) a.node()->accumulate(n.grad * s);
  });
}

Var neg(const Var& a) { return scal(a, -1.0); }

Var sigmoid(const Var& a) {
  Mat y = (1.0 / (1.0 + (-a.val().array()).exp())).matrix();
  auto out = make_node(std::move(y), {a}, [a](Node& n) mutable {
    if (a.requires_grad()) {
      Mat d = n.val.array() * (1.0 - n.val.array());
      a.node()->accumulate(n.grad.cwiseProduct(d));
    }
  });
  return out;
}

Var tanh_(const Var& a) {
  Mat y = a.val().array().tanh().matrix();
  return make_node(std::move(y), {a}, [a](Node& n) mutable {
    if (a.requires_grad()) {
      Mat d = 1.0 - n.val.array().square();
      a.node()->accumulate(n.grad.cwiseProduct(d));
    }
  });
}

Var relu(const Var& a) {
  Mat y = a.val().cwiseMax(0.0);
  return make_node(std::move(y), {a}, [a](Node& n) mutable {
    if (a.requires_grad()) {
      Mat d = (n.val.array() > 0.0).cast<double>();
      a.node()->accumulate(n.grad.cwiseProduct(d));
    }
  });
}

Var exp_(const Var& a) {
  Mat y = a.val().array().exp().matrix();
  return make_node(std::move(y), {a}, [a](Node& n) mutable {
    if (a.requires_grad()) a.node()->accumulate(n.grad.cwiseProduct(n.val));
  });
}

Var abs_(const Var& a) {
  Mat y = a.val().cwiseAbs();
  return make_node(std::move(y), {a}, [a](Node& n) mutable {
    if (a.requires_grad()) {
      Mat s = a.val().array().sign();
      a.node()->accumulate(n.grad.cwiseProduct(s));
    }
  });
}

Var softmax_rows(const Var& a) {
  const Mat& x = a.val();
  Mat y(x.rows(), x.cols());
  for (long i = 0; i < x.rows(); ++i) {
    double mx = x(i, 0);
    for (long j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
    double denom = 0.0;
    for (long j = 0; j < x.cols(); ++j) {
      y(i, j) = std::exp(x(i, j) - mx);
      denom += y(i, j);
    }
    y.row(i) /= denom;
  }
  return make_node(std::move(y), {a}, [a](Node& n) mutable {
    if (!a.requires_grad()) return;
    Mat dx(n.val.rows(), n.val.cols());
    for (long i = 0; i < n.val.rows(); ++i) {
      const double dot = n.grad.row(i).dot(n.val.row(i));
      dx.row(i) = n.val.row(i).cwiseProduct(n.grad.row(i).array().matrix() -
                                            Mat::Constant(1, n.val.cols(), dot));
    }
    a.node()->accumulate(dx);
  });
}

Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Mat& v = x.val();
  const long R = v.rows(), C = v.cols();
  Mat xhat(R, C);
  Eigen::VectorXd inv_sigma(R);
  for (long i = 0; i < R; ++i) {
    const double mu = v.row(i).mean();
    const double var = (v.row(i).array() - mu).square().sum() / C;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(i) = is;
    xhat.row(i) = (v.row(i).array() - mu) * is;
  }
  Mat y = (xhat.array().rowwise() * gamma.val().row(0).array()).rowwise() +
          beta.val().row(0).array();
  auto saved_xhat = std::make_shared<Mat>(std::move(xhat));
  auto saved_is = std::make_shared<Eigen::VectorXd>(std::move(inv_sigma));
  return make_node(std::move(y), {x, gamma, beta},
                   [x, gamma, beta, saved_xhat, saved_is](Node& n) mutable {
    const Mat& xh = *saved_xhat;
    const long R = xh.rows(), C = xh.cols();
    if (gamma.requires_grad())
      gamma.node()->accumulate(n.grad.cwiseProduct(xh).colwise().sum());
    if (beta.requires_grad()) beta.node()->accumulate(n.grad.colwise().sum());
    if (x.requires_grad()) {
      Mat dx(R, C);
      for (long i = 0; i < R; ++i) {
        Eigen::RowVectorXd dxh = n.grad.row(i).cwiseProduct(gamma.val().row(0));
        const double mean_dxh = dxh.mean();
        const double mean_dxh_xh = dxh.cwiseProduct(xh.row(i)).mean();
        dx.row(i) =
            ((dxh.array() - mean_dxh - xh.row(i).array() * mean_dxh_xh) * (*saved_is)(i));
      }
      x.node()->accumulate(dx);
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  long cols = 0;
  const long rows = parts.front().val().rows();
  for (const auto& p : parts) cols += p.val().cols();
  Mat y(rows, cols);
  long at = 0;
  for (const auto& p : parts) {
    y.middleCols(at, p.val().cols()) = p.val();
    at += p.val().cols();
  }
  auto parents = parts;
  return make_node(std::move(y), parents, [parents](Node& n) mutable {
    long at = 0;
    for (auto& p : parents) {
      const long c = p.val().cols();
      if (p.requires_grad()) p.node()->accumulate(n.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var slice_cols(const Var& a, int start, int count) {
  Mat y = a.val().middleCols(start, count);
  return make_node(std::move(y), {a}, [a, start, count](Node& n) mutable {
    if (!a.requires_grad()) return;
    Mat g = Mat::Zero(a.val().rows(), a.val().cols());
    g.middleCols(start, count) = n.grad;
    a.node()->accumulate(g);
  });
}

Var tile_rows(const Var& x, int times) {
  const long r = x.val().rows();
  Mat y(r * times, x.val().cols());
  for (int i = 0; i < times; ++i) y.middleRows(i * r, r) = x.val();
  return make_node(std::move(y), {x}, [x, times, r](Node& n) mutable {
    if (!x.requires_grad()) return;
    Mat g = Mat::Zero(r, x.val().cols());
    for (int i = 0; i < times; ++i) g += n.grad.middleRows(i * r, r);
    x.node()->accumulate(g);
  });
}

Var repeat_each_row(const Var& x, int times) {
  const long r = x.val().rows();
  Mat y(r * times, x.val().cols());
  for (long i = 0; i < r; ++i)
    for (int j = 0; j < times; ++j) y.row(i * times + j) = x.val().row(i);
  return make_node(std::move(y), {x, }, [x, times, r](Node& n) mutable {
    if (!x.requires_grad()) return;
    Mat g(r, x.val().cols());
    for (long i = 0; i < r; ++i)
      g.row(i) = n.grad.middleRows(i * times, times).colwise().sum();
    x.node()->accumulate(g);
  });
}

Var sum_all(const Var& a) {
  Mat y(1, 1);
  y(0, 0) = a.val().sum();
  return make_node(std::move(y), {a}, [a](Node& n) mutable {
    if (a.requires_grad())
      a.node()->accumulate(Mat::Constant(a.val().rows(), a.val().cols(), n.grad(0, 0)));
  });
}

Var masked_sum(const Var& a, const Mat& mask) {
  Mat y(1, 1);
  y(0, 0) = a.val().cwiseProduct(mask).sum();
  auto m = std::make_shared<Mat>(mask);
  return make_node(std::move(y), {a}, [a, m](Node& n) mutable {
    if (a.requires_grad()) a.node()->accumulate(n.grad(0, 0) * (*m));
  });
}

Var dropout(const Var& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Mat mask(a.val().rows(), a.val().cols());
  for (long i = 0; i < mask.rows(); ++i)
    for (long j = 0; j < mask.cols(); ++j) mask(i, j) = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  Mat y = a.val().cwiseProduct(mask);
  auto m = std::make_shared<Mat>(std::move(mask));
  return make_node(std::move(y), {a}, [a, m](Node& n) mutable {
    if (a.requires_grad()) a.node()->accumulate(n.grad.cwiseProduct(*m));
  });
}

// ---------------------------------------------------------------------------
// Fused attention

namespace {

// q block (nq x dh) against k/v blocks (nk x dh). Reductions run in key order
// with explicit loops; see header note on permutation behavior.
void attn_block_forward(const Eigen::Ref<const Mat>& qb, const Eigen::Ref<const Mat>& kb,
                        const Eigen::Ref<const Mat>& vb, double scale, Mat& probs, Mat& out) {
  const long nq = qb.rows(), nk = kb.rows(), dh = qb.cols();
  probs.resize(nq, nk);
  out.resize(nq, dh);
  for (long i = 0; i < nq; ++i) {
    for (long j = 0; j < nk; ++j) {
      double s = 0.0;
      for (long c = 0; c < dh; ++c) s += qb(i, c) * kb(j, c);
      probs(i, j) = s * scale;
    }
    double mx = probs(i, 0);
    for (long j = 1; j < nk; ++j) mx = std::max(mx, probs(i, j));
    double denom = 0.0;
    for (long j = 0; j < nk; ++j) {
      probs(i, j) = std::exp(probs(i, j) - mx);
      denom += probs(i, j);
    }
    for (long j = 0; j < nk; ++j) probs(i, j) /= denom;
    for (long c = 0; c < dh; ++c) {
      double s = 0.0;
      for (long j = 0; j < nk; ++j) s += probs(i, j) * vb(j, c);
      out(i, c) = s;
    }
  }
}

}  // namespace

Var frame_attention(const Var& q, const Var& k, const Var& v, int frames, int nq, int nk,
                    int heads) {
  const long m = q.val().cols();
  if (m % heads != 0) throw Error("frame_attention: embed dim not divisible by heads");
  const long dh = m / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat out(static_cast<long>(frames) * nq, m);
  auto probs = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(frames) * heads);

#pragma omp parallel for schedule(static)
  for (int t = 0; t < frames; ++t) {
    Mat o;
    for (int h = 0; h < heads; ++h) {
      attn_block_forward(q.val().block(static_cast<long>(t) * nq, h * dh, nq, dh),
                         k.val().block(static_cast<long>(t) * nk, h * dh, nk, dh),
                         v.val().block(static_cast<long>(t) * nk, h * dh, nk, dh), scale,
                         (*probs)[static_cast<std::size_t>(t) * heads + h], o);
      out.block(static_cast<long>(t) * nq, h * dh, nq, dh) = o;
    }
  }

  return make_node(std::move(out), {q, k, v},
                   [q, k, v, probs, frames, nq, nk, heads, dh, scale](Node& n) mutable {
    const bool nq_grad = q.requires_grad(), nk_grad = k.requires_grad(),
               nv_grad = v.requires_grad();
    Mat dq = Mat::Zero(q.val().rows(), q.val().cols());
    Mat dk = Mat::Zero(k.val().rows(), k.val().cols());
    Mat dv = Mat::Zero(v.val().rows(), v.val().cols());
#pragma omp parallel for schedule(static)
    for (int t = 0; t < frames; ++t) {
      for (int h = 0; h < heads; ++h) {
        const Mat& P = (*probs)[static_cast<std::size_t>(t) * heads + h];
        auto dOb = n.grad.block(static_cast<long>(t) * nq, h * dh, nq, dh);
        auto Qb = q.val().block(static_cast<long>(t) * nq, h * dh, nq, dh);
        auto Kb = k.val().block(static_cast<long>(t) * nk, h * dh, nk, dh);
        auto Vb = v.val().block(static_cast<long>(t) * nk, h * dh, nk, dh);
        if (nv_grad)
          dv.block(static_cast<long>(t) * nk, h * dh, nk, dh) += P.transpose() * dOb;
        if (!nq_grad && !nk_grad) continue;
        Mat dP = dOb * Vb.transpose();  // nq x nk
        Mat dS(nq, nk);
        for (long i = 0; i < nq; ++i) {
          const double dot = dP.row(i).dot(P.row(i));
          dS.row(i) = P.row(i).cwiseProduct(dP.row(i) - Mat::Constant(1, nk, dot));
        }
        if (nq_grad)
          dq.block(static_cast<long>(t) * nq, h * dh, nq, dh) += scale * (dS * Kb);
        if (nk_grad)
          dk.block(static_cast<long>(t) * nk, h * dh, nk, dh) += scale * (dS.transpose() * Qb);
      }
    }
    if (nq_grad) q.node()->accumulate(dq);
    if (nk_grad) k.node()->accumulate(dk);
    if (nv_grad) v.node()->accumulate(dv);
  });
}

// ---------------------------------------------------------------------------
// Fused LSTM

namespace {
struct LstmSaved {
  Mat i, f, g, o, c, tc;  // all (frames*rows) x h
};
}  // namespace

Var lstm_seq(const Var& x, const Var& wx, const Var& wh, const Var& b, int frames, int rows,
             bool reverse) {
  const long h = wh.val().rows();
  if (wx.val().cols() != 4 * h || wh.val().cols() != 4 * h || b.val().cols() != 4 * h)
    throw Error("lstm_seq: weight shapes disagree");
  const long N = static_cast<long>(frames) * rows;
  if (x.val().rows() != N) throw Error("lstm_seq: input pack shape mismatch");

  // Input contribution for every step in one product.
  Mat gin = (x.val() * wx.val()).rowwise() + b.val().row(0);

  auto saved = std::make_shared<LstmSaved>();
  saved->i.resize(N, h);
  saved->f.resize(N, h);
  saved->g.resize(N, h);
  saved->o.resize(N, h);
  saved->c.resize(N, h);
  saved->tc.resize(N, h);
  Mat out(N, h);

  Mat hprev = Mat::Zero(rows, h);
  Mat cprev = Mat::Zero(rows, h);
  for (int s = 0; s < frames; ++s) {
    const int t = reverse ? frames - 1 - s : s;
    const long r0 = static_cast<long>(t) * rows;
    Mat gates = gin.middleRows(r0, rows) + hprev * wh.val();
    auto seg = [&](int q) { return gates.middleCols(q * h, h); };
    Mat ig = (1.0 / (1.0 + (-seg(0).array()).exp())).matrix();
    Mat fg = (1.0 / (1.0 + (-seg(1).array()).exp())).matrix();
    Mat gg = seg(2).array().tanh().matrix();
    Mat og = (1.0 / (1.0 + (-seg(3).array()).exp())).matrix();
    Mat c = fg.cwiseProduct(cprev) + ig.cwiseProduct(gg);
    Mat tc = c.array().tanh().matrix();
    Mat hh = og.cwiseProduct(tc);
    saved->i.middleRows(r0, rows) = ig;
    saved->f.middleRows(r0, rows) = fg;
    saved->g.middleRows(r0, rows) = gg;
    saved->o.middleRows(r0, rows) = og;
    saved->c.middleRows(r0, rows) = c;
    saved->tc.middleRows(r0, rows) = tc;
    out.middleRows(r0, rows) = hh;
    hprev = std::move(hh);
    cprev = std::move(c);
  }

  return make_node(std::move(out), {x, wx, wh, b},
                   [x, wx, wh, b, saved, frames, rows, reverse, h](Node& n) mutable {
    const long N = static_cast<long>(frames) * rows;
    Mat dx = Mat::Zero(N, x.val().cols());
    Mat dwx = Mat::Zero(wx.val().rows(), wx.val().cols());
    Mat dwh = Mat::Zero(wh.val().rows(), wh.val().cols());
    Mat db = Mat::Zero(1, 4 * h);
    Mat dh_carry = Mat::Zero(rows, h);
    Mat dc_carry = Mat::Zero(rows, h);

    for (int s = frames - 1; s >= 0; --s) {
      const int t = reverse ? frames - 1 - s : s;
      const long r0 = static_cast<long>(t) * rows;
      const int t_prev = reverse ? t + 1 : t - 1;  // earlier step in scan order
      const bool has_prev = s > 0;
      const long rp = has_prev ? static_cast<long>(t_prev) * rows : 0;

      Mat dh = n.grad.middleRows(r0, rows) + dh_carry;
      auto ig = saved->i.middleRows(r0, rows);
      auto fg = saved->f.middleRows(r0, rows);
      auto gg = saved->g.middleRows(r0, rows);
      auto og = saved->o.middleRows(r0, rows);
      auto tc = saved->tc.middleRows(r0, rows);

      Mat do_ = dh.cwiseProduct(tc);
      Mat dc = dh.cwiseProduct(og).cwiseProduct(
                   (1.0 - tc.array().square()).matrix()) +
               dc_carry;
      Mat cprev = has_prev ? Mat(saved->c.middleRows(rp, rows)) : Mat(Mat::Zero(rows, h));
      Mat di = dc.cwiseProduct(gg);
      Mat df = dc.cwiseProduct(cprev);
      Mat dg = dc.cwiseProduct(ig);
      dc_carry = dc.cwiseProduct(fg);

      Mat dgates(rows, 4 * h);
      dgates.middleCols(0, h) = di.cwiseProduct(ig.cwiseProduct((1.0 - ig.array()).matrix()));
      dgates.middleCols(h, h) = df.cwiseProduct(fg.cwiseProduct((1.0 - fg.array()).matrix()));
      dgates.middleCols(2 * h, h) = dg.cwiseProduct((1.0 - gg.array().square()).matrix());
      dgates.middleCols(3 * h, h) = do_.cwiseProduct(og.cwiseProduct((1.0 - og.array()).matrix()));

      dx.middleRows(r0, rows) = dgates * wx.val().transpose();
      dwx += x.val().middleRows(r0, rows).transpose() * dgates;
      if (has_prev) {
        Mat hprev = n.val.middleRows(rp, rows);
        dwh += hprev.transpose() * dgates;
        dh_carry = dgates * wh.val().transpose();
      } else {
        dh_carry.setZero();
      }
      db += dgates.colwise().sum();
    }
    if (x.requires_grad()) x.node()->accumulate(dx);
    if (wx.requires_grad()) wx.node()->accumulate(dwx);
    if (wh.requires_grad()) wh.node()->accumulate(dwh);
    if (b.requires_grad()) b.node()->accumulate(db);
  });
}

}  // namespace midas::ad
