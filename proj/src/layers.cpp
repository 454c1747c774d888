#include "midas/layers.hpp"

#include <cmath>

namespace midas::nn {

int ParamStore::add(const std::string& name, int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> d(-bound, bound);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = d(rng);
  entries.push_back({name, std::move(m)});
  return static_cast<int>(entries.size()) - 1;
}

int ParamStore::add_full(const std::string& name, int rows, int cols, double fill) {
  entries.push_back({name, Mat::Constant(rows, cols, fill)});
  return static_cast<int>(entries.size()) - 1;
}

long ParamStore::total_params() const {
  long n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

ParamRefs make_refs(const ParamStore& store, bool requires_grad) {
  ParamRefs refs;
  refs.vars.reserve(store.entries.size());
  for (const auto& e : store.entries) refs.vars.push_back(ad::leaf(e.value, requires_grad));
  return refs;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.w = ps.add(name + ".w", in, out, rng);
  l.b = ps.add_full(name + ".b", 1, out, 0.0);
  return l;
}

Var Linear::operator()(const ParamRefs& p, const Var& x) const {
  return ad::add_rowbc(ad::matmul(x, p[w]), p[b]);
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gamma = ps.add_full(name + ".gamma", 1, dim, 1.0);
  ln.beta = ps.add_full(name + ".beta", 1, dim, 0.0);
  return ln;
}

Var LayerNorm::operator()(const ParamRefs& p, const Var& x) const {
  return ad::layernorm_rows(x, p[gamma], p[beta]);
}

Mab Mab::create(ParamStore& ps, const std::string& name, int dim, int heads, Rng& rng) {
  Mab m;
  m.heads = heads;
  m.wq = Linear::create(ps, name + ".wq", dim, dim, rng);
  m.wk = Linear::create(ps, name + ".wk", dim, dim, rng);
  m.wv = Linear::create(ps, name + ".wv", dim, dim, rng);
  m.wo = Linear::create(ps, name + ".wo", dim, dim, rng);
  m.ff1 = Linear::create(ps, name + ".ff1", dim, dim, rng);
  m.ff2 = Linear::create(ps, name + ".ff2", dim, dim, rng);
  m.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
  m.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
  return m;
}

Var Mab::operator()(const ParamRefs& p, const GraphCtx& ctx, const Var& x, const Var& y,
                    int frames, int nq, int nk) const {
  Var q = wq(p, x);
  Var k = wk(p, y);
  Var v = wv(p, y);
  Var att = wo(p, ad::frame_attention(q, k, v, frames, nq, nk, heads));
  Var h = ln1(p, ad::add(x, ctx.maybe_dropout(att)));
  Var ff = ff2(p, ad::relu(ff1(p, h)));
  return ln2(p, ad::add(h, ff));
}

Isab Isab::create(ParamStore& ps, const std::string& name, int dim, int heads, int points,
                  Rng& rng) {
  Isab b;
  b.points = points;
  b.inducing = ps.add(name + ".inducing", points, dim, rng);
  b.mab1 = Mab::create(ps, name + ".mab1", dim, heads, rng);
  b.mab2 = Mab::create(ps, name + ".mab2", dim, heads, rng);
  return b;
}

Var Isab::operator()(const ParamRefs& p, const GraphCtx& ctx, const Var& x, int frames,
                     int agents) const {
  Var ind = ad::tile_rows(p[inducing], frames);
  Var h = mab1(p, ctx, ind, x, frames, points, agents);
  return mab2(p, ctx, x, h, frames, agents, points);
}

Pma Pma::create(ParamStore& ps, const std::string& name, int dim, int heads, Rng& rng) {
  Pma m;
  m.seed = ps.add(name + ".seed", 1, dim, rng);
  m.ff1 = Linear::create(ps, name + ".ff1", dim, dim, rng);
  m.ff2 = Linear::create(ps, name + ".ff2", dim, dim, rng);
  m.mab = Mab::create(ps, name + ".mab", dim, heads, rng);
  return m;
}

Var Pma::operator()(const ParamRefs& p, const GraphCtx& ctx, const Var& z, int frames,
                    int agents) const {
  Var zf = ff2(p, ad::relu(ff1(p, z)));
  Var s = ad::tile_rows(p[seed], frames);
  return mab(p, ctx, s, zf, frames, 1, agents);
}

Lstm Lstm::create(ParamStore& ps, const std::string& name, int in, int hidden, Rng& rng) {
  Lstm l;
  l.wx = ps.add(name + ".wx", in, 4 * hidden, rng);
  l.wh = ps.add(name + ".wh", hidden, 4 * hidden, rng);
  // Forget-gate bias starts at 1 so early training does not wash out state.
  Mat b = Mat::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setOnes();
  l.b = ps.add_full(name + ".b", 1, 4 * hidden, 0.0);
  ps.entries.back().value = b;
  return l;
}

Var Lstm::operator()(const ParamRefs& p, const Var& x, int frames, int rows, bool reverse) const {
  return ad::lstm_seq(x, p[wx], p[wh], p[b], frames, rows, reverse);
}

BiLstm BiLstm::create(ParamStore& ps, const std::string& name, int in, int hidden, Rng& rng) {
  BiLstm b;
  b.fwd = Lstm::create(ps, name + ".fwd", in, hidden, rng);
  b.bwd = Lstm::create(ps, name + ".bwd", in, hidden, rng);
  return b;
}

Var BiLstm::operator()(const ParamRefs& p, const GraphCtx& ctx, const Var& x, int frames,
                       int rows) const {
  Var hf = fwd(p, x, frames, rows, false);
  Var hb = bwd(p, x, frames, rows, true);
  return ctx.maybe_dropout(ad::concat_cols({hf, hb}));
}

}  // namespace midas::nn
