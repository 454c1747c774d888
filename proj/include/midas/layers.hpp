#pragma once

#include <string>
#include <vector>

#include "midas/ad.hpp"

namespace midas::nn {

using ad::Mat;
using ad::Var;

// Named parameter registry. Layers hold indices into the store; each graph
// (one per window during training) works on its own leaf handles so batched
// backward passes never share mutable state.
struct ParamStore {
  struct Entry {
    std::string name;
    Mat value;
  };
  std::vector<Entry> entries;

  int add(const std::string& name, int rows, int cols, Rng& rng);  // Xavier uniform
  int add_full(const std::string& name, int rows, int cols, double fill);
  long total_params() const;
};

struct ParamRefs {
  std::vector<Var> vars;
  const Var& operator[](int i) const { return vars[static_cast<std::size_t>(i)]; }
};

ParamRefs make_refs(const ParamStore& store, bool requires_grad);

struct Linear {
  int w = -1, b = -1;
  static Linear create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng);
  Var operator()(const ParamRefs& p, const Var& x) const;
};

struct LayerNorm {
  int gamma = -1, beta = -1;
  static LayerNorm create(ParamStore& ps, const std::string& name, int dim);
  Var operator()(const ParamRefs& p, const Var& x) const;
};

// Shared context for graph construction: dropout is active only when rng is
// set (training mode).
struct GraphCtx {
  double dropout = 0.0;
  Rng* rng = nullptr;

  Var maybe_dropout(const Var& x) const {
    if (rng == nullptr || dropout <= 0.0) return x;
    return ad::dropout(x, dropout, *rng);
  }
};

// Multihead attention block of the set-attention family:
//   MAB(X, Y) = LN(H + rFF(H)),  H = LN(X + Multihead(X, Y, Y)).
struct Mab {
  Linear wq, wk, wv, wo, ff1, ff2;
  LayerNorm ln1, ln2;
  int heads = 4;
  static Mab create(ParamStore& ps, const std::string& name, int dim, int heads, Rng& rng);
  // x: (frames*nq) x m, y: (frames*nk) x m, attention within each frame block.
  Var operator()(const ParamRefs& p, const GraphCtx& ctx, const Var& x, const Var& y, int frames,
                 int nq, int nk) const;
};

// Induced set-attention block: ISAB(X) = MAB(X, MAB(I, X)).
struct Isab {
  Mab mab1, mab2;
  int inducing = -1;  // param index, (points x m)
  int points = 16;
  static Isab create(ParamStore& ps, const std::string& name, int dim, int heads, int points,
                     Rng& rng);
  Var operator()(const ParamRefs& p, const GraphCtx& ctx, const Var& x, int frames,
                 int agents) const;
};

// Pooling by multihead attention with one seed: PMA(Z) = MAB(S, rFF(Z)).
struct Pma {
  Mab mab;
  Linear ff1, ff2;
  int seed = -1;  // param index, (1 x m)
  static Pma create(ParamStore& ps, const std::string& name, int dim, int heads, Rng& rng);
  Var operator()(const ParamRefs& p, const GraphCtx& ctx, const Var& z, int frames,
                 int agents) const;
};

struct Lstm {
  int wx = -1, wh = -1, b = -1;
  static Lstm create(ParamStore& ps, const std::string& name, int in, int hidden, Rng& rng);
  Var operator()(const ParamRefs& p, const Var& x, int frames, int rows, bool reverse) const;
};

// Forward + backward pass, outputs concatenated to 2h.
struct BiLstm {
  Lstm fwd, bwd;
  static BiLstm create(ParamStore& ps, const std::string& name, int in, int hidden, Rng& rng);
  Var operator()(const ParamRefs& p, const GraphCtx& ctx, const Var& x, int frames,
                 int rows) const;
};

}  // namespace midas::nn
