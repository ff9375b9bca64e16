#include <cmath>

#include <Eigen/Dense>

#include "inpaint360/errors.hpp"
#include "inpaint360/random.hpp"
#include "inpaint360/shape_prior.hpp"

namespace inpaint360 {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using StridedMat = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedMat = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CTapMat = Eigen::Map<const RowMat<T>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

// Activations are stored with a one-voxel zero border, (C, D+2, D+2, D+2),
// so each of the 27 convolution taps is a constant offset into the flat
// array and the convolution becomes 27 small GEMMs on contiguous slices.
struct Grid {
  int D = 0, Dp = 0;
  std::size_t P = 0;
  explicit Grid(int d) : D(d), Dp(d + 2), P(static_cast<std::size_t>(d + 2) * (d + 2) * (d + 2)) {}
  std::size_t at(int c, int z, int y, int x) const {
    return ((static_cast<std::size_t>(c) * Dp + z + 1) * Dp + y + 1) * Dp + x + 1;
  }
  // Flat range covering every interior voxel, and the flat offset of a tap.
  std::ptrdiff_t first() const { return static_cast<std::ptrdiff_t>(Dp) * Dp + Dp + 1; }
  std::ptrdiff_t span() const { return static_cast<std::ptrdiff_t>(P) - 2 * first(); }
  std::ptrdiff_t offset(int o) const {
    return (static_cast<std::ptrdiff_t>(o / 9 - 1) * Dp + (o / 3) % 3 - 1) * Dp + o % 3 - 1;
  }
};

template <typename T>
void zero_border(T* a, int C, const Grid& g) {
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < g.Dp; ++z)
      for (int y = 0; y < g.Dp; ++y) {
        T* row = a + ((static_cast<std::size_t>(c) * g.Dp + z) * g.Dp + y) * g.Dp;
        if (z == 0 || y == 0 || z == g.Dp - 1 || y == g.Dp - 1) {
          std::fill(row, row + g.Dp, T(0));
        } else {
          row[0] = T(0);
          row[g.Dp - 1] = T(0);
        }
      }
}

template <typename T>
void avg_pool(const T* in, int C, const Grid& gi, T* out, const Grid& go) {
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < go.D; ++z)
      for (int y = 0; y < go.D; ++y)
        for (int x = 0; x < go.D; ++x) {
          T s = 0;
          for (int k = 0; k < 8; ++k) s += in[gi.at(c, 2 * z + (k >> 2), 2 * y + ((k >> 1) & 1), 2 * x + (k & 1))];
          out[go.at(c, z, y, x)] = s / T(8);
        }
}

template <typename T>
void avg_pool_adjoint(const T* d_out, int C, const Grid& gi, T* d_in, const Grid& go) {
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < go.D; ++z)
      for (int y = 0; y < go.D; ++y)
        for (int x = 0; x < go.D; ++x) {
          const T g = d_out[go.at(c, z, y, x)] / T(8);
          for (int k = 0; k < 8; ++k) d_in[gi.at(c, 2 * z + (k >> 2), 2 * y + ((k >> 1) & 1), 2 * x + (k & 1))] += g;
        }
}

// Nearest upsampling from the coarse grid, added into out.
template <typename T>
void upsample_add(const T* in, int C, const Grid& gc, T* out, const Grid& gf) {
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < gf.D; ++z)
      for (int y = 0; y < gf.D; ++y)
        for (int x = 0; x < gf.D; ++x) out[gf.at(c, z, y, x)] += in[gc.at(c, z / 2, y / 2, x / 2)];
}

template <typename T>
void upsample_adjoint(const T* d_out, int C, const Grid& gc, T* d_in, const Grid& gf) {
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < gf.D; ++z)
      for (int y = 0; y < gf.D; ++y)
        for (int x = 0; x < gf.D; ++x) d_in[gc.at(c, z / 2, y / 2, x / 2)] += d_out[gf.at(c, z, y, x)];
}

template <typename T>
T sigm(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

std::vector<double> timestep_embedding(int t, int dim) {
  std::vector<double> e(dim, 0.0);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double f = std::exp(-std::log(10000.0) * i / half);
    e[i] = std::sin(t * f);
    e[i + half] = std::cos(t * f);
  }
  return e;
}

template <typename T>
void DenoiserNet<T>::layout() {
  const auto& s = shape_;
  const int io[6][2] = {{1, s.c0}, {s.c0, s.c1}, {s.c1, s.c1}, {s.c1, s.c0}, {s.c0, s.c0}, {s.c0, 1}};
  layers_.clear();
  std::size_t off = 0;
  for (int l = 0; l < 6; ++l) {
    Layer L;
    L.cin = io[l][0];
    L.cout = io[l][1];
    L.w = off;
    off += static_cast<std::size_t>(L.cout) * L.cin * 27;
    L.b = off;
    off += L.cout;
    if (l < 5) {
      L.emb = off;
      off += static_cast<std::size_t>(L.cout) * s.embed_dim;
    } else {
      L.emb = kNone;
    }
    layers_.push_back(L);
  }
  params_.assign(off, T(0));
}

template <typename T>
DenoiserNet<T>::DenoiserNet(const DenoiserShape& shape, std::uint64_t seed) : shape_(shape) {
  if (shape.m < 4 || shape.m % 4 != 0) throw BadSpec("denoiser: m must be a positive multiple of 4");
  if (shape.c0 < 1 || shape.c1 < 1 || shape.embed_dim < 2 || shape.embed_dim % 2)
    throw BadSpec("denoiser: bad channel or embedding size");
  layout();
  Rng rng = make_rng(seed, {0xde701eULL});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    const double fan_in = L.cin * 27.0;
    const double scale = l + 1 == layers_.size() ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < static_cast<std::size_t>(L.cout) * L.cin * 27; ++i)
      params_[L.w + i] = static_cast<T>(scale * normal01(rng));
    if (L.emb != kNone)
      for (std::size_t i = 0; i < static_cast<std::size_t>(L.cout) * shape.embed_dim; ++i)
        params_[L.emb + i] = static_cast<T>(normal01(rng) / std::sqrt(static_cast<double>(shape.embed_dim)));
  }
}

template <typename T>
template <typename U>
DenoiserNet<U> DenoiserNet<T>::cast() const {
  DenoiserNet<U> out;
  out.shape_ = shape_;
  out.layout();
  for (std::size_t i = 0; i < params_.size(); ++i) out.params_[i] = static_cast<U>(params_[i]);
  return out;
}

template <typename T>
void DenoiserNet<T>::forward(std::span<const T> x, int t, std::span<T> eps_out, Cache* cache) const {
  const int m = shape_.m;
  const std::size_t V0 = static_cast<std::size_t>(m) * m * m;
  if (x.size() != V0 || eps_out.size() != V0) throw DimensionMismatch("denoiser: input must have m^3 entries");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.t = t;
  const auto emb = timestep_embedding(t, shape_.embed_dim);
  c.embed.assign(emb.begin(), emb.end());
  c.inputs.resize(6);
  c.pre.resize(6);
  const Grid g0(m), g1(m / 2), g2(m / 4);
  const Grid* grids[6] = {&g0, &g1, &g2, &g1, &g0, &g0};
  const int c0 = shape_.c0, c1 = shape_.c1;

  // Layer l reads c.inputs[l] (padded) and writes its pre-activation with a
  // zero border into c.pre[l].
  auto conv = [&](int l) {
    const Layer& L = layers_[l];
    const Grid& g = *grids[l];
    auto& pre = c.pre[l];
    pre.assign(static_cast<std::size_t>(L.cout) * g.P, T(0));
    const T* in = c.inputs[l].data();
    StridedMat<T> out(pre.data() + g.first(), L.cout, g.span(), Eigen::OuterStride<>(g.P));
    for (int o = 0; o < 27; ++o) {
      const CTapMat<T> w(params_.data() + L.w + o, L.cout, L.cin, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(L.cin * 27, 27));
      out.noalias() += w * CStridedMat<T>(in + g.first() + g.offset(o), L.cin, g.span(), Eigen::OuterStride<>(g.P));
    }
    for (int o = 0; o < L.cout; ++o) {
      T bias = params_[L.b + o];
      if (L.emb != kNone)
        for (int e = 0; e < shape_.embed_dim; ++e)
          bias += params_[L.emb + static_cast<std::size_t>(o) * shape_.embed_dim + e] * c.embed[e];
      out.row(o).array() += bias;
    }
    zero_border(pre.data(), L.cout, g);
  };
  auto silu = [](const AlignedVector<T>& pre) {
    AlignedVector<T> a(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) a[i] = pre[i] * sigm(pre[i]);
    return a;
  };

  c.inputs[0].assign(g0.P, T(0));
  for (int z = 0; z < m; ++z)
    for (int y = 0; y < m; ++y)
      for (int xx = 0; xx < m; ++xx) c.inputs[0][g0.at(0, z, y, xx)] = x[(static_cast<std::size_t>(z) * m + y) * m + xx];
  conv(0);
  const AlignedVector<T> e0 = silu(c.pre[0]);
  c.inputs[1].assign(static_cast<std::size_t>(c0) * g1.P, T(0));
  avg_pool(e0.data(), c0, g0, c.inputs[1].data(), g1);
  conv(1);
  const AlignedVector<T> e1 = silu(c.pre[1]);
  c.inputs[2].assign(static_cast<std::size_t>(c1) * g2.P, T(0));
  avg_pool(e1.data(), c1, g1, c.inputs[2].data(), g2);
  conv(2);
  const AlignedVector<T> b = silu(c.pre[2]);
  c.inputs[3] = e1;
  upsample_add(b.data(), c1, g2, c.inputs[3].data(), g1);
  conv(3);
  const AlignedVector<T> d1 = silu(c.pre[3]);
  c.inputs[4] = e0;
  upsample_add(d1.data(), c0, g1, c.inputs[4].data(), g0);
  conv(4);
  c.inputs[5] = silu(c.pre[4]);
  conv(5);
  for (int z = 0; z < m; ++z)
    for (int y = 0; y < m; ++y)
      for (int xx = 0; xx < m; ++xx) eps_out[(static_cast<std::size_t>(z) * m + y) * m + xx] = c.pre[5][g0.at(0, z, y, xx)];
}

template <typename T>
void DenoiserNet<T>::backward(const Cache& c, std::span<const T> d_eps, std::span<T> grad) const {
  const int m = shape_.m;
  const std::size_t V0 = static_cast<std::size_t>(m) * m * m;
  if (grad.size() != params_.size()) throw DimensionMismatch("denoiser: gradient buffer size");
  if (d_eps.size() != V0 || c.pre.size() != 6) throw DimensionMismatch("denoiser: backward without a matching forward");
  const Grid g0(m), g1(m / 2), g2(m / 4);
  const Grid* grids[6] = {&g0, &g1, &g2, &g1, &g0, &g0};
  const int c0 = shape_.c0, c1 = shape_.c1;

  // Given d(pre) of layer l (zero border): accumulate parameter gradients,
  // return d(input) with a zero border.
  auto conv_back = [&](int l, const AlignedVector<T>& d_pre) {
    const Layer& L = layers_[l];
    const Grid& g = *grids[l];
    const CStridedMat<T> D(d_pre.data() + g.first(), L.cout, g.span(), Eigen::OuterStride<>(g.P));
    const T* in = c.inputs[l].data();
    AlignedVector<T> d_in(static_cast<std::size_t>(L.cin) * g.P, T(0));
    RowMat<T> dw(L.cout, L.cin);
    for (int o = 0; o < 27; ++o) {
      const CStridedMat<T> I(in + g.first() + g.offset(o), L.cin, g.span(), Eigen::OuterStride<>(g.P));
      dw.noalias() = D * I.transpose();
      for (int co = 0; co < L.cout; ++co)
        for (int ci = 0; ci < L.cin; ++ci) grad[L.w + (static_cast<std::size_t>(co) * L.cin + ci) * 27 + o] += dw(co, ci);
      const CTapMat<T> w(params_.data() + L.w + o, L.cout, L.cin, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(L.cin * 27, 27));
      StridedMat<T>(d_in.data() + g.first() + g.offset(o), L.cin, g.span(), Eigen::OuterStride<>(g.P)).noalias() +=
          w.transpose() * D;
    }
    for (int o = 0; o < L.cout; ++o) {
      const T s = D.row(o).sum();
      grad[L.b + o] += s;
      if (L.emb != kNone)
        for (int e = 0; e < shape_.embed_dim; ++e)
          grad[L.emb + static_cast<std::size_t>(o) * shape_.embed_dim + e] += s * c.embed[e];
    }
    zero_border(d_in.data(), L.cin, g);
    return d_in;
  };
  auto silu_back = [](const AlignedVector<T>& pre, AlignedVector<T>& d) {
    for (std::size_t i = 0; i < pre.size(); ++i) {
      const T s = sigm(pre[i]);
      d[i] *= s * (T(1) + pre[i] * (T(1) - s));
    }
  };

  AlignedVector<T> d_head(g0.P, T(0));
  for (int z = 0; z < m; ++z)
    for (int y = 0; y < m; ++y)
      for (int x = 0; x < m; ++x) d_head[g0.at(0, z, y, x)] = d_eps[(static_cast<std::size_t>(z) * m + y) * m + x];
  AlignedVector<T> d_d0 = conv_back(5, d_head);
  silu_back(c.pre[4], d_d0);
  const AlignedVector<T> d_s0 = conv_back(4, d_d0);
  AlignedVector<T> d_e0 = d_s0;
  AlignedVector<T> d_d1(static_cast<std::size_t>(c0) * g1.P, T(0));
  upsample_adjoint(d_s0.data(), c0, g1, d_d1.data(), g0);
  silu_back(c.pre[3], d_d1);
  const AlignedVector<T> d_s1 = conv_back(3, d_d1);
  AlignedVector<T> d_e1 = d_s1;
  AlignedVector<T> d_b(static_cast<std::size_t>(c1) * g2.P, T(0));
  upsample_adjoint(d_s1.data(), c1, g2, d_b.data(), g1);
  silu_back(c.pre[2], d_b);
  const AlignedVector<T> d_p1 = conv_back(2, d_b);
  avg_pool_adjoint(d_p1.data(), c1, g1, d_e1.data(), g2);
  silu_back(c.pre[1], d_e1);
  const AlignedVector<T> d_p0 = conv_back(1, d_e1);
  avg_pool_adjoint(d_p0.data(), c0, g0, d_e0.data(), g1);
  silu_back(c.pre[0], d_e0);
  conv_back(0, d_e0);
}

template class DenoiserNet<float>;
template class DenoiserNet<double>;
template DenoiserNet<double> DenoiserNet<float>::cast<double>() const;
template DenoiserNet<float> DenoiserNet<double>::cast<float>() const;

}  // namespace inpaint360
