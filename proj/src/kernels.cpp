#include "alignlab/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace alignlab::kernels {

namespace {

// Below this many (sample, neuron) pairs a parallel region costs more than it saves.
constexpr std::size_t kParallelMin = 16384;
constexpr Eigen::Index kNeuronBlock = 256;

// Threads available to a parallel region opened here; 1 inside a sweep worker.
int max_threads() {
#ifdef _OPENMP
  return omp_in_parallel() ? 1 : omp_get_max_threads();
#else
  return 1;
#endif
}

void check_shapes(const NetParams& params, const RowMat& X, const Vec* y) {
  if (params.W.rows() != params.a.size() || params.W.cols() != X.cols() || (y && y->size() != X.rows())) {
    throw DimensionError("kernel inputs: network is " + std::to_string(params.a.size()) + "x" +
                         std::to_string(params.W.cols()) + ", data is " + std::to_string(X.rows()) + "x" +
                         std::to_string(X.cols()));
  }
}

void gather_rows(const RowMat& X, std::span<const std::size_t> rows, std::vector<double>& xbuf) {
  const auto d = static_cast<std::size_t>(X.cols());
  xbuf.resize(rows.size() * d);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const double* src = X.row(static_cast<Eigen::Index>(rows[b])).data();
    std::copy(src, src + d, xbuf.data() + b * d);
  }
}

void gather_range(const RowMat& X, std::size_t begin, std::size_t count, std::vector<double>& xbuf) {
  const auto d = static_cast<std::size_t>(X.cols());
  xbuf.resize(count * d);
  std::copy(X.data() + begin * d, X.data() + (begin + count) * d, xbuf.data());
}

/// z = W x for one sample, sigma applied in place; returns h = a . sigma(z).
/// `dz` receives sigma'(z) when non-null. D > 0 fixes the input dimension at
/// compile time so the neuron loop vectorises; D == 0 is the generic path.
/// Both paths perform the same floating-point operations per neuron.
template <int D>
double forward_one(const double* __restrict W, const double* __restrict a, const double* __restrict x,
                   Eigen::Index m, Eigen::Index d, Activation act, double* __restrict z,
                   double* __restrict dz) {
  if constexpr (D > 0) {
#pragma omp simd
    for (Eigen::Index i = 0; i < m; ++i) {
      double zi = x[0] * W[i];
      for (int j = 1; j < D; ++j) zi += x[j] * W[j * m + i];
      z[i] = zi;
    }
  } else {
#pragma omp simd
    for (Eigen::Index i = 0; i < m; ++i) z[i] = x[0] * W[i];
    for (Eigen::Index j = 1; j < d; ++j) {
      const double xj = x[j];
      const double* Wj = W + j * m;
#pragma omp simd
      for (Eigen::Index i = 0; i < m; ++i) z[i] += xj * Wj[i];
    }
  }
  double h = 0.0;
  if (act == Activation::ReLU) {
#pragma omp simd reduction(+ : h)
    for (Eigen::Index i = 0; i < m; ++i) {
      const double zi = z[i];
      const bool on = zi > 0.0;
      if (dz != nullptr) dz[i] = on ? 1.0 : 0.0;
      z[i] = on ? zi : 0.0;
      h += a[i] * z[i];
    }
    return h;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const double zi = z[i];
    const double cdf = normal_cdf(zi);
    if (dz != nullptr) dz[i] = cdf + zi * std::exp(-0.5 * zi * zi) * 0.39894228040143267794;
    z[i] = zi * cdf;
  }
#pragma omp simd reduction(+ : h)
  for (Eigen::Index i = 0; i < m; ++i) h += a[i] * z[i];
  return h;
}

/// ga += act * r and gW[:, j] += dact * (x_j r) over neurons [i0, i1).
template <int D>
void accumulate_one(const double* __restrict ab, const double* __restrict db, const double* __restrict xk,
                    double r, Eigen::Index m, Eigen::Index d, Eigen::Index i0, Eigen::Index i1,
                    double* __restrict ga, double* __restrict gW) {
  if constexpr (D > 0) {
    double xr[D];
    for (int j = 0; j < D; ++j) xr[j] = xk[j] * r;
#pragma omp simd
    for (Eigen::Index i = i0; i < i1; ++i) {
      ga[i] += ab[i] * r;
      const double di = db[i];
      for (int j = 0; j < D; ++j) gW[j * m + i] += di * xr[j];
    }
  } else {
#pragma omp simd
    for (Eigen::Index i = i0; i < i1; ++i) ga[i] += ab[i] * r;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double xrj = xk[j] * r;
      double* gWj = gW + j * m;
#pragma omp simd
      for (Eigen::Index i = i0; i < i1; ++i) gWj[i] += db[i] * xrj;
    }
  }
}

struct KernelFns {
  double (*forward)(const double*, const double*, const double*, Eigen::Index, Eigen::Index, Activation,
                    double*, double*);
  void (*accumulate)(const double*, const double*, const double*, double, Eigen::Index, Eigen::Index,
                     Eigen::Index, Eigen::Index, double*, double*);
};

template <int D>
constexpr KernelFns fns_for() {
  return {&forward_one<D>, &accumulate_one<D>};
}

KernelFns dispatch(Eigen::Index d) {
  switch (d) {
    case 1: return fns_for<1>();
    case 2: return fns_for<2>();
    case 3: return fns_for<3>();
    case 4: return fns_for<4>();
    case 5: return fns_for<5>();
    case 10: return fns_for<10>();
    default: return fns_for<0>();
  }
}

}  // namespace

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double e : v) s += e;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double batch_gradient(const NetParams& params, const RowMat& X, const Vec& y,
                      std::span<const std::size_t> batch, Workspace& ws, Vec& grad_a,
                      NeuronMat& grad_W) {
  check_shapes(params, X, &y);
  const Eigen::Index m = params.a.size();
  const Eigen::Index d = params.W.cols();
  const Activation act = params.activation;
  const KernelFns fn = dispatch(d);
  grad_a.setZero(m);
  grad_W.setZero(m, d);
  const double* W = params.W.data();
  const double* a = params.a.data();
  double* ga = grad_a.data();
  double* gW = grad_W.data();

  std::vector<double> sq;
  sq.reserve(batch.size());
  for (std::size_t start = 0; start < batch.size(); start += kChunk) {
    const std::size_t B = std::min(kChunk, batch.size() - start);
    const auto rows = batch.subspan(start, B);
    gather_rows(X, rows, ws.xbuf);
    ws.act.resize(B * static_cast<std::size_t>(m));
    ws.dact.resize(B * static_cast<std::size_t>(m));
    ws.resid.resize(B);
    double* actp = ws.act.data();
    double* dactp = ws.dact.data();
    double* resid = ws.resid.data();
    const double* xb = ws.xbuf.data();
    const bool par = B * static_cast<std::size_t>(m) >= kParallelMin && max_threads() > 1;

    if (!par) {
      // One pass per sample keeps z in L1; per-neuron accumulation order is
      // the same as the two-phase path below, so results are bitwise equal.
      for (std::size_t b = 0; b < B; ++b) {
        double* ab = actp;
        double* db = dactp;
        const double* xk = xb + b * d;
        const double r = y[static_cast<Eigen::Index>(rows[b])] - fn.forward(W, a, xk, m, d, act, ab, db);
        sq.push_back(r * r);
        fn.accumulate(ab, db, xk, r, m, d, 0, m, ga, gW);
      }
      continue;
    }

#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < B; ++b) {
      const double h = fn.forward(W, a, xb + b * d, m, d, act, actp + b * m, dactp + b * m);
      resid[b] = y[static_cast<Eigen::Index>(rows[b])] - h;
    }
    for (std::size_t b = 0; b < B; ++b) sq.push_back(resid[b] * resid[b]);

    const Eigen::Index nblocks = (m + kNeuronBlock - 1) / kNeuronBlock;
#pragma omp parallel for schedule(static)
    for (Eigen::Index blk = 0; blk < nblocks; ++blk) {
      const Eigen::Index i0 = blk * kNeuronBlock;
      const Eigen::Index i1 = std::min(m, i0 + kNeuronBlock);
      for (std::size_t b = 0; b < B; ++b)
        fn.accumulate(actp + b * m, dactp + b * m, xb + b * d, resid[b], m, d, i0, i1, ga, gW);
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  grad_a *= -inv;
  for (Eigen::Index j = 0; j < d; ++j) grad_W.col(j).array() *= -inv * params.a.array();
  return 0.5 * pairwise_sum(sq) * inv;
}

void predict(const NetParams& params, const RowMat& X, Workspace& ws, Vec& out) {
  check_shapes(params, X, nullptr);
  const Eigen::Index m = params.a.size();
  const Eigen::Index d = params.W.cols();
  const auto n = static_cast<std::size_t>(X.rows());
  out.resize(X.rows());
  const double* W = params.W.data();
  const double* a = params.a.data();
  const KernelFns fn = dispatch(d);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t B = std::min(kChunk, n - start);
    gather_range(X, start, B, ws.xbuf);
    ws.act.resize(B * static_cast<std::size_t>(m));
    double* actp = ws.act.data();
    const double* xb = ws.xbuf.data();
    const bool par = B * static_cast<std::size_t>(m) >= kParallelMin && max_threads() > 1;
#pragma omp parallel for schedule(static) if (par)
    for (std::size_t b = 0; b < B; ++b)
      out[static_cast<Eigen::Index>(start + b)] =
          fn.forward(W, a, xb + b * d, m, d, params.activation, actp + (par ? b * m : 0), nullptr);
  }
}

double loss(const NetParams& params, const RowMat& X, const Vec& y, Workspace& ws) {
  check_shapes(params, X, &y);
  Vec h;
  predict(params, X, ws, h);
  std::vector<double> sq(static_cast<std::size_t>(y.size()));
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const double r = h[k] - y[k];
    sq[static_cast<std::size_t>(k)] = r * r;
  }
  return 0.5 * pairwise_sum(sq) / static_cast<double>(y.size());
}

}  // namespace alignlab::kernels

namespace alignlab::reference {

double batch_gradient(const NetParams& params, const RowMat& X, const Vec& y,
                      std::span<const std::size_t> batch, Vec& grad_a, NeuronMat& grad_W) {
  const auto m = params.m();
  const auto d = params.d();
  const auto B = batch.size();
  std::vector<double> z(B * m);
  std::vector<double> resid(B);
  double sq = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const auto k = static_cast<Eigen::Index>(batch[b]);
    double h = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double zi = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        zi += params.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
              X(k, static_cast<Eigen::Index>(j));
      z[b * m + i] = zi;
      h += params.a[static_cast<Eigen::Index>(i)] * activate(params.activation, zi);
    }
    resid[b] = y[k] - h;
    sq += resid[b] * resid[b];
  }
  grad_a.setZero(static_cast<Eigen::Index>(m));
  grad_W.setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    // D_batch(w_i) = (1/B) sum_k sigma'(x_k.w_i) r_k x_k
    Vec D = Vec::Zero(static_cast<Eigen::Index>(d));
    double sa = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double zi = z[b * m + i];
      D += activate_derivative(params.activation, zi) * resid[b] *
           X.row(static_cast<Eigen::Index>(batch[b])).transpose();
      sa += activate(params.activation, zi) * resid[b];
    }
    D /= static_cast<double>(B);
    grad_W.row(ii) = -params.a[ii] * D.transpose();
    grad_a[ii] = -sa / static_cast<double>(B);
  }
  return 0.5 * sq / static_cast<double>(B);
}

double loss(const NetParams& params, const RowMat& X, const Vec& y) {
  double sq = 0.0;
  for (Eigen::Index k = 0; k < X.rows(); ++k) {
    const double r = forward(params, X.row(k).transpose()) - y[k];
    sq += r * r;
  }
  return 0.5 * sq / static_cast<double>(X.rows());
}

}  // namespace alignlab::reference
