#pragma once

#include <span>
#include <vector>

#include "alignlab/network.hpp"

// Hot loops of training. `kernels::` is the production path: OpenMP across
// samples in the forward pass and across neuron blocks in the backward pass,
// SIMD across neurons. `reference::` is a direct serial transcription of the
// formulas that the tests and the benchmark compare against.
//
// Neither path splits a reduction across threads, so results do not depend
// on the thread count.

namespace alignlab::kernels {

/// Scratch buffers reused across steps.
struct Workspace {
  std::vector<double> act;   // chunk x m, sigma(z)
  std::vector<double> dact;  // chunk x m, sigma'(z)
  std::vector<double> resid;
  std::vector<double> xbuf;  // chunk x d, gathered inputs
};

inline constexpr std::size_t kChunk = 256;

/// Accumulates the batch gradient into `out` (resized as needed) and returns
/// the batch loss (1/2|B|) sum r_k^2.
double batch_gradient(const NetParams& params, const RowMat& X, const Vec& y,
                      std::span<const std::size_t> batch, Workspace& ws, Vec& grad_a,
                      NeuronMat& grad_W);

/// h(x_k) for every row of X.
void predict(const NetParams& params, const RowMat& X, Workspace& ws, Vec& out);

/// (1/2n) sum (h(x_k) - y_k)^2 with a fixed pairwise summation tree.
double loss(const NetParams& params, const RowMat& X, const Vec& y, Workspace& ws);

/// Fixed-order pairwise sum.
double pairwise_sum(std::span<const double> v);

}  // namespace alignlab::kernels

namespace alignlab::reference {

double batch_gradient(const NetParams& params, const RowMat& X, const Vec& y,
                      std::span<const std::size_t> batch, Vec& grad_a, NeuronMat& grad_W);

double loss(const NetParams& params, const RowMat& X, const Vec& y);

}  // namespace alignlab::reference
