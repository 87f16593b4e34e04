#pragma once

#include <cstddef>
#include <vector>

#include "hgmamba/matrix.hpp"
#include "hgmamba/scanner.hpp"

namespace hgmamba {

// Parameters of one scan direction: causal depthwise conv followed by a
// selective state-space recurrence.
struct SsmParams {
  GradSlot conv_kernel;  // d x conv_width, kernel[c][j] taps x[t-w+1+j]
  GradSlot conv_bias;    // 1 x d
  GradSlot a_log;        // d x d_state, state decay A = -exp(a_log)
  GradSlot delta_w;      // 1 x d, per-channel step-size scale
  GradSlot delta_b;      // 1 x d, per-channel step-size bias
  GradSlot b_proj;       // d x d_state, input gate projection
  GradSlot b_bias;       // 1 x d_state
  GradSlot c_proj;       // d x d_state, output gate projection
  GradSlot c_bias;       // 1 x d_state
  GradSlot d_skip;       // 1 x d, direct passthrough

  std::size_t dim() const { return conv_kernel.value.rows(); }
  std::size_t d_state() const { return a_log.value.cols(); }
  std::size_t conv_width() const { return conv_kernel.value.cols(); }
};

// Both directions plus the per-direction output norms.
struct BiSsmParams {
  SsmParams fwd;
  SsmParams bwd;
  GradSlot norm_f_gain;  // 1 x d
  GradSlot norm_f_bias;  // 1 x d
  GradSlot norm_b_gain;  // 1 x d
  GradSlot norm_b_bias;  // 1 x d
};

struct ConvCache {
  Matrix x;    // input window
  Matrix pre;  // pre-activation (before SiLU)
  std::size_t n_valid = 0;
};

struct ScanCache {
  Matrix x;                  // input window
  Matrix delta_pre;          // win x d, before softplus
  Matrix delta;              // win x d, after softplus
  Matrix bmat;               // win x d_state
  Matrix cmat;               // win x d_state
  Matrix a;                  // d x d_state, -exp(a_log)
  std::vector<double> abar;  // win*d*d_state, exp(delta*A)
  std::vector<double> h;     // win*d*d_state, hidden states
  std::size_t n_valid = 0;
};

struct BranchCache {
  ConvCache conv;
  ScanCache scan;
  LayerNormCache ln;
};

struct BiSsmCache {
  Matrix seq;  // input window as given
  std::size_t n_valid = 0;
  BranchCache fwd;
  BranchCache bwd;  // operates on the reversed valid prefix
  bool residual_input = true;
};

struct SsmGrads {
  Matrix conv_kernel;
  Matrix conv_bias;
  Matrix a_log;
  Matrix delta_w;
  Matrix delta_b;
  Matrix b_proj;
  Matrix b_bias;
  Matrix c_proj;
  Matrix c_bias;
  Matrix d_skip;
};

struct BiSsmGrads {
  SsmGrads fwd;
  SsmGrads bwd;
  Matrix norm_f_gain;
  Matrix norm_f_bias;
  Matrix norm_b_gain;
  Matrix norm_b_bias;
  Matrix seq;  // gradient w.r.t. the input window
};

// Reverses rows [0, n_valid); rows at and past n_valid are copied unchanged.
Matrix reverse_valid_prefix(const Matrix& x, std::size_t n_valid);

// Depthwise causal conv over the full window with SiLU; rows at and past
// n_valid are zeroed afterwards so padding never leaks downstream.
Matrix causal_conv1d(const Matrix& x, std::size_t n_valid,
                     const Matrix& kernel, const Matrix& bias,
                     ConvCache* cache);
Matrix causal_conv1d_backward(const Matrix& gy, const ConvCache& cache,
                              const Matrix& kernel, Matrix* g_kernel,
                              Matrix* g_bias);

// Selective state-space recurrence:
//   delta[t][c] = softplus(delta_w[c] * x[t][c] + delta_b[c])
//   B = x * b_proj + b_bias,  C = x * c_proj + c_bias
//   h[t][c][k]  = exp(delta*A[c][k]) * h[t-1][c][k] + delta * B[t][k] * x[t][c]
//   y[t][c]     = sum_k C[t][k] * h[t][c][k] + d_skip[c] * x[t][c]
// Runs over the full window; rows at and past n_valid are zeroed afterwards.
Matrix selective_scan(const Matrix& x, std::size_t n_valid,
                      const SsmParams& p, ScanCache* cache);
Matrix selective_scan_backward(const Matrix& gy, const ScanCache& cache,
                               const SsmParams& p, SsmGrads* grads);

// conv -> scan -> layer norm, padding rows zeroed after every stage.
Matrix ssm_branch(const Matrix& x, std::size_t n_valid, const SsmParams& p,
                  const Matrix& norm_gain, const Matrix& norm_bias,
                  BranchCache* cache);
Matrix ssm_branch_backward(const Matrix& gy, const BranchCache& cache,
                           const SsmParams& p, const Matrix& norm_gain,
                           SsmGrads* grads, Matrix* g_norm_gain,
                           Matrix* g_norm_bias);

// Forward branch on the window plus backward branch on the reversed valid
// prefix; the backward branch output is reversed back before summing.
// With residual_input the window itself is added to the sum.
Matrix bi_ssm_forward(const Matrix& seq, std::size_t n_valid,
                      const BiSsmParams& p, bool residual_input,
                      BiSsmCache* cache);
BiSsmGrads bi_ssm_backward(const Matrix& gy, const BiSsmCache& cache,
                           const BiSsmParams& p);

// Mean-pools per-node contributions from every scan sequence back onto the
// node axis. Nodes not covered by any sequence copy their row from
// `fallback` (the pre-scan features).
Matrix aggregate_tokens(const std::vector<Matrix>& seq_outputs,
                        const ScanSet& scans, const Matrix& fallback);
// Scatters node gradients back to the sequence outputs; uncovered node rows
// flow into g_fallback.
void aggregate_tokens_backward(const Matrix& g_nodes, const ScanSet& scans,
                               std::vector<Matrix>* g_seq_outputs,
                               Matrix* g_fallback);

SsmGrads make_ssm_grads(const SsmParams& p);
BiSsmGrads make_bi_ssm_grads(const BiSsmParams& p, std::size_t win,
                             std::size_t dim);

}  // namespace hgmamba
