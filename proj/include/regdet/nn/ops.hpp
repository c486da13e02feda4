#pragma once

#include <vector>

#include "regdet/geometry.hpp"
#include "regdet/nn/graph.hpp"

namespace regdet::nn {

// Elementwise / structural -------------------------------------------------

Var add(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var reshape(const Var& a, std::vector<int> shape);
Var select_rows(const Var& a, std::vector<int> rows);        // a: [N, ...] -> [K, ...]
Var gather_flat(const Var& a, std::vector<long> indices);    // flat gather -> [K]
Var concat_rows(const std::vector<Var>& parts);              // along dim 0
Var sum_scalars(const std::vector<Var>& scalars);            // total loss assembly

// Dense layers ---------------------------------------------------------------

// x: [N, K], w: [M, K], b: [M] -> [N, M]
Var linear(const Var& x, const Var& w, const Var& b);

// x: [C, H, W], w: [F, C, kh, kw], b: [F]; floor output sizing.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride_y, int stride_x, int pad_y,
           int pad_x);

// x: [C, D, H, W], w: [F, C, kd, kh, kw], b: [F]
Var conv3d(const Var& x, const Var& w, const Var& b, int stride_z, int stride_y, int stride_x,
           int pad_z, int pad_y, int pad_x);

// x: [C, spatial...]; per-group standardization with per-channel affine.
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, float eps = 1e-5f);

// Nearest-neighbor resize of all spatial axes to `target` (rank = x.rank()-1).
Var upsample_to(const Var& x, const std::vector<int>& target);

// RoI pooling ---------------------------------------------------------------

// feat: [C, H, W]; boxes in feature coordinates ([y0, x0, y1, x1]).
// Output: [R, C, ph, pw]. `sampling` points per axis per bin, averaged;
// bilinear interpolation between pixel centers with border clamping.
Var roi_align2d(const Var& feat, const std::vector<Box>& boxes, int ph, int pw, int sampling);

// feat: [C, D, H, W]; boxes [z0, y0, x0, z1, y1, x1] -> [R, C, pd, ph, pw].
Var roi_align3d(const Var& feat, const std::vector<Box>& boxes, int pd, int ph, int pw,
                int sampling);

// Losses (mean-reduced scalars) ----------------------------------------------

Var bce_with_logits_mean(const Var& logits, const Tensor& targets);
Var softmax_ce_mean(const Var& logits, const std::vector<int>& labels);  // logits [N, C]
Var smooth_l1_mean(const Var& pred, const Tensor& targets);

// Value-only helpers ----------------------------------------------------------

// Row-wise softmax of a [N, C] tensor (inference path, no graph).
Tensor softmax_rows_value(const Tensor& logits);

}  // namespace regdet::nn
