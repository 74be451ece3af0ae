#pragma once

#include "cipherbreak/nn/graph.hpp"

namespace cipherbreak::nn {

// x [N,Ci,H,W], w [Co,Ci,k,k], b [Co] (or invalid Var for no bias).
template <class T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, int stride, int pad);

// x [N,F], w [O,F], b [O] -> [N,O].
template <class T>
Var linear(Graph<T>& g, Var x, Var w, Var b);

// Normalization without affine terms; groups must divide C.
template <class T>
Var group_norm(Graph<T>& g, Var x, int groups, T eps = T(1e-5));

// x * (1 + scale) + shift with scale/shift [N,C] broadcast over H,W.
template <class T>
Var film(Graph<T>& g, Var x, Var scale, Var shift);

// x + v with v [N,C] broadcast over H,W.
template <class T>
Var add_channel_bias(Graph<T>& g, Var x, Var v);

template <class T>
Var add(Graph<T>& g, Var a, Var b);

template <class T>
Var silu(Graph<T>& g, Var x);

template <class T>
Var relu(Graph<T>& g, Var x);

template <class T>
Var avg_pool2(Graph<T>& g, Var x);

template <class T>
Var upsample_nearest2(Graph<T>& g, Var x);

template <class T>
Var concat_channels(Graph<T>& g, Var a, Var b);

// Columns [begin, end) of a [N,F] tensor.
template <class T>
Var slice_columns(Graph<T>& g, Var x, int begin, int end);

// [N,C,H,W] -> [N,C] spatial mean.
template <class T>
Var global_mean_pool(Graph<T>& g, Var x);

// Mean over all elements of (a - b)^2; b may be a constant.
template <class T>
Var mse(Graph<T>& g, Var a, Var b);

// NT-Xent over z [2B, D] where rows i and i+B are positives; rows are
// L2-normalized inside the op.
template <class T>
Var nt_xent(Graph<T>& g, Var z, T temperature);

}  // namespace cipherbreak::nn
