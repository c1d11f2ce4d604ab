#pragma once

#include <utility>

#include "telcos/tensor.hpp"

namespace telcos::ops {

// All convolution-style ops take rank-4 (batch, channels, height, width)
// tensors. Dense kernels are (out_ch, in_ch, kh, kw); depthwise kernels
// are (ch, 1, kh, kw). Strides are restricted to {1, 2}.

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad);
Tensor conv2d_grad_input(const Tensor& gy, const Tensor& k, int stride, int pad, int in_h, int in_w);
Tensor conv2d_grad_kernel(const Tensor& gy, const Tensor& x, int stride, int pad, int kh, int kw);

Tensor depthwise_conv2d(const Tensor& x, const Tensor& k, int stride, int pad);
Tensor depthwise_grad_input(const Tensor& gy, const Tensor& k, int stride, int pad, int in_h, int in_w);
Tensor depthwise_grad_kernel(const Tensor& gy, const Tensor& x, int stride, int pad, int kh, int kw);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// x: (n,c,h,w), bias: rank-1 (c). Adds bias[c] to every element of channel c.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
// Sums gy over batch and spatial dims, yielding a rank-1 per-channel tensor.
Tensor channel_bias_grad(const Tensor& gy);

Tensor relu(const Tensor& x);

Tensor slice_channels(const Tensor& x, int c0, int c1);
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> channel_split(const Tensor& x);

// Channel index g*n+c moves to c*groups+g (n = channels/groups).
Tensor channel_shuffle(const Tensor& x, int groups);
int shuffle_perm(int index, int channels, int groups);      // input -> output position
int shuffle_perm_inv(int index, int channels, int groups);  // output -> input position

// 2x2 mean pooling, stride 2. Odd extents are edge-replicated first.
Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_grad(const Tensor& gy, int in_h, int in_w);

// Bilinear x2 upsampling, half-pixel centers (align-corners false).
Tensor bilinear_upsample2(const Tensor& x);
Tensor bilinear_upsample2_grad(const Tensor& gy, int in_h, int in_w);

// Per-pixel softmax over the channel dimension, max-subtracted.
Tensor softmax_channels(const Tensor& x);
Tensor softmax_channels_grad(const Tensor& softmax_out, const Tensor& gy);

// Elementwise log(cosh(x)), evaluated stably for large |x|.
Tensor logcosh(const Tensor& x);
Tensor tanh_ew(const Tensor& x);

double sum_all(const Tensor& x);
double mean_all(const Tensor& x);

double stable_logcosh(double d);

}  // namespace telcos::ops
