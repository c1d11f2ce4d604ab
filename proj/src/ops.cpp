#include "telcos/ops.hpp"

#include <algorithm>
#include <cmath>

#include "telcos/errors.hpp"
#include "telcos/kernels.hpp"

namespace telcos::ops {

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

void require_rank4(const Tensor& t, const char* what) {
    require(t.rank() == 4, std::string(what) + " must be rank 4, got shape " + t.shape_str());
}

int out_extent(int in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
}

// Valid output range [o0, o1) so that o*stride - pad + koff stays inside [0, in).
void valid_out_range(int out, int in, int pad, int stride, int koff, int* o0, int* o1) {
    // o*stride >= pad - koff
    int lo = 0;
    if (pad - koff > 0) lo = (pad - koff + stride - 1) / stride;
    // o*stride <= in - 1 + pad - koff
    int hi_num = in - 1 + pad - koff;
    int hi = hi_num < 0 ? -1 : hi_num / stride;
    *o0 = std::min(lo, out);
    *o1 = std::min(hi + 1, out);
    if (*o1 < *o0) *o1 = *o0;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
    require_rank4(x, "conv2d input");
    require_rank4(k, "conv2d kernel");
    require(stride == 1 || stride == 2, "conv2d stride must be 1 or 2");
    require(pad >= 0, "conv2d padding must be non-negative");
    require(k.dim(1) == x.dim(1),
            "conv2d channel mismatch: input " + x.shape_str() + " vs kernel " + k.shape_str());
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const int Ho = out_extent(H, pad, kh, stride), Wo = out_extent(W, pad, kw, stride);
    require(Ho > 0 && Wo > 0,
            "conv2d output empty for input " + x.shape_str() + " kernel " + k.shape_str());
    Tensor y = Tensor::zeros({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            double* yp = y.plane(n, co);
            for (int ci = 0; ci < C; ++ci) {
                const double* xp = x.plane(n, ci);
                const double* kp = &k.data[((static_cast<std::size_t>(co) * C + ci) * kh) * kw];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const double w = kp[ky * kw + kx];
                        int ox0, ox1;
                        valid_out_range(Wo, W, pad, stride, kx, &ox0, &ox1);
                        if (ox1 <= ox0) continue;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            double* yrow = yp + static_cast<std::size_t>(oy) * Wo + ox0;
                            const double* xrow = xp + static_cast<std::size_t>(iy) * W +
                                                 (ox0 * stride - pad + kx);
                            if (stride == 1)
                                K().axpy(yrow, xrow, w, static_cast<std::size_t>(ox1 - ox0));
                            else
                                K().axpy_g2(yrow, xrow, w, static_cast<std::size_t>(ox1 - ox0));
                        }
                    }
            }
        }
    return y;
}

Tensor conv2d_grad_input(const Tensor& gy, const Tensor& k, int stride, int pad, int in_h, int in_w) {
    const int N = gy.dim(0), Co = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
    const int C = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    Tensor gx = Tensor::zeros({N, C, in_h, in_w});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            const double* gp = gy.plane(n, co);
            for (int ci = 0; ci < C; ++ci) {
                double* xp = gx.plane(n, ci);
                const double* kp = &k.data[((static_cast<std::size_t>(co) * C + ci) * kh) * kw];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const double w = kp[ky * kw + kx];
                        int ox0, ox1;
                        valid_out_range(Wo, in_w, pad, stride, kx, &ox0, &ox1);
                        if (ox1 <= ox0) continue;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= in_h) continue;
                            const double* grow = gp + static_cast<std::size_t>(oy) * Wo + ox0;
                            double* xrow = xp + static_cast<std::size_t>(iy) * in_w +
                                           (ox0 * stride - pad + kx);
                            if (stride == 1)
                                K().axpy(xrow, grow, w, static_cast<std::size_t>(ox1 - ox0));
                            else
                                K().axpy_s2(xrow, grow, w, static_cast<std::size_t>(ox1 - ox0));
                        }
                    }
            }
        }
    return gx;
}

Tensor conv2d_grad_kernel(const Tensor& gy, const Tensor& x, int stride, int pad, int kh, int kw) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
    Tensor gk = Tensor::zeros({Co, C, kh, kw});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            const double* gp = gy.plane(n, co);
            for (int ci = 0; ci < C; ++ci) {
                const double* xp = x.plane(n, ci);
                double* kp = &gk.data[((static_cast<std::size_t>(co) * C + ci) * kh) * kw];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        int ox0, ox1;
                        valid_out_range(Wo, W, pad, stride, kx, &ox0, &ox1);
                        if (ox1 <= ox0) continue;
                        double acc = 0.0;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            const double* grow = gp + static_cast<std::size_t>(oy) * Wo + ox0;
                            const double* xrow = xp + static_cast<std::size_t>(iy) * W +
                                                 (ox0 * stride - pad + kx);
                            if (stride == 1)
                                acc += K().dot(grow, xrow, static_cast<std::size_t>(ox1 - ox0));
                            else
                                acc += K().dot_g2(grow, xrow, static_cast<std::size_t>(ox1 - ox0));
                        }
                        kp[ky * kw + kx] += acc;
                    }
            }
        }
    return gk;
}

namespace {

// Depthwise as per-channel single-plane convolutions sharing the dense loops.
void require_depthwise(const Tensor& x, const Tensor& k) {
    require_rank4(x, "depthwise input");
    require_rank4(k, "depthwise kernel");
    require(k.dim(1) == 1, "depthwise kernel needs one plane per channel, got " + k.shape_str());
    require(k.dim(0) == x.dim(1), "depthwise channel mismatch: input " + x.shape_str() +
                                      " vs kernel " + k.shape_str());
}

Tensor take_channel(const Tensor& t, int n, int c) {
    Tensor out = Tensor::zeros({1, 1, t.dim(2), t.dim(3)});
    const double* p = t.plane(n, c);
    std::copy(p, p + out.numel(), out.data.begin());
    return out;
}

}  // namespace

Tensor depthwise_conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
    require_depthwise(x, k);
    require(stride == 1 || stride == 2, "depthwise stride must be 1 or 2");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int kh = k.dim(2), kw = k.dim(3);
    const int Ho = out_extent(H, pad, kh, stride), Wo = out_extent(W, pad, kw, stride);
    require(Ho > 0 && Wo > 0, "depthwise output empty for input " + x.shape_str());
    Tensor y = Tensor::zeros({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            Tensor xc = take_channel(x, n, c);
            Tensor kc = Tensor::zeros({1, 1, kh, kw});
            const double* kp = &k.data[static_cast<std::size_t>(c) * kh * kw];
            std::copy(kp, kp + kh * kw, kc.data.begin());
            Tensor yc = conv2d(xc, kc, stride, pad);
            std::copy(yc.data.begin(), yc.data.end(), y.plane(n, c));
        }
    return y;
}

Tensor depthwise_grad_input(const Tensor& gy, const Tensor& k, int stride, int pad, int in_h, int in_w) {
    const int N = gy.dim(0), C = gy.dim(1);
    const int kh = k.dim(2), kw = k.dim(3);
    Tensor gx = Tensor::zeros({N, C, in_h, in_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            Tensor gc = take_channel(gy, n, c);
            Tensor kc = Tensor::zeros({1, 1, kh, kw});
            const double* kp = &k.data[static_cast<std::size_t>(c) * kh * kw];
            std::copy(kp, kp + kh * kw, kc.data.begin());
            Tensor gxc = conv2d_grad_input(gc, kc, stride, pad, in_h, in_w);
            std::copy(gxc.data.begin(), gxc.data.end(), gx.plane(n, c));
        }
    return gx;
}

Tensor depthwise_grad_kernel(const Tensor& gy, const Tensor& x, int stride, int pad, int kh, int kw) {
    const int N = x.dim(0), C = x.dim(1);
    Tensor gk = Tensor::zeros({C, 1, kh, kw});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            Tensor gc = take_channel(gy, n, c);
            Tensor xc = take_channel(x, n, c);
            Tensor g1 = conv2d_grad_kernel(gc, xc, stride, pad, kh, kw);
            double* dst = &gk.data[static_cast<std::size_t>(c) * kh * kw];
            K().add(dst, dst, g1.data.data(), static_cast<std::size_t>(kh) * kw);
        }
    return gk;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape);
    K().add(out.data.data(), a.data.data(), b.data.data(), a.data.size());
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "sub shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape);
    K().sub(out.data.data(), a.data.data(), b.data.data(), a.data.size());
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "mul shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = Tensor::zeros(a.shape);
    K().mul(out.data.data(), a.data.data(), b.data.data(), a.data.size());
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape);
    K().scale(out.data.data(), a.data.data(), s, a.data.size());
    return out;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    require_rank4(x, "bias input");
    require(bias.rank() == 1 && bias.dim(0) == x.dim(1),
            "bias shape " + bias.shape_str() + " does not match channels of " + x.shape_str());
    Tensor y = x;
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    for (int n = 0; n < x.dim(0); ++n)
        for (int c = 0; c < x.dim(1); ++c) {
            double* p = y.plane(n, c);
            const double b = bias.data[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < hw; ++i) p[i] += b;
        }
    return y;
}

Tensor channel_bias_grad(const Tensor& gy) {
    Tensor gb = Tensor::zeros({gy.dim(1)});
    const std::size_t hw = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
    for (int n = 0; n < gy.dim(0); ++n)
        for (int c = 0; c < gy.dim(1); ++c)
            gb.data[static_cast<std::size_t>(c)] += K().sum(gy.plane(n, c), hw);
    return gb;
}

Tensor relu(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape);
    K().relu(y.data.data(), x.data.data(), x.data.size());
    return y;
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
    require_rank4(x, "slice input");
    require(0 <= c0 && c0 < c1 && c1 <= x.dim(1),
            "bad channel slice [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
                x.shape_str());
    Tensor y = Tensor::zeros({x.dim(0), c1 - c0, x.dim(2), x.dim(3)});
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    for (int n = 0; n < x.dim(0); ++n)
        for (int c = c0; c < c1; ++c)
            std::copy(x.plane(n, c), x.plane(n, c) + hw, y.plane(n, c - c0));
    return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank4(a, "concat input");
    require_rank4(b, "concat input");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat spatial mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor y = Tensor::zeros({a.dim(0), a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
    const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
    for (int n = 0; n < a.dim(0); ++n) {
        for (int c = 0; c < a.dim(1); ++c)
            std::copy(a.plane(n, c), a.plane(n, c) + hw, y.plane(n, c));
        for (int c = 0; c < b.dim(1); ++c)
            std::copy(b.plane(n, c), b.plane(n, c) + hw, y.plane(n, a.dim(1) + c));
    }
    return y;
}

std::pair<Tensor, Tensor> channel_split(const Tensor& x) {
    require_rank4(x, "split input");
    require(x.dim(1) % 2 == 0,
            "channel_split needs an even channel count, got " + x.shape_str());
    const int half = x.dim(1) / 2;
    return {slice_channels(x, 0, half), slice_channels(x, half, x.dim(1))};
}

int shuffle_perm(int index, int channels, int groups) {
    const int n = channels / groups;
    const int g = index / n, c = index % n;
    return c * groups + g;
}

int shuffle_perm_inv(int index, int channels, int groups) {
    const int n = channels / groups;
    const int g = index % groups, c = index / groups;
    return g * n + c;
}

Tensor channel_shuffle(const Tensor& x, int groups) {
    require_rank4(x, "shuffle input");
    require(groups >= 1 && x.dim(1) % groups == 0,
            "channel count " + std::to_string(x.dim(1)) + " not divisible by groups " +
                std::to_string(groups));
    Tensor y = Tensor::zeros(x.shape);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    for (int n = 0; n < x.dim(0); ++n)
        for (int c = 0; c < x.dim(1); ++c) {
            const int o = shuffle_perm(c, x.dim(1), groups);
            std::copy(x.plane(n, c), x.plane(n, c) + hw, y.plane(n, o));
        }
    return y;
}

Tensor avg_pool2(const Tensor& x) {
    require_rank4(x, "avg_pool2 input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
    Tensor y = Tensor::zeros({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* xp = x.plane(n, c);
            double* yp = y.plane(n, c);
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    // Edge replication: clamp the second row/column for odd extents.
                    const int y0 = 2 * oy, y1 = std::min(2 * oy + 1, H - 1);
                    const int x0 = 2 * ox, x1 = std::min(2 * ox + 1, W - 1);
                    yp[static_cast<std::size_t>(oy) * Wo + ox] =
                        (xp[static_cast<std::size_t>(y0) * W + x0] +
                         xp[static_cast<std::size_t>(y0) * W + x1] +
                         xp[static_cast<std::size_t>(y1) * W + x0] +
                         xp[static_cast<std::size_t>(y1) * W + x1]) *
                        0.25;
                }
        }
    return y;
}

Tensor avg_pool2_grad(const Tensor& gy, int in_h, int in_w) {
    const int N = gy.dim(0), C = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
    Tensor gx = Tensor::zeros({N, C, in_h, in_w});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* gp = gy.plane(n, c);
            double* xp = gx.plane(n, c);
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    const double g = gp[static_cast<std::size_t>(oy) * Wo + ox] * 0.25;
                    const int y0 = 2 * oy, y1 = std::min(2 * oy + 1, in_h - 1);
                    const int x0 = 2 * ox, x1 = std::min(2 * ox + 1, in_w - 1);
                    xp[static_cast<std::size_t>(y0) * in_w + x0] += g;
                    xp[static_cast<std::size_t>(y0) * in_w + x1] += g;
                    xp[static_cast<std::size_t>(y1) * in_w + x0] += g;
                    xp[static_cast<std::size_t>(y1) * in_w + x1] += g;
                }
        }
    return gx;
}

namespace {

struct Lerp {
    int i0, i1;
    double w0, w1;
};

Lerp lerp_coeff(int out_idx, int in_extent) {
    const double pos = (out_idx + 0.5) * 0.5 - 0.5;
    double f = std::floor(pos);
    int i0 = static_cast<int>(f);
    double t = pos - f;
    int i1 = i0 + 1;
    if (i0 < 0) { i0 = 0; }
    if (i1 > in_extent - 1) { i1 = in_extent - 1; }
    if (i0 > in_extent - 1) { i0 = in_extent - 1; }
    return {i0, i1, 1.0 - t, t};
}

}  // namespace

Tensor bilinear_upsample2(const Tensor& x) {
    require_rank4(x, "upsample input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = 2 * H, Wo = 2 * W;
    Tensor y = Tensor::zeros({N, C, Ho, Wo});
    std::vector<Lerp> lx(Wo), ly(Ho);
    for (int i = 0; i < Wo; ++i) lx[i] = lerp_coeff(i, W);
    for (int i = 0; i < Ho; ++i) ly[i] = lerp_coeff(i, H);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* xp = x.plane(n, c);
            double* yp = y.plane(n, c);
            for (int oy = 0; oy < Ho; ++oy) {
                const Lerp& ry = ly[oy];
                for (int ox = 0; ox < Wo; ++ox) {
                    const Lerp& rx = lx[ox];
                    yp[static_cast<std::size_t>(oy) * Wo + ox] =
                        ry.w0 * (rx.w0 * xp[static_cast<std::size_t>(ry.i0) * W + rx.i0] +
                                 rx.w1 * xp[static_cast<std::size_t>(ry.i0) * W + rx.i1]) +
                        ry.w1 * (rx.w0 * xp[static_cast<std::size_t>(ry.i1) * W + rx.i0] +
                                 rx.w1 * xp[static_cast<std::size_t>(ry.i1) * W + rx.i1]);
                }
            }
        }
    return y;
}

Tensor bilinear_upsample2_grad(const Tensor& gy, int in_h, int in_w) {
    const int N = gy.dim(0), C = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
    Tensor gx = Tensor::zeros({N, C, in_h, in_w});
    std::vector<Lerp> lx(Wo), ly(Ho);
    for (int i = 0; i < Wo; ++i) lx[i] = lerp_coeff(i, in_w);
    for (int i = 0; i < Ho; ++i) ly[i] = lerp_coeff(i, in_h);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* gp = gy.plane(n, c);
            double* xp = gx.plane(n, c);
            for (int oy = 0; oy < Ho; ++oy) {
                const Lerp& ry = ly[oy];
                for (int ox = 0; ox < Wo; ++ox) {
                    const Lerp& rx = lx[ox];
                    const double g = gp[static_cast<std::size_t>(oy) * Wo + ox];
                    xp[static_cast<std::size_t>(ry.i0) * in_w + rx.i0] += g * ry.w0 * rx.w0;
                    xp[static_cast<std::size_t>(ry.i0) * in_w + rx.i1] += g * ry.w0 * rx.w1;
                    xp[static_cast<std::size_t>(ry.i1) * in_w + rx.i0] += g * ry.w1 * rx.w0;
                    xp[static_cast<std::size_t>(ry.i1) * in_w + rx.i1] += g * ry.w1 * rx.w1;
                }
            }
        }
    return gx;
}

Tensor softmax_channels(const Tensor& x) {
    require_rank4(x, "softmax input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y = Tensor::zeros(x.shape);
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
            double mx = -1e300;
            for (int c = 0; c < C; ++c) mx = std::max(mx, x.plane(n, c)[i]);
            double z = 0.0;
            for (int c = 0; c < C; ++c) {
                const double e = std::exp(x.plane(n, c)[i] - mx);
                y.plane(n, c)[i] = e;
                z += e;
            }
            const double inv = 1.0 / z;
            for (int c = 0; c < C; ++c) y.plane(n, c)[i] *= inv;
        }
    return y;
}

Tensor softmax_channels_grad(const Tensor& s, const Tensor& gy) {
    const int N = s.dim(0), C = s.dim(1);
    const std::size_t hw = static_cast<std::size_t>(s.dim(2)) * s.dim(3);
    Tensor gx = Tensor::zeros(s.shape);
    for (int n = 0; n < N; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
            double dotgs = 0.0;
            for (int c = 0; c < C; ++c) dotgs += gy.plane(n, c)[i] * s.plane(n, c)[i];
            for (int c = 0; c < C; ++c)
                gx.plane(n, c)[i] = s.plane(n, c)[i] * (gy.plane(n, c)[i] - dotgs);
        }
    return gx;
}

double stable_logcosh(double d) {
    const double a = std::fabs(d);
    // log(cosh(d)) = |d| + log1p(exp(-2|d|)) - log 2
    return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453;
}

Tensor logcosh(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = stable_logcosh(x.data[i]);
    return y;
}

Tensor tanh_ew(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = std::tanh(x.data[i]);
    return y;
}

double sum_all(const Tensor& x) { return K().sum(x.data.data(), x.data.size()); }

double mean_all(const Tensor& x) { return sum_all(x) / static_cast<double>(x.data.size()); }

}  // namespace telcos::ops
