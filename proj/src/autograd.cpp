#include "telcos/autograd.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "telcos/errors.hpp"
#include "telcos/kernels.hpp"

namespace telcos {

namespace {
const kernels::KernelTable& K() { return kernels::active(); }
}

Var Tape::leaf(Tensor value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }

Var Tape::record(const char* opname, std::vector<int> parents, ForwardFn fwd, BackwardFn bwd) {
    Node n;
    n.parents = std::move(parents);
    n.forward = std::move(fwd);
    n.backward = std::move(bwd);
    n.opname = opname;
    for (int p : n.parents) n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(p)].needs_grad;
    std::vector<const Tensor*> pv;
    pv.reserve(n.parents.size());
    for (int p : n.parents) pv.push_back(&nodes_[static_cast<std::size_t>(p)].value);
    n.value = n.forward(pv);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

std::vector<const Tensor*> Tape::parent_vals(const Node& n) const {
    std::vector<const Tensor*> pv;
    pv.reserve(n.parents.size());
    for (int p : n.parents) pv.push_back(&nodes_[static_cast<std::size_t>(p)].value);
    return pv;
}

Var Tape::conv2d(Var x, Var k, int stride, int pad) {
    return record(
        "conv2d", {x.id, k.id},
        [stride, pad](const std::vector<const Tensor*>& p) {
            return ops::conv2d(*p[0], *p[1], stride, pad);
        },
        [stride, pad](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
                      std::vector<Tensor*>& pg) {
            if (pg[0]) {
                Tensor gx = ops::conv2d_grad_input(g, *p[1], stride, pad, p[0]->dim(2), p[0]->dim(3));
                K().add(pg[0]->data.data(), pg[0]->data.data(), gx.data.data(), gx.data.size());
            }
            if (pg[1]) {
                Tensor gk = ops::conv2d_grad_kernel(g, *p[0], stride, pad, p[1]->dim(2), p[1]->dim(3));
                K().add(pg[1]->data.data(), pg[1]->data.data(), gk.data.data(), gk.data.size());
            }
        });
}

Var Tape::depthwise(Var x, Var k, int stride, int pad) {
    return record(
        "depthwise", {x.id, k.id},
        [stride, pad](const std::vector<const Tensor*>& p) {
            return ops::depthwise_conv2d(*p[0], *p[1], stride, pad);
        },
        [stride, pad](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
                      std::vector<Tensor*>& pg) {
            if (pg[0]) {
                Tensor gx = ops::depthwise_grad_input(g, *p[1], stride, pad, p[0]->dim(2), p[0]->dim(3));
                K().add(pg[0]->data.data(), pg[0]->data.data(), gx.data.data(), gx.data.size());
            }
            if (pg[1]) {
                Tensor gk = ops::depthwise_grad_kernel(g, *p[0], stride, pad, p[1]->dim(2), p[1]->dim(3));
                K().add(pg[1]->data.data(), pg[1]->data.data(), gk.data.data(), gk.data.size());
            }
        });
}

Var Tape::add(Var a, Var b) {
    return record(
        "add", {a.id, b.id},
        [](const std::vector<const Tensor*>& p) { return ops::add(*p[0], *p[1]); },
        [](const Tensor& g, const std::vector<const Tensor*>&, const Tensor&,
           std::vector<Tensor*>& pg) {
            for (int i = 0; i < 2; ++i)
                if (pg[i]) K().add(pg[i]->data.data(), pg[i]->data.data(), g.data.data(), g.data.size());
        });
}

Var Tape::sub(Var a, Var b) {
    return record(
        "sub", {a.id, b.id},
        [](const std::vector<const Tensor*>& p) { return ops::sub(*p[0], *p[1]); },
        [](const Tensor& g, const std::vector<const Tensor*>&, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (pg[0]) K().add(pg[0]->data.data(), pg[0]->data.data(), g.data.data(), g.data.size());
            if (pg[1]) {
                for (std::size_t i = 0; i < g.data.size(); ++i) pg[1]->data[i] -= g.data[i];
            }
        });
}

Var Tape::mul(Var a, Var b) {
    return record(
        "mul", {a.id, b.id},
        [](const std::vector<const Tensor*>& p) { return ops::mul(*p[0], *p[1]); },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (pg[0]) {
                Tensor t = ops::mul(g, *p[1]);
                K().add(pg[0]->data.data(), pg[0]->data.data(), t.data.data(), t.data.size());
            }
            if (pg[1]) {
                Tensor t = ops::mul(g, *p[0]);
                K().add(pg[1]->data.data(), pg[1]->data.data(), t.data.data(), t.data.size());
            }
        });
}

Var Tape::scale(Var a, double s) {
    return record(
        "scale", {a.id},
        [s](const std::vector<const Tensor*>& p) { return ops::scale(*p[0], s); },
        [s](const Tensor& g, const std::vector<const Tensor*>&, const Tensor&,
            std::vector<Tensor*>& pg) {
            if (pg[0]) K().axpy(pg[0]->data.data(), g.data.data(), s, g.data.size());
        });
}

Var Tape::add_bias(Var x, Var b) {
    return record(
        "add_bias", {x.id, b.id},
        [](const std::vector<const Tensor*>& p) { return ops::add_channel_bias(*p[0], *p[1]); },
        [](const Tensor& g, const std::vector<const Tensor*>&, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (pg[0]) K().add(pg[0]->data.data(), pg[0]->data.data(), g.data.data(), g.data.size());
            if (pg[1]) {
                Tensor gb = ops::channel_bias_grad(g);
                K().add(pg[1]->data.data(), pg[1]->data.data(), gb.data.data(), gb.data.size());
            }
        });
}

Var Tape::relu(Var x) {
    return record(
        "relu", {x.id},
        [](const std::vector<const Tensor*>& p) { return ops::relu(*p[0]); },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (pg[0]) K().relu_bwd(pg[0]->data.data(), p[0]->data.data(), g.data.data(), g.data.size());
        });
}

Var Tape::slice_c(Var x, int c0, int c1) {
    return record(
        "slice_c", {x.id},
        [c0, c1](const std::vector<const Tensor*>& p) { return ops::slice_channels(*p[0], c0, c1); },
        [c0](const Tensor& g, const std::vector<const Tensor*>&, const Tensor&,
             std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const std::size_t hw = static_cast<std::size_t>(g.dim(2)) * g.dim(3);
            for (int n = 0; n < g.dim(0); ++n)
                for (int c = 0; c < g.dim(1); ++c)
                    K().add(pg[0]->plane(n, c0 + c), pg[0]->plane(n, c0 + c), g.plane(n, c), hw);
        });
}

Var Tape::concat_c(Var a, Var b) {
    return record(
        "concat_c", {a.id, b.id},
        [](const std::vector<const Tensor*>& p) { return ops::concat_channels(*p[0], *p[1]); },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            const int ca = p[0]->dim(1);
            const std::size_t hw = static_cast<std::size_t>(g.dim(2)) * g.dim(3);
            for (int n = 0; n < g.dim(0); ++n) {
                if (pg[0])
                    for (int c = 0; c < ca; ++c)
                        K().add(pg[0]->plane(n, c), pg[0]->plane(n, c), g.plane(n, c), hw);
                if (pg[1])
                    for (int c = 0; c < p[1]->dim(1); ++c)
                        K().add(pg[1]->plane(n, c), pg[1]->plane(n, c), g.plane(n, ca + c), hw);
            }
        });
}

Var Tape::shuffle_c(Var x, int groups) {
    return record(
        "shuffle_c", {x.id},
        [groups](const std::vector<const Tensor*>& p) { return ops::channel_shuffle(*p[0], groups); },
        [groups](const Tensor& g, const std::vector<const Tensor*>&, const Tensor&,
                 std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const int C = g.dim(1);
            const std::size_t hw = static_cast<std::size_t>(g.dim(2)) * g.dim(3);
            for (int n = 0; n < g.dim(0); ++n)
                for (int o = 0; o < C; ++o) {
                    const int i = ops::shuffle_perm_inv(o, C, groups);
                    K().add(pg[0]->plane(n, i), pg[0]->plane(n, i), g.plane(n, o), hw);
                }
        });
}

Var Tape::avg_pool2(Var x) {
    return record(
        "avg_pool2", {x.id},
        [](const std::vector<const Tensor*>& p) { return ops::avg_pool2(*p[0]); },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            Tensor gx = ops::avg_pool2_grad(g, p[0]->dim(2), p[0]->dim(3));
            K().add(pg[0]->data.data(), pg[0]->data.data(), gx.data.data(), gx.data.size());
        });
}

Var Tape::upsample2(Var x) {
    return record(
        "upsample2", {x.id},
        [](const std::vector<const Tensor*>& p) { return ops::bilinear_upsample2(*p[0]); },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            Tensor gx = ops::bilinear_upsample2_grad(g, p[0]->dim(2), p[0]->dim(3));
            K().add(pg[0]->data.data(), pg[0]->data.data(), gx.data.data(), gx.data.size());
        });
}

Var Tape::softmax_c(Var x) {
    return record(
        "softmax_c", {x.id},
        [](const std::vector<const Tensor*>& p) { return ops::softmax_channels(*p[0]); },
        [](const Tensor& g, const std::vector<const Tensor*>&, const Tensor& out,
           std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            Tensor gx = ops::softmax_channels_grad(out, g);
            K().add(pg[0]->data.data(), pg[0]->data.data(), gx.data.data(), gx.data.size());
        });
}

Var Tape::logcosh(Var x) {
    return record(
        "logcosh", {x.id},
        [](const std::vector<const Tensor*>& p) { return ops::logcosh(*p[0]); },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            for (std::size_t i = 0; i < g.data.size(); ++i)
                pg[0]->data[i] += g.data[i] * std::tanh(p[0]->data[i]);
        });
}

Var Tape::sum_all(Var x) {
    return record(
        "sum_all", {x.id},
        [](const std::vector<const Tensor*>& p) {
            return Tensor({1}, {ops::sum_all(*p[0])});
        },
        [](const Tensor& g, const std::vector<const Tensor*>&, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const double gv = g.data[0];
            for (double& d : pg[0]->data) d += gv;
        });
}

Var Tape::mean_all(Var x) {
    return record(
        "mean_all", {x.id},
        [](const std::vector<const Tensor*>& p) {
            return Tensor({1}, {ops::mean_all(*p[0])});
        },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const double gv = g.data[0] / static_cast<double>(p[0]->data.size());
            for (double& d : pg[0]->data) d += gv;
        });
}

Var Tape::softmax_ce_c(Var logits, Tensor target) {
    const Tensor& lv = val(logits);
    if (!lv.same_shape(target))
        throw ShapeError("cross-entropy target shape " + target.shape_str() +
                         " does not match logits " + lv.shape_str());
    auto tgt = std::make_shared<Tensor>(std::move(target));
    return record(
        "softmax_ce_c", {logits.id},
        [tgt](const std::vector<const Tensor*>& p) {
            Tensor s = ops::softmax_channels(*p[0]);
            const int N = s.dim(0), C = s.dim(1);
            const std::size_t hw = static_cast<std::size_t>(s.dim(2)) * s.dim(3);
            double loss = 0.0;
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const double* sp = s.plane(n, c);
                    const double* tp = tgt->plane(n, c);
                    for (std::size_t i = 0; i < hw; ++i)
                        if (tp[i] != 0.0) loss -= tp[i] * std::log(std::max(sp[i], 1e-300));
                }
            const double npix = static_cast<double>(N) * hw;
            return Tensor({1}, {loss / npix});
        },
        [tgt](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
              std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            Tensor s = ops::softmax_channels(*p[0]);
            const double npix =
                static_cast<double>(s.dim(0)) * s.dim(2) * s.dim(3);
            const double gv = g.data[0] / npix;
            for (std::size_t i = 0; i < s.data.size(); ++i)
                pg[0]->data[i] += gv * (s.data[i] - tgt->data[i]);
        });
}

Var Tape::dense(Var w, Var x) {
    return record(
        "dense", {w.id, x.id},
        [](const std::vector<const Tensor*>& p) {
            const Tensor& W = *p[0];
            const Tensor& v = *p[1];
            if (W.rank() != 2 || v.rank() != 1 || W.dim(1) != v.dim(0))
                throw ShapeError("dense shape mismatch: " + W.shape_str() + " x " + v.shape_str());
            Tensor y = Tensor::zeros({W.dim(0)});
            for (int o = 0; o < W.dim(0); ++o)
                y.data[static_cast<std::size_t>(o)] =
                    K().dot(&W.data[static_cast<std::size_t>(o) * W.dim(1)], v.data.data(),
                            v.data.size());
            return y;
        },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            const Tensor& W = *p[0];
            const Tensor& v = *p[1];
            const int O = W.dim(0), I = W.dim(1);
            if (pg[0])
                for (int o = 0; o < O; ++o)
                    K().axpy(&pg[0]->data[static_cast<std::size_t>(o) * I], v.data.data(),
                             g.data[static_cast<std::size_t>(o)], static_cast<std::size_t>(I));
            if (pg[1])
                for (int o = 0; o < O; ++o)
                    K().axpy(pg[1]->data.data(), &W.data[static_cast<std::size_t>(o) * I],
                             g.data[static_cast<std::size_t>(o)], static_cast<std::size_t>(I));
        });
}

Var Tape::add_vec(Var x, Var b) {
    return record(
        "add_vec", {x.id, b.id},
        [](const std::vector<const Tensor*>& p) { return ops::add(*p[0], *p[1]); },
        [](const Tensor& g, const std::vector<const Tensor*>&, const Tensor&,
           std::vector<Tensor*>& pg) {
            for (int i = 0; i < 2; ++i)
                if (pg[i]) K().add(pg[i]->data.data(), pg[i]->data.data(), g.data.data(), g.data.size());
        });
}

Var Tape::concat_vec(Var a, Var b) {
    return record(
        "concat_vec", {a.id, b.id},
        [](const std::vector<const Tensor*>& p) {
            const Tensor& x = *p[0];
            const Tensor& y = *p[1];
            if (x.rank() != 1 || y.rank() != 1)
                throw ShapeError("concat_vec needs rank-1 inputs");
            Tensor out = Tensor::zeros({x.dim(0) + y.dim(0)});
            std::copy(x.data.begin(), x.data.end(), out.data.begin());
            std::copy(y.data.begin(), y.data.end(), out.data.begin() + x.dim(0));
            return out;
        },
        [](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
           std::vector<Tensor*>& pg) {
            const int na = p[0]->dim(0);
            if (pg[0])
                for (int i = 0; i < na; ++i) pg[0]->data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
            if (pg[1])
                for (int i = na; i < g.dim(0); ++i)
                    pg[1]->data[static_cast<std::size_t>(i - na)] += g.data[static_cast<std::size_t>(i)];
        });
}

Var Tape::softmax_ce_vec(Var logits, Tensor target) {
    auto tgt = std::make_shared<Tensor>(std::move(target));
    return record(
        "softmax_ce_vec", {logits.id},
        [tgt](const std::vector<const Tensor*>& p) {
            const Tensor& l = *p[0];
            double mx = -1e300;
            for (double v : l.data) mx = std::max(mx, v);
            double z = 0.0;
            for (double v : l.data) z += std::exp(v - mx);
            double loss = 0.0;
            for (std::size_t i = 0; i < l.data.size(); ++i)
                if (tgt->data[i] != 0.0)
                    loss -= tgt->data[i] * (l.data[i] - mx - std::log(z));
            return Tensor({1}, {loss});
        },
        [tgt](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
              std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const Tensor& l = *p[0];
            double mx = -1e300;
            for (double v : l.data) mx = std::max(mx, v);
            double z = 0.0;
            for (double v : l.data) z += std::exp(v - mx);
            for (std::size_t i = 0; i < l.data.size(); ++i) {
                const double s = std::exp(l.data[i] - mx) / z;
                pg[0]->data[i] += g.data[0] * (s - tgt->data[i]);
            }
        });
}

Var Tape::stripe_max(Var x, int n_stripes) {
    return record(
        "stripe_max", {x.id},
        [n_stripes](const std::vector<const Tensor*>& p) {
            const Tensor& t = *p[0];
            if (t.rank() != 4 || t.dim(0) != 1)
                throw ShapeError("stripe_max expects a (1,c,h,w) tensor, got " + t.shape_str());
            const int C = t.dim(1), H = t.dim(2), W = t.dim(3);
            const int rows = (H + n_stripes - 1) / n_stripes;
            Tensor y = Tensor::full({n_stripes * C}, -1e300);
            for (int s = 0; s < n_stripes; ++s)
                for (int c = 0; c < C; ++c) {
                    double best = -1e300;
                    for (int yy = s * rows; yy < std::min((s + 1) * rows, H); ++yy)
                        for (int xx = 0; xx < W; ++xx)
                            best = std::max(best, t.at4(0, c, yy, xx));
                    y.data[static_cast<std::size_t>(s) * C + c] = best;
                }
            return y;
        },
        [n_stripes](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor& out,
                    std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            const Tensor& t = *p[0];
            const int C = t.dim(1), H = t.dim(2), W = t.dim(3);
            const int rows = (H + n_stripes - 1) / n_stripes;
            for (int s = 0; s < n_stripes; ++s)
                for (int c = 0; c < C; ++c) {
                    const double best = out.data[static_cast<std::size_t>(s) * C + c];
                    // Route to the first position achieving the max.
                    for (int yy = s * rows; yy < std::min((s + 1) * rows, H); ++yy) {
                        bool done = false;
                        for (int xx = 0; xx < W; ++xx)
                            if (t.at4(0, c, yy, xx) == best) {
                                pg[0]->at4(0, c, yy, xx) +=
                                    g.data[static_cast<std::size_t>(s) * C + c];
                                done = true;
                                break;
                            }
                        if (done) break;
                    }
                }
        });
}

Var Tape::sign_bits_ste(Var x, Tensor planes) {
    auto P = std::make_shared<Tensor>(std::move(planes));
    return record(
        "sign_bits_ste", {x.id},
        [P](const std::vector<const Tensor*>& p) {
            const Tensor& v = *p[0];
            if (P->rank() != 2 || P->dim(1) != v.dim(0))
                throw ShapeError("projection planes " + P->shape_str() + " do not match input " +
                                 v.shape_str());
            Tensor bits = Tensor::zeros({P->dim(0)});
            for (int i = 0; i < P->dim(0); ++i) {
                const double d = K().dot(&P->data[static_cast<std::size_t>(i) * P->dim(1)],
                                         v.data.data(), v.data.size());
                bits.data[static_cast<std::size_t>(i)] = d >= 0.0 ? 1.0 : 0.0;
            }
            return bits;
        },
        [P](const Tensor& g, const std::vector<const Tensor*>& p, const Tensor&,
            std::vector<Tensor*>& pg) {
            if (!pg[0]) return;
            // Straight-through: treat bit as clamp(0.5 + 0.5*dot, 0, 1).
            const Tensor& v = *p[0];
            for (int i = 0; i < P->dim(0); ++i) {
                const double* row = &P->data[static_cast<std::size_t>(i) * P->dim(1)];
                const double d = K().dot(row, v.data.data(), v.data.size());
                if (std::fabs(d) <= 1.0)
                    K().axpy(pg[0]->data.data(), row, 0.5 * g.data[static_cast<std::size_t>(i)],
                             v.data.size());
            }
        });
}

std::vector<Tensor> Tape::backward(Var loss) {
    const Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (ln.value.numel() != 1)
        throw ShapeError("backward needs a scalar loss node, got " + ln.value.shape_str());
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has(nodes_.size(), false);
    grads[static_cast<std::size_t>(loss.id)] = Tensor({1}, {1.0});
    has[static_cast<std::size_t>(loss.id)] = true;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!has[static_cast<std::size_t>(id)] || !n.backward || !n.needs_grad) continue;
        std::vector<Tensor*> pg(n.parents.size(), nullptr);
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            Node& p = nodes_[static_cast<std::size_t>(n.parents[i])];
            if (!p.needs_grad) continue;
            auto pid = static_cast<std::size_t>(n.parents[i]);
            if (!has[pid]) {
                grads[pid] = Tensor::zeros(p.value.shape);
                has[pid] = true;
            }
            pg[i] = &grads[pid];
        }
        auto pv = parent_vals(n);
        n.backward(grads[static_cast<std::size_t>(id)], pv, n.value, pg);
    }
    // Disconnected nodes keep zero gradients.
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!has[i]) grads[i] = Tensor::zeros(nodes_[i].value.shape);
    return grads;
}

Tensor Tape::grad_of(const std::vector<Tensor>& grads, Var v) const {
    return grads[static_cast<std::size_t>(v.id)];
}

bool Tape::replay_matches() const {
    for (const Node& n : nodes_) {
        if (!n.forward) continue;
        auto pv = parent_vals(n);
        Tensor re = n.forward(pv);
        if (re.shape != n.value.shape) return false;
        if (std::memcmp(re.data.data(), n.value.data.data(),
                        re.data.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

}  // namespace telcos
