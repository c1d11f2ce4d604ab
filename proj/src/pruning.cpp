#include "telcos/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include <functional>

#include "telcos/errors.hpp"
#include "telcos/kernels.hpp"
#include "telcos/ops.hpp"
#include "telcos/pipeline.hpp"
#include "telcos/utils.hpp"

namespace telcos::prune {

using json = nlohmann::json;

int ActivationProfile::channels(const std::string& tap) const {
    auto it = maps.find(tap);
    if (it == maps.end() || it->second.empty()) throw Error("no profile for tap " + tap);
    return it->second.front().dim(0);
}

ActivationProfile collect_activations(const net::NetworkSpec& net,
                                      const std::vector<Tensor>& rep_images,
                                      const std::vector<std::string>& taps) {
    if (rep_images.empty()) throw DataError("representative set is empty");
    ActivationProfile p;
    p.taps = taps;
    p.images = static_cast<int>(rep_images.size());
    for (const std::string& t : taps) net.tap_node(t);  // validates names
    for (const Tensor& img : rep_images) {
        std::map<std::string, Tensor> captured;
        net::forward(net, img, net::Mode::train, &captured);
        for (const std::string& t : taps) {
            auto it = captured.find(t);
            if (it == captured.end()) throw Error("tap not captured: " + t);
            const Tensor& v = it->second;  // (1,c,h,w)
            Tensor m = Tensor::zeros({v.dim(1), v.dim(2), v.dim(3)});
            std::copy(v.data.begin(), v.data.end(), m.data.begin());
            p.maps[t].push_back(std::move(m));
        }
    }
    return p;
}

namespace {

// Integral-image one-pass SSIM over uniform windows.
double ssim_normalized(const Tensor& a, const Tensor& b) {
    const int h = a.dim(0), w = a.dim(1);
    const int win = (h >= 7 && w >= 7) ? 7 : std::min(h, w);
    const int n = win * win;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    // Prefix sums of a, b, a^2, b^2, ab.
    const int sw = w + 1;
    std::vector<double> sa(static_cast<std::size_t>(sw) * (h + 1), 0.0), sb = sa, saa = sa,
                        sbb = sa, sab = sa;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t cur = static_cast<std::size_t>(y + 1) * sw + (x + 1);
            const std::size_t up = static_cast<std::size_t>(y) * sw + (x + 1);
            const std::size_t left = static_cast<std::size_t>(y + 1) * sw + x;
            const std::size_t diag = static_cast<std::size_t>(y) * sw + x;
            const double av = a.at2(y, x), bv = b.at2(y, x);
            sa[cur] = sa[up] + sa[left] - sa[diag] + av;
            sb[cur] = sb[up] + sb[left] - sb[diag] + bv;
            saa[cur] = saa[up] + saa[left] - saa[diag] + av * av;
            sbb[cur] = sbb[up] + sbb[left] - sbb[diag] + bv * bv;
            sab[cur] = sab[up] + sab[left] - sab[diag] + av * bv;
        }
    auto boxsum = [&](const std::vector<double>& s, int x, int y) {
        return s[static_cast<std::size_t>(y + win) * sw + (x + win)] -
               s[static_cast<std::size_t>(y) * sw + (x + win)] -
               s[static_cast<std::size_t>(y + win) * sw + x] +
               s[static_cast<std::size_t>(y) * sw + x];
    };
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + win <= h; ++y)
        for (int x = 0; x + win <= w; ++x) {
            const double ma = boxsum(sa, x, y) / n;
            const double mb = boxsum(sb, x, y) / n;
            const double va = boxsum(saa, x, y) / n - ma * ma;
            const double vb = boxsum(sbb, x, y) / n - mb * mb;
            const double cov = boxsum(sab, x, y) / n - ma * mb;
            const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            acc += num / den;
            count++;
        }
    return acc / count;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || !a.same_shape(b))
        throw ShapeError("ssim needs two rank-2 maps of equal extents, got " + a.shape_str() +
                         " and " + b.shape_str());
    const kernels::KernelTable& K = kernels::active();
    double amn, amx, bmn, bmx;
    K.minmax(a.data.data(), a.data.size(), &amn, &amx);
    K.minmax(b.data.data(), b.data.size(), &bmn, &bmx);
    const bool aconst = amx == amn, bconst = bmx == bmn;
    if (aconst && bconst) return amn == bmn ? 1.0 : 0.0;
    auto norm = [](const Tensor& t, double mn, double mx) {
        Tensor out = Tensor::zeros(t.shape);
        if (mx == mn) return out;  // constant against non-constant: all zeros
        const double inv = 1.0 / (mx - mn);
        for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = (t.data[i] - mn) * inv;
        return out;
    };
    const double v = ssim_normalized(norm(a, amn, amx), norm(b, bmn, bmx));
    return std::clamp(v, -1.0, 1.0);
}

std::vector<std::vector<double>> mean_ssim_matrix(const ActivationProfile& profile,
                                                  const std::string& tap, int threads) {
    const auto it = profile.maps.find(tap);
    if (it == profile.maps.end()) throw Error("no profile for tap " + tap);
    const std::vector<Tensor>& imgs = it->second;
    const int C = imgs.front().dim(0);
    const int H = imgs.front().dim(1), W = imgs.front().dim(2);
    std::vector<std::vector<double>> m(static_cast<std::size_t>(C),
                                       std::vector<double>(static_cast<std::size_t>(C), 1.0));
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < C; ++i)
        for (int j = i + 1; j < C; ++j) pairs.emplace_back(i, j);
    auto channel_map = [&](const Tensor& img, int c) {
        Tensor t = Tensor::zeros({H, W});
        const double* p = img.data.data() + static_cast<std::size_t>(c) * H * W;
        std::copy(p, p + t.data.size(), t.data.begin());
        return t;
    };
    parallel_for(static_cast<int>(pairs.size()), threads, [&](int pi) {
        auto [i, j] = pairs[static_cast<std::size_t>(pi)];
        double acc = 0.0;
        for (const Tensor& img : imgs) acc += ssim(channel_map(img, i), channel_map(img, j));
        const double v = acc / static_cast<double>(imgs.size());
        m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v;
        m[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = v;
    });
    return m;
}

std::vector<ChannelGroup> group_channels(const ActivationProfile& profile, const std::string& tap,
                                         double tau, bool complete_linkage, int threads) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error("ssim threshold must be in (0,1)");
    const int C = profile.channels(tap);
    const auto m = mean_ssim_matrix(profile, tap, threads);
    std::vector<std::vector<int>> member_lists;
    if (!complete_linkage) {
        // Connected components of the tau-thresholded graph.
        std::vector<int> parent(static_cast<std::size_t>(C));
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int v) {
            while (parent[static_cast<std::size_t>(v)] != v) {
                parent[static_cast<std::size_t>(v)] =
                    parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
                v = parent[static_cast<std::size_t>(v)];
            }
            return v;
        };
        for (int i = 0; i < C; ++i)
            for (int j = i + 1; j < C; ++j)
                if (m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] >= tau)
                    parent[static_cast<std::size_t>(find(i))] = find(j);
        std::map<int, std::vector<int>> comps;
        for (int i = 0; i < C; ++i) comps[find(i)].push_back(i);
        for (auto& [root, members] : comps) member_lists.push_back(members);
    } else {
        // Greedy complete linkage: a channel joins only if it clears tau
        // against every current member.
        std::vector<bool> taken(static_cast<std::size_t>(C), false);
        for (int i = 0; i < C; ++i) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            std::vector<int> g{i};
            taken[static_cast<std::size_t>(i)] = true;
            for (int j = i + 1; j < C; ++j) {
                if (taken[static_cast<std::size_t>(j)]) continue;
                bool ok = true;
                for (int mbr : g)
                    if (m[static_cast<std::size_t>(mbr)][static_cast<std::size_t>(j)] < tau) {
                        ok = false;
                        break;
                    }
                if (ok) {
                    g.push_back(j);
                    taken[static_cast<std::size_t>(j)] = true;
                }
            }
            member_lists.push_back(std::move(g));
        }
    }
    std::sort(member_lists.begin(), member_lists.end());
    std::vector<ChannelGroup> out;
    for (auto& members : member_lists) {
        ChannelGroup g;
        g.tap = tap;
        g.members = members;
        g.mean_ssim.resize(members.size(), std::vector<double>(members.size(), 1.0));
        for (std::size_t i = 0; i < members.size(); ++i)
            for (std::size_t j = 0; j < members.size(); ++j)
                g.mean_ssim[i][j] = m[static_cast<std::size_t>(members[i])]
                                     [static_cast<std::size_t>(members[j])];
        out.push_back(std::move(g));
    }
    return out;
}

double apoz(const ActivationProfile& profile, const std::string& tap, int channel) {
    const auto it = profile.maps.find(tap);
    if (it == profile.maps.end()) throw Error("no profile for tap " + tap);
    std::int64_t zeros = 0, total = 0;
    for (const Tensor& img : it->second) {
        const int H = img.dim(1), W = img.dim(2);
        const double* p = img.data.data() + static_cast<std::size_t>(channel) * H * W;
        for (int i = 0; i < H * W; ++i)
            if (p[static_cast<std::size_t>(i)] <= 1e-12) zeros++;
        total += H * W;
    }
    return static_cast<double>(zeros) / static_cast<double>(total);
}

PrunePlan make_prune_plan(const std::vector<ChannelGroup>& groups,
                          const ActivationProfile& profile, double k, double x) {
    if (!(x >= 0.0 && x <= k && k <= 1.0)) throw Error("need 0 <= x <= k <= 1");
    PrunePlan plan;
    if (groups.empty()) return plan;
    const std::string& tap = groups.front().tap;
    TapPlan tp;
    std::vector<std::pair<int, std::string>> removals;  // (channel, provenance)
    for (const ChannelGroup& g : groups) {
        if (g.tap != tap) throw Error("make_prune_plan needs groups from a single tap");
        const int gs = static_cast<int>(g.members.size());
        int n_apoz = static_cast<int>(std::lround(x * gs));
        int n_ssim = static_cast<int>(std::lround((k - x) * gs));
        const int max_removable = gs - 1;  // at least one survivor
        if (n_apoz + n_ssim > max_removable) {
            const int over = n_apoz + n_ssim - max_removable;
            int cut_ssim = std::min(n_ssim, over);
            n_ssim -= cut_ssim;
            n_apoz -= over - cut_ssim;
            plan.warnings.push_back("tap " + tap + ": group clamped to keep one survivor");
        }
        std::vector<int> rest = g.members;
        // APoZ phase: highest APoZ first, lower index on ties.
        std::vector<std::pair<double, int>> by_apoz;
        for (int c : rest) by_apoz.emplace_back(apoz(profile, tap, c), c);
        std::stable_sort(by_apoz.begin(), by_apoz.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::set<int> taken;
        for (int i = 0; i < n_apoz; ++i) {
            removals.emplace_back(by_apoz[static_cast<std::size_t>(i)].second, "apoz");
            taken.insert(by_apoz[static_cast<std::size_t>(i)].second);
        }
        // SSIM phase: highest mean similarity to the other group members.
        std::vector<std::pair<double, int>> by_ssim;
        for (std::size_t mi = 0; mi < g.members.size(); ++mi) {
            const int c = g.members[mi];
            if (taken.count(c)) continue;
            double acc = 0.0;
            int n = 0;
            for (std::size_t mj = 0; mj < g.members.size(); ++mj) {
                if (mi == mj) continue;
                acc += g.mean_ssim[mi][mj];
                n++;
            }
            by_ssim.emplace_back(n ? acc / n : 0.0, c);
        }
        std::stable_sort(by_ssim.begin(), by_ssim.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (int i = 0; i < n_ssim && i < static_cast<int>(by_ssim.size()); ++i)
            removals.emplace_back(by_ssim[static_cast<std::size_t>(i)].second, "ssim");
    }
    std::sort(removals.begin(), removals.end());
    for (const auto& [c, prov] : removals) {
        tp.remove.push_back(c);
        tp.provenance.push_back(prov);
    }
    if (!tp.remove.empty()) plan.taps[tap] = std::move(tp);
    return plan;
}

void merge_plan(PrunePlan& into, const PrunePlan& from) {
    for (const auto& [tap, tp] : from.taps) {
        if (into.taps.count(tap)) throw Error("duplicate tap in plan merge: " + tap);
        into.taps[tap] = tp;
    }
    into.warnings.insert(into.warnings.end(), from.warnings.begin(), from.warnings.end());
    into.closed = false;
}

namespace {

std::vector<std::vector<int>> consumer_lists(const net::NetworkSpec& net) {
    std::vector<std::vector<int>> consumers(net.nodes.size());
    for (std::size_t i = 0; i < net.nodes.size(); ++i)
        for (int p : net.nodes[i].in) consumers[static_cast<std::size_t>(p)].push_back(static_cast<int>(i));
    return consumers;
}

void add_sorted_unique(std::vector<int>& v, const std::vector<int>& add) {
    v.insert(v.end(), add.begin(), add.end());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

PrunePlan propagate_plan(const net::NetworkSpec& net, PrunePlan plan) {
    plan.node_out_removals.clear();
    plan.node_in_removals.clear();
    const auto consumers = consumer_lists(net);
    std::map<int, std::vector<int>> out_rm;  // node id -> removed output channels
    std::map<int, std::vector<int>> in_rm;

    for (const auto& [tap, tp] : plan.taps) {
        const int tap_id = net.tap_node(tap);
        // Locate the producing convolution behind the activation.
        int cur = tap_id;
        while (net.nodes[static_cast<std::size_t>(cur)].kind == net::NodeKind::relu)
            cur = net.nodes[static_cast<std::size_t>(cur)].in[0];
        const net::Node& producer = net.nodes[static_cast<std::size_t>(cur)];
        if (producer.kind != net::NodeKind::conv)
            throw Error("tap " + tap +
                        " is not backed by a convolution output; channel pruning across " +
                        producer.name + " is not supported");
        for (int c : tp.remove)
            if (c < 0 || c >= producer.out_ch)
                throw Error("prune index " + std::to_string(c) + " out of range for tap " + tap);
        add_sorted_unique(out_rm[cur], tp.remove);

        // Flow the removal through routing nodes to every consumer.
        std::deque<std::pair<int, std::vector<int>>> frontier;
        frontier.emplace_back(cur, tp.remove);
        while (!frontier.empty()) {
            auto [nid, chans] = frontier.front();
            frontier.pop_front();
            for (int cid : consumers[static_cast<std::size_t>(nid)]) {
                const net::Node& c = net.nodes[static_cast<std::size_t>(cid)];
                switch (c.kind) {
                    case net::NodeKind::conv:
                        add_sorted_unique(in_rm[cid], chans);
                        break;
                    case net::NodeKind::dwconv: {
                        add_sorted_unique(in_rm[cid], chans);
                        add_sorted_unique(out_rm[cid], chans);
                        frontier.emplace_back(cid, chans);
                        break;
                    }
                    case net::NodeKind::relu:
                    case net::NodeKind::upsample: {
                        add_sorted_unique(out_rm[cid], chans);
                        frontier.emplace_back(cid, chans);
                        break;
                    }
                    case net::NodeKind::slice: {
                        std::vector<int> mapped;
                        for (int ch : chans)
                            if (ch >= c.c0 && ch < c.c1) mapped.push_back(ch - c.c0);
                        if (!mapped.empty()) {
                            add_sorted_unique(out_rm[cid], mapped);
                            frontier.emplace_back(cid, mapped);
                        }
                        break;
                    }
                    case net::NodeKind::concat: {
                        const int off = c.in[0] == nid
                                            ? 0
                                            : net.nodes[static_cast<std::size_t>(c.in[0])].out_ch;
                        std::vector<int> mapped;
                        for (int ch : chans) mapped.push_back(ch + off);
                        add_sorted_unique(out_rm[cid], mapped);
                        frontier.emplace_back(cid, mapped);
                        break;
                    }
                    case net::NodeKind::shuffle: {
                        std::vector<int> mapped;
                        for (int ch : chans)
                            mapped.push_back(ops::shuffle_perm(ch, c.out_ch, c.groups));
                        std::sort(mapped.begin(), mapped.end());
                        add_sorted_unique(out_rm[cid], mapped);
                        frontier.emplace_back(cid, mapped);
                        break;
                    }
                    default:
                        throw Error("cannot propagate removal into node " + c.name);
                }
            }
        }
    }

    // Validation: splits must stay balanced, shuffles group-balanced.
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        const net::Node& n = net.nodes[i];
        if (n.kind == net::NodeKind::slice) {
            const auto it = out_rm.find(n.in[0]);
            if (it == out_rm.end()) continue;
            const net::Node& src = net.nodes[static_cast<std::size_t>(n.in[0])];
            const int half = src.out_ch / 2;
            int lo = 0, hi = 0;
            for (int ch : it->second) (ch < half ? lo : hi)++;
            if (lo != hi)
                throw Error("pruning unbalances the channel split feeding " + n.name +
                            " (" + std::to_string(lo) + " vs " + std::to_string(hi) +
                            " removals per half)");
        }
        if (n.kind == net::NodeKind::shuffle) {
            const auto it = out_rm.find(n.in[0]);
            if (it == out_rm.end()) continue;
            const net::Node& src = net.nodes[static_cast<std::size_t>(n.in[0])];
            const int per = src.out_ch / n.groups;
            std::vector<std::set<int>> offs(static_cast<std::size_t>(n.groups));
            for (int ch : it->second) offs[static_cast<std::size_t>(ch / per)].insert(ch % per);
            for (int g = 1; g < n.groups; ++g)
                if (offs[static_cast<std::size_t>(g)] != offs[0])
                    throw Error("pruning unbalances shuffle groups at " + n.name);
        }
    }

    for (const auto& [nid, chans] : out_rm)
        plan.node_out_removals[net.nodes[static_cast<std::size_t>(nid)].name] = chans;
    for (const auto& [nid, chans] : in_rm)
        plan.node_in_removals[net.nodes[static_cast<std::size_t>(nid)].name] = chans;
    plan.closed = true;
    return plan;
}

namespace {

std::vector<int> survivors(int count, const std::vector<int>& removed) {
    std::vector<int> keep;
    std::size_t r = 0;
    for (int i = 0; i < count; ++i) {
        if (r < removed.size() && removed[r] == i) {
            r++;
            continue;
        }
        keep.push_back(i);
    }
    return keep;
}

int lower_count(const std::vector<int>& removed, int bound) {
    int n = 0;
    for (int r : removed) {
        if (r < bound) n++;
    }
    return n;
}

}  // namespace

net::NetworkSpec apply_plan(const net::NetworkSpec& net, const PrunePlan& plan) {
    if (!plan.closed) throw Error("apply_plan needs a propagated (closed) plan");
    net::NetworkSpec out = net;
    for (net::Node& n : out.nodes) {
        const auto oit = plan.node_out_removals.find(n.name);
        const auto iit = plan.node_in_removals.find(n.name);
        const std::vector<int> empty;
        const std::vector<int>& orm = oit == plan.node_out_removals.end() ? empty : oit->second;
        const std::vector<int>& irm = iit == plan.node_in_removals.end() ? empty : iit->second;
        if (n.kind == net::NodeKind::conv && (!orm.empty() || !irm.empty())) {
            const int co = n.w.shape[0], ci = n.w.shape[1];
            const int kh = n.w.shape[2], kw = n.w.shape[3];
            const std::vector<int> keep_o = survivors(co, orm);
            const std::vector<int> keep_i = survivors(ci, irm);
            net::ParamBlob nw;
            nw.shape = {static_cast<int>(keep_o.size()), static_cast<int>(keep_i.size()), kh, kw};
            nw.v.reserve(static_cast<std::size_t>(shape_numel(nw.shape)));
            for (int o : keep_o)
                for (int i : keep_i) {
                    const float* src = &n.w.v[((static_cast<std::size_t>(o) * ci + i) * kh) * kw];
                    nw.v.insert(nw.v.end(), src, src + kh * kw);
                }
            net::ParamBlob nb;
            nb.shape = {static_cast<int>(keep_o.size())};
            for (int o : keep_o) nb.v.push_back(n.b.v[static_cast<std::size_t>(o)]);
            n.w = std::move(nw);
            n.b = std::move(nb);
        } else if (n.kind == net::NodeKind::dwconv && !orm.empty()) {
            const int c = n.w.shape[0], kh = n.w.shape[2], kw = n.w.shape[3];
            const std::vector<int> keep = survivors(c, orm);
            net::ParamBlob nw;
            nw.shape = {static_cast<int>(keep.size()), 1, kh, kw};
            for (int o : keep) {
                const float* src = &n.w.v[static_cast<std::size_t>(o) * kh * kw];
                nw.v.insert(nw.v.end(), src, src + kh * kw);
            }
            net::ParamBlob nb;
            nb.shape = {static_cast<int>(keep.size())};
            for (int o : keep) nb.v.push_back(n.b.v[static_cast<std::size_t>(o)]);
            n.w = std::move(nw);
            n.b = std::move(nb);
        }
    }
    // Rebase slice bounds and recompute widths in topological order.
    for (std::size_t i = 0; i < out.nodes.size(); ++i) {
        net::Node& n = out.nodes[i];
        switch (n.kind) {
            case net::NodeKind::input:
                break;
            case net::NodeKind::conv:
                n.out_ch = n.w.shape[0];
                break;
            case net::NodeKind::dwconv:
                n.out_ch = n.w.shape[0];
                break;
            case net::NodeKind::slice: {
                const std::string& src = net.nodes[static_cast<std::size_t>(n.in[0])].name;
                const auto it = plan.node_out_removals.find(src);
                if (it != plan.node_out_removals.end()) {
                    n.c0 -= lower_count(it->second, n.c0);
                    n.c1 -= lower_count(it->second, n.c1);
                }
                n.out_ch = n.c1 - n.c0;
                break;
            }
            case net::NodeKind::concat:
                n.out_ch = out.nodes[static_cast<std::size_t>(n.in[0])].out_ch +
                           out.nodes[static_cast<std::size_t>(n.in[1])].out_ch;
                break;
            default:
                n.out_ch = out.nodes[static_cast<std::size_t>(n.in[0])].out_ch;
        }
        if (n.kind == net::NodeKind::shuffle && n.out_ch % n.groups != 0)
            throw Error("pruned width not divisible by shuffle groups at " + n.name);
    }
    // Refresh the table-level widths.
    auto width_of = [&](const std::string& name) {
        return out.nodes[static_cast<std::size_t>(out.node_id(name))].out_ch;
    };
    out.widths.conv1 = width_of("conv1");
    out.widths.conv2 = width_of("conv2");
    out.widths.conv3 = width_of("loc.conv3");
    out.widths.conv4 = width_of("loc.conv4");
    out.widths.conv5 = width_of("loc.conv5");
    for (int k = 0; k < 3; ++k)
        out.widths.upconv_out[static_cast<std::size_t>(k)] =
            width_of("loc.upconv" + std::to_string(k + 1) + ".b");
    auto refresh_rows = [&](std::vector<net::LayerSpec>& rows, const std::string& prefix) {
        for (net::LayerSpec& l : rows) {
            std::string node;
            if (l.name.rfind("upconv", 0) == 0)
                node = prefix + l.name + ".b";
            else if (l.name.rfind("conv", 0) == 0 && l.name != "conv1" && l.name != "conv2")
                node = prefix + l.name;
            else if (l.name == "conv1" || l.name == "conv2")
                node = l.name;
            else
                continue;  // upsample / shuffle rows keep their widths
            if (out.node_by_name.count(node))
                l.out_channels = width_of(node);
        }
        for (std::size_t r = 1; r < rows.size(); ++r)
            if (rows[r].kind != net::LayerKind::upsample &&
                rows[r - 1].kind != net::LayerKind::upsample)
                rows[r].in_channels = rows[r - 1].out_channels;
    };
    refresh_rows(out.backbone, "");
    refresh_rows(out.loc_branch, "loc.");
    refresh_rows(out.script_branch, "scr.");
    out.config = net.config == "custom" ? "custom" : net.config + "+pruned";
    return out;
}

std::vector<std::string> default_prunable_taps(const net::NetworkSpec& net) {
    std::vector<std::string> taps{"conv1", "conv2"};
    for (const std::string& p : {std::string("loc."), std::string("scr.")}) {
        for (int k = 1; k <= 3; ++k) taps.push_back(p + "upconv" + std::to_string(k));
        taps.push_back(p + "conv3");
        taps.push_back(p + "conv4");
        taps.push_back(p + "conv5");
    }
    std::vector<std::string> present;
    for (const std::string& t : taps) {
        bool found = false;
        for (const net::Node& n : net.nodes)
            if (n.tap == t) found = true;
        if (found) present.push_back(t);
    }
    return present;
}

void plan_to_json(const PrunePlan& plan, const std::string& path) {
    json j = json::object();
    for (const auto& [tap, tp] : plan.taps) {
        json e;
        e["remove"] = tp.remove;
        e["provenance"] = tp.provenance;
        j[tap] = e;
    }
    std::ofstream os(path);
    if (!os) throw DataError("cannot write prune plan: " + path);
    os << j.dump(1) << "\n";
}

PrunePlan plan_from_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open prune plan: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("bad prune plan JSON: " + std::string(e.what()));
    }
    PrunePlan plan;
    for (const auto& [tap, e] : j.items()) {
        TapPlan tp;
        tp.remove = e.at("remove").get<std::vector<int>>();
        if (e.contains("provenance"))
            tp.provenance = e.at("provenance").get<std::vector<std::string>>();
        plan.taps[tap] = std::move(tp);
    }
    return plan;
}

std::pair<net::NetworkSpec, PruneReport> apply_and_finetune(const net::NetworkSpec& net,
                                                            const PrunePlan& plan,
                                                            const FinetuneOptions& opt) {
    PruneReport report;
    report.params_initial = net.param_count();
    net::NetworkSpec current = net;
    double prev_hmean =
        pipeline::evaluate_detection(current, opt.val_samples, opt.tc.input_size, opt.iou_thresh,
                                     opt.t_r, opt.t_a)
            .hmean;
    std::vector<std::string> tap_names;
    for (const auto& [tap, tp] : plan.taps) tap_names.push_back(tap);
    for (std::size_t start = 0; start < tap_names.size();
         start += static_cast<std::size_t>(opt.taps_per_iteration)) {
        IterationReport ir;
        ir.params_before = current.param_count();
        ir.hmean_before = prev_hmean;
        PrunePlan chunk;
        for (std::size_t i = start;
             i < std::min(tap_names.size(), start + static_cast<std::size_t>(opt.taps_per_iteration));
             ++i) {
            chunk.taps[tap_names[i]] = plan.taps.at(tap_names[i]);
            ir.taps.push_back(tap_names[i]);
        }
        PrunePlan closed = propagate_plan(current, chunk);
        net::NetworkSpec candidate = apply_plan(current, closed);
        if (opt.epochs_per_iteration > 0 && !opt.train_samples.empty()) {
            train::TrainConfig tc = opt.tc;
            tc.epochs = opt.epochs_per_iteration;
            tc.patience = std::max(tc.patience, opt.epochs_per_iteration + 1);
            train::train(candidate, opt.train_samples, tc);
        }
        const double hmean =
            pipeline::evaluate_detection(candidate, opt.val_samples, opt.tc.input_size,
                                         opt.iou_thresh, opt.t_r, opt.t_a)
                .hmean;
        ir.hmean_after = hmean;
        ir.params_after = candidate.param_count();
        if (prev_hmean - hmean > opt.hmean_guard) {
            ir.rolled_back = true;
        } else {
            current = std::move(candidate);
            prev_hmean = hmean;
        }
        report.iterations.push_back(std::move(ir));
    }
    report.params_final = current.param_count();
    return {std::move(current), std::move(report)};
}

}  // namespace telcos::prune
