#include "telcos/netgraph.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "telcos/errors.hpp"
#include "telcos/ops.hpp"
#include "telcos/utils.hpp"

namespace telcos::net {

Widths table_widths(Config c) {
    switch (c) {
        case Config::telcos_plus:
            return {64, {128, 224, 384, 512}, 512, {256, 128, 64}, 48, 32, 16};
        case Config::telcos_stud:
            return {48, {96, 172, 264, 344}, 344, {172, 96, 48}, 40, 32, 16};
        case Config::telcos:
            return {40, {80, 144, 224, 320}, 320, {160, 80, 40}, 32, 32, 16};
        default:
            throw Error("custom config needs explicit widths");
    }
}

std::string config_name(Config c) {
    switch (c) {
        case Config::telcos_plus: return "telcos_plus";
        case Config::telcos_stud: return "telcos_stud";
        case Config::telcos: return "telcos";
        default: return "custom";
    }
}

Tensor blob_to_tensor(const ParamBlob& b) {
    Tensor t = Tensor::zeros(b.shape);
    for (std::size_t i = 0; i < b.v.size(); ++i) t.data[i] = static_cast<double>(b.v[i]);
    return t;
}

namespace {

void validate_widths(const Widths& w) {
    auto pos = [](int v, const char* what) {
        if (v <= 0) throw ShapeError(std::string(what) + " width must be positive");
    };
    pos(w.conv1, "conv1");
    pos(w.conv2, "conv2");
    pos(w.conv3, "conv3");
    pos(w.conv4, "conv4");
    pos(w.conv5, "conv5");
    for (int i = 0; i < 4; ++i) {
        pos(w.shuffle_out[static_cast<std::size_t>(i)], "shuffle stage");
        if (w.shuffle_out[static_cast<std::size_t>(i)] % 2 != 0)
            throw ShapeError("shuffle stage " + std::to_string(i + 1) +
                             " width must be even (channel split), got " +
                             std::to_string(w.shuffle_out[static_cast<std::size_t>(i)]));
    }
    for (int i = 0; i < 3; ++i) pos(w.upconv_out[static_cast<std::size_t>(i)], "upconv");
}

struct Builder {
    NetworkSpec net;

    int add(Node n) {
        if (net.node_by_name.count(n.name))
            throw Error("duplicate node name " + n.name);
        net.node_by_name[n.name] = static_cast<int>(net.nodes.size());
        net.nodes.push_back(std::move(n));
        return static_cast<int>(net.nodes.size()) - 1;
    }

    int out_ch(int id) const { return net.nodes[static_cast<std::size_t>(id)].out_ch; }

    int input() {
        Node n;
        n.name = "input";
        n.kind = NodeKind::input;
        n.out_ch = 3;
        return add(n);
    }

    int conv(const std::string& name, int in, int co, int k, int stride, int pad, int branch) {
        Node n;
        n.name = name;
        n.kind = NodeKind::conv;
        n.in = {in};
        n.stride = stride;
        n.pad = pad;
        n.branch = branch;
        n.has_w = true;
        n.w.shape = {co, out_ch(in), k, k};
        n.w.v.assign(static_cast<std::size_t>(shape_numel(n.w.shape)), 0.0f);
        n.b.shape = {co};
        n.b.v.assign(static_cast<std::size_t>(co), 0.0f);
        n.out_ch = co;
        return add(n);
    }

    int dwconv(const std::string& name, int in, int k, int stride, int pad, int branch) {
        Node n;
        n.name = name;
        n.kind = NodeKind::dwconv;
        n.in = {in};
        n.stride = stride;
        n.pad = pad;
        n.branch = branch;
        n.has_w = true;
        const int c = out_ch(in);
        n.w.shape = {c, 1, k, k};
        n.w.v.assign(static_cast<std::size_t>(shape_numel(n.w.shape)), 0.0f);
        n.b.shape = {c};
        n.b.v.assign(static_cast<std::size_t>(c), 0.0f);
        n.out_ch = c;
        return add(n);
    }

    int relu(const std::string& name, int in, int branch, const std::string& tap = "") {
        Node n;
        n.name = name;
        n.kind = NodeKind::relu;
        n.in = {in};
        n.branch = branch;
        n.tap = tap;
        n.out_ch = out_ch(in);
        return add(n);
    }

    int slice(const std::string& name, int in, int c0, int c1, int branch) {
        Node n;
        n.name = name;
        n.kind = NodeKind::slice;
        n.in = {in};
        n.c0 = c0;
        n.c1 = c1;
        n.branch = branch;
        n.out_ch = c1 - c0;
        return add(n);
    }

    int concat(const std::string& name, int a, int b, int branch) {
        Node n;
        n.name = name;
        n.kind = NodeKind::concat;
        n.in = {a, b};
        n.branch = branch;
        n.out_ch = out_ch(a) + out_ch(b);
        return add(n);
    }

    int shuffle(const std::string& name, int in, int groups, int branch, const std::string& tap = "") {
        Node n;
        n.name = name;
        n.kind = NodeKind::shuffle;
        n.in = {in};
        n.groups = groups;
        n.branch = branch;
        n.tap = tap;
        n.out_ch = out_ch(in);
        return add(n);
    }

    int upsample(const std::string& name, int in, int branch) {
        Node n;
        n.name = name;
        n.kind = NodeKind::upsample;
        n.in = {in};
        n.branch = branch;
        n.out_ch = out_ch(in);
        return add(n);
    }
};

// One shuffle stage: a width-changing entry block (both branches see the full
// input; stride 2 except stage 1) followed by a split/transform/concat block.
// Returns the node id of the stage output (post shuffle, tapped).
int build_stage(Builder& bd, int stage_idx, int in_node, int out_width, int stride) {
    const std::string p = "sh" + std::to_string(stage_idx) + ".";
    const int half = out_width / 2;
    // entry, branch a: depthwise then pointwise
    int a = bd.dwconv(p + "a.dw", in_node, 3, stride, 1, 0);
    a = bd.conv(p + "a.pw", a, half, 1, 1, 0, 0);
    a = bd.relu(p + "a.relu", a, 0);
    // entry, branch b: pointwise, depthwise, pointwise
    int b = bd.conv(p + "b.pw1", in_node, half, 1, 1, 0, 0);
    b = bd.relu(p + "b.relu1", b, 0);
    b = bd.dwconv(p + "b.dw", b, 3, stride, 1, 0);
    b = bd.conv(p + "b.pw2", b, half, 1, 1, 0, 0);
    b = bd.relu(p + "b.relu2", b, 0);
    int cat = bd.concat(p + "cat1", a, b, 0);
    int shuf1 = bd.shuffle(p + "shuf1", cat, 2, 0);
    // regular block: pass-through half, transformed half
    int pass = bd.slice(p + "r.pass", shuf1, 0, half, 0);
    int rb = bd.slice(p + "r.bslice", shuf1, half, out_width, 0);
    rb = bd.conv(p + "r.pw1", rb, half, 1, 1, 0, 0);
    rb = bd.relu(p + "r.relu1", rb, 0);
    rb = bd.dwconv(p + "r.dw", rb, 3, 1, 1, 0);
    rb = bd.conv(p + "r.pw2", rb, half, 1, 1, 0, 0);
    rb = bd.relu(p + "r.relu2", rb, 0);
    int cat2 = bd.concat(p + "cat2", pass, rb, 0);
    return bd.shuffle(p + "shuf2", cat2, 2, 0, "shuffle" + std::to_string(stage_idx));
}

// Decoder branch: three upconv+upsample blocks with skip concats, then the
// conv3..conv6 head.
int build_branch(Builder& bd, const Widths& w, int branch, const std::string& prefix,
                 int bottleneck, const std::array<int, 3>& skips, int head_out) {
    int prev = bottleneck;
    for (int k = 0; k < 3; ++k) {
        const std::string p = prefix + "upconv" + std::to_string(k + 1);
        int cat = bd.concat(p + ".cat", prev, skips[static_cast<std::size_t>(k)], branch);
        int c1 = bd.conv(p + ".a", cat, w.upconv_out[static_cast<std::size_t>(k)], 1, 1, 0, branch);
        c1 = bd.relu(p + ".a.relu", c1, branch);
        int c2 = bd.conv(p + ".b", c1, w.upconv_out[static_cast<std::size_t>(k)], 3, 1, 1, branch);
        c2 = bd.relu(p + ".b.relu", c2, branch, p);
        prev = bd.upsample(p + ".up", c2, branch);
    }
    int h = bd.conv(prefix + "conv3", prev, w.conv3, 3, 1, 1, branch);
    h = bd.relu(prefix + "conv3.relu", h, branch, prefix + "conv3");
    h = bd.conv(prefix + "conv4", h, w.conv4, 3, 1, 1, branch);
    h = bd.relu(prefix + "conv4.relu", h, branch, prefix + "conv4");
    h = bd.conv(prefix + "conv5", h, w.conv5, 1, 1, 0, branch);
    h = bd.relu(prefix + "conv5.relu", h, branch, prefix + "conv5");
    return bd.conv(prefix + "conv6", h, head_out, 1, 1, 0, branch);
}

std::vector<LayerSpec> branch_blueprint(const Widths& w, int head_out) {
    std::vector<LayerSpec> rows;
    int in = w.conv2;
    for (int k = 0; k < 3; ++k) {
        rows.push_back({"upconv" + std::to_string(k + 1), LayerKind::upconv, in,
                        w.upconv_out[static_cast<std::size_t>(k)], 3, 1,
                        "upconv" + std::to_string(k + 1)});
        rows.push_back({"upsample" + std::to_string(k + 1), LayerKind::upsample,
                        w.upconv_out[static_cast<std::size_t>(k)],
                        w.upconv_out[static_cast<std::size_t>(k)], 0, 1, ""});
        in = w.upconv_out[static_cast<std::size_t>(k)];
    }
    rows.push_back({"conv3", LayerKind::conv, in, w.conv3, 3, 1, "conv3"});
    rows.push_back({"conv4", LayerKind::conv, w.conv3, w.conv4, 3, 1, "conv4"});
    rows.push_back({"conv5", LayerKind::conv, w.conv4, w.conv5, 1, 1, "conv5"});
    rows.push_back({"conv6", LayerKind::head, w.conv5, head_out, 1, 1, ""});
    return rows;
}

}  // namespace

NetworkSpec build_network(Config c) { return build_network(table_widths(c), config_name(c)); }

NetworkSpec build_network(const Widths& w, const std::string& name) {
    validate_widths(w);
    Builder bd;
    bd.net.config = name;
    bd.net.widths = w;

    int x = bd.input();
    x = bd.conv("conv1", x, w.conv1, 5, 2, 2, 0);
    x = bd.relu("conv1.relu", x, 0, "conv1");
    std::array<int, 4> stage_out{};
    for (int i = 0; i < 4; ++i) {
        x = build_stage(bd, i + 1, x, w.shuffle_out[static_cast<std::size_t>(i)], i == 0 ? 1 : 2);
        stage_out[static_cast<std::size_t>(i)] = x;
    }
    int c2 = bd.dwconv("conv2.dw", x, 3, 1, 1, 0);
    c2 = bd.conv("conv2", c2, w.conv2, 1, 1, 0, 0);
    c2 = bd.relu("conv2.relu", c2, 0, "conv2");

    const std::array<int, 3> skips{stage_out[3], stage_out[2], stage_out[1]};
    bd.net.out_loc = build_branch(bd, w, 1, "loc.", c2, skips, 2);
    bd.net.out_script = build_branch(bd, w, 2, "scr.", c2, skips, 4);

    // Table-level blueprint.
    bd.net.backbone.push_back({"conv1", LayerKind::conv, 3, w.conv1, 5, 2, "conv1"});
    int in = w.conv1;
    for (int i = 0; i < 4; ++i) {
        bd.net.backbone.push_back({"shuffle" + std::to_string(i + 1),
                                   i == 0 ? LayerKind::shuffle_block : LayerKind::shuffle_block_down,
                                   in, w.shuffle_out[static_cast<std::size_t>(i)], 3, i == 0 ? 1 : 2,
                                   "shuffle" + std::to_string(i + 1)});
        in = w.shuffle_out[static_cast<std::size_t>(i)];
    }
    bd.net.backbone.push_back({"conv2", LayerKind::conv, in, w.conv2, 3, 1, "conv2"});
    bd.net.loc_branch = branch_blueprint(w, 2);
    bd.net.script_branch = branch_blueprint(w, 4);
    return bd.net;
}

std::int64_t NetworkSpec::param_count() const {
    std::int64_t n = 0;
    for (const Node& nd : nodes)
        if (nd.has_w) n += nd.w.size() + nd.b.size();
    return n;
}

int NetworkSpec::node_id(const std::string& name) const {
    auto it = node_by_name.find(name);
    if (it == node_by_name.end()) throw Error("no node named " + name);
    return it->second;
}

int NetworkSpec::layer_out_channels(const std::string& row) const {
    for (const LayerSpec& l : backbone)
        if (l.name == row) return l.out_channels;
    for (const LayerSpec& l : loc_branch)
        if (l.name == row) return l.out_channels;
    throw Error("no blueprint row named " + row);
}

std::vector<std::string> NetworkSpec::tap_names() const {
    std::vector<std::string> out;
    for (const Node& n : nodes)
        if (!n.tap.empty()) out.push_back(n.tap);
    return out;
}

int NetworkSpec::tap_node(const std::string& tap) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].tap == tap) return static_cast<int>(i);
    throw Error("no tap named " + tap);
}

void init_weights(NetworkSpec& net, std::uint64_t seed) {
    for (Node& n : net.nodes) {
        if (!n.has_w) continue;
        std::uint64_t h = 1469598103934665603ull;
        for (char c : n.name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
        std::mt19937_64 rng(mix_seed(seed, h));
        std::normal_distribution<double> dist(0.0, 1.0);
        const int fan_in = n.kind == NodeKind::dwconv
                               ? n.w.shape[2] * n.w.shape[3]
                               : n.w.shape[1] * n.w.shape[2] * n.w.shape[3];
        const double std_dev = std::sqrt(2.0 / fan_in);
        for (float& v : n.w.v) v = static_cast<float>(dist(rng) * std_dev);
        for (float& v : n.b.v) v = 0.0f;
    }
}

namespace {

Tensor eval_node(const Node& n, const std::vector<Tensor>& vals) {
    switch (n.kind) {
        case NodeKind::conv:
            return ops::add_channel_bias(
                ops::conv2d(vals[static_cast<std::size_t>(n.in[0])], blob_to_tensor(n.w), n.stride, n.pad),
                blob_to_tensor(n.b));
        case NodeKind::dwconv:
            return ops::add_channel_bias(
                ops::depthwise_conv2d(vals[static_cast<std::size_t>(n.in[0])], blob_to_tensor(n.w), n.stride, n.pad),
                blob_to_tensor(n.b));
        case NodeKind::relu:
            return ops::relu(vals[static_cast<std::size_t>(n.in[0])]);
        case NodeKind::slice:
            return ops::slice_channels(vals[static_cast<std::size_t>(n.in[0])], n.c0, n.c1);
        case NodeKind::concat:
            return ops::concat_channels(vals[static_cast<std::size_t>(n.in[0])],
                                        vals[static_cast<std::size_t>(n.in[1])]);
        case NodeKind::shuffle:
            return ops::channel_shuffle(vals[static_cast<std::size_t>(n.in[0])], n.groups);
        case NodeKind::upsample:
            return ops::bilinear_upsample2(vals[static_cast<std::size_t>(n.in[0])]);
        default:
            throw Error("cannot evaluate node kind");
    }
}

}  // namespace

ScoreMaps forward(const NetworkSpec& net, const Tensor& image, Mode mode,
                  std::map<std::string, Tensor>* taps) {
    if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3)
        throw ShapeError("forward expects a (1,3,h,w) image, got " + image.shape_str());
    if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0)
        throw ShapeError("input extents must be divisible by 32, resize required: got " +
                         image.shape_str());
    const bool skip_loc = mode == Mode::infer;
    // Reference counts so intermediates can be dropped as soon as consumed.
    std::vector<int> refs(net.nodes.size(), 0);
    for (const Node& n : net.nodes) {
        if (skip_loc && n.branch == 1) continue;
        for (int p : n.in) refs[static_cast<std::size_t>(p)]++;
    }
    std::vector<Tensor> vals(net.nodes.size());
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        const Node& n = net.nodes[i];
        if (skip_loc && n.branch == 1) continue;
        if (n.kind == NodeKind::input) {
            vals[i] = image;
        } else {
            vals[i] = eval_node(n, vals);
        }
        if (!n.tap.empty() && taps) (*taps)[n.tap] = vals[i];
        for (int p : n.in) {
            auto pi = static_cast<std::size_t>(p);
            if (--refs[pi] == 0 && static_cast<int>(pi) != net.out_loc &&
                static_cast<int>(pi) != net.out_script)
                vals[pi] = Tensor();
        }
    }
    ScoreMaps out;
    out.script = vals[static_cast<std::size_t>(net.out_script)];
    if (!skip_loc) {
        out.loc = vals[static_cast<std::size_t>(net.out_loc)];
        out.has_loc = true;
    }
    return out;
}

TrainGraph forward_train(const NetworkSpec& net, Tape& tape, const Tensor& image) {
    if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3)
        throw ShapeError("forward expects a (1,3,h,w) image, got " + image.shape_str());
    if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0)
        throw ShapeError("input extents must be divisible by 32, resize required: got " +
                         image.shape_str());
    TrainGraph g;
    std::vector<Var> vals(net.nodes.size());
    for (std::size_t i = 0; i < net.nodes.size(); ++i) {
        const Node& n = net.nodes[i];
        switch (n.kind) {
            case NodeKind::input:
                vals[i] = tape.constant(image);
                break;
            case NodeKind::conv: {
                Var w = tape.leaf(blob_to_tensor(n.w));
                Var b = tape.leaf(blob_to_tensor(n.b));
                g.params.emplace_back(n.name + "/w", w);
                g.params.emplace_back(n.name + "/b", b);
                vals[i] = tape.add_bias(tape.conv2d(vals[static_cast<std::size_t>(n.in[0])], w, n.stride, n.pad), b);
                break;
            }
            case NodeKind::dwconv: {
                Var w = tape.leaf(blob_to_tensor(n.w));
                Var b = tape.leaf(blob_to_tensor(n.b));
                g.params.emplace_back(n.name + "/w", w);
                g.params.emplace_back(n.name + "/b", b);
                vals[i] = tape.add_bias(tape.depthwise(vals[static_cast<std::size_t>(n.in[0])], w, n.stride, n.pad), b);
                break;
            }
            case NodeKind::relu:
                vals[i] = tape.relu(vals[static_cast<std::size_t>(n.in[0])]);
                break;
            case NodeKind::slice:
                vals[i] = tape.slice_c(vals[static_cast<std::size_t>(n.in[0])], n.c0, n.c1);
                break;
            case NodeKind::concat:
                vals[i] = tape.concat_c(vals[static_cast<std::size_t>(n.in[0])],
                                        vals[static_cast<std::size_t>(n.in[1])]);
                break;
            case NodeKind::shuffle:
                vals[i] = tape.shuffle_c(vals[static_cast<std::size_t>(n.in[0])], n.groups);
                break;
            case NodeKind::upsample:
                vals[i] = tape.upsample2(vals[static_cast<std::size_t>(n.in[0])]);
                break;
        }
    }
    g.loc = vals[static_cast<std::size_t>(net.out_loc)];
    g.script = vals[static_cast<std::size_t>(net.out_script)];
    return g;
}

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_i32(std::ostream& os, std::int32_t v) { put_u32(os, static_cast<std::uint32_t>(v)); }

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw DataError("truncated checkpoint");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated checkpoint");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_u32(is)); }

std::string get_str(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    if (n > (1u << 20)) throw DataError("unreasonable string length in checkpoint");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw DataError("truncated checkpoint");
    return s;
}

void put_blob(std::ostream& os, const std::string& name, const ParamBlob& b) {
    put_str(os, name);
    put_u32(os, static_cast<std::uint32_t>(b.shape.size()));
    for (int e : b.shape) put_u32(os, static_cast<std::uint32_t>(e));
    os.write(reinterpret_cast<const char*>(b.v.data()),
             static_cast<std::streamsize>(b.v.size() * sizeof(float)));
}

ParamBlob get_blob_payload(std::istream& is) {
    ParamBlob b;
    const std::uint32_t rank = get_u32(is);
    if (rank > 8) throw DataError("unreasonable blob rank in checkpoint");
    b.shape.resize(rank);
    for (auto& e : b.shape) e = static_cast<int>(get_u32(is));
    b.v.assign(static_cast<std::size_t>(shape_numel(b.shape)), 0.0f);
    is.read(reinterpret_cast<char*>(b.v.data()),
            static_cast<std::streamsize>(b.v.size() * sizeof(float)));
    if (!is) throw DataError("truncated weight blob in checkpoint");
    return b;
}

void put_rows(std::ostream& os, const std::vector<LayerSpec>& rows) {
    put_u32(os, static_cast<std::uint32_t>(rows.size()));
    for (const LayerSpec& l : rows) {
        put_str(os, l.name);
        os.put(static_cast<char>(l.kind));
        put_i32(os, l.in_channels);
        put_i32(os, l.out_channels);
        put_i32(os, l.kernel);
        put_i32(os, l.stride);
        put_str(os, l.tap);
    }
}

std::vector<LayerSpec> get_rows(std::istream& is) {
    std::vector<LayerSpec> rows(get_u32(is));
    for (LayerSpec& l : rows) {
        l.name = get_str(is);
        l.kind = static_cast<LayerKind>(is.get());
        l.in_channels = get_i32(is);
        l.out_channels = get_i32(is);
        l.kernel = get_i32(is);
        l.stride = get_i32(is);
        l.tap = get_str(is);
    }
    return rows;
}

constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const NetworkSpec& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint: " + path);
    os.write("TLCS", 4);
    put_u16(os, kCheckpointVersion);
    put_str(os, net.config);
    // widths
    put_i32(os, net.widths.conv1);
    for (int v : net.widths.shuffle_out) put_i32(os, v);
    put_i32(os, net.widths.conv2);
    for (int v : net.widths.upconv_out) put_i32(os, v);
    put_i32(os, net.widths.conv3);
    put_i32(os, net.widths.conv4);
    put_i32(os, net.widths.conv5);
    put_rows(os, net.backbone);
    put_rows(os, net.loc_branch);
    put_rows(os, net.script_branch);
    // graph
    put_u32(os, static_cast<std::uint32_t>(net.nodes.size()));
    for (const Node& n : net.nodes) {
        put_str(os, n.name);
        os.put(static_cast<char>(n.kind));
        put_i32(os, n.stride);
        put_i32(os, n.pad);
        put_i32(os, n.groups);
        put_i32(os, n.c0);
        put_i32(os, n.c1);
        put_i32(os, n.branch);
        put_i32(os, n.out_ch);
        put_str(os, n.tap);
        put_u32(os, static_cast<std::uint32_t>(n.in.size()));
        for (int p : n.in) put_i32(os, p);
        os.put(n.has_w ? 1 : 0);
    }
    // blobs
    std::uint32_t blobs = 0;
    for (const Node& n : net.nodes)
        if (n.has_w) blobs += 2;
    put_u32(os, blobs);
    for (const Node& n : net.nodes)
        if (n.has_w) {
            put_blob(os, n.name + "/w", n.w);
            put_blob(os, n.name + "/b", n.b);
        }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

NetworkSpec load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TLCS", 4) != 0)
        throw DataError("not a TLCS checkpoint: " + path);
    const std::uint16_t version = get_u16(is);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    NetworkSpec net;
    net.config = get_str(is);
    net.widths.conv1 = get_i32(is);
    for (int& v : net.widths.shuffle_out) v = get_i32(is);
    net.widths.conv2 = get_i32(is);
    for (int& v : net.widths.upconv_out) v = get_i32(is);
    net.widths.conv3 = get_i32(is);
    net.widths.conv4 = get_i32(is);
    net.widths.conv5 = get_i32(is);
    net.backbone = get_rows(is);
    net.loc_branch = get_rows(is);
    net.script_branch = get_rows(is);
    const std::uint32_t node_count = get_u32(is);
    if (node_count > (1u << 20)) throw DataError("unreasonable node count in checkpoint");
    net.nodes.resize(node_count);
    for (std::uint32_t i = 0; i < node_count; ++i) {
        Node& n = net.nodes[i];
        n.name = get_str(is);
        n.kind = static_cast<NodeKind>(is.get());
        n.stride = get_i32(is);
        n.pad = get_i32(is);
        n.groups = get_i32(is);
        n.c0 = get_i32(is);
        n.c1 = get_i32(is);
        n.branch = get_i32(is);
        n.out_ch = get_i32(is);
        n.tap = get_str(is);
        const std::uint32_t nin = get_u32(is);
        if (nin > 8) throw DataError("unreasonable input arity in checkpoint");
        n.in.resize(nin);
        for (int& p : n.in) {
            p = get_i32(is);
            if (p < 0 || p >= static_cast<int>(i))
                throw DataError("checkpoint graph is not topologically ordered");
        }
        n.has_w = is.get() == 1;
        net.node_by_name[n.name] = static_cast<int>(i);
    }
    const std::uint32_t blob_count = get_u32(is);
    for (std::uint32_t i = 0; i < blob_count; ++i) {
        const std::string name = get_str(is);
        ParamBlob blob = get_blob_payload(is);
        const auto slash = name.rfind('/');
        if (slash == std::string::npos) throw DataError("malformed blob name " + name);
        const std::string node_name = name.substr(0, slash);
        const std::string part = name.substr(slash + 1);
        auto it = net.node_by_name.find(node_name);
        if (it == net.node_by_name.end())
            throw DataError("checkpoint blob for unknown layer " + node_name);
        Node& n = net.nodes[static_cast<std::size_t>(it->second)];
        if (part == "w")
            n.w = std::move(blob);
        else if (part == "b")
            n.b = std::move(blob);
        else
            throw DataError("malformed blob name " + name);
    }
    for (const Node& n : net.nodes)
        if (n.has_w && (n.w.v.empty() || n.b.v.empty()))
            throw DataError("checkpoint missing weights for layer " + n.name);
    net.out_loc = net.node_id("loc.conv6");
    net.out_script = net.node_id("scr.conv6");
    return net;
}

}  // namespace telcos::net
