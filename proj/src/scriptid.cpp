#include "telcos/scriptid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "telcos/autograd.hpp"
#include "telcos/errors.hpp"
#include "telcos/kernels.hpp"
#include "telcos/ops.hpp"
#include "telcos/utils.hpp"

namespace telcos::scriptid {

namespace fs = std::filesystem;
using json = nlohmann::json;

ProjectionLayer ProjectionLayer::create(int hash_count, int planes_per_hash, int input_dim,
                                        std::uint64_t seed) {
    ProjectionLayer p;
    p.hash_count = hash_count;
    p.planes_per_hash = planes_per_hash;
    p.input_dim = input_dim;
    p.seed = seed;
    p.planes = Tensor::zeros({hash_count * planes_per_hash, input_dim});
    for (int t = 0; t < hash_count; ++t) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
        std::normal_distribution<double> dist(0.0, 1.0);
        for (int d = 0; d < planes_per_hash; ++d)
            for (int i = 0; i < input_dim; ++i)
                p.planes.data[(static_cast<std::size_t>(t) * planes_per_hash + d) * input_dim + i] =
                    dist(rng);
    }
    return p;
}

std::vector<std::uint8_t> lsh_project(const std::vector<double>& x, const ProjectionLayer& p) {
    if (static_cast<int>(x.size()) != p.input_dim)
        throw ShapeError("lsh input has dim " + std::to_string(x.size()) + ", planes expect " +
                         std::to_string(p.input_dim));
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(p.bits()));
    const kernels::KernelTable& K = kernels::active();
    for (int i = 0; i < p.bits(); ++i) {
        const double d = K.dot(&p.planes.data[static_cast<std::size_t>(i) * p.input_dim], x.data(),
                               x.size());
        bits[static_cast<std::size_t>(i)] = d >= 0.0 ? 1 : 0;
    }
    return bits;
}

Tensor roi_features(const Tensor& features, const geom::Quad& quad, int out_h, int out_w) {
    if (features.rank() != 4 || features.dim(0) != 1)
        throw ShapeError("roi_features expects a (1,C,H,W) map, got " + features.shape_str());
    const int C = features.dim(1), H = features.dim(2), W = features.dim(3);
    geom::Quad bb = geom::bounding_box(quad);
    int x0 = std::clamp(static_cast<int>(std::floor(bb[0].x)), 0, W - 1);
    int y0 = std::clamp(static_cast<int>(std::floor(bb[0].y)), 0, H - 1);
    int x1 = std::clamp(static_cast<int>(std::ceil(bb[2].x)), 0, W);
    int y1 = std::clamp(static_cast<int>(std::ceil(bb[2].y)), 0, H);
    if (x1 <= x0) x1 = x0 + 1;  // at least one cell
    if (y1 <= y0) y1 = y0 + 1;
    const int cw = x1 - x0, ch = y1 - y0;
    Tensor out = Tensor::zeros({1, C, out_h, out_w});
    for (int c = 0; c < C; ++c) {
        const double* src = features.plane(0, c);
        double* dst = out.plane(0, c);
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                const double fx = (ox + 0.5) * cw / out_w - 0.5;
                const double fy = (oy + 0.5) * ch / out_h - 0.5;
                int ix0 = static_cast<int>(std::floor(fx));
                int iy0 = static_cast<int>(std::floor(fy));
                const double tx = fx - ix0, ty = fy - iy0;
                const int ix1 = std::clamp(ix0 + 1, 0, cw - 1);
                const int iy1 = std::clamp(iy0 + 1, 0, ch - 1);
                ix0 = std::clamp(ix0, 0, cw - 1);
                iy0 = std::clamp(iy0, 0, ch - 1);
                auto at = [&](int yy, int xx) {
                    return src[static_cast<std::size_t>(y0 + yy) * W + (x0 + xx)];
                };
                dst[static_cast<std::size_t>(oy) * out_w + ox] =
                    (1 - ty) * ((1 - tx) * at(iy0, ix0) + tx * at(iy0, ix1)) +
                    ty * ((1 - tx) * at(iy1, ix0) + tx * at(iy1, ix1));
            }
    }
    return out;
}

std::vector<double> ssp_pool(const Tensor& features, int n_stripes) {
    if (features.rank() != 4 || features.dim(0) != 1)
        throw ShapeError("ssp_pool expects a (1,C,H,W) map, got " + features.shape_str());
    const int C = features.dim(1), H = features.dim(2), W = features.dim(3);
    const int rows = (H + n_stripes - 1) / n_stripes;
    std::vector<double> out(static_cast<std::size_t>(n_stripes) * C, 0.0);
    for (int s = 0; s < n_stripes; ++s)
        for (int c = 0; c < C; ++c) {
            double best = -1e300;
            bool any = false;
            for (int y = s * rows; y < std::min((s + 1) * rows, H); ++y)
                for (int x = 0; x < W; ++x) {
                    best = std::max(best, features.at4(0, c, y, x));
                    any = true;
                }
            out[static_cast<std::size_t>(s) * C + c] = any ? best : 0.0;
        }
    return out;
}

namespace {

net::ParamBlob make_blob(std::vector<int> shape, double std_dev, std::uint64_t seed) {
    net::ParamBlob b;
    b.shape = std::move(shape);
    b.v.assign(static_cast<std::size_t>(shape_numel(b.shape)), 0.0f);
    if (std_dev > 0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> dist(0.0, std_dev);
        for (float& v : b.v) v = static_cast<float>(dist(rng));
    }
    return b;
}

std::uint64_t name_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    return h;
}

struct StackOut {
    Var vec;           // pooled multi-level feature vector
    int vec_dim = 0;
};

// Shared conv stack: down, up, down; spatially sensitive pooling at each
// level, concatenated.
StackOut run_stack(Tape& tape, const ScriptIdModel& m, Var roi,
                   std::vector<std::pair<std::string, Var>>* params) {
    auto leaf = [&](const std::string& name) {
        Var v = tape.leaf(net::blob_to_tensor(m.params.at(name)));
        if (params) params->emplace_back(name, v);
        return v;
    };
    const int cc = m.cfg.conv_channels;
    Var w1 = leaf("c1/w"), b1 = leaf("c1/b");
    Var t1 = tape.relu(tape.add_bias(tape.conv2d(roi, w1, 2, 1), b1));
    Var w2 = leaf("c2/w"), b2 = leaf("c2/b");
    Var t2 = tape.upsample2(tape.relu(tape.add_bias(tape.conv2d(t1, w2, 1, 1), b2)));
    Var w3 = leaf("c3/w"), b3 = leaf("c3/b");
    Var t3 = tape.relu(tape.add_bias(tape.conv2d(t2, w3, 2, 1), b3));
    Var v1 = tape.stripe_max(t1, m.cfg.stripes);
    Var v2 = tape.stripe_max(t2, m.cfg.stripes);
    Var v3 = tape.stripe_max(t3, m.cfg.stripes);
    StackOut out;
    out.vec = tape.concat_vec(tape.concat_vec(v1, v2), v3);
    out.vec_dim = m.cfg.stripes * (cc + cc + 2 * cc);
    return out;
}

Var head_logits(Tape& tape, const ScriptIdModel& m, Var vec,
                std::vector<std::pair<std::string, Var>>* params) {
    auto leaf = [&](const std::string& name) {
        Var v = tape.leaf(net::blob_to_tensor(m.params.at(name)));
        if (params) params->emplace_back(name, v);
        return v;
    };
    if (m.student) {
        Var bits = tape.sign_bits_ste(vec, m.proj.planes);
        Var w = leaf("fc/w"), b = leaf("fc/b");
        return tape.add_vec(tape.dense(w, bits), b);
    }
    Var w1 = leaf("fc1/w"), b1 = leaf("fc1/b");
    Var h = tape.relu(tape.add_vec(tape.dense(w1, vec), b1));
    Var w2 = leaf("fc2/w"), b2 = leaf("fc2/b");
    return tape.add_vec(tape.dense(w2, h), b2);
}

Var model_logits(Tape& tape, const ScriptIdModel& m, const Tensor& roi,
                 std::vector<std::pair<std::string, Var>>* params) {
    Var in = tape.constant(roi);
    StackOut s = run_stack(tape, m, in, params);
    return head_logits(tape, m, s.vec, params);
}

}  // namespace

ScriptIdModel make_model(const ScriptIdConfig& cfg, int in_channels, bool student,
                         std::uint64_t seed) {
    if (cfg.labels.size() < 2) throw Error("scriptid needs at least two labels");
    ScriptIdModel m;
    m.cfg = cfg;
    m.student = student;
    m.in_channels = in_channels;
    m.proj_seed = mix_seed(seed, 0x9A57);
    const int cc = cfg.conv_channels;
    auto blob = [&](const std::string& name, std::vector<int> shape, int fan_in) {
        m.params[name] = make_blob(std::move(shape), std::sqrt(2.0 / fan_in),
                                   mix_seed(seed, name_hash(name)));
    };
    blob("c1/w", {cc, in_channels, 3, 3}, in_channels * 9);
    m.params["c1/b"] = make_blob({cc}, 0.0, 0);
    blob("c2/w", {cc, cc, 3, 3}, cc * 9);
    m.params["c2/b"] = make_blob({cc}, 0.0, 0);
    blob("c3/w", {2 * cc, cc, 3, 3}, cc * 9);
    m.params["c3/b"] = make_blob({2 * cc}, 0.0, 0);
    const int vec_dim = cfg.stripes * 4 * cc;
    const int classes = static_cast<int>(cfg.labels.size());
    if (student) {
        m.proj = ProjectionLayer::create(cfg.hash_count, cfg.planes_per_hash, vec_dim, m.proj_seed);
        blob("fc/w", {classes, m.proj.bits()}, m.proj.bits());
        m.params["fc/b"] = make_blob({classes}, 0.0, 0);
    } else {
        blob("fc1/w", {cfg.teacher_hidden, vec_dim}, vec_dim);
        m.params["fc1/b"] = make_blob({cfg.teacher_hidden}, 0.0, 0);
        blob("fc2/w", {classes, cfg.teacher_hidden}, cfg.teacher_hidden);
        m.params["fc2/b"] = make_blob({classes}, 0.0, 0);
    }
    return m;
}

std::vector<double> classify_logits(const ScriptIdModel& model, const Tensor& roi) {
    Tape tape;
    Var logits = model_logits(tape, model, roi, nullptr);
    return tape.val(logits).data;
}

int classify(const ScriptIdModel& model, const Tensor& roi) {
    const std::vector<double> l = classify_logits(model, roi);
    return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

ScriptIdReport train_scriptid(const ScriptIdModel* teacher, ScriptIdModel& model,
                              const std::vector<CropSample>& crops, double lambda_t, int epochs,
                              double lr, std::uint64_t seed) {
    if (lambda_t < 0.0 || lambda_t > 1.0) throw Error("lambda_t must be in [0,1]");
    if (lambda_t > 0.0 && !teacher) throw Error("distillation weight set but no teacher given");
    if (crops.empty()) throw DataError("scriptid training needs crops");
    const int classes = static_cast<int>(model.cfg.labels.size());
    for (const CropSample& c : crops)
        if (c.label < 0 || c.label >= classes)
            throw DataError("crop label " + std::to_string(c.label) + " outside configured classes");

    ScriptIdReport report;
    report.epochs = epochs;
    std::int64_t t = 0;
    std::map<std::string, std::vector<double>> mom, vel;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int e = 0; e < epochs; ++e) {
        std::vector<int> order(crops.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
        std::shuffle(order.begin(), order.end(), rng);
        double sum_soft = 0.0, sum_hard = 0.0;
        for (int idx : order) {
            const CropSample& c = crops[static_cast<std::size_t>(idx)];
            Tape tape;
            std::vector<std::pair<std::string, Var>> params;
            Var logits = model_logits(tape, model, c.features, &params);
            Tensor onehot = Tensor::zeros({classes});
            onehot.data[static_cast<std::size_t>(c.label)] = 1.0;
            Var hard = tape.softmax_ce_vec(logits, onehot);
            Var loss = hard;
            double soft_v = 0.0;
            if (lambda_t > 0.0) {
                std::vector<double> tl = classify_logits(*teacher, c.features);
                double mx = *std::max_element(tl.begin(), tl.end());
                double z = 0.0;
                for (double v : tl) z += std::exp(v - mx);
                Tensor soft_target = Tensor::zeros({classes});
                for (int i = 0; i < classes; ++i)
                    soft_target.data[static_cast<std::size_t>(i)] =
                        std::exp(tl[static_cast<std::size_t>(i)] - mx) / z;
                Var soft = tape.softmax_ce_vec(logits, soft_target);
                soft_v = tape.val(soft).data[0];
                loss = tape.add(tape.scale(soft, lambda_t), tape.scale(hard, 1.0 - lambda_t));
            }
            sum_hard += tape.val(hard).data[0];
            sum_soft += soft_v;
            if (!std::isfinite(tape.val(loss).data[0]))
                throw NumericError("scriptid loss is not finite");
            std::vector<Tensor> grads = tape.backward(loss);
            t++;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
            for (const auto& [name, var] : params) {
                Tensor g = tape.grad_of(grads, var);
                auto& m = mom[name];
                auto& v = vel[name];
                if (m.empty()) {
                    m.assign(g.data.size(), 0.0);
                    v.assign(g.data.size(), 0.0);
                }
                net::ParamBlob& blob = model.params.at(name);
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    m[i] = b1 * m[i] + (1 - b1) * g.data[i];
                    v[i] = b2 * v[i] + (1 - b2) * g.data[i] * g.data[i];
                    blob.v[i] = static_cast<float>(static_cast<double>(blob.v[i]) -
                                                   lr * (m[i] / bc1) /
                                                       (std::sqrt(v[i] / bc2) + eps));
                }
            }
        }
        report.epoch_loss_soft.push_back(sum_soft / static_cast<double>(crops.size()));
        report.epoch_loss_hard.push_back(sum_hard / static_cast<double>(crops.size()));
    }
    report.accuracy = evaluate_accuracy(model, crops);
    return report;
}

double evaluate_accuracy(const ScriptIdModel& model, const std::vector<CropSample>& crops) {
    if (crops.empty()) return 0.0;
    int correct = 0;
    for (const CropSample& c : crops)
        if (classify(model, c.features) == c.label) correct++;
    return static_cast<double>(correct) / static_cast<double>(crops.size());
}

void save_crops(const std::vector<CropSample>& crops, const std::vector<std::string>& labels,
                const std::string& dir) {
    fs::create_directories(dir);
    json j;
    j["labels"] = labels;
    json samples = json::array();
    for (std::size_t i = 0; i < crops.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "crop_%05zu.tlct", i);
        save_tensor(crops[i].features, (fs::path(dir) / name).string());
        samples.push_back({{"file", name}, {"label", crops[i].label}});
    }
    j["samples"] = samples;
    std::ofstream os((fs::path(dir) / "labels.json").string());
    if (!os) throw DataError("cannot write crop labels in " + dir);
    os << j.dump(1) << "\n";
}

std::pair<std::vector<CropSample>, std::vector<std::string>> load_crops(const std::string& dir) {
    std::ifstream is((fs::path(dir) / "labels.json").string());
    if (!is) throw DataError("cannot open crop labels in " + dir);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("bad crop labels JSON: " + std::string(e.what()));
    }
    std::vector<std::string> labels = j.at("labels").get<std::vector<std::string>>();
    std::vector<CropSample> crops;
    for (const json& s : j.at("samples")) {
        CropSample c;
        c.features = load_tensor((fs::path(dir) / s.at("file").get<std::string>()).string());
        c.label = s.at("label").get<int>();
        crops.push_back(std::move(c));
    }
    return {std::move(crops), std::move(labels)};
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated scriptid checkpoint");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    if (n > (1u << 20)) throw DataError("unreasonable string in scriptid checkpoint");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw DataError("truncated scriptid checkpoint");
    return s;
}

}  // namespace

void save_model(const ScriptIdModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write scriptid model: " + path);
    os.write("TLCS", 4);
    os.put(2);  // container version 2: scriptid payload
    os.put(0);
    json meta;
    meta["kind"] = "scriptid";
    meta["student"] = model.student;
    meta["in_channels"] = model.in_channels;
    meta["proj_seed"] = model.proj_seed;
    meta["labels"] = model.cfg.labels;
    meta["stripes"] = model.cfg.stripes;
    meta["conv_channels"] = model.cfg.conv_channels;
    meta["hash_count"] = model.cfg.hash_count;
    meta["planes_per_hash"] = model.cfg.planes_per_hash;
    meta["teacher_hidden"] = model.cfg.teacher_hidden;
    meta["roi_h"] = model.cfg.roi_h;
    meta["roi_w"] = model.cfg.roi_w;
    put_str(os, meta.dump());
    put_u32(os, static_cast<std::uint32_t>(model.params.size()));
    for (const auto& [name, blob] : model.params) {
        put_str(os, name);
        put_u32(os, static_cast<std::uint32_t>(blob.shape.size()));
        for (int e : blob.shape) put_u32(os, static_cast<std::uint32_t>(e));
        os.write(reinterpret_cast<const char*>(blob.v.data()),
                 static_cast<std::streamsize>(blob.v.size() * sizeof(float)));
    }
    if (!os) throw DataError("scriptid model write failed: " + path);
}

ScriptIdModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open scriptid model: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TLCS", 4) != 0)
        throw DataError("not a TLCS container: " + path);
    const int v0 = is.get(), v1 = is.get();
    if (v0 != 2 || v1 != 0) throw DataError("not a scriptid checkpoint: " + path);
    json meta;
    try {
        meta = json::parse(get_str(is));
    } catch (const json::exception& e) {
        throw DataError("bad scriptid metadata: " + std::string(e.what()));
    }
    ScriptIdModel m;
    m.student = meta.at("student").get<bool>();
    m.in_channels = meta.at("in_channels").get<int>();
    m.proj_seed = meta.at("proj_seed").get<std::uint64_t>();
    m.cfg.labels = meta.at("labels").get<std::vector<std::string>>();
    m.cfg.stripes = meta.at("stripes").get<int>();
    m.cfg.conv_channels = meta.at("conv_channels").get<int>();
    m.cfg.hash_count = meta.at("hash_count").get<int>();
    m.cfg.planes_per_hash = meta.at("planes_per_hash").get<int>();
    m.cfg.teacher_hidden = meta.at("teacher_hidden").get<int>();
    m.cfg.roi_h = meta.at("roi_h").get<int>();
    m.cfg.roi_w = meta.at("roi_w").get<int>();
    const std::uint32_t count = get_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = get_str(is);
        net::ParamBlob blob;
        const std::uint32_t rank = get_u32(is);
        if (rank > 8) throw DataError("unreasonable blob rank");
        blob.shape.resize(rank);
        for (int& e : blob.shape) e = static_cast<int>(get_u32(is));
        blob.v.assign(static_cast<std::size_t>(shape_numel(blob.shape)), 0.0f);
        is.read(reinterpret_cast<char*>(blob.v.data()),
                static_cast<std::streamsize>(blob.v.size() * sizeof(float)));
        if (!is) throw DataError("truncated scriptid blob");
        m.params[name] = std::move(blob);
    }
    if (m.student) {
        const int vec_dim = m.cfg.stripes * 4 * m.cfg.conv_channels;
        m.proj = ProjectionLayer::create(m.cfg.hash_count, m.cfg.planes_per_hash, vec_dim,
                                         m.proj_seed);
    }
    return m;
}

}  // namespace telcos::scriptid
