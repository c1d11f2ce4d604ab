#include "telcos/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "telcos/errors.hpp"
#include "telcos/losses.hpp"
#include "telcos/ops.hpp"
#include "telcos/utils.hpp"

namespace telcos::train {

namespace fs = std::filesystem;
using json = nlohmann::json;

double learning_rate(double initial, int epoch) { return initial / std::pow(2.0, epoch); }

void report_to_json(const TrainReport& r, const std::string& path) {
    json j;
    json epochs = json::array();
    for (const EpochStats& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"lr", e.lr},
                          {"train_ltl", e.train_ltl},
                          {"train_lsd", e.train_lsd},
                          {"train_combined", e.train_combined},
                          {"val_combined", e.val_combined},
                          {"source", e.source}});
    j["epochs"] = epochs;
    j["final_checkpoint"] = r.final_checkpoint;
    j["steps"] = r.steps;
    j["early_stopped"] = r.early_stopped;
    std::ofstream os(path);
    if (!os) throw DataError("cannot write train report: " + path);
    os << j.dump(1) << "\n";
}

std::vector<Sample> samples_from_manifest(const synth::Manifest& m, const std::string& dir) {
    std::vector<Sample> out;
    for (const auto& [img, ann] : m.pairs)
        out.push_back({(fs::path(dir) / img).string(), (fs::path(dir) / ann).string()});
    return out;
}

LoadedSample load_sample(const Sample& s) {
    LoadedSample ls;
    ls.image = synth::load_ppm(s.image_path);
    ls.words = gt::load_annotations(s.annotation_path);
    return ls;
}

double resize_pad(synth::Image& img, std::vector<gt::WordAnnotation>& words, int target) {
    const double scale = static_cast<double>(target) / std::max(img.w, img.h);
    const int nw = std::max(1, static_cast<int>(std::lround(img.w * scale)));
    const int nh = std::max(1, static_cast<int>(std::lround(img.h * scale)));
    synth::Image resized =
        (nw == img.w && nh == img.h) ? img : synth::resize_bilinear(img, nw, nh);
    synth::Image canvas = synth::Image::create(target, target, {0, 0, 0});
    for (int y = 0; y < nh; ++y)
        for (int x = 0; x < nw; ++x)
            for (int c = 0; c < 3; ++c) canvas.at(x, y, c) = resized.at(x, y, c);
    img = std::move(canvas);
    for (gt::WordAnnotation& w : words) {
        for (geom::Pt& p : w.quad) p = p * scale;
        for (gt::CharBox& cb : w.chars)
            for (geom::Pt& p : cb.quad) p = p * scale;
    }
    return scale;
}

void rotate_inplace(synth::Image& img, std::vector<gt::WordAnnotation>& words, double deg) {
    const double a = deg * M_PI / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cx = img.w / 2.0, cy = img.h / 2.0;
    synth::Image out = synth::Image::create(img.w, img.h, {0, 0, 0});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            // Inverse map: rotate the target pixel back by -deg.
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double sx = ca * dx + sa * dy + cx - 0.5;
            const double sy = -sa * dx + ca * dy + cy - 0.5;
            if (sx < -0.5 || sy < -0.5 || sx > img.w - 0.5 || sy > img.h - 0.5) continue;
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, img.w - 1);
            const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, img.h - 1);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const int y1 = std::min(y0 + 1, img.h - 1);
            const double tx = std::clamp(sx - x0, 0.0, 1.0), ty = std::clamp(sy - y0, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const double v =
                    (1 - ty) * ((1 - tx) * img.at(x0, y0, c) + tx * img.at(x1, y0, c)) +
                    ty * ((1 - tx) * img.at(x0, y1, c) + tx * img.at(x1, y1, c));
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    img = std::move(out);
    auto rot = [&](geom::Pt p) {
        const double dx = p.x - cx, dy = p.y - cy;
        return geom::Pt{ca * dx - sa * dy + cx, sa * dx + ca * dy + cy};
    };
    for (gt::WordAnnotation& w : words) {
        for (geom::Pt& p : w.quad) p = rot(p);
        for (gt::CharBox& cb : w.chars)
            for (geom::Pt& p : cb.quad) p = rot(p);
    }
}

void gaussian_blur_inplace(synth::Image& img, double sigma) {
    if (sigma <= 0.0) return;
    const int r = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + r)];
    }
    for (double& v : k) v /= sum;
    synth::Image tmp = img;
    for (int y = 0; y < img.h; ++y)  // horizontal pass
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i)
                    acc += k[static_cast<std::size_t>(i + r)] *
                           img.at(std::clamp(x + i, 0, img.w - 1), y, c);
                tmp.at(x, y, c) = static_cast<std::uint8_t>(std::lround(acc));
            }
    for (int y = 0; y < img.h; ++y)  // vertical pass
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i)
                    acc += k[static_cast<std::size_t>(i + r)] *
                           tmp.at(x, std::clamp(y + i, 0, img.h - 1), c);
                img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(acc));
            }
}

void saturation_inplace(synth::Image& img, double factor) {
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const double luma =
                0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
            for (int c = 0; c < 3; ++c) {
                const double v = luma + factor * (img.at(x, y, c) - luma);
                img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
}

void gray_inplace(synth::Image& img) { saturation_inplace(img, 0.0); }

void brightness_inplace(synth::Image& img, double delta) {
    for (auto& v : img.px)
        v = static_cast<std::uint8_t>(std::lround(std::clamp(v + delta, 0.0, 255.0)));
}

LoadedSample augment(const LoadedSample& in, const AugmentConfig& aug, int target,
                     std::uint64_t seed) {
    LoadedSample out = in;
    resize_pad(out.image, out.words, target);
    std::mt19937_64 rng(seed);
    auto runi = [&](double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    };
    if (aug.rotate) rotate_inplace(out.image, out.words, runi(-aug.max_deg, aug.max_deg));
    if (aug.blur && runi(0, 1) < 0.5) gaussian_blur_inplace(out.image, runi(0.4, 1.1));
    if (aug.saturation && runi(0, 1) < 0.5) saturation_inplace(out.image, runi(0.6, 1.4));
    if (aug.gray && runi(0, 1) < 0.25) gray_inplace(out.image);
    if (aug.brightness && runi(0, 1) < 0.5) brightness_inplace(out.image, runi(-25, 25));
    return out;
}

Tensor image_to_tensor(const synth::Image& img) {
    Tensor t = Tensor::zeros({1, 3, img.h, img.w});
    for (int c = 0; c < 3; ++c) {
        double* p = t.plane(0, c);
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                p[static_cast<std::size_t>(y) * img.w + x] = img.at(x, y, c) / 255.0 - 0.5;
    }
    return t;
}

namespace {

struct AdamState {
    std::int64_t t = 0;
    std::map<std::string, std::vector<double>> m, v;
};

// Master weights stay float32; moments are kept in double.
void adam_step(net::NetworkSpec& net, AdamState& st, std::map<std::string, Tensor>& grads,
               double lr, double b1, double b2, double eps) {
    st.t++;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (auto& [name, g] : grads) {
        const auto slash = name.rfind('/');
        net::Node& node = net.nodes[static_cast<std::size_t>(net.node_id(name.substr(0, slash)))];
        net::ParamBlob& blob = name.substr(slash + 1) == "w" ? node.w : node.b;
        auto& m = st.m[name];
        auto& v = st.v[name];
        if (m.empty()) {
            m.assign(g.data.size(), 0.0);
            v.assign(g.data.size(), 0.0);
        }
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double gi = g.data[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            blob.v[i] = static_cast<float>(static_cast<double>(blob.v[i]) -
                                           lr * mh / (std::sqrt(vh) + eps));
        }
    }
}

struct GtTensors {
    Tensor loc;     // (1,2,h2,w2)
    Tensor script;  // (1,4,h2,w2)
};

GtTensors gt_tensors(const gt::GroundTruthMaps& maps) {
    const int h2 = maps.region.dim(0), w2 = maps.region.dim(1);
    GtTensors o;
    o.loc = Tensor::zeros({1, 2, h2, w2});
    std::copy(maps.region.data.begin(), maps.region.data.end(), o.loc.plane(0, 0));
    std::copy(maps.affinity.data.begin(), maps.affinity.data.end(), o.loc.plane(0, 1));
    o.script = Tensor({1, gt::kScriptClasses, h2, w2}, maps.script.data);
    return o;
}

void dump_nan_diagnostics(const std::string& out_dir, int epoch, int index, const Tensor& input,
                          const Tensor& loc, const Tensor& script) {
    fs::create_directories(out_dir);
    const std::string base =
        (fs::path(out_dir) / ("nan_batch_e" + std::to_string(epoch) + "_i" + std::to_string(index)))
            .string();
    save_tensor(input, base + "_input.tlct");
    save_tensor(loc, base + "_loc.tlct");
    save_tensor(script, base + "_script.tlct");
}

struct Split {
    std::vector<int> train, val;
};

Split split_samples(int n, double val_fraction, std::uint64_t seed) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng(mix_seed(seed, 0xA11CE));
    std::shuffle(idx.begin(), idx.end(), rng);
    int nval = n > 1 ? std::max(1, static_cast<int>(std::lround(n * val_fraction))) : 0;
    Split s;
    s.val.assign(idx.begin(), idx.begin() + nval);
    s.train.assign(idx.begin() + nval, idx.end());
    if (s.train.empty()) std::swap(s.train, s.val);
    return s;
}

// Shared driver for ground-truth and teacher-target phases.
struct PhaseTargets {
    bool soft = false;
    const net::NetworkSpec* teacher = nullptr;
};

TrainReport run_training(net::NetworkSpec& net, const std::vector<Sample>& samples,
                         const TrainConfig& cfg, const PhaseTargets& targets, int epochs,
                         int epoch_offset, AdamState& adam, TrainReport report) {
    if (samples.empty()) throw DataError("training needs a non-empty dataset");
    std::vector<LoadedSample> loaded;
    loaded.reserve(samples.size());
    for (const Sample& s : samples) loaded.push_back(load_sample(s));
    Split split = split_samples(static_cast<int>(samples.size()), cfg.val_fraction, cfg.seed);

    fs::create_directories(cfg.out_dir);
    double best_val = 1e300;
    int no_improve = 0;
    std::vector<net::ParamBlob> best_w, best_b;
    auto snapshot = [&]() {
        best_w.clear();
        best_b.clear();
        for (const net::Node& n : net.nodes)
            if (n.has_w) {
                best_w.push_back(n.w);
                best_b.push_back(n.b);
            }
    };
    auto restore = [&]() {
        if (best_w.empty()) return;
        std::size_t j = 0;
        for (net::Node& n : net.nodes)
            if (n.has_w) {
                n.w = best_w[j];
                n.b = best_b[j];
                j++;
            }
    };
    snapshot();

    const std::string source = targets.soft ? "soft" : "hard";
    for (int e = 0; e < epochs; ++e) {
        const int epoch = epoch_offset + e;
        const double lr = learning_rate(cfg.initial_lr, epoch);
        std::vector<int> order = split.train;
        std::mt19937_64 rng(mix_seed(cfg.seed, 0xE90C4 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        double sum_ltl = 0.0, sum_lsd = 0.0, sum_comb = 0.0;
        int seen = 0;
        std::map<std::string, Tensor> grad_acc;
        int in_batch = 0;
        for (int oi = 0; oi < static_cast<int>(order.size()); ++oi) {
            const int si = order[static_cast<std::size_t>(oi)];
            LoadedSample s = augment(loaded[static_cast<std::size_t>(si)], cfg.aug, cfg.input_size,
                                     mix_seed(cfg.seed, (static_cast<std::uint64_t>(epoch) << 32) ^
                                                            static_cast<std::uint64_t>(si)));
            Tensor input = image_to_tensor(s.image);
            Tensor loc_target, script_target;
            double temperature = 1.0;
            bool soft = targets.soft;
            if (soft) {
                net::ScoreMaps tm = net::forward(*targets.teacher, input, net::Mode::train);
                loss::DistillTargets dt =
                    loss::distill_targets(tm.loc, tm.script, cfg.distill_temperature);
                loc_target = dt.loc_maps;
                script_target = dt.script_soft;
                temperature = dt.temperature;
            } else {
                gt::GroundTruthMaps maps = gt::render_ground_truth(
                    s.words, cfg.input_size, cfg.input_size, cfg.theta_s, cfg.sigma_frac);
                GtTensors g = gt_tensors(maps);
                loc_target = g.loc;
                script_target = g.script;
            }

            Tape tape;
            net::TrainGraph tg = net::forward_train(net, tape, input);
            Var ltl = loss::logcosh_pool_loss(tape, tg.loc, loc_target);
            Var lsd = soft ? loss::soft_ce_loss(tape, tg.script, script_target, temperature)
                           : loss::pixel_ce_loss(tape, tg.script, script_target);
            Var comb = tape.add(tape.scale(ltl, cfg.lambda), tape.scale(lsd, 1.0 - cfg.lambda));

            const double lv = tape.val(comb).data[0];
            if (!std::isfinite(lv)) {
                dump_nan_diagnostics(cfg.out_dir, epoch, si, input, tape.val(tg.loc),
                                     tape.val(tg.script));
                throw NumericError("training loss is not finite at epoch " +
                                   std::to_string(epoch) + ", sample " + std::to_string(si));
            }
            sum_ltl += tape.val(ltl).data[0];
            sum_lsd += tape.val(lsd).data[0];
            sum_comb += lv;
            seen++;

            std::vector<Tensor> grads = tape.backward(comb);
            for (const auto& [name, var] : tg.params) {
                Tensor g = tape.grad_of(grads, var);
                auto it = grad_acc.find(name);
                if (it == grad_acc.end())
                    grad_acc.emplace(name, std::move(g));
                else
                    it->second = ops::add(it->second, g);
            }
            in_batch++;
            const bool last = oi + 1 == static_cast<int>(order.size());
            if (in_batch == cfg.batch_size || last) {
                for (auto& [name, g] : grad_acc) g = ops::scale(g, 1.0 / in_batch);
                adam_step(net, adam, grad_acc, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
                report.steps++;
                grad_acc.clear();
                in_batch = 0;
            }
        }

        // Validation on the held-out split (resize only, ground-truth loss).
        double val = 0.0;
        int vn = 0;
        for (int si : split.val) {
            LoadedSample s = loaded[static_cast<std::size_t>(si)];
            resize_pad(s.image, s.words, cfg.input_size);
            Tensor input = image_to_tensor(s.image);
            gt::GroundTruthMaps maps = gt::render_ground_truth(
                s.words, cfg.input_size, cfg.input_size, cfg.theta_s, cfg.sigma_frac);
            GtTensors g = gt_tensors(maps);
            net::ScoreMaps sm = net::forward(net, input, net::Mode::train);
            val += loss::combined_loss(sm.loc, g.loc, sm.script, g.script, cfg.lambda);
            vn++;
        }
        val = vn ? val / vn : sum_comb / std::max(1, seen);

        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        es.train_ltl = seen ? sum_ltl / seen : 0.0;
        es.train_lsd = seen ? sum_lsd / seen : 0.0;
        es.train_combined = seen ? sum_comb / seen : 0.0;
        es.val_combined = val;
        es.source = source;
        report.epochs.push_back(es);

        net::save_checkpoint(net, (fs::path(cfg.out_dir) /
                                   ("epoch_" + std::to_string(epoch) + ".tlcs"))
                                      .string());

        if (val < best_val - 1e-12) {
            best_val = val;
            no_improve = 0;
            snapshot();
        } else {
            no_improve++;
            if (no_improve >= cfg.patience) {
                report.early_stopped = true;
                break;
            }
        }
    }
    restore();
    return report;
}

}  // namespace

TrainReport train(net::NetworkSpec& net, const std::vector<Sample>& samples,
                  const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    AdamState adam;
    TrainReport report = run_training(net, samples, cfg, PhaseTargets{}, cfg.epochs, 0, adam, {});
    const std::string final_path = (fs::path(cfg.out_dir) / "final.tlcs").string();
    net::save_checkpoint(net, final_path);
    report.final_checkpoint = final_path;
    report.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

TrainReport distill_train(const net::NetworkSpec& teacher, net::NetworkSpec& student,
                          const std::vector<Sample>& samples, const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    AdamState adam;
    PhaseTargets soft;
    soft.soft = true;
    soft.teacher = &teacher;
    TrainReport report =
        run_training(student, samples, cfg, soft, cfg.distill_soft_epochs, 0, adam, {});
    report = run_training(student, samples, cfg, PhaseTargets{}, cfg.epochs,
                          cfg.distill_soft_epochs, adam, std::move(report));
    const std::string final_path = (fs::path(cfg.out_dir) / "final.tlcs").string();
    net::save_checkpoint(student, final_path);
    report.final_checkpoint = final_path;
    report.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace telcos::train
