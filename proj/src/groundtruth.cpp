#include "telcos/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include <nlohmann/json.hpp>

#include "telcos/errors.hpp"

namespace telcos::gt {

using geom::Pt;
using geom::Quad;
using json = nlohmann::json;

std::string to_string(Script s) {
    switch (s) {
        case Script::latin: return "latin";
        case Script::cjk: return "cjk";
        case Script::other: return "other";
    }
    return "other";
}

Script script_from_string(const std::string& s) {
    if (s == "latin") return Script::latin;
    if (s == "cjk") return Script::cjk;
    if (s == "other") return Script::other;
    throw DataError("unknown script label: " + s);
}

Tensor gaussian_patch(int n, double sigma_frac) {
    if (n < 3) throw Error("gaussian_patch needs n >= 3, got " + std::to_string(n));
    Tensor t = Tensor::zeros({n, n});
    const double inv2s2 = 1.0 / (2.0 * sigma_frac * sigma_frac);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double u = static_cast<double>(c) / (n - 1) - 0.5;
            const double v = static_cast<double>(r) / (n - 1) - 0.5;
            t.at2(r, c) = std::exp(-(u * u + v * v) * inv2s2);
        }
    return t;
}

namespace {

// Visits integer canvas pixels covered by the quad with the warped Gaussian
// value. Returns false (and counts) for degenerate quads.
bool for_each_warped_value(const Quad& quad, double sigma_frac, int canvas_w, int canvas_h,
                           WarpStats* stats, const std::function<void(int, int, double)>& fn) {
    if (geom::quad_area(quad) < 1.0) {
        if (stats) stats->degenerate++;
        return false;
    }
    geom::Homography inv;
    try {
        inv = geom::quad_to_quad(quad, geom::unit_square());
    } catch (const Error&) {
        if (stats) stats->degenerate++;
        return false;
    }
    double x0 = quad[0].x, x1 = quad[0].x, y0 = quad[0].y, y1 = quad[0].y;
    for (const Pt& p : quad) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int ix1 = std::min(canvas_w - 1, static_cast<int>(std::ceil(x1)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int iy1 = std::min(canvas_h - 1, static_cast<int>(std::ceil(y1)));
    const double inv2s2 = 1.0 / (2.0 * sigma_frac * sigma_frac);
    for (int y = iy0; y <= iy1; ++y)
        for (int x = ix0; x <= ix1; ++x) {
            const Pt uv = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            if (std::fabs(uv.x) > 0.5 || std::fabs(uv.y) > 0.5) continue;
            fn(x, y, std::exp(-(uv.x * uv.x + uv.y * uv.y) * inv2s2));
        }
    return true;
}

bool quad_inside(const Quad& q, int w, int h) {
    for (const Pt& p : q)
        if (p.x < 0 || p.y < 0 || p.x > w || p.y > h) return false;
    return true;
}

Quad scale_quad(const Quad& q, double s) {
    Quad out{};
    for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)] * s;
    return out;
}

}  // namespace

void warp_gaussian_to_quad(const Quad& quad, double sigma_frac, Tensor& canvas, WarpStats* stats) {
    if (canvas.rank() != 2) throw ShapeError("warp canvas must be rank 2, got " + canvas.shape_str());
    const int h = canvas.dim(0), w = canvas.dim(1);
    for_each_warped_value(quad, sigma_frac, w, h, stats, [&](int x, int y, double v) {
        double& cell = canvas.at2(y, x);
        cell = std::max(cell, v);
    });
}

std::vector<Quad> affinity_boxes(const WordAnnotation& word) {
    std::vector<Quad> out;
    if (word.chars.size() < 2) return out;
    auto centroids = [](const Quad& q) {
        const Pt c{(q[0].x + q[1].x + q[2].x + q[3].x) * 0.25,
                   (q[0].y + q[1].y + q[2].y + q[3].y) * 0.25};
        const Pt top{(q[0].x + q[1].x + c.x) / 3.0, (q[0].y + q[1].y + c.y) / 3.0};
        const Pt bot{(q[2].x + q[3].x + c.x) / 3.0, (q[2].y + q[3].y + c.y) / 3.0};
        return std::pair<Pt, Pt>(top, bot);
    };
    for (std::size_t i = 0; i + 1 < word.chars.size(); ++i) {
        auto [t0, b0] = centroids(word.chars[i].quad);
        auto [t1, b1] = centroids(word.chars[i + 1].quad);
        out.push_back({t0, t1, b1, b0});
    }
    return out;
}

GroundTruthMaps render_ground_truth(const std::vector<WordAnnotation>& annotations, int h, int w,
                                    double theta_s, double sigma_frac) {
    if (h % 32 != 0 || w % 32 != 0)
        throw ShapeError("ground truth extents must be divisible by 32, got " + std::to_string(h) +
                         "x" + std::to_string(w));
    const int h2 = h / 2, w2 = w / 2;
    GroundTruthMaps maps;
    maps.region = Tensor::zeros({h2, w2});
    maps.affinity = Tensor::zeros({h2, w2});
    maps.script = Tensor::zeros({kScriptClasses, h2, w2});

    std::vector<double> best_score(static_cast<std::size_t>(h2) * w2, 0.0);
    std::vector<int> best_word(static_cast<std::size_t>(h2) * w2, -1);
    WarpStats stats;

    for (std::size_t wi = 0; wi < annotations.size(); ++wi) {
        const WordAnnotation& word = annotations[wi];
        if (!quad_inside(scale_quad(word.quad, 0.5), w2, h2)) maps.clipped_words++;
        auto track = [&](Tensor& target, int x, int y, double v) {
            double& cell = target.at2(y, x);
            cell = std::max(cell, v);
            double& bs = best_score[static_cast<std::size_t>(y) * w2 + x];
            if (v > bs) {
                bs = v;
                best_word[static_cast<std::size_t>(y) * w2 + x] = static_cast<int>(wi);
            }
        };
        for (const CharBox& cb : word.chars) {
            for_each_warped_value(scale_quad(cb.quad, 0.5), sigma_frac, w2, h2, &stats,
                                  [&](int x, int y, double v) { track(maps.region, x, y, v); });
        }
        for (const Quad& aq : affinity_boxes(word)) {
            for_each_warped_value(scale_quad(aq, 0.5), sigma_frac, w2, h2, &stats,
                                  [&](int x, int y, double v) { track(maps.affinity, x, y, v); });
        }
    }
    maps.degenerate_quads = stats.degenerate;

    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w2 + x;
            int cls = kNoneClass;
            if (best_word[i] >= 0 && best_score[i] > theta_s)
                cls = static_cast<int>(annotations[static_cast<std::size_t>(best_word[i])].script);
            maps.script.data[(static_cast<std::size_t>(cls) * h2 + y) * w2 + x] = 1.0;
        }
    return maps;
}

namespace {

json quad_to_json(const Quad& q) {
    json arr = json::array();
    for (const Pt& p : q) arr.push_back(json::array({p.x, p.y}));
    return arr;
}

Quad quad_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw DataError("quad must be 4 points");
    Quad q{};
    for (int i = 0; i < 4; ++i) {
        const json& p = j[static_cast<std::size_t>(i)];
        if (!p.is_array() || p.size() != 2) throw DataError("quad point must be [x,y]");
        q[static_cast<std::size_t>(i)] = {p[0].get<double>(), p[1].get<double>()};
    }
    return q;
}

}  // namespace

std::vector<WordAnnotation> load_annotations(const std::string& path, std::string* image_path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open annotations: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("bad annotation JSON in " + path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("words") || !j["words"].is_array())
        throw DataError("annotation file missing words array: " + path);
    if (image_path) *image_path = j.value("image", std::string());
    std::vector<WordAnnotation> out;
    for (const json& wj : j["words"]) {
        WordAnnotation w;
        if (!wj.contains("quad") || !wj.contains("script"))
            throw DataError("word entry missing quad or script: " + path);
        w.quad = quad_from_json(wj["quad"]);
        w.script = script_from_string(wj["script"].get<std::string>());
        if (wj.contains("chars"))
            for (const json& cj : wj["chars"]) w.chars.push_back({quad_from_json(cj)});
        w.text = wj.value("text", std::string());
        out.push_back(std::move(w));
    }
    return out;
}

void save_annotations(const std::string& path, const std::string& image,
                      const std::vector<WordAnnotation>& words) {
    json j;
    j["image"] = image;
    json arr = json::array();
    for (const WordAnnotation& w : words) {
        json wj;
        wj["quad"] = quad_to_json(w.quad);
        wj["script"] = to_string(w.script);
        json chars = json::array();
        for (const CharBox& c : w.chars) chars.push_back(quad_to_json(c.quad));
        wj["chars"] = chars;
        wj["text"] = w.text;
        arr.push_back(wj);
    }
    j["words"] = arr;
    std::ofstream os(path);
    if (!os) throw DataError("cannot write annotations: " + path);
    os << j.dump(1) << "\n";
    if (!os) throw DataError("annotation write failed: " + path);
}

}  // namespace telcos::gt
