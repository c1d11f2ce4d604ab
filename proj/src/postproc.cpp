#include "telcos/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "telcos/errors.hpp"

namespace telcos::post {

using geom::Pt;
using geom::Quad;
using json = nlohmann::json;

std::vector<Quad> boxes_from_scores(const Tensor& region, const Tensor& affinity, double t_r,
                                    double t_a, std::vector<double>* confidences) {
    if (region.rank() != 2 || affinity.rank() != 2 || !region.same_shape(affinity))
        throw ShapeError("boxes_from_scores needs two rank-2 maps of equal extents, got " +
                         region.shape_str() + " and " + affinity.shape_str());
    if (!(t_r > 0 && t_r < 1 && t_a > 0 && t_a < 1))
        throw Error("thresholds must lie in (0,1)");
    const int h = region.dim(0), w = region.dim(1);
    std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
    auto masked = [&](int x, int y) {
        return region.at2(y, x) >= t_r || affinity.at2(y, x) >= t_a;
    };
    std::vector<Quad> quads;
    if (confidences) confidences->clear();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (label[i] >= 0 || !masked(x, y)) continue;
            // BFS over the 8-connected component.
            const int comp = static_cast<int>(quads.size());
            std::deque<std::pair<int, int>> queue{{x, y}};
            label[i] = comp;
            std::vector<Pt> corners;
            double peak = 0.0;
            while (!queue.empty()) {
                auto [cx, cy] = queue.front();
                queue.pop_front();
                peak = std::max(peak, region.at2(cy, cx));
                // Pixel cell corners so the rectangle contains whole pixels.
                corners.push_back({static_cast<double>(cx), static_cast<double>(cy)});
                corners.push_back({static_cast<double>(cx + 1), static_cast<double>(cy)});
                corners.push_back({static_cast<double>(cx + 1), static_cast<double>(cy + 1)});
                corners.push_back({static_cast<double>(cx), static_cast<double>(cy + 1)});
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                        if (label[ni] < 0 && masked(nx, ny)) {
                            label[ni] = comp;
                            queue.emplace_back(nx, ny);
                        }
                    }
            }
            Quad q = geom::min_area_rect(corners);
            for (Pt& p : q) p = p * 2.0;  // back to input resolution
            quads.push_back(q);
            if (confidences) confidences->push_back(peak);
        }
    return quads;
}

ScriptVote assign_script(const Tensor& script_map, const Quad& quad) {
    if (script_map.rank() != 3 || script_map.dim(0) != gt::kScriptClasses)
        throw ShapeError("script map must be (4,h,w), got " + script_map.shape_str());
    if (geom::quad_area(quad) <= 0.0) throw Error("degenerate quad in assign_script");
    const int h = script_map.dim(1), w = script_map.dim(2);
    Quad bb = geom::bounding_box(quad);
    const int x0 = std::max(0, static_cast<int>(std::floor(bb[0].x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(bb[0].y)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(bb[2].x)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(bb[2].y)));
    int votes[gt::kScriptClasses] = {0};
    int total_non_none = 0;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            if (!geom::point_in_quad({x + 0.5, y + 0.5}, quad)) continue;
            int best = 0;
            double bv = script_map.data[(0 * static_cast<std::size_t>(h) + y) * w + x];
            for (int c = 1; c < gt::kScriptClasses; ++c) {
                const double v =
                    script_map.data[(static_cast<std::size_t>(c) * h + y) * w + x];
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            if (best != gt::kNoneClass) {
                votes[best]++;
                total_non_none++;
            }
        }
    ScriptVote out;
    if (total_non_none == 0) {
        out.script = gt::Script::other;
        out.confidence = 0.0;
        out.flagged = true;
        return out;
    }
    int best = 0;
    for (int c = 1; c < gt::kNoneClass; ++c)
        if (votes[c] > votes[best]) best = c;
    out.script = static_cast<gt::Script>(best);
    out.confidence = static_cast<double>(votes[best]) / total_non_none;
    return out;
}

Routing route_words(const std::vector<DetectedWord>& words) {
    Routing r;
    for (const DetectedWord& w : words) {
        switch (w.script) {
            case gt::Script::latin: r.latin.push_back(w); break;
            case gt::Script::cjk: r.cjk.push_back(w); break;
            case gt::Script::other: r.other.push_back(w); break;
        }
    }
    return r;
}

void detections_to_json(const std::vector<DetectedWord>& words, const std::string& path) {
    json arr = json::array();
    for (const DetectedWord& w : words) {
        json q = json::array();
        for (const Pt& p : w.quad) q.push_back(json::array({p.x, p.y}));
        json e;
        e["quad"] = q;
        e["script"] = gt::to_string(w.script);
        e["confidence"] = w.confidence;
        if (w.flagged) e["flagged"] = true;
        arr.push_back(e);
    }
    std::ofstream os(path);
    if (!os) throw DataError("cannot write detections: " + path);
    os << arr.dump(1) << "\n";
}

std::vector<DetectedWord> detections_from_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open detections: " + path);
    json arr;
    try {
        is >> arr;
    } catch (const json::exception& e) {
        throw DataError("bad detection JSON in " + path + ": " + e.what());
    }
    if (!arr.is_array()) throw DataError("detection JSON must be an array: " + path);
    std::vector<DetectedWord> out;
    for (const json& e : arr) {
        DetectedWord w;
        const json& q = e.at("quad");
        if (!q.is_array() || q.size() != 4) throw DataError("detection quad must be 4 points");
        for (int i = 0; i < 4; ++i)
            w.quad[static_cast<std::size_t>(i)] = {q[static_cast<std::size_t>(i)][0].get<double>(),
                                                   q[static_cast<std::size_t>(i)][1].get<double>()};
        w.script = gt::script_from_string(e.at("script").get<std::string>());
        w.confidence = e.value("confidence", 0.0);
        w.flagged = e.value("flagged", false);
        out.push_back(w);
    }
    return out;
}

namespace {

void draw_line(synth::Image& img, Pt a, Pt b, std::array<std::uint8_t, 3> color) {
    const double len = std::max(std::fabs(b.x - a.x), std::fabs(b.y - a.y));
    const int steps = std::max(1, static_cast<int>(std::ceil(len)));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const int x = static_cast<int>(std::lround(a.x + t * (b.x - a.x)));
        const int y = static_cast<int>(std::lround(a.y + t * (b.y - a.y)));
        if (x < 0 || y < 0 || x >= img.w || y >= img.h) continue;
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[static_cast<std::size_t>(c)];
    }
}

}  // namespace

void draw_overlay(synth::Image& img, const std::vector<DetectedWord>& words) {
    for (const DetectedWord& w : words) {
        std::array<std::uint8_t, 3> color{255, 0, 0};  // other: red
        if (w.script == gt::Script::latin) color = {0, 255, 0};
        if (w.script == gt::Script::cjk) color = {0, 0, 255};
        for (int i = 0; i < 4; ++i)
            draw_line(img, w.quad[static_cast<std::size_t>(i)],
                      w.quad[static_cast<std::size_t>((i + 1) % 4)], color);
    }
}

}  // namespace telcos::post
