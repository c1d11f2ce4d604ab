#include "telcos/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "telcos/errors.hpp"
#include "telcos/utils.hpp"

namespace telcos::synth {

namespace fs = std::filesystem;
using geom::Pt;
using geom::Quad;
using json = nlohmann::json;

Image Image::create(int w, int h, std::array<std::uint8_t, 3> fill) {
    Image img;
    img.w = w;
    img.h = h;
    img.px.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < img.px.size(); i += 3) {
        img.px[i] = fill[0];
        img.px[i + 1] = fill[1];
        img.px[i + 2] = fill[2];
    }
    return img;
}

namespace {

int ppm_token(std::istream& is) {
    // Skips whitespace and '#' comments, reads one non-negative integer.
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        } else {
            c = is.get();
        }
    }
    if (c == EOF) throw DataError("truncated PPM header");
    int v = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw DataError("bad PPM header token");
    return v;
}

}  // namespace

Image load_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open image: " + path);
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (m0 != 'P' || m1 != '6') throw DataError("not a P6 PPM: " + path);
    const int w = ppm_token(is);
    const int h = ppm_token(is);
    const int maxval = ppm_token(is);
    if (maxval != 255) throw DataError("PPM maxval must be 255: " + path);
    if (w <= 0 || h <= 0 || w > 1 << 15 || h > 1 << 15)
        throw DataError("unreasonable PPM extents in " + path);
    Image img = Image::create(w, h);
    is.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
    if (!is) throw DataError("truncated PPM payload: " + path);
    return img;
}

void save_ppm(const Image& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write image: " + path);
    os << "P6\n" << img.w << " " << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.px.data()),
             static_cast<std::streamsize>(img.px.size()));
    if (!os) throw DataError("image write failed: " + path);
}

Image resize_bilinear(const Image& img, int new_w, int new_h) {
    Image out = Image::create(new_w, new_h);
    const double sx = static_cast<double>(img.w) / new_w;
    const double sy = static_cast<double>(img.h) / new_h;
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const double fy = (y + 0.5) * sy - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            int y0 = static_cast<int>(std::floor(fy));
            const double tx = fx - x0, ty = fy - y0;
            const int x1 = std::clamp(x0 + 1, 0, img.w - 1);
            const int y1 = std::clamp(y0 + 1, 0, img.h - 1);
            x0 = std::clamp(x0, 0, img.w - 1);
            y0 = std::clamp(y0, 0, img.h - 1);
            for (int c = 0; c < 3; ++c) {
                const double v = (1 - ty) * ((1 - tx) * img.at(x0, y0, c) + tx * img.at(x1, y0, c)) +
                                 ty * ((1 - tx) * img.at(x0, y1, c) + tx * img.at(x1, y1, c));
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    return out;
}

Image median_blur_channelwise(const Image& img, int k) {
    if (k < 3 || k % 2 == 0)
        throw DataError("median blur kernel must be odd and >= 3, got " + std::to_string(k));
    Image out = Image::create(img.w, img.h);
    const int r = k / 2;
    const int half = (k * k) / 2;
    int hist[256];
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                std::fill(hist, hist + 256, 0);
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = std::clamp(x + dx, 0, img.w - 1);
                        const int sy = std::clamp(y + dy, 0, img.h - 1);
                        hist[img.at(sx, sy, c)]++;
                    }
                int acc = 0, med = 0;
                for (int v = 0; v < 256; ++v) {
                    acc += hist[v];
                    if (acc > half) {
                        med = v;
                        break;
                    }
                }
                out.at(x, y, c) = static_cast<std::uint8_t>(med);
            }
    return out;
}

int EdgeMap::count_in(int x, int y, int cw, int ch) const {
    int n = 0;
    for (int yy = y; yy < y + ch; ++yy)
        for (int xx = x; xx < x + cw; ++xx)
            n += on[static_cast<std::size_t>(yy) * w + xx];
    return n;
}

EdgeMap edge_map(const Image& img, double lo, double hi) {
    if (!(lo >= 0) || !(lo < hi)) throw DataError("edge thresholds need 0 <= lo < hi");
    const int w = img.w, h = img.h;
    std::vector<double> gray(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            gray[static_cast<std::size_t>(y) * w + x] =
                (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
    auto g = [&](int x, int y) {
        return gray[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
    };
    std::vector<double> mag(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = (g(x + 1, y - 1) + 2 * g(x + 1, y) + g(x + 1, y + 1)) -
                              (g(x - 1, y - 1) + 2 * g(x - 1, y) + g(x - 1, y + 1));
            const double gy = (g(x - 1, y + 1) + 2 * g(x, y + 1) + g(x + 1, y + 1)) -
                              (g(x - 1, y - 1) + 2 * g(x, y - 1) + g(x + 1, y - 1));
            mag[static_cast<std::size_t>(y) * w + x] = std::hypot(gx, gy);
        }
    EdgeMap em;
    em.w = w;
    em.h = h;
    em.on.assign(static_cast<std::size_t>(w) * h, 0);
    // Hysteresis: strong seeds flood into weak 8-neighbours.
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mag[static_cast<std::size_t>(y) * w + x] >= hi) {
                em.on[static_cast<std::size_t>(y) * w + x] = 1;
                queue.emplace_back(x, y);
            }
    while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::size_t i = static_cast<std::size_t>(ny) * w + nx;
                if (!em.on[i] && mag[i] >= lo) {
                    em.on[i] = 1;
                    queue.emplace_back(nx, ny);
                }
            }
    }
    return em;
}

const Patch* PatchGrid::find(double px, double py) const {
    for (const Patch& p : patches)
        if (px >= p.x && px < p.x + p.w && py >= p.y && py < p.y + p.h) return &p;
    return nullptr;
}

PatchGrid contour_density_patches(const EdgeMap& edges, int min_patch, double split_threshold) {
    if (min_patch < 16) throw DataError("min_patch must be >= 16");
    const int w = edges.w, h = edges.h;
    // Summed-area table over edge pixels.
    std::vector<std::int64_t> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            sat[static_cast<std::size_t>(y + 1) * (w + 1) + (x + 1)] =
                sat[static_cast<std::size_t>(y) * (w + 1) + (x + 1)] +
                sat[static_cast<std::size_t>(y + 1) * (w + 1) + x] -
                sat[static_cast<std::size_t>(y) * (w + 1) + x] +
                edges.on[static_cast<std::size_t>(y) * w + x];
    auto count = [&](int x, int y, int cw, int ch) {
        return sat[static_cast<std::size_t>(y + ch) * (w + 1) + (x + cw)] -
               sat[static_cast<std::size_t>(y) * (w + 1) + (x + cw)] -
               sat[static_cast<std::size_t>(y + ch) * (w + 1) + x] +
               sat[static_cast<std::size_t>(y) * (w + 1) + x];
    };
    PatchGrid grid;
    std::deque<Patch> work;
    work.push_back({0, 0, w, h, 0.0});
    while (!work.empty()) {
        Patch p = work.front();
        work.pop_front();
        p.density = static_cast<double>(count(p.x, p.y, p.w, p.h)) /
                    (static_cast<double>(p.w) * p.h);
        if (p.density > split_threshold && std::min(p.w, p.h) >= 2 * min_patch) {
            const int w0 = p.w / 2, h0 = p.h / 2;
            work.push_back({p.x, p.y, w0, h0, 0});
            work.push_back({p.x + w0, p.y, p.w - w0, h0, 0});
            work.push_back({p.x, p.y + h0, w0, p.h - h0, 0});
            work.push_back({p.x + w0, p.y + h0, p.w - w0, p.h - h0, 0});
        } else {
            grid.patches.push_back(p);
        }
    }
    return grid;
}

namespace {

struct Affine {
    // x' = a*x + b*y + tx ; y' = c*x + d*y + ty
    double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;
    Pt apply(Pt p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
};

struct CharLayout {
    Pt cell_origin;  // layout coords
    int glyph = 0;
    double dy = 0.0;  // sine vertical shift, layout coords
};

struct WordLayout {
    std::vector<CharLayout> chars;
    Pt origin;       // word rect origin in layout coords
    double w = 0, h = 0;
    std::string text;
};

geom::Homography affine_h(const Affine& t) {
    geom::Homography h;
    h.m = {t.a, t.b, t.tx, t.c, t.d, t.ty, 0, 0, 1};
    return h;
}

}  // namespace

PlaceResult place_text(Image& img, const PatchGrid& grid, const PlacementSpec& spec) {
    PlaceResult result;
    const GlyphSet& gs = glyph_set(spec.script);
    const int s = std::max(1, spec.glyph_scale);
    const double cw = static_cast<double>(gs.gw * s);
    const double ch = static_cast<double>(gs.gh * s);
    const double advance = static_cast<double>((gs.gw + 1) * s);

    std::mt19937_64 rng(spec.rng_seed);
    auto rint = [&](int lo, int hi) {
        return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
    };

    // Lay out words in layout space.
    std::vector<WordLayout> words;
    int lines = spec.level == Level::para ? 2 : 1;
    int words_per_line = spec.level == Level::word ? 1 : 2;
    const double line_gap = ch * 0.4;
    double ly = 0;
    for (int li = 0; li < lines; ++li) {
        double lx = 0;
        for (int wi = 0; wi < words_per_line; ++wi) {
            WordLayout wl;
            wl.origin = {lx, ly};
            const int len = std::max(1, spec.length + (spec.level == Level::word ? 0 : rint(-1, 1)));
            for (int ci = 0; ci < len; ++ci) {
                CharLayout cl;
                cl.cell_origin = {lx + ci * advance, ly};
                cl.glyph = rint(0, gs.size() - 1);
                wl.text.push_back(static_cast<char>('A' + cl.glyph));
                wl.chars.push_back(cl);
            }
            wl.w = (len - 1) * advance + cw;
            wl.h = ch;
            words.push_back(std::move(wl));
            lx += len * advance + advance;  // word gap = one advance
        }
        ly += ch + line_gap;
    }

    // Shape transform about the layout center.
    double lw = 0, lh = 0;
    for (const WordLayout& wl : words) {
        lw = std::max(lw, wl.origin.x + wl.w);
        lh = std::max(lh, wl.origin.y + wl.h);
    }
    const Pt center{lw / 2, lh / 2};
    geom::Homography shape;  // identity by default
    bool use_sine = spec.transform == TransformKind::sine;
    double sine_amp = std::min(spec.sine_amp, 0.3 * ch);
    switch (spec.transform) {
        case TransformKind::rotate: {
            const double a = spec.angle_deg * M_PI / 180.0;
            Affine t;
            t.a = std::cos(a);
            t.b = -std::sin(a);
            t.c = std::sin(a);
            t.d = std::cos(a);
            t.tx = center.x - t.a * center.x - t.b * center.y;
            t.ty = center.y - t.c * center.x - t.d * center.y;
            shape = affine_h(t);
            break;
        }
        case TransformKind::affine: {
            Affine t;
            t.a = spec.scale_x;
            t.b = spec.shear;
            t.c = 0;
            t.d = spec.scale_y;
            t.tx = center.x - t.a * center.x - t.b * center.y;
            t.ty = center.y - t.d * center.y;
            shape = affine_h(t);
            break;
        }
        case TransformKind::perspective: {
            const double p = std::clamp(spec.persp, 0.0, 0.4);
            Quad src{Pt{0, 0}, Pt{lw, 0}, Pt{lw, lh}, Pt{0, lh}};
            Quad dst{Pt{lw * p * 0.5, 0}, Pt{lw * (1 - p * 0.5), 0}, Pt{lw, lh}, Pt{0, lh}};
            shape = geom::quad_to_quad(src, dst);
            break;
        }
        default: break;
    }
    if (use_sine) {
        for (WordLayout& wl : words)
            for (CharLayout& cl : wl.chars) {
                const double ax = cl.cell_origin.x + cw / 2;
                cl.dy = sine_amp * std::sin(2.0 * M_PI * ax / std::max(1.0, spec.sine_wavelength));
            }
    }

    // Transformed extents at the origin.
    auto char_quad_at = [&](const CharLayout& cl, double tx, double ty) {
        Quad cell{Pt{cl.cell_origin.x, cl.cell_origin.y},
                  Pt{cl.cell_origin.x + cw, cl.cell_origin.y},
                  Pt{cl.cell_origin.x + cw, cl.cell_origin.y + ch},
                  Pt{cl.cell_origin.x, cl.cell_origin.y + ch}};
        Quad out{};
        for (int i = 0; i < 4; ++i) {
            Pt p = shape.apply(cell[static_cast<std::size_t>(i)]);
            out[static_cast<std::size_t>(i)] = {p.x + tx, p.y + cl.dy + ty};
        }
        return out;
    };
    double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
    for (const WordLayout& wl : words)
        for (const CharLayout& cl : wl.chars) {
            Quad q = char_quad_at(cl, 0, 0);
            for (const Pt& p : q) {
                bx0 = std::min(bx0, p.x);
                by0 = std::min(by0, p.y);
                bx1 = std::max(bx1, p.x);
                by1 = std::max(by1, p.y);
            }
        }
    const double bw = bx1 - bx0, bh = by1 - by0;

    // Candidate patches: low density and large enough.
    std::vector<const Patch*> candidates;
    for (const Patch& p : grid.patches)
        if (p.density < spec.place_threshold && p.w >= bw + 2 && p.h >= bh + 2)
            candidates.push_back(&p);
    if (candidates.empty()) {
        result.skip_reason = "no low-density patch fits the text";
        return result;
    }

    auto overlaps_blocked = [&](double x0, double y0, double x1, double y1) {
        if (!spec.blocked) return false;
        for (const Quad& q : *spec.blocked) {
            Quad bb = geom::bounding_box(q);
            if (x0 < bb[2].x + 2 && x1 > bb[0].x - 2 && y0 < bb[2].y + 2 && y1 > bb[0].y - 2)
                return true;
        }
        return false;
    };

    double tx = 0, ty = 0;
    bool found = false;
    for (int attempt = 0; attempt < 16 && !found; ++attempt) {
        const Patch* p = candidates[rng() % candidates.size()];
        const int fx = static_cast<int>(p->w - bw - 1);
        const int fy = static_cast<int>(p->h - bh - 1);
        const double ox = p->x + 1 + (fx > 0 ? static_cast<double>(rng() % (fx + 1)) : 0.0);
        const double oy = p->y + 1 + (fy > 0 ? static_cast<double>(rng() % (fy + 1)) : 0.0);
        if (!overlaps_blocked(ox, oy, ox + bw, oy + bh)) {
            tx = ox - bx0;
            ty = oy - by0;
            found = true;
        }
    }
    if (!found) {
        result.skip_reason = "all candidate positions overlap existing text";
        return result;
    }

    // Render and build annotations.
    geom::Homography shape_inv = shape.inverse();
    for (const WordLayout& wl : words) {
        gt::WordAnnotation ann;
        ann.script = script_label(spec.script);
        ann.text = wl.text;
        double wx0 = 1e300, wy0 = 1e300, wx1 = -1e300, wy1 = -1e300;
        for (const CharLayout& cl : wl.chars) {
            Quad q = char_quad_at(cl, tx, ty);
            ann.chars.push_back({q});
            for (const Pt& p : q) {
                wx0 = std::min(wx0, p.x);
                wy0 = std::min(wy0, p.y);
                wx1 = std::max(wx1, p.x);
                wy1 = std::max(wy1, p.y);
            }
            // Rasterize: inverse-map target pixels into the glyph cell.
            const int px0 = std::max(0, static_cast<int>(std::floor(std::min({q[0].x, q[1].x, q[2].x, q[3].x}))));
            const int px1 = std::min(img.w - 1, static_cast<int>(std::ceil(std::max({q[0].x, q[1].x, q[2].x, q[3].x}))));
            const int py0 = std::max(0, static_cast<int>(std::floor(std::min({q[0].y, q[1].y, q[2].y, q[3].y}))));
            const int py1 = std::min(img.h - 1, static_cast<int>(std::ceil(std::max({q[0].y, q[1].y, q[2].y, q[3].y}))));
            static const double sub[2] = {-0.25, 0.25};
            for (int y = py0; y <= py1; ++y)
                for (int x = px0; x <= px1; ++x) {
                    int onCount = 0;
                    for (double sy : sub)
                        for (double sx : sub) {
                            Pt lp = shape_inv.apply(
                                {x + 0.5 + sx - tx, y + 0.5 + sy - cl.dy - ty});
                            const double u = lp.x - cl.cell_origin.x;
                            const double v = lp.y - cl.cell_origin.y;
                            if (u < 0 || v < 0 || u >= cw || v >= ch) continue;
                            if (gs.on(cl.glyph, static_cast<int>(u / s), static_cast<int>(v / s)))
                                onCount++;
                        }
                    if (!onCount) continue;
                    const double alpha = spec.opacity * onCount / 4.0;
                    for (int c = 0; c < 3; ++c) {
                        const double v = (1 - alpha) * img.at(x, y, c) + alpha * spec.color[static_cast<std::size_t>(c)];
                        img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
                    }
                }
        }
        if (use_sine || spec.transform == TransformKind::perspective) {
            ann.quad = {Pt{wx0, wy0}, Pt{wx1, wy0}, Pt{wx1, wy1}, Pt{wx0, wy1}};
        } else {
            Quad rect{Pt{wl.origin.x, wl.origin.y}, Pt{wl.origin.x + wl.w, wl.origin.y},
                      Pt{wl.origin.x + wl.w, wl.origin.y + wl.h}, Pt{wl.origin.x, wl.origin.y + wl.h}};
            for (int i = 0; i < 4; ++i) {
                Pt p = shape.apply(rect[static_cast<std::size_t>(i)]);
                ann.quad[static_cast<std::size_t>(i)] = {p.x + tx, p.y + ty};
            }
        }
        result.words.push_back(std::move(ann));
    }

    // Optional local smoothing or sharpening over the placed region.
    if (spec.smooth != 0) {
        const int rx0 = std::max(1, static_cast<int>(bx0 + tx) - 1);
        const int ry0 = std::max(1, static_cast<int>(by0 + ty) - 1);
        const int rx1 = std::min(img.w - 2, static_cast<int>(bx1 + tx) + 1);
        const int ry1 = std::min(img.h - 2, static_cast<int>(by1 + ty) + 1);
        if (rx1 > rx0 && ry1 > ry0) {
            Image src = img;
            for (int y = ry0; y <= ry1; ++y)
                for (int x = rx0; x <= rx1; ++x)
                    for (int c = 0; c < 3; ++c) {
                        double box = 0;
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) box += src.at(x + dx, y + dy, c);
                        box /= 9.0;
                        double v = spec.smooth == 1 ? box : 2.0 * src.at(x, y, c) - box;
                        img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
                    }
        }
    }

    result.placed = true;
    return result;
}

namespace {

double region_luma(const Image& img, int x0, int y0, int x1, int y1) {
    double acc = 0;
    int n = 0;
    for (int y = std::max(0, y0); y <= std::min(img.h - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(img.w - 1, x1); ++x) {
            acc += (img.at(x, y, 0) + img.at(x, y, 1) + img.at(x, y, 2)) / 3.0;
            n++;
        }
    return n ? acc / n : 128.0;
}

}  // namespace

Manifest generate_dataset(const std::vector<std::string>& backgrounds, const GenConfig& cfg,
                          const std::string& out_dir, int threads) {
    if (backgrounds.empty()) throw DataError("generate_dataset needs at least one background");
    fs::create_directories(out_dir);

    Manifest manifest;
    std::vector<Image> loaded;
    for (const std::string& b : backgrounds) {
        try {
            loaded.push_back(load_ppm(b));
        } catch (const DataError&) {
            manifest.skipped_backgrounds++;
        }
    }
    if (loaded.empty() && cfg.count > 0)
        throw DataError("no readable background images");

    manifest.pairs.resize(static_cast<std::size_t>(cfg.count));
    std::atomic<int> skipped_placements{0};

    parallel_for(cfg.count, threads, [&](int i) {
        std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        auto rint = [&](int lo, int hi) {
            return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
        };
        auto runi = [&](double lo, double hi) {
            return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
        };
        Image img = loaded[rng() % loaded.size()];
        Image blurred = median_blur_channelwise(img, cfg.blur_k);
        EdgeMap edges = edge_map(blurred, cfg.canny_lo, cfg.canny_hi);
        PatchGrid grid = contour_density_patches(edges, cfg.min_patch, cfg.split_threshold);

        std::vector<gt::WordAnnotation> all_words;
        std::vector<Quad> blocked;
        const int want = rint(cfg.words_min, cfg.words_max);
        for (int wi = 0; wi < want; ++wi) {
            PlacementSpec spec;
            const double lr = runi(0, 1);
            spec.level = Level::word;
            if (img.w >= 192 && lr > 0.75) spec.level = Level::line;
            if (img.w >= 384 && lr > 0.92) spec.level = Level::para;
            spec.script = rint(0, glyph_set_count() - 1);
            spec.length = rint(cfg.word_len_min, cfg.word_len_max);
            spec.glyph_scale = rint(cfg.glyph_scale_min, cfg.glyph_scale_max);
            spec.place_threshold = cfg.place_threshold;
            spec.rng_seed = mix_seed(rng(), static_cast<std::uint64_t>(wi));
            if (cfg.allow_transforms) {
                const double t = runi(0, 1);
                if (t > 0.9) {
                    spec.transform = TransformKind::perspective;
                    spec.persp = runi(0.05, 0.2);
                } else if (t > 0.8) {
                    spec.transform = TransformKind::sine;
                    spec.sine_amp = runi(1.0, 3.0);
                    spec.sine_wavelength = runi(40, 90);
                } else if (t > 0.7) {
                    spec.transform = TransformKind::affine;
                    spec.shear = runi(-0.2, 0.2);
                    spec.scale_x = runi(0.9, 1.15);
                    spec.scale_y = runi(0.9, 1.15);
                } else if (t > 0.5) {
                    spec.transform = TransformKind::rotate;
                    spec.angle_deg = runi(-10, 10);
                }
            }
            const double sm = runi(0, 1);
            spec.smooth = sm > 0.95 ? 2 : (sm > 0.8 ? 1 : 0);
            spec.opacity = runi(0.88, 1.0);
            // Contrast against the whole image; per-patch luma is refined below.
            const double luma = region_luma(img, 0, 0, img.w - 1, img.h - 1);
            const int base = luma > 127 ? rint(0, 60) : rint(195, 255);
            spec.color = {static_cast<std::uint8_t>(std::clamp(base + rint(-15, 15), 0, 255)),
                          static_cast<std::uint8_t>(std::clamp(base + rint(-15, 15), 0, 255)),
                          static_cast<std::uint8_t>(std::clamp(base + rint(-15, 15), 0, 255))};
            spec.blocked = &blocked;
            PlaceResult pr = place_text(img, grid, spec);
            if (!pr.placed) {
                skipped_placements.fetch_add(1);
                continue;
            }
            for (gt::WordAnnotation& w : pr.words) {
                blocked.push_back(w.quad);
                all_words.push_back(std::move(w));
            }
        }

        char img_name[32], ann_name[32];
        std::snprintf(img_name, sizeof img_name, "img_%05d.ppm", i);
        std::snprintf(ann_name, sizeof ann_name, "ann_%05d.json", i);
        save_ppm(img, (fs::path(out_dir) / img_name).string());
        gt::save_annotations((fs::path(out_dir) / ann_name).string(), img_name, all_words);
        manifest.pairs[static_cast<std::size_t>(i)] = {img_name, ann_name};
    });

    manifest.skipped_placements = skipped_placements.load();
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

void save_manifest(const Manifest& m, const std::string& path) {
    json j;
    json pairs = json::array();
    for (const auto& [img, ann] : m.pairs) pairs.push_back({{"image", img}, {"annotation", ann}});
    j["pairs"] = pairs;
    j["skipped_backgrounds"] = m.skipped_backgrounds;
    j["skipped_placements"] = m.skipped_placements;
    std::ofstream os(path);
    if (!os) throw DataError("cannot write manifest: " + path);
    os << j.dump(1) << "\n";
}

Manifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("bad manifest JSON: " + std::string(e.what()));
    }
    Manifest m;
    for (const json& p : j.at("pairs"))
        m.pairs.emplace_back(p.at("image").get<std::string>(), p.at("annotation").get<std::string>());
    m.skipped_backgrounds = j.value("skipped_backgrounds", 0);
    m.skipped_placements = j.value("skipped_placements", 0);
    return m;
}

}  // namespace telcos::synth
