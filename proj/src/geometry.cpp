#include "telcos/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "telcos/errors.hpp"

namespace telcos::geom {

double cross(Pt o, Pt a, Pt b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double polygon_area(const std::vector<Pt>& poly) {
    if (poly.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Pt& a = poly[i];
        const Pt& b = poly[(i + 1) % poly.size()];
        s += a.x * b.y - a.y * b.x;
    }
    return std::fabs(s) * 0.5;
}

double quad_area(const Quad& q) {
    return polygon_area(std::vector<Pt>(q.begin(), q.end()));
}

bool point_in_polygon(Pt p, const std::vector<Pt>& poly) {
    // Ray casting; boundary points count as inside.
    bool in = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Pt& a = poly[i];
        const Pt& b = poly[j];
        const double c = cross(a, b, p);
        const double minx = std::min(a.x, b.x), maxx = std::max(a.x, b.x);
        const double miny = std::min(a.y, b.y), maxy = std::max(a.y, b.y);
        if (std::fabs(c) < 1e-12 && p.x >= minx - 1e-12 && p.x <= maxx + 1e-12 &&
            p.y >= miny - 1e-12 && p.y <= maxy + 1e-12)
            return true;
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xx = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (xx > p.x) in = !in;
        }
    }
    return in;
}

bool point_in_quad(Pt p, const Quad& q) {
    return point_in_polygon(p, std::vector<Pt>(q.begin(), q.end()));
}

std::vector<Pt> convex_hull(std::vector<Pt> pts) {
    std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Pt& a, const Pt& b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    const std::size_t n = pts.size();
    if (n < 3) return pts;
    std::vector<Pt> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

Quad min_area_rect(const std::vector<Pt>& pts) {
    if (pts.empty()) throw Error("min_area_rect on empty point set");
    std::vector<Pt> hull = convex_hull(pts);
    if (hull.size() == 1) {
        Pt p = hull[0];
        return {Pt{p.x, p.y}, Pt{p.x, p.y}, Pt{p.x, p.y}, Pt{p.x, p.y}};
    }
    if (hull.size() == 2) {
        return {hull[0], hull[1], hull[1], hull[0]};
    }
    double best_area = std::numeric_limits<double>::infinity();
    Quad best{};
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Pt a = hull[i];
        const Pt b = hull[(i + 1) % hull.size()];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        if (len < 1e-12) continue;
        const double ux = (b.x - a.x) / len, uy = (b.y - a.y) / len;  // edge direction
        const double vx = -uy, vy = ux;                                // normal
        double lo_u = 1e300, hi_u = -1e300, lo_v = 1e300, hi_v = -1e300;
        for (const Pt& p : hull) {
            const double pu = (p.x - a.x) * ux + (p.y - a.y) * uy;
            const double pv = (p.x - a.x) * vx + (p.y - a.y) * vy;
            lo_u = std::min(lo_u, pu);
            hi_u = std::max(hi_u, pu);
            lo_v = std::min(lo_v, pv);
            hi_v = std::max(hi_v, pv);
        }
        const double area = (hi_u - lo_u) * (hi_v - lo_v);
        if (area < best_area) {
            best_area = area;
            auto corner = [&](double u, double v) {
                return Pt{a.x + u * ux + v * vx, a.y + u * uy + v * vy};
            };
            best = {corner(lo_u, lo_v), corner(hi_u, lo_v), corner(hi_u, hi_v),
                    corner(lo_u, hi_v)};
        }
    }
    // Canonical start corner: smallest (y, then x), preserving cyclic order.
    int s = 0;
    for (int i = 1; i < 4; ++i)
        if (best[i].y < best[s].y - 1e-12 ||
            (std::fabs(best[i].y - best[s].y) <= 1e-12 && best[i].x < best[s].x))
            s = i;
    Quad out{};
    for (int i = 0; i < 4; ++i) out[i] = best[(s + i) % 4];
    return out;
}

namespace {

// Clips `poly` against the half-plane on the inner side of edge a->b,
// where `inner_sign` gives the sign of cross(a,b,p) for interior points.
std::vector<Pt> clip_halfplane(const std::vector<Pt>& poly, Pt a, Pt b, double inner_sign) {
    std::vector<Pt> out;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Pt& p = poly[i];
        const Pt& q = poly[(i + 1) % n];
        const double dp = inner_sign * cross(a, b, p);
        const double dq = inner_sign * cross(a, b, q);
        const bool pin = dp >= -1e-12, qin = dq >= -1e-12;
        if (pin) out.push_back(p);
        if (pin != qin) {
            const double t = dp / (dp - dq);
            out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
        }
    }
    return out;
}

}  // namespace

double convex_intersection_area(std::vector<Pt> subject, const std::vector<Pt>& clip) {
    if (subject.size() < 3 || clip.size() < 3) return 0.0;
    // Orientation of the clip polygon decides the inner side of its edges.
    double s = 0.0;
    for (std::size_t i = 0; i < clip.size(); ++i) {
        const Pt& a = clip[i];
        const Pt& b = clip[(i + 1) % clip.size()];
        s += a.x * b.y - a.y * b.x;
    }
    const double inner = s >= 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < clip.size() && subject.size() >= 3; ++i)
        subject = clip_halfplane(subject, clip[i], clip[(i + 1) % clip.size()], inner);
    return polygon_area(subject);
}

double quad_iou(const Quad& a, const Quad& b) {
    const double aa = quad_area(a), ab = quad_area(b);
    if (aa < 1e-12 || ab < 1e-12) return 0.0;
    const double inter = convex_intersection_area(std::vector<Pt>(a.begin(), a.end()),
                                                  std::vector<Pt>(b.begin(), b.end()));
    const double uni = aa + ab - inter;
    if (uni <= 0.0) return 0.0;
    double iou = inter / uni;
    return std::clamp(iou, 0.0, 1.0);
}

Pt Homography::apply(Pt p) const {
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

Homography Homography::inverse() const {
    const auto& a = m;
    std::array<double, 9> inv{};
    inv[0] = a[4] * a[8] - a[5] * a[7];
    inv[1] = a[2] * a[7] - a[1] * a[8];
    inv[2] = a[1] * a[5] - a[2] * a[4];
    inv[3] = a[5] * a[6] - a[3] * a[8];
    inv[4] = a[0] * a[8] - a[2] * a[6];
    inv[5] = a[2] * a[3] - a[0] * a[5];
    inv[6] = a[3] * a[7] - a[4] * a[6];
    inv[7] = a[1] * a[6] - a[0] * a[7];
    inv[8] = a[0] * a[4] - a[1] * a[3];
    const double det = a[0] * inv[0] + a[1] * inv[3] + a[2] * inv[6];
    if (std::fabs(det) < 1e-300) throw Error("homography is singular");
    Homography h;
    for (int i = 0; i < 9; ++i) h.m[static_cast<std::size_t>(i)] = inv[static_cast<std::size_t>(i)] / det;
    return h;
}

Homography quad_to_quad(const Quad& src, const Quad& dst) {
    // Standard 8x8 linear system for the projective coefficients, h22 = 1.
    double A[8][9] = {};
    for (int i = 0; i < 4; ++i) {
        const double x = src[static_cast<std::size_t>(i)].x, y = src[static_cast<std::size_t>(i)].y;
        const double u = dst[static_cast<std::size_t>(i)].x, v = dst[static_cast<std::size_t>(i)].y;
        double* r0 = A[2 * i];
        double* r1 = A[2 * i + 1];
        r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -u * x; r0[7] = -u * y; r0[8] = u;
        r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -v * x; r1[7] = -v * y; r1[8] = v;
    }
    // Gaussian elimination with partial pivoting.
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        if (std::fabs(A[piv][col]) < 1e-12) throw Error("degenerate quad in homography solve");
        if (piv != col)
            for (int c = 0; c < 9; ++c) std::swap(A[piv][c], A[col][c]);
        for (int r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = A[r][col] / A[col][col];
            if (f == 0.0) continue;
            for (int c = col; c < 9; ++c) A[r][c] -= f * A[col][c];
        }
    }
    Homography h;
    for (int i = 0; i < 8; ++i) h.m[static_cast<std::size_t>(i)] = A[i][8] / A[i][i];
    h.m[8] = 1.0;
    return h;
}

Quad unit_square() {
    return {Pt{-0.5, -0.5}, Pt{0.5, -0.5}, Pt{0.5, 0.5}, Pt{-0.5, 0.5}};
}

Quad bounding_box(const Quad& q) {
    double x0 = q[0].x, x1 = q[0].x, y0 = q[0].y, y1 = q[0].y;
    for (const Pt& p : q) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    return {Pt{x0, y0}, Pt{x1, y0}, Pt{x1, y1}, Pt{x0, y1}};
}

}  // namespace telcos::geom
