#pragma once

#include <array>
#include <vector>

namespace telcos::geom {

struct Pt {
    double x = 0.0, y = 0.0;
};

using Quad = std::array<Pt, 4>;

inline Pt operator+(Pt a, Pt b) { return {a.x + b.x, a.y + b.y}; }
inline Pt operator-(Pt a, Pt b) { return {a.x - b.x, a.y - b.y}; }
inline Pt operator*(Pt a, double s) { return {a.x * s, a.y * s}; }

double cross(Pt o, Pt a, Pt b);

// Unsigned area of a simple polygon (shoelace).
double polygon_area(const std::vector<Pt>& poly);
double quad_area(const Quad& q);

bool point_in_polygon(Pt p, const std::vector<Pt>& poly);
bool point_in_quad(Pt p, const Quad& q);

// Andrew's monotone chain; returns hull in counter-clockwise order
// (mathematical convention; y grows downward in image space).
std::vector<Pt> convex_hull(std::vector<Pt> pts);

// Smallest-area rotated rectangle containing the points, via edge-aligned
// sweeps over the convex hull. Corners are ordered around the rectangle
// starting from the lexicographically smallest (y, then x).
Quad min_area_rect(const std::vector<Pt>& pts);

// Area of the intersection of two convex polygons (Sutherland-Hodgman).
double convex_intersection_area(std::vector<Pt> subject, const std::vector<Pt>& clip);

// Intersection-over-union of two convex quads. Degenerate quads give 0.
double quad_iou(const Quad& a, const Quad& b);

// 3x3 projective transform, row-major.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
    Pt apply(Pt p) const;
    Homography inverse() const;
};

// Maps the four source corners onto the four destination corners.
Homography quad_to_quad(const Quad& src, const Quad& dst);

// Corners of the centered unit square, order (tl, tr, br, bl):
// (-0.5,-0.5), (0.5,-0.5), (0.5,0.5), (-0.5,0.5).
Quad unit_square();

Quad bounding_box(const Quad& q);

}  // namespace telcos::geom
