#pragma once

#include <string>
#include <vector>

#include "telcos/geometry.hpp"
#include "telcos/groundtruth.hpp"
#include "telcos/synthgen.hpp"
#include "telcos/tensor.hpp"

namespace telcos::post {

struct DetectedWord {
    geom::Quad quad;  // full-resolution pixels
    gt::Script script = gt::Script::other;
    double confidence = 0.0;
    bool flagged = false;  // script vote had no non-None pixels
};

// Thresholded union mask (region >= t_r or affinity >= t_a), 8-connected
// components, min-area rectangle per component, coordinates scaled x2 back
// to input resolution. Confidence is the component's peak region score.
std::vector<geom::Quad> boxes_from_scores(const Tensor& region, const Tensor& affinity,
                                          double t_r, double t_a,
                                          std::vector<double>* confidences = nullptr);

// Majority vote of per-pixel arg-max classes inside the quad (map
// coordinates), ignoring None. No non-None pixels: (other, 0.0, flagged).
struct ScriptVote {
    gt::Script script = gt::Script::other;
    double confidence = 0.0;
    bool flagged = false;
};
ScriptVote assign_script(const Tensor& script_map, const geom::Quad& quad_map_coords);

struct Routing {
    std::vector<DetectedWord> latin, cjk, other;
};
Routing route_words(const std::vector<DetectedWord>& words);

void detections_to_json(const std::vector<DetectedWord>& words, const std::string& path);
std::vector<DetectedWord> detections_from_json(const std::string& path);

// Overlay quads onto an image: green Latin, blue CJK, red Other.
void draw_overlay(synth::Image& img, const std::vector<DetectedWord>& words);

}  // namespace telcos::post
