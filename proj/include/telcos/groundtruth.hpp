#pragma once

#include <string>
#include <vector>

#include "telcos/geometry.hpp"
#include "telcos/tensor.hpp"

namespace telcos::gt {

enum class Script { latin, cjk, other };

std::string to_string(Script s);
Script script_from_string(const std::string& s);

// Channel order of the script map: Latin, CJK, Other, None.
inline constexpr int kScriptClasses = 4;
inline constexpr int kNoneClass = 3;

struct CharBox {
    geom::Quad quad;  // clockwise, image pixels
};

struct WordAnnotation {
    geom::Quad quad;
    Script script = Script::latin;
    std::vector<CharBox> chars;  // ordered along reading direction
    std::string text;
};

struct GroundTruthMaps {
    Tensor region;    // (h/2, w/2) in [0,1]
    Tensor affinity;  // (h/2, w/2) in [0,1]
    Tensor script;    // (4, h/2, w/2) one-hot
    int clipped_words = 0;
    int degenerate_quads = 0;
};

// Canonical n x n Gaussian: peak 1 at the center, coordinates normalized so
// corner pixels sit at (+-0.5, +-0.5). n >= 3.
Tensor gaussian_patch(int n, double sigma_frac);

struct WarpStats {
    int degenerate = 0;
};

// Warps the unit-square Gaussian onto `quad` (canvas pixel coordinates,
// sampled at integer positions) and max-combines it into `canvas` (rank 2).
// Quads of area below one pixel are skipped and counted.
void warp_gaussian_to_quad(const geom::Quad& quad, double sigma_frac, Tensor& canvas,
                           WarpStats* stats = nullptr);

// CRAFT-style affinity quads: each character quad is split by its diagonals;
// the affinity box between adjacent characters connects the centroids of the
// top and bottom triangles of both quads. len(chars)-1 quads.
std::vector<geom::Quad> affinity_boxes(const WordAnnotation& word);

// Renders region/affinity/script maps at half resolution. A pixel gets the
// word's script group when that word's max(region, affinity) contribution
// exceeds theta_s there; overlaps go to the higher score; everything else
// is None.
GroundTruthMaps render_ground_truth(const std::vector<WordAnnotation>& annotations, int h, int w,
                                    double theta_s, double sigma_frac = 0.25);

// Annotation schema: {"image": path, "words": [{"quad": [[x,y]x4],
// "script": "latin|cjk|other", "chars": [[[x,y]x4], ...], "text": str}]}.
// Coordinates in full-resolution pixels.
std::vector<WordAnnotation> load_annotations(const std::string& path,
                                             std::string* image_path = nullptr);
void save_annotations(const std::string& path, const std::string& image,
                      const std::vector<WordAnnotation>& words);

}  // namespace telcos::gt
