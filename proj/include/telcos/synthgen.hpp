#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "telcos/geometry.hpp"
#include "telcos/groundtruth.hpp"

namespace telcos::synth {

struct Image {
    int w = 0, h = 0;
    std::vector<std::uint8_t> px;  // rgb interleaved, rows top-down

    static Image create(int w, int h, std::array<std::uint8_t, 3> fill = {0, 0, 0});
    std::uint8_t& at(int x, int y, int c) {
        return px[(static_cast<std::size_t>(y) * w + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return px[(static_cast<std::size_t>(y) * w + x) * 3 + c];
    }
};

// P6 binary PPM, maxval 255.
Image load_ppm(const std::string& path);
void save_ppm(const Image& img, const std::string& path);

Image resize_bilinear(const Image& img, int new_w, int new_h);

// k x k median per channel, edge replicated. k odd, >= 3.
Image median_blur_channelwise(const Image& img, int k);

struct EdgeMap {
    int w = 0, h = 0;
    std::vector<std::uint8_t> on;
    int count_in(int x, int y, int cw, int ch) const;
};

// Gradient-magnitude edges (3x3 derivative kernels on grayscale) with
// hysteresis: strong >= hi seeds, weak >= lo kept when 8-connected to strong.
EdgeMap edge_map(const Image& img, double lo, double hi);

struct Patch {
    int x = 0, y = 0, w = 0, h = 0;
    double density = 0.0;  // edge pixels per unit area
};

struct PatchGrid {
    std::vector<Patch> patches;
    const Patch* find(double px, double py) const;
};

// Quadtree split while density exceeds the threshold and extents allow
// halving down to min_patch. Leaves tile the image exactly.
PatchGrid contour_density_patches(const EdgeMap& edges, int min_patch,
                                  double split_threshold = 0.02);

// Bundled bitmap glyph atlases: two deliberately different styles, used as
// the two toy scripts.
struct GlyphSet {
    std::string name;
    int gw = 0, gh = 0;
    std::vector<std::vector<std::string>> glyphs;  // rows of '#'/'.'
    bool on(int glyph, int x, int y) const;
    int size() const { return static_cast<int>(glyphs.size()); }
};
const GlyphSet& glyph_set(int id);  // 0: "alpha", 1: "ring"
int glyph_set_count();
gt::Script script_label(int id);

enum class Level { word, line, para };
enum class TransformKind { none, rotate, affine, perspective, sine };

struct PlacementSpec {
    Level level = Level::word;
    int script = 0;
    int length = 4;
    TransformKind transform = TransformKind::none;
    double angle_deg = 0.0;
    double shear = 0.0, scale_x = 1.0, scale_y = 1.0;
    double persp = 0.0;           // keystone fraction, e.g. 0.1
    double sine_amp = 0.0;        // pixels; capped at 0.3 * glyph height
    double sine_wavelength = 64;  // pixels
    int glyph_scale = 2;
    std::array<std::uint8_t, 3> color{0, 0, 0};
    double opacity = 1.0;
    double place_threshold = 0.01;
    std::uint64_t rng_seed = 0;
    int smooth = 0;  // 0 none, 1 smoothen, 2 sharpen
    const std::vector<geom::Quad>* blocked = nullptr;
};

struct PlaceResult {
    bool placed = false;
    std::vector<gt::WordAnnotation> words;
    std::string skip_reason;
};

PlaceResult place_text(Image& img, const PatchGrid& grid, const PlacementSpec& spec);

struct GenConfig {
    int count = 0;
    std::uint64_t seed = 1;
    int blur_k = 3;
    double canny_lo = 40.0, canny_hi = 100.0;
    int min_patch = 16;
    double split_threshold = 0.02;
    double place_threshold = 0.01;
    int words_min = 1, words_max = 3;
    int word_len_min = 2, word_len_max = 5;
    int glyph_scale_min = 2, glyph_scale_max = 3;
    bool allow_transforms = true;
};

struct Manifest {
    std::vector<std::pair<std::string, std::string>> pairs;  // (image, annotation) paths
    int skipped_backgrounds = 0;
    int skipped_placements = 0;
};

Manifest generate_dataset(const std::vector<std::string>& backgrounds, const GenConfig& cfg,
                          const std::string& out_dir, int threads = 1);
void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

}  // namespace telcos::synth
