#include "telcos/synthgen.hpp"

#include "telcos/errors.hpp"

namespace telcos::synth {

bool GlyphSet::on(int glyph, int x, int y) const {
    if (glyph < 0 || glyph >= size()) return false;
    if (x < 0 || x >= gw || y < 0 || y >= gh) return false;
    return glyphs[static_cast<std::size_t>(glyph)][static_cast<std::size_t>(y)]
                 [static_cast<std::size_t>(x)] == '#';
}

namespace {

// "alpha": thin straight strokes, open shapes.
GlyphSet make_alpha() {
    GlyphSet s;
    s.name = "alpha";
    s.gw = 7;
    s.gh = 9;
    s.glyphs = {
        {"..###..",
         ".#...#.",
         "#.....#",
         "#.....#",
         "#######",
         "#.....#",
         "#.....#",
         "#.....#",
         "#.....#"},
        {"#######",
         "#......",
         "#......",
         "#......",
         "#####..",
         "#......",
         "#......",
         "#......",
         "#######"},
        {"#######",
         "#......",
         "#......",
         "#......",
         "#####..",
         "#......",
         "#......",
         "#......",
         "#......"},
        {"#.....#",
         "#.....#",
         "#.....#",
         "#.....#",
         "#######",
         "#.....#",
         "#.....#",
         "#.....#",
         "#.....#"},
        {"#....#.",
         "#...#..",
         "#..#...",
         "#.#....",
         "##.....",
         "#.#....",
         "#..#...",
         "#...#..",
         "#....#."},
        {"#......",
         "#......",
         "#......",
         "#......",
         "#......",
         "#......",
         "#......",
         "#......",
         "#######"},
        {"#.....#",
         "##....#",
         "#.#...#",
         "#.#...#",
         "#..#..#",
         "#...#.#",
         "#...#.#",
         "#....##",
         "#.....#"},
        {"#######",
         "...#...",
         "...#...",
         "...#...",
         "...#...",
         "...#...",
         "...#...",
         "...#...",
         "...#..."},
        {"#.....#",
         "#.....#",
         "#.....#",
         ".#...#.",
         ".#...#.",
         ".#...#.",
         "..#.#..",
         "..#.#..",
         "...#..."},
        {"#.....#",
         ".#...#.",
         "..#.#..",
         "...#...",
         "...#...",
         "...#...",
         "..#.#..",
         ".#...#.",
         "#.....#"},
        {"#.....#",
         ".#...#.",
         "..#.#..",
         "...#...",
         "...#...",
         "...#...",
         "...#...",
         "...#...",
         "...#..."},
        {"#######",
         ".....#.",
         "....#..",
         "....#..",
         "...#...",
         "..#....",
         "..#....",
         ".#.....",
         "#######"},
    };
    return s;
}

// "ring": thick strokes, closed round shapes.
GlyphSet make_ring() {
    GlyphSet s;
    s.name = "ring";
    s.gw = 7;
    s.gh = 9;
    s.glyphs = {
        {".#####.",
         "###.###",
         "##...##",
         "##...##",
         "##...##",
         "##...##",
         "##...##",
         "###.###",
         ".#####."},
        {".#####.",
         "##...##",
         "##...##",
         "##...##",
         "#######",
         "##...##",
         "##...##",
         "##...##",
         ".#####."},
        {"..###..",
         ".#####.",
         "###.###",
         "##...##",
         "##...##",
         "##...##",
         "###.###",
         ".#####.",
         "..###.."},
        {".#####.",
         "##...##",
         "##.....",
         "##.....",
         "##.###.",
         "##...##",
         "##...##",
         "##...##",
         ".#####."},
        {".#####.",
         "##...##",
         "#.###.#",
         "#.#.#.#",
         "#.#.#.#",
         "#.#.#.#",
         "#.###.#",
         "##...##",
         ".#####."},
        {".#####.",
         "##...##",
         "##...##",
         ".#####.",
         "##...##",
         "##...##",
         "##...##",
         "##...##",
         ".#####."},
        {"#######",
         "#######",
         "##...##",
         "##.#.##",
         "##.#.##",
         "##.#.##",
         "##...##",
         "#######",
         "#######"},
        {".#####.",
         "##...##",
         "##...##",
         "##..###",
         ".######",
         "....###",
         "##..###",
         "##...##",
         ".#####."},
        {"##...##",
         "##...##",
         "##...##",
         "##...##",
         "##...##",
         "##...##",
         "##...##",
         "###.###",
         ".#####."},
        {".#####.",
         "##...##",
         "##.....",
         "###....",
         ".#####.",
         "....###",
         ".....##",
         "##...##",
         ".#####."},
        {"######.",
         "##..###",
         "##...##",
         "##...##",
         "##...##",
         "##...##",
         "##...##",
         "##..###",
         "######."},
        {".#####.",
         "###.###",
         "##...##",
         "##...##",
         "##...##",
         "##.#.##",
         "###.###",
         ".######",
         "..###.#"},
    };
    return s;
}

}  // namespace

const GlyphSet& glyph_set(int id) {
    static const GlyphSet alpha = make_alpha();
    static const GlyphSet ring = make_ring();
    switch (id) {
        case 0: return alpha;
        case 1: return ring;
        default: throw Error("unknown glyph set id " + std::to_string(id));
    }
}

int glyph_set_count() { return 2; }

gt::Script script_label(int id) {
    return id == 0 ? gt::Script::latin : gt::Script::cjk;
}

}  // namespace telcos::synth
