#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "telcos/groundtruth.hpp"
#include "telcos/postproc.hpp"

namespace telcos::eval {

// Intersection over union of two convex quads via polygon clipping.
double iou(const geom::Quad& a, const geom::Quad& b);

struct MatchPair {
    int det = -1, gt = -1;
    double iou = 0.0;
};

struct EvalReport {
    double precision = 0.0, recall = 0.0, hmean = 0.0;
    int num_dets = 0, num_gts = 0, true_positives = 0;
    std::vector<MatchPair> matches;
    // Per-class accuracy over matched detections; absent classes are
    // not-applicable rather than zero.
    std::map<std::string, std::optional<double>> script_accuracy;
};

enum class Matching { greedy, hungarian };

// One-to-one matching with a strict IoU > threshold rule for true positives.
// Greedy descending-IoU by default; Hungarian behind the flag.
EvalReport match_and_score(const std::vector<post::DetectedWord>& dets,
                           const std::vector<gt::WordAnnotation>& gts, double iou_thresh,
                           Matching matching = Matching::greedy);

// Associative accumulator for multi-image evaluation.
struct Accumulator {
    int tp = 0, num_dets = 0, num_gts = 0;
    std::map<std::string, std::pair<int, int>> script_counts;  // class -> (correct, total)
    void add(const EvalReport& r, const std::vector<post::DetectedWord>& dets,
             const std::vector<gt::WordAnnotation>& gts);
    EvalReport finalize() const;
};

void report_to_json(const EvalReport& r, const std::string& path);

}  // namespace telcos::eval
