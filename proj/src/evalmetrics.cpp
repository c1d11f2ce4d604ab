#include "telcos/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "telcos/errors.hpp"

namespace telcos::eval {

using json = nlohmann::json;

double iou(const geom::Quad& a, const geom::Quad& b) { return geom::quad_iou(a, b); }

namespace {

std::vector<MatchPair> greedy_match(const std::vector<std::vector<double>>& m, double thresh) {
    struct Cand {
        int d, g;
        double v;
    };
    std::vector<Cand> cands;
    for (std::size_t d = 0; d < m.size(); ++d)
        for (std::size_t g = 0; g < m[d].size(); ++g)
            if (m[d][g] > thresh) cands.push_back({static_cast<int>(d), static_cast<int>(g), m[d][g]});
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.v != b.v) return a.v > b.v;
        if (a.d != b.d) return a.d < b.d;
        return a.g < b.g;
    });
    std::vector<bool> dused(m.size(), false), gused(m.empty() ? 0 : m[0].size(), false);
    std::vector<MatchPair> out;
    for (const Cand& c : cands) {
        if (dused[static_cast<std::size_t>(c.d)] || gused[static_cast<std::size_t>(c.g)]) continue;
        dused[static_cast<std::size_t>(c.d)] = true;
        gused[static_cast<std::size_t>(c.g)] = true;
        out.push_back({c.d, c.g, c.v});
    }
    return out;
}

// Hungarian algorithm (Jonker-Volgenant style potentials) maximizing total
// IoU; pairs at or below the threshold are dropped afterwards.
std::vector<MatchPair> hungarian_match(const std::vector<std::vector<double>>& m, double thresh) {
    const int nd = static_cast<int>(m.size());
    const int ng = nd ? static_cast<int>(m[0].size()) : 0;
    const int n = std::max(nd, ng);
    if (n == 0) return {};
    const double INF = std::numeric_limits<double>::infinity();
    // Cost = -iou on a padded square matrix.
    auto cost = [&](int d, int g) {
        if (d >= nd || g >= ng) return 0.0;
        return -m[static_cast<std::size_t>(d)][static_cast<std::size_t>(g)];
    };
    std::vector<double> u(static_cast<std::size_t>(n) + 1), v(static_cast<std::size_t>(n) + 1);
    std::vector<int> p(static_cast<std::size_t>(n) + 1), way(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, INF);
        std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = INF;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<MatchPair> out;
    for (int j = 1; j <= n; ++j) {
        const int d = p[static_cast<std::size_t>(j)] - 1, g = j - 1;
        if (d < nd && g < ng && m[static_cast<std::size_t>(d)][static_cast<std::size_t>(g)] > thresh)
            out.push_back({d, g, m[static_cast<std::size_t>(d)][static_cast<std::size_t>(g)]});
    }
    std::sort(out.begin(), out.end(), [](const MatchPair& a, const MatchPair& b) {
        return a.iou > b.iou;
    });
    return out;
}

std::map<std::string, std::pair<int, int>> count_script_matches(
    const std::vector<MatchPair>& matches, const std::vector<post::DetectedWord>& dets,
    const std::vector<gt::WordAnnotation>& gts) {
    std::map<std::string, std::pair<int, int>> counts;
    for (const gt::WordAnnotation& g : gts) counts.emplace(gt::to_string(g.script), std::make_pair(0, 0));
    for (const MatchPair& mp : matches) {
        const std::string cls = gt::to_string(gts[static_cast<std::size_t>(mp.gt)].script);
        counts[cls].second++;
        if (dets[static_cast<std::size_t>(mp.det)].script ==
            gts[static_cast<std::size_t>(mp.gt)].script)
            counts[cls].first++;
    }
    return counts;
}

}  // namespace

EvalReport match_and_score(const std::vector<post::DetectedWord>& dets,
                           const std::vector<gt::WordAnnotation>& gts, double iou_thresh,
                           Matching matching) {
    if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) throw Error("iou threshold must be in (0,1)");
    std::vector<std::vector<double>> m(dets.size(), std::vector<double>(gts.size(), 0.0));
    for (std::size_t d = 0; d < dets.size(); ++d)
        for (std::size_t g = 0; g < gts.size(); ++g)
            m[d][g] = iou(dets[d].quad, gts[g].quad);
    EvalReport r;
    r.num_dets = static_cast<int>(dets.size());
    r.num_gts = static_cast<int>(gts.size());
    r.matches = matching == Matching::greedy ? greedy_match(m, iou_thresh)
                                             : hungarian_match(m, iou_thresh);
    r.true_positives = static_cast<int>(r.matches.size());
    r.precision = r.num_dets ? static_cast<double>(r.true_positives) / r.num_dets : 0.0;
    r.recall = r.num_gts ? static_cast<double>(r.true_positives) / r.num_gts : 0.0;
    r.hmean = (r.precision + r.recall) > 0.0
                  ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                  : 0.0;
    for (const auto& [cls, cnt] : count_script_matches(r.matches, dets, gts)) {
        if (cnt.second == 0)
            r.script_accuracy[cls] = std::nullopt;
        else
            r.script_accuracy[cls] = static_cast<double>(cnt.first) / cnt.second;
    }
    return r;
}

void Accumulator::add(const EvalReport& r, const std::vector<post::DetectedWord>& dets,
                      const std::vector<gt::WordAnnotation>& gts) {
    tp += r.true_positives;
    num_dets += r.num_dets;
    num_gts += r.num_gts;
    for (const auto& [cls, cnt] : count_script_matches(r.matches, dets, gts)) {
        auto& acc = script_counts[cls];
        acc.first += cnt.first;
        acc.second += cnt.second;
    }
}

EvalReport Accumulator::finalize() const {
    EvalReport r;
    r.true_positives = tp;
    r.num_dets = num_dets;
    r.num_gts = num_gts;
    r.precision = num_dets ? static_cast<double>(tp) / num_dets : 0.0;
    r.recall = num_gts ? static_cast<double>(tp) / num_gts : 0.0;
    r.hmean = (r.precision + r.recall) > 0.0
                  ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                  : 0.0;
    for (const auto& [cls, cnt] : script_counts) {
        if (cnt.second == 0)
            r.script_accuracy[cls] = std::nullopt;
        else
            r.script_accuracy[cls] = static_cast<double>(cnt.first) / cnt.second;
    }
    return r;
}

void report_to_json(const EvalReport& r, const std::string& path) {
    json j;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["hmean"] = r.hmean;
    j["true_positives"] = r.true_positives;
    j["detections"] = r.num_dets;
    j["ground_truths"] = r.num_gts;
    json acc = json::object();
    for (const auto& [cls, v] : r.script_accuracy) {
        if (v.has_value())
            acc[cls] = *v;
        else
            acc[cls] = nullptr;
    }
    j["script_accuracy"] = acc;
    json matches = json::array();
    for (const MatchPair& m : r.matches)
        matches.push_back({{"det", m.det}, {"gt", m.gt}, {"iou", m.iou}});
    j["matches"] = matches;
    std::ofstream os(path);
    if (!os) throw DataError("cannot write eval report: " + path);
    os << j.dump(1) << "\n";
}

}  // namespace telcos::eval
