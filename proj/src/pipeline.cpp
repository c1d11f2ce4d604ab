#include "telcos/pipeline.hpp"

#include "telcos/ops.hpp"

namespace telcos::pipeline {

std::vector<post::DetectedWord> detect_words(const net::NetworkSpec& net, const Tensor& input,
                                             double t_r, double t_a) {
    net::ScoreMaps maps = net::forward(net, input, net::Mode::infer);
    Tensor prob = ops::softmax_channels(maps.script);  // (1,4,h2,w2)
    const int h2 = prob.dim(2), w2 = prob.dim(3);
    Tensor text_score = Tensor::zeros({h2, w2});
    for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x)
            text_score.at2(y, x) = 1.0 - prob.at4(0, gt::kNoneClass, y, x);
    Tensor affinity = Tensor::zeros({h2, w2});
    std::vector<double> confidences;
    std::vector<geom::Quad> quads =
        post::boxes_from_scores(text_score, affinity, t_r, t_a, &confidences);

    Tensor script_map = Tensor::zeros({gt::kScriptClasses, h2, w2});
    std::copy(prob.data.begin(), prob.data.end(), script_map.data.begin());

    std::vector<post::DetectedWord> out;
    for (std::size_t i = 0; i < quads.size(); ++i) {
        post::DetectedWord w;
        w.quad = quads[i];
        geom::Quad map_quad = quads[i];
        for (geom::Pt& p : map_quad) p = p * 0.5;
        post::ScriptVote vote = post::assign_script(script_map, map_quad);
        w.script = vote.script;
        w.confidence = confidences[i] * (vote.flagged ? 0.0 : vote.confidence);
        w.flagged = vote.flagged;
        out.push_back(w);
    }
    return out;
}

eval::EvalReport evaluate_detection(const net::NetworkSpec& net,
                                    const std::vector<train::Sample>& samples, int input_size,
                                    double iou_thresh, double t_r, double t_a) {
    eval::Accumulator acc;
    for (const train::Sample& s : samples) {
        train::LoadedSample ls = train::load_sample(s);
        train::resize_pad(ls.image, ls.words, input_size);
        Tensor input = train::image_to_tensor(ls.image);
        std::vector<post::DetectedWord> dets = detect_words(net, input, t_r, t_a);
        eval::EvalReport r = eval::match_and_score(dets, ls.words, iou_thresh);
        acc.add(r, dets, ls.words);
    }
    return acc.finalize();
}

}  // namespace telcos::pipeline
