#pragma once

#include <vector>

#include "telcos/evalmetrics.hpp"
#include "telcos/netgraph.hpp"
#include "telcos/postproc.hpp"
#include "telcos/trainer.hpp"

namespace telcos::pipeline {

// Inference-time detection: the script branch's (1 - P(None)) map acts as the
// region score (the localization branch is dropped from the inference graph),
// components become min-area boxes and each box gets a script vote.
std::vector<post::DetectedWord> detect_words(const net::NetworkSpec& net, const Tensor& input,
                                             double t_r, double t_a);

// Detection quality over annotated samples at a fixed square input size;
// annotations are rescaled into network coordinates.
eval::EvalReport evaluate_detection(const net::NetworkSpec& net,
                                    const std::vector<train::Sample>& samples, int input_size,
                                    double iou_thresh, double t_r, double t_a);

}  // namespace telcos::pipeline
