#pragma once

#include "telcos/autograd.hpp"
#include "telcos/tensor.hpp"

namespace telcos::loss {

struct LossValue {
    double scalar = 0.0;
    Tensor contributions;  // per-element terms; scalar == sum / normalizer
    double normalizer = 1.0;
};

// Localization objective: per channel, mean over pooled elements of
// log(cosh(avgpool2(pred) - avgpool2(gt))), summed over the two channels.
LossValue logcosh_pool_loss(const Tensor& pred, const Tensor& gt);
Var logcosh_pool_loss(Tape& tape, Var pred, const Tensor& gt);

// Script objective: pixel-wise softmax cross entropy against a strictly
// one-hot target, averaged over pixels.
LossValue pixel_ce_loss(const Tensor& logits, const Tensor& onehot);
Var pixel_ce_loss(Tape& tape, Var logits, const Tensor& onehot);

// lambda * L_tl + (1 - lambda) * L_sd.
double combined_loss(const Tensor& loc_pred, const Tensor& loc_gt, const Tensor& script_logits,
                     const Tensor& script_gt, double lambda);
Var combined_loss(Tape& tape, Var loc_pred, const Tensor& loc_gt, Var script_logits,
                  const Tensor& script_gt, double lambda);

struct DistillTargets {
    Tensor loc_maps;     // teacher localization maps, passed through unchanged
    Tensor script_soft;  // temperature-scaled softmax of teacher script logits
    double temperature = 2.0;
};

DistillTargets distill_targets(const Tensor& teacher_loc, const Tensor& teacher_script_logits,
                               double temperature);

// Soft-target cross entropy: CE(softmax(logits / T), soft). Used in the
// distillation phase; `soft` need not be one-hot, only a distribution.
Var soft_ce_loss(Tape& tape, Var logits, const Tensor& soft, double temperature);

}  // namespace telcos::loss
