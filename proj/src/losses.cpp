#include "telcos/losses.hpp"

#include <cmath>

#include "telcos/errors.hpp"
#include "telcos/ops.hpp"

namespace telcos::loss {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + " shape mismatch: " + a.shape_str() + " vs " +
                         b.shape_str());
}

void check_one_hot(const Tensor& t) {
    if (t.rank() != 4) throw ShapeError("one-hot target must be rank 4, got " + t.shape_str());
    const int N = t.dim(0), C = t.dim(1);
    const std::size_t hw = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
    for (int n = 0; n < N; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
            int ones = 0;
            for (int c = 0; c < C; ++c) {
                const double v = t.plane(n, c)[i];
                if (v == 1.0)
                    ones++;
                else if (v != 0.0)
                    throw DataError("target is not one-hot: found value " + std::to_string(v));
            }
            if (ones != 1) throw DataError("target is not one-hot: pixel has " +
                                           std::to_string(ones) + " active classes");
        }
}

}  // namespace

LossValue logcosh_pool_loss(const Tensor& pred, const Tensor& gt) {
    require_same(pred, gt, "logcosh_pool_loss");
    Tensor d = ops::avg_pool2(ops::sub(pred, gt));
    LossValue lv;
    lv.contributions = ops::logcosh(d);
    const double per_channel_norm =
        static_cast<double>(lv.contributions.numel()) / lv.contributions.dim(1);
    lv.normalizer = per_channel_norm;
    lv.scalar = ops::sum_all(lv.contributions) / per_channel_norm;
    if (!std::isfinite(lv.scalar)) throw NumericError("logcosh_pool_loss is not finite");
    return lv;
}

Var logcosh_pool_loss(Tape& tape, Var pred, const Tensor& gt) {
    require_same(tape.val(pred), gt, "logcosh_pool_loss");
    Var d = tape.avg_pool2(tape.sub(pred, tape.constant(gt)));
    Var lc = tape.logcosh(d);
    // mean over pooled elements per channel, summed across channels
    const double per_channel_norm =
        static_cast<double>(tape.val(lc).numel()) / tape.val(lc).dim(1);
    return tape.scale(tape.sum_all(lc), 1.0 / per_channel_norm);
}

LossValue pixel_ce_loss(const Tensor& logits, const Tensor& onehot) {
    require_same(logits, onehot, "pixel_ce_loss");
    if (!logits.all_finite()) throw NumericError("pixel_ce_loss logits are not finite");
    check_one_hot(onehot);
    Tensor p = ops::softmax_channels(logits);
    const int N = p.dim(0), C = p.dim(1), H = p.dim(2), W = p.dim(3);
    LossValue lv;
    lv.contributions = Tensor::zeros({N, 1, H, W});
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double* pp = p.plane(n, c);
            const double* tp = onehot.plane(n, c);
            double* out = lv.contributions.plane(n, 0);
            for (std::size_t i = 0; i < hw; ++i)
                if (tp[i] == 1.0) out[i] = -std::log(std::max(pp[i], 1e-300));
        }
    lv.normalizer = static_cast<double>(N) * hw;
    lv.scalar = ops::sum_all(lv.contributions) / lv.normalizer;
    if (!std::isfinite(lv.scalar)) throw NumericError("pixel_ce_loss is not finite");
    return lv;
}

Var pixel_ce_loss(Tape& tape, Var logits, const Tensor& onehot) {
    require_same(tape.val(logits), onehot, "pixel_ce_loss");
    check_one_hot(onehot);
    return tape.softmax_ce_c(logits, onehot);
}

double combined_loss(const Tensor& loc_pred, const Tensor& loc_gt, const Tensor& script_logits,
                     const Tensor& script_gt, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw Error("lambda must be in [0,1]");
    return lambda * logcosh_pool_loss(loc_pred, loc_gt).scalar +
           (1.0 - lambda) * pixel_ce_loss(script_logits, script_gt).scalar;
}

Var combined_loss(Tape& tape, Var loc_pred, const Tensor& loc_gt, Var script_logits,
                  const Tensor& script_gt, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw Error("lambda must be in [0,1]");
    Var ltl = logcosh_pool_loss(tape, loc_pred, loc_gt);
    Var lsd = pixel_ce_loss(tape, script_logits, script_gt);
    return tape.add(tape.scale(ltl, lambda), tape.scale(lsd, 1.0 - lambda));
}

DistillTargets distill_targets(const Tensor& teacher_loc, const Tensor& teacher_script_logits,
                               double temperature) {
    if (temperature <= 0.0) throw Error("distillation temperature must be positive");
    DistillTargets t;
    t.loc_maps = teacher_loc;
    t.script_soft = ops::softmax_channels(ops::scale(teacher_script_logits, 1.0 / temperature));
    t.temperature = temperature;
    return t;
}

Var soft_ce_loss(Tape& tape, Var logits, const Tensor& soft, double temperature) {
    if (temperature <= 0.0) throw Error("distillation temperature must be positive");
    return tape.softmax_ce_c(tape.scale(logits, 1.0 / temperature), soft);
}

}  // namespace telcos::loss
