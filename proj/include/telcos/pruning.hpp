#pragma once

#include <map>
#include <string>
#include <vector>

#include "telcos/netgraph.hpp"
#include "telcos/tensor.hpp"
#include "telcos/trainer.hpp"

namespace telcos::prune {

// Post-activation maps per (tap, image): rank-3 (channels, h, w).
struct ActivationProfile {
    std::vector<std::string> taps;
    std::map<std::string, std::vector<Tensor>> maps;  // tap -> one tensor per image
    int images = 0;

    int channels(const std::string& tap) const;
};

ActivationProfile collect_activations(const net::NetworkSpec& net,
                                      const std::vector<Tensor>& rep_images,
                                      const std::vector<std::string>& taps);

// Windowed SSIM between two rank-2 maps, min-max normalized per map first,
// 7x7 uniform window (whole map when smaller), C1=0.01^2, C2=0.03^2.
// Two equal constant maps give 1, unequal constants 0.
double ssim(const Tensor& a, const Tensor& b);

// Mean SSIM over the representative set for every channel pair of a tap.
std::vector<std::vector<double>> mean_ssim_matrix(const ActivationProfile& profile,
                                                  const std::string& tap, int threads = 1);

struct ChannelGroup {
    std::string tap;
    std::vector<int> members;
    std::vector<std::vector<double>> mean_ssim;  // within-group pair scores
};

// Groups = connected components of the "mean SSIM >= tau" graph by default;
// complete linkage (every pair >= tau) behind the flag.
std::vector<ChannelGroup> group_channels(const ActivationProfile& profile, const std::string& tap,
                                         double tau, bool complete_linkage = false,
                                         int threads = 1);

// Fraction of activation entries <= 1e-12 over all images and positions.
double apoz(const ActivationProfile& profile, const std::string& tap, int channel);

struct TapPlan {
    std::vector<int> remove;               // sorted output channels
    std::vector<std::string> provenance;   // "apoz" or "ssim", aligned with remove
};

struct PrunePlan {
    std::map<std::string, TapPlan> taps;
    // Filled by propagate_plan (node-name keyed, original channel indices).
    std::map<std::string, std::vector<int>> node_out_removals;
    std::map<std::string, std::vector<int>> node_in_removals;
    bool closed = false;
    std::vector<std::string> warnings;
};

// Selection for one tap's groups: round(x*g) channels by highest APoZ, then
// round((k-x)*g) of the rest by highest mean intra-group SSIM; ties break to
// the lower channel index; every group keeps at least one survivor.
PrunePlan make_prune_plan(const std::vector<ChannelGroup>& groups,
                          const ActivationProfile& profile, double k, double x);

void merge_plan(PrunePlan& into, const PrunePlan& from);

// Walks the graph from every pruned tap to its consumers through relu,
// upsample, slice, concat and shuffle routing, recording input-slice and
// forced depthwise removals. Rejects pruning that would unbalance a channel
// split or a shuffle's groups, naming the offending layer.
PrunePlan propagate_plan(const net::NetworkSpec& net, PrunePlan plan);

// Rebuilds the network with surviving weights copied verbatim.
net::NetworkSpec apply_plan(const net::NetworkSpec& net, const PrunePlan& plan);

// Plain convolution taps whose removal propagates exactly: conv1, conv2,
// per-branch upconv outputs and head convs 3-5. Shuffle-stage outputs are
// excluded: removing channels across an interleaving shuffle plus a split
// cannot keep survivor wiring consistent.
std::vector<std::string> default_prunable_taps(const net::NetworkSpec& net);

void plan_to_json(const PrunePlan& plan, const std::string& path);
PrunePlan plan_from_json(const std::string& path);

struct FinetuneOptions {
    int taps_per_iteration = 3;
    int epochs_per_iteration = 1;
    double hmean_guard = 0.05;  // max tolerated validation H-mean drop
    double iou_thresh = 0.5;
    double t_r = 0.5, t_a = 0.5;
    train::TrainConfig tc;
    std::vector<train::Sample> train_samples;
    std::vector<train::Sample> val_samples;
};

struct IterationReport {
    std::vector<std::string> taps;
    std::int64_t params_before = 0, params_after = 0;
    double hmean_before = 0.0, hmean_after = 0.0;
    bool rolled_back = false;
};

struct PruneReport {
    std::vector<IterationReport> iterations;
    std::int64_t params_initial = 0, params_final = 0;
};

// Applies the plan a few taps at a time with fine-tuning in between; an
// iteration whose validation H-mean collapses is rolled back.
std::pair<net::NetworkSpec, PruneReport> apply_and_finetune(const net::NetworkSpec& net,
                                                            const PrunePlan& plan,
                                                            const FinetuneOptions& opt);

}  // namespace telcos::prune
