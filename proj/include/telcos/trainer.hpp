#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "telcos/groundtruth.hpp"
#include "telcos/netgraph.hpp"
#include "telcos/synthgen.hpp"

namespace telcos::train {

struct AugmentConfig {
    bool rotate = false;
    double max_deg = 15.0;
    bool blur = false;
    bool saturation = false;
    bool gray = false;
    bool brightness = false;
};

struct TrainConfig {
    int epochs = 5;
    int batch_size = 2;
    double initial_lr = 0.01;  // halved after every epoch
    double adam_beta1 = 0.9;   // the paper's literal 0.01 reading stays available
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int patience = 3;
    std::uint64_t seed = 1;
    int input_size = 768;  // toy runs use 128
    double lambda = 0.5;
    double theta_s = 0.4;
    double sigma_frac = 0.25;
    double val_fraction = 0.1;
    AugmentConfig aug;
    std::string out_dir = ".";
    double distill_temperature = 2.0;
    int distill_soft_epochs = 2;
};

double learning_rate(double initial, int epoch);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_ltl = 0.0, train_lsd = 0.0, train_combined = 0.0;
    double val_combined = 0.0;
    std::string source = "hard";  // "hard" (ground truth) or "soft" (teacher)
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::string final_checkpoint;
    int steps = 0;
    bool early_stopped = false;
    double wall_time_sec = 0.0;  // kept out of the JSON so reruns stay byte-identical
};

void report_to_json(const TrainReport& r, const std::string& path);

struct Sample {
    std::string image_path;
    std::string annotation_path;
};

// Joins manifest-relative paths with the dataset directory.
std::vector<Sample> samples_from_manifest(const synth::Manifest& m, const std::string& dir);

struct LoadedSample {
    synth::Image image;
    std::vector<gt::WordAnnotation> words;
};

LoadedSample load_sample(const Sample& s);

// Aspect-preserving resize to fit `target`, padded bottom-right to a square.
// Returns the applied scale factor; quads are scaled exactly.
double resize_pad(synth::Image& img, std::vector<gt::WordAnnotation>& words, int target);

// Geometric: applied to pixels and quads identically.
void rotate_inplace(synth::Image& img, std::vector<gt::WordAnnotation>& words, double deg);
// Photometric: annotations untouched.
void gaussian_blur_inplace(synth::Image& img, double sigma);
void saturation_inplace(synth::Image& img, double factor);
void gray_inplace(synth::Image& img);
void brightness_inplace(synth::Image& img, double delta);

// Seeded composition of the enabled augmentations after resize+pad.
LoadedSample augment(const LoadedSample& in, const AugmentConfig& aug, int target,
                     std::uint64_t seed);

Tensor image_to_tensor(const synth::Image& img);

TrainReport train(net::NetworkSpec& net, const std::vector<Sample>& samples,
                  const TrainConfig& cfg);

// Phase 1 minimizes against teacher soft targets, phase 2 fine-tunes on
// ground truth; the report tags each epoch with its loss source.
TrainReport distill_train(const net::NetworkSpec& teacher, net::NetworkSpec& student,
                          const std::vector<Sample>& samples, const TrainConfig& cfg);

}  // namespace telcos::train
