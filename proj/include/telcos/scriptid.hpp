#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "telcos/geometry.hpp"
#include "telcos/netgraph.hpp"
#include "telcos/tensor.hpp"

namespace telcos::scriptid {

// Seeded random hyperplanes: hash_count functions of planes_per_hash planes
// each; the output is one sign bit per plane.
struct ProjectionLayer {
    int hash_count = 8;
    int planes_per_hash = 16;
    int input_dim = 0;
    std::uint64_t seed = 0;
    Tensor planes;  // (hash_count * planes_per_hash, input_dim)

    int bits() const { return hash_count * planes_per_hash; }
    static ProjectionLayer create(int hash_count, int planes_per_hash, int input_dim,
                                  std::uint64_t seed);
};

// bit i = 1 iff dot(x, plane_i) >= 0; deterministic, scale invariant.
std::vector<std::uint8_t> lsh_project(const std::vector<double>& x, const ProjectionLayer& p);

// Axis-aligned crop of the quad's bounding box from a (1,C,H,W) feature map,
// bilinearly resized to a fixed (out_h, out_w). Sub-cell quads still crop at
// least one cell.
Tensor roi_features(const Tensor& features, const geom::Quad& quad_feature_coords, int out_h = 8,
                    int out_w = 32);

// Per horizontal stripe, per channel max; concatenated stripe-major
// (stripe 0 channels first). Length = n_stripes * C.
std::vector<double> ssp_pool(const Tensor& features, int n_stripes);

struct ScriptIdConfig {
    std::vector<std::string> labels;
    int stripes = 4;
    int conv_channels = 12;
    int hash_count = 8;
    int planes_per_hash = 16;
    int teacher_hidden = 64;
    int roi_h = 8, roi_w = 32;
};

struct ScriptIdModel {
    ScriptIdConfig cfg;
    bool student = false;
    int in_channels = 0;
    std::uint64_t proj_seed = 0;
    std::map<std::string, net::ParamBlob> params;
    ProjectionLayer proj;  // student only
};

ScriptIdModel make_model(const ScriptIdConfig& cfg, int in_channels, bool student,
                         std::uint64_t seed);

std::vector<double> classify_logits(const ScriptIdModel& model, const Tensor& roi);
int classify(const ScriptIdModel& model, const Tensor& roi);

struct CropSample {
    Tensor features;  // (1, C, h, w)
    int label = 0;
};

struct ScriptIdReport {
    std::vector<double> epoch_loss_soft;  // teacher-target component per epoch
    std::vector<double> epoch_loss_hard;  // ground-truth component per epoch
    double accuracy = 0.0;
    int epochs = 0;
};

// Trains `model`: loss = lambda_t * CE(vs teacher soft labels)
//                       + (1 - lambda_t) * CE(vs ground truth).
// teacher may be null when lambda_t == 0 (plain supervised training).
ScriptIdReport train_scriptid(const ScriptIdModel* teacher, ScriptIdModel& model,
                              const std::vector<CropSample>& crops, double lambda_t, int epochs,
                              double lr, std::uint64_t seed);

double evaluate_accuracy(const ScriptIdModel& model, const std::vector<CropSample>& crops);

// Crop dataset: directory of TLCT feature dumps plus labels.json.
void save_crops(const std::vector<CropSample>& crops, const std::vector<std::string>& labels,
                const std::string& dir);
std::pair<std::vector<CropSample>, std::vector<std::string>> load_crops(const std::string& dir);

// Checkpoints reuse the TLCS blob container.
void save_model(const ScriptIdModel& model, const std::string& path);
ScriptIdModel load_model(const std::string& path);

}  // namespace telcos::scriptid
