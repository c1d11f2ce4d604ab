#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "telcos/autograd.hpp"
#include "telcos/tensor.hpp"

namespace telcos::net {

enum class LayerKind { conv, depthwise, shuffle_block, shuffle_block_down, upconv, upsample, head };

// Table-row-level view of the architecture.
struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv;
    int in_channels = 0, out_channels = 0;
    int kernel = 0, stride = 1;
    std::string tap;
};

struct Widths {
    int conv1 = 0;
    std::array<int, 4> shuffle_out{};
    int conv2 = 0;
    std::array<int, 3> upconv_out{};
    int conv3 = 0, conv4 = 0, conv5 = 0;
};

enum class Config { telcos_plus, telcos_stud, telcos, custom };

Widths table_widths(Config c);
std::string config_name(Config c);

enum class NodeKind : std::uint8_t { input, conv, dwconv, relu, slice, concat, shuffle, upsample };

struct ParamBlob {
    std::vector<int> shape;
    std::vector<float> v;
    std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
};

Tensor blob_to_tensor(const ParamBlob& b);

// Primitive graph node. Convolutions carry weight + bias blobs; routing
// nodes (relu/slice/concat/shuffle/upsample) carry none.
struct Node {
    std::string name;
    NodeKind kind = NodeKind::input;
    std::vector<int> in;
    int stride = 1, pad = 0, groups = 0, c0 = 0, c1 = 0;
    int branch = 0;  // 0 backbone, 1 localization, 2 script
    std::string tap;
    bool has_w = false;
    ParamBlob w, b;
    int out_ch = 0;
};

struct NetworkSpec {
    std::string config;
    Widths widths;
    std::vector<LayerSpec> backbone, loc_branch, script_branch;
    std::vector<Node> nodes;  // topological order
    int out_loc = -1, out_script = -1;
    std::unordered_map<std::string, int> node_by_name;

    std::int64_t param_count() const;
    int node_id(const std::string& name) const;
    // Width of a Table-II row by its table name (branch rows resolve to the
    // localization branch; both branches share widths by construction).
    int layer_out_channels(const std::string& table_row) const;
    std::vector<std::string> tap_names() const;
    int tap_node(const std::string& tap) const;
};

NetworkSpec build_network(Config c);
NetworkSpec build_network(const Widths& w, const std::string& name = "custom");

void init_weights(NetworkSpec& net, std::uint64_t seed);

enum class Mode { train, infer };

struct ScoreMaps {
    Tensor loc;     // (1, 2, h/2, w/2), train mode only
    Tensor script;  // (1, 4, h/2, w/2)
    bool has_loc = false;
};

// Runs the graph. Inputs must have extents divisible by 32; infer mode drops
// the localization branch. Taps, when requested, capture post-activation
// maps by tap label.
ScoreMaps forward(const NetworkSpec& net, const Tensor& image, Mode mode,
                  std::map<std::string, Tensor>* taps = nullptr);

struct TrainGraph {
    Var loc, script;
    std::vector<std::pair<std::string, Var>> params;  // ("node/w" or "node/b", leaf)
};

TrainGraph forward_train(const NetworkSpec& net, Tape& tape, const Tensor& image);

// Checkpoint container: magic "TLCS", version, config name, graph table,
// then per-blob records (name, rank, extents, 32-bit little-endian floats).
void save_checkpoint(const NetworkSpec& net, const std::string& path);
NetworkSpec load_checkpoint(const std::string& path);

}  // namespace telcos::net
