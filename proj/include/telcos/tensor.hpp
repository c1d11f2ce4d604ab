#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace telcos {

// Dense row-major tensor of doubles. Rank-4 tensors follow the
// (batch, channels, height, width) layout used throughout the network.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> s);
    static Tensor full(std::vector<int> s, double v);

    std::int64_t numel() const;
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
    bool all_finite() const;

    // Rank-4 accessors.
    double& at4(int n, int c, int y, int x);
    double at4(int n, int c, int y, int x) const;
    double* plane(int n, int c);
    const double* plane(int n, int c) const;

    // Rank-2 map accessors.
    double& at2(int y, int x);
    double at2(int y, int x) const;
};

std::int64_t shape_numel(const std::vector<int>& shape);

// Raw debug dump: magic "TLCT", u32 rank, u32 extents, then doubles.
// Everything little-endian.
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

}  // namespace telcos
