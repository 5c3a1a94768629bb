#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

namespace lidar_weather
{

// Uniform voxel hash over a fixed point set. Radius tests are inclusive (|p - q|^2 <= r^2).
class NeighborGrid
{
  public:
    NeighborGrid(std::span<const Eigen::Vector3d> points, double cell_size);

    std::size_t size() const noexcept { return points_.size(); }
    double cell_size() const noexcept { return cell_; }

    // Other points (index != i) within radius of point i; stops counting at `limit`.
    std::size_t count_within(std::size_t i, double radius,
                             std::size_t limit = std::numeric_limits<std::size_t>::max()) const;

    // Indices of all points within radius of q, ascending.
    std::vector<std::size_t> radius_query(const Eigen::Vector3d& q, double radius) const;

    // Distances from point i to its k nearest other points, ascending. Fewer if the set is smaller.
    std::vector<double> knn_distances(std::size_t i, std::size_t k) const;

  private:
    struct CellRange
    {
        std::uint32_t begin;
        std::uint32_t end;
    };

    Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const;
    int span_for(double radius) const noexcept;
    static std::uint64_t key_of(const Eigen::Vector3i& cell) noexcept;

    template <typename Visit>
    void visit_cells(const Eigen::Vector3i& center, int span, Visit&& visit) const;

    std::vector<Eigen::Vector3d> points_;
    std::vector<std::uint32_t> order_; // point indices sorted by cell
    std::unordered_map<std::uint64_t, CellRange> cells_;
    Eigen::Vector3d origin_;
    double cell_;
    Eigen::Vector3i max_cell_;
};

} // namespace lidar_weather
