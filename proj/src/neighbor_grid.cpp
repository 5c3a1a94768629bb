#include <lidar_weather/errors.hpp>
#include <lidar_weather/neighbor_grid.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lidar_weather
{
namespace
{
constexpr int kMaxCellsPerAxis = 1 << 20;
}

NeighborGrid::NeighborGrid(std::span<const Eigen::Vector3d> points, double cell_size)
    : points_(points.begin(), points.end()), origin_(Eigen::Vector3d::Zero()), cell_(cell_size),
      max_cell_(Eigen::Vector3i::Zero())
{
    if (!(cell_size > 0.0) || !std::isfinite(cell_size))
        throw InvalidArgument("grid cell size must be positive");
    if (points_.size() >= std::numeric_limits<std::uint32_t>::max())
        throw InvalidArgument("too many points for the neighbor grid");
    if (points_.empty())
        return;

    Eigen::Vector3d lo = points_.front(), hi = points_.front();
    for (const auto& p : points_)
    {
        if (!p.allFinite())
            throw InvalidArgument("non-finite point in neighbor grid");
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    // Coarsen the grid if the extent would overflow the key packing.
    const double extent = (hi - lo).maxCoeff();
    if (extent / cell_ >= kMaxCellsPerAxis - 2)
        cell_ = extent / (kMaxCellsPerAxis - 2);
    origin_ = lo;
    max_cell_ = cell_of(hi);

    std::vector<std::uint64_t> keys(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i)
        keys[i] = key_of(cell_of(points_[i]));
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    std::stable_sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });

    std::uint32_t begin = 0;
    for (std::uint32_t k = 1; k <= order_.size(); ++k)
    {
        if (k == order_.size() || keys[order_[k]] != keys[order_[begin]])
        {
            cells_.emplace(keys[order_[begin]], CellRange{begin, k});
            begin = k;
        }
    }
}

Eigen::Vector3i NeighborGrid::cell_of(const Eigen::Vector3d& p) const
{
    const Eigen::Vector3d scaled = ((p - origin_) / cell_).array().floor();
    return scaled.cast<int>();
}

std::uint64_t NeighborGrid::key_of(const Eigen::Vector3i& cell) noexcept
{
    const auto x = static_cast<std::uint64_t>(static_cast<std::uint32_t>(cell.x())) & 0x1fffffULL;
    const auto y = static_cast<std::uint64_t>(static_cast<std::uint32_t>(cell.y())) & 0x1fffffULL;
    const auto z = static_cast<std::uint64_t>(static_cast<std::uint32_t>(cell.z())) & 0x1fffffULL;
    return (x << 42) | (y << 21) | z;
}

int NeighborGrid::span_for(double radius) const noexcept
{
    return static_cast<int>(std::min(std::ceil(radius / cell_), static_cast<double>(kMaxCellsPerAxis)));
}

template <typename Visit>
void NeighborGrid::visit_cells(const Eigen::Vector3i& center, int span, Visit&& visit) const
{
    const double volume = std::pow(2.0 * span + 1.0, 3.0);
    if (volume > static_cast<double>(cells_.size()))
    {
        // Cheaper to walk every occupied cell than to probe the cube.
        for (const auto& [key, range] : cells_)
        {
            const Eigen::Vector3i cell(static_cast<int>((key >> 42) & 0x1fffffULL),
                                       static_cast<int>((key >> 21) & 0x1fffffULL), static_cast<int>(key & 0x1fffffULL));
            if (((cell - center).array().abs() > span).any())
                continue;
            for (std::uint32_t k = range.begin; k < range.end; ++k)
                if (!visit(order_[k]))
                    return;
        }
        return;
    }
    const Eigen::Vector3i lo = (center.array() - span).max(0);
    const Eigen::Vector3i hi = (center.array() + span).min(max_cell_.array());
    for (int x = lo.x(); x <= hi.x(); ++x)
        for (int y = lo.y(); y <= hi.y(); ++y)
            for (int z = lo.z(); z <= hi.z(); ++z)
            {
                const auto it = cells_.find(key_of({x, y, z}));
                if (it == cells_.end())
                    continue;
                for (std::uint32_t k = it->second.begin; k < it->second.end; ++k)
                    if (!visit(order_[k]))
                        return;
            }
}

std::size_t NeighborGrid::count_within(std::size_t i, double radius, std::size_t limit) const
{
    const Eigen::Vector3d& q = points_[i];
    const double r2 = radius * radius;
    const int span = span_for(radius);
    std::size_t count = 0;
    if (limit == 0)
        return 0;
    visit_cells(cell_of(q), span, [&](std::uint32_t j) {
        if (j != i && (points_[j] - q).squaredNorm() <= r2)
            ++count;
        return count < limit;
    });
    return count;
}

std::vector<std::size_t> NeighborGrid::radius_query(const Eigen::Vector3d& q, double radius) const
{
    std::vector<std::size_t> hits;
    if (points_.empty())
        return hits;
    const double r2 = radius * radius;
    const int span = span_for(radius);
    visit_cells(cell_of(q), span, [&](std::uint32_t j) {
        if ((points_[j] - q).squaredNorm() <= r2)
            hits.push_back(j);
        return true;
    });
    std::sort(hits.begin(), hits.end());
    return hits;
}

std::vector<double> NeighborGrid::knn_distances(std::size_t i, std::size_t k) const
{
    const Eigen::Vector3d& q = points_[i];
    const Eigen::Vector3i center = cell_of(q);
    const int max_span = max_cell_.maxCoeff() + 1;
    std::vector<double> best;
    for (int span = 1;; span *= 2)
    {
        best.clear();
        visit_cells(center, span, [&](std::uint32_t j) {
            if (j != i)
                best.push_back((points_[j] - q).squaredNorm());
            return true;
        });
        const std::size_t take = std::min(k, best.size());
        std::partial_sort(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(take), best.end());
        best.resize(take);
        // The cube of cells within `span` covers the ball of radius span * cell around q.
        const bool complete = take == k && best.back() <= (span * cell_) * (span * cell_);
        if (complete || span >= max_span)
            break;
    }
    for (double& d : best)
        d = std::sqrt(d);
    return best;
}

} // namespace lidar_weather
