#pragma once

// Geometric primitives over R^d: norms, squared diameters and the two
// extreme-point aggregation rules (MidExtremes, ApproachExtreme).
//
// Every argmax uses exact comparison of squared distances. Ties go to the
// first pair (resp. point) in stored order, so results are reproducible.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <boost/container/small_vector.hpp>

namespace asgd {

/// A point in R^d. Value type; the dimension is fixed at construction.
/// Up to kInline coordinates are stored without a heap allocation.
class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t dim, double fill = 0.0) : coords_(dim, fill) {}
    Vector(std::initializer_list<double> coords) : coords_(coords) {}
    explicit Vector(const std::vector<double>& coords) : coords_(coords.begin(), coords.end()) {}

    static constexpr std::size_t kInline = 4;

    std::size_t dim() const noexcept { return coords_.size(); }
    double operator[](std::size_t k) const noexcept { return coords_[k]; }
    double& operator[](std::size_t k) noexcept { return coords_[k]; }

    std::span<const double> coords() const noexcept { return {coords_.data(), coords_.size()}; }
    std::span<double> coords() noexcept { return {coords_.data(), coords_.size()}; }
    std::vector<double> to_std() const { return {coords_.begin(), coords_.end()}; }

    bool all_finite() const noexcept;

    Vector& operator+=(const Vector& other);
    Vector& operator-=(const Vector& other);
    Vector& operator*=(double s) noexcept;

    friend Vector operator+(Vector a, const Vector& b) { return a += b; }
    friend Vector operator-(Vector a, const Vector& b) { return a -= b; }
    friend Vector operator*(Vector a, double s) { return a *= s; }
    friend Vector operator*(double s, Vector a) { return a *= s; }
    friend bool operator==(const Vector&, const Vector&) = default;

    std::string to_string() const;

private:
    boost::container::small_vector<double, kInline> coords_;
};

using PointSet = std::vector<Vector>;

double dot(const Vector& a, const Vector& b);
double norm_sq(const Vector& a) noexcept;
double distance_sq(const Vector& a, const Vector& b);

/// (a + b) / 2, coordinate-wise.
Vector midpoint(const Vector& a, const Vector& b);

/// Coordinate-wise mean, accumulated in the given order. Exact when all points are equal.
Vector mean(std::span<const Vector> points);

/// Max squared pairwise distance; 0 for a singleton.
double diameter_sq(std::span<const Vector> points);

struct ExtremePair {
    std::size_t first = 0;
    std::size_t second = 0;
    double dist_sq = 0.0;
};

/// Pair of indices (i <= j) realizing the diameter, smallest (i, j) on ties.
ExtremePair extreme_pair(std::span<const Vector> points);

/// Index of the point farthest from `from`, smallest index on ties.
std::size_t farthest_index(std::span<const Vector> points, const Vector& from);

Vector mid_extremes(std::span<const Vector> points);
Vector approach_extreme(std::span<const Vector> points, const Vector& own);

/// Throws UsageError unless `points` is nonempty with uniform dimension.
void require_point_set(std::span<const Vector> points, const char* what);

}  // namespace asgd
