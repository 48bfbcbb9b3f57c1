#include "asgd/vecmath.hpp"

#include <cmath>
#include <cstdio>

#include "asgd/error.hpp"

namespace asgd {

namespace {

[[noreturn, gnu::noinline]] void dim_mismatch(const Vector& a, const Vector& b, const char* what) {
    throw UsageError(std::string(what) + ": dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()) + ")");
}

inline void require_same_dim(const Vector& a, const Vector& b, const char* what) {
    if (a.dim() != b.dim()) [[unlikely]]
        dim_mismatch(a, b, what);
}

}  // namespace

bool Vector::all_finite() const noexcept {
    for (double c : coords_)
        if (!std::isfinite(c)) return false;
    return true;
}

Vector& Vector::operator+=(const Vector& other) {
    require_same_dim(*this, other, "Vector::operator+=");
    for (std::size_t k = 0; k < coords_.size(); ++k) coords_[k] += other.coords_[k];
    return *this;
}

Vector& Vector::operator-=(const Vector& other) {
    require_same_dim(*this, other, "Vector::operator-=");
    for (std::size_t k = 0; k < coords_.size(); ++k) coords_[k] -= other.coords_[k];
    return *this;
}

Vector& Vector::operator*=(double s) noexcept {
    for (double& c : coords_) c *= s;
    return *this;
}

std::string Vector::to_string() const {
    std::string out = "(";
    char buf[32];
    for (std::size_t k = 0; k < coords_.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", coords_[k]);
        if (k) out += ", ";
        out += buf;
    }
    return out + ")";
}

double dot(const Vector& a, const Vector& b) {
    require_same_dim(a, b, "dot");
    double s = 0.0;
    for (std::size_t k = 0; k < a.dim(); ++k) s += a[k] * b[k];
    return s;
}

double norm_sq(const Vector& a) noexcept {
    double s = 0.0;
    for (double c : a.coords()) s += c * c;
    return s;
}

double distance_sq(const Vector& a, const Vector& b) {
    require_same_dim(a, b, "distance_sq");
    double s = 0.0;
    for (std::size_t k = 0; k < a.dim(); ++k) {
        const double diff = a[k] - b[k];
        s += diff * diff;
    }
    return s;
}

Vector midpoint(const Vector& a, const Vector& b) {
    require_same_dim(a, b, "midpoint");
    Vector m(a.dim());
    for (std::size_t k = 0; k < a.dim(); ++k) m[k] = (a[k] + b[k]) / 2.0;
    return m;
}

Vector mean(std::span<const Vector> points) {
    require_point_set(points, "mean");
    // Deviations from the first point are summed, so equal inputs give back
    // exactly that point.
    const Vector& base = points.front();
    Vector dev(base.dim());
    for (std::size_t i = 1; i < points.size(); ++i)
        for (std::size_t k = 0; k < base.dim(); ++k) dev[k] += points[i][k] - base[k];
    Vector out = base;
    for (std::size_t k = 0; k < base.dim(); ++k) out[k] += dev[k] / static_cast<double>(points.size());
    return out;
}

void require_point_set(std::span<const Vector> points, const char* what) {
    if (points.empty()) throw UsageError(std::string(what) + ": empty point set");
    const std::size_t d = points.front().dim();
    if (d == 0) throw UsageError(std::string(what) + ": zero-dimensional points");
    for (const auto& p : points)
        if (p.dim() != d) throw UsageError(std::string(what) + ": points of mixed dimension");
}

ExtremePair extreme_pair(std::span<const Vector> points) {
    require_point_set(points, "extreme_pair");
    ExtremePair best;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            const double d2 = distance_sq(points[i], points[j]);
            if (d2 > best.dist_sq) best = {i, j, d2};
        }
    }
    return best;
}

double diameter_sq(std::span<const Vector> points) {
    return extreme_pair(points).dist_sq;
}

std::size_t farthest_index(std::span<const Vector> points, const Vector& from) {
    require_point_set(points, "farthest_index");
    require_same_dim(points.front(), from, "farthest_index");
    std::size_t best = 0;
    double best_d2 = distance_sq(points[0], from);
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double d2 = distance_sq(points[i], from);
        if (d2 > best_d2) {
            best = i;
            best_d2 = d2;
        }
    }
    return best;
}

Vector mid_extremes(std::span<const Vector> points) {
    const auto pair = extreme_pair(points);
    return midpoint(points[pair.first], points[pair.second]);
}

Vector approach_extreme(std::span<const Vector> points, const Vector& own) {
    return midpoint(own, points[farthest_index(points, own)]);
}

}  // namespace asgd
