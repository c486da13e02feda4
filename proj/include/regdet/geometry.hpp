#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "regdet/common.hpp"

namespace regdet {

// Axis-aligned box in continuous voxel coordinates. Axis order matches the
// owning volume's shape order ([y, x] in 2D, [z, y, x] in 3D); a voxel with
// index i spans [i, i+1).
struct Box {
    std::array<double, 3> lo{0.0, 0.0, 0.0};
    std::array<double, 3> hi{0.0, 0.0, 0.0};
    int dims = 2;

    static Box make2d(double y0, double x0, double y1, double x1) {
        return Box{{y0, x0, 0.0}, {y1, x1, 0.0}, 2};
    }
    static Box make3d(double z0, double y0, double x0, double z1, double y1, double x1) {
        return Box{{z0, y0, x0}, {z1, y1, x1}, 3};
    }

    double extent(int axis) const { return hi[axis] - lo[axis]; }

    double volume() const {
        double v = 1.0;
        for (int a = 0; a < dims; ++a) v *= std::max(0.0, extent(a));
        return v;
    }

    double center(int axis) const { return 0.5 * (lo[axis] + hi[axis]); }

    bool valid() const {
        for (int a = 0; a < dims; ++a)
            if (!(lo[a] < hi[a]) || !std::isfinite(lo[a]) || !std::isfinite(hi[a])) return false;
        return true;
    }
};

inline double intersection_volume(const Box& a, const Box& b) {
    double v = 1.0;
    for (int ax = 0; ax < a.dims; ++ax) {
        const double w = std::min(a.hi[ax], b.hi[ax]) - std::max(a.lo[ax], b.lo[ax]);
        if (w <= 0.0) return 0.0;
        v *= w;
    }
    return v;
}

inline double iou(const Box& a, const Box& b) {
    require<DataError>(a.dims == b.dims, "iou: dimensionality mismatch (", a.dims, " vs ", b.dims, ")");
    const double inter = intersection_volume(a, b);
    if (inter <= 0.0) return 0.0;
    const double uni = a.volume() + b.volume() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

// Fraction of `a` covered by `b`.
inline double coverage(const Box& a, const Box& b) {
    const double va = a.volume();
    return va > 0.0 ? intersection_volume(a, b) / va : 0.0;
}

inline Box clip_box(const Box& b, const Box& bounds) {
    Box out = b;
    for (int a = 0; a < b.dims; ++a) {
        out.lo[a] = std::clamp(b.lo[a], bounds.lo[a], bounds.hi[a]);
        out.hi[a] = std::clamp(b.hi[a], bounds.lo[a], bounds.hi[a]);
    }
    return out;
}

inline Box translate(const Box& b, const std::array<double, 3>& offset) {
    Box out = b;
    for (int a = 0; a < b.dims; ++a) {
        out.lo[a] += offset[a];
        out.hi[a] += offset[a];
    }
    return out;
}

}  // namespace regdet
