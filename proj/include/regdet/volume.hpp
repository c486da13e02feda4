#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "regdet/common.hpp"
#include "regdet/geometry.hpp"

namespace regdet {

// Scalar intensity field, 2D ([y, x]) or 3D ([z, y, x]), C-order storage.
struct Volume {
    std::vector<int> shape;
    std::vector<double> spacing;  // per axis, same order as shape
    std::vector<float> data;

    Volume() = default;
    explicit Volume(std::vector<int> s, float fill = 0.0f)
        : shape(std::move(s)), spacing(shape.size(), 1.0) {
        data.assign(element_count(), fill);
    }

    int dims() const { return static_cast<int>(shape.size()); }

    std::size_t element_count() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    float& at2(int y, int x) { return data[static_cast<std::size_t>(y) * shape[1] + x]; }
    float at2(int y, int x) const { return data[static_cast<std::size_t>(y) * shape[1] + x]; }

    float& at3(int z, int y, int x) {
        return data[(static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x];
    }
    float at3(int z, int y, int x) const {
        return data[(static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x];
    }

    Box bounds() const {
        Box b;
        b.dims = dims();
        for (int a = 0; a < b.dims; ++a) {
            b.lo[a] = 0.0;
            b.hi[a] = shape[a];
        }
        return b;
    }
};

// Integer instance-label field sharing Volume's layout; 0 is background.
struct LabelVolume {
    std::vector<int> shape;
    std::vector<std::int16_t> data;

    LabelVolume() = default;
    explicit LabelVolume(std::vector<int> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        data.assign(n, 0);
    }

    int dims() const { return static_cast<int>(shape.size()); }

    std::int16_t& at2(int y, int x) { return data[static_cast<std::size_t>(y) * shape[1] + x]; }
    std::int16_t at2(int y, int x) const { return data[static_cast<std::size_t>(y) * shape[1] + x]; }
    std::int16_t& at3(int z, int y, int x) {
        return data[(static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x];
    }
    std::int16_t at3(int z, int y, int x) const {
        return data[(static_cast<std::size_t>(z) * shape[1] + y) * shape[2] + x];
    }
};

}  // namespace regdet
