#pragma once

#include <memory>
#include <vector>

#include "regdet/common.hpp"

namespace regdet::nn {

// Dense float32 array with shared storage. Copies are shallow; use clone()
// for an independent buffer. Ops treat values as immutable once produced.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<float>> store;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.store = std::make_shared<std::vector<float>>(t.count(), 0.0f);
        return t;
    }

    static Tensor full(std::vector<int> shape, float value) {
        Tensor t = zeros(std::move(shape));
        for (float& v : *t.store) v = value;
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<float> data) {
        Tensor t;
        t.shape = std::move(shape);
        t.store = std::make_shared<std::vector<float>>(std::move(data));
        require<NumericError>(t.store->size() == t.count(), "Tensor::from: data size ",
                              t.store->size(), " does not match shape count ", t.count());
        return t;
    }

    static Tensor scalar(float value) { return from({1}, {value}); }

    bool defined() const { return store != nullptr; }

    std::size_t count() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    std::size_t size() const { return store ? store->size() : 0; }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    float* data() { return store->data(); }
    const float* data() const { return store->data(); }

    float item() const {
        require<NumericError>(size() == 1, "Tensor::item on non-scalar");
        return (*store)[0];
    }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        if (store) t.store = std::make_shared<std::vector<float>>(*store);
        return t;
    }

    Tensor reshaped(std::vector<int> new_shape) const {
        Tensor t;
        t.shape = std::move(new_shape);
        t.store = store;
        require<NumericError>(t.count() == count(), "reshape: element count mismatch");
        return t;
    }
};

inline void axpy(float alpha, const Tensor& x, Tensor& y) {
    require<NumericError>(x.size() == y.size(), "axpy: size mismatch");
    const float* xs = x.data();
    float* ys = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) ys[i] += alpha * xs[i];
}

}  // namespace regdet::nn
