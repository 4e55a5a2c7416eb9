#ifndef MSADAPT_TENSOR_HPP
#define MSADAPT_TENSOR_HPP

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace msadapt {

// Dense row-major n-d array. The last dimension is contiguous; volumes use
// the NIfTI voxel order (x fastest) mapped as shape {nz, ny, nx}.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s, T fill = T(0))
        : shape(std::move(s)),
          data(static_cast<size_t>(count(shape)), fill) {}

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 1) throw std::invalid_argument("tensor dimension < 1");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void zero() { std::fill(data.begin(), data.end(), T(0)); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace msadapt

#endif
