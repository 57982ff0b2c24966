#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace seg {

// Dense rank-4 array in [batch, channel, height, width] row-major order.
// The single value type for images, feature maps, masks and gradients.
template <typename T>
struct Tensor {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<T> data;

    Tensor() = default;

    Tensor(int n, int c, int h, int w, T fill = T(0))
        : shape{n, c, h, w},
          data(static_cast<std::size_t>(n) * c * h * w, fill) {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw std::invalid_argument("Tensor: negative dimension");
    }

    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }

    std::size_t size() const { return data.size(); }

    T& operator()(int in, int ic, int ih, int iw) {
        return data[((static_cast<std::size_t>(in) * shape[1] + ic) * shape[2] + ih) * shape[3] + iw];
    }
    T operator()(int in, int ic, int ih, int iw) const {
        return data[((static_cast<std::size_t>(in) * shape[1] + ic) * shape[2] + ih) * shape[3] + iw];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[" << shape[0] << "," << shape[1] << "," << shape[2] << "," << shape[3] << "]";
        return os.str();
    }

    static Tensor zeros_like(const Tensor& o) {
        return Tensor(o.shape[0], o.shape[1], o.shape[2], o.shape[3]);
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape[0], shape[1], shape[2], shape[3]);
        for (std::size_t i = 0; i < data.size(); ++i)
            out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace seg
