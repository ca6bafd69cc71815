/*
 * ivim : motion-compensated quantitative IVIM analysis of multi-b-value DWI
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef IVIM_IMAGE_HPP
#define IVIM_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ivim/errors.hpp"

namespace ivim {

/// Row-major 2D image. data[y*width + x].
template <class T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, T fill = T(0))
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    T& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Image& o) const { return width == o.width && height == o.height; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

using ImageF = Image<float>;
using ImageD = Image<double>;

template <class T, class U>
inline void require_same_shape(const Image<T>& a, const Image<U>& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError(std::string(what) + ": image shapes differ");
}

template <class T, class U>
Image<U> convert_image(const Image<T>& in, U /*tag*/ = U()) {
    Image<U> out(in.width, in.height);
    for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = static_cast<U>(in.data[i]);
    return out;
}

inline ImageD to_double(const ImageF& in) { return convert_image<float, double>(in); }
inline ImageF to_float(const ImageD& in) { return convert_image<double, float>(in); }

template <class T>
bool all_finite(const Image<T>& img) {
    for (T v : img.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

/// 2D vector field; one scalar image per component.
struct VectorField2D {
    ImageD x, y;

    VectorField2D() = default;
    VectorField2D(int w, int h) : x(w, h), y(w, h) {}

    int width() const { return x.width; }
    int height() const { return x.height; }
    bool same_shape(const VectorField2D& o) const { return x.same_shape(o.x); }
    void fill(double v) { x.fill(v); y.fill(v); }
};

/// Stationary velocity field in pixels per unit time.
struct VelocityField : VectorField2D {
    using VectorField2D::VectorField2D;
};

/// Dense displacement field in pixels, pull-back convention:
/// output(p) = input(p + phi(p)). Identity is the all-zero field.
struct DeformationField : VectorField2D {
    using VectorField2D::VectorField2D;
};

/// Separable Gaussian blur with reflected borders. sigma <= 0 returns a copy.
ImageD gaussian_blur(const ImageD& img, double sigma);

/// 2x box downsample (average of 2x2 blocks; odd trailing row/col averaged
/// over the in-bounds pixels). Used by the multi-resolution registrars.
ImageD downsample2(const ImageD& img);

/// Bilinear upsample of a field component to the given target shape with the
/// coordinate scaling used by the multi-resolution registrars (values are
/// positions/offsets in pixels of the coarse grid; caller rescales).
ImageD upsample_bilinear(const ImageD& img, int target_w, int target_h);

} // namespace ivim

#endif
