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
#include "ivim/image.hpp"

#include <cmath>

#include "ivim/parallel.hpp"

namespace ivim {

namespace {

// Reflect index into [0, n-1] (mirror without repeating the edge sample on
// small overshoots; falls back to clamping for pathological radii).
inline int reflect(int i, int n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return std::clamp(i, 0, n - 1);
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

} // namespace

ImageD gaussian_blur(const ImageD& img, double sigma) {
    if (sigma <= 0.0) return img;
    const std::vector<double> k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int w = img.width, h = img.height;

    ImageD tmp(w, h), out(w, h);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) s += k[i + radius] * img(reflect(x + i, w), y);
            tmp(x, y) = s;
        }
    });
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp(x, reflect(y + i, h));
            out(x, y) = s;
        }
    });
    return out;
}

ImageD downsample2(const ImageD& img) {
    const int w = img.width, h = img.height;
    const int ow = (w + 1) / 2, oh = (h + 1) / 2;
    ImageD out(ow, oh);
    par::for_rows(oh, [&](int oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double s = 0.0;
            int n = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int x = 2 * ox + dx, y = 2 * oy + dy;
                    if (x < w && y < h) {
                        s += img(x, y);
                        ++n;
                    }
                }
            out(ox, oy) = s / n;
        }
    });
    return out;
}

ImageD upsample_bilinear(const ImageD& img, int target_w, int target_h) {
    ImageD out(target_w, target_h);
    const double sx = target_w > 1 ? static_cast<double>(img.width - 1) / (target_w - 1) : 0.0;
    const double sy = target_h > 1 ? static_cast<double>(img.height - 1) / (target_h - 1) : 0.0;
    par::for_rows(target_h, [&](int y) {
        for (int x = 0; x < target_w; ++x) {
            const double fx = x * sx, fy = y * sy;
            const int x0 = std::min(static_cast<int>(fx), img.width - 2 >= 0 ? img.width - 2 : 0);
            const int y0 = std::min(static_cast<int>(fy), img.height - 2 >= 0 ? img.height - 2 : 0);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const int y1 = std::min(y0 + 1, img.height - 1);
            const double wx = fx - x0, wy = fy - y0;
            out(x, y) = img(x0, y0) * (1 - wx) * (1 - wy) + img(x1, y0) * wx * (1 - wy) +
                        img(x0, y1) * (1 - wx) * wy + img(x1, y1) * wx * wy;
        }
    });
    return out;
}

} // namespace ivim
