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
#include "ivim/reference.hpp"

#include <algorithm>
#include <cmath>

namespace ivim::ref {

namespace {

double sample(const ImageD& img, double sx, double sy) {
    const int w = img.width, h = img.height;
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    int x0 = std::min(static_cast<int>(std::floor(sx)), w - 2);
    int y0 = std::min(static_cast<int>(std::floor(sy)), h - 2);
    const double wx = sx - x0, wy = sy - y0;
    return img(x0, y0) * (1 - wx) * (1 - wy) + img(x0 + 1, y0) * wx * (1 - wy) +
           img(x0, y0 + 1) * (1 - wx) * wy + img(x0 + 1, y0 + 1) * wx * wy;
}

} // namespace

ImageD warp_image(const ImageD& img, const DeformationField& phi) {
    ImageD out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out(x, y) = sample(img, x + phi.x(x, y), y + phi.y(x, y));
    return out;
}

DeformationField compose(const DeformationField& a, const DeformationField& b) {
    DeformationField out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            const double px = x + b.x(x, y), py = y + b.y(x, y);
            out.x(x, y) = b.x(x, y) + sample(a.x, px, py);
            out.y(x, y) = b.y(x, y) + sample(a.y, px, py);
        }
    return out;
}

DeformationField integrate_svf(const VelocityField& v, int steps) {
    DeformationField phi(v.width(), v.height());
    const double s = std::ldexp(1.0, -steps);
    for (std::size_t i = 0; i < v.x.data.size(); ++i) {
        phi.x.data[i] = v.x.data[i] * s;
        phi.y.data[i] = v.y.data[i] * s;
    }
    for (int k = 0; k < steps; ++k) phi = compose(phi, phi);
    return phi;
}

double ncc_loss(const ImageD& fixed, const std::vector<ImageD>& warped, int window) {
    const int w = fixed.width, h = fixed.height, r = window / 2;
    double total = 0.0;
    for (const ImageD& J : warped) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double si = 0, sj = 0, sii = 0, sjj = 0, sij = 0;
                int n = 0;
                for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy)
                    for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
                        const double a = fixed(xx, yy), b = J(xx, yy);
                        si += a;
                        sj += b;
                        sii += a * a;
                        sjj += b * b;
                        sij += a * b;
                        ++n;
                    }
                const double cross = sij - si * sj / n;
                const double vi = std::max(0.0, sii - si * si / n);
                const double vj = std::max(0.0, sjj - sj * sj / n);
                total += cross / std::sqrt(std::max(vi * vj, 1e-5));
            }
    }
    return 1.0 - total / (static_cast<double>(warped.size()) * w * h);
}

double wser_loss(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                 const BValueSchedule& schedule, int unknowns) {
    const int n = static_cast<int>(warped.size());
    const int w = warped[0].width, h = warped[0].height;
    double w_sum = 0.0;
    for (double b : schedule.values) w_sum += std::log(b + 1.0) + 1.0;

    double mean_wser = 0.0, mean_intensity = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double q = 0.0;
            for (int i = 0; i < n; ++i) {
                const double wi = std::log(schedule.values[i] + 1.0) + 1.0;
                const double r = warped[i](x, y) - recon[i](x, y);
                q += wi * r * r;
            }
            mean_wser += std::sqrt(q / w_sum / (n - unknowns - 1));
        }
    mean_wser /= static_cast<double>(w) * h;
    for (int i = 0; i < n; ++i)
        for (double v : warped[i].data) mean_intensity += v;
    mean_intensity /= static_cast<double>(n) * w * h;
    return mean_wser / mean_intensity;
}

double smooth_loss(const std::vector<VelocityField>& velocities) {
    const int w = velocities[0].width(), h = velocities[0].height();
    double total = 0.0;
    auto grad_sq = [&](const ImageD& u) {
        double s = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double gx = x + 1 < w ? u(x + 1, y) - u(x, y) : u(x, y) - u(x - 1, y);
                const double gy = y + 1 < h ? u(x, y + 1) - u(x, y) : u(x, y) - u(x, y - 1);
                s += gx * gx + gy * gy;
            }
        return s;
    };
    for (const VelocityField& v : velocities) total += grad_sq(v.x) + grad_sq(v.y);
    return total / (static_cast<double>(velocities.size()) * w * h);
}

double quantile(std::span<const double> values, double q) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double rank = q * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - (rank - lo)) + sorted[lo + 1] * (rank - lo);
}

} // namespace ivim::ref
