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
#include "ivim/model.hpp"

#include <cmath>

#include "ivim/parallel.hpp"

namespace ivim {

BValueSchedule BValueSchedule::standard() {
    return BValueSchedule({0.0, 50.0, 100.0, 200.0, 400.0, 600.0});
}

void BValueSchedule::validate() const {
    if (values.size() < 4) throw ValidationError("b-value schedule needs at least 4 values");
    if (values.front() != 0.0) throw ValidationError("b-value schedule must start at 0");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw ValidationError("non-finite b-value");
        if (i > 0 && values[i] <= values[i - 1])
            throw ValidationError("b-values must be strictly increasing");
    }
}

void ParamBounds::validate() const {
    for (const Bounds1D* b : {&D, &f, &Dstar}) {
        if (!std::isfinite(b->min) || !std::isfinite(b->max) || b->min >= b->max)
            throw ValidationError("parameter bounds require min < max");
    }
}

IvimMaps::IvimMaps(int w, int h, const ParamBounds& b)
    : D(w, h, 0.5 * (b.D.min + b.D.max)),
      Dstar(w, h, 0.5 * (b.Dstar.min + b.Dstar.max)),
      f(w, h, 0.5 * (b.f.min + b.f.max)),
      S0(w, h, 1.0),
      bounds(b) {}

void IvimMaps::validate() const {
    bounds.validate();
    if (!D.same_shape(Dstar) || !D.same_shape(f) || !D.same_shape(S0))
        throw ShapeError("IvimMaps: map shapes differ");
    for (std::size_t i = 0; i < D.data.size(); ++i) {
        if (D.data[i] < bounds.D.min || D.data[i] > bounds.D.max ||
            f.data[i] < bounds.f.min || f.data[i] > bounds.f.max ||
            Dstar.data[i] < bounds.Dstar.min || Dstar.data[i] > bounds.Dstar.max)
            throw ValidationError("IvimMaps: map value outside bounds");
        if (S0.data[i] < 0.0) throw ValidationError("IvimMaps: negative S0");
    }
}

double ivim_signal(const IvimParams& p, double b) {
    if (!(b >= 0.0) || !std::isfinite(b) || !std::isfinite(p.D) || !std::isfinite(p.Dstar) ||
        !std::isfinite(p.f) || !std::isfinite(p.S0))
        throw ValidationError("ivim_signal: non-finite input or negative b-value");
    const double e_slow = std::exp(-b * p.D);
    const double e_fast = std::exp(-b * (p.D + p.Dstar));
    return p.S0 * (e_slow + p.f * (e_fast - e_slow));
}

double ivim_signal_with_derivatives(const IvimParams& p, double b, IvimSignalDerivatives& out) {
    const double e_slow = std::exp(-b * p.D);
    const double e_fast = std::exp(-b * (p.D + p.Dstar));
    const double value = p.S0 * (e_slow + p.f * (e_fast - e_slow));
    out.dD = -b * value;
    out.dDstar = -b * p.S0 * p.f * e_fast;
    out.df = p.S0 * (e_fast - e_slow);
    return value;
}

std::vector<ImageD> reconstruct_series(const IvimMaps& maps, const BValueSchedule& schedule) {
    if (!maps.D.same_shape(maps.Dstar) || !maps.D.same_shape(maps.f) || !maps.D.same_shape(maps.S0))
        throw ShapeError("reconstruct_series: map shapes differ");
    const int w = maps.width(), h = maps.height();
    std::vector<ImageD> stack;
    stack.reserve(schedule.values.size());
    for (double b : schedule.values) {
        ImageD plane(w, h);
        par::for_rows(h, [&](int y) {
            for (int x = 0; x < w; ++x) {
                const double e_slow = std::exp(-b * maps.D(x, y));
                const double e_fast = std::exp(-b * (maps.D(x, y) + maps.Dstar(x, y)));
                plane(x, y) = maps.S0(x, y) * (e_slow + maps.f(x, y) * (e_fast - e_slow));
            }
        });
        stack.push_back(std::move(plane));
    }
    return stack;
}

namespace {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

double bound_transform(double latent, const Bounds1D& b) {
    return b.min + sigmoid(latent) * (b.max - b.min);
}

ImageD bound_transform(const ImageD& latent, const Bounds1D& b) {
    ImageD out(latent.width, latent.height);
    par::for_rows(latent.height, [&](int y) {
        for (int x = 0; x < latent.width; ++x) out(x, y) = bound_transform(latent(x, y), b);
    });
    return out;
}

double bound_transform_derivative(double latent, const Bounds1D& b) {
    const double s = sigmoid(latent);
    return (b.max - b.min) * s * (1.0 - s);
}

double bound_inverse(double value, const Bounds1D& b) {
    const double eps = 1e-6 * (b.max - b.min);
    const double v = std::clamp(value, b.min + eps, b.max - eps);
    const double t = (v - b.min) / (b.max - b.min);
    return std::log(t / (1.0 - t));
}

ImageD bound_inverse(const ImageD& value, const Bounds1D& b) {
    ImageD out(value.width, value.height);
    par::for_rows(value.height, [&](int y) {
        for (int x = 0; x < value.width; ++x) out(x, y) = bound_inverse(value(x, y), b);
    });
    return out;
}

} // namespace ivim
