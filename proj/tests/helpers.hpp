// Shared generators for the test suites: smooth random images and velocity
// fields with controlled magnitude, plus finite-difference utilities.
#ifndef IVIM_TESTS_HELPERS_HPP
#define IVIM_TESTS_HELPERS_HPP

#include <algorithm>
#include <cmath>

#include "ivim/image.hpp"
#include "ivim/rng.hpp"

namespace ivim::testing {

inline ImageD smooth_random_image(Rng& rng, int w, int h, double sigma, double lo, double hi) {
    ImageD img(w, h);
    for (double& v : img.data) v = rng.uniform();
    img = gaussian_blur(img, sigma);
    double mn = img.data[0], mx = img.data[0];
    for (double v : img.data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    const double span = mx > mn ? mx - mn : 1.0;
    for (double& v : img.data) v = lo + (hi - lo) * (v - mn) / span;
    return img;
}

inline VelocityField smooth_random_field(Rng& rng, int w, int h, double sigma, double max_mag) {
    VelocityField v(w, h);
    for (std::size_t i = 0; i < v.x.data.size(); ++i) {
        v.x.data[i] = rng.normal();
        v.y.data[i] = rng.normal();
    }
    v.x = gaussian_blur(v.x, sigma);
    v.y = gaussian_blur(v.y, sigma);
    double m = 0.0;
    for (std::size_t i = 0; i < v.x.data.size(); ++i)
        m = std::max(m, std::hypot(v.x.data[i], v.y.data[i]));
    const double s = m > 0.0 ? max_mag / m : 0.0;
    for (std::size_t i = 0; i < v.x.data.size(); ++i) {
        v.x.data[i] *= s;
        v.y.data[i] *= s;
    }
    return v;
}

inline double rel_err(double got, double want, double floor = 1e-12) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), floor});
}

} // namespace ivim::testing

#endif
