#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ivim/rng.hpp"
#include "ivim/warp.hpp"

using namespace ivim;
using ivim::testing::rel_err;
using ivim::testing::smooth_random_field;
using ivim::testing::smooth_random_image;

TEST_SUITE("warp") {

TEST_CASE("zero velocity integrates to the exact identity") {
    VelocityField v(24, 20);
    const DeformationField phi = integrate_svf(v);
    for (double d : phi.x.data) CHECK(d == 0.0);
    for (double d : phi.y.data) CHECK(d == 0.0);

    Rng rng(1);
    ImageD img = smooth_random_image(rng, 24, 20, 2.0, 0.0, 1.0);
    const ImageD warped = warp_image(img, phi);
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(warped.data[i] == img.data[i]);
}

TEST_CASE("constant velocity integrates to a translation") {
    VelocityField v(32, 32);
    v.x.fill(2.0);
    const DeformationField phi = integrate_svf(v);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            CHECK(std::abs(phi.x(x, y) - 2.0) < 1e-3);
            CHECK(std::abs(phi.y(x, y)) < 1e-3);
        }
}

TEST_CASE("inverse consistency of the exponential") {
    Rng rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        const VelocityField v = smooth_random_field(rng, 48, 40, 4.0, 2.0);
        VelocityField neg(48, 40);
        for (std::size_t i = 0; i < v.x.data.size(); ++i) {
            neg.x.data[i] = -v.x.data[i];
            neg.y.data[i] = -v.y.data[i];
        }
        const DeformationField fwd = integrate_svf(v);
        const DeformationField bwd = integrate_svf(neg);
        const DeformationField round = compose(fwd, bwd);
        for (int y = 2; y < 38; ++y)
            for (int x = 2; x < 46; ++x) {
                CHECK(std::abs(round.x(x, y)) < 0.05);
                CHECK(std::abs(round.y(x, y)) < 0.05);
            }
    }
}

TEST_CASE("integer translation shifts columns in the interior") {
    ImageD img(16, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) img(x, y) = 100.0 * y + x;
    DeformationField phi(16, 8);
    phi.x.fill(3.0);
    const ImageD out = warp_image(img, phi);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 13; ++x) CHECK(out(x, y) == img(x + 3, y));
}

TEST_CASE("half-pixel shift of a linear ramp") {
    ImageD img(16, 8);
    const double slope = 0.25;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 16; ++x) img(x, y) = slope * x;
    DeformationField phi(16, 8);
    phi.x.fill(0.5);
    const ImageD out = warp_image(img, phi);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 15; ++x)
            CHECK(out(x, y) == doctest::Approx(slope * x + 0.5 * slope).epsilon(1e-12));
}

TEST_CASE("warp shape mismatch is rejected") {
    ImageD img(8, 8);
    DeformationField phi(6, 8);
    CHECK_THROWS_AS(warp_image(img, phi), ShapeError);
}

TEST_CASE("spatial gradient: constants, ramps, linearity") {
    ImageD gx, gy;
    SUBCASE("constant field has zero gradient") {
        ImageD f(9, 7, 3.5);
        spatial_gradient(f, gx, gy);
        for (double v : gx.data) CHECK(v == 0.0);
        for (double v : gy.data) CHECK(v == 0.0);
    }
    SUBCASE("ramp f=x has unit x-gradient everywhere") {
        ImageD f(9, 7);
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 9; ++x) f(x, y) = x;
        spatial_gradient(f, gx, gy);
        for (double v : gx.data) CHECK(v == 1.0);
        for (double v : gy.data) CHECK(v == 0.0);
    }
    SUBCASE("gradient of a sum is the sum of gradients") {
        Rng rng(23);
        ImageD a = smooth_random_image(rng, 11, 9, 1.0, -1.0, 1.0);
        ImageD b = smooth_random_image(rng, 11, 9, 1.0, -1.0, 1.0);
        ImageD sum(11, 9);
        for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] = a.data[i] + b.data[i];
        ImageD gax, gay, gbx, gby, gsx, gsy;
        spatial_gradient(a, gax, gay);
        spatial_gradient(b, gbx, gby);
        spatial_gradient(sum, gsx, gsy);
        for (std::size_t i = 0; i < sum.data.size(); ++i) {
            CHECK(gsx.data[i] == doctest::Approx(gax.data[i] + gbx.data[i]).epsilon(1e-12));
            CHECK(gsy.data[i] == doctest::Approx(gay.data[i] + gby.data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("spatial gradient adjoint is the exact transpose") {
    Rng rng(29);
    const ImageD f = smooth_random_image(rng, 10, 12, 1.0, -1.0, 1.0);
    const ImageD rx = smooth_random_image(rng, 10, 12, 1.0, -1.0, 1.0);
    const ImageD ry = smooth_random_image(rng, 10, 12, 1.0, -1.0, 1.0);
    ImageD gx, gy, adj;
    spatial_gradient(f, gx, gy);
    spatial_gradient_adjoint(rx, ry, adj);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i) {
        lhs += rx.data[i] * gx.data[i] + ry.data[i] * gy.data[i];
        rhs += adj.data[i] * f.data[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("compose identities and semigroup") {
    Rng rng(31);
    SUBCASE("identity o b == b") {
        DeformationField id(20, 18);
        VelocityField vb = smooth_random_field(rng, 20, 18, 3.0, 1.5);
        DeformationField b = integrate_svf(vb);
        const DeformationField out = compose(id, b);
        for (std::size_t i = 0; i < b.x.data.size(); ++i) {
            CHECK(out.x.data[i] == b.x.data[i]);
            CHECK(out.y.data[i] == b.y.data[i]);
        }
    }
    SUBCASE("two constant translations add in the interior") {
        DeformationField a(20, 18), b(20, 18);
        a.x.fill(1.5);
        b.y.fill(-2.0);
        const DeformationField out = compose(a, b);
        for (int y = 4; y < 14; ++y)
            for (int x = 4; x < 16; ++x) {
                CHECK(out.x(x, y) == doctest::Approx(1.5).epsilon(1e-12));
                CHECK(out.y(x, y) == doctest::Approx(-2.0).epsilon(1e-12));
            }
    }
    SUBCASE("integrate(v/2) o integrate(v/2) ~ integrate(v)") {
        const VelocityField v = smooth_random_field(rng, 40, 36, 4.0, 2.0);
        VelocityField half(40, 36);
        for (std::size_t i = 0; i < v.x.data.size(); ++i) {
            half.x.data[i] = 0.5 * v.x.data[i];
            half.y.data[i] = 0.5 * v.y.data[i];
        }
        const DeformationField ph = integrate_svf(half);
        const DeformationField full = integrate_svf(v);
        const DeformationField twice = compose(ph, ph);
        for (int y = 2; y < 34; ++y)
            for (int x = 2; x < 38; ++x) {
                CHECK(std::abs(twice.x(x, y) - full.x(x, y)) < 0.05);
                CHECK(std::abs(twice.y(x, y) - full.y(x, y)) < 0.05);
            }
    }
}

TEST_CASE("warp backward matches finite differences") {
    Rng rng(37);
    const int w = 14, h = 12;
    const ImageD img = smooth_random_image(rng, w, h, 2.0, 0.2, 1.2);
    const VelocityField v = smooth_random_field(rng, w, h, 3.0, 0.8);
    DeformationField phi(w, h);
    // keep sample positions interior and away from lattice kinks
    for (std::size_t i = 0; i < v.x.data.size(); ++i) {
        phi.x.data[i] = v.x.data[i] + 0.37;
        phi.y.data[i] = v.y.data[i] + 0.41;
    }
    const ImageD weight = smooth_random_image(rng, w, h, 1.0, -1.0, 1.0);

    const auto objective = [&](const ImageD& image, const DeformationField& field) {
        const ImageD out = warp_image(image, field);
        double s = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) s += weight.data[i] * out.data[i];
        return s;
    };

    ImageD d_img;
    VectorField2D d_phi;
    warp_image_backward(img, phi, weight, &d_img, &d_phi);

    const double h_step = 1e-5;
    int checked = 0;
    for (int y = 1; y < h - 1; y += 3)
        for (int x = 1; x < w - 1; x += 3) {
            DeformationField pp = phi, pm = phi;
            pp.x(x, y) += h_step;
            pm.x(x, y) -= h_step;
            const double fd_x = (objective(img, pp) - objective(img, pm)) / (2 * h_step);
            CHECK(rel_err(d_phi.x(x, y), fd_x, 1e-3) < 1e-4);

            ImageD ip = img, im = img;
            ip(x, y) += h_step;
            im(x, y) -= h_step;
            const double fd_i = (objective(ip, phi) - objective(im, phi)) / (2 * h_step);
            CHECK(rel_err(d_img(x, y), fd_i, 1e-3) < 1e-4);
            ++checked;
        }
    CHECK(checked > 10);
}

} // TEST_SUITE
