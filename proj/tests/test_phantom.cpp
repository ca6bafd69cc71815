#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ivim/fit.hpp"
#include "ivim/phantom.hpp"
#include "ivim/warp.hpp"

using namespace ivim;
using ivim::testing::rel_err;

TEST_SUITE("phantom") {

TEST_CASE("minimal 8x8 spec yields a valid 6-image stack") {
    PhantomSpec spec;
    spec.width = 8;
    spec.height = 8;
    auto [dwi, gt] = make_phantom(spec);
    CHECK(dwi.num_bvalues() == 6);
    CHECK_NOTHROW(dwi.validate());
    CHECK(gt.roi_mask.width == 8);
}

TEST_CASE("f ramp across the ROI is recovered monotonically") {
    PhantomSpec spec;
    spec.width = 48;
    spec.height = 48;
    spec.roi_f_ramp = true;
    spec.roi_f_low = 0.1;
    spec.roi_f_high = 0.4;
    auto [dwi, gt] = make_phantom(spec);
    const IvimMaps maps = fit_map(dwi, &gt.roi_mask);

    // along the central row, recovered f must not decrease inside the ROI
    const int y = 24;
    double prev = -1.0;
    int inside = 0;
    for (int x = 0; x < 48; ++x) {
        if (gt.roi_mask(x, y) == 0.0f) continue;
        if (prev >= 0.0) CHECK(maps.f(x, y) >= prev - 1e-6);
        prev = maps.f(x, y);
        ++inside;
    }
    CHECK(inside > 10);
}

TEST_CASE("zero motion magnitude is a no-op") {
    PhantomSpec spec;
    spec.width = 24;
    spec.height = 24;
    spec.motion_max_px = 0.0;
    auto [dwi, gt] = make_phantom(spec);
    auto [moved, fields] = apply_motion(dwi, spec);
    CHECK(fields.empty());
    for (int i = 0; i < dwi.num_bvalues(); ++i)
        for (std::size_t k = 0; k < dwi.images[i].data.size(); ++k)
            CHECK(moved.images[i].data[k] == dwi.images[i].data[k]);
}

TEST_CASE("motion magnitude 4 px lands in [3.5, 4] px of true displacement") {
    PhantomSpec spec;
    spec.width = 64;
    spec.height = 64;
    spec.motion_max_px = 4.0;
    spec.seed = 5;
    auto [dwi, gt] = make_phantom(spec);
    auto [moved, fields] = apply_motion(dwi, spec);
    REQUIRE(fields.size() == 5);
    for (const VelocityField& v : fields) {
        const DeformationField phi = integrate_svf(v);
        double dmax = 0.0;
        for (std::size_t k = 0; k < phi.x.data.size(); ++k)
            dmax = std::max(dmax, std::hypot(phi.x.data[k], phi.y.data[k]));
        CHECK(dmax >= 3.5);
        CHECK(dmax <= 4.0);
    }
}

TEST_CASE("apply_motion is deterministic per seed and moves the masks") {
    PhantomSpec spec;
    spec.width = 32;
    spec.height = 32;
    spec.motion_max_px = 3.0;
    spec.seed = 9;
    auto [dwi, gt] = make_phantom(spec);
    auto [a, fa] = apply_motion(dwi, spec);
    auto [b, fb] = apply_motion(dwi, spec);
    for (int i = 0; i < 6; ++i)
        for (std::size_t k = 0; k < a.images[i].data.size(); ++k)
            CHECK(a.images[i].data[k] == b.images[i].data[k]);
    // the b=0 mask must be untouched, later masks generally move
    for (std::size_t k = 0; k < a.lung_masks[0].data.size(); ++k)
        CHECK(a.lung_masks[0].data[k] == dwi.lung_masks[0].data[k]);
}

TEST_CASE("apply_motion roughly preserves image mass") {
    PhantomSpec spec;
    spec.width = 64;
    spec.height = 64;
    spec.motion_max_px = 4.0;
    spec.seed = 21;
    auto [dwi, gt] = make_phantom(spec);
    auto [moved, fields] = apply_motion(dwi, spec);
    for (int i = 1; i < 6; ++i) {
        double before = 0.0, after = 0.0;
        for (double v : dwi.images[i].data) before += v;
        for (double v : moved.images[i].data) after += v;
        CHECK(std::abs(after - before) / before < 0.05);
    }
}

TEST_CASE("rician noise preconditions and bias") {
    PhantomSpec spec;
    spec.width = 16;
    spec.height = 16;
    auto [dwi, gt] = make_phantom(spec);
    CHECK_THROWS_AS(add_rician_noise(dwi, -5.0, 0), ValidationError);
    CHECK_THROWS_AS(add_rician_noise(dwi, 0.0, 0), ValidationError);

    SUBCASE("infinite snr is the identity") {
        const DwiCase same = add_rician_noise(dwi, INFINITY, 0);
        for (std::size_t k = 0; k < dwi.images[0].data.size(); ++k)
            CHECK(same.images[0].data[k] == dwi.images[0].data[k]);
    }

    SUBCASE("positive bias on a constant image at snr 20") {
        DwiCase flat = dwi;
        for (ImageD& img : flat.images) img.fill(1.0);
        // 16x16x6 = 1536 pixels per draw; average over many seeds for 1e4+
        double mean = 0.0;
        long long n = 0;
        for (int seed = 0; seed < 8; ++seed) {
            const DwiCase noisy = add_rician_noise(flat, 20.0, seed);
            for (const ImageD& img : noisy.images)
                for (double v : img.data) {
                    mean += v;
                    ++n;
                }
        }
        mean /= n;
        const double sigma = 1.0 / 20.0;
        CHECK(mean >= 1.0);
        CHECK(mean <= 1.0 + 3.0 * sigma);
    }
}

TEST_CASE("noiseless motion-free phantom round-trips through the classical fit") {
    PhantomSpec spec;
    spec.width = 32;
    spec.height = 32;
    auto [dwi, gt] = make_phantom(spec);
    const IvimMaps maps = fit_map(dwi, nullptr);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            CHECK(rel_err(maps.D(x, y), gt.maps.D(x, y)) < 1e-3);
            CHECK(rel_err(maps.f(x, y), gt.maps.f(x, y)) < 1e-3);
            CHECK(rel_err(maps.Dstar(x, y), gt.maps.Dstar(x, y)) < 1e-2);
        }
}

TEST_CASE("spec validation") {
    PhantomSpec spec;
    spec.background.f = 0.9; // outside f bounds
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = PhantomSpec();
    spec.motion_max_px = -1.0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = PhantomSpec();
    spec.width = 2;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
}

} // TEST_SUITE
