#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ivim/baselines.hpp"
#include "ivim/eval.hpp"
#include "ivim/phantom.hpp"
#include "ivim/warp.hpp"

using namespace ivim;
using ivim::testing::smooth_random_field;
using ivim::testing::smooth_random_image;

namespace {

ImageD structured_image(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    return smooth_random_image(rng, w, h, 3.0, 0.1, 1.1);
}

double mean_abs_diff(const std::vector<ImageD>& a, const std::vector<ImageD>& b) {
    double s = 0.0;
    long long n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i].data.size(); ++k) {
            s += std::abs(a[i].data[k] - b[i].data[k]);
            ++n;
        }
    return s / n;
}

} // namespace

TEST_SUITE("baselines") {

TEST_CASE("affine registration of an image onto itself is the identity") {
    const ImageD img = structured_image(64, 64, 3);
    const AffineResult res = register_affine(img, img);
    CHECK(std::abs(res.transform.a00 - 1.0) < 1e-3);
    CHECK(std::abs(res.transform.a11 - 1.0) < 1e-3);
    CHECK(std::abs(res.transform.a01) < 1e-3);
    CHECK(std::abs(res.transform.a10) < 1e-3);
    CHECK(std::abs(res.transform.tx) < 1e-3);
    CHECK(std::abs(res.transform.ty) < 1e-3);
}

TEST_CASE("affine registration recovers a known translation within 0.2 px") {
    const ImageD fixed = structured_image(64, 64, 5);
    DeformationField shift(64, 64);
    shift.x.fill(-3.0);
    shift.y.fill(2.0);
    const ImageD moving = warp_image(fixed, shift); // moving(p) = fixed(p - 3, p + 2)
    const AffineResult res = register_affine(fixed, moving);
    CHECK(std::abs(res.transform.tx - 3.0) < 0.2);
    CHECK(std::abs(res.transform.ty - (-2.0)) < 0.2);
}

TEST_CASE("affine registration recovers a 5 degree rotation within 0.5 degrees") {
    const ImageD fixed = structured_image(64, 64, 7);
    const double theta = 5.0 * M_PI / 180.0;
    AffineTransform rot;
    rot.a00 = std::cos(theta);
    rot.a01 = -std::sin(theta);
    rot.a10 = std::sin(theta);
    rot.a11 = std::cos(theta);
    const ImageD moving = warp_image(fixed, rot.displacement_field(64, 64));
    const AffineResult res = register_affine(fixed, moving);
    const double recovered = std::atan2(res.transform.a10, res.transform.a00);
    CHECK(std::abs(std::abs(recovered) - theta) < 0.5 * M_PI / 180.0);
}

TEST_CASE("deformable registration of identical images stays near identity") {
    const ImageD img = structured_image(48, 48, 11);
    const DeformableResult res = register_deformable(img, img);
    const DeformationField phi = integrate_svf(res.velocity);
    double mean = 0.0;
    for (std::size_t k = 0; k < phi.x.data.size(); ++k)
        mean += std::hypot(phi.x.data[k], phi.y.data[k]);
    mean /= static_cast<double>(phi.x.size());
    CHECK(mean < 0.1);
}

TEST_CASE("deformable registration improves mask overlap under a known smooth warp") {
    PhantomSpec spec;
    spec.width = 64;
    spec.height = 64;
    auto [dwi, gt] = make_phantom(spec);
    const ImageD fixed = dwi.images[0];

    Rng rng(13);
    const VelocityField v_true = smooth_random_field(rng, 64, 64, 8.0, 4.0);
    const DeformationField phi_true = integrate_svf(v_true);
    const ImageD moving = warp_image(fixed, phi_true);

    // the true mask of the moving image is the ROI dragged by the same warp
    ImageF moving_mask(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const int sx = std::clamp(static_cast<int>(std::lround(x + phi_true.x(x, y))), 0, 63);
            const int sy = std::clamp(static_cast<int>(std::lround(y + phi_true.y(x, y))), 0, 63);
            moving_mask(x, y) = gt.roi_mask(sx, sy);
        }
    const double pre = dice(gt.roi_mask, moving_mask);

    const DeformableResult res = register_deformable(fixed, moving);
    const DeformationField phi = integrate_svf(res.velocity);
    ImageF warped_mask(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const int sx = std::clamp(static_cast<int>(std::lround(x + phi.x(x, y))), 0, 63);
            const int sy = std::clamp(static_cast<int>(std::lround(y + phi.y(x, y))), 0, 63);
            warped_mask(x, y) = moving_mask(sx, sy);
        }
    CHECK(dice(gt.roi_mask, warped_mask) >= pre);
}

TEST_CASE("smoothness keeps pure-noise registration bounded") {
    Rng rng(17);
    ImageD a(48, 48), b(48, 48);
    for (double& v : a.data) v = rng.uniform();
    for (double& v : b.data) v = rng.uniform();
    const DeformableResult res = register_deformable(a, b);
    const DeformationField phi = integrate_svf(res.velocity);
    double peak = 0.0;
    for (std::size_t k = 0; k < phi.x.data.size(); ++k)
        peak = std::max(peak, std::hypot(phi.x.data[k], phi.y.data[k]));
    CHECK(peak < 2.0);
}

TEST_CASE("all correction modes are no-ops on a static case") {
    PhantomSpec spec;
    spec.width = 48;
    spec.height = 48;
    auto [dwi, gt] = make_phantom(spec);

    SUBCASE("affine to b0") {
        const CorrectionResult res = correct_to_b0(dwi, CorrectMode::AffineToB0);
        CHECK(mean_abs_diff(res.corrected.images, dwi.images) < 1e-2);
        CHECK(res.corrected.images.size() == dwi.images.size());
    }
    SUBCASE("deformable to b0") {
        const CorrectionResult res = correct_to_b0(dwi, CorrectMode::DeformableToB0);
        CHECK(mean_abs_diff(res.corrected.images, dwi.images) < 1e-2);
    }
    SUBCASE("sequential") {
        const CorrectionResult res = correct_sequential(dwi);
        CHECK(mean_abs_diff(res.corrected.images, dwi.images) < 1e-2);
    }
}

TEST_CASE("correction to b0 improves lung mask overlap on a moving phantom") {
    PhantomSpec spec;
    spec.width = 64;
    spec.height = 64;
    spec.motion_max_px = 4.0;
    spec.seed = 2;
    auto [static_case, gt] = make_phantom(spec);
    auto [moving_case, fields] = apply_motion(static_case, spec);

    const double pre = mask_alignment_score(moving_case.lung_masks);
    const CorrectionResult res = correct_to_b0(moving_case, CorrectMode::DeformableToB0);
    const double post = mask_alignment_score(moving_case.lung_masks, res.deformations);
    CHECK(post >= pre);
}

TEST_CASE("sequential correction recovers cumulative drift") {
    PhantomSpec spec;
    spec.width = 64;
    spec.height = 64;
    auto [dwi, gt] = make_phantom(spec);

    DwiCase drifted = dwi;
    for (int i = 1; i < 6; ++i) {
        DeformationField shift(64, 64);
        shift.x.fill(static_cast<double>(i)); // 1 px per image of accumulated drift
        drifted.images[i] = warp_image(dwi.images[i], shift);
    }
    const CorrectionResult res = correct_sequential(drifted);
    // interior displacement recovered for the last image should be ~+5 px
    const DeformationField& last = res.deformations.back();
    double mean = 0.0;
    long long n = 0;
    for (int y = 16; y < 48; ++y)
        for (int x = 16; x < 48; ++x) {
            mean += last.x(x, y);
            ++n;
        }
    mean /= n;
    CHECK(std::abs(mean - 5.0) < 1.0);
}

TEST_CASE("iterative fit-register equals the direct fit on a static phantom") {
    PhantomSpec spec;
    spec.width = 48;
    spec.height = 48;
    auto [dwi, gt] = make_phantom(spec);

    CHECK_THROWS_AS(iterative_fit_register(dwi, 0), ValidationError);

    const IterativeResult res = iterative_fit_register(dwi, 3);
    const IvimMaps direct = fit_map(dwi, nullptr);
    double worst = 0.0;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            worst = std::max(worst, std::abs(res.maps.D(x, y) - direct.D(x, y)) / direct.D(x, y));
            worst = std::max(worst, std::abs(res.maps.f(x, y) - direct.f(x, y)) / direct.f(x, y));
        }
    CHECK(worst < 0.005);
    CHECK(res.fit_terms.size() == 3);
}

TEST_CASE("iterative rounds reduce the fit term on a moving phantom") {
    PhantomSpec spec;
    spec.width = 48;
    spec.height = 48;
    spec.motion_max_px = 3.0;
    spec.seed = 4;
    auto [static_case, gt] = make_phantom(spec);
    auto [moving_case, fields] = apply_motion(static_case, spec);

    const IterativeResult res = iterative_fit_register(moving_case, 3);
    REQUIRE(res.fit_terms.size() == 3);
    CHECK(res.fit_terms[2] <= res.fit_terms[0]);
}

TEST_CASE("affine transform validation") {
    AffineTransform t;
    CHECK_NOTHROW(t.validate());
    t.a00 = 0.0;
    t.a11 = 0.0; // singular
    CHECK_THROWS_AS(t.validate(), ValidationError);
}

} // TEST_SUITE
