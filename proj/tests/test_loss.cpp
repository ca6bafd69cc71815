#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ivim/loss.hpp"
#include "ivim/phantom.hpp"
#include "ivim/rng.hpp"
#include "ivim/warp.hpp"

using namespace ivim;
using ivim::testing::rel_err;
using ivim::testing::smooth_random_field;
using ivim::testing::smooth_random_image;

namespace {

std::vector<ImageD> random_stack(Rng& rng, int n, int w, int h, double lo, double hi) {
    std::vector<ImageD> s;
    for (int i = 0; i < n; ++i) s.push_back(smooth_random_image(rng, w, h, 1.5, lo, hi));
    return s;
}

} // namespace

TEST_SUITE("loss") {

TEST_CASE("wser is zero at zero residual") {
    Rng rng(41);
    const BValueSchedule sched = BValueSchedule::standard();
    const auto stack = random_stack(rng, 6, 12, 10, 0.2, 1.0);
    CHECK(wser_loss(stack, stack, sched, 3) == 0.0);
}

TEST_CASE("single-pixel wser example") {
    // residuals (0, .01, -.01, .02, 0, .01) against the default schedule,
    // pre-normalization value 8.181e-3 with weights ln(b+1)+1.
    const BValueSchedule sched = BValueSchedule::standard();
    const double residuals[6] = {0.0, 0.01, -0.01, 0.02, 0.0, 0.01};
    std::vector<ImageD> recon(6, ImageD(1, 1, 1.0));
    std::vector<ImageD> warped;
    for (int i = 0; i < 6; ++i) warped.push_back(ImageD(1, 1, 1.0 + residuals[i]));
    const ImageD map = wser_map(warped, recon, sched, 3);
    CHECK(map(0, 0) == doctest::Approx(8.181e-3).epsilon(2e-4));
    CHECK(std::abs(map(0, 0) - 8.1811e-3) < 1e-6);
}

TEST_CASE("wser is invariant to global intensity scaling") {
    Rng rng(43);
    const BValueSchedule sched = BValueSchedule::standard();
    const auto warped = random_stack(rng, 6, 11, 9, 0.3, 1.2);
    const auto recon = random_stack(rng, 6, 11, 9, 0.3, 1.2);
    const double base = wser_loss(warped, recon, sched, 3);
    for (double c : {3.7, 0.021, 250.0}) {
        auto w2 = warped, r2 = recon;
        for (auto& img : w2)
            for (double& v : img.data) v *= c;
        for (auto& img : r2)
            for (double& v : img.data) v *= c;
        CHECK(rel_err(wser_loss(w2, r2, sched, 3), base) < 1e-12);
    }
}

TEST_CASE("wser rejects too few degrees of freedom and zero intensity") {
    const BValueSchedule sched4({0, 50, 100, 200});
    std::vector<ImageD> stack(4, ImageD(2, 2, 1.0));
    CHECK_THROWS_AS(wser_loss(stack, stack, sched4, 3), DegenerateInputError);

    const BValueSchedule sched = BValueSchedule::standard();
    std::vector<ImageD> zeros(6, ImageD(2, 2, 0.0));
    std::vector<ImageD> recon(6, ImageD(2, 2, 1.0));
    CHECK_THROWS_AS(wser_loss(zeros, recon, sched, 3), DegenerateInputError);
}

TEST_CASE("smooth loss: zeros, constants, unit ramp") {
    std::vector<VelocityField> fields(2, VelocityField(13, 11));
    CHECK(smooth_loss(fields) == 0.0);
    fields[0].x.fill(4.2);
    fields[1].y.fill(-1.7);
    CHECK(smooth_loss(fields) == 0.0);

    VelocityField ramp(13, 11);
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 13; ++x) ramp.x(x, y) = x;
    CHECK(smooth_loss({ramp}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ncc loss identities") {
    Rng rng(47);
    const ImageD fixed = smooth_random_image(rng, 32, 30, 2.0, 0.1, 1.1);
    SUBCASE("identical images score zero") {
        CHECK(ncc_loss(fixed, {fixed, fixed}, 9) < 1e-9);
    }
    SUBCASE("anti-correlated images score two") {
        ImageD anti(32, 30);
        for (std::size_t i = 0; i < fixed.data.size(); ++i) anti.data[i] = 2.0 - fixed.data[i];
        CHECK(ncc_loss(fixed, {anti}, 9) == doctest::Approx(2.0).epsilon(1e-9));
    }
    SUBCASE("independent white noise scores about one") {
        Rng noise(101);
        ImageD a(128, 128), b(128, 128);
        for (double& v : a.data) v = noise.uniform();
        for (double& v : b.data) v = noise.uniform();
        CHECK(std::abs(ncc_loss(a, {b}, 9) - 1.0) < 0.05);
    }
}

TEST_CASE("loss term backward passes match finite differences") {
    Rng rng(53);
    const int w = 10, h = 9;
    const BValueSchedule sched = BValueSchedule::standard();

    SUBCASE("wser") {
        const auto warped = random_stack(rng, 6, w, h, 0.3, 1.2);
        const auto recon = random_stack(rng, 6, w, h, 0.3, 1.2);
        std::vector<ImageD> dw, dr;
        wser_loss_backward(warped, recon, sched, 3, &dw, &dr);
        const double hs = 1e-6;
        for (int i : {0, 2, 5})
            for (int k = 0; k < 6; ++k) {
                const int x = (k * 3) % w, y = (k * 2) % h;
                auto wp = warped, wm = warped;
                wp[i](x, y) += hs;
                wm[i](x, y) -= hs;
                const double fd =
                    (wser_loss(wp, recon, sched, 3) - wser_loss(wm, recon, sched, 3)) / (2 * hs);
                CHECK(rel_err(dw[i](x, y), fd, 1e-3) < 1e-4);
                auto rp = recon, rm = recon;
                rp[i](x, y) += hs;
                rm[i](x, y) -= hs;
                const double fdr =
                    (wser_loss(warped, rp, sched, 3) - wser_loss(warped, rm, sched, 3)) / (2 * hs);
                CHECK(rel_err(dr[i](x, y), fdr, 1e-3) < 1e-4);
            }
    }

    SUBCASE("smooth") {
        std::vector<VelocityField> fields{smooth_random_field(rng, w, h, 2.0, 1.5),
                                          smooth_random_field(rng, w, h, 2.0, 1.5)};
        std::vector<VectorField2D> grad;
        smooth_loss_backward(fields, &grad);
        const double hs = 1e-6;
        for (int k = 0; k < 8; ++k) {
            const int x = (k * 3 + 1) % w, y = (k * 2 + 1) % h, i = k % 2;
            auto fp = fields, fm = fields;
            fp[i].x(x, y) += hs;
            fm[i].x(x, y) -= hs;
            const double fd = (smooth_loss(fp) - smooth_loss(fm)) / (2 * hs);
            CHECK(rel_err(grad[i].x(x, y), fd, 1e-3) < 1e-4);
        }
    }

    SUBCASE("ncc") {
        const ImageD fixed = smooth_random_image(rng, w, h, 1.5, 0.2, 1.4);
        std::vector<ImageD> warped{smooth_random_image(rng, w, h, 1.5, 0.2, 1.4),
                                   smooth_random_image(rng, w, h, 1.5, 0.2, 1.4)};
        std::vector<ImageD> grad;
        ncc_loss_backward(fixed, warped, 5, &grad);
        const double hs = 1e-6;
        for (int k = 0; k < 10; ++k) {
            const int x = (k * 3 + 1) % w, y = (k * 2 + 1) % h, i = k % 2;
            auto wp = warped, wm = warped;
            wp[i](x, y) += hs;
            wm[i](x, y) -= hs;
            const double fd = (ncc_loss(fixed, wp, 5) - ncc_loss(fixed, wm, 5)) / (2 * hs);
            CHECK(rel_err(grad[i](x, y), fd, 1e-3) < 1e-4);
        }
    }
}

TEST_CASE("composite loss breakdown and presets") {
    PhantomSpec spec;
    spec.width = 24;
    spec.height = 24;
    auto [dwi, gt] = make_phantom(spec);

    std::vector<VelocityField> velocities(5, VelocityField(24, 24));
    LossConfig config; // alpha1=1, alpha2=0.015, alpha3=0.1

    SUBCASE("perfect maps and zero motion give an exactly zero fit term") {
        const LossBreakdown l = composite_loss(dwi, gt.maps, velocities, config);
        CHECK(l.fit == 0.0);
        CHECK(l.smooth == 0.0);
        CHECK(l.sim > 0.0); // raw-data NCC between different b-value images
        CHECK(l.total ==
              doctest::Approx(config.alpha1 * l.fit + config.alpha2 * l.smooth +
                              config.alpha3 * l.sim)
                  .epsilon(1e-12));
    }
    SUBCASE("alphas (1,0,0) reduce the total to the fit term") {
        // at least one alpha must be positive; zero out the others
        LossConfig fit_only;
        fit_only.alpha1 = 1.0;
        fit_only.alpha2 = 0.0;
        fit_only.alpha3 = 0.0;
        Rng rng(59);
        std::vector<VelocityField> vels;
        for (int i = 0; i < 5; ++i) vels.push_back(smooth_random_field(rng, 24, 24, 3.0, 1.0));
        const LossBreakdown l = composite_loss(dwi, gt.maps, vels, fit_only);
        CHECK(l.total == l.fit);
    }
    SUBCASE("group-1 preset is a valid configuration") {
        LossConfig preset;
        preset.alpha1 = 10.0;
        preset.alpha2 = 0.015;
        preset.alpha3 = 0.1;
        CHECK_NOTHROW(preset.validate());
        const LossBreakdown l = composite_loss(dwi, gt.maps, velocities, preset);
        CHECK(l.total == doctest::Approx(10.0 * l.fit + 0.015 * l.smooth + 0.1 * l.sim).epsilon(1e-12));
    }
    SUBCASE("all terms are non-negative on random states") {
        Rng rng(61);
        std::vector<VelocityField> vels;
        for (int i = 0; i < 5; ++i) vels.push_back(smooth_random_field(rng, 24, 24, 3.0, 1.5));
        IvimMaps maps(24, 24);
        maps.S0 = dwi.images[0];
        const LossBreakdown l = composite_loss(dwi, maps, vels, config);
        CHECK(l.fit >= 0.0);
        CHECK(l.smooth >= 0.0);
        CHECK(l.sim >= 0.0);
    }
}

TEST_CASE("loss config validation") {
    LossConfig c;
    c.alpha1 = c.alpha2 = c.alpha3 = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LossConfig();
    c.ncc_window = 8;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = LossConfig();
    c.alpha2 = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

} // TEST_SUITE
