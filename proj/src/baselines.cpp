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
#include "ivim/baselines.hpp"

#include <array>
#include <cmath>

#include "ivim/loss.hpp"
#include "ivim/parallel.hpp"
#include "ivim/warp.hpp"

namespace ivim {

void AffineTransform::validate() const {
    for (double v : {a00, a01, a10, a11, tx, ty})
        if (!std::isfinite(v)) throw ValidationError("AffineTransform: non-finite entry");
    if (det() == 0.0) throw ValidationError("AffineTransform: singular linear part");
}

DeformationField AffineTransform::displacement_field(int w, int h) const {
    DeformationField phi(w, h);
    const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx, dy = y - cy;
            phi.x(x, y) = a00 * dx + a01 * dy + tx - dx;
            phi.y(x, y) = a10 * dx + a11 * dy + ty - dy;
        }
    });
    return phi;
}

void RegistrationConfig::validate() const {
    if (lambda < 0.0) throw ConfigError("registration lambda must be >= 0");
    if (levels < 1 || svf_levels < 1 || iterations < 1)
        throw ConfigError("registration budget must be positive");
    if (affine_rate <= 0.0 || svf_rate <= 0.0) throw ConfigError("registration rates must be positive");
    if (update_sigma < 0.0 || max_step_px <= 0.0) throw ConfigError("bad registration step settings");
    if (ncc_window < 3 || ncc_window % 2 == 0)
        throw ConfigError("registration ncc_window must be odd and >= 3");
    if (svf_steps < 1) throw ConfigError("svf_steps must be >= 1");
}

namespace {

std::vector<ImageD> make_pyramid(const ImageD& img, int levels) {
    std::vector<ImageD> pyr{img};
    for (int l = 1; l < levels; ++l) {
        const ImageD& prev = pyr.back();
        if (prev.width < 16 || prev.height < 16) break; // too coarse to be useful
        pyr.push_back(downsample2(prev));
    }
    return pyr;
}

struct Adam6 {
    std::array<double, 6> m{}, v{};
    int t = 0;
    void update(std::array<double, 6>& theta, const std::array<double, 6>& g, double lr) {
        ++t;
        const double b1 = 1.0 - std::pow(0.9, t), b2 = 1.0 - std::pow(0.999, t);
        for (int i = 0; i < 6; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            theta[i] -= lr * (m[i] / b1) / (std::sqrt(v[i] / b2) + 1e-8);
        }
    }
};

// Displacement of the normalized affine parameterization
// phi(p) = s * (M q + tau), q = (p - c) / s, on the given grid.
DeformationField affine_displacement(const std::array<double, 6>& theta, int w, int h) {
    DeformationField phi(w, h);
    const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
    const double s = 0.5 * std::max(w - 1, h - 1);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const double qx = (x - cx) / s, qy = (y - cy) / s;
            phi.x(x, y) = s * (theta[0] * qx + theta[1] * qy + theta[4]);
            phi.y(x, y) = s * (theta[2] * qx + theta[3] * qy + theta[5]);
        }
    });
    return phi;
}

} // namespace

AffineResult register_affine(const ImageD& fixed, const ImageD& moving,
                             const RegistrationConfig& config) {
    config.validate();
    require_same_shape(fixed, moving, "register_affine");

    const std::vector<ImageD> pyr_f = make_pyramid(fixed, config.levels);
    const std::vector<ImageD> pyr_m = make_pyramid(moving, config.levels);

    std::array<double, 6> theta{}; // m00 m01 m10 m11 taux tauy, identity at zero
    std::array<double, 6> best_theta = theta;
    double best_loss = 0.0;
    int last_improvement = 0;
    int fine_iters = 0;

    for (int level = static_cast<int>(pyr_f.size()) - 1; level >= 0; --level) {
        const ImageD& f = pyr_f[level];
        const ImageD& m = pyr_m[level];
        const int w = f.width, h = f.height;
        const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
        const double s = 0.5 * std::max(w - 1, h - 1);
        Adam6 adam;

        for (int it = 0; it < config.iterations; ++it) {
            const DeformationField phi = affine_displacement(theta, w, h);
            const ImageD warped = warp_image(m, phi);
            std::vector<ImageD> d_warped;
            const double loss =
                ncc_loss_backward(f, {warped}, config.ncc_window, &d_warped);
            // Loss values across pyramid levels are not comparable; the
            // best iterate is tracked at full resolution only.
            if (level == 0) {
                ++fine_iters;
                if (it == 0 || loss < best_loss - 1e-5) {
                    best_loss = loss;
                    best_theta = theta;
                    last_improvement = fine_iters;
                }
            }

            VectorField2D d_phi;
            warp_image_backward(m, phi, d_warped[0], nullptr, &d_phi);
            std::array<double, 6> g{};
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double qx = (x - cx) / s, qy = (y - cy) / s;
                    const double gx = d_phi.x(x, y) * s, gy = d_phi.y(x, y) * s;
                    g[0] += gx * qx;
                    g[1] += gx * qy;
                    g[2] += gy * qx;
                    g[3] += gy * qy;
                    g[4] += gx;
                    g[5] += gy;
                }
            adam.update(theta, g, config.affine_rate);
        }
    }

    AffineResult out;
    const double s = 0.5 * std::max(fixed.width - 1, fixed.height - 1);
    out.transform.a00 = 1.0 + best_theta[0];
    out.transform.a01 = best_theta[1];
    out.transform.a10 = best_theta[2];
    out.transform.a11 = 1.0 + best_theta[3];
    out.transform.tx = s * best_theta[4];
    out.transform.ty = s * best_theta[5];
    out.warped = warp_image(moving, affine_displacement(best_theta, fixed.width, fixed.height));
    out.final_loss = best_loss;
    out.converged = fine_iters - last_improvement >= config.iterations / 5;
    return out;
}

DeformableResult register_deformable(const ImageD& fixed, const ImageD& moving,
                                     const RegistrationConfig& config) {
    config.validate();
    require_same_shape(fixed, moving, "register_deformable");

    const std::vector<ImageD> pyr_f = make_pyramid(fixed, config.svf_levels);
    const std::vector<ImageD> pyr_m = make_pyramid(moving, config.svf_levels);

    VelocityField v(pyr_f.back().width, pyr_f.back().height);
    VelocityField best_v = v;
    double best_loss = 0.0;
    int last_improvement = 0, fine_iters = 0;

    for (int level = static_cast<int>(pyr_f.size()) - 1; level >= 0; --level) {
        const ImageD& f = pyr_f[level];
        const ImageD& m = pyr_m[level];
        const int w = f.width, h = f.height;
        if (v.width() != w || v.height() != h) {
            // Carry the coarse solution up: displacements double in pixels.
            VelocityField up(w, h);
            up.x = upsample_bilinear(v.x, w, h);
            up.y = upsample_bilinear(v.y, w, h);
            for (double& d : up.x.data) d *= 2.0;
            for (double& d : up.y.data) d *= 2.0;
            v = std::move(up);
        }

        for (int it = 0; it < config.iterations; ++it) {
            SvfTape tape;
            const DeformationField phi = integrate_svf_recorded(v, config.svf_steps, tape);
            const ImageD warped = warp_image(m, phi);
            std::vector<ImageD> d_warped;
            const double ncc = ncc_squared_loss_backward(f, {warped}, config.ncc_window, &d_warped);
            std::vector<VectorField2D> d_smooth;
            const double smooth = smooth_loss_backward({v}, &d_smooth);
            const double loss = ncc + config.lambda * smooth;
            if (level == 0) {
                ++fine_iters;
                if (it == 0 || loss < best_loss - 1e-5) {
                    best_loss = loss;
                    best_v = v;
                    last_improvement = fine_iters;
                }
            }

            VectorField2D d_phi;
            warp_image_backward(m, phi, d_warped[0], nullptr, &d_phi);
            VectorField2D d_v = integrate_svf_backward(tape, d_phi);

            // Smoothed-gradient descent with a per-pixel step cap. The NCC
            // velocity gradient is invariant to global intensity scaling,
            // so the rate has an absolute calibration. Smoothing the update
            // keeps the registrar from chasing pixel-level contrast
            // differences between b-value images.
            ImageD ux = gaussian_blur(d_v.x, config.update_sigma);
            ImageD uy = gaussian_blur(d_v.y, config.update_sigma);
            par::for_rows(h, [&](int y) {
                for (int x = 0; x < w; ++x) {
                    double sx = config.svf_rate * (ux(x, y) + config.lambda * d_smooth[0].x(x, y));
                    double sy = config.svf_rate * (uy(x, y) + config.lambda * d_smooth[0].y(x, y));
                    const double mag = std::hypot(sx, sy);
                    if (mag > config.max_step_px) {
                        sx *= config.max_step_px / mag;
                        sy *= config.max_step_px / mag;
                    }
                    v.x(x, y) -= sx;
                    v.y(x, y) -= sy;
                }
            });
        }
    }

    DeformableResult out;
    out.velocity = std::move(best_v);
    out.warped = warp_image(moving, integrate_svf(out.velocity, config.svf_steps));
    out.final_loss = best_loss;
    out.converged = fine_iters - last_improvement >= config.iterations / 5;
    return out;
}

CorrectionResult correct_to_b0(const DwiCase& dwi, CorrectMode mode,
                               const RegistrationConfig& config) {
    dwi.validate();
    if (dwi.num_bvalues() < 2) throw ValidationError("correct_to_b0: need at least 2 images");

    const std::vector<ImageD>& observed = dwi.images;
    CorrectionResult out;
    out.corrected = dwi;
    out.corrected.normalized_by = dwi.normalized_by;
    for (int i = 1; i < dwi.num_bvalues(); ++i) {
        DeformationField phi;
        ImageD warped;
        if (mode == CorrectMode::AffineToB0) {
            AffineResult reg = register_affine(observed[0], observed[i], config);
            phi = reg.transform.displacement_field(dwi.width(), dwi.height());
            warped = std::move(reg.warped);
        } else {
            DeformableResult reg = register_deformable(observed[0], observed[i], config);
            phi = integrate_svf(reg.velocity, config.svf_steps);
            warped = std::move(reg.warped);
        }
        out.corrected.images[i] = std::move(warped);
        out.deformations.push_back(std::move(phi));
    }
    return out;
}

CorrectionResult correct_sequential(const DwiCase& dwi, const RegistrationConfig& config) {
    dwi.validate();
    if (dwi.num_bvalues() < 2) throw ValidationError("correct_sequential: need at least 2 images");

    const std::vector<ImageD>& observed = dwi.images;
    CorrectionResult out;
    out.corrected = dwi;
    ImageD previous = observed[0]; // already in the reference frame
    for (int i = 1; i < dwi.num_bvalues(); ++i) {
        DeformableResult reg = register_deformable(previous, observed[i], config);
        out.deformations.push_back(integrate_svf(reg.velocity, config.svf_steps));
        out.corrected.images[i] = reg.warped;
        previous = std::move(reg.warped);
    }
    return out;
}

IterativeResult iterative_fit_register(const DwiCase& dwi, int rounds,
                                       const RegistrationConfig& config, const ParamBounds& bounds,
                                       const FitConfig& fit_config) {
    if (rounds < 1) throw ValidationError("iterative_fit_register: rounds must be >= 1");
    dwi.validate();

    const std::vector<ImageD>& observed = dwi.images;
    IterativeResult out;
    out.corrected = dwi;

    for (int round = 0; round < rounds; ++round) {
        out.maps = fit_map(out.corrected, out.corrected.mask ? &*out.corrected.mask : nullptr, bounds,
                           fit_config);
        const std::vector<ImageD> recon = reconstruct_series(out.maps, dwi.schedule);
        out.deformations.clear();
        for (int i = 1; i < dwi.num_bvalues(); ++i) {
            DeformableResult reg = register_deformable(recon[i], observed[i], config);
            out.deformations.push_back(integrate_svf(reg.velocity, config.svf_steps));
            out.corrected.images[i] = reg.warped;
        }
        out.fit_terms.push_back(
            wser_loss(out.corrected.images, recon, dwi.schedule, 3));
    }
    return out;
}

} // namespace ivim
