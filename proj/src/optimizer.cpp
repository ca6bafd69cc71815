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
#include "ivim/optimizer.hpp"

#include <cmath>
#include <string>

#include "ivim/fit.hpp"
#include "ivim/parallel.hpp"

namespace ivim {

void OptConfig::validate() const {
    if (learning_rate <= 0.0 || min_learning_rate <= 0.0)
        throw ConfigError("learning rates must be positive");
    if (factor <= 0.0 || factor >= 1.0) throw ConfigError("plateau factor must lie in (0, 1)");
    if (max_iterations < 1 || patience < 1) throw ConfigError("iteration counts must be positive");
    if (svf_steps < 1) throw ConfigError("svf_steps must be >= 1");
    if (grad_smooth_sigma < 0.0) throw ConfigError("grad_smooth_sigma must be >= 0");
    loss.validate();
}

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor, double min_lr, double tol,
                                   double initial_loss)
    : lr_(lr), patience_(patience), factor_(factor), min_lr_(min_lr), tol_(tol), best_(initial_loss) {}

double PlateauScheduler::step(double loss) {
    if (loss < best_ - tol_) {
        best_ = loss;
        bad_ = 0;
    } else if (++bad_ >= patience_) {
        if (lr_ <= min_lr_) exhausted_ = true;
        lr_ = std::max(lr_ * factor_, min_lr_);
        bad_ = 0;
    }
    return lr_;
}

OptState make_initial_state(const DwiCase& dwi, const OptConfig& config, const ParamBounds& bounds) {
    const int w = dwi.width(), h = dwi.height();
    OptState state;
    if (config.init == InitMode::ClassicalFit) {
        const IvimMaps warm = fit_map(dwi, dwi.mask ? &*dwi.mask : nullptr, bounds);
        state.latent_D = bound_inverse(warm.D, bounds.D);
        state.latent_Dstar = bound_inverse(warm.Dstar, bounds.Dstar);
        state.latent_f = bound_inverse(warm.f, bounds.f);
    } else {
        state.latent_D = ImageD(w, h);
        state.latent_Dstar = ImageD(w, h);
        state.latent_f = ImageD(w, h);
    }
    state.velocities.assign(dwi.num_bvalues() - 1, VelocityField(w, h));
    return state;
}

LossBreakdown compute_loss_and_gradients(const DwiCase& dwi, const OptState& state,
                                         const LossConfig& config, const ParamBounds& bounds,
                                         int svf_steps, CaseGradients* grads) {
    config.validate();
    const int w = dwi.width(), h = dwi.height();
    const int nb = dwi.num_bvalues();
    if (static_cast<int>(state.velocities.size()) != nb - 1)
        throw ShapeError("compute_loss_and_gradients: velocity count mismatch");

    const std::vector<ImageD>& observed = dwi.images;

    // Maps from latents; S0 is the observed b=0 plane, never optimized.
    IvimMaps maps(w, h, bounds);
    maps.D = bound_transform(state.latent_D, bounds.D);
    maps.Dstar = bound_transform(state.latent_Dstar, bounds.Dstar);
    maps.f = bound_transform(state.latent_f, bounds.f);
    maps.S0 = observed[0];

    // Warp each non-reference plane by its integrated velocity.
    std::vector<SvfTape> tapes(nb - 1);
    std::vector<DeformationField> phis(nb - 1);
    std::vector<ImageD> warped;
    warped.reserve(nb);
    warped.push_back(observed[0]);
    for (int i = 1; i < nb; ++i) {
        phis[i - 1] = integrate_svf_recorded(state.velocities[i - 1], svf_steps, tapes[i - 1]);
        warped.push_back(warp_image(observed[i], phis[i - 1]));
    }

    const std::vector<ImageD> recon = reconstruct_series(maps, dwi.schedule);

    std::vector<ImageD> d_warped_fit, d_recon, d_ncc;
    std::vector<VectorField2D> d_vel_smooth;
    LossBreakdown out;
    out.fit = wser_loss_backward(warped, recon, dwi.schedule, config.wser_unknowns,
                                 grads ? &d_warped_fit : nullptr, grads ? &d_recon : nullptr);
    out.smooth = smooth_loss_backward(state.velocities, grads ? &d_vel_smooth : nullptr);
    out.sim = ncc_loss_backward(warped[0], {warped.begin() + 1, warped.end()}, config.ncc_window,
                                grads ? &d_ncc : nullptr);
    out.total = config.alpha1 * out.fit + config.alpha2 * out.smooth + config.alpha3 * out.sim;

    if (!grads) return out;

    // Latent gradients: chain d(loss)/d(recon) through the signal model and
    // the bound transform. Plane 0 contributes nothing (derivatives vanish
    // at b = 0).
    grads->d_latent_D = ImageD(w, h);
    grads->d_latent_Dstar = ImageD(w, h);
    grads->d_latent_f = ImageD(w, h);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const IvimParams p = maps.at(x, y);
            double gd = 0.0, gds = 0.0, gf = 0.0;
            for (int i = 0; i < nb; ++i) {
                const double b = dwi.schedule.values[i];
                IvimSignalDerivatives der;
                ivim_signal_with_derivatives(p, b, der);
                const double up = config.alpha1 * d_recon[i](x, y);
                gd += up * der.dD;
                gds += up * der.dDstar;
                gf += up * der.df;
            }
            grads->d_latent_D(x, y) = gd * bound_transform_derivative(state.latent_D(x, y), bounds.D);
            grads->d_latent_Dstar(x, y) =
                gds * bound_transform_derivative(state.latent_Dstar(x, y), bounds.Dstar);
            grads->d_latent_f(x, y) = gf * bound_transform_derivative(state.latent_f(x, y), bounds.f);
        }
    });

    // Velocity gradients: fit + similarity terms through the warp and the
    // squaring tape, plus the direct smoothness term.
    grads->d_velocities.assign(nb - 1, VectorField2D(w, h));
    for (int i = 1; i < nb; ++i) {
        ImageD d_warped(w, h);
        par::for_rows(h, [&](int y) {
            for (int x = 0; x < w; ++x)
                d_warped(x, y) =
                    config.alpha1 * d_warped_fit[i](x, y) + config.alpha3 * d_ncc[i - 1](x, y);
        });
        VectorField2D d_phi;
        warp_image_backward(observed[i], phis[i - 1], d_warped, nullptr, &d_phi);
        VectorField2D d_v = integrate_svf_backward(tapes[i - 1], d_phi);
        VectorField2D& dst = grads->d_velocities[i - 1];
        par::for_rows(h, [&](int y) {
            for (int x = 0; x < w; ++x) {
                dst.x(x, y) = d_v.x(x, y) + config.alpha2 * d_vel_smooth[i - 1].x(x, y);
                dst.y(x, y) = d_v.y(x, y) + config.alpha2 * d_vel_smooth[i - 1].y(x, y);
            }
        });
    }
    return out;
}

namespace {

struct AdamMoments {
    ImageD m, v;
    AdamMoments() = default;
    AdamMoments(int w, int h) : m(w, h), v(w, h) {}
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update(ImageD& param, const ImageD& grad, AdamMoments& mom, double lr, double bias1,
                 double bias2) {
    par::for_rows(param.height, [&](int y) {
        for (int x = 0; x < param.width; ++x) {
            const double g = grad(x, y);
            mom.m(x, y) = kBeta1 * mom.m(x, y) + (1.0 - kBeta1) * g;
            mom.v(x, y) = kBeta2 * mom.v(x, y) + (1.0 - kBeta2) * g * g;
            const double mhat = mom.m(x, y) / bias1;
            const double vhat = mom.v(x, y) / bias2;
            param(x, y) -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
        }
    });
}

} // namespace

CaseResult optimize_case(const DwiCase& dwi, const OptConfig& config, const ParamBounds& bounds) {
    config.validate();
    bounds.validate();
    dwi.validate();
    if (!dwi.normalized_by)
        throw ValidationError("optimize_case: case must be normalized first (see normalize_case)");
    if (dwi.num_bvalues() < 5)
        throw ValidationError("optimize_case: at least 5 b-values required");

    const int w = dwi.width(), h = dwi.height();
    const int nv = dwi.num_bvalues() - 1;

    OptState state = make_initial_state(dwi, config, bounds);

    AdamMoments mom_d(w, h), mom_ds(w, h), mom_f(w, h);
    std::vector<AdamMoments> mom_vx(nv, AdamMoments(w, h)), mom_vy(nv, AdamMoments(w, h));

    CaseResult result;
    CaseGradients grads;

    LossBreakdown current = compute_loss_and_gradients(dwi, state, config.loss, bounds,
                                                       config.svf_steps, &grads);
    result.trace.push_back(current);
    OptState best_state = state;
    LossBreakdown best_loss = current;
    int best_iter = 0;

    PlateauScheduler sched(config.learning_rate, config.patience, config.factor,
                           config.min_learning_rate, config.improvement_tol, current.total);
    double lr = sched.rate();

    for (int t = 1; t <= config.max_iterations; ++t) {
        if (!std::isfinite(current.total))
            throw NumericalError("optimize_case: non-finite loss at iteration " +
                                 std::to_string(t - 1));

        if (config.grad_smooth_sigma > 0.0) {
            grads.d_latent_D = gaussian_blur(grads.d_latent_D, config.grad_smooth_sigma);
            grads.d_latent_Dstar = gaussian_blur(grads.d_latent_Dstar, config.grad_smooth_sigma);
            grads.d_latent_f = gaussian_blur(grads.d_latent_f, config.grad_smooth_sigma);
        }

        const double bias1 = 1.0 - std::pow(kBeta1, t);
        const double bias2 = 1.0 - std::pow(kBeta2, t);
        adam_update(state.latent_D, grads.d_latent_D, mom_d, lr, bias1, bias2);
        adam_update(state.latent_Dstar, grads.d_latent_Dstar, mom_ds, lr, bias1, bias2);
        adam_update(state.latent_f, grads.d_latent_f, mom_f, lr, bias1, bias2);
        for (int i = 0; i < nv; ++i) {
            adam_update(state.velocities[i].x, grads.d_velocities[i].x, mom_vx[i], lr, bias1, bias2);
            adam_update(state.velocities[i].y, grads.d_velocities[i].y, mom_vy[i], lr, bias1, bias2);
        }

        const bool last = t == config.max_iterations;
        current = compute_loss_and_gradients(dwi, state, config.loss, bounds, config.svf_steps,
                                             last ? nullptr : &grads);
        result.trace.push_back(current);
        if (current.total < best_loss.total) {
            best_loss = current;
            best_state = state;
            best_iter = t;
        }
        lr = sched.step(current.total);
        if (sched.exhausted()) break; // plateaued at the minimum rate
    }

    // Assemble the best iterate.
    result.best_iteration = best_iter;
    result.final_loss = best_loss;
    result.maps = IvimMaps(w, h, bounds);
    result.maps.D = bound_transform(best_state.latent_D, bounds.D);
    result.maps.Dstar = bound_transform(best_state.latent_Dstar, bounds.Dstar);
    result.maps.f = bound_transform(best_state.latent_f, bounds.f);
    result.maps.S0 = dwi.images[0];

    const std::vector<ImageD>& observed = dwi.images;
    result.corrected.reserve(dwi.num_bvalues());
    result.corrected.push_back(dwi.images[0]);
    result.deformations.reserve(nv);
    for (int i = 0; i < nv; ++i) {
        result.deformations.push_back(integrate_svf(best_state.velocities[i], config.svf_steps));
        result.corrected.push_back(warp_image(observed[i + 1], result.deformations[i]));
    }
    return result;
}

} // namespace ivim
