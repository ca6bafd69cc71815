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
#include "ivim/loss.hpp"

#include <cmath>

#include "ivim/parallel.hpp"
#include "ivim/warp.hpp"

namespace ivim {

namespace {

constexpr double kNccVarianceEps = 1e-5;

std::vector<double> wser_weights(const BValueSchedule& schedule) {
    std::vector<double> w(schedule.values.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::log(schedule.values[i] + 1.0) + 1.0;
    return w;
}

void check_stacks(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                  const BValueSchedule& schedule, int unknowns) {
    if (warped.size() != recon.size() || warped.size() != schedule.values.size())
        throw ShapeError("wser_loss: stack/schedule sizes differ");
    const int n = static_cast<int>(warped.size());
    if (n <= unknowns + 1)
        throw DegenerateInputError("wser_loss: not enough b-values for the degrees of freedom");
    for (int i = 0; i < n; ++i) {
        require_same_shape(warped[i], warped[0], "wser_loss");
        require_same_shape(recon[i], warped[0], "wser_loss");
    }
}

double stack_mean(const std::vector<ImageD>& stack) {
    const int h = stack[0].height, w = stack[0].width;
    double total = par::sum_rows(h, [&](int y) {
        double s = 0.0;
        for (const ImageD& plane : stack)
            for (int x = 0; x < w; ++x) s += plane(x, y);
        return s;
    });
    return total / (static_cast<double>(stack.size()) * w * h);
}

/// Truncated separable window sum (radius r on each side, clipped to the
/// image). Every output value is accumulated in a fixed order, so the
/// result does not depend on the thread count.
ImageD box_sum(const ImageD& src, int radius) {
    const int w = src.width, h = src.height;
    ImageD tmp(w, h), out(w, h);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const int lo = std::max(0, x - radius), hi = std::min(w - 1, x + radius);
            double s = 0.0;
            for (int xx = lo; xx <= hi; ++xx) s += src(xx, y);
            tmp(x, y) = s;
        }
    });
    par::for_rows(h, [&](int y) {
        const int lo = std::max(0, y - radius), hi = std::min(h - 1, y + radius);
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int yy = lo; yy <= hi; ++yy) s += tmp(x, yy);
            out(x, y) = s;
        }
    });
    return out;
}

inline double window_count(int x, int y, int w, int h, int radius) {
    const int nx = std::min(w - 1, x + radius) - std::max(0, x - radius) + 1;
    const int ny = std::min(h - 1, y + radius) - std::max(0, y - radius) + 1;
    return static_cast<double>(nx) * ny;
}

} // namespace

void LossConfig::validate() const {
    if (alpha1 < 0.0 || alpha2 < 0.0 || alpha3 < 0.0)
        throw ConfigError("loss weights must be non-negative");
    if (alpha1 == 0.0 && alpha2 == 0.0 && alpha3 == 0.0)
        throw ConfigError("at least one loss weight must be positive");
    if (ncc_window < 3 || ncc_window % 2 == 0) throw ConfigError("ncc_window must be odd and >= 3");
    if (wser_unknowns < 1) throw ConfigError("wser_unknowns must be >= 1");
}

ImageD wser_map(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                const BValueSchedule& schedule, int unknowns) {
    check_stacks(warped, recon, schedule, unknowns);
    const int n = static_cast<int>(warped.size());
    const int w = warped[0].width, h = warped[0].height;
    const std::vector<double> wi = wser_weights(schedule);
    double w_sum = 0.0;
    for (double v : wi) w_sum += v;
    const double dof = 1.0 / (n - unknowns - 1);

    ImageD out(w, h);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double q = 0.0;
            for (int i = 0; i < n; ++i) {
                const double r = warped[i](x, y) - recon[i](x, y);
                q += wi[i] * r * r;
            }
            out(x, y) = std::sqrt(q / w_sum * dof);
        }
    });
    return out;
}

double wser_loss(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                 const BValueSchedule& schedule, int unknowns) {
    return wser_loss_backward(warped, recon, schedule, unknowns, nullptr, nullptr);
}

double wser_loss_backward(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                          const BValueSchedule& schedule, int unknowns,
                          std::vector<ImageD>* d_warped, std::vector<ImageD>* d_recon) {
    check_stacks(warped, recon, schedule, unknowns);
    const int n = static_cast<int>(warped.size());
    const int w = warped[0].width, h = warped[0].height;
    const double npix = static_cast<double>(w) * h;

    const ImageD map = wser_map(warped, recon, schedule, unknowns);
    double map_sum = par::sum_rows(h, [&](int y) {
        double s = 0.0;
        for (int x = 0; x < w; ++x) s += map(x, y);
        return s;
    });
    const double mean_wser = map_sum / npix;
    const double mean_intensity = stack_mean(warped);
    if (mean_intensity == 0.0)
        throw DegenerateInputError("wser_loss: zero mean intensity in the warped stack");
    const double loss = mean_wser / mean_intensity;

    if (!d_warped && !d_recon) return loss;

    const std::vector<double> wi = wser_weights(schedule);
    double w_sum = 0.0;
    for (double v : wi) w_sum += v;
    const double dof = 1.0 / (n - unknowns - 1);

    if (d_warped) d_warped->assign(n, ImageD(w, h));
    if (d_recon) d_recon->assign(n, ImageD(w, h));

    // d loss / d r_i(p) through the per-pixel sqrt; the sqrt subgradient at
    // an exact zero is taken as 0. The mean-intensity normalizer also
    // depends on the warped stack: d loss / d warped_i(p) gains the
    // constant -loss / (mean_intensity * planes * |Omega|).
    const double norm_term = -loss / (mean_intensity * n * npix);
    for (int i = 0; i < n; ++i) {
        par::for_rows(h, [&](int y) {
            for (int x = 0; x < w; ++x) {
                const double wser = map(x, y);
                double g = 0.0;
                if (wser > 0.0) {
                    const double r = warped[i](x, y) - recon[i](x, y);
                    g = dof * wi[i] * r / (w_sum * wser) / npix / mean_intensity;
                }
                if (d_warped) (*d_warped)[i](x, y) = g + norm_term;
                if (d_recon) (*d_recon)[i](x, y) = -g;
            }
        });
    }
    return loss;
}

double smooth_loss(const std::vector<VelocityField>& velocities) {
    return smooth_loss_backward(velocities, nullptr);
}

double smooth_loss_backward(const std::vector<VelocityField>& velocities,
                            std::vector<VectorField2D>* d_velocities) {
    if (velocities.empty()) throw ValidationError("smooth_loss: empty field list");
    const int w = velocities[0].width(), h = velocities[0].height();
    const double scale = 1.0 / (static_cast<double>(velocities.size()) * w * h);

    if (d_velocities) d_velocities->assign(velocities.size(), VectorField2D(w, h));

    double total = 0.0;
    for (std::size_t i = 0; i < velocities.size(); ++i) {
        if (!velocities[i].x.same_shape(velocities[0].x))
            throw ShapeError("smooth_loss: field shapes differ");
        ImageD gxx, gxy, gyx, gyy;
        spatial_gradient(velocities[i].x, gxx, gxy);
        spatial_gradient(velocities[i].y, gyx, gyy);
        total += par::sum_rows(h, [&](int y) {
            double s = 0.0;
            for (int x = 0; x < w; ++x)
                s += gxx(x, y) * gxx(x, y) + gxy(x, y) * gxy(x, y) + gyx(x, y) * gyx(x, y) +
                     gyy(x, y) * gyy(x, y);
            return s;
        });
        if (d_velocities) {
            auto scale_grad = [&](ImageD& g) {
                par::for_rows(h, [&](int y) {
                    for (int x = 0; x < w; ++x) g(x, y) *= 2.0 * scale;
                });
            };
            scale_grad(gxx);
            scale_grad(gxy);
            scale_grad(gyx);
            scale_grad(gyy);
            spatial_gradient_adjoint(gxx, gxy, (*d_velocities)[i].x);
            spatial_gradient_adjoint(gyx, gyy, (*d_velocities)[i].y);
        }
    }
    return total * scale;
}

double ncc_loss(const ImageD& fixed, const std::vector<ImageD>& warped, int window) {
    return ncc_loss_backward(fixed, warped, window, nullptr);
}

namespace {

double ncc_loss_impl(const ImageD& fixed, const std::vector<ImageD>& warped, int window,
                     std::vector<ImageD>* d_warped, bool squared);

} // namespace

double ncc_loss_backward(const ImageD& fixed, const std::vector<ImageD>& warped, int window,
                         std::vector<ImageD>* d_warped) {
    return ncc_loss_impl(fixed, warped, window, d_warped, false);
}

double ncc_squared_loss(const ImageD& fixed, const std::vector<ImageD>& warped, int window) {
    return ncc_loss_impl(fixed, warped, window, nullptr, true);
}

double ncc_squared_loss_backward(const ImageD& fixed, const std::vector<ImageD>& warped, int window,
                                 std::vector<ImageD>* d_warped) {
    return ncc_loss_impl(fixed, warped, window, d_warped, true);
}

namespace {

double ncc_loss_impl(const ImageD& fixed, const std::vector<ImageD>& warped, int window,
                     std::vector<ImageD>* d_warped, bool squared) {
    if (window < 3 || window % 2 == 0) throw ValidationError("ncc_loss: window must be odd and >= 3");
    if (warped.empty()) throw ValidationError("ncc_loss: empty image list");
    const int w = fixed.width, h = fixed.height;
    const int radius = window / 2;
    const double npix = static_cast<double>(w) * h;
    const double img_scale = 1.0 / (static_cast<double>(warped.size()) * npix);

    ImageD fixed_sq(w, h);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) fixed_sq(x, y) = fixed(x, y) * fixed(x, y);
    });
    const ImageD s_i = box_sum(fixed, radius);
    const ImageD s_ii = box_sum(fixed_sq, radius);

    if (d_warped) d_warped->assign(warped.size(), ImageD(w, h));

    double ncc_sum = 0.0;
    for (std::size_t k = 0; k < warped.size(); ++k) {
        const ImageD& J = warped[k];
        require_same_shape(fixed, J, "ncc_loss");
        ImageD jj(w, h), ij(w, h);
        par::for_rows(h, [&](int y) {
            for (int x = 0; x < w; ++x) {
                jj(x, y) = J(x, y) * J(x, y);
                ij(x, y) = fixed(x, y) * J(x, y);
            }
        });
        const ImageD s_j = box_sum(J, radius);
        const ImageD s_jj = box_sum(jj, radius);
        const ImageD s_ij = box_sum(ij, radius);

        // Per-window NCC plus the coefficient maps of the gradient gather
        // (A = 1/denom around the fixed image, B = the variance term).
        ImageD coef_a(w, h), coef_aui(w, h), coef_b(w, h), coef_buj(w, h);
        ncc_sum += par::sum_rows(h, [&](int y) {
            double row = 0.0;
            for (int x = 0; x < w; ++x) {
                const double n = window_count(x, y, w, h, radius);
                const double u_i = s_i(x, y) / n;
                const double u_j = s_j(x, y) / n;
                const double cross = s_ij(x, y) - s_i(x, y) * s_j(x, y) / n;
                const double var_i = std::max(0.0, s_ii(x, y) - s_i(x, y) * s_i(x, y) / n);
                const double var_j = std::max(0.0, s_jj(x, y) - s_j(x, y) * s_j(x, y) / n);
                const double prod = var_i * var_j;
                const bool floored = prod < kNccVarianceEps;
                const double denom = std::sqrt(floored ? kNccVarianceEps : prod);
                const double cc = cross / denom;
                row += squared ? cc * cc : cc;
                if (d_warped) {
                    const double chain = squared ? 2.0 * cc : 1.0;
                    const double a = chain / denom;
                    const double b =
                        floored ? 0.0 : -chain * cross * var_i / (denom * denom * denom);
                    coef_a(x, y) = a;
                    coef_aui(x, y) = a * u_i;
                    coef_b(x, y) = b;
                    coef_buj(x, y) = b * u_j;
                }
            }
            return row;
        });

        if (d_warped) {
            // q sits in the window of p exactly when p sits in the window
            // of q, so the sum over containing windows is another box sum.
            const ImageD ba = box_sum(coef_a, radius);
            const ImageD baui = box_sum(coef_aui, radius);
            const ImageD bb = box_sum(coef_b, radius);
            const ImageD bbuj = box_sum(coef_buj, radius);
            ImageD& dj = (*d_warped)[k];
            par::for_rows(h, [&](int y) {
                for (int x = 0; x < w; ++x) {
                    const double g = fixed(x, y) * ba(x, y) - baui(x, y) + J(x, y) * bb(x, y) -
                                     bbuj(x, y);
                    dj(x, y) = -img_scale * g;
                }
            });
        }
    }
    return 1.0 - ncc_sum * img_scale;
}

} // namespace

LossBreakdown composite_loss(const DwiCase& dwi, const IvimMaps& maps,
                             const std::vector<VelocityField>& velocities, const LossConfig& config,
                             int svf_steps) {
    config.validate();
    if (static_cast<int>(velocities.size()) != dwi.num_bvalues() - 1)
        throw ShapeError("composite_loss: one velocity field required per non-reference image");

    const std::vector<ImageD>& observed = dwi.images;
    std::vector<ImageD> warped;
    warped.reserve(observed.size());
    warped.push_back(observed[0]);
    for (std::size_t i = 0; i < velocities.size(); ++i) {
        const DeformationField phi = integrate_svf(velocities[i], svf_steps);
        warped.push_back(warp_image(observed[i + 1], phi));
    }
    const std::vector<ImageD> recon = reconstruct_series(maps, dwi.schedule);

    LossBreakdown out;
    out.fit = wser_loss(warped, recon, dwi.schedule, config.wser_unknowns);
    out.smooth = smooth_loss(velocities);
    out.sim = ncc_loss(warped[0], {warped.begin() + 1, warped.end()}, config.ncc_window);
    out.total = config.alpha1 * out.fit + config.alpha2 * out.smooth + config.alpha3 * out.sim;
    return out;
}

} // namespace ivim
