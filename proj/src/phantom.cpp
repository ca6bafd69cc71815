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
#include "ivim/phantom.hpp"

#include <cmath>

#include "ivim/rng.hpp"
#include "ivim/warp.hpp"

namespace ivim {

namespace {

void check_params_in_bounds(const IvimParams& p, const ParamBounds& b, const char* what) {
    if (p.D < b.D.min || p.D > b.D.max || p.f < b.f.min || p.f > b.f.max || p.Dstar < b.Dstar.min ||
        p.Dstar > b.Dstar.max || p.S0 < 0.0)
        throw ValidationError(std::string(what) + ": phantom parameters outside bounds");
}

double max_displacement(const DeformationField& phi) {
    double m = 0.0;
    for (std::size_t i = 0; i < phi.x.data.size(); ++i)
        m = std::max(m, std::hypot(phi.x.data[i], phi.y.data[i]));
    return m;
}

ImageF nn_warp_mask(const ImageF& mask, const DeformationField& phi) {
    const int w = mask.width, h = mask.height;
    ImageF out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int sx = std::clamp(static_cast<int>(std::lround(x + phi.x(x, y))), 0, w - 1);
            const int sy = std::clamp(static_cast<int>(std::lround(y + phi.y(x, y))), 0, h - 1);
            out(x, y) = mask(sx, sy);
        }
    return out;
}

} // namespace

void PhantomSpec::validate() const {
    schedule.validate();
    bounds.validate();
    if (width < 4 || height < 4) throw ValidationError("phantom grid must be at least 4x4");
    check_params_in_bounds(background, bounds, "background");
    if (roi_radius_x > 0.0 && roi_radius_y > 0.0) {
        check_params_in_bounds(roi, bounds, "roi");
        if (roi_f_ramp &&
            (roi_f_low < bounds.f.min || roi_f_high > bounds.f.max || roi_f_low > roi_f_high))
            throw ValidationError("roi f ramp outside f bounds");
    }
    if (motion_max_px < 0.0) throw ValidationError("motion magnitude must be >= 0");
    if (motion_sigma_px <= 0.0) throw ValidationError("motion smoothness must be positive");
    if (snr < 0.0) throw ValidationError("snr must be positive (or 0 to disable noise)");
    if (texture_amplitude < 0.0 || texture_amplitude >= 1.0)
        throw ValidationError("texture amplitude must lie in [0, 1)");
}

std::pair<DwiCase, GroundTruth> make_phantom(const PhantomSpec& spec) {
    spec.validate();
    const int w = spec.width, h = spec.height;
    const bool has_roi = spec.roi_radius_x > 0.0 && spec.roi_radius_y > 0.0;

    const double cx = spec.roi_center_x * (w - 1), cy = spec.roi_center_y * (h - 1);
    const double rx = spec.roi_radius_x * w, ry = spec.roi_radius_y * h;

    GroundTruth gt;
    gt.maps = IvimMaps(w, h, spec.bounds);
    gt.roi_mask = ImageF(w, h);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double ex = (x - cx) / rx, ey = (y - cy) / ry;
            const bool inside = has_roi && ex * ex + ey * ey <= 1.0;
            const IvimParams& p = inside ? spec.roi : spec.background;
            gt.maps.D(x, y) = p.D;
            gt.maps.Dstar(x, y) = p.Dstar;
            double f = p.f;
            if (inside && spec.roi_f_ramp) {
                const double t = std::clamp((x - (cx - rx)) / (2.0 * rx), 0.0, 1.0);
                f = spec.roi_f_low + t * (spec.roi_f_high - spec.roi_f_low);
            }
            gt.maps.f(x, y) = f;
            // Smooth deterministic texture so registration has structure.
            const double tex = 1.0 + spec.texture_amplitude * std::sin(2.0 * M_PI * x / 19.0) *
                                         std::sin(2.0 * M_PI * y / 23.0);
            gt.maps.S0(x, y) = p.S0 * tex;
            gt.roi_mask(x, y) = inside ? 1.0f : 0.0f;
        }
    }

    DwiCase dwi;
    dwi.schedule = spec.schedule;
    dwi.images = reconstruct_series(gt.maps, spec.schedule);
    dwi.roi = gt.roi_mask;
    dwi.lung_masks.assign(dwi.images.size(), gt.roi_mask);
    return {std::move(dwi), std::move(gt)};
}

std::pair<DwiCase, std::vector<VelocityField>> apply_motion(const DwiCase& dwi,
                                                            const PhantomSpec& spec) {
    if (spec.motion_max_px < 0.0) throw ValidationError("apply_motion: magnitude must be >= 0");
    std::vector<VelocityField> fields;
    if (spec.motion_max_px == 0.0 || dwi.num_bvalues() < 2) return {dwi, fields};

    const int w = dwi.width(), h = dwi.height();
    Rng rng(spec.seed);
    DwiCase out = dwi;
    const std::vector<ImageD>& observed = dwi.images;

    for (int i = 1; i < dwi.num_bvalues(); ++i) {
        VelocityField v(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                v.x(x, y) = rng.normal();
                v.y(x, y) = rng.normal();
            }
        v.x = gaussian_blur(v.x, spec.motion_sigma_px);
        v.y = gaussian_blur(v.y, spec.motion_sigma_px);

        // Rescale so the integrated displacement peaks at the requested
        // magnitude (a couple of fixed-point passes suffice; integration
        // bends constant-scale flows only slightly).
        double vmax = 0.0;
        for (std::size_t k = 0; k < v.x.data.size(); ++k)
            vmax = std::max(vmax, std::hypot(v.x.data[k], v.y.data[k]));
        double scale = spec.motion_max_px / std::max(vmax, 1e-12);
        DeformationField phi;
        for (int pass = 0; pass < 5; ++pass) {
            VelocityField scaled(w, h);
            for (std::size_t k = 0; k < v.x.data.size(); ++k) {
                scaled.x.data[k] = v.x.data[k] * scale;
                scaled.y.data[k] = v.y.data[k] * scale;
            }
            phi = integrate_svf(scaled);
            const double dmax = max_displacement(phi);
            if (dmax >= 0.92 * spec.motion_max_px && dmax <= spec.motion_max_px) {
                v = scaled;
                break;
            }
            scale *= spec.motion_max_px / std::max(dmax, 1e-12) * 0.98;
            v = scaled; // keep the last scaled field if the loop runs out
        }

        out.images[i] = warp_image(observed[i], phi);
        if (!out.lung_masks.empty()) out.lung_masks[i] = nn_warp_mask(dwi.lung_masks[i], phi);
        fields.push_back(std::move(v));
    }
    return {std::move(out), std::move(fields)};
}

DwiCase add_rician_noise(const DwiCase& dwi, double snr, std::uint64_t seed) {
    if (!(snr > 0.0)) throw ValidationError("add_rician_noise: snr must be positive");
    if (std::isinf(snr)) return dwi;

    double b0_mean = 0.0;
    for (double v : dwi.images[0].data) b0_mean += v;
    b0_mean /= static_cast<double>(dwi.images[0].size());
    const double sigma = b0_mean / snr;

    Rng rng(seed);
    DwiCase out = dwi;
    for (ImageD& plane : out.images)
        for (double& v : plane.data) {
            const double n1 = sigma * rng.normal();
            const double n2 = sigma * rng.normal();
            v = std::hypot(v + n1, n2);
        }
    return out;
}

std::pair<DwiCase, GroundTruth> synthesize_case(const PhantomSpec& spec) {
    auto [dwi, gt] = make_phantom(spec);
    if (spec.motion_max_px > 0.0) {
        auto [moved, fields] = apply_motion(dwi, spec);
        dwi = std::move(moved);
        gt.velocities = std::move(fields);
    }
    if (spec.snr > 0.0) dwi = add_rician_noise(dwi, spec.snr, spec.seed + 0x9e3779b97f4a7c15ULL);
    return {std::move(dwi), std::move(gt)};
}

} // namespace ivim
