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
#ifndef IVIM_PHANTOM_HPP
#define IVIM_PHANTOM_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "ivim/case.hpp"
#include "ivim/model.hpp"

namespace ivim {

/// Synthetic case layout: a background region and an elliptical "lung" ROI,
/// each with its own IVIM parameters, optional linear f ramp across the
/// ROI, smooth random per-image motion, and Rician noise.
struct PhantomSpec {
    int width = 96;
    int height = 96;
    BValueSchedule schedule = BValueSchedule::standard();
    ParamBounds bounds;

    IvimParams background{0.0010, 0.010, 0.10, 0.55};
    IvimParams roi{0.0020, 0.060, 0.30, 0.95};

    // Ellipse as fractions of the grid; radius 0 disables the ROI (single
    // uniform region).
    double roi_center_x = 0.5, roi_center_y = 0.5;
    double roi_radius_x = 0.30, roi_radius_y = 0.21;

    bool roi_f_ramp = false; // f varies linearly across the ROI along x
    double roi_f_low = 0.10, roi_f_high = 0.40;

    double texture_amplitude = 0.15; // deterministic S0 modulation for registration structure

    double motion_max_px = 0.0;  // max displacement magnitude per image
    double motion_sigma_px = 8.0;
    double snr = 0.0; // 0 disables noise
    std::uint64_t seed = 0;

    void validate() const;
};

struct GroundTruth {
    IvimMaps maps;
    std::vector<VelocityField> velocities; // per plane i >= 1; empty when motion-free
    ImageF roi_mask;
};

/// Noiseless, motion-free series over the region layout, with the ROI mask
/// recorded both as the case ROI and as per-image lung masks.
std::pair<DwiCase, GroundTruth> make_phantom(const PhantomSpec& spec);

/// Draw one Gaussian-smoothed random velocity field per plane i >= 1,
/// rescaled so the integrated displacement peaks at spec.motion_max_px,
/// then warp the planes (and per-image masks, nearest-neighbor). The b=0
/// plane is untouched. Deterministic per seed.
std::pair<DwiCase, std::vector<VelocityField>> apply_motion(const DwiCase& dwi,
                                                            const PhantomSpec& spec);

/// Magnitude-image noise: sqrt((S + n1)^2 + n2^2) with n1, n2 ~ N(0, sigma^2),
/// sigma = mean(S(b0)) / snr. snr = +inf returns the input unchanged.
DwiCase add_rician_noise(const DwiCase& dwi, double snr, std::uint64_t seed);

/// Full chain: make_phantom, then motion and noise as the spec requests.
std::pair<DwiCase, GroundTruth> synthesize_case(const PhantomSpec& spec);

} // namespace ivim

#endif
