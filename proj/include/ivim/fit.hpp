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
#ifndef IVIM_FIT_HPP
#define IVIM_FIT_HPP

#include <span>

#include "ivim/case.hpp"
#include "ivim/model.hpp"

namespace ivim {

struct FitConfig {
    double b_threshold = 200.0; // high-b cut for the segmented init, s/mm^2
    int max_iterations = 200;
    double step_tol = 1e-10;
    double cost_tol = 1e-10;
};

struct FitResult {
    IvimParams params;
    double residual_norm = 0.0; // L2 norm of the final residual vector
    bool converged = false;
    int iterations = 0;
};

/// Segmented least-squares initialization:
///   1. log-linear fit of ln(S) over b >= b_threshold gives D and the
///      intercept A (points with S <= 0 are excluded; with fewer than two
///      usable points the voxel falls back to mid-bound init),
///   2. f = clamp(1 - A / S(b_0)),
///   3. D* from a bounded 1-D least-squares scan with D, f, S0 held fixed.
/// S0 is the observed b=0 signal. All outputs are clamped into bounds.
/// Throws DegenerateInputError when every signal is zero.
IvimParams sls_init(std::span<const double> signals, const BValueSchedule& schedule,
                    double b_threshold, const ParamBounds& bounds);

/// Bound-constrained nonlinear least squares on (D, f, D*) with S0 fixed.
/// Levenberg-Marquardt with Marquardt diagonal scaling and projection onto
/// the bound box; only improving steps are accepted, so the final residual
/// never exceeds the initial one.
FitResult trf_refine(std::span<const double> signals, const BValueSchedule& schedule,
                     const IvimParams& init, const ParamBounds& bounds,
                     const FitConfig& config = FitConfig());

/// Per-pixel sls_init + trf_refine inside the mask (whole image when mask
/// is null). S0 is the observed b=0 plane everywhere. Outside-mask and
/// all-zero voxels get the lower bounds. Pixels are independent, so the
/// result is bit-identical for any thread count.
IvimMaps fit_map(const DwiCase& dwi, const ImageF* mask, const ParamBounds& bounds = ParamBounds(),
                 const FitConfig& config = FitConfig());

} // namespace ivim

#endif
