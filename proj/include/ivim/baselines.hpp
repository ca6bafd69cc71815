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
#ifndef IVIM_BASELINES_HPP
#define IVIM_BASELINES_HPP

#include <vector>

#include "ivim/case.hpp"
#include "ivim/fit.hpp"
#include "ivim/image.hpp"
#include "ivim/model.hpp"
#include "ivim/warp.hpp"

namespace ivim {

/// Affine map about the image center: q = A (p - c) + c + t, pixels.
struct AffineTransform {
    double a00 = 1.0, a01 = 0.0, a10 = 0.0, a11 = 1.0;
    double tx = 0.0, ty = 0.0;

    double det() const { return a00 * a11 - a01 * a10; }
    void validate() const;
    /// Displacement field phi(p) = A(p-c) + c + t - p on a w x h grid.
    DeformationField displacement_field(int w, int h) const;
};

struct RegistrationConfig {
    double lambda = 0.015;     // smoothness weight of the SVF registrar
    int levels = 3;            // pyramid depth of the affine registrar
    int svf_levels = 1;        // pyramid depth of the SVF registrar
    int iterations = 100;      // descent iterations per level
    double affine_rate = 0.01; // Adam rate of the affine registrar
    double svf_rate = 1200.0;  // descent rate on the (scale-invariant) NCC gradient
    double update_sigma = 6.0; // Gaussian smoothing of the velocity update, px
    double max_step_px = 0.5;  // per-iteration cap on the velocity change
    int ncc_window = 9;
    int svf_steps = kDefaultSvfSteps;

    void validate() const;
};

struct AffineResult {
    AffineTransform transform;
    ImageD warped;
    bool converged = false;
    double final_loss = 0.0;
};

struct DeformableResult {
    VelocityField velocity;
    ImageD warped;
    bool converged = false;
    double final_loss = 0.0;
};

/// Minimize 1 - NCC(fixed, warp(moving)) over the 6 affine parameters by
/// multi-resolution Adam descent. Returns the best-so-far iterate; the
/// converged flag reports whether the loss had stopped improving.
AffineResult register_affine(const ImageD& fixed, const ImageD& moving,
                             const RegistrationConfig& config = RegistrationConfig());

/// Minimize 1 - NCC + lambda * smoothness over a stationary velocity field.
DeformableResult register_deformable(const ImageD& fixed, const ImageD& moving,
                                     const RegistrationConfig& config = RegistrationConfig());

enum class CorrectMode { AffineToB0, DeformableToB0 };

struct CorrectionResult {
    DwiCase corrected;
    std::vector<DeformationField> deformations; // per plane i >= 1, into the b=0 frame
};

/// Register each plane i >= 1 independently to the b=0 plane.
CorrectionResult correct_to_b0(const DwiCase& dwi, CorrectMode mode,
                               const RegistrationConfig& config = RegistrationConfig());

/// Register plane 1 to plane 0, then each subsequent plane to its corrected
/// predecessor (deformable).
CorrectionResult correct_sequential(const DwiCase& dwi,
                                    const RegistrationConfig& config = RegistrationConfig());

struct IterativeResult {
    DwiCase corrected;
    IvimMaps maps;
    std::vector<DeformationField> deformations;
    std::vector<double> fit_terms; // per-round WSER of the corrected stack vs the model stack
};

/// Alternating scheme: fit the current corrected stack, reconstruct the
/// model stack, register each original plane to its model image, repeat.
IterativeResult iterative_fit_register(const DwiCase& dwi, int rounds,
                                       const RegistrationConfig& config = RegistrationConfig(),
                                       const ParamBounds& bounds = ParamBounds(),
                                       const FitConfig& fit_config = FitConfig());

} // namespace ivim

#endif
