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
#ifndef IVIM_LOSS_HPP
#define IVIM_LOSS_HPP

#include <vector>

#include "ivim/case.hpp"
#include "ivim/image.hpp"
#include "ivim/model.hpp"

namespace ivim {

/// Weights and settings of the composite loss
///   L = alpha1 * L_fit + alpha2 * L_smooth + alpha3 * L_sim.
struct LossConfig {
    double alpha1 = 1.0;
    double alpha2 = 0.015;
    double alpha3 = 0.1;
    int ncc_window = 9;   // odd, >= 3
    int wser_unknowns = 3; // p: model unknowns (D, D*, f)

    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    double fit = 0.0;
    double smooth = 0.0;
    double sim = 0.0;
};

/// Per-pixel weighted standard error of the regression across the b-value
/// axis, before division by the mean intensity:
///   wser(p) = sqrt( sum_i w_i r_i(p)^2 / sum_i w_i * 1/(N - p_unk - 1) )
/// with w_i = ln(b_i + 1) + 1 and r_i = warped_i - recon_i. N is the number
/// of b-values (stack planes).
ImageD wser_map(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                const BValueSchedule& schedule, int unknowns);

/// Spatial mean of wser_map divided by the mean intensity of the warped
/// stack. Invariant under scaling both stacks by the same positive factor.
double wser_loss(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                 const BValueSchedule& schedule, int unknowns);

/// Same value; also writes d(loss)/d(warped_i) and d(loss)/d(recon_i).
double wser_loss_backward(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                          const BValueSchedule& schedule, int unknowns,
                          std::vector<ImageD>* d_warped, std::vector<ImageD>* d_recon);

/// Mean over fields and pixels of the squared-magnitude spatial gradient of
/// the velocity components.
double smooth_loss(const std::vector<VelocityField>& velocities);
double smooth_loss_backward(const std::vector<VelocityField>& velocities,
                            std::vector<VectorField2D>* d_velocities);

/// 1 - mean local windowed NCC between the fixed image and each warped
/// image. Signed NCC in [-1, 1]; windows are truncated at the borders;
/// near-zero variance products are floored at 1e-5.
double ncc_loss(const ImageD& fixed, const std::vector<ImageD>& warped, int window);
double ncc_loss_backward(const ImageD& fixed, const std::vector<ImageD>& warped, int window,
                         std::vector<ImageD>* d_warped);

/// 1 - mean of the squared local NCC. Window gradients scale with the
/// correlation itself, so uncorrelated (noise) windows exert almost no
/// force; this is the similarity the pairwise SVF registrar descends on.
double ncc_squared_loss(const ImageD& fixed, const std::vector<ImageD>& warped, int window);
double ncc_squared_loss_backward(const ImageD& fixed, const std::vector<ImageD>& warped, int window,
                                 std::vector<ImageD>* d_warped);

/// Full pipeline evaluation: integrates velocities (i >= 1; the b=0 frame is
/// the reference and is never deformed), warps the observed planes,
/// reconstructs the model planes, and combines the three terms.
LossBreakdown composite_loss(const DwiCase& dwi, const IvimMaps& maps,
                             const std::vector<VelocityField>& velocities, const LossConfig& config,
                             int svf_steps = 7);

} // namespace ivim

#endif
