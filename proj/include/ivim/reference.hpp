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
#ifndef IVIM_REFERENCE_HPP
#define IVIM_REFERENCE_HPP

#include <span>
#include <vector>

#include "ivim/image.hpp"
#include "ivim/model.hpp"

// Plain serial reference implementations of the hot kernels. They are kept
// deliberately naive (direct loops, no window reuse, no parallelism) and
// independent of the production code paths; the tests check the optimized
// kernels against them and the benchmark compares their speed.
namespace ivim::ref {

ImageD warp_image(const ImageD& img, const DeformationField& phi);

DeformationField compose(const DeformationField& a, const DeformationField& b);

DeformationField integrate_svf(const VelocityField& v, int steps);

/// Direct per-window evaluation, O(pixels * window^2).
double ncc_loss(const ImageD& fixed, const std::vector<ImageD>& warped, int window);

double wser_loss(const std::vector<ImageD>& warped, const std::vector<ImageD>& recon,
                 const BValueSchedule& schedule, int unknowns);

double smooth_loss(const std::vector<VelocityField>& velocities);

double quantile(std::span<const double> values, double q);

} // namespace ivim::ref

#endif
