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
#ifndef IVIM_WARP_HPP
#define IVIM_WARP_HPP

#include <vector>

#include "ivim/image.hpp"

namespace ivim {

inline constexpr int kDefaultSvfSteps = 7;

/// Integrate a stationary velocity field to a diffeomorphic displacement by
/// scaling and squaring: phi <- v / 2^steps, then phi <- phi o phi, `steps`
/// times. steps >= 1.
DeformationField integrate_svf(const VelocityField& v, int steps = kDefaultSvfSteps);

/// Pull-back bilinear warp: out(p) = img(p + phi(p)). Sample positions are
/// clamped to the image rectangle (clamp-to-edge).
ImageD warp_image(const ImageD& img, const DeformationField& phi);

/// Forward finite differences. The last column of gx (last row of gy)
/// replicates the preceding difference, so a linear ramp has unit gradient
/// at every pixel.
void spatial_gradient(const ImageD& f, ImageD& gx, ImageD& gy);

/// Adjoint of spatial_gradient (exact transpose of the linear operator).
void spatial_gradient_adjoint(const ImageD& dgx, const ImageD& dgy, ImageD& df);

/// (a o b)(p) = b(p) + a(p + b(p)), components of a sampled bilinearly.
DeformationField compose(const DeformationField& a, const DeformationField& b);

// ---- adjoints for the optimizer ------------------------------------------

/// Backward of warp_image. Either output may be null. d_img accumulation is
/// a bilinear scatter and runs single-threaded; d_phi is gathered in
/// parallel. Both are overwritten, not accumulated into.
void warp_image_backward(const ImageD& img, const DeformationField& phi, const ImageD& d_out,
                         ImageD* d_img, VectorField2D* d_phi);

/// Backward of compose. d_a and d_b are overwritten.
void compose_backward(const VectorField2D& a, const VectorField2D& b, const VectorField2D& d_out,
                      VectorField2D& d_a, VectorField2D& d_b);

/// Intermediate fields recorded during integration, consumed by the
/// backward pass.
struct SvfTape {
    int steps = 0;
    std::vector<VectorField2D> stages; // stages[k] = field entering squaring k
};

DeformationField integrate_svf_recorded(const VelocityField& v, int steps, SvfTape& tape);

/// Pull d(loss)/d(phi) back to d(loss)/d(v) through the recorded squarings.
VectorField2D integrate_svf_backward(const SvfTape& tape, const VectorField2D& d_phi);

} // namespace ivim

#endif
