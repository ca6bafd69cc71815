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
#ifndef IVIM_MODEL_HPP
#define IVIM_MODEL_HPP

#include <vector>

#include "ivim/image.hpp"

namespace ivim {

/// Acquisition b-values in s/mm^2: strictly increasing, first element 0,
/// at least 4 entries.
struct BValueSchedule {
    std::vector<double> values;

    BValueSchedule() = default;
    explicit BValueSchedule(std::vector<double> v) : values(std::move(v)) {}

    /// (0, 50, 100, 200, 400, 600) s/mm^2.
    static BValueSchedule standard();

    int count() const { return static_cast<int>(values.size()); }
    void validate() const;
};

struct Bounds1D {
    double min = 0.0;
    double max = 1.0;
};

/// Prior box constraints on the IVIM parameters. Defaults:
///   D  in [0.0003, 0.0032] mm^2/s
///   f  in [0.07, 0.50]
///   D* in [0.006, 0.15] mm^2/s
struct ParamBounds {
    Bounds1D D{0.0003, 0.0032};
    Bounds1D f{0.07, 0.50};
    Bounds1D Dstar{0.006, 0.15};

    void validate() const;
};

/// Per-voxel bi-exponential IVIM parameters.
/// D: diffusion coefficient (mm^2/s), Dstar: pseudo-diffusion coefficient
/// (mm^2/s), f: perfusion fraction, S0: baseline signal.
struct IvimParams {
    double D = 0.0;
    double Dstar = 0.0;
    double f = 0.0;
    double S0 = 1.0;
};

/// Parameter maps plus the baseline map and the bounds they satisfy.
struct IvimMaps {
    ImageD D, Dstar, f, S0;
    ParamBounds bounds;

    IvimMaps() = default;
    IvimMaps(int w, int h, const ParamBounds& b = ParamBounds());

    int width() const { return D.width; }
    int height() const { return D.height; }
    void validate() const;

    IvimParams at(int x, int y) const { return IvimParams{D(x, y), Dstar(x, y), f(x, y), S0(x, y)}; }
};

/// Bi-exponential signal S0 * (f*exp(-b(D+D*)) + (1-f)*exp(-b D)).
/// Evaluated as S0 * (e_D + f*(e_DDstar - e_D)) so that b=0 returns S0
/// bit-exactly. Throws ValidationError on non-finite input or b < 0.
double ivim_signal(const IvimParams& params, double b);

struct IvimSignalDerivatives {
    double dD = 0.0;
    double dDstar = 0.0;
    double df = 0.0;
};

/// Signal value plus partial derivatives with respect to D, D*, f.
double ivim_signal_with_derivatives(const IvimParams& params, double b, IvimSignalDerivatives& out);

/// Pixelwise forward model over the schedule: plane i is the model image at
/// b_i. Plane 0 equals maps.S0 bit-for-bit.
std::vector<ImageD> reconstruct_series(const IvimMaps& maps, const BValueSchedule& schedule);

/// min + sigmoid(latent) * (max - min). Monotone; saturates to the exact
/// bound once |latent| exceeds roughly 37 (double rounding).
double bound_transform(double latent, const Bounds1D& bounds);
ImageD bound_transform(const ImageD& latent, const Bounds1D& bounds);

/// d bound_transform / d latent = (max-min) * sig * (1 - sig).
double bound_transform_derivative(double latent, const Bounds1D& bounds);

/// Inverse of bound_transform. Inputs are clamped to
/// [min + eps, max - eps] with eps = 1e-6 * (max - min), so exact-bound
/// inputs map to finite latents.
double bound_inverse(double value, const Bounds1D& bounds);
ImageD bound_inverse(const ImageD& value, const Bounds1D& bounds);

} // namespace ivim

#endif
