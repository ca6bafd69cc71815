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
#ifndef IVIM_OPTIMIZER_HPP
#define IVIM_OPTIMIZER_HPP

#include <cstdint>
#include <vector>

#include "ivim/case.hpp"
#include "ivim/loss.hpp"
#include "ivim/model.hpp"
#include "ivim/warp.hpp"

namespace ivim {

enum class InitMode { ClassicalFit, MidBounds };

struct OptConfig {
    double learning_rate = 1e-3;
    int max_iterations = 500;
    int patience = 10;           // plateau length before the rate is cut
    double factor = 0.5;         // plateau decay factor
    double min_learning_rate = 1e-5;
    double improvement_tol = 1e-6;
    std::uint64_t seed = 0;      // reserved; the optimization itself is deterministic
    LossConfig loss;
    InitMode init = InitMode::ClassicalFit;
    double grad_smooth_sigma = 0.0; // optional Gaussian smoothing of latent-map gradients, px
    int svf_steps = kDefaultSvfSteps;

    void validate() const;
};

/// Direct optimization variables: unconstrained latent parameter maps (the
/// bound transform maps them into the prior box) and one stationary
/// velocity field per non-reference image. The b=0 frame stays fixed.
struct OptState {
    ImageD latent_D, latent_Dstar, latent_f;
    std::vector<VelocityField> velocities; // N fields for planes 1..N
};

struct CaseGradients {
    ImageD d_latent_D, d_latent_Dstar, d_latent_f;
    std::vector<VectorField2D> d_velocities;
};

/// "Reduce on plateau": multiply the rate by `factor` after `patience`
/// observations without an improvement larger than `tol`, never below
/// `min_lr`. Construct with the loss of the initial iterate.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, int patience, double factor, double min_lr, double tol,
                     double initial_loss);

    /// Feed the latest total loss; returns the rate to use next.
    double step(double loss);
    double rate() const { return lr_; }
    /// True once a decay was requested while already at the floor.
    bool exhausted() const { return exhausted_; }

private:
    double lr_;
    int patience_;
    double factor_;
    double min_lr_;
    double tol_;
    double best_;
    int bad_ = 0;
    bool exhausted_ = false;
};

/// Evaluate the composite loss at `state` and (optionally) its exact
/// gradient with respect to every latent map and velocity component,
/// hand-chained through the bound transform, the signal model, scaling and
/// squaring, bilinear warping, and the three loss terms.
LossBreakdown compute_loss_and_gradients(const DwiCase& dwi, const OptState& state,
                                         const LossConfig& config, const ParamBounds& bounds,
                                         int svf_steps, CaseGradients* grads);

/// Build the starting state: latents from a classical fit pushed through
/// the inverse bound transform (or zeros for mid-bound init), zero
/// velocities.
OptState make_initial_state(const DwiCase& dwi, const OptConfig& config, const ParamBounds& bounds);

struct CaseResult {
    IvimMaps maps;
    std::vector<DeformationField> deformations; // per plane i >= 1
    std::vector<ImageD> corrected;              // motion-compensated stack
    std::vector<LossBreakdown> trace;           // loss at every evaluated iterate
    LossBreakdown final_loss;                   // breakdown of the returned (best) iterate
    int best_iteration = 0;
};

/// Adam descent on the composite loss over the latent maps and velocity
/// fields. Returns the best-loss iterate. Requires a normalized case with
/// at least 5 b-values. Deterministic: fixed inputs give a bit-identical
/// result for any thread count.
CaseResult optimize_case(const DwiCase& dwi, const OptConfig& config,
                         const ParamBounds& bounds = ParamBounds());

} // namespace ivim

#endif
