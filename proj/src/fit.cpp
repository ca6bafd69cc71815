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
#include "ivim/fit.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "ivim/parallel.hpp"

namespace ivim {

namespace {

inline double clamp1(double v, const Bounds1D& b) { return std::clamp(v, b.min, b.max); }

IvimParams mid_bound_params(const ParamBounds& bounds, double s0) {
    return IvimParams{0.5 * (bounds.D.min + bounds.D.max), 0.5 * (bounds.Dstar.min + bounds.Dstar.max),
                      0.5 * (bounds.f.min + bounds.f.max), s0};
}

double sse_for_dstar(std::span<const double> signals, const BValueSchedule& schedule,
                     const IvimParams& base, double dstar) {
    IvimParams p = base;
    p.Dstar = dstar;
    double sse = 0.0;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        const double e_slow = std::exp(-schedule.values[i] * p.D);
        const double e_fast = std::exp(-schedule.values[i] * (p.D + p.Dstar));
        const double r = signals[i] - p.S0 * (e_slow + p.f * (e_fast - e_slow));
        sse += r * r;
    }
    return sse;
}

// Coarse log-spaced scan over the D* interval followed by golden-section
// refinement inside the bracketing cell.
double fit_dstar_1d(std::span<const double> signals, const BValueSchedule& schedule,
                    const IvimParams& base, const Bounds1D& bounds) {
    constexpr int kScan = 48;
    const double log_lo = std::log(bounds.min), log_hi = std::log(bounds.max);
    double best_v = bounds.min, best_sse = sse_for_dstar(signals, schedule, base, bounds.min);
    int best_k = 0;
    for (int k = 1; k < kScan; ++k) {
        const double v = std::exp(log_lo + (log_hi - log_lo) * k / (kScan - 1));
        const double sse = sse_for_dstar(signals, schedule, base, v);
        if (sse < best_sse) {
            best_sse = sse;
            best_v = v;
            best_k = k;
        }
    }
    const auto grid_value = [&](int k) {
        return std::exp(log_lo + (log_hi - log_lo) * std::clamp(k, 0, kScan - 1) / (kScan - 1));
    };
    double a = grid_value(best_k - 1), b = grid_value(best_k + 1);
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = b - kInvPhi * (b - a), x2 = a + kInvPhi * (b - a);
    double f1 = sse_for_dstar(signals, schedule, base, x1);
    double f2 = sse_for_dstar(signals, schedule, base, x2);
    for (int it = 0; it < 60 && (b - a) > 1e-12 * bounds.max; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = sse_for_dstar(signals, schedule, base, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = sse_for_dstar(signals, schedule, base, x2);
        }
    }
    const double mid = 0.5 * (a + b);
    return sse_for_dstar(signals, schedule, base, mid) < best_sse ? mid : best_v;
}

} // namespace

IvimParams sls_init(std::span<const double> signals, const BValueSchedule& schedule,
                    double b_threshold, const ParamBounds& bounds) {
    if (signals.size() != schedule.values.size())
        throw ShapeError("sls_init: signal/schedule length mismatch");
    bool any_nonzero = false;
    for (double s : signals)
        if (s != 0.0) any_nonzero = true;
    if (!any_nonzero) throw DegenerateInputError("sls_init: all-zero signals");

    const double s0 = signals[0];

    // Log-linear fit over the usable high-b points.
    double sum_b = 0.0, sum_l = 0.0, sum_bb = 0.0, sum_bl = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        if (schedule.values[i] >= b_threshold && signals[i] > 0.0) {
            const double b = schedule.values[i], l = std::log(signals[i]);
            sum_b += b;
            sum_l += l;
            sum_bb += b * b;
            sum_bl += b * l;
            ++n;
        }
    }
    if (n < 2 || s0 <= 0.0) return mid_bound_params(bounds, s0);

    const double denom = n * sum_bb - sum_b * sum_b;
    const double slope = (n * sum_bl - sum_b * sum_l) / denom;
    const double intercept = (sum_l - slope * sum_b) / n;

    IvimParams p;
    p.S0 = s0;
    p.D = clamp1(-slope, bounds.D);
    p.f = clamp1(1.0 - std::exp(intercept) / s0, bounds.f);
    p.Dstar = clamp1(fit_dstar_1d(signals, schedule, p, bounds.Dstar), bounds.Dstar);
    return p;
}

FitResult trf_refine(std::span<const double> signals, const BValueSchedule& schedule,
                     const IvimParams& init, const ParamBounds& bounds, const FitConfig& config) {
    if (signals.size() != schedule.values.size())
        throw ShapeError("trf_refine: signal/schedule length mismatch");
    const int n = static_cast<int>(signals.size());

    IvimParams p = init;
    p.D = clamp1(p.D, bounds.D);
    p.f = clamp1(p.f, bounds.f);
    p.Dstar = clamp1(p.Dstar, bounds.Dstar);

    const double scale[3] = {bounds.D.max - bounds.D.min, bounds.f.max - bounds.f.min,
                             bounds.Dstar.max - bounds.Dstar.min};

    Eigen::VectorXd r(n);
    Eigen::MatrixXd jac(n, 3); // d model / d (D, f, D*); residual r = S - model
    const auto evaluate = [&](const IvimParams& q, Eigen::VectorXd& res, Eigen::MatrixXd* jm) {
        double cost = 0.0;
        for (int i = 0; i < n; ++i) {
            IvimSignalDerivatives d;
            const double model = ivim_signal_with_derivatives(q, schedule.values[i], d);
            res(i) = signals[i] - model;
            cost += res(i) * res(i);
            if (jm) {
                (*jm)(i, 0) = d.dD;
                (*jm)(i, 1) = d.df;
                (*jm)(i, 2) = d.dDstar;
            }
        }
        return cost;
    };

    double cost = evaluate(p, r, &jac);
    double lambda = 1e-3;
    FitResult out;
    out.converged = false;

    int iter = 0;
    for (; iter < config.max_iterations; ++iter) {
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d jtr = jac.transpose() * r; // -grad/2 of cost in model sign
        Eigen::Vector3d diag = jtj.diagonal();
        for (int k = 0; k < 3; ++k) diag(k) = std::max(diag(k), 1e-30);

        bool stepped = false;
        double trial_cost = cost;
        IvimParams trial = p;
        for (int inner = 0; inner < 12; ++inner) {
            Eigen::Matrix3d lhs = jtj;
            lhs.diagonal() += lambda * diag;
            const Eigen::Vector3d delta = lhs.ldlt().solve(jtr);

            double rel_step = 0.0;
            for (int k = 0; k < 3; ++k) rel_step = std::max(rel_step, std::abs(delta(k)) / scale[k]);
            if (rel_step < config.step_tol) break;

            trial.D = clamp1(p.D + delta(0), bounds.D);
            trial.f = clamp1(p.f + delta(1), bounds.f);
            trial.Dstar = clamp1(p.Dstar + delta(2), bounds.Dstar);

            Eigen::VectorXd trial_r(n);
            trial_cost = evaluate(trial, trial_r, nullptr);
            if (trial_cost < cost) {
                stepped = true;
                lambda = std::max(lambda / 3.0, 1e-12);
                break;
            }
            lambda *= 4.0;
        }

        if (!stepped) {
            out.converged = true; // stationary within tolerances
            ++iter;
            break;
        }
        const double norm_change = std::sqrt(cost) - std::sqrt(trial_cost);
        p = trial;
        cost = evaluate(p, r, &jac);
        if (norm_change < config.cost_tol) {
            out.converged = true;
            ++iter;
            break;
        }
    }

    out.params = p;
    out.residual_norm = std::sqrt(cost);
    out.iterations = iter;
    if (iter >= config.max_iterations) out.converged = false;
    return out;
}

IvimMaps fit_map(const DwiCase& dwi, const ImageF* mask, const ParamBounds& bounds,
                 const FitConfig& config) {
    dwi.validate();
    if (mask) require_same_shape(*mask, dwi.images.front(), "fit_map mask");
    const int w = dwi.width(), h = dwi.height();
    const int nb = dwi.num_bvalues();

    IvimMaps maps(w, h, bounds);
    maps.D.fill(bounds.D.min);
    maps.f.fill(bounds.f.min);
    maps.Dstar.fill(bounds.Dstar.min);

    par::for_rows(h, [&](int y) {
        std::vector<double> sig(nb);
        for (int x = 0; x < w; ++x) {
            maps.S0(x, y) = dwi.images[0](x, y);
            if (mask && (*mask)(x, y) == 0.0f) continue;
            bool any = false;
            for (int i = 0; i < nb; ++i) {
                sig[i] = dwi.images[i](x, y);
                if (sig[i] != 0.0) any = true;
            }
            if (!any) continue; // empty voxel, keep lower bounds
            const IvimParams init = sls_init(sig, dwi.schedule, config.b_threshold, bounds);
            const FitResult res = trf_refine(sig, dwi.schedule, init, bounds, config);
            maps.D(x, y) = res.params.D;
            maps.f(x, y) = res.params.f;
            maps.Dstar(x, y) = res.params.Dstar;
        }
    });
    return maps;
}

} // namespace ivim
