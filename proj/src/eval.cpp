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
#include "ivim/eval.hpp"

#include <cmath>
#include <sstream>

namespace ivim {

double dice(const ImageF& a, const ImageF& b) {
    require_same_shape(a, b, "dice");
    long long na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool in_a = a.data[i] != 0.0f, in_b = b.data[i] != 0.0f;
        na += in_a;
        nb += in_b;
        inter += in_a && in_b;
    }
    if (na + nb == 0) return 1.0; // agreement about nothing
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

namespace {

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

double mask_alignment_score(const std::vector<ImageF>& masks,
                            const std::vector<DeformationField>& deformations) {
    if (masks.size() < 2) throw ValidationError("mask_alignment_score: need at least two masks");
    if (deformations.size() != masks.size() - 1)
        throw ValidationError("mask_alignment_score: one deformation required per non-reference mask");
    double sum = 0.0;
    for (std::size_t i = 1; i < masks.size(); ++i)
        sum += dice(masks[0], nn_warp_mask(masks[i], deformations[i - 1]));
    return sum / static_cast<double>(masks.size() - 1);
}

double mask_alignment_score(const std::vector<ImageF>& masks) {
    if (masks.size() < 2) throw ValidationError("mask_alignment_score: need at least two masks");
    double sum = 0.0;
    for (std::size_t i = 1; i < masks.size(); ++i) sum += dice(masks[0], masks[i]);
    return sum / static_cast<double>(masks.size() - 1);
}

ParamRmse param_rmse(const IvimMaps& est, const IvimMaps& gt, const ImageF& mask) {
    require_same_shape(est.D, gt.D, "param_rmse");
    require_same_shape(est.D, mask, "param_rmse");
    double sd = 0.0, sds = 0.0, sf = 0.0;
    long long n = 0;
    for (int y = 0; y < est.height(); ++y)
        for (int x = 0; x < est.width(); ++x) {
            if (mask(x, y) == 0.0f) continue;
            const double ed = est.D(x, y) - gt.D(x, y);
            const double es = est.Dstar(x, y) - gt.Dstar(x, y);
            const double ef = est.f(x, y) - gt.f(x, y);
            sd += ed * ed;
            sds += es * es;
            sf += ef * ef;
            ++n;
        }
    if (n == 0) throw DegenerateInputError("param_rmse: empty mask");
    return ParamRmse{std::sqrt(sd / n), std::sqrt(sds / n), std::sqrt(sf / n)};
}

namespace {

double select_param(const CohortRecord& r, IvimParamSel p) {
    switch (p) {
    case IvimParamSel::D: return r.mean_D;
    case IvimParamSel::Dstar: return r.mean_Dstar;
    default: return r.mean_f;
    }
}

SubsetCorrelation correlate_subset(const std::vector<const CohortRecord*>& subset, IvimParamSel p) {
    SubsetCorrelation out;
    out.n = static_cast<int>(subset.size());
    if (out.n < 3) return out; // marked insufficient
    out.sufficient = true;

    double mx = 0.0, my = 0.0;
    for (const CohortRecord* r : subset) {
        mx += r->ga_weeks;
        my += select_param(*r, p);
    }
    mx /= out.n;
    my /= out.n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const CohortRecord* r : subset) {
        const double dx = r->ga_weeks - mx, dy = select_param(*r, p) - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0) throw DegenerateInputError("correlate_ga: zero variance in gestational age");
    if (syy == 0.0) return out; // constant parameter: R^2 = 0 by definition
    out.pearson_r = sxy / std::sqrt(sxx * syy);
    out.r2 = out.pearson_r * out.pearson_r;
    return out;
}

} // namespace

CorrelationReport correlate_ga(const std::vector<CohortRecord>& records, IvimParamSel param) {
    std::vector<const CohortRecord*> canalicular, saccular;
    for (const CohortRecord& r : records) {
        if (r.ga_weeks <= 0.0) throw ValidationError("correlate_ga: non-positive gestational age");
        (r.ga_weeks < kCanalicularGaCutWeeks ? canalicular : saccular).push_back(&r);
    }
    CorrelationReport report;
    report.canalicular = correlate_subset(canalicular, param);
    report.saccular = correlate_subset(saccular, param);
    return report;
}

std::vector<double> default_alpha1_grid() { return {0.5, 1.0, 5.0, 10.0}; }
std::vector<double> default_alpha2_grid() { return {0.015, 0.03}; }
std::vector<double> default_alpha3_grid() { return {0.1, 0.8, 5.0}; }

namespace {

double roi_mean(const ImageD& map, const ImageF& roi) {
    double s = 0.0;
    long long n = 0;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x)
            if (roi(x, y) != 0.0f) {
                s += map(x, y);
                ++n;
            }
    if (n == 0) throw DegenerateInputError("grid_search: empty ROI");
    return s / n;
}

bool lexicographically_smaller(const GridPoint& a, const GridPoint& b) {
    if (a.alpha1 != b.alpha1) return a.alpha1 < b.alpha1;
    if (a.alpha2 != b.alpha2) return a.alpha2 < b.alpha2;
    return a.alpha3 < b.alpha3;
}

} // namespace

GridResult grid_search(const std::vector<GridCase>& cases, const std::vector<double>& alpha1,
                       const std::vector<double>& alpha2, const std::vector<double>& alpha3,
                       GridCriterion criterion, const OptConfig& base, const ParamBounds& bounds) {
    if (cases.empty()) throw ValidationError("grid_search: no cases");
    if (alpha1.empty() || alpha2.empty() || alpha3.empty())
        throw ValidationError("grid_search: empty grid");

    GridResult result;
    for (double a1 : alpha1)
        for (double a2 : alpha2)
            for (double a3 : alpha3) {
                GridPoint point;
                point.alpha1 = a1;
                point.alpha2 = a2;
                point.alpha3 = a3;
                OptConfig config = base;
                config.loss.alpha1 = a1;
                config.loss.alpha2 = a2;
                config.loss.alpha3 = a3;
                try {
                    if (criterion == GridCriterion::RmseF) {
                        double rmse_sum = 0.0;
                        for (const GridCase& c : cases) {
                            if (!c.gt_maps || !c.roi)
                                throw ValidationError("RmseF criterion needs ground truth and ROI");
                            const CaseResult r = optimize_case(c.dwi, config, bounds);
                            rmse_sum += param_rmse(r.maps, *c.gt_maps, *c.roi).f;
                        }
                        point.score = -rmse_sum / static_cast<double>(cases.size());
                    } else {
                        std::vector<CohortRecord> records;
                        for (const GridCase& c : cases) {
                            if (!c.roi || !c.ga_weeks)
                                throw ValidationError("R2F criterion needs an ROI and GA");
                            const CaseResult r = optimize_case(c.dwi, config, bounds);
                            records.push_back(CohortRecord{c.id, *c.ga_weeks, "grid",
                                                           roi_mean(r.maps.D, *c.roi),
                                                           roi_mean(r.maps.Dstar, *c.roi),
                                                           roi_mean(r.maps.f, *c.roi)});
                        }
                        const CorrelationReport rep = correlate_ga(records, IvimParamSel::f);
                        if (!rep.canalicular.sufficient)
                            throw DegenerateInputError("R2F criterion: canalicular subset too small");
                        point.score = rep.canalicular.r2;
                    }
                    point.ok = true;
                } catch (const std::exception& e) {
                    point.ok = false;
                    point.error = e.what();
                }
                result.table.push_back(point);
            }

    for (std::size_t i = 0; i < result.table.size(); ++i) {
        const GridPoint& p = result.table[i];
        if (!p.ok) continue;
        if (result.best_index < 0) {
            result.best_index = static_cast<int>(i);
            continue;
        }
        const GridPoint& best = result.table[result.best_index];
        if (p.score > best.score ||
            (p.score == best.score && lexicographically_smaller(p, best)))
            result.best_index = static_cast<int>(i);
    }
    if (result.best_index < 0) {
        std::ostringstream msg;
        msg << "grid_search: criterion failed on every grid point; table:";
        for (const GridPoint& p : result.table)
            msg << "\n  (" << p.alpha1 << ", " << p.alpha2 << ", " << p.alpha3 << "): " << p.error;
        throw NumericalError(msg.str());
    }
    return result;
}

} // namespace ivim
