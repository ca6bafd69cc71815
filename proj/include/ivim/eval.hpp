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
#ifndef IVIM_EVAL_HPP
#define IVIM_EVAL_HPP

#include <optional>
#include <string>
#include <vector>

#include "ivim/case.hpp"
#include "ivim/image.hpp"
#include "ivim/model.hpp"
#include "ivim/optimizer.hpp"

namespace ivim {

/// 2|A n B| / (|A| + |B|) over nonzero pixels; two empty masks score 1.
double dice(const ImageF& a, const ImageF& b);

/// Warp each per-image mask (i >= 1) by its deformation (nearest-neighbor)
/// and average the Dice against the b=0 mask. With no deformations
/// (pre-registration), pass identity fields or use the overload.
double mask_alignment_score(const std::vector<ImageF>& masks,
                            const std::vector<DeformationField>& deformations);
double mask_alignment_score(const std::vector<ImageF>& masks); // pre-registration

struct ParamRmse {
    double D = 0.0, Dstar = 0.0, f = 0.0;
};

/// Per-parameter root-mean-square error inside the mask.
ParamRmse param_rmse(const IvimMaps& est, const IvimMaps& gt, const ImageF& mask);

struct CohortRecord {
    std::string case_id;
    double ga_weeks = 0.0;
    std::string method;
    double mean_D = 0.0, mean_Dstar = 0.0, mean_f = 0.0;
};

enum class IvimParamSel { D, Dstar, f };

struct SubsetCorrelation {
    int n = 0;
    double r2 = 0.0;
    double pearson_r = 0.0;
    bool sufficient = false; // at least 3 records
};

/// Canalicular phase is GA < 26 weeks; saccular is the complement.
struct CorrelationReport {
    SubsetCorrelation canalicular, saccular;
};

inline constexpr double kCanalicularGaCutWeeks = 26.0;

/// Ordinary least squares of the selected parameter against GA per phase
/// subset. Constant parameter values give R^2 = 0; zero GA variance in a
/// sufficient subset is a degenerate-input error.
CorrelationReport correlate_ga(const std::vector<CohortRecord>& records, IvimParamSel param);

/// One grid-search case: the data plus whatever the criterion needs.
struct GridCase {
    std::string id;
    DwiCase dwi;
    std::optional<IvimMaps> gt_maps; // for the phantom f-RMSE criterion
    std::optional<ImageF> roi;
    std::optional<double> ga_weeks;  // for the clinical R^2 criterion
};

enum class GridCriterion { RmseF, R2F };

struct GridPoint {
    double alpha1 = 0.0, alpha2 = 0.0, alpha3 = 0.0;
    double score = 0.0; // higher is better (RmseF stores the negated RMSE)
    bool ok = false;
    std::string error;
};

struct GridResult {
    std::vector<GridPoint> table; // one row per grid point, in grid order
    int best_index = -1;
};

/// The hyperparameter grids swept by default (alpha1 x alpha2 x alpha3 =
/// 4 x 2 x 3 = 24 points).
std::vector<double> default_alpha1_grid(); // 0.5, 1, 5, 10
std::vector<double> default_alpha2_grid(); // 0.015, 0.03
std::vector<double> default_alpha3_grid(); // 0.1, 0.8, 5

/// Run optimize_case for every (alpha1, alpha2, alpha3) grid point over all
/// cases and score by the criterion: RmseF = -mean f-RMSE inside the ROI
/// (needs ground truth), R2F = canalicular R^2 of the ROI-mean f against
/// GA. Ties break toward the lexicographically smallest weights. Throws
/// with the table attached in the message when every point fails.
GridResult grid_search(const std::vector<GridCase>& cases, const std::vector<double>& alpha1,
                       const std::vector<double>& alpha2, const std::vector<double>& alpha3,
                       GridCriterion criterion, const OptConfig& base,
                       const ParamBounds& bounds = ParamBounds());

} // namespace ivim

#endif
