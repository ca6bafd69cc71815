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
#ifndef IVIM_IO_HPP
#define IVIM_IO_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ivim/baselines.hpp"
#include "ivim/case.hpp"
#include "ivim/eval.hpp"
#include "ivim/fit.hpp"
#include "ivim/optimizer.hpp"
#include "ivim/phantom.hpp"

namespace ivim {

struct LoadOptions {
    std::optional<std::pair<int, int>> crop_to; // center-anchored crop-or-pad (w, h)
    std::optional<int> slice;                   // pick one slice of a multi-slice volume
};

inline constexpr int kDefaultCropSize = 96;

/// Case directory layout (documented in the README):
///   images.nii + images.json           NIfTI stack, last axis = b-value,
///                                      sidecar with "bvalues" (required),
///                                      "ga_weeks", "normalized_by"
///   manifest.json + *.raw              alternative raw-plane form
///   mask.nii / roi.nii / lung_masks.nii  optional masks
DwiCase load_case(const std::filesystem::path& dir, const LoadOptions& options = LoadOptions());

void save_case(const DwiCase& dwi, const std::filesystem::path& dir);

/// Linear interpolation between order statistics (rank q * (n - 1)).
double quantile(std::span<const double> values, double q);

/// Divide every plane by the 0.99 quantile of the b=0 plane and record the
/// divisor. Already-normalized cases pass through unchanged.
DwiCase normalize_case(const DwiCase& dwi);

/// Maps (D/Dstar/f/S0 float32 NIfTI), deformations (2-channel float32),
/// loss_trace.csv, report.json with a config echo.
void save_result(const CaseResult& result, const std::filesystem::path& dir,
                 const OptConfig* config = nullptr);

// Cohort tables: case_id,ga_weeks,method,mean_D,mean_Dstar,mean_f
void write_cohort_csv(const std::filesystem::path& path, const std::vector<CohortRecord>& records);
std::vector<CohortRecord> read_cohort_csv(const std::filesystem::path& path);

void write_correlation_report(const std::filesystem::path& path, const CorrelationReport& report,
                              const std::string& parameter);
void write_grid_report(const std::filesystem::path& csv_path,
                       const std::filesystem::path& json_path, const GridResult& grid);

/// Top-level run configuration (JSON). Unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_dir = "results";
    ParamBounds bounds;
    OptConfig opt;
    FitConfig fit;
    RegistrationConfig registration;
    PhantomSpec phantom;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text);

} // namespace ivim

#endif
