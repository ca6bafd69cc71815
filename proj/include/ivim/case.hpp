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
#ifndef IVIM_CASE_HPP
#define IVIM_CASE_HPP

#include <optional>
#include <vector>

#include "ivim/image.hpp"
#include "ivim/model.hpp"

namespace ivim {

/// One subject: the per-b-value image stack plus optional masks and
/// metadata. Images are double in memory; serialization is float32.
struct DwiCase {
    std::vector<ImageD> images;        // schedule.count() planes, plane 0 is b=0
    BValueSchedule schedule;
    std::optional<ImageF> mask;        // analysis mask (nonzero = analyze)
    std::optional<ImageF> roi;         // lung ROI at b=0
    std::vector<ImageF> lung_masks;    // per-image lung masks, empty or one per plane
    std::optional<double> ga_weeks;    // gestational age
    std::optional<double> normalized_by; // 0.99-quantile divisor once normalized

    int width() const { return images.empty() ? 0 : images.front().width; }
    int height() const { return images.empty() ? 0 : images.front().height; }
    int num_bvalues() const { return static_cast<int>(images.size()); }

    void validate() const;
};

} // namespace ivim

#endif
