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
#include "ivim/case.hpp"

namespace ivim {

void DwiCase::validate() const {
    schedule.validate();
    if (static_cast<int>(images.size()) != schedule.count())
        throw ValidationError("DwiCase: image count does not match b-value count");
    for (const ImageD& img : images) {
        if (!img.same_shape(images.front())) throw ShapeError("DwiCase: image shapes differ");
        for (double v : img.data) {
            if (!std::isfinite(v)) throw ValidationError("DwiCase: non-finite intensity");
            if (v < 0.0) throw ValidationError("DwiCase: negative intensity");
        }
    }
    if (mask) require_same_shape(*mask, images.front(), "DwiCase mask");
    if (roi) require_same_shape(*roi, images.front(), "DwiCase roi");
    if (!lung_masks.empty()) {
        if (lung_masks.size() != images.size())
            throw ValidationError("DwiCase: per-image mask count does not match image count");
        for (const ImageF& m : lung_masks) require_same_shape(m, images.front(), "DwiCase lung mask");
    }
    if (ga_weeks && *ga_weeks <= 0.0) throw ValidationError("DwiCase: gestational age must be positive");
}

} // namespace ivim
