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
#ifndef IVIM_NIFTI_HPP
#define IVIM_NIFTI_HPP

#include <filesystem>
#include <vector>

#include "ivim/image.hpp"

namespace ivim {

/// Minimal single-file NIfTI-1 (.nii) support: little-endian, uncompressed.
/// Values are returned as float32 with scl_slope/scl_inter applied.
/// Readable datatypes: uint8, int16, int32, uint16, float32, float64.
struct NiftiVolume {
    std::vector<int> dims;   // spatial-first, e.g. {w, h, planes}
    std::vector<float> data; // x fastest, NIfTI order
};

NiftiVolume read_nifti(const std::filesystem::path& path);

/// Writes float32, dim count = dims.size(), pixdim 1, identity orientation.
void write_nifti(const std::filesystem::path& path, const std::vector<int>& dims,
                 const std::vector<float>& data);

// Convenience plane packing (plane data is already x-fastest row-major).
void write_nifti_planes(const std::filesystem::path& path, const std::vector<ImageF>& planes);
void write_nifti_image(const std::filesystem::path& path, const ImageF& image);
std::vector<ImageF> read_nifti_planes(const std::filesystem::path& path);

/// 2-channel field layout: dims {w, h, 2}, channel 0 = x displacement.
void write_nifti_field(const std::filesystem::path& path, const VectorField2D& field);
DeformationField read_nifti_field(const std::filesystem::path& path);

} // namespace ivim

#endif
