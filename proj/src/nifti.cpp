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
#include "ivim/nifti.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace ivim {

namespace {

#pragma pack(push, 1)
struct NiftiHeader {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtInt32 = 8;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;
constexpr std::int16_t kDtUint16 = 512;

void require_little_endian() {
    if constexpr (std::endian::native != std::endian::little)
        throw IoError("NIfTI support requires a little-endian host");
}

template <class T>
void convert_raw(const std::vector<char>& raw, std::vector<float>& out) {
    const std::size_t n = raw.size() / sizeof(T);
    out.resize(n);
    const T* src = reinterpret_cast<const T*>(raw.data());
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(src[i]);
}

} // namespace

NiftiVolume read_nifti(const std::filesystem::path& path) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open NIfTI file: " + path.string());

    NiftiHeader hdr{};
    in.read(reinterpret_cast<char*>(&hdr), sizeof(hdr));
    if (!in) throw IoError("truncated NIfTI header: " + path.string());
    if (hdr.sizeof_hdr != 348)
        throw IoError("unsupported NIfTI header (byte-swapped or NIfTI-2): " + path.string());
    if (std::strncmp(hdr.magic, "n+1", 3) != 0)
        throw IoError("not a single-file NIfTI-1 volume: " + path.string());

    NiftiVolume vol;
    const int ndim = hdr.dim[0];
    if (ndim < 1 || ndim > 7) throw IoError("bad NIfTI dimension count: " + path.string());
    std::size_t count = 1;
    for (int i = 1; i <= ndim; ++i) {
        const int d = hdr.dim[i];
        if (d < 1) throw IoError("bad NIfTI dimension: " + path.string());
        vol.dims.push_back(d);
        count *= static_cast<std::size_t>(d);
    }

    std::size_t elem = 0;
    switch (hdr.datatype) {
    case kDtUint8: elem = 1; break;
    case kDtInt16:
    case kDtUint16: elem = 2; break;
    case kDtInt32:
    case kDtFloat32: elem = 4; break;
    case kDtFloat64: elem = 8; break;
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(hdr.datatype));
    }

    in.seekg(static_cast<std::streamoff>(hdr.vox_offset));
    std::vector<char> raw(count * elem);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("truncated NIfTI data: " + path.string());

    switch (hdr.datatype) {
    case kDtUint8: convert_raw<std::uint8_t>(raw, vol.data); break;
    case kDtInt16: convert_raw<std::int16_t>(raw, vol.data); break;
    case kDtUint16: convert_raw<std::uint16_t>(raw, vol.data); break;
    case kDtInt32: convert_raw<std::int32_t>(raw, vol.data); break;
    case kDtFloat32: convert_raw<float>(raw, vol.data); break;
    case kDtFloat64: convert_raw<double>(raw, vol.data); break;
    default: break;
    }

    if (hdr.scl_slope != 0.0f && !(hdr.scl_slope == 1.0f && hdr.scl_inter == 0.0f)) {
        for (float& v : vol.data) v = v * hdr.scl_slope + hdr.scl_inter;
    }
    return vol;
}

void write_nifti(const std::filesystem::path& path, const std::vector<int>& dims,
                 const std::vector<float>& data) {
    require_little_endian();
    if (dims.empty() || dims.size() > 7) throw ValidationError("write_nifti: bad dimension count");
    std::size_t count = 1;
    for (int d : dims) {
        if (d < 1) throw ValidationError("write_nifti: bad dimension");
        count *= static_cast<std::size_t>(d);
    }
    if (count != data.size()) throw ValidationError("write_nifti: data size does not match dims");

    NiftiHeader hdr{};
    hdr.sizeof_hdr = 348;
    hdr.regular = 'r';
    hdr.dim[0] = static_cast<std::int16_t>(dims.size());
    for (std::size_t i = 0; i < 8; ++i) hdr.dim[i + 1] = 1;
    for (std::size_t i = 0; i < dims.size(); ++i) hdr.dim[i + 1] = static_cast<std::int16_t>(dims[i]);
    hdr.datatype = kDtFloat32;
    hdr.bitpix = 32;
    for (float& p : hdr.pixdim) p = 1.0f;
    hdr.vox_offset = 352.0f;
    hdr.scl_slope = 1.0f;
    hdr.scl_inter = 0.0f;
    hdr.sform_code = 1;
    hdr.srow_x[0] = 1.0f;
    hdr.srow_y[1] = 1.0f;
    hdr.srow_z[2] = 1.0f;
    std::memcpy(hdr.magic, "n+1", 4);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create NIfTI file: " + path.string());
    out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    const char pad[4] = {0, 0, 0, 0}; // empty extension block
    out.write(pad, 4);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw IoError("failed writing NIfTI data: " + path.string());
}

void write_nifti_planes(const std::filesystem::path& path, const std::vector<ImageF>& planes) {
    if (planes.empty()) throw ValidationError("write_nifti_planes: empty stack");
    const int w = planes[0].width, h = planes[0].height;
    std::vector<float> data;
    data.reserve(static_cast<std::size_t>(w) * h * planes.size());
    for (const ImageF& p : planes) {
        require_same_shape(p, planes[0], "write_nifti_planes");
        data.insert(data.end(), p.data.begin(), p.data.end());
    }
    write_nifti(path, {w, h, static_cast<int>(planes.size())}, data);
}

void write_nifti_image(const std::filesystem::path& path, const ImageF& image) {
    write_nifti(path, {image.width, image.height}, image.data);
}

std::vector<ImageF> read_nifti_planes(const std::filesystem::path& path) {
    const NiftiVolume vol = read_nifti(path);
    if (vol.dims.size() < 2) throw IoError("NIfTI volume has fewer than 2 dimensions");
    const int w = vol.dims[0], h = vol.dims[1];
    std::size_t planes = 1;
    for (std::size_t i = 2; i < vol.dims.size(); ++i) planes *= vol.dims[i];
    std::vector<ImageF> out(planes, ImageF(w, h));
    const std::size_t plane_px = static_cast<std::size_t>(w) * h;
    for (std::size_t p = 0; p < planes; ++p)
        std::copy_n(vol.data.begin() + p * plane_px, plane_px, out[p].data.begin());
    return out;
}

void write_nifti_field(const std::filesystem::path& path, const VectorField2D& field) {
    std::vector<ImageF> planes{to_float(field.x), to_float(field.y)};
    write_nifti_planes(path, planes);
}

DeformationField read_nifti_field(const std::filesystem::path& path) {
    const std::vector<ImageF> planes = read_nifti_planes(path);
    if (planes.size() != 2) throw IoError("deformation field file must have exactly 2 channels");
    DeformationField phi(planes[0].width, planes[0].height);
    phi.x = to_double(planes[0]);
    phi.y = to_double(planes[1]);
    return phi;
}

} // namespace ivim
