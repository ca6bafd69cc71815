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
#include "ivim/io.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ivim/nifti.hpp"

namespace ivim {

using nlohmann::json;

namespace {

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* section) {
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            throw ConfigError(std::string("unknown key '") + key + "' in " + section);
    }
}

ImageF crop_or_pad(const ImageF& img, int tw, int th) {
    ImageF out(tw, th, 0.0f);
    const int ox = (img.width - tw) / 2, oy = (img.height - th) / 2;
    for (int y = 0; y < th; ++y) {
        const int sy = y + oy;
        if (sy < 0 || sy >= img.height) continue;
        for (int x = 0; x < tw; ++x) {
            const int sx = x + ox;
            if (sx < 0 || sx >= img.width) continue;
            out(x, y) = img(sx, sy);
        }
    }
    return out;
}

std::vector<ImageF> load_planes_from_manifest(const std::filesystem::path& dir, const json& manifest) {
    const int w = manifest.at("width").get<int>();
    const int h = manifest.at("height").get<int>();
    std::vector<ImageF> planes;
    for (const auto& name : manifest.at("planes")) {
        std::ifstream in(dir / name.get<std::string>(), std::ios::binary);
        if (!in) throw IoError("cannot open raw plane " + (dir / name.get<std::string>()).string());
        ImageF img(w, h);
        in.read(reinterpret_cast<char*>(img.data.data()),
                static_cast<std::streamsize>(img.size() * sizeof(float)));
        if (!in) throw IoError("truncated raw plane " + name.get<std::string>());
        planes.push_back(std::move(img));
    }
    return planes;
}

} // namespace

DwiCase load_case(const std::filesystem::path& dir, const LoadOptions& options) {
    if (!std::filesystem::is_directory(dir))
        throw ValidationError("case path is not a directory: " + dir.string());

    DwiCase dwi;
    json sidecar;
    std::vector<ImageF> planes;

    if (std::filesystem::exists(dir / "images.nii")) {
        if (!std::filesystem::exists(dir / "images.json"))
            throw ValidationError("missing sidecar images.json next to images.nii in " + dir.string());
        sidecar = load_json(dir / "images.json");
        check_keys(sidecar, {"bvalues", "ga_weeks", "normalized_by"}, "images.json");
        const NiftiVolume vol = read_nifti(dir / "images.nii");
        if (vol.dims.size() == 4) {
            // multi-slice: dims = {w, h, slices, bvalues}
            if (!options.slice)
                throw ValidationError("multi-slice volume requires --slice in " + dir.string());
            const int w = vol.dims[0], h = vol.dims[1], ns = vol.dims[2], nb = vol.dims[3];
            if (*options.slice < 0 || *options.slice >= ns)
                throw ValidationError("slice index out of range");
            const std::size_t plane_px = static_cast<std::size_t>(w) * h;
            for (int b = 0; b < nb; ++b) {
                ImageF img(w, h);
                const std::size_t off = plane_px * (static_cast<std::size_t>(b) * ns + *options.slice);
                std::copy_n(vol.data.begin() + off, plane_px, img.data.begin());
                planes.push_back(std::move(img));
            }
        } else {
            planes = read_nifti_planes(dir / "images.nii");
        }
    } else if (std::filesystem::exists(dir / "manifest.json")) {
        sidecar = load_json(dir / "manifest.json");
        check_keys(sidecar, {"bvalues", "ga_weeks", "normalized_by", "width", "height", "planes"},
                   "manifest.json");
        planes = load_planes_from_manifest(dir, sidecar);
    } else {
        throw ValidationError("no images.nii or manifest.json in " + dir.string());
    }

    if (!sidecar.contains("bvalues"))
        throw ValidationError("sidecar is missing the \"bvalues\" list in " + dir.string());
    dwi.schedule.values = sidecar["bvalues"].get<std::vector<double>>();
    if (sidecar.contains("ga_weeks")) dwi.ga_weeks = sidecar["ga_weeks"].get<double>();
    if (sidecar.contains("normalized_by")) dwi.normalized_by = sidecar["normalized_by"].get<double>();

    if (planes.size() != dwi.schedule.values.size())
        throw ValidationError("b-value count (" + std::to_string(dwi.schedule.values.size()) +
                              ") does not match image count (" + std::to_string(planes.size()) +
                              ") in " + dir.string());

    auto load_mask = [&](const char* name) -> std::optional<ImageF> {
        const std::filesystem::path p = dir / name;
        if (!std::filesystem::exists(p)) return std::nullopt;
        std::vector<ImageF> m = read_nifti_planes(p);
        if (m.size() != 1) throw ValidationError(std::string(name) + " must be a single plane");
        return m[0];
    };
    dwi.mask = load_mask("mask.nii");
    dwi.roi = load_mask("roi.nii");
    if (std::filesystem::exists(dir / "lung_masks.nii"))
        dwi.lung_masks = read_nifti_planes(dir / "lung_masks.nii");

    if (options.crop_to) {
        const auto [tw, th] = *options.crop_to;
        for (ImageF& p : planes) p = crop_or_pad(p, tw, th);
        if (dwi.mask) dwi.mask = crop_or_pad(*dwi.mask, tw, th);
        if (dwi.roi) dwi.roi = crop_or_pad(*dwi.roi, tw, th);
        for (ImageF& m : dwi.lung_masks) m = crop_or_pad(m, tw, th);
    }
    dwi.images.reserve(planes.size());
    for (const ImageF& p : planes) dwi.images.push_back(to_double(p));
    dwi.validate();
    return dwi;
}

void save_case(const DwiCase& dwi, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<ImageF> planes;
    planes.reserve(dwi.images.size());
    for (const ImageD& img : dwi.images) planes.push_back(to_float(img));
    write_nifti_planes(dir / "images.nii", planes);
    json sidecar;
    sidecar["bvalues"] = dwi.schedule.values;
    if (dwi.ga_weeks) sidecar["ga_weeks"] = *dwi.ga_weeks;
    if (dwi.normalized_by) sidecar["normalized_by"] = *dwi.normalized_by;
    std::ofstream out(dir / "images.json");
    if (!out) throw IoError("cannot write sidecar in " + dir.string());
    out << sidecar.dump(2) << "\n";
    if (dwi.mask) write_nifti_image(dir / "mask.nii", *dwi.mask);
    if (dwi.roi) write_nifti_image(dir / "roi.nii", *dwi.roi);
    if (!dwi.lung_masks.empty()) write_nifti_planes(dir / "lung_masks.nii", dwi.lung_masks);
}

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw DegenerateInputError("quantile: empty input");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double rank = q * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - lo;
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

DwiCase normalize_case(const DwiCase& dwi) {
    if (dwi.normalized_by) return dwi; // idempotent
    const double q = quantile(dwi.images.at(0).data, 0.99);
    if (q <= 0.0) throw DegenerateInputError("normalize_case: non-positive 0.99 quantile of b=0");
    DwiCase out = dwi;
    for (ImageD& plane : out.images)
        for (double& v : plane.data) v /= q;
    out.normalized_by = q;
    return out;
}

namespace {

json opt_config_to_json(const OptConfig& c) {
    json j;
    j["learning_rate"] = c.learning_rate;
    j["max_iterations"] = c.max_iterations;
    j["patience"] = c.patience;
    j["factor"] = c.factor;
    j["min_learning_rate"] = c.min_learning_rate;
    j["improvement_tol"] = c.improvement_tol;
    j["seed"] = c.seed;
    j["init"] = c.init == InitMode::ClassicalFit ? "classical-fit" : "mid-bounds";
    j["grad_smooth_sigma"] = c.grad_smooth_sigma;
    j["svf_steps"] = c.svf_steps;
    j["loss"] = {{"alpha1", c.loss.alpha1},
                 {"alpha2", c.loss.alpha2},
                 {"alpha3", c.loss.alpha3},
                 {"ncc_window", c.loss.ncc_window},
                 {"wser_unknowns", c.loss.wser_unknowns}};
    return j;
}

} // namespace

void save_result(const CaseResult& result, const std::filesystem::path& dir,
                 const OptConfig* config) {
    std::filesystem::create_directories(dir);
    write_nifti_image(dir / "D.nii", to_float(result.maps.D));
    write_nifti_image(dir / "Dstar.nii", to_float(result.maps.Dstar));
    write_nifti_image(dir / "f.nii", to_float(result.maps.f));
    write_nifti_image(dir / "S0.nii", to_float(result.maps.S0));
    for (std::size_t i = 0; i < result.deformations.size(); ++i) {
        std::ostringstream name;
        name << "deformation_" << (i + 1) << ".nii";
        write_nifti_field(dir / name.str(), result.deformations[i]);
    }
    if (!result.corrected.empty()) {
        std::vector<ImageF> planes;
        planes.reserve(result.corrected.size());
        for (const ImageD& img : result.corrected) planes.push_back(to_float(img));
        write_nifti_planes(dir / "corrected.nii", planes);
    }

    {
        std::ofstream trace(dir / "loss_trace.csv");
        if (!trace) throw IoError("cannot write loss trace in " + dir.string());
        trace << "iteration,total,fit,smooth,sim\n";
        for (std::size_t i = 0; i < result.trace.size(); ++i) {
            const LossBreakdown& l = result.trace[i];
            trace.precision(17);
            trace << i << "," << l.total << "," << l.fit << "," << l.smooth << "," << l.sim << "\n";
        }
    }

    json report;
    report["best_iteration"] = result.best_iteration;
    report["iterations_evaluated"] = result.trace.size();
    report["final_loss"] = {{"total", result.final_loss.total},
                            {"fit", result.final_loss.fit},
                            {"smooth", result.final_loss.smooth},
                            {"sim", result.final_loss.sim}};
    if (config) report["config"] = opt_config_to_json(*config);
    std::ofstream rep(dir / "report.json");
    if (!rep) throw IoError("cannot write report in " + dir.string());
    rep << report.dump(2) << "\n";
}

void write_cohort_csv(const std::filesystem::path& path, const std::vector<CohortRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "case_id,ga_weeks,method,mean_D,mean_Dstar,mean_f\n";
    out.precision(17);
    for (const CohortRecord& r : records)
        out << r.case_id << "," << r.ga_weeks << "," << r.method << "," << r.mean_D << ","
            << r.mean_Dstar << "," << r.mean_f << "\n";
}

std::vector<CohortRecord> read_cohort_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty cohort table " + path.string());
    std::vector<CohortRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        CohortRecord r;
        std::string field;
        auto next = [&](const char* what) {
            if (!std::getline(ss, field, ','))
                throw ValidationError(std::string("cohort table missing field ") + what);
            return field;
        };
        r.case_id = next("case_id");
        r.ga_weeks = std::stod(next("ga_weeks"));
        r.method = next("method");
        r.mean_D = std::stod(next("mean_D"));
        r.mean_Dstar = std::stod(next("mean_Dstar"));
        r.mean_f = std::stod(next("mean_f"));
        records.push_back(std::move(r));
    }
    return records;
}

void write_correlation_report(const std::filesystem::path& path, const CorrelationReport& report,
                              const std::string& parameter) {
    json j;
    j["parameter"] = parameter;
    auto subset = [](const SubsetCorrelation& s) {
        return json{{"n", s.n}, {"sufficient", s.sufficient}, {"r2", s.r2}, {"pearson_r", s.pearson_r}};
    };
    j["canalicular"] = subset(report.canalicular);
    j["saccular"] = subset(report.saccular);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void write_grid_report(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                       const GridResult& grid) {
    {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write " + csv_path.string());
        out << "alpha1,alpha2,alpha3,score,ok,error\n";
        out.precision(17);
        for (const GridPoint& p : grid.table)
            out << p.alpha1 << "," << p.alpha2 << "," << p.alpha3 << "," << p.score << ","
                << (p.ok ? 1 : 0) << "," << p.error << "\n";
    }
    json j;
    const GridPoint& best = grid.table.at(grid.best_index);
    j["best"] = {{"alpha1", best.alpha1},
                 {"alpha2", best.alpha2},
                 {"alpha3", best.alpha3},
                 {"score", best.score}};
    j["points"] = grid.table.size();
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot write " + json_path.string());
    out << j.dump(2) << "\n";
}

namespace {

Bounds1D parse_bounds1d(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError(std::string("bounds for ") + what + " must be a [min, max] pair");
    return Bounds1D{j[0].get<double>(), j[1].get<double>()};
}

IvimParams parse_params(const json& j, const char* section) {
    check_keys(j, {"D", "Dstar", "f", "S0"}, section);
    IvimParams p;
    if (j.contains("D")) p.D = j["D"].get<double>();
    if (j.contains("Dstar")) p.Dstar = j["Dstar"].get<double>();
    if (j.contains("f")) p.f = j["f"].get<double>();
    if (j.contains("S0")) p.S0 = j["S0"].get<double>();
    return p;
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed config JSON: ") + e.what());
    }
    check_keys(j, {"seed", "threads", "out", "bounds", "loss", "opt", "fit", "registration",
                   "phantom"},
               "config");

    RunConfig cfg;
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();

    if (j.contains("bounds")) {
        const json& b = j["bounds"];
        check_keys(b, {"D", "f", "Dstar"}, "bounds");
        if (b.contains("D")) cfg.bounds.D = parse_bounds1d(b["D"], "D");
        if (b.contains("f")) cfg.bounds.f = parse_bounds1d(b["f"], "f");
        if (b.contains("Dstar")) cfg.bounds.Dstar = parse_bounds1d(b["Dstar"], "Dstar");
        cfg.bounds.validate();
    }

    if (j.contains("loss")) {
        const json& l = j["loss"];
        check_keys(l, {"alpha1", "alpha2", "alpha3", "ncc_window", "wser_unknowns"}, "loss");
        LossConfig& lc = cfg.opt.loss;
        if (l.contains("alpha1")) lc.alpha1 = l["alpha1"].get<double>();
        if (l.contains("alpha2")) lc.alpha2 = l["alpha2"].get<double>();
        if (l.contains("alpha3")) lc.alpha3 = l["alpha3"].get<double>();
        if (l.contains("ncc_window")) lc.ncc_window = l["ncc_window"].get<int>();
        if (l.contains("wser_unknowns")) lc.wser_unknowns = l["wser_unknowns"].get<int>();
        lc.validate();
    }

    if (j.contains("opt")) {
        const json& o = j["opt"];
        check_keys(o, {"learning_rate", "max_iterations", "patience", "factor", "min_learning_rate",
                       "improvement_tol", "init", "grad_smooth_sigma", "svf_steps"},
                   "opt");
        OptConfig& oc = cfg.opt;
        if (o.contains("learning_rate")) oc.learning_rate = o["learning_rate"].get<double>();
        if (o.contains("max_iterations")) oc.max_iterations = o["max_iterations"].get<int>();
        if (o.contains("patience")) oc.patience = o["patience"].get<int>();
        if (o.contains("factor")) oc.factor = o["factor"].get<double>();
        if (o.contains("min_learning_rate"))
            oc.min_learning_rate = o["min_learning_rate"].get<double>();
        if (o.contains("improvement_tol")) oc.improvement_tol = o["improvement_tol"].get<double>();
        if (o.contains("grad_smooth_sigma"))
            oc.grad_smooth_sigma = o["grad_smooth_sigma"].get<double>();
        if (o.contains("svf_steps")) oc.svf_steps = o["svf_steps"].get<int>();
        if (o.contains("init")) {
            const std::string mode = o["init"].get<std::string>();
            if (mode == "classical-fit")
                oc.init = InitMode::ClassicalFit;
            else if (mode == "mid-bounds")
                oc.init = InitMode::MidBounds;
            else
                throw ConfigError("opt.init must be 'classical-fit' or 'mid-bounds'");
        }
        oc.validate();
    }
    cfg.opt.seed = cfg.seed;

    if (j.contains("fit")) {
        const json& f = j["fit"];
        check_keys(f, {"b_threshold", "max_iterations", "step_tol", "cost_tol"}, "fit");
        if (f.contains("b_threshold")) cfg.fit.b_threshold = f["b_threshold"].get<double>();
        if (f.contains("max_iterations")) cfg.fit.max_iterations = f["max_iterations"].get<int>();
        if (f.contains("step_tol")) cfg.fit.step_tol = f["step_tol"].get<double>();
        if (f.contains("cost_tol")) cfg.fit.cost_tol = f["cost_tol"].get<double>();
    }

    if (j.contains("registration")) {
        const json& r = j["registration"];
        check_keys(r, {"lambda", "levels", "svf_levels", "iterations", "affine_rate", "svf_rate",
                       "update_sigma", "max_step_px", "ncc_window", "svf_steps"},
                   "registration");
        if (r.contains("lambda")) cfg.registration.lambda = r["lambda"].get<double>();
        if (r.contains("levels")) cfg.registration.levels = r["levels"].get<int>();
        if (r.contains("svf_levels")) cfg.registration.svf_levels = r["svf_levels"].get<int>();
        if (r.contains("update_sigma")) cfg.registration.update_sigma = r["update_sigma"].get<double>();
        if (r.contains("max_step_px")) cfg.registration.max_step_px = r["max_step_px"].get<double>();
        if (r.contains("iterations")) cfg.registration.iterations = r["iterations"].get<int>();
        if (r.contains("affine_rate")) cfg.registration.affine_rate = r["affine_rate"].get<double>();
        if (r.contains("svf_rate")) cfg.registration.svf_rate = r["svf_rate"].get<double>();
        if (r.contains("ncc_window")) cfg.registration.ncc_window = r["ncc_window"].get<int>();
        if (r.contains("svf_steps")) cfg.registration.svf_steps = r["svf_steps"].get<int>();
        cfg.registration.validate();
    }

    if (j.contains("phantom")) {
        const json& p = j["phantom"];
        check_keys(p,
                   {"width", "height", "bvalues", "background", "roi", "roi_center", "roi_radius",
                    "roi_f_ramp", "roi_f_range", "texture_amplitude", "motion_max_px",
                    "motion_sigma_px", "snr", "seed"},
                   "phantom");
        PhantomSpec& ps = cfg.phantom;
        if (p.contains("width")) ps.width = p["width"].get<int>();
        if (p.contains("height")) ps.height = p["height"].get<int>();
        if (p.contains("bvalues")) ps.schedule.values = p["bvalues"].get<std::vector<double>>();
        if (p.contains("background")) ps.background = parse_params(p["background"], "background");
        if (p.contains("roi")) ps.roi = parse_params(p["roi"], "roi");
        if (p.contains("roi_center")) {
            ps.roi_center_x = p["roi_center"][0].get<double>();
            ps.roi_center_y = p["roi_center"][1].get<double>();
        }
        if (p.contains("roi_radius")) {
            ps.roi_radius_x = p["roi_radius"][0].get<double>();
            ps.roi_radius_y = p["roi_radius"][1].get<double>();
        }
        if (p.contains("roi_f_ramp")) ps.roi_f_ramp = p["roi_f_ramp"].get<bool>();
        if (p.contains("roi_f_range")) {
            ps.roi_f_low = p["roi_f_range"][0].get<double>();
            ps.roi_f_high = p["roi_f_range"][1].get<double>();
        }
        if (p.contains("texture_amplitude"))
            ps.texture_amplitude = p["texture_amplitude"].get<double>();
        if (p.contains("motion_max_px")) ps.motion_max_px = p["motion_max_px"].get<double>();
        if (p.contains("motion_sigma_px")) ps.motion_sigma_px = p["motion_sigma_px"].get<double>();
        if (p.contains("snr")) ps.snr = p["snr"].get<double>();
        if (p.contains("seed")) ps.seed = p["seed"].get<std::uint64_t>();
        ps.bounds = cfg.bounds;
        ps.validate();
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

} // namespace ivim
