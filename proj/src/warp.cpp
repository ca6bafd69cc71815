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
#include "ivim/warp.hpp"

#include <cmath>

#include "ivim/parallel.hpp"

namespace ivim {

namespace {

// Bilinear sampling cell at a (possibly out-of-range) continuous position.
// Positions are clamped to [0, w-1] x [0, h-1]; the base corner is pulled in
// so that x0+1 stays valid, which makes sampling at exactly w-1 land on the
// last pixel with weight 1.
struct SampleCell {
    int x0, y0;
    double wx, wy;
    bool in_x, in_y; // raw position inside the open clamp range (position gradient alive)
};

inline SampleCell make_cell(double sx, double sy, int w, int h) {
    SampleCell c;
    c.in_x = sx >= 0.0 && sx <= static_cast<double>(w - 1);
    c.in_y = sy >= 0.0 && sy <= static_cast<double>(h - 1);
    double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    c.x0 = std::min(static_cast<int>(cx), w - 2);
    c.y0 = std::min(static_cast<int>(cy), h - 2);
    c.wx = cx - c.x0;
    c.wy = cy - c.y0;
    return c;
}

// Four-weight form: exact where wx/wy are exactly 0 or 1, so identity
// deformations reproduce the input bit-for-bit.
inline double cell_value(const ImageD& img, const SampleCell& c) {
    const double v00 = img(c.x0, c.y0);
    const double v10 = img(c.x0 + 1, c.y0);
    const double v01 = img(c.x0, c.y0 + 1);
    const double v11 = img(c.x0 + 1, c.y0 + 1);
    return v00 * (1.0 - c.wx) * (1.0 - c.wy) + v10 * c.wx * (1.0 - c.wy) +
           v01 * (1.0 - c.wx) * c.wy + v11 * c.wx * c.wy;
}

// d value / d (sx, sy); zero on a clamped axis.
inline void cell_position_grad(const ImageD& img, const SampleCell& c, double& gx, double& gy) {
    const double v00 = img(c.x0, c.y0);
    const double v10 = img(c.x0 + 1, c.y0);
    const double v01 = img(c.x0, c.y0 + 1);
    const double v11 = img(c.x0 + 1, c.y0 + 1);
    gx = c.in_x ? (1.0 - c.wy) * (v10 - v00) + c.wy * (v11 - v01) : 0.0;
    gy = c.in_y ? (1.0 - c.wx) * (v01 - v00) + c.wx * (v11 - v10) : 0.0;
}

inline void check_warp_shapes(const ImageD& img, const VectorField2D& phi, const char* what) {
    if (img.width < 2 || img.height < 2) throw ShapeError(std::string(what) + ": image smaller than 2x2");
    if (img.width != phi.width() || img.height != phi.height())
        throw ShapeError(std::string(what) + ": field/image shape mismatch");
    if (!phi.x.same_shape(phi.y)) throw ShapeError(std::string(what) + ": field component shapes differ");
}

} // namespace

ImageD warp_image(const ImageD& img, const DeformationField& phi) {
    check_warp_shapes(img, phi, "warp_image");
    const int w = img.width, h = img.height;
    ImageD out(w, h);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const SampleCell c = make_cell(x + phi.x(x, y), y + phi.y(x, y), w, h);
            out(x, y) = cell_value(img, c);
        }
    });
    return out;
}

void warp_image_backward(const ImageD& img, const DeformationField& phi, const ImageD& d_out,
                         ImageD* d_img, VectorField2D* d_phi) {
    check_warp_shapes(img, phi, "warp_image_backward");
    require_same_shape(img, d_out, "warp_image_backward");
    const int w = img.width, h = img.height;

    if (d_phi) {
        d_phi->x = ImageD(w, h);
        d_phi->y = ImageD(w, h);
        par::for_rows(h, [&](int y) {
            for (int x = 0; x < w; ++x) {
                const SampleCell c = make_cell(x + phi.x(x, y), y + phi.y(x, y), w, h);
                double gx, gy;
                cell_position_grad(img, c, gx, gy);
                d_phi->x(x, y) = d_out(x, y) * gx;
                d_phi->y(x, y) = d_out(x, y) * gy;
            }
        });
    }

    if (d_img) {
        // Scatter with overlapping targets: single-threaded so the
        // accumulation order is independent of the thread count.
        *d_img = ImageD(w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const SampleCell c = make_cell(x + phi.x(x, y), y + phi.y(x, y), w, h);
                const double g = d_out(x, y);
                (*d_img)(c.x0, c.y0) += g * (1.0 - c.wx) * (1.0 - c.wy);
                (*d_img)(c.x0 + 1, c.y0) += g * c.wx * (1.0 - c.wy);
                (*d_img)(c.x0, c.y0 + 1) += g * (1.0 - c.wx) * c.wy;
                (*d_img)(c.x0 + 1, c.y0 + 1) += g * c.wx * c.wy;
            }
        }
    }
}

void spatial_gradient(const ImageD& f, ImageD& gx, ImageD& gy) {
    const int w = f.width, h = f.height;
    gx = ImageD(w, h);
    gy = ImageD(w, h);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x + 1 < w; ++x) gx(x, y) = f(x + 1, y) - f(x, y);
        if (w > 1) gx(w - 1, y) = gx(w - 2, y);
        if (y + 1 < h) {
            for (int x = 0; x < w; ++x) gy(x, y) = f(x, y + 1) - f(x, y);
        }
    });
    if (h > 1) {
        for (int x = 0; x < w; ++x) gy(x, h - 1) = gy(x, h - 2);
    }
}

void spatial_gradient_adjoint(const ImageD& dgx, const ImageD& dgy, ImageD& df) {
    require_same_shape(dgx, dgy, "spatial_gradient_adjoint");
    const int w = dgx.width, h = dgx.height;
    df = ImageD(w, h);
    // Rows are independent for the x part.
    par::for_rows(h, [&](int y) {
        for (int x = 0; x + 1 < w; ++x) {
            df(x + 1, y) += dgx(x, y);
            df(x, y) -= dgx(x, y);
        }
        if (w > 1) {
            df(w - 1, y) += dgx(w - 1, y);
            df(w - 2, y) -= dgx(w - 1, y);
        }
    });
    // Columns are independent for the y part.
    par::for_index(w, [&](int x) {
        for (int y = 0; y + 1 < h; ++y) {
            df(x, y + 1) += dgy(x, y);
            df(x, y) -= dgy(x, y);
        }
        if (h > 1) {
            df(x, h - 1) += dgy(x, h - 1);
            df(x, h - 2) -= dgy(x, h - 1);
        }
    });
}

DeformationField compose(const DeformationField& a, const DeformationField& b) {
    if (!a.same_shape(b)) throw ShapeError("compose: field shape mismatch");
    const int w = a.width(), h = a.height();
    DeformationField out(w, h);
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const SampleCell c = make_cell(x + b.x(x, y), y + b.y(x, y), w, h);
            out.x(x, y) = b.x(x, y) + cell_value(a.x, c);
            out.y(x, y) = b.y(x, y) + cell_value(a.y, c);
        }
    });
    return out;
}

void compose_backward(const VectorField2D& a, const VectorField2D& b, const VectorField2D& d_out,
                      VectorField2D& d_a, VectorField2D& d_b) {
    if (!a.same_shape(b) || !a.same_shape(d_out)) throw ShapeError("compose_backward: shape mismatch");
    const int w = a.width(), h = a.height();
    d_a = VectorField2D(w, h);
    d_b = VectorField2D(w, h);

    // Gather part: identity term plus position gradients through both
    // sampled components.
    par::for_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const SampleCell c = make_cell(x + b.x(x, y), y + b.y(x, y), w, h);
            double gxx, gxy, gyx, gyy;
            cell_position_grad(a.x, c, gxx, gxy);
            cell_position_grad(a.y, c, gyx, gyy);
            d_b.x(x, y) = d_out.x(x, y) * (1.0 + gxx) + d_out.y(x, y) * gyx;
            d_b.y(x, y) = d_out.y(x, y) * (1.0 + gyy) + d_out.x(x, y) * gxy;
        }
    });

    // Scatter part: bilinear weights back onto a. Single-threaded for a
    // thread-count-independent accumulation order.
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const SampleCell c = make_cell(x + b.x(x, y), y + b.y(x, y), w, h);
            const double w00 = (1.0 - c.wx) * (1.0 - c.wy);
            const double w10 = c.wx * (1.0 - c.wy);
            const double w01 = (1.0 - c.wx) * c.wy;
            const double w11 = c.wx * c.wy;
            d_a.x(c.x0, c.y0) += d_out.x(x, y) * w00;
            d_a.x(c.x0 + 1, c.y0) += d_out.x(x, y) * w10;
            d_a.x(c.x0, c.y0 + 1) += d_out.x(x, y) * w01;
            d_a.x(c.x0 + 1, c.y0 + 1) += d_out.x(x, y) * w11;
            d_a.y(c.x0, c.y0) += d_out.y(x, y) * w00;
            d_a.y(c.x0 + 1, c.y0) += d_out.y(x, y) * w10;
            d_a.y(c.x0, c.y0 + 1) += d_out.y(x, y) * w01;
            d_a.y(c.x0 + 1, c.y0 + 1) += d_out.y(x, y) * w11;
        }
    }
}

namespace {

VectorField2D scale_field(const VectorField2D& v, double s) {
    VectorField2D out(v.width(), v.height());
    par::for_rows(v.height(), [&](int y) {
        for (int x = 0; x < v.width(); ++x) {
            out.x(x, y) = v.x(x, y) * s;
            out.y(x, y) = v.y(x, y) * s;
        }
    });
    return out;
}

} // namespace

DeformationField integrate_svf_recorded(const VelocityField& v, int steps, SvfTape& tape) {
    if (steps < 1) throw ValidationError("integrate_svf: steps must be >= 1");
    if (!v.x.same_shape(v.y)) throw ShapeError("integrate_svf: component shapes differ");
    tape.steps = steps;
    tape.stages.clear();
    tape.stages.reserve(steps);

    DeformationField phi(v.width(), v.height());
    static_cast<VectorField2D&>(phi) = scale_field(v, std::ldexp(1.0, -steps));
    for (int k = 0; k < steps; ++k) {
        tape.stages.push_back(phi);
        phi = compose(phi, phi);
    }
    return phi;
}

DeformationField integrate_svf(const VelocityField& v, int steps) {
    SvfTape tape;
    DeformationField phi = integrate_svf_recorded(v, steps, tape);
    return phi;
}

VectorField2D integrate_svf_backward(const SvfTape& tape, const VectorField2D& d_phi) {
    VectorField2D d = d_phi;
    VectorField2D d_a, d_b;
    for (int k = tape.steps - 1; k >= 0; --k) {
        compose_backward(tape.stages[k], tape.stages[k], d, d_a, d_b);
        par::for_rows(d.height(), [&](int y) {
            for (int x = 0; x < d.width(); ++x) {
                d.x(x, y) = d_a.x(x, y) + d_b.x(x, y);
                d.y(x, y) = d_a.y(x, y) + d_b.y(x, y);
            }
        });
    }
    return scale_field(d, std::ldexp(1.0, -tape.steps));
}

} // namespace ivim
