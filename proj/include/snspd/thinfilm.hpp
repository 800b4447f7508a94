// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "snspd/materials.hpp"
#include "snspd/sweep.hpp"

#include <json.hpp>

namespace snspd::thinfilm {

using Complex = std::complex<double>;

enum class Polarization { TE, TM };

struct Layer {
    std::string material_id;
    double thickness{0.0};  // meters
    bool is_meander{false};
};

/// Ordered film stack between two semi-infinite media, illuminated from the
/// incidence side. The meander layer, if present, is homogenized with the
/// stack's fill factor against the ambient material.
struct LayerStack {
    std::string incidence_medium;
    std::vector<Layer> layers;
    std::string exit_medium;
    double meander_fill{0.625};
    std::string meander_ambient;  // material filling the meander gaps

    // An empty layer list is a bare interface between the two media.
    void validate() const {
        int meanders = 0;
        for (const auto& l : layers) {
            if (!(l.thickness > 0.0))
                throw std::invalid_argument("layer '" + l.material_id +
                                            "': thickness must be > 0");
            meanders += l.is_meander ? 1 : 0;
        }
        if (meanders > 1)
            throw std::invalid_argument("at most one meander layer allowed");
        if (meanders == 1 && meander_fill < 1.0 && meander_ambient.empty())
            throw std::invalid_argument(
                "meander layer needs meander_ambient when fill < 1");
    }
};

struct StackResponse {
    double R{0.0};
    double T{0.0};
    std::vector<double> absorptance_per_layer;  // aligned with stack.layers

    double total_absorptance() const {
        double a = 0.0;
        for (double v : absorptance_per_layer) a += v;
        return a;
    }
};

using Matrix2 = std::array<std::array<Complex, 2>, 2>;

inline Matrix2 matmul(const Matrix2& a, const Matrix2& b) {
    return {{{a[0][0] * b[0][0] + a[0][1] * b[1][0],
              a[0][0] * b[0][1] + a[0][1] * b[1][1]},
             {a[1][0] * b[0][0] + a[1][1] * b[1][0],
              a[1][0] * b[0][1] + a[1][1] * b[1][1]}}};
}

/// cos(theta) inside a medium from Snell's law, decaying branch.
inline Complex snell_cos(Complex index, double n0_sin_theta0) {
    Complex s = n0_sin_theta0 / index;
    Complex c = std::sqrt(1.0 - s * s);
    if (std::imag(index * c) < 0.0) c = -c;
    if (std::imag(index * c) == 0.0 && std::real(index * c) < 0.0) c = -c;
    return c;
}

/// Tilted optical admittance in free-space-admittance units.
inline Complex admittance(Complex index, Complex cos_theta, Polarization pol) {
    return pol == Polarization::TE ? index * cos_theta : index / cos_theta;
}

/// Characteristic matrix of a homogeneous film. det = 1.
inline Matrix2 layer_matrix(Complex index, double thickness, double wavelength,
                            Complex cos_theta, Polarization pol) {
    if (!(wavelength > 0.0))
        throw std::invalid_argument("wavelength must be > 0");
    Complex delta = 2.0 * std::numbers::pi * index * thickness * cos_theta /
                    wavelength;
    Complex eta = admittance(index, cos_theta, pol);
    Complex c = std::cos(delta);
    Complex s = std::sin(delta);
    // front-from-back map for the e^{-i omega t} convention (N = n + i*k)
    const Complex mi{0.0, -1.0};
    return {{{c, mi * s / eta}, {mi * eta * s, c}}};
}

inline Matrix2 layer_matrix(const Layer& layer, const MaterialDb& db,
                            double wavelength, Complex cos_theta,
                            Polarization pol) {
    return layer_matrix(db.index(layer.material_id, wavelength).value(),
                        layer.thickness, wavelength, cos_theta, pol);
}

namespace detail {

inline Complex resolve_index(const LayerStack& stack, const Layer& layer,
                             const MaterialDb& db, double wavelength) {
    ComplexIndex idx = db.index(layer.material_id, wavelength);
    if (layer.is_meander && stack.meander_fill < 1.0) {
        ComplexIndex ambient = db.index(stack.meander_ambient, wavelength);
        idx = effective_meander_index(idx, ambient, stack.meander_fill);
    }
    return idx.value();
}

struct FieldState {
    std::vector<Complex> boundary_E;  // size layers+1, front of layer j at [j]
    std::vector<Complex> boundary_H;
    std::vector<Complex> layer_index;
    std::vector<Complex> layer_cos;
    Complex eta_in, eta_out;
    Complex incident_E, reflected_E;
};

/// Back-propagate tangential fields from the exit boundary (E=1, H=eta_out).
inline FieldState solve_fields(const LayerStack& stack, const MaterialDb& db,
                               double wavelength, double angle,
                               Polarization pol) {
    stack.validate();
    ComplexIndex inc = db.index(stack.incidence_medium, wavelength);
    if (!inc.lossless())
        throw std::invalid_argument("incidence medium '" +
                                    stack.incidence_medium +
                                    "' must be lossless");
    double n0_sin = inc.n * std::sin(angle);
    const std::size_t nl = stack.layers.size();

    FieldState st;
    st.layer_index.resize(nl);
    st.layer_cos.resize(nl);
    st.boundary_E.assign(nl + 1, {});
    st.boundary_H.assign(nl + 1, {});

    Complex cos0 = std::cos(angle);
    st.eta_in = admittance(inc.value(), cos0, pol);
    Complex exit_n = db.index(stack.exit_medium, wavelength).value();
    Complex exit_cos = snell_cos(exit_n, n0_sin);
    st.eta_out = admittance(exit_n, exit_cos, pol);

    st.boundary_E[nl] = 1.0;
    st.boundary_H[nl] = st.eta_out;
    for (std::size_t j = nl; j-- > 0;) {
        st.layer_index[j] = resolve_index(stack, stack.layers[j], db,
                                          wavelength);
        st.layer_cos[j] = snell_cos(st.layer_index[j], n0_sin);
        Matrix2 m = layer_matrix(st.layer_index[j], stack.layers[j].thickness,
                                 wavelength, st.layer_cos[j], pol);
        st.boundary_E[j] = m[0][0] * st.boundary_E[j + 1] +
                           m[0][1] * st.boundary_H[j + 1];
        st.boundary_H[j] = m[1][0] * st.boundary_E[j + 1] +
                           m[1][1] * st.boundary_H[j + 1];
    }
    st.incident_E = 0.5 * (st.boundary_E[0] + st.boundary_H[0] / st.eta_in);
    st.reflected_E = 0.5 * (st.boundary_E[0] - st.boundary_H[0] / st.eta_in);
    if (!(std::norm(st.incident_E) > 0.0) ||
        !std::isfinite(std::norm(st.incident_E)))
        throw std::runtime_error(
            "singular stack assembly (vanishing incident amplitude)");
    return st;
}

inline double flux(Complex E, Complex H) {
    return 0.5 * std::real(E * std::conj(H));
}

}  // namespace detail

/// R, T and per-layer absorptance from the Poynting-flux drop across each
/// layer, normalized to the incident flux.
inline StackResponse stack_response(const LayerStack& stack,
                                    const MaterialDb& db, double wavelength,
                                    double angle = 0.0,
                                    Polarization pol = Polarization::TE) {
    auto st = detail::solve_fields(stack, db, wavelength, angle, pol);
    double s_inc =
        0.5 * std::real(st.eta_in) * std::norm(st.incident_E);

    StackResponse out;
    out.R = std::norm(st.reflected_E) / std::norm(st.incident_E);
    out.T = detail::flux(st.boundary_E.back(), st.boundary_H.back()) / s_inc;
    const std::size_t nl = stack.layers.size();
    out.absorptance_per_layer.resize(nl);
    for (std::size_t j = 0; j < nl; ++j) {
        double a = (detail::flux(st.boundary_E[j], st.boundary_H[j]) -
                    detail::flux(st.boundary_E[j + 1], st.boundary_H[j + 1])) /
                   s_inc;
        if (a < 0.0) {
            if (a < -1e-9)
                throw std::runtime_error(
                    "negative layer absorptance: numerically unstable stack");
            a = 0.0;
        }
        out.absorptance_per_layer[j] = a;
    }
    if (!std::isfinite(out.R) || !std::isfinite(out.T))
        throw std::runtime_error("non-finite stack response");
    return out;
}

/// One row per wavelength: wavelength_nm, R, T, A_nbn, A_au, A_other.
inline SweepResult absorptance_spectrum(const LayerStack& stack,
                                        const MaterialDb& db,
                                        const std::vector<double>& wavelengths,
                                        double angle = 0.0,
                                        Polarization pol = Polarization::TE) {
    if (wavelengths.empty())
        throw std::invalid_argument("wavelength list must not be empty");
    SweepResult res;
    res.columns = {"wavelength_nm", "R", "T", "A_nbn", "A_au", "A_other"};
    for (double w : wavelengths) {
        auto r = stack_response(stack, db, w, angle, pol);
        double a_nbn = 0.0, a_au = 0.0, a_other = 0.0;
        for (std::size_t j = 0; j < stack.layers.size(); ++j) {
            double a = r.absorptance_per_layer[j];
            if (stack.layers[j].is_meander)
                a_nbn += a;
            else if (stack.layers[j].material_id == "au")
                a_au += a;
            else
                a_other += a;
        }
        res.add_row({w * 1e9, r.R, r.T, a_nbn, a_au, a_other});
    }
    return res;
}

inline LayerStack stack_from_json(const nlohmann::json& j) {
    LayerStack s;
    s.incidence_medium = j.at("incidence").get<std::string>();
    s.exit_medium = j.at("exit").get<std::string>();
    s.meander_fill = j.value("fill_factor", 0.625);
    s.meander_ambient = j.value("meander_ambient", std::string{});
    for (const auto& lj : j.at("layers")) {
        Layer l;
        l.material_id = lj.at("material").get<std::string>();
        l.thickness = lj.at("thickness_nm").get<double>() * 1e-9;
        l.is_meander = lj.value("meander", false);
        s.layers.push_back(std::move(l));
    }
    s.validate();
    return s;
}

inline LayerStack load_stack(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open stack file: " + path.string());
    nlohmann::json j;
    in >> j;
    return stack_from_json(j);
}

}  // namespace snspd::thinfilm
