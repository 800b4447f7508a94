// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "snspd/materials.hpp"
#include "snspd/sweep.hpp"

#include <json.hpp>

namespace snspd::beamtrain {

using Complex = std::complex<double>;

/// q convention: physical (non-reduced) complex beam parameter. Within a
/// homogeneous medium of index n, q advances by the physical length and
/// 1/q = 1/R - i*lambda/(pi*n*w^2). Index steps are explicit FlatInterface
/// elements with ray matrix [[1,0],[0,n1/n2]].
inline Complex q_from_waist(double w0, double wavelength, double n) {
    if (!(w0 > 0.0 && wavelength > 0.0 && n > 0.0))
        throw std::invalid_argument("q_from_waist: inputs must be positive");
    return {0.0, std::numbers::pi * w0 * w0 * n / wavelength};
}

struct GaussianMode {
    double waist_radius;   // meters
    double wavelength;     // meters
    double medium_index{1.0};

    Complex q() const {
        return q_from_waist(waist_radius, wavelength, medium_index);
    }
};

struct FreeSpace {
    double length;          // meters
    std::string medium;     // material id
};

struct GrinSegment {
    double n0;
    double gradient;        // g, 1/meters
    double length;          // meters
    double diameter{125e-6};
};

struct FlatInterface {
    std::string from_medium;
    std::string to_medium;
};

using TrainElement = std::variant<FreeSpace, GrinSegment, FlatInterface>;

struct BeamTrain {
    GaussianMode input;
    std::vector<TrainElement> elements;
};

struct Abcd {
    double a, b, c, d;
    double det() const { return a * d - b * c; }
};

inline Complex apply_abcd(const Abcd& m, Complex q) {
    return (m.a * q + m.b) / (m.c * q + m.d);
}

inline Abcd element_abcd(const FreeSpace& e) { return {1.0, e.length, 0.0, 1.0}; }

// Physical-coordinate (x, theta) convention, matching the explicit flat
// interface matrices: the ray equation x'' = -g^2 x gives a matrix free of
// n0. (The familiar n0*g form belongs to the reduced (x, n*theta)
// convention, where flat interfaces are the identity instead.) The fixed
// point q = i/g reproduces the parabolic-profile fundamental mode radius
// w^2 = lambda/(pi*n0*g).
inline Abcd element_abcd(const GrinSegment& e) {
    if (!(e.gradient > 0.0))
        throw std::domain_error("GRIN gradient must be > 0");
    if (!(e.length > 0.0)) throw std::domain_error("GRIN length must be > 0");
    double gl = e.gradient * e.length;
    double c = std::cos(gl), s = std::sin(gl);
    return {c, s / e.gradient, -e.gradient * s, c};
}

inline Abcd interface_abcd(double n1, double n2) {
    return {1.0, 0.0, 0.0, n1 / n2};
}

inline Abcd element_abcd(const FlatInterface& e, const MaterialDb& db,
                         double wavelength) {
    return interface_abcd(db.index(e.from_medium, wavelength).n,
                          db.index(e.to_medium, wavelength).n);
}

struct BeamSample {
    double z;          // cumulative physical position, meters
    double w;          // 1/e^2 intensity radius, meters
    double curvature;  // radius of curvature, meters (inf at a waist)
};

struct PropagationResult {
    std::vector<BeamSample> samples;  // element boundaries + intra-element steps
    Complex final_q;
    double final_index;
    double max_grin_fill{0.0};  // max of w/(diameter/4) inside GRIN segments
    bool clipped() const { return max_grin_fill > 1.0; }

    const BeamSample& at_target() const { return samples.back(); }

    /// Signed distance from the waist to the target plane (positive: waist
    /// lies before the plane).
    double waist_position_error() const { return std::real(final_q); }

    double waist_radius(double wavelength) const {
        return std::sqrt(std::imag(final_q) * wavelength /
                         (std::numbers::pi * final_index));
    }
};

namespace detail {

inline BeamSample sample_from_q(double z, Complex q, double wavelength,
                                double n) {
    if (!(std::imag(q) > 0.0))
        throw std::runtime_error(
            "beam parameter left the upper half plane (Im q <= 0)");
    Complex invq = 1.0 / q;
    double w = std::sqrt(-wavelength /
                         (std::numbers::pi * n * std::imag(invq)));
    double curv = std::real(invq) != 0.0
                      ? 1.0 / std::real(invq)
                      : std::numeric_limits<double>::infinity();
    return {z, w, curv};
}

inline void check_media(double expected, double actual, const char* where) {
    if (std::abs(expected - actual) > 1e-6 * std::max(1.0, expected))
        throw std::invalid_argument(std::string("inconsistent train media at ") +
                                    where);
}

}  // namespace detail

/// Step the q parameter through the train, sampling the spot radius at
/// element boundaries and every `step` meters inside extended elements.
inline PropagationResult propagate(const BeamTrain& train,
                                   const MaterialDb& db,
                                   double step = 5e-6) {
    const double lambda = train.input.wavelength;
    Complex q = train.input.q();
    double n = train.input.medium_index;
    double z = 0.0;

    PropagationResult res;
    res.samples.push_back(detail::sample_from_q(z, q, lambda, n));

    for (const auto& el : train.elements) {
        if (const auto* fs = std::get_if<FreeSpace>(&el)) {
            detail::check_media(n, db.index(fs->medium, lambda).n,
                                "free-space entry");
            double done = 0.0;
            while (done < fs->length) {
                double dz = std::min(step, fs->length - done);
                q += dz;
                done += dz;
                res.samples.push_back(
                    detail::sample_from_q(z + done, q, lambda, n));
            }
            z += fs->length;
        } else if (const auto* gr = std::get_if<GrinSegment>(&el)) {
            detail::check_media(n, gr->n0, "GRIN entry");
            double done = 0.0;
            while (done < gr->length) {
                double dz = std::min(step, gr->length - done);
                GrinSegment part = *gr;
                part.length = dz;
                q = apply_abcd(element_abcd(part), q);
                done += dz;
                auto s = detail::sample_from_q(z + done, q, lambda, n);
                res.max_grin_fill = std::max(res.max_grin_fill,
                                             s.w / (gr->diameter / 4.0));
                res.samples.push_back(s);
            }
            z += gr->length;
        } else {
            const auto& fi = std::get<FlatInterface>(el);
            double n1 = db.index(fi.from_medium, lambda).n;
            double n2 = db.index(fi.to_medium, lambda).n;
            detail::check_media(n, n1, "flat interface");
            q = apply_abcd(interface_abcd(n1, n2), q);
            n = n2;
            res.samples.push_back(detail::sample_from_q(z, q, lambda, n));
        }
    }
    res.final_q = q;
    res.final_index = n;
    return res;
}

/// Fraction of a centered Gaussian beam's power inside the square
/// |x| <= a, |y| <= a, with optional lateral offset of the beam axis.
inline double square_aperture_coupling(double w, double a, double offset_x = 0.0,
                                       double offset_y = 0.0) {
    if (!(w > 0.0 && a > 0.0))
        throw std::invalid_argument("coupling: w and a must be > 0");
    auto axis = [&](double x0) {
        return 0.5 * (std::erf(std::numbers::sqrt2 * (a - x0) / w) +
                      std::erf(std::numbers::sqrt2 * (a + x0) / w));
    };
    return axis(offset_x) * axis(offset_y);
}

inline SweepResult profile_csv(const PropagationResult& res) {
    SweepResult out;
    out.columns = {"z_um", "w_um", "R_um"};
    for (const auto& s : res.samples)
        out.add_row({s.z * 1e6, s.w * 1e6, s.curvature * 1e6});
    return out;
}

inline BeamTrain train_from_json(const nlohmann::json& j) {
    BeamTrain t;
    const auto& in = j.at("input");
    t.input.waist_radius = in.at("mfd_um").get<double>() * 1e-6 / 2.0;
    t.input.wavelength = in.at("wavelength_nm").get<double>() * 1e-9;
    t.input.medium_index = in.at("medium_index").get<double>();
    for (const auto& ej : j.at("elements")) {
        auto type = ej.at("type").get<std::string>();
        if (type == "free_space") {
            t.elements.push_back(FreeSpace{
                ej.at("length_um").get<double>() * 1e-6,
                ej.at("medium").get<std::string>()});
        } else if (type == "grin") {
            GrinSegment g;
            g.n0 = ej.at("n0").get<double>();
            g.gradient = ej.at("g_per_mm").get<double>() * 1e3;
            g.length = ej.at("length_mm").get<double>() * 1e-3;
            g.diameter = ej.value("diameter_um", 125.0) * 1e-6;
            t.elements.push_back(g);
        } else if (type == "interface") {
            t.elements.push_back(FlatInterface{
                ej.at("from").get<std::string>(),
                ej.at("to").get<std::string>()});
        } else {
            throw std::invalid_argument("unknown train element type: " + type);
        }
    }
    return t;
}

inline BeamTrain load_train(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open train file: " + path.string());
    nlohmann::json j;
    in >> j;
    return train_from_json(j);
}

}  // namespace snspd::beamtrain
