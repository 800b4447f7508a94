// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "oracles.hpp"
#include "snspd/beamtrain.hpp"
#include "snspd/materials.hpp"

using namespace snspd;
using namespace snspd::beamtrain;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

BeamTrain bundled(const char* name) {
    return load_train(std::filesystem::path(SNSPD_DATA_DIR) / "trains" /
                      name);
}

}  // namespace

TEST_CASE("q at a waist is purely imaginary with the Rayleigh range") {
    Complex q = q_from_waist(5.2e-6, 1550e-9, 1.0);
    CHECK(std::real(q) == 0.0);
    CHECK_THAT(std::imag(q), WithinRel(std::numbers::pi * 5.2e-6 * 5.2e-6 /
                                           1550e-9,
                                       1e-14));
    CHECK_THAT(std::imag(q) * 1e6, WithinAbs(54.81, 0.01));
    CHECK_THROWS_AS(q_from_waist(-1e-6, 1550e-9, 1.0),
                    std::invalid_argument);
}

TEST_CASE("free-space propagation matches the closed-form spot size") {
    MaterialDb db;
    double w0 = 5.2e-6, lam = 1550e-9, n = 1.7;
    BeamTrain t;
    t.input = {w0, lam, n};
    t.elements = {FreeSpace{1e-3, "n=1.7"}};
    auto res = propagate(t, db, 10e-6);
    double zr = std::numbers::pi * w0 * w0 * n / lam;
    for (const auto& s : res.samples) {
        double expect = w0 * std::sqrt(1.0 + (s.z / zr) * (s.z / zr));
        CHECK_THAT(s.w, WithinRel(expect, 1e-12));
    }
    CHECK(res.samples.size() > 100);
    CHECK(res.waist_position_error() > 0.0);  // waist lies at the input
}

TEST_CASE("free-space propagation composes") {
    MaterialDb db;
    BeamTrain one;
    one.input = {5.2e-6, 1550e-9, 1.0};
    one.elements = {FreeSpace{300e-6, "vacuum"}};
    BeamTrain two = one;
    two.elements = {FreeSpace{100e-6, "vacuum"}, FreeSpace{200e-6, "vacuum"}};
    auto qa = propagate(one, db).final_q;
    auto qb = propagate(two, db).final_q;
    CHECK(std::abs(qa - qb) < 1e-12 * std::abs(qa));
}

TEST_CASE("GRIN ray matrix: quarter pitch, full pitch, determinant") {
    GrinSegment g{1.6, 2500.0, 0.0, 125e-6};
    g.length = (std::numbers::pi / 2.0) / g.gradient;  // quarter pitch
    auto m = element_abcd(g);
    CHECK_THAT(m.a, WithinAbs(0.0, 1e-12));
    CHECK_THAT(m.d, WithinAbs(0.0, 1e-12));
    CHECK_THAT(m.b, WithinRel(1.0 / g.gradient, 1e-12));
    CHECK_THAT(m.c, WithinRel(-g.gradient, 1e-12));
    CHECK_THAT(m.det(), WithinRel(1.0, 1e-12));

    MaterialDb db;
    BeamTrain t;
    t.input = {8e-6, 1550e-9, 1.6};
    GrinSegment full{1.6, 2500.0, 2.0 * std::numbers::pi / 2500.0, 125e-6};
    t.elements = {full};
    auto res = propagate(t, db, 1e-6);
    CHECK(std::abs(res.final_q - t.input.q()) <
          1e-9 * std::abs(t.input.q()));
    CHECK_THROWS_AS(element_abcd(GrinSegment{1.6, -1.0, 1e-3, 125e-6}),
                    std::domain_error);
}

TEST_CASE("GRIN fundamental mode is a fixed point of the segment") {
    // w^2 = lambda/(pi n0 g) must propagate unchanged
    MaterialDb db;
    double n0 = 1.65, g = 3000.0, lam = 1550e-9;
    double wm = std::sqrt(lam / (std::numbers::pi * n0 * g));
    BeamTrain t;
    t.input = {wm, lam, n0};
    t.elements = {GrinSegment{n0, g, 0.7e-3, 125e-6}};
    auto res = propagate(t, db, 1e-6);
    CHECK_THAT(res.waist_radius(lam), WithinRel(wm, 1e-9));
    for (const auto& s : res.samples) CHECK_THAT(s.w, WithinRel(wm, 1e-9));
}

TEST_CASE("index-matched interface leaves the beam untouched") {
    MaterialDb db;
    BeamTrain t;
    t.input = {5.2e-6, 1550e-9, 1.468};
    t.elements = {FlatInterface{"n=1.468", "n=1.468"}};
    auto res = propagate(t, db);
    CHECK(std::abs(res.final_q - t.input.q()) < 1e-15);
    auto m = interface_abcd(2.0, 2.0);
    CHECK(m.a == 1.0);
    CHECK(m.d == 1.0);
}

TEST_CASE("interface preserves the spot size while rescaling divergence") {
    MaterialDb db;
    BeamTrain t;
    t.input = {5.2e-6, 1550e-9, 1.0};
    t.elements = {FreeSpace{100e-6, "vacuum"},
                  FlatInterface{"vacuum", "n=1.712"}};
    auto res = propagate(t, db);
    auto before = res.samples[res.samples.size() - 2];
    auto after = res.samples.back();
    CHECK_THAT(after.w, WithinRel(before.w, 1e-12));
    CHECK(res.final_index == 1.712);
}

TEST_CASE("inconsistent train media are rejected") {
    MaterialDb db;
    BeamTrain t;
    t.input = {5.2e-6, 1550e-9, 1.0};
    t.elements = {FreeSpace{100e-6, "n=1.5"}};  // input says n = 1
    CHECK_THROWS_AS(propagate(t, db), std::invalid_argument);
}

TEST_CASE("bare fiber launch: spot radius on the far substrate face") {
    MaterialDb db;
    auto t = bundled("bare_fiber.json");
    auto res = propagate(t, db);
    double w = res.at_target().w;
    CHECK(w > 20e-6);
    CHECK(w < 26e-6);
    CHECK_THAT(w, WithinRel(24.6303e-6, 1e-4));  // frozen
    // independent check: FFT angular-spectrum propagation
    double w_oracle = oracle::angular_spectrum_radius(t, db);
    CHECK_THAT(w, WithinRel(w_oracle, 0.02));
}

TEST_CASE("GRIN focuser train agrees with the angular-spectrum oracle") {
    MaterialDb db;
    auto t = bundled("lensed_fiber.json");
    auto res = propagate(t, db);
    double w_oracle = oracle::angular_spectrum_radius(t, db);
    CHECK_THAT(res.at_target().w, WithinRel(w_oracle, 0.02));
    // focused spot small enough for the 15 um meander
    CHECK(res.at_target().w < 7e-6);
    CHECK(std::abs(res.waist_position_error()) < 5e-6);
}

TEST_CASE("clipping is flagged when the beam exceeds diameter/4") {
    MaterialDb db;
    BeamTrain t;
    t.input = {40e-6, 1550e-9, 1.6};  // 40 um beam in a 125 um rod
    t.elements = {GrinSegment{1.6, 2000.0, 0.5e-3, 125e-6}};
    auto res = propagate(t, db);
    CHECK(res.max_grin_fill > 1.0);
    CHECK(res.clipped());
}

TEST_CASE("square aperture coupling matches the erf closed form") {
    // frozen values
    CHECK_THAT(square_aperture_coupling(4.5e-6, 7.5e-6),
               WithinAbs(0.998284, 1e-6));
    CHECK_THAT(square_aperture_coupling(23e-6, 7.5e-6),
               WithinAbs(0.235915, 1e-6));
    double e = std::erf(std::numbers::sqrt2);
    CHECK_THAT(square_aperture_coupling(10e-6, 10e-6),
               WithinAbs(e * e, 1e-12));
    CHECK_THROWS_AS(square_aperture_coupling(-1e-6, 7.5e-6),
                    std::invalid_argument);
}

TEST_CASE("coupling properties: limits, monotonicity, offsets") {
    CHECK(square_aperture_coupling(0.1e-6, 7.5e-6) > 1.0 - 1e-12);
    double prev = 1.0;
    for (double w = 5e-6; w < 40e-6; w += 1e-6) {
        double c = square_aperture_coupling(w, 7.5e-6);
        CHECK(c < prev);
        prev = c;
    }
    double centered = square_aperture_coupling(5e-6, 7.5e-6);
    double shifted = square_aperture_coupling(5e-6, 7.5e-6, 3e-6, 0.0);
    CHECK(shifted < centered);
    CHECK_THAT(square_aperture_coupling(5e-6, 7.5e-6, -3e-6, 0.0),
               WithinRel(shifted, 1e-12));
}

TEST_CASE("coupling matches the Monte Carlo oracle") {
    for (double w : {4.5e-6, 12e-6, 23e-6}) {
        double formula = square_aperture_coupling(w, 7.5e-6);
        double mc = oracle::mc_square_coupling(w, 7.5e-6, 10'000'000, 99);
        CHECK_THAT(formula, WithinAbs(mc, 6e-4));
    }
    double off = square_aperture_coupling(8e-6, 7.5e-6, 2e-6, -3e-6);
    double mc = oracle::mc_square_coupling(8e-6, 7.5e-6, 10'000'000, 7,
                                           2e-6, -3e-6);
    CHECK_THAT(off, WithinAbs(mc, 6e-4));
}

TEST_CASE("profile table carries micrometer columns") {
    MaterialDb db;
    auto res = propagate(bundled("bare_fiber.json"), db);
    auto t = profile_csv(res);
    REQUIRE(t.columns == std::vector<std::string>{"z_um", "w_um", "R_um"});
    CHECK(t.rows.size() == res.samples.size());
    CHECK_THAT(t.rows.back()[1], WithinRel(res.at_target().w * 1e6, 1e-12));
}

TEST_CASE("train files load with the documented element vocabulary") {
    auto t = bundled("bare_fiber.json");
    CHECK_THAT(t.input.waist_radius, WithinAbs(5.2e-6, 1e-12));
    CHECK_THAT(t.input.wavelength, WithinRel(1550e-9, 1e-15));
    REQUIRE(t.elements.size() == 4);
    CHECK(std::holds_alternative<FlatInterface>(t.elements[0]));
    CHECK(std::holds_alternative<FreeSpace>(t.elements[1]));
}
