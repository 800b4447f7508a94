// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <random>
#include <vector>

#include "snspd/materials.hpp"
#include "snspd/thinfilm.hpp"

using namespace snspd;
using namespace snspd::thinfilm;
using Catch::Matchers::WithinAbs;

namespace {

std::string literal(double n, double k = 0.0) {
    std::ostringstream s;
    s.precision(17);
    if (k > 0.0)
        s << "n=" << n << "+" << k << "i";
    else
        s << "n=" << n;
    return s.str();
}

LayerStack device_stack() {
    return load_stack(std::filesystem::path(SNSPD_DATA_DIR) /
                      "stacks/device_stack.json");
}

/// Independent normal-incidence oracle: forward/backward plane-wave
/// amplitudes per layer (e^{+ikz} forward, N = n + ik), layer absorptance by
/// Simpson quadrature of k0*Im(N^2)*|E(z)|^2. No shared code with the
/// characteristic-matrix implementation.
struct AmplitudeOracle {
    double R, T;
    std::vector<double> A;

    AmplitudeOracle(const std::vector<Complex>& N,
                    const std::vector<double>& d, double lambda) {
        using C = Complex;
        const std::size_t m = d.size();  // N has m+2 entries
        const double k0 = 2.0 * std::numbers::pi / lambda;
        // back-propagate from the exit medium (transmitted amplitude 1)
        C a = 1.0, b = 0.0;
        std::vector<C> af(m), ab(m);
        for (std::size_t j = m; j-- > 0;) {
            C r = N[j + 2] / N[j + 1];
            C back_a = 0.5 * ((1.0 + r) * a + (1.0 - r) * b);
            C back_b = 0.5 * ((1.0 - r) * a + (1.0 + r) * b);
            C kz = k0 * N[j + 1];
            af[j] = back_a * std::exp(C(0, -1) * kz * d[j]);
            ab[j] = back_b * std::exp(C(0, 1) * kz * d[j]);
            a = af[j];
            b = ab[j];
        }
        C r0 = N[1] / N[0];
        C a0 = 0.5 * ((1.0 + r0) * a + (1.0 - r0) * b);
        C b0 = 0.5 * ((1.0 - r0) * a + (1.0 + r0) * b);
        double inc = std::norm(a0) * std::real(N[0]);
        R = std::norm(b0) / std::norm(a0);
        T = std::real(N[m + 1]) / inc * 1.0;  // |t|^2 with t = 1
        A.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            C kz = k0 * N[j + 1];
            const int steps = 4000;  // Simpson, even count
            double h = d[j] / steps;
            double integral = 0.0;
            for (int s = 0; s <= steps; ++s) {
                double z = s * h;
                C e = af[j] * std::exp(C(0, 1) * kz * z) +
                      ab[j] * std::exp(C(0, -1) * kz * z);
                double wgt = (s == 0 || s == steps) ? 1.0
                             : (s % 2 ? 4.0 : 2.0);
                integral += wgt * std::norm(e);
            }
            integral *= h / 3.0;
            A[j] = k0 * std::imag(N[j + 1] * N[j + 1]) * integral / inc;
        }
    }
};

}  // namespace

TEST_CASE("layer matrix limits: zero thickness, quarter and half wave") {
    double lam = 1550e-9;
    auto near = [](Complex a, Complex b) {
        return std::abs(a - b) < 1e-12;
    };
    auto m0 = layer_matrix(Complex(2.0, 0.0), 1e-15, lam, 1.0,
                           Polarization::TE);
    CHECK(near(m0[0][0], 1.0));
    CHECK(near(m0[1][1], 1.0));
    CHECK(std::abs(m0[0][1]) < 1e-8);

    // quarter wave: delta = pi/2 -> [[0, -i/eta], [-i eta, 0]]
    double n = 2.0, d = lam / (4.0 * n);
    auto mq = layer_matrix(Complex(n, 0.0), d, lam, 1.0, Polarization::TE);
    CHECK(std::abs(mq[0][0]) < 1e-12);
    CHECK(std::abs(mq[1][1]) < 1e-12);
    CHECK(near(mq[0][1], Complex(0, -1.0 / n)));
    CHECK(near(mq[1][0], Complex(0, -n)));

    // half wave: -identity
    auto mh = layer_matrix(Complex(n, 0.0), 2 * d, lam, 1.0, Polarization::TE);
    CHECK(near(mh[0][0], -1.0));
    CHECK(near(mh[1][1], -1.0));
    CHECK(std::abs(mh[0][1]) < 1e-12);
}

TEST_CASE("layer matrix determinant is 1 for absorbing films") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> un(1.0, 6.0), uk(0.0, 6.0),
        ud(1e-9, 400e-9);
    for (int t = 0; t < 200; ++t) {
        auto m = layer_matrix(Complex(un(rng), uk(rng)), ud(rng), 1550e-9,
                              1.0, t % 2 ? Polarization::TE : Polarization::TM);
        Complex det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        // cancellation scales with |cosh delta|^2 for absorbing films
        double scale = 1.0 + std::norm(m[0][0]);
        CHECK(std::abs(det - 1.0) < 1e-12 * scale);
    }
}

TEST_CASE("Fresnel closed form at a bare air/glass interface") {
    MaterialDb db;
    LayerStack s;
    s.incidence_medium = "n=1";
    s.exit_medium = "n=1.5";
    auto r = stack_response(s, db, 633e-9);
    CHECK_THAT(r.R, WithinAbs(0.04, 1e-12));
    CHECK_THAT(r.T, WithinAbs(0.96, 1e-12));
    CHECK(r.total_absorptance() < 1e-12);
}

TEST_CASE("lossless stacks absorb nothing") {
    MaterialDb db;
    LayerStack s;
    s.incidence_medium = "n=1";
    s.exit_medium = "n=1.45";
    s.layers = {{literal(2.3), 120e-9, false}, {literal(1.38), 200e-9, false}};
    for (double lam : {400e-9, 633e-9, 1550e-9}) {
        auto r = stack_response(s, db, lam);
        CHECK(r.total_absorptance() < 1e-12);
        CHECK_THAT(r.R + r.T, WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("energy conservation over randomized absorbing stacks") {
    MaterialDb db;
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> un(1.0, 5.0), uk(0.0, 5.0),
        ud(1e-9, 500e-9), uang(0.0, 1.2), u01(0.0, 1.0);
    std::uniform_int_distribution<int> layers(1, 6);
    for (int t = 0; t < 300; ++t) {
        LayerStack s;
        s.incidence_medium = literal(un(rng));
        s.exit_medium = u01(rng) < 0.5 ? literal(un(rng))
                                       : literal(un(rng), uk(rng));
        int nl = layers(rng);
        for (int j = 0; j < nl; ++j)
            s.layers.push_back({literal(un(rng), uk(rng)), ud(rng), false});
        double ang = uang(rng);
        auto pol = t % 2 ? Polarization::TM : Polarization::TE;
        auto r = stack_response(s, db, 1550e-9, ang, pol);
        double sum = r.R + r.T + r.total_absorptance();
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("TE and TM coincide at normal incidence") {
    MaterialDb db;
    auto s = device_stack();
    for (double lam : {1300e-9, 1550e-9, 1600e-9}) {
        auto te = stack_response(s, db, lam, 0.0, Polarization::TE);
        auto tm = stack_response(s, db, lam, 0.0, Polarization::TM);
        CHECK_THAT(te.R, WithinAbs(tm.R, 1e-10));
        CHECK_THAT(te.T, WithinAbs(tm.T, 1e-10));
        for (std::size_t j = 0; j < s.layers.size(); ++j)
            CHECK_THAT(te.absorptance_per_layer[j],
                       WithinAbs(tm.absorptance_per_layer[j], 1e-10));
    }
}

TEST_CASE("reference cavity stack response at 1550 nm") {
    MaterialDb db;
    auto s = device_stack();
    auto r = stack_response(s, db, 1550e-9);
    // frozen values for the bundled material tables
    CHECK_THAT(r.R, WithinAbs(0.333202367999, 1e-9));
    CHECK_THAT(r.T, WithinAbs(2.97866248747e-05, 1e-12));
    CHECK_THAT(r.absorptance_per_layer[0], WithinAbs(0.652050409679, 1e-9));
    CHECK_THAT(r.absorptance_per_layer[2], WithinAbs(0.0147174356974, 1e-9));
    // the gold mirror keeps transmission negligible
    CHECK(r.T < 1e-3);
}

TEST_CASE("amplitude-method oracle agrees with the flux computation") {
    MaterialDb db;
    auto s = device_stack();
    for (double lam : {1310e-9, 1550e-9}) {
        auto r = stack_response(s, db, lam);
        // assemble the oracle's index list, homogenizing the meander the
        // same way the stack declaration demands
        std::vector<Complex> N{db.index(s.incidence_medium, lam).value()};
        std::vector<double> d;
        for (const auto& l : s.layers) {
            ComplexIndex idx = db.index(l.material_id, lam);
            if (l.is_meander)
                idx = effective_meander_index(
                    idx, db.index(s.meander_ambient, lam), s.meander_fill);
            N.push_back(idx.value());
            d.push_back(l.thickness);
        }
        N.push_back(db.index(s.exit_medium, lam).value());
        AmplitudeOracle o(N, d, lam);
        CHECK_THAT(r.R, WithinAbs(o.R, 1e-10));
        CHECK_THAT(r.T, WithinAbs(o.T, 1e-10));
        for (std::size_t j = 0; j < d.size(); ++j)
            CHECK_THAT(r.absorptance_per_layer[j],
                       WithinAbs(o.A[j], 1e-6));
    }
}

TEST_CASE("meander absorptance varies smoothly across the design band") {
    MaterialDb db;
    auto s = device_stack();
    double prev = -1.0;
    for (double lam = 1300e-9; lam <= 1600e-9 + 1e-15; lam += 2e-9) {
        auto r = stack_response(s, db, lam);
        double a = r.absorptance_per_layer[0];
        if (prev >= 0.0) CHECK(std::abs(a - prev) < 0.01);
        prev = a;
    }
}

TEST_CASE("cavity stack beats the bare film") {
    MaterialDb db;
    auto cavity = device_stack();
    auto bare = load_stack(std::filesystem::path(SNSPD_DATA_DIR) /
                           "stacks/bare_control.json");
    double a_cav =
        stack_response(cavity, db, 1550e-9).absorptance_per_layer[0];
    double a_bare =
        stack_response(bare, db, 1550e-9).absorptance_per_layer[0];
    CHECK(a_cav >= 1.5 * a_bare);
}

TEST_CASE("stack validation rejects malformed declarations") {
    LayerStack s;
    s.incidence_medium = "n=1";
    s.exit_medium = "n=1";
    s.layers = {{"nbn", 0.0, false}};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.layers = {{"nbn", 4e-9, true}, {"nbn", 4e-9, true}};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.layers = {{"nbn", 4e-9, true}};
    s.meander_fill = 0.625;
    s.meander_ambient.clear();
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.meander_ambient = "vacuum";
    CHECK_NOTHROW(s.validate());
    s.layers.clear();  // a bare interface is a valid stack
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("spectrum sweep has the documented columns and row count") {
    MaterialDb db;
    auto s = device_stack();
    std::vector<double> grid;
    for (int j = 0; j < 31; ++j) grid.push_back(1300e-9 + 10e-9 * j);
    auto t = absorptance_spectrum(s, db, grid);
    REQUIRE(t.columns ==
            std::vector<std::string>{"wavelength_nm", "R", "T", "A_nbn",
                                     "A_au", "A_other"});
    REQUIRE(t.rows.size() == 31);
    for (const auto& row : t.rows) {
        double sum = row[1] + row[2] + row[3] + row[4] + row[5];
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    CHECK_THROWS_AS(absorptance_spectrum(s, db, {}), std::invalid_argument);
}
