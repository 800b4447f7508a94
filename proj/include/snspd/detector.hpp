// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "snspd/sweep.hpp"

#include <json.hpp>

namespace snspd::detector {

struct DeviceParameters {
    double wire_width;       // meters
    double film_thickness;   // meters
    double fill_factor;
    double active_area_side; // meters
    double tc;               // kelvin
    double jc;               // A/m^2

    double ic() const { return jc * wire_width * film_thickness; }

    void validate() const {
        if (!(wire_width > 0 && film_thickness > 0 && active_area_side > 0 &&
              tc > 0 && jc > 0))
            throw std::invalid_argument("device parameters must be positive");
        if (!(fill_factor > 0.0 && fill_factor <= 1.0))
            throw std::invalid_argument("fill_factor must lie in (0, 1]");
    }
};

/// Efficiency chain DE = eta_c * A(lambda) * P_r(i) with a logistic
/// registering probability P_r(i) = 1/(1 + exp(-(i - i0)/s)) and an
/// exponential dark-count law DCR = R0 * exp(k*i). Phenomenological forms,
/// calibrated against measured (bias, DE, DCR) anchors.
struct DetectorChannelModel {
    std::string channel_id;
    double coupling_efficiency{1.0};                  // eta_c
    std::vector<std::pair<double, double>> absorptance;  // (wavelength m, A)
    double registering_midpoint{0.9};                 // i0
    double registering_steepness{0.03};               // s
    double dark_prefactor{0.0};                       // R0, Hz
    double dark_exponent{1.0};                        // k
    double dead_time{40e-9};                          // seconds
    double critical_current{16e-6};                   // amperes

    double absorptance_at(double wavelength) const {
        if (absorptance.empty())
            throw std::out_of_range("channel '" + channel_id +
                                    "': no absorptance calibration");
        if (absorptance.size() == 1) {
            if (std::abs(absorptance[0].first - wavelength) > 1e-12)
                check_range(wavelength);
            return absorptance[0].second;
        }
        check_range(wavelength);
        auto hi = std::lower_bound(
            absorptance.begin(), absorptance.end(), wavelength,
            [](const auto& p, double w) { return p.first < w; });
        if (hi->first == wavelength) return hi->second;
        auto lo = hi - 1;
        double t = (wavelength - lo->first) / (hi->first - lo->first);
        return lo->second + t * (hi->second - lo->second);
    }

    double registering_prob(double i) const {
        return 1.0 / (1.0 + std::exp(-(i - registering_midpoint) /
                                     registering_steepness));
    }

  private:
    void check_range(double wavelength) const {
        if (wavelength < absorptance.front().first - 1e-12 ||
            wavelength > absorptance.back().first + 1e-12) {
            std::ostringstream msg;
            msg << "channel '" << channel_id << "': wavelength "
                << wavelength * 1e9 << " nm outside calibrated span";
            throw std::out_of_range(msg.str());
        }
    }
};

struct ObservationPoint {
    double normalized_bias;           // Ib/Ic in (0,1)
    std::optional<double> de;
    std::optional<double> dcr;       // Hz
    double wavelength{1550e-9};

    void validate() const {
        if (!(normalized_bias > 0.0 && normalized_bias < 1.0))
            throw std::invalid_argument("normalized bias must lie in (0,1)");
        if (!de && !dcr)
            throw std::invalid_argument(
                "observation needs at least one of DE, DCR");
    }
};

inline double system_de(const DetectorChannelModel& m, double wavelength,
                        double bias) {
    if (!(bias > 0.0 && bias <= 1.0))
        throw std::domain_error("normalized bias must lie in (0, 1]");
    return m.coupling_efficiency * m.absorptance_at(wavelength) *
           m.registering_prob(bias);
}

inline double dark_rate(const DetectorChannelModel& m, double bias) {
    if (!(bias > 0.0 && bias <= 1.0))
        throw std::domain_error("normalized bias must lie in (0, 1]");
    return m.dark_prefactor * std::exp(m.dark_exponent * bias);
}

struct DeDcrCurve {
    SweepResult table;  // bias_norm, de, dcr_hz
    std::vector<double> de, dcr;

    /// DE at a target DCR by log-linear interpolation along the curve.
    double de_at_dcr(double target) const {
        if (dcr.empty() || target < dcr.front() || target > dcr.back()) {
            std::ostringstream msg;
            msg << "target DCR " << target
                << " Hz outside the curve span; refusing to extrapolate";
            throw std::out_of_range(msg.str());
        }
        auto hi = std::lower_bound(dcr.begin(), dcr.end(), target);
        std::size_t j = hi - dcr.begin();
        if (dcr[j] == target) return de[j];
        double t = (std::log(target) - std::log(dcr[j - 1])) /
                   (std::log(dcr[j]) - std::log(dcr[j - 1]));
        return de[j - 1] + t * (de[j] - de[j - 1]);
    }

    double max_de() const { return de.empty() ? 0.0 : de.back(); }
};

inline DeDcrCurve de_vs_dcr_curve(const DetectorChannelModel& m,
                                  double wavelength,
                                  const std::vector<double>& bias_grid) {
    if (bias_grid.empty())
        throw std::invalid_argument("bias grid must not be empty");
    if (!std::is_sorted(bias_grid.begin(), bias_grid.end()))
        throw std::invalid_argument("bias grid must be sorted ascending");
    DeDcrCurve out;
    out.table.columns = {"bias_norm", "de", "dcr_hz"};
    for (double i : bias_grid) {
        double d = system_de(m, wavelength, i);
        double r = dark_rate(m, i);
        out.table.add_row({i, d, r});
        out.de.push_back(d);
        out.dcr.push_back(r);
    }
    return out;
}

inline std::vector<double> bias_grid(double lo = 0.70, double hi = 0.99,
                                     double step = 0.001) {
    std::vector<double> g;
    for (double i = lo; i <= hi + 0.5 * step; i += step)
        g.push_back(std::min(i, hi));
    return g;
}

// ---------------------------------------------------------------------------
// Calibration

struct FitReport {
    std::vector<double> residuals;  // relative, one per observation
    double residual_norm{0.0};
    int iterations{0};
    bool converged{false};
};

struct FitResult {
    DetectorChannelModel model;
    FitReport report;
};

class fit_error : public std::runtime_error {
  public:
    fit_error(const std::string& what, DetectorChannelModel best)
        : std::runtime_error(what), best_so_far(std::move(best)) {}
    DetectorChannelModel best_so_far;
};

namespace detail {

// Model under fit: de = amp * P(i; i0, s), dcr = R0 * exp(k*i).
// Parameter vector (log amp, i0, log s, log R0, k); logs keep the positive
// parameters positive and make the relative steps sane.
struct FitParams {
    double log_amp, i0, log_s, log_r0, k;
    bool amp_fixed{false};

    double amp() const { return std::exp(log_amp); }
    double s() const { return std::exp(log_s); }
    double r0() const { return std::exp(log_r0); }
};

inline std::vector<double> residuals(const FitParams& p,
                                     const std::vector<ObservationPoint>& obs) {
    std::vector<double> r;
    for (const auto& o : obs) {
        double pr = 1.0 / (1.0 + std::exp(-(o.normalized_bias - p.i0) / p.s()));
        if (o.de) r.push_back((p.amp() * pr - *o.de) / std::max(*o.de, 1e-12));
        if (o.dcr) {
            double d = p.r0() * std::exp(p.k * o.normalized_bias);
            r.push_back((d - *o.dcr) / std::max(*o.dcr, 1e-12));
        }
    }
    return r;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace detail

struct FitOptions {
    std::optional<double> fixed_amplitude;  // eta_c * A known a priori
    int max_iterations{500};
    double tolerance{1e-12};
};

/// Levenberg-style damped least squares on (bias, DE, DCR) observations.
inline FitResult fit_channel(const std::vector<ObservationPoint>& obs,
                             const FitOptions& opt = {}) {
    int n_de = 0, n_dcr = 0;
    std::vector<double> de_biases, dcr_biases;
    for (const auto& o : obs) {
        o.validate();
        if (o.de) { ++n_de; de_biases.push_back(o.normalized_bias); }
        if (o.dcr) { ++n_dcr; dcr_biases.push_back(o.normalized_bias); }
    }
    auto distinct = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return std::unique(v.begin(), v.end(),
                           [](double a, double b) {
                               return std::abs(a - b) < 1e-9;
                           }) - v.begin();
    };
    std::string missing;
    if (!opt.fixed_amplitude && n_de < 2) missing += " DE(>=2 biases)";
    if (distinct(dcr_biases) < 2) missing += " DCR(>=2 distinct biases)";
    if (!missing.empty())
        throw std::invalid_argument(
            "underdetermined calibration; missing observations:" + missing);

    // Documented initial guess: i0 = 0.9, s = 0.03, amplitude = max observed
    // DE, R0/k from the extreme pair of DCR anchors.
    detail::FitParams p;
    double max_de = 1e-3;
    for (const auto& o : obs)
        if (o.de) max_de = std::max(max_de, *o.de);
    p.log_amp = std::log(opt.fixed_amplitude.value_or(max_de));
    p.amp_fixed = opt.fixed_amplitude.has_value();
    p.i0 = 0.9;
    p.log_s = std::log(0.03);
    {
        const ObservationPoint *lo = nullptr, *hi = nullptr;
        for (const auto& o : obs) {
            if (!o.dcr) continue;
            if (!lo || o.normalized_bias < lo->normalized_bias) lo = &o;
            if (!hi || o.normalized_bias > hi->normalized_bias) hi = &o;
        }
        double k = std::log(std::max(*hi->dcr, 1e-9) /
                            std::max(*lo->dcr, 1e-9)) /
                   (hi->normalized_bias - lo->normalized_bias);
        p.k = std::max(k, 1e-3);
        p.log_r0 = std::log(std::max(*hi->dcr, 1e-9)) -
                   p.k * hi->normalized_bias;
    }

    auto pack = [&](const detail::FitParams& q) {
        std::vector<double> v{q.i0, q.log_s, q.log_r0, q.k};
        if (!q.amp_fixed) v.insert(v.begin(), q.log_amp);
        return v;
    };
    auto unpack = [&](std::vector<double> v) {
        detail::FitParams q = p;
        std::size_t j = 0;
        if (!q.amp_fixed) q.log_amp = v[j++];
        q.i0 = v[j++];
        q.log_s = v[j++];
        q.log_r0 = v[j++];
        q.k = v[j++];
        return q;
    };

    std::vector<double> x = pack(p);
    std::vector<double> r = detail::residuals(p, obs);
    double cost = detail::norm2(r);
    double lambda = 1e-3;
    int iter = 0;
    bool converged = false;

    const std::size_t np = x.size(), nr = r.size();
    for (; iter < opt.max_iterations; ++iter) {
        // numeric Jacobian
        std::vector<std::vector<double>> J(nr, std::vector<double>(np));
        for (std::size_t j = 0; j < np; ++j) {
            double h = 1e-7 * std::max(1.0, std::abs(x[j]));
            auto xp = x;
            xp[j] += h;
            auto rp = detail::residuals(unpack(xp), obs);
            for (std::size_t i = 0; i < nr; ++i)
                J[i][j] = (rp[i] - r[i]) / h;
        }
        // normal equations with Levenberg damping
        std::vector<std::vector<double>> A(np, std::vector<double>(np, 0.0));
        std::vector<double> g(np, 0.0);
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t a = 0; a < np; ++a) {
                g[a] += J[i][a] * r[i];
                for (std::size_t b = 0; b < np; ++b)
                    A[a][b] += J[i][a] * J[i][b];
            }
        bool improved = false;
        for (int tries = 0; tries < 12 && !improved; ++tries) {
            auto M = A;
            for (std::size_t a = 0; a < np; ++a)
                M[a][a] += lambda * (A[a][a] > 0 ? A[a][a] : 1.0);
            // Gaussian elimination with partial pivoting
            auto rhs = g;
            std::vector<double> dx(np, 0.0);
            bool singular = false;
            for (std::size_t c = 0; c < np; ++c) {
                std::size_t piv = c;
                for (std::size_t rr = c + 1; rr < np; ++rr)
                    if (std::abs(M[rr][c]) > std::abs(M[piv][c])) piv = rr;
                if (std::abs(M[piv][c]) < 1e-300) { singular = true; break; }
                std::swap(M[c], M[piv]);
                std::swap(rhs[c], rhs[piv]);
                for (std::size_t rr = c + 1; rr < np; ++rr) {
                    double f = M[rr][c] / M[c][c];
                    for (std::size_t cc = c; cc < np; ++cc)
                        M[rr][cc] -= f * M[c][cc];
                    rhs[rr] -= f * rhs[c];
                }
            }
            if (!singular)
                for (std::size_t c = np; c-- > 0;) {
                    double s = rhs[c];
                    for (std::size_t cc = c + 1; cc < np; ++cc)
                        s -= M[c][cc] * dx[cc];
                    dx[c] = s / M[c][c];
                }
            if (singular) { lambda *= 10.0; continue; }
            auto xt = x;
            for (std::size_t a = 0; a < np; ++a) xt[a] -= dx[a];
            auto rt = detail::residuals(unpack(xt), obs);
            double ct = detail::norm2(rt);
            if (std::isfinite(ct) && ct < cost) {
                x = xt;
                r = rt;
                double gain = cost - ct;
                cost = ct;
                lambda = std::max(lambda * 0.3, 1e-14);
                improved = true;
                if (gain < opt.tolerance * (1.0 + cost)) converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!improved || converged) { converged = converged || !improved; break; }
    }

    p = unpack(x);
    FitResult out;
    out.model.coupling_efficiency = 1.0;
    out.model.registering_midpoint = p.i0;
    out.model.registering_steepness = p.s();
    out.model.dark_prefactor = p.r0();
    out.model.dark_exponent = p.k;
    out.model.absorptance = {{obs.front().wavelength, p.amp()}};
    out.report.residuals = r;
    out.report.residual_norm = std::sqrt(cost);
    out.report.iterations = iter;
    out.report.converged = converged;
    if (!converged)
        throw fit_error("calibration did not converge within the iteration cap",
                        out.model);
    return out;
}

// ---------------------------------------------------------------------------
// Counting simulation

struct CountResult {
    std::uint64_t registered_counts{0};
    double estimated_de{0.0};
    bool saturated{false};
};

/// Poisson photon arrivals thinned by DE, merged with Poisson dark events,
/// filtered by a non-paralyzable dead time. Per-call seeded generator.
inline CountResult simulate_counts(const DetectorChannelModel& m,
                                   double wavelength, double bias,
                                   double photon_flux, double duration,
                                   std::uint64_t seed,
                                   bool subtract_dark = true) {
    if (photon_flux < 0.0) throw std::invalid_argument("flux must be >= 0");
    if (!(duration > 0.0)) throw std::invalid_argument("duration must be > 0");
    double de = system_de(m, wavelength, bias);
    double dcr = dark_rate(m, bias);
    double rate = photon_flux * de + dcr;

    CountResult out;
    out.saturated = photon_flux * de * m.dead_time >= 1.0;
    if (rate > 0.0) {
        std::mt19937_64 rng(seed);
        auto uniform = [&] { return ((rng() >> 11) + 0.5) * 0x1.0p-53; };
        double t = 0.0;
        double last = -std::numeric_limits<double>::infinity();
        while (true) {
            t += -std::log(uniform()) / rate;
            if (t >= duration) break;
            if (t - last >= m.dead_time) {
                ++out.registered_counts;
                last = t;
            }
        }
    }
    double measured = static_cast<double>(out.registered_counts) / duration;
    // invert the non-paralyzable dead-time law r = m / (1 - m*tau)
    double live = 1.0 - measured * m.dead_time;
    double corrected = live > 1e-6 ? measured / live : measured;
    if (photon_flux > 0.0)
        out.estimated_de = (corrected - (subtract_dark ? dcr : 0.0)) /
                           photon_flux;
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json channel_to_json(const DetectorChannelModel& m) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [w, v] : m.absorptance) a.push_back({w, v});
    return {{"channel_id", m.channel_id},
            {"coupling_efficiency", m.coupling_efficiency},
            {"absorptance", a},
            {"registering_midpoint", m.registering_midpoint},
            {"registering_steepness", m.registering_steepness},
            {"dark_prefactor_hz", m.dark_prefactor},
            {"dark_exponent", m.dark_exponent},
            {"dead_time_s", m.dead_time},
            {"critical_current_a", m.critical_current}};
}

inline DetectorChannelModel channel_from_json(const nlohmann::json& j) {
    DetectorChannelModel m;
    m.channel_id = j.value("channel_id", std::string{});
    m.coupling_efficiency = j.at("coupling_efficiency").get<double>();
    for (const auto& p : j.at("absorptance"))
        m.absorptance.emplace_back(p.at(0).get<double>(),
                                   p.at(1).get<double>());
    std::sort(m.absorptance.begin(), m.absorptance.end());
    m.registering_midpoint = j.at("registering_midpoint").get<double>();
    m.registering_steepness = j.at("registering_steepness").get<double>();
    m.dark_prefactor = j.at("dark_prefactor_hz").get<double>();
    m.dark_exponent = j.at("dark_exponent").get<double>();
    m.dead_time = j.value("dead_time_s", 40e-9);
    m.critical_current = j.value("critical_current_a", 16e-6);
    return m;
}

inline DetectorChannelModel load_channel(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open channel file: " + path.string());
    nlohmann::json j;
    in >> j;
    return channel_from_json(j);
}

/// Observation CSV: bias_norm,de,dcr_hz,wavelength_nm with empty cells for
/// absent values.
inline std::vector<ObservationPoint> load_observations(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open observation file: " +
                                 path.string());
    std::vector<ObservationPoint> obs;
    std::string line;
    while (std::getline(in, line)) {
        auto pos = line.find('#');
        if (pos != std::string::npos) line.erase(pos);
        if (line.find_first_not_of(" \t\r\n,") == std::string::npos) continue;
        if (line.find("bias_norm") != std::string::npos) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        while (cells.size() < 4) cells.push_back("");
        auto blank = [](const std::string& s) {
            return s.find_first_not_of(" \t\r") == std::string::npos;
        };
        ObservationPoint o;
        o.normalized_bias = std::stod(cells[0]);
        if (!blank(cells[1])) o.de = std::stod(cells[1]);
        if (!blank(cells[2])) o.dcr = std::stod(cells[2]);
        if (!blank(cells[3])) o.wavelength = std::stod(cells[3]) * 1e-9;
        o.validate();
        obs.push_back(o);
    }
    return obs;
}

}  // namespace snspd::detector
