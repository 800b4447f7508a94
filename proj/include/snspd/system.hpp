// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "snspd/detector.hpp"
#include "snspd/sweep.hpp"

#include <json.hpp>

namespace snspd::system {

/// Cryocooler-level configuration: up to six packaged channels, of which an
/// active set of exactly four serves the BB84 receiver.
struct SystemConfig {
    std::vector<detector::DetectorChannelModel> channels;
    std::vector<std::string> active_set;   // channel ids, size 4 for BB84
    double base_temperature{2.9};          // kelvin, informational
    double temperature_stability{0.010};   // kelvin, informational

    void validate() const {
        if (channels.empty() || channels.size() > 6)
            throw std::invalid_argument(
                "system holds between 1 and 6 channels");
    }

    const detector::DetectorChannelModel& channel(const std::string& id) const {
        for (const auto& c : channels)
            if (c.channel_id == id) return c;
        throw std::out_of_range("no channel with id '" + id + "'");
    }

    std::vector<const detector::DetectorChannelModel*> active_channels() const {
        if (active_set.size() != 4)
            throw std::invalid_argument(
                "BB84 operation needs an active set of exactly 4 channels");
        std::vector<const detector::DetectorChannelModel*> out;
        for (const auto& id : active_set) out.push_back(&channel(id));
        return out;
    }
};

struct LinkParams {
    double mean_photon_number{0.1};
    double channel_loss_db{10.0};
    double receiver_loss_db{0.0};
    double pulse_rate{1e9};        // Hz
    double gate_fraction{1.0};     // 1 = free running
    double intrinsic_error{0.01};  // e_det

    void validate() const {
        if (!(mean_photon_number > 0.0))
            throw std::invalid_argument("mean photon number must be > 0");
        if (channel_loss_db < 0.0 || receiver_loss_db < 0.0)
            throw std::invalid_argument("losses must be >= 0");
        if (!(intrinsic_error >= 0.0 && intrinsic_error <= 0.5))
            throw std::invalid_argument("e_det must lie in [0, 0.5]");
        if (!(pulse_rate > 0.0))
            throw std::invalid_argument("pulse rate must be > 0");
    }
};

struct ChannelReportRow {
    std::string channel_id;
    std::optional<double> de_at_100hz;
    std::optional<double> de_at_2khz;
    double max_de{0.0};
    double bias_at_max{0.0};
    std::optional<double> bias_at_100hz;
    std::optional<double> bias_at_2khz;
    std::string error;  // non-empty if this channel could not be evaluated
};

namespace detail {

inline std::optional<double> bias_at_dcr(
    const detector::DetectorChannelModel& m, double target,
    const std::vector<double>& grid) {
    // invert the monotone DCR(i) law on the grid span
    double lo = detector::dark_rate(m, grid.front());
    double hi = detector::dark_rate(m, grid.back());
    if (target < lo || target > hi) return std::nullopt;
    return (std::log(target / m.dark_prefactor)) / m.dark_exponent;
}

}  // namespace detail

/// Per-channel DE at the 100 Hz and 2 kHz DCR operating points plus the
/// maximum DE on the bias grid. Rows sorted by channel id.
inline std::vector<ChannelReportRow> channel_report(
    const SystemConfig& sys, double wavelength,
    const std::vector<double>& grid = detector::bias_grid()) {
    sys.validate();
    std::vector<ChannelReportRow> rows;
    for (const auto& c : sys.channels) {
        ChannelReportRow row;
        row.channel_id = c.channel_id;
        try {
            auto curve = detector::de_vs_dcr_curve(c, wavelength, grid);
            row.max_de = curve.max_de();
            row.bias_at_max = grid.back();
            try {
                row.de_at_100hz = curve.de_at_dcr(100.0);
                row.bias_at_100hz = detail::bias_at_dcr(c, 100.0, grid);
            } catch (const std::out_of_range&) {}
            try {
                row.de_at_2khz = curve.de_at_dcr(2000.0);
                row.bias_at_2khz = detail::bias_at_dcr(c, 2000.0, grid);
            } catch (const std::out_of_range&) {}
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) {
                  return a.channel_id < b.channel_id;
              });
    return rows;
}

inline SweepResult channel_report_csv(const std::vector<ChannelReportRow>& rows) {
    SweepResult out;
    out.columns = {"channel", "de_at_100hz", "de_at_2khz", "max_de",
                   "bias_at_max"};
    double idx = 1.0;
    for (const auto& r : rows) {
        out.add_row({idx++, r.de_at_100hz.value_or(std::nan("")),
                     r.de_at_2khz.value_or(std::nan("")), r.max_de,
                     r.bias_at_max});
    }
    return out;
}

struct Bb84Budget {
    double sifted_rate;   // Hz
    double qber;
    std::vector<double> channel_click_rates;  // Hz, per active channel
    double p_signal;      // summed per-pulse signal click probability
    double p_dark;        // summed per-pulse dark click probability
};

/// First-order weak-coherent-pulse budget over the four active channels.
/// Double clicks are discarded implicitly (probabilities are summed, not
/// squashed); this is a budget calculator, not a security analysis.
inline Bb84Budget bb84_budget(const SystemConfig& sys, const LinkParams& link,
                              double wavelength, double bias = 0.99) {
    link.validate();
    auto active = sys.active_channels();
    double transmittance =
        std::pow(10.0, -(link.channel_loss_db + link.receiver_loss_db) / 10.0);
    double window = link.gate_fraction / link.pulse_rate;

    Bb84Budget out{};
    for (const auto* ch : active) {
        double de = detector::system_de(*ch, wavelength, bias);
        double dcr = detector::dark_rate(*ch, bias);
        double p_sig =
            1.0 - std::exp(-link.mean_photon_number * transmittance * de);
        double p_dark = dcr * window;
        out.p_signal += p_sig;
        out.p_dark += p_dark;
        out.channel_click_rates.push_back(link.pulse_rate *
                                          (p_sig + p_dark));
    }
    double p_total = out.p_signal + out.p_dark;
    out.sifted_rate = 0.5 * link.pulse_rate * p_total;
    // limiting cases are exact: all-signal -> e_det, all-dark -> 1/2
    if (p_total <= 0.0)
        out.qber = 0.0;
    else if (out.p_dark == 0.0)
        out.qber = link.intrinsic_error;
    else if (out.p_signal == 0.0)
        out.qber = 0.5;
    else
        out.qber = (link.intrinsic_error * out.p_signal +
                    0.5 * out.p_dark) / p_total;
    return out;
}

/// Loss sweep comparing two calibrated systems side by side.
inline SweepResult compare_generations(const SystemConfig& a,
                                       const SystemConfig& b,
                                       LinkParams link, double wavelength,
                                       const std::vector<double>& loss_grid_db,
                                       double bias = 0.99) {
    SweepResult out;
    out.columns = {"loss_db", "sifted_rate_a_hz", "qber_a",
                   "sifted_rate_b_hz", "qber_b"};
    for (double loss : loss_grid_db) {
        link.channel_loss_db = loss;
        auto ba = bb84_budget(a, link, wavelength, bias);
        auto bb = bb84_budget(b, link, wavelength, bias);
        out.add_row({loss, ba.sifted_rate, ba.qber, bb.sifted_rate, bb.qber});
    }
    return out;
}

/// System file: JSON referencing channel model files by path (relative paths
/// resolve against the system file's directory).
inline SystemConfig load_system(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open system file: " + path.string());
    nlohmann::json j;
    in >> j;
    SystemConfig sys;
    for (const auto& cj : j.at("channels")) {
        std::filesystem::path p = cj.get<std::string>();
        if (p.is_relative()) p = path.parent_path() / p;
        sys.channels.push_back(detector::load_channel(p));
    }
    if (j.contains("active_set"))
        for (const auto& id : j.at("active_set"))
            sys.active_set.push_back(id.get<std::string>());
    sys.base_temperature = j.value("base_temperature_k", 2.9);
    sys.temperature_stability = j.value("temperature_stability_k", 0.010);
    sys.validate();
    return sys;
}

/// Aligned-column text report.
inline std::string format_report(const std::vector<ChannelReportRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(10) << "channel" << std::right
        << std::setw(14) << "DE@100Hz" << std::setw(14) << "DE@2kHz"
        << std::setw(12) << "max DE" << std::setw(12) << "bias@max" << "\n";
    auto cell = [&](std::optional<double> v) {
        std::ostringstream c;
        if (v)
            c << std::fixed << std::setprecision(4) << *v;
        else
            c << "-";
        return c.str();
    };
    for (const auto& r : rows) {
        if (!r.error.empty()) {
            out << std::left << std::setw(10) << r.channel_id
                << "  error: " << r.error << "\n";
            continue;
        }
        out << std::left << std::setw(10) << r.channel_id << std::right
            << std::setw(14) << cell(r.de_at_100hz) << std::setw(14)
            << cell(r.de_at_2khz) << std::setw(12) << cell(r.max_de)
            << std::setw(12) << cell(r.bias_at_max) << "\n";
    }
    return out.str();
}

}  // namespace snspd::system
