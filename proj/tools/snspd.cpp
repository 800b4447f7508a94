// SPDX-License-Identifier: Apache-2.0
//
// snspd — command-line frontend for the cavity/coupling/detector toolkit.
// Emits CSV (authoritative) plus optional SVG renderings; every output file
// is accompanied by a run manifest with input hashes for reproducibility.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "snspd/beamtrain.hpp"
#include "snspd/designopt.hpp"
#include "snspd/detector.hpp"
#include "snspd/materials.hpp"
#include "snspd/sweep.hpp"
#include "snspd/system.hpp"
#include "snspd/thinfilm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

/// Bad arguments or values: exit code 2 instead of 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path data_path(const std::string& rel) {
#ifdef SNSPD_DATA_DIR
    return fs::path(SNSPD_DATA_DIR) / rel;
#else
    return fs::path("data") / rel;
#endif
}

std::string fnv1a64_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash " + path.string());
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

/// Minimal line plot of a sweep table: first column on x, the rest as series.
std::string render_svg(const snspd::SweepResult& t, const std::string& title) {
    const double W = 640, H = 420, ML = 70, MR = 20, MT = 40, MB = 50;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                            "#ff7f0e", "#8c564b"};
    std::ostringstream s;
    s << std::setprecision(10);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
    if (!t.rows.empty() && t.columns.size() >= 2) {
        double xmin = t.rows.front()[0], xmax = xmin;
        double ymin = t.rows.front()[1], ymax = ymin;
        for (const auto& r : t.rows) {
            xmin = std::min(xmin, r[0]);
            xmax = std::max(xmax, r[0]);
            for (std::size_t j = 1; j < r.size(); ++j) {
                if (!std::isfinite(r[j])) continue;
                ymin = std::min(ymin, r[j]);
                ymax = std::max(ymax, r[j]);
            }
        }
        if (xmax <= xmin) xmax = xmin + 1.0;
        if (ymax <= ymin) ymax = ymin + 1.0;
        auto px = [&](double x) {
            return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
        };
        auto py = [&](double y) {
            return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);
        };
        s << "<rect x=\"" << ML << "\" y=\"" << MT << "\" width=\""
          << W - ML - MR << "\" height=\"" << H - MT - MB
          << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (std::size_t j = 1; j < t.columns.size(); ++j) {
            s << "<polyline fill=\"none\" stroke=\""
              << colors[(j - 1) % 6] << "\" points=\"";
            for (const auto& r : t.rows)
                if (std::isfinite(r[j]))
                    s << px(r[0]) << "," << py(r[j]) << " ";
            s << "\"/>\n";
            s << "<text x=\"" << W - MR - 4 << "\" y=\"" << MT + 16 * j
              << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
                 "font-size=\"11\" fill=\"" << colors[(j - 1) % 6] << "\">"
              << t.columns[j] << "</text>\n";
        }
        s << std::setprecision(5);
        s << "<text x=\"" << ML << "\" y=\"" << H - MB + 18
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << xmin
          << "</text>\n";
        s << "<text x=\"" << W - MR << "\" y=\"" << H - MB + 18
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"11\">" << xmax << "</text>\n";
        s << "<text x=\"" << ML - 6 << "\" y=\"" << H - MB
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"11\">" << ymin << "</text>\n";
        s << "<text x=\"" << ML - 6 << "\" y=\"" << MT + 10
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
             "font-size=\"11\">" << ymax << "</text>\n";
        s << "<text x=\"" << (ML + W - MR) / 2 << "\" y=\"" << H - 12
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"12\">" << t.columns[0] << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

/// Shared output plumbing: directory, format selection, manifests.
struct Emitter {
    fs::path out_dir;
    std::string format{"csv"};
    std::uint64_t seed{0};
    std::string command;
    const snspd::MaterialDb* db{nullptr};
    std::vector<fs::path> extra_inputs;  // stack/train/channel/system files

    void manifest(const std::string& stem, const json& config,
                  const std::vector<std::string>& outputs) const {
        json inputs = json::object();
        if (db)
            for (const auto& src : db->sources())
                inputs[src] = fnv1a64_file(src);
        for (const auto& p : extra_inputs)
            inputs[p.string()] = fnv1a64_file(p);
        json m = {{"command", command},
                  {"config", config},
                  {"inputs", inputs},
                  {"outputs", outputs},
                  {"seed", seed},
                  {"version", kVersion},
                  {"timestamp", timestamp_utc()}};
        snspd::write_file_atomic(out_dir / (stem + ".manifest.json"),
                                 m.dump(2) + "\n");
    }

    void table(const std::string& stem, const snspd::SweepResult& t,
               const json& config) const {
        std::vector<std::string> written;
        if (format == "csv" || format == "both") {
            snspd::write_file_atomic(out_dir / (stem + ".csv"), t.to_csv());
            written.push_back(stem + ".csv");
        }
        if (format == "svg" || format == "both") {
            snspd::write_file_atomic(out_dir / (stem + ".svg"),
                                     render_svg(t, stem));
            written.push_back(stem + ".svg");
        }
        manifest(stem, config, written);
    }

    void text(const std::string& stem, const std::string& ext,
              const std::string& content, const json& config) const {
        snspd::write_file_atomic(out_dir / (stem + ext), content);
        manifest(stem, config, {stem + ext});
    }
};

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> g(n);
    for (int j = 0; j < n; ++j)
        g[j] = n == 1 ? lo : lo + (hi - lo) * j / (n - 1);
    return g;
}

snspd::detector::FitResult fit_calibration(const fs::path& obs_file,
                                           const std::string& channel_id) {
    auto obs = snspd::detector::load_observations(obs_file);
    auto fit = snspd::detector::fit_channel(obs);
    fit.model.channel_id = channel_id;
    return fit;
}

snspd::SweepResult curve_table(const snspd::detector::DetectorChannelModel& m,
                               double wavelength) {
    return snspd::detector::de_vs_dcr_curve(m, wavelength,
                                            snspd::detector::bias_grid())
        .table;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cavity-coupled single-photon detector design toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string out_dir = "out";
    std::string materials_dir;
    std::string format = "csv";
    std::uint64_t seed = 0;
    app.add_option("--out", out_dir, "output directory")
        ->capture_default_str();
    app.add_option("--seed", seed, "seed for stochastic commands")
        ->capture_default_str();
    app.add_option("--materials-dir", materials_dir,
                   "material table directory (default: bundled tables or "
                   "$SNSPD_MATERIALS_DIR)");
    app.add_option("--format", format, "output rendering")
        ->check(CLI::IsMember({"csv", "svg", "both"}))
        ->capture_default_str();

    // ---- stack-spectrum -------------------------------------------------
    auto* sp = app.add_subcommand("stack-spectrum",
                                  "R/T/absorptance spectrum of a film stack");
    std::string sp_stack = data_path("stacks/device_stack.json").string();
    double sp_lo = 1300, sp_hi = 1600, sp_angle = 0;
    int sp_points = 31;
    std::string sp_pol = "TE";
    sp->add_option("--stack", sp_stack, "stack JSON file")
        ->capture_default_str();
    sp->add_option("--lambda-min", sp_lo, "nm")->capture_default_str();
    sp->add_option("--lambda-max", sp_hi, "nm")->capture_default_str();
    sp->add_option("--points", sp_points, "grid size")->capture_default_str();
    sp->add_option("--angle-deg", sp_angle, "incidence angle")
        ->capture_default_str();
    sp->add_option("--pol", sp_pol, "TE or TM")
        ->check(CLI::IsMember({"TE", "TM"}));

    // ---- beam-profile ---------------------------------------------------
    auto* bp = app.add_subcommand("beam-profile",
                                  "spot radius along an optical train");
    std::string bp_train = data_path("trains/lensed_fiber.json").string();
    double bp_step = 5.0;
    bp->add_option("--train", bp_train, "train JSON file")
        ->capture_default_str();
    bp->add_option("--step-um", bp_step, "sampling step")
        ->capture_default_str();

    // ---- coupling -------------------------------------------------------
    auto* cp = app.add_subcommand(
        "coupling", "Gaussian power fraction through a square aperture");
    double cp_w = 4.5, cp_side = 15.0, cp_dx = 0.0, cp_dy = 0.0;
    cp->add_option("--waist-um", cp_w, "1/e^2 spot radius w")
        ->capture_default_str();
    cp->add_option("--side-um", cp_side, "full side of the square aperture")
        ->capture_default_str();
    cp->add_option("--offset-x-um", cp_dx, "beam axis offset")
        ->capture_default_str();
    cp->add_option("--offset-y-um", cp_dy, "beam axis offset")
        ->capture_default_str();

    // ---- fit ------------------------------------------------------------
    auto* ft = app.add_subcommand(
        "fit", "calibrate a channel model against (bias, DE, DCR) anchors");
    std::string ft_obs, ft_id = "fit";
    double ft_amp = -1.0;
    ft->add_option("--observations", ft_obs, "anchor CSV")->required();
    ft->add_option("--channel-id", ft_id, "id stored in the model file")
        ->capture_default_str();
    ft->add_option("--fixed-amplitude", ft_amp,
                   "pin eta_c*A instead of fitting it");

    // ---- curve ----------------------------------------------------------
    auto* cv = app.add_subcommand("curve",
                                  "DE and DCR versus bias for one channel");
    std::string cv_channel;
    double cv_lambda = 1550;
    cv->add_option("--channel", cv_channel, "channel model JSON")->required();
    cv->add_option("--wavelength-nm", cv_lambda)->capture_default_str();

    // ---- channels -------------------------------------------------------
    auto* chs = app.add_subcommand("channels",
                                   "operating-point report for a system");
    std::string chs_system = data_path("systems/fig4_system.json").string();
    double chs_lambda = 1550;
    chs->add_option("--system", chs_system, "system JSON")
        ->capture_default_str();
    chs->add_option("--wavelength-nm", chs_lambda)->capture_default_str();

    // ---- optimize-cavity ------------------------------------------------
    auto* oc = app.add_subcommand("optimize-cavity",
                                  "band-average-optimal spacer thickness");
    std::string oc_stack = data_path("stacks/device_stack.json").string();
    int oc_layer = -1;
    double oc_band_lo = 1300, oc_band_hi = 1600;
    oc->add_option("--stack", oc_stack, "stack JSON file")
        ->capture_default_str();
    oc->add_option("--layer", oc_layer,
                   "index of the layer under design (default: first sio)");
    oc->add_option("--band-min", oc_band_lo, "nm")->capture_default_str();
    oc->add_option("--band-max", oc_band_hi, "nm")->capture_default_str();

    // ---- optimize-lens --------------------------------------------------
    auto* ol = app.add_subcommand(
        "optimize-lens", "two-GRIN focuser for a given substrate thickness");
    double ol_sub = 400, ol_gap = 20, ol_mfd = 10.4, ol_lambda = 1550;
    int ol_starts = 32;
    std::string ol_catalog;
    ol->add_option("--substrate-um", ol_sub)->capture_default_str();
    ol->add_option("--gap-um", ol_gap)->capture_default_str();
    ol->add_option("--mfd-um", ol_mfd, "fiber mode-field diameter")
        ->capture_default_str();
    ol->add_option("--wavelength-nm", ol_lambda)->capture_default_str();
    ol->add_option("--starts", ol_starts, "multi-start count")
        ->capture_default_str();
    ol->add_option("--catalog", ol_catalog,
                   "pick the best pair from a lens catalog CSV instead of "
                   "continuous optimization");

    // ---- qkd ------------------------------------------------------------
    auto* qk = app.add_subcommand("qkd",
                                  "BB84 sifted-rate/QBER budget, loss sweep");
    std::string qk_system = data_path("systems/fig4_system.json").string();
    double qk_mu = 0.1, qk_rx_loss = 0.0, qk_rate = 1e9, qk_gate = 1.0;
    double qk_edet = 0.01, qk_bias = 0.99, qk_lambda = 1550;
    double qk_loss_lo = 0.0, qk_loss_hi = 40.0;
    int qk_loss_points = 41;
    qk->add_option("--system", qk_system, "system JSON")
        ->capture_default_str();
    qk->add_option("--mu", qk_mu, "mean photon number")->capture_default_str();
    qk->add_option("--receiver-loss-db", qk_rx_loss)->capture_default_str();
    qk->add_option("--pulse-rate", qk_rate, "Hz")->capture_default_str();
    qk->add_option("--gate-fraction", qk_gate)->capture_default_str();
    qk->add_option("--e-det", qk_edet, "intrinsic error")
        ->capture_default_str();
    qk->add_option("--bias", qk_bias, "normalized bias")
        ->capture_default_str();
    qk->add_option("--wavelength-nm", qk_lambda)->capture_default_str();
    qk->add_option("--loss-min", qk_loss_lo, "dB")->capture_default_str();
    qk->add_option("--loss-max", qk_loss_hi, "dB")->capture_default_str();
    qk->add_option("--loss-points", qk_loss_points)->capture_default_str();

    // ---- reproduce ------------------------------------------------------
    auto* rp = app.add_subcommand(
        "reproduce", "regenerate a bundled figure from calibrated models");
    std::string rp_figure;
    rp->add_option("figure", rp_figure,
                   "one of: fig2 fig3a fig3b fig4 thin-substrate")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        snspd::MaterialDb db(materials_dir.empty()
                                 ? snspd::MaterialDb::default_dir()
                                 : fs::path(materials_dir));
        Emitter em;
        em.out_dir = out_dir;
        em.format = format;
        em.seed = seed;
        em.db = &db;
        std::cout << std::setprecision(6);

        if (sp->parsed()) {
            em.command = "stack-spectrum";
            if (sp_points < 1) throw UsageError("need at least one point");
            if (!(sp_lo > 0) || !(sp_hi >= sp_lo))
                throw UsageError("empty or invalid wavelength range");
            auto stack = snspd::thinfilm::load_stack(sp_stack);
            em.extra_inputs.push_back(sp_stack);
            std::vector<double> grid;
            for (double w : linspace(sp_lo, sp_hi, sp_points))
                grid.push_back(w * 1e-9);
            auto pol = sp_pol == "TM" ? snspd::thinfilm::Polarization::TM
                                      : snspd::thinfilm::Polarization::TE;
            auto t = snspd::thinfilm::absorptance_spectrum(
                stack, db, grid, sp_angle * std::numbers::pi / 180.0, pol);
            em.table("spectrum", t,
                     {{"stack", sp_stack},
                      {"lambda_min_nm", sp_lo},
                      {"lambda_max_nm", sp_hi},
                      {"points", sp_points},
                      {"angle_deg", sp_angle},
                      {"pol", sp_pol}});
            std::cout << "wrote spectrum.csv (" << t.rows.size() << " rows)\n";
        } else if (bp->parsed()) {
            em.command = "beam-profile";
            if (!(bp_step > 0)) throw UsageError("step must be > 0");
            auto train = snspd::beamtrain::load_train(bp_train);
            em.extra_inputs.push_back(bp_train);
            auto prop = snspd::beamtrain::propagate(train, db, bp_step * 1e-6);
            em.table("profile", snspd::beamtrain::profile_csv(prop),
                     {{"train", bp_train}, {"step_um", bp_step}});
            std::cout << "final spot radius w = "
                      << prop.at_target().w * 1e6 << " um\n";
            if (prop.clipped())
                std::cerr << "warning: beam exceeds diameter/4 inside a GRIN "
                             "segment (fill "
                          << prop.max_grin_fill << ")\n";
        } else if (cp->parsed()) {
            em.command = "coupling";
            if (!(cp_w > 0) || !(cp_side > 0))
                throw UsageError("waist and side must be > 0");
            double c = snspd::beamtrain::square_aperture_coupling(
                cp_w * 1e-6, cp_side / 2.0 * 1e-6, cp_dx * 1e-6,
                cp_dy * 1e-6);
            snspd::SweepResult t;
            t.columns = {"waist_um", "side_um", "offset_x_um", "offset_y_um",
                         "coupling"};
            t.add_row({cp_w, cp_side, cp_dx, cp_dy, c});
            em.table("coupling", t,
                     {{"waist_um", cp_w},
                      {"side_um", cp_side},
                      {"offset_x_um", cp_dx},
                      {"offset_y_um", cp_dy}});
            std::cout << std::setprecision(10) << c << "\n";
        } else if (ft->parsed()) {
            em.command = "fit";
            em.extra_inputs.push_back(ft_obs);
            auto obs = snspd::detector::load_observations(ft_obs);
            snspd::detector::FitOptions opt;
            if (ft_amp > 0) opt.fixed_amplitude = ft_amp;
            auto fit = snspd::detector::fit_channel(obs, opt);
            fit.model.channel_id = ft_id;
            em.text(ft_id, ".json",
                    snspd::detector::channel_to_json(fit.model).dump(2) + "\n",
                    {{"observations", ft_obs},
                     {"channel_id", ft_id},
                     {"fixed_amplitude", ft_amp > 0 ? json(ft_amp) : json()}});
            std::cout << "fit " << ft_id << ": i0 = "
                      << fit.model.registering_midpoint
                      << ", s = " << fit.model.registering_steepness
                      << ", residual norm = " << fit.report.residual_norm
                      << " (" << fit.report.iterations << " iterations)\n";
        } else if (cv->parsed()) {
            em.command = "curve";
            em.extra_inputs.push_back(cv_channel);
            auto m = snspd::detector::load_channel(cv_channel);
            em.table("curve", curve_table(m, cv_lambda * 1e-9),
                     {{"channel", cv_channel}, {"wavelength_nm", cv_lambda}});
            std::cout << "wrote curve.csv\n";
        } else if (chs->parsed()) {
            em.command = "channels";
            em.extra_inputs.push_back(chs_system);
            auto sys = snspd::system::load_system(chs_system);
            auto rows = snspd::system::channel_report(sys, chs_lambda * 1e-9);
            em.table("channels", snspd::system::channel_report_csv(rows),
                     {{"system", chs_system}, {"wavelength_nm", chs_lambda}});
            std::cout << snspd::system::format_report(rows);
        } else if (oc->parsed()) {
            em.command = "optimize-cavity";
            snspd::designopt::CavityDesignProblem prob;
            prob.stack = snspd::thinfilm::load_stack(oc_stack);
            em.extra_inputs.push_back(oc_stack);
            if (oc_layer < 0) {
                for (std::size_t j = 0; j < prob.stack.layers.size(); ++j)
                    if (prob.stack.layers[j].material_id == "sio")
                        oc_layer = static_cast<int>(j);
                if (oc_layer < 0)
                    throw UsageError(
                        "no sio layer in the stack; pass --layer explicitly");
            }
            prob.variable_layer = static_cast<std::size_t>(oc_layer);
            if (!(oc_band_lo > 0) || !(oc_band_hi > oc_band_lo))
                throw UsageError("invalid design band");
            prob.band_min = oc_band_lo * 1e-9;
            prob.band_max = oc_band_hi * 1e-9;
            auto res = snspd::designopt::optimize_cavity(prob, db);
            em.table("cavity_scan", res.curve,
                     {{"stack", oc_stack},
                      {"layer", oc_layer},
                      {"band_min_nm", oc_band_lo},
                      {"band_max_nm", oc_band_hi}});
            std::cout << "optimal thickness = "
                      << res.optimal_thickness * 1e9
                      << " nm, band-mean meander absorptance = "
                      << res.objective << "\n";
        } else if (ol->parsed()) {
            em.command = "optimize-lens";
            snspd::designopt::LensDesignProblem prob;
            prob.substrate_thickness = ol_sub * 1e-6;
            prob.gap = ol_gap * 1e-6;
            prob.fiber_mfd = ol_mfd * 1e-6;
            prob.wavelength = ol_lambda * 1e-9;
            prob.starts = ol_starts;
            snspd::designopt::LensDesignResult res;
            if (!ol_catalog.empty()) {
                em.extra_inputs.push_back(ol_catalog);
                res = snspd::designopt::pick_from_catalog(
                    prob, db, snspd::designopt::load_catalog(ol_catalog));
            } else {
                res = snspd::designopt::optimize_lens_train(prob, db, seed);
            }
            auto prop = snspd::beamtrain::propagate(res.train, db);
            em.table("lens_profile", snspd::beamtrain::profile_csv(prop),
                     {{"substrate_um", ol_sub},
                      {"gap_um", ol_gap},
                      {"mfd_um", ol_mfd},
                      {"wavelength_nm", ol_lambda},
                      {"starts", ol_starts},
                      {"catalog", ol_catalog}});
            json design = {
                {"n0_1", res.params[0]},      {"g1_per_m", res.params[1]},
                {"l1_m", res.params[2]},      {"n0_2", res.params[3]},
                {"g2_per_m", res.params[4]},  {"l2_m", res.params[5]},
                {"waist_diameter_m", res.waist_diameter},
                {"position_error_m", res.position_error},
                {"max_grin_fill", res.max_grin_fill},
                {"feasible", res.feasible}};
            em.text("lens_design", ".json", design.dump(2) + "\n", design);
            std::cout << "2w = " << res.waist_diameter * 1e6
                      << " um at the meander plane, waist position error = "
                      << res.position_error * 1e6 << " um\n";
        } else if (qk->parsed()) {
            em.command = "qkd";
            em.extra_inputs.push_back(qk_system);
            if (qk_loss_points < 1) throw UsageError("need loss points >= 1");
            if (qk_loss_hi < qk_loss_lo)
                throw UsageError("empty loss range");
            auto sys = snspd::system::load_system(qk_system);
            snspd::system::LinkParams link;
            link.mean_photon_number = qk_mu;
            link.receiver_loss_db = qk_rx_loss;
            link.pulse_rate = qk_rate;
            link.gate_fraction = qk_gate;
            link.intrinsic_error = qk_edet;
            snspd::SweepResult t;
            t.columns = {"loss_db", "sifted_rate_hz", "qber", "p_signal",
                         "p_dark"};
            for (double loss :
                 linspace(qk_loss_lo, qk_loss_hi, qk_loss_points)) {
                link.channel_loss_db = loss;
                auto b = snspd::system::bb84_budget(sys, link,
                                                    qk_lambda * 1e-9, qk_bias);
                t.add_row({loss, b.sifted_rate, b.qber, b.p_signal, b.p_dark});
            }
            em.table("qkd", t,
                     {{"system", qk_system},
                      {"mu", qk_mu},
                      {"receiver_loss_db", qk_rx_loss},
                      {"pulse_rate", qk_rate},
                      {"gate_fraction", qk_gate},
                      {"e_det", qk_edet},
                      {"bias", qk_bias},
                      {"wavelength_nm", qk_lambda}});
            std::cout << "wrote qkd.csv (" << t.rows.size() << " rows)\n";
        } else if (rp->parsed()) {
            em.command = "reproduce";
            json cfg = {{"figure", rp_figure}};
            if (rp_figure == "fig2") {
                auto lens = fit_calibration(
                    data_path("calibrations/fig2_lens_1550.csv"), "fig2_lens");
                auto bare = fit_calibration(
                    data_path("calibrations/fig2_nolens_1550.csv"),
                    "fig2_nolens");
                em.extra_inputs = {
                    data_path("calibrations/fig2_lens_1550.csv"),
                    data_path("calibrations/fig2_nolens_1550.csv")};
                auto tl = curve_table(lens.model, 1550e-9);
                auto tb = curve_table(bare.model, 1550e-9);
                em.table("fig2_lens", tl, cfg);
                em.table("fig2_nolens", tb, cfg);
                auto de100 = [](const snspd::detector::DetectorChannelModel&
                                    m) {
                    return snspd::detector::de_vs_dcr_curve(
                               m, 1550e-9, snspd::detector::bias_grid())
                        .de_at_dcr(100.0);
                };
                std::cout << "DE@100Hz lens = " << de100(lens.model)
                          << ", no lens = " << de100(bare.model) << "\n";
            } else if (rp_figure == "fig3a" || rp_figure == "fig3b") {
                bool is1550 = rp_figure == "fig3a";
                fs::path obs = data_path(is1550
                                             ? "calibrations/fig3_1550.csv"
                                             : "calibrations/fig3_1310.csv");
                em.extra_inputs.push_back(obs);
                auto fit = fit_calibration(obs, rp_figure);
                double lambda = is1550 ? 1550e-9 : 1310e-9;
                auto t = curve_table(fit.model, lambda);
                em.table(rp_figure, t, cfg);
                auto curve = snspd::detector::de_vs_dcr_curve(
                    fit.model, lambda, snspd::detector::bias_grid());
                std::cout << rp_figure
                          << ": DE@100Hz = " << curve.de_at_dcr(100.0)
                          << ", max DE = " << curve.max_de() << "\n";
            } else if (rp_figure == "fig4") {
                fs::path sysfile = data_path("systems/fig4_system.json");
                em.extra_inputs.push_back(sysfile);
                auto sys = snspd::system::load_system(sysfile);
                for (const auto& ch : sys.channels)
                    em.table("fig4_" + ch.channel_id,
                             curve_table(ch, 1550e-9), cfg);
                auto rows = snspd::system::channel_report(sys, 1550e-9);
                em.table("fig4_report",
                         snspd::system::channel_report_csv(rows), cfg);
                std::cout << snspd::system::format_report(rows);
            } else if (rp_figure == "thin-substrate") {
                snspd::designopt::LensDesignProblem prob;
                prob.substrate_thickness = 50e-6;
                auto res =
                    snspd::designopt::optimize_lens_train(prob, db, seed);
                auto prop = snspd::beamtrain::propagate(res.train, db);
                em.table("thin_substrate_profile",
                         snspd::beamtrain::profile_csv(prop), cfg);
                json design = {{"substrate_um", 50.0},
                               {"waist_diameter_m", res.waist_diameter},
                               {"position_error_m", res.position_error}};
                em.text("thin_substrate", ".json", design.dump(2) + "\n", cfg);
                std::cout << "thin-substrate 2w = "
                          << res.waist_diameter * 1e6 << " um\n";
            } else {
                throw UsageError("unknown figure id '" + rp_figure +
                                 "'; valid: fig2 fig3a fig3b fig4 "
                                 "thin-substrate");
            }
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
