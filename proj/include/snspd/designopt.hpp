// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "snspd/beamtrain.hpp"
#include "snspd/sweep.hpp"
#include "snspd/thinfilm.hpp"

namespace snspd::designopt {

// ---------------------------------------------------------------------------
// Scalar golden-section maximization on a bracket.

template <typename F>
double golden_section_max(F f, double lo, double hi, double tol = 1e-3) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        }
    }
    return f1 > f2 ? x1 : x2;
}

// ---------------------------------------------------------------------------
// Nelder-Mead simplex (minimization) with a smooth box transform.

struct NelderMeadOptions {
    int max_iterations{1200};
    double relative_tolerance{1e-10};
};

struct NelderMeadResult {
    std::vector<double> x;
    double value{0.0};
    int iterations{0};
};

namespace detail {

inline double to_box(double y, double lo, double hi) {
    if (hi <= lo) return lo;
    return lo + (hi - lo) * 0.5 * (1.0 + std::sin(y));
}

inline double from_box(double x, double lo, double hi) {
    if (hi <= lo) return 0.0;
    double t = std::clamp(2.0 * (x - lo) / (hi - lo) - 1.0, -1.0, 1.0);
    return std::asin(t);
}

}  // namespace detail

/// Minimize f over the box [lo, hi] starting from x0 (inside the box).
template <typename F>
NelderMeadResult nelder_mead_box(F f, std::vector<double> x0,
                                 const std::vector<double>& lo,
                                 const std::vector<double>& hi,
                                 const NelderMeadOptions& opt = {}) {
    const std::size_t n = x0.size();
    auto eval_y = [&](const std::vector<double>& y) {
        std::vector<double> x(n);
        for (std::size_t j = 0; j < n; ++j)
            x[j] = detail::to_box(y[j], lo[j], hi[j]);
        return f(x);
    };
    std::vector<double> y0(n);
    for (std::size_t j = 0; j < n; ++j)
        y0[j] = detail::from_box(x0[j], lo[j], hi[j]);

    std::vector<std::vector<double>> pts(n + 1, y0);
    std::vector<double> vals(n + 1);
    for (std::size_t j = 0; j < n; ++j) pts[j + 1][j] += 0.25;
    for (std::size_t j = 0; j <= n; ++j) vals[j] = eval_y(pts[j]);

    int iter = 0;
    for (; iter < opt.max_iterations; ++iter) {
        std::size_t best = 0, worst = 0;
        for (std::size_t j = 1; j <= n; ++j) {
            if (vals[j] < vals[best]) best = j;
            if (vals[j] > vals[worst]) worst = j;
        }
        std::size_t second = worst == 0 ? 1 : 0;
        for (std::size_t j = 0; j <= n; ++j)
            if (j != worst && vals[j] > vals[second]) second = j;

        double spread = std::abs(vals[worst] - vals[best]);
        if (spread <= opt.relative_tolerance * (1.0 + std::abs(vals[best])))
            break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t j = 0; j <= n; ++j) {
            if (j == worst) continue;
            for (std::size_t c = 0; c < n; ++c) centroid[c] += pts[j][c];
        }
        for (double& c : centroid) c /= static_cast<double>(n);

        auto blend = [&](double t) {
            std::vector<double> p(n);
            for (std::size_t c = 0; c < n; ++c)
                p[c] = centroid[c] + t * (centroid[c] - pts[worst][c]);
            return p;
        };
        auto refl = blend(1.0);
        double fr = eval_y(refl);
        if (fr < vals[best]) {
            auto exp_ = blend(2.0);
            double fe = eval_y(exp_);
            if (fe < fr) { pts[worst] = exp_; vals[worst] = fe; }
            else { pts[worst] = refl; vals[worst] = fr; }
        } else if (fr < vals[second]) {
            pts[worst] = refl;
            vals[worst] = fr;
        } else {
            auto con = blend(fr < vals[worst] ? 0.5 : -0.5);
            double fc = eval_y(con);
            if (fc < std::min(fr, vals[worst])) {
                pts[worst] = con;
                vals[worst] = fc;
            } else {  // shrink toward best
                for (std::size_t j = 0; j <= n; ++j) {
                    if (j == best) continue;
                    for (std::size_t c = 0; c < n; ++c)
                        pts[j][c] = pts[best][c] +
                                    0.5 * (pts[j][c] - pts[best][c]);
                    vals[j] = eval_y(pts[j]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j <= n; ++j)
        if (vals[j] < vals[best]) best = j;
    NelderMeadResult out;
    out.x.resize(n);
    for (std::size_t j = 0; j < n; ++j)
        out.x[j] = detail::to_box(pts[best][j], lo[j], hi[j]);
    out.value = vals[best];
    out.iterations = iter;
    return out;
}

// ---------------------------------------------------------------------------
// Cavity design

struct CavityDesignProblem {
    thinfilm::LayerStack stack;       // template
    std::size_t variable_layer{0};    // index of the thickness under design
    double thickness_min{10e-9};
    double thickness_max{600e-9};
    double band_min{1300e-9};
    double band_max{1600e-9};
    int band_points{31};
    // spectral weighting hook; defaults to uniform
    std::function<double(double)> weight;
};

struct CavityDesignResult {
    double optimal_thickness;
    double objective;          // band-averaged meander absorptance
    SweepResult curve;         // thickness_nm, mean_A_nbn (coarse scan)
};

inline double band_mean_meander_absorptance(const thinfilm::LayerStack& stack,
                                            const MaterialDb& db,
                                            double band_min, double band_max,
                                            int points,
                                            const std::function<double(double)>&
                                                weight = {}) {
    double sum = 0.0, wsum = 0.0;
    for (int j = 0; j < points; ++j) {
        double lam = points == 1
                         ? 0.5 * (band_min + band_max)
                         : band_min + (band_max - band_min) * j / (points - 1);
        auto r = thinfilm::stack_response(stack, db, lam);
        double a = 0.0;
        for (std::size_t l = 0; l < stack.layers.size(); ++l)
            if (stack.layers[l].is_meander) a += r.absorptance_per_layer[l];
        double wgt = weight ? weight(lam) : 1.0;
        sum += wgt * a;
        wsum += wgt;
    }
    return sum / wsum;
}

/// Coarse 2 nm grid scan followed by golden-section refinement on the best
/// bracket. The returned objective dominates every coarse grid point.
inline CavityDesignResult optimize_cavity(const CavityDesignProblem& problem,
                                          const MaterialDb& db) {
    if (!(problem.band_min < problem.band_max))
        throw std::invalid_argument("empty design band");
    if (problem.variable_layer >= problem.stack.layers.size())
        throw std::invalid_argument("variable layer index out of range");

    auto objective = [&](double t) {
        thinfilm::LayerStack s = problem.stack;
        s.layers[problem.variable_layer].thickness = t;
        double v = band_mean_meander_absorptance(s, db, problem.band_min,
                                                 problem.band_max,
                                                 problem.band_points,
                                                 problem.weight);
        if (!std::isfinite(v)) {
            std::ostringstream msg;
            msg << "non-finite objective at thickness " << t * 1e9 << " nm";
            throw std::runtime_error(msg.str());
        }
        return v;
    };

    const double step = 2e-9;
    CavityDesignResult out;
    out.curve.columns = {"thickness_nm", "mean_A_nbn"};
    double best_t = problem.thickness_min, best_v = -1.0;
    for (double t = problem.thickness_min; t <= problem.thickness_max + 1e-15;
         t += step) {
        double v = objective(t);
        out.curve.add_row({t * 1e9, v});
        if (v > best_v) { best_v = v; best_t = t; }
    }
    double lo = std::max(problem.thickness_min, best_t - step);
    double hi = std::min(problem.thickness_max, best_t + step);
    double t_ref = golden_section_max(objective, lo, hi, 1e-12);
    double v_ref = objective(t_ref);
    out.optimal_thickness = v_ref >= best_v ? t_ref : best_t;
    out.objective = std::max(v_ref, best_v);
    return out;
}

// ---------------------------------------------------------------------------
// Lens train design

struct GrinBounds {
    double n0_min{1.5}, n0_max{1.8};
    // g_max from the index contrast a 125 um graded rod supports:
    // g = sqrt(2*delta)/a with delta ~ 4.5% and a = 62.5 um
    double g_min{1e3}, g_max{4.8e3};   // 1/m
    double length_min{0.1e-3}, length_max{3e-3};
};

struct LensDesignProblem {
    double gap{20e-6};
    std::string gap_medium{"vacuum"};
    double substrate_thickness{400e-6};
    std::string substrate_material{"mgo"};
    double fiber_mfd{10.4e-6};
    std::string fiber_medium{"smf28"};
    double wavelength{1550e-9};
    GrinBounds lens1, lens2;
    double lens_diameter{125e-6};
    double position_tolerance{5e-6};   // delta z
    int starts{48};
};

struct LensDesignResult {
    std::array<double, 6> params;  // n0_1, g_1, L_1, n0_2, g_2, L_2
    beamtrain::BeamTrain train;
    double waist_diameter;         // 2w at the meander plane
    double position_error;         // meters
    double max_grin_fill;
    double objective;
    bool feasible;
};

class infeasible_design : public std::runtime_error {
  public:
    infeasible_design(const std::string& what, LensDesignResult best)
        : std::runtime_error(what), best_candidate(std::move(best)) {}
    LensDesignResult best_candidate;
};

namespace detail {

inline std::string literal_id(double n) {
    std::ostringstream s;
    s.precision(17);
    s << "n=" << n;
    return s.str();
}

}  // namespace detail

inline beamtrain::BeamTrain make_lens_train(const LensDesignProblem& p,
                                            const std::array<double, 6>& x) {
    using namespace beamtrain;
    BeamTrain t;
    t.input.waist_radius = p.fiber_mfd / 2.0;
    t.input.wavelength = p.wavelength;
    // resolved when building; the db lookup happens in propagate()
    t.input.medium_index = 0.0;  // patched below
    auto id1 = detail::literal_id(x[0]);
    auto id2 = detail::literal_id(x[3]);
    t.elements = {
        FlatInterface{p.fiber_medium, id1},
        GrinSegment{x[0], x[1], x[2], p.lens_diameter},
        FlatInterface{id1, id2},
        GrinSegment{x[3], x[4], x[5], p.lens_diameter},
        FlatInterface{id2, p.gap_medium},
        FreeSpace{p.gap, p.gap_medium},
        FlatInterface{p.gap_medium, p.substrate_material},
        FreeSpace{p.substrate_thickness, p.substrate_material},
    };
    return t;
}

inline LensDesignResult evaluate_lens_design(const LensDesignProblem& p,
                                             const MaterialDb& db,
                                             const std::array<double, 6>& x) {
    LensDesignResult r;
    r.params = x;
    r.train = make_lens_train(p, x);
    r.train.input.medium_index = db.index(p.fiber_medium, p.wavelength).n;
    auto prop = beamtrain::propagate(r.train, db, 5e-6);
    r.waist_diameter = 2.0 * prop.at_target().w;
    r.position_error = prop.waist_position_error();
    r.max_grin_fill = prop.max_grin_fill;
    // objective in micrometers: spot diameter, position-error steering term,
    // and a clipping penalty that keeps the beam inside diameter/4
    r.objective = r.waist_diameter * 1e6 + std::abs(r.position_error) * 1e6 +
                  1e3 * std::max(0.0, r.max_grin_fill - 1.0);
    r.feasible = std::abs(r.position_error) <= p.position_tolerance &&
                 r.max_grin_fill <= 1.0;
    return r;
}

/// Multi-start Nelder-Mead over (n0, g, L) of both GRIN segments. Seeded and
/// deterministic; starts are reduced by index, not completion order.
inline LensDesignResult optimize_lens_train(const LensDesignProblem& p,
                                            const MaterialDb& db,
                                            std::uint64_t seed = 0) {
    std::vector<double> lo = {p.lens1.n0_min, p.lens1.g_min, p.lens1.length_min,
                              p.lens2.n0_min, p.lens2.g_min, p.lens2.length_min};
    std::vector<double> hi = {p.lens1.n0_max, p.lens1.g_max, p.lens1.length_max,
                              p.lens2.n0_max, p.lens2.g_max, p.lens2.length_max};

    auto objective = [&](const std::vector<double>& v) {
        std::array<double, 6> x;
        std::copy_n(v.begin(), 6, x.begin());
        try {
            return evaluate_lens_design(p, db, x).objective;
        } catch (const std::exception&) {
            return 1e12;
        }
    };

    std::mt19937_64 rng(seed);
    auto uniform = [&](double a, double b) {
        return a + (b - a) * ((rng() >> 11) + 0.5) * 0x1.0p-53;
    };

    bool have_best = false, have_feasible = false;
    LensDesignResult best{};
    for (int start = 0; start < p.starts; ++start) {
        std::vector<double> x0(6);
        for (int j = 0; j < 6; ++j) x0[j] = uniform(lo[j], hi[j]);
        auto nm = nelder_mead_box(objective, x0, lo, hi);
        std::array<double, 6> x;
        std::copy_n(nm.x.begin(), 6, x.begin());
        LensDesignResult cand;
        try {
            cand = evaluate_lens_design(p, db, x);
        } catch (const std::exception&) {
            continue;
        }
        bool better;
        if (cand.feasible != have_feasible)
            better = cand.feasible;
        else
            better = !have_best || cand.objective < best.objective;
        if (better) {
            best = cand;
            have_best = true;
            have_feasible = have_feasible || cand.feasible;
        }
    }
    if (!have_best)
        throw std::runtime_error("lens design failed at every start");
    if (!best.feasible)
        throw infeasible_design(
            "no lens design met the waist-position constraint", best);
    return best;
}

// ---------------------------------------------------------------------------
// Lens catalog mode: pick the best pair from commercial rows.

struct CatalogLens {
    std::string name;
    double n0;
    double gradient;  // 1/m
    double length;    // m
    double diameter;  // m
};

inline std::vector<CatalogLens> load_catalog(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open lens catalog: " + path.string());
    std::vector<CatalogLens> rows;
    std::string line;
    while (std::getline(in, line)) {
        auto pos = line.find('#');
        if (pos != std::string::npos) line.erase(pos);
        if (line.find_first_not_of(" \t\r\n,") == std::string::npos) continue;
        if (line.find("name") != std::string::npos) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5)
            throw std::runtime_error("bad catalog row: " + line);
        rows.push_back({cells[0], std::stod(cells[1]),
                        std::stod(cells[2]) * 1e3, std::stod(cells[3]) * 1e-3,
                        std::stod(cells[4]) * 1e-6});
    }
    return rows;
}

inline LensDesignResult pick_from_catalog(const LensDesignProblem& p,
                                          const MaterialDb& db,
                                          const std::vector<CatalogLens>& cat) {
    bool have = false, have_feasible = false;
    LensDesignResult best{};
    for (const auto& l1 : cat)
        for (const auto& l2 : cat) {
            std::array<double, 6> x = {l1.n0, l1.gradient, l1.length,
                                       l2.n0, l2.gradient, l2.length};
            LensDesignResult cand;
            try {
                cand = evaluate_lens_design(p, db, x);
            } catch (const std::exception&) {
                continue;
            }
            bool better;
            if (cand.feasible != have_feasible)
                better = cand.feasible;
            else
                better = !have || cand.objective < best.objective;
            if (better) {
                best = cand;
                have = true;
                have_feasible = have_feasible || cand.feasible;
            }
        }
    if (!have) throw std::runtime_error("empty or unusable lens catalog");
    if (!best.feasible)
        throw infeasible_design("no catalog pair met the constraints", best);
    return best;
}

// ---------------------------------------------------------------------------
// Generic registered sweeps

struct SweepSpec {
    std::string variable;
    std::vector<double> grid;
    std::string pipeline;
};

class PipelineRegistry {
  public:
    struct Pipeline {
        std::vector<std::string> columns;  // excluding the variable column
        std::function<std::vector<double>(double)> eval;
    };

    void add(const std::string& id, Pipeline p) { pipelines_[id] = std::move(p); }

    SweepResult run(const SweepSpec& spec) const {
        if (spec.grid.empty())
            throw std::invalid_argument("sweep grid must not be empty");
        auto it = pipelines_.find(spec.pipeline);
        if (it == pipelines_.end()) {
            std::string known;
            for (const auto& [k, v] : pipelines_) known += " " + k;
            throw std::invalid_argument("unknown pipeline '" + spec.pipeline +
                                        "'; registered:" + known);
        }
        SweepResult out;
        out.columns = {spec.variable};
        out.columns.insert(out.columns.end(), it->second.columns.begin(),
                           it->second.columns.end());
        for (double v : spec.grid) {
            std::vector<double> row{v};
            auto vals = it->second.eval(v);
            row.insert(row.end(), vals.begin(), vals.end());
            out.add_row(std::move(row));
        }
        return out;
    }

  private:
    std::map<std::string, Pipeline> pipelines_;
};

}  // namespace snspd::designopt
