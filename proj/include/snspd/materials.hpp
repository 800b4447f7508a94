// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace snspd {

/// Complex refractive index N = n + i*k.
struct ComplexIndex {
    double n{1.0};
    double k{0.0};

    std::complex<double> value() const { return {n, k}; }
    bool lossless() const { return k == 0.0; }
};

inline bool operator==(const ComplexIndex& a, const ComplexIndex& b) {
    return a.n == b.n && a.k == b.k;
}

/// Wavelength-indexed dispersion table for one material. Immutable after
/// load; concurrent reads are safe.
class MaterialTable {
  public:
    struct Entry {
        double wavelength;  // meters
        double n;
        double k;
    };

    MaterialTable(std::string material_id, std::vector<Entry> entries,
                  std::string source = {})
        : id_(std::move(material_id)),
          entries_(std::move(entries)),
          source_(std::move(source)) {
        if (entries_.empty())
            throw std::invalid_argument("material '" + id_ + "': empty table");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = entries_[i];
            if (!(e.n > 0.0) || e.k < 0.0)
                throw std::invalid_argument("material '" + id_ +
                                            "': invalid index entry");
            if (i > 0 && !(entries_[i - 1].wavelength < e.wavelength))
                throw std::invalid_argument(
                    "material '" + id_ +
                    "': wavelengths must be strictly ascending");
        }
    }

    /// Constant-index table valid at every wavelength.
    static MaterialTable constant(std::string material_id, double n, double k) {
        return MaterialTable(std::move(material_id),
                             {{0.0, n, k}, {1.0, n, k}}, "<constant>");
    }

    const std::string& id() const { return id_; }
    const std::string& source() const { return source_; }
    const std::vector<Entry>& entries() const { return entries_; }
    double min_wavelength() const { return entries_.front().wavelength; }
    double max_wavelength() const { return entries_.back().wavelength; }

    /// Linear interpolation of n and k separately; exact at grid points.
    ComplexIndex lookup(double wavelength) const {
        if (wavelength < min_wavelength() || wavelength > max_wavelength()) {
            std::ostringstream msg;
            msg << "material '" << id_ << "': wavelength "
                << wavelength * 1e9 << " nm outside table span ["
                << min_wavelength() * 1e9 << ", " << max_wavelength() * 1e9
                << "] nm";
            throw std::out_of_range(msg.str());
        }
        auto hi = std::lower_bound(
            entries_.begin(), entries_.end(), wavelength,
            [](const Entry& e, double w) { return e.wavelength < w; });
        if (hi->wavelength == wavelength) return {hi->n, hi->k};
        auto lo = hi - 1;
        double t = (wavelength - lo->wavelength) /
                   (hi->wavelength - lo->wavelength);
        return {lo->n + t * (hi->n - lo->n), lo->k + t * (hi->k - lo->k)};
    }

    /// Parse `wavelength_nm,n,k` CSV with `#` comments.
    static MaterialTable load_csv(const std::filesystem::path& path,
                                  std::string material_id = {}) {
        std::ifstream in(path);
        if (!in)
            throw std::runtime_error("cannot open material file: " +
                                     path.string());
        if (material_id.empty()) material_id = path.stem().string();
        std::vector<Entry> entries;
        std::string line;
        while (std::getline(in, line)) {
            auto pos = line.find('#');
            if (pos != std::string::npos) line.erase(pos);
            if (line.find_first_not_of(" \t\r\n") == std::string::npos)
                continue;
            if (line.find("wavelength") != std::string::npos) continue;  // header
            std::istringstream row(line);
            std::string cell;
            double v[3];
            for (int i = 0; i < 3; ++i) {
                if (!std::getline(row, cell, ','))
                    throw std::runtime_error("bad row in " + path.string() +
                                             ": " + line);
                v[i] = std::stod(cell);
            }
            entries.push_back({v[0] * 1e-9, v[1], v[2]});
        }
        return MaterialTable(material_id, std::move(entries), path.string());
    }

  private:
    std::string id_;
    std::vector<Entry> entries_;
    std::string source_;
};

inline ComplexIndex lookup_index(const MaterialTable& table,
                                 double wavelength) {
    return table.lookup(wavelength);
}

enum class MixingRule { LinearVolume };  // hook for alternatives

/// Homogeneous effective index of the meander layer: volume-weighted mix of
/// wire and ambient indices with the fill factor.
inline ComplexIndex effective_meander_index(ComplexIndex wire,
                                            ComplexIndex ambient,
                                            double fill_factor,
                                            MixingRule rule =
                                                MixingRule::LinearVolume) {
    if (!(fill_factor >= 0.0 && fill_factor <= 1.0))
        throw std::domain_error("fill_factor must lie in [0, 1]");
    (void)rule;
    return {fill_factor * wire.n + (1.0 - fill_factor) * ambient.n,
            fill_factor * wire.k + (1.0 - fill_factor) * ambient.k};
}

/// Resolves material ids to dispersion tables. Ids of the form "n=1.65" or
/// "n=1.65+0.2i" resolve to constant indices without touching the disk.
class MaterialDb {
  public:
    explicit MaterialDb(std::filesystem::path dir = default_dir())
        : dir_(std::move(dir)) {}

    static std::filesystem::path default_dir() {
        if (const char* env = std::getenv("SNSPD_MATERIALS_DIR"))
            return env;
#ifdef SNSPD_DATA_DIR
        return std::filesystem::path(SNSPD_DATA_DIR) / "materials";
#else
        return "data/materials";
#endif
    }

    const std::filesystem::path& dir() const { return dir_; }

    const MaterialTable& get(const std::string& id) const {
        auto it = cache_.find(id);
        if (it != cache_.end()) return it->second;
        if (id.rfind("n=", 0) == 0) {
            auto [n, k] = parse_literal(id);
            return cache_.emplace(id, MaterialTable::constant(id, n, k))
                .first->second;
        }
        auto path = dir_ / (id + ".csv");
        return cache_.emplace(id, MaterialTable::load_csv(path, id))
            .first->second;
    }

    ComplexIndex index(const std::string& id, double wavelength) const {
        return get(id).lookup(wavelength);
    }

    /// Source files consulted so far (for run manifests).
    std::vector<std::string> sources() const {
        std::vector<std::string> out;
        for (const auto& [id, table] : cache_)
            if (table.source() != "<constant>") out.push_back(table.source());
        std::sort(out.begin(), out.end());
        return out;
    }

  private:
    static std::pair<double, double> parse_literal(const std::string& id) {
        // "n=<real>" or "n=<real>+<imag>i"
        std::string body = id.substr(2);
        double n = 0.0, k = 0.0;
        auto plus = body.find('+', 1);
        if (plus != std::string::npos && body.back() == 'i') {
            n = std::stod(body.substr(0, plus));
            k = std::stod(body.substr(plus + 1, body.size() - plus - 2));
        } else {
            n = std::stod(body);
        }
        if (!(n > 0.0) || k < 0.0)
            throw std::invalid_argument("bad literal material id: " + id);
        return {n, k};
    }

    std::filesystem::path dir_;
    mutable std::map<std::string, MaterialTable> cache_;
};

}  // namespace snspd
