#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "avpr/error.hpp"
#include "avpr/io.hpp"
#include "avpr/pdv.hpp"
#include "avpr/world.hpp"

namespace avpr {

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& ctx) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(ctx + ": missing field '" + key + "'");
    return *it;
}

inline double as_double(const json& j, const std::string& field) {
    if (!j.is_number()) throw ParseError("field '" + field + "': expected a number, found " + j.type_name());
    return j.get<double>();
}

inline std::uint64_t as_u64(const json& j, const std::string& field) {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0))
        throw ParseError("field '" + field + "': expected a nonnegative integer");
    return j.get<std::uint64_t>();
}

inline json domain_to_json(const Domain& d) {
    json j{{"id", d.id}, {"seed", d.seed}, {"shift_strength", d.shift_strength}};
    if (d.confusion_blend != 0.0) j["confusion_blend"] = d.confusion_blend;
    return j;
}

inline Domain domain_from_json(const json& j, const std::string& ctx) {
    if (!j.is_object()) throw ParseError(ctx + ": expected an object");
    Domain d;
    const json& id = require(j, "id", ctx);
    if (!id.is_string()) throw ParseError("field '" + ctx + ".id': expected a string");
    d.id = id.get<std::string>();
    d.shift_strength = as_double(require(j, "shift_strength", ctx), ctx + ".shift_strength");
    d.seed = j.contains("seed") ? as_u64(j["seed"], ctx + ".seed") : 0;
    if (j.contains("confusion_blend")) d.confusion_blend = as_double(j["confusion_blend"], ctx + ".confusion_blend");
    return d;
}

}  // namespace detail

inline nlohmann::json world_to_json(const TrajectoryWorld& w) {
    using nlohmann::json;
    json domains = json::array();
    for (const auto& d : w.domains) domains.push_back(detail::domain_to_json(d));
    return json{
        {"n_viewpoints", w.n_viewpoints},
        {"place_len_m", w.place_len_m},
        {"max_action_m", w.max_action_m},
        {"confusion", w.confusion},
        {"featureless", w.featureless},
        {"descriptor",
         {{"noise_dims", w.descriptor.noise_dims},
          {"base_noise", w.descriptor.base_noise},
          {"shift_noise_gain", w.descriptor.shift_noise_gain}}},
        {"domains", domains},
    };
}

/// Parses the JSON world format.
///
/// Besides the canonical `featureless` array, a file may carry per-viewpoint
/// records `viewpoints: [{viewpoint, featureless, timestamp}]`. Duplicate
/// records of one viewpoint are resolved by keeping the latest timestamp.
/// An optional `place_of` array is checked against the block partition.
inline TrajectoryWorld world_from_json(const nlohmann::json& j) {
    using detail::as_double;
    using detail::as_u64;
    using detail::require;
    if (!j.is_object()) throw ParseError("world: top level must be an object");
    TrajectoryWorld w;
    w.n_viewpoints = as_u64(require(j, "n_viewpoints", "world"), "n_viewpoints");
    w.place_len_m = as_u64(require(j, "place_len_m", "world"), "place_len_m");
    if (w.n_viewpoints == 0) throw ValidationError("world: n_viewpoints must be positive");
    if (w.place_len_m == 0) throw ValidationError("world: place_len_m must be positive");
    if (j.contains("max_action_m")) w.max_action_m = as_u64(j["max_action_m"], "max_action_m");

    const auto& conf = require(j, "confusion", "world");
    if (!conf.is_array()) throw ParseError("field 'confusion': expected an array of rows");
    for (std::size_t i = 0; i < conf.size(); ++i) {
        const std::string field = "confusion[" + std::to_string(i) + "]";
        if (!conf[i].is_array()) throw ParseError("field '" + field + "': expected an array");
        std::vector<double> row;
        for (std::size_t k = 0; k < conf[i].size(); ++k)
            row.push_back(as_double(conf[i][k], field + "[" + std::to_string(k) + "]"));
        w.confusion.push_back(std::move(row));
    }

    if (j.contains("viewpoints")) {
        const auto& recs = j["viewpoints"];
        if (!recs.is_array()) throw ParseError("field 'viewpoints': expected an array");
        std::vector<std::optional<std::pair<double, double>>> best(w.n_viewpoints);  // (timestamp, featureless)
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const std::string ctx = "viewpoints[" + std::to_string(i) + "]";
            const auto v = as_u64(require(recs[i], "viewpoint", ctx), ctx + ".viewpoint");
            if (v >= w.n_viewpoints) throw ValidationError(ctx + ": viewpoint " + std::to_string(v) + " out of range");
            const double f = as_double(require(recs[i], "featureless", ctx), ctx + ".featureless");
            const double ts = recs[i].contains("timestamp") ? as_double(recs[i]["timestamp"], ctx + ".timestamp") : 0.0;
            if (!best[v] || ts >= best[v]->first) best[v] = std::make_pair(ts, f);
        }
        w.featureless.resize(w.n_viewpoints);
        for (std::size_t v = 0; v < w.n_viewpoints; ++v) {
            if (!best[v]) throw ValidationError("world: no record for viewpoint " + std::to_string(v));
            w.featureless[v] = best[v]->second;
        }
    } else {
        const auto& f = require(j, "featureless", "world");
        if (!f.is_array()) throw ParseError("field 'featureless': expected an array");
        for (std::size_t v = 0; v < f.size(); ++v)
            w.featureless.push_back(as_double(f[v], "featureless[" + std::to_string(v) + "]"));
    }

    if (j.contains("descriptor")) {
        const auto& d = j["descriptor"];
        if (d.contains("noise_dims")) w.descriptor.noise_dims = as_u64(d["noise_dims"], "descriptor.noise_dims");
        if (d.contains("base_noise")) w.descriptor.base_noise = as_double(d["base_noise"], "descriptor.base_noise");
        if (d.contains("shift_noise_gain"))
            w.descriptor.shift_noise_gain = as_double(d["shift_noise_gain"], "descriptor.shift_noise_gain");
    }
    if (j.contains("domains")) {
        const auto& ds = j["domains"];
        if (!ds.is_array()) throw ParseError("field 'domains': expected an array");
        for (std::size_t i = 0; i < ds.size(); ++i)
            w.domains.push_back(detail::domain_from_json(ds[i], "domains[" + std::to_string(i) + "]"));
    }

    if (j.contains("place_of")) {
        const auto& p = j["place_of"];
        if (!p.is_array() || p.size() != w.n_viewpoints)
            throw ValidationError("world: place_of must list one place per viewpoint");
        for (std::size_t v = 0; v < w.n_viewpoints; ++v) {
            const auto c = as_u64(p[v], "place_of[" + std::to_string(v) + "]");
            if (c != w.place_of(v))
                throw ValidationError("world: place_of[" + std::to_string(v) + "] = " + std::to_string(c) +
                                      " is inconsistent with contiguous blocks of " + std::to_string(w.place_len_m) +
                                      " m");
        }
    }
    w.validate();
    return w;
}

inline std::string world_to_string(const TrajectoryWorld& w) { return world_to_json(w).dump(1) + "\n"; }

inline void save_world(const TrajectoryWorld& w, const std::filesystem::path& path) {
    io::write_text(path, world_to_string(w));
}

inline TrajectoryWorld parse_world(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("world: malformed JSON at " + io::position_of(text, e.byte > 0 ? e.byte - 1 : 0) + ": " +
                         e.what());
    }
    try {
        return world_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("world: ") + e.what());
    }
}

inline TrajectoryWorld load_world(const std::filesystem::path& path) { return parse_world(io::read_text(path)); }

/// Externally computed PDVs keyed by (domain, viewpoint).
///
/// CSV columns: `viewpoint, domain, [timestamp,] <prefix>0 .. <prefix>{k-1}`
/// where prefix is `p_` for place PDVs and `a_` for action PDVs. Rows are
/// renormalized; duplicates keep the row with the latest timestamp.
class PdvTable {
public:
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return entries_.size(); }

    const Pdv& at(const std::string& domain, std::size_t viewpoint) const {
        auto it = entries_.find({domain, viewpoint});
        if (it == entries_.end())
            throw IndexError("no ingested PDV for domain '" + domain + "', viewpoint " + std::to_string(viewpoint));
        return it->second.second;
    }
    bool contains(const std::string& domain, std::size_t viewpoint) const {
        return entries_.count({domain, viewpoint}) > 0;
    }

    static PdvTable parse(const std::string& text, const std::string& prefix) {
        const io::CsvTable csv = io::parse_csv(text);
        const std::size_t vcol = csv.column("viewpoint");
        const std::size_t dcol = csv.column("domain");
        const bool has_ts = csv.has_column("timestamp");
        const std::size_t tcol = has_ts ? csv.column("timestamp") : 0;
        std::vector<std::size_t> cols;
        for (std::size_t k = 0;; ++k) {
            const std::string name = prefix + std::to_string(k);
            if (!csv.has_column(name)) break;
            cols.push_back(csv.column(name));
        }
        if (cols.empty()) throw ParseError("csv: no '" + prefix + "0' column");
        PdvTable t;
        t.width_ = cols.size();
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            const auto& row = csv.rows[r];
            const std::size_t line = csv.lines[r];
            const long long v = io::parse_int(row[vcol], line, "viewpoint");
            if (v < 0) throw ParseError("csv line " + std::to_string(line) + ": negative viewpoint");
            const double ts = has_ts ? io::parse_double(row[tcol], line, "timestamp") : 0.0;
            std::vector<double> p;
            for (std::size_t k = 0; k < cols.size(); ++k) p.push_back(io::parse_double(row[cols[k]], line, prefix + std::to_string(k)));
            Pdv pdv;
            try {
                pdv = Pdv::normalized(std::move(p));
            } catch (const Error& e) {
                throw ValidationError("csv line " + std::to_string(line) + ": " + e.what());
            }
            const Key key{row[dcol], static_cast<std::size_t>(v)};
            auto it = t.entries_.find(key);
            if (it == t.entries_.end() || ts >= it->second.first) t.entries_[key] = {ts, std::move(pdv)};
        }
        return t;
    }

    static PdvTable load(const std::filesystem::path& path, const std::string& prefix) {
        return parse(io::read_text(path), prefix);
    }

private:
    using Key = std::pair<std::string, std::size_t>;
    std::map<Key, std::pair<double, Pdv>> entries_;
    std::size_t width_ = 0;
};

}  // namespace avpr
