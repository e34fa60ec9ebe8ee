#pragma once
// Flat-JSON run configuration. Every key a command reads is recorded with its
// resolved value (defaults included), so the echoed manifest can be fed back
// as a config and reproduce the run. Keys nobody consumed are hard errors:
// a silently ignored typo in a schedule name would poison a whole study.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "crush/common.hpp"
#include "crush/mixture.hpp"
#include "crush/schedule.hpp"

namespace crush {

using Json = nlohmann::json;

inline Json load_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path.string());
    Json j = Json::parse(f);
    // accept an echoed manifest directly: unwrap its config block
    if (j.is_object() && j.contains("config")) {
        for (const auto& [k, v] : j.items())
            if (k != "config" && k != "metrics")
                throw std::runtime_error("config: manifest-style file with extra key " + k);
        j = j.at("config");
    }
    return j;
}

class ConfigView {
  public:
    explicit ConfigView(Json j) : j_(std::move(j)) {
        if (!j_.is_object()) throw std::runtime_error("config: top level must be a JSON object");
    }

    bool has(const std::string& k) const { return j_.contains(k); }

    double num(const std::string& k) { return fetch(k).get<double>(); }
    double num(const std::string& k, double fallback) {
        return has(k) ? num(k) : record(k, fallback);
    }

    long integer(const std::string& k) {
        const Json v = fetch(k);
        if (!v.is_number_integer()) throw std::runtime_error("config: " + k + " must be an integer");
        return v.get<long>();
    }
    long integer(const std::string& k, long fallback) {
        return has(k) ? integer(k) : record(k, fallback);
    }

    std::string str(const std::string& k) { return fetch(k).get<std::string>(); }
    std::string str(const std::string& k, const std::string& fallback) {
        return has(k) ? str(k) : record(k, fallback);
    }

    bool flag(const std::string& k, bool fallback) {
        if (!has(k)) return record(k, fallback);
        const Json v = fetch(k);
        if (!v.is_boolean()) throw std::runtime_error("config: " + k + " must be a boolean");
        return v.get<bool>();
    }

    Vec nums(const std::string& k) { return fetch(k).get<Vec>(); }
    Vec nums(const std::string& k, const Vec& fallback) {
        return has(k) ? nums(k) : record(k, fallback);
    }

    std::vector<int> ints(const std::string& k) { return fetch(k).get<std::vector<int>>(); }

    Json raw(const std::string& k) { return fetch(k); }

    // override after reading (seed flags and similar); keeps the echo accurate
    void put(const std::string& k, const Json& v) { resolved_[k] = v; }

    // every key present in the file must have been consumed
    void done() const {
        std::string extra;
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) extra += extra.empty() ? k : ", " + k;
        if (!extra.empty()) throw std::runtime_error("config: unknown key(s): " + extra);
    }

    const Json& resolved() const { return resolved_; }

  private:
    Json fetch(const std::string& k) {
        if (!j_.contains(k)) throw std::runtime_error("config: missing required key " + k);
        used_.insert(k);
        resolved_[k] = j_.at(k);
        return j_.at(k);
    }

    template <class T>
    T record(const std::string& k, T v) {
        resolved_[k] = v;
        return v;
    }

    Json j_;
    std::set<std::string> used_;
    Json resolved_ = Json::object();
};

inline Relation relation_from_name(const std::string& name, double gamma, double eta) {
    if (name == "vp") return Relation::vp();
    if (name == "subvp") return Relation::sub_vp();
    if (name == "subvp11") return Relation::sub_vp11();
    if (name == "subvp12") return Relation::sub_vp12();
    if (name == "ve") return Relation::ve();
    if (name == "custom") return Relation::custom(gamma, eta);
    throw std::runtime_error("config: unknown relation \"" + name +
                             "\" (want vp, subvp, subvp11, subvp12, ve, custom)");
}

// Keys: curve ("cos"|"exp"), s, relation, gamma, eta.
inline Schedule schedule_from_config(ConfigView& cfg) {
    SigmaCurve curve;
    const std::string cname = cfg.str("curve", "cos");
    if (cname == "cos") {
        curve.kind = CurveKind::Cos;
        curve.s = cfg.num("s", 0.006);
    } else if (cname == "exp") {
        curve.kind = CurveKind::Exp;
    } else {
        throw std::runtime_error("config: unknown curve \"" + cname + "\" (want cos or exp)");
    }
    const std::string rname = cfg.str("relation", "vp");
    double gamma = 0.0, eta = 0.0;
    if (rname == "custom") {
        gamma = cfg.num("gamma");
        eta = cfg.num("eta");
    }
    return make_schedule(curve, relation_from_name(rname, gamma, eta));
}

// "mixture": array of {weight, mean: [...], var: [...], label?}.
inline GaussianMixture mixture_from_json(const Json& spec) {
    if (!spec.is_array() || spec.empty())
        throw std::runtime_error("config: mixture must be a non-empty array of components");
    GaussianMixture gm;
    for (const auto& comp : spec) {
        for (const auto& [k, v] : comp.items())
            if (k != "weight" && k != "mean" && k != "var" && k != "label")
                throw std::runtime_error("config: unknown mixture component key " + k);
        MixtureComponent c;
        c.weight = comp.at("weight").get<double>();
        c.mean = comp.at("mean").get<Vec>();
        c.var = comp.at("var").get<Vec>();
        c.label = comp.value("label", 0);
        gm.comps.push_back(std::move(c));
    }
    gm.check();
    return gm;
}

}  // namespace crush
