#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "netpred/design.hpp"

namespace netpred::config {

// Config file: JSON object with sections
//   plant.{A,B}  gain.K  delays.{r0,r1,eta_max,mu_max,h}
//   trigger.{omega,sigma,wait}  scenario  sim.{horizon,x0,seed}  certify.{alpha,method}
// Matrices are row-major lists of lists. A flat list is a column for B and
// a row for K; omega may be a scalar when m = 1.

struct Config {
    std::optional<LtiPlant> plant;
    std::optional<Gain> gain;
    DelayProfile delays{};
    std::optional<Matrix> omega;
    double sigma = 0.0;
    std::optional<double> wait; // defaults to delays.h
    std::string scenario = "sampled_predictor";
    SimConfig sim{};
    double alpha = 0.01;
    lmi::Family method = lmi::Family::Lemma1;

    [[nodiscard]] const LtiPlant& require_plant() const {
        if (!plant) throw DomainError("config: plant.A and plant.B are required");
        return *plant;
    }
    [[nodiscard]] const Gain& require_gain() const {
        if (!gain) throw DomainError("config: gain.K is required");
        return *gain;
    }
    [[nodiscard]] double wait_time() const { return wait.value_or(delays.h); }
    [[nodiscard]] Matrix omega_or_identity() const {
        const auto m = require_plant().m();
        return omega ? *omega : Matrix::Identity(m, m);
    }
    [[nodiscard]] TriggerParams trigger() const { return TriggerParams(omega_or_identity(), sigma, wait_time()); }

    /// Family parameters for the certify/design paths (h = waiting time for
    /// the continuous families).
    [[nodiscard]] design::FamilyParams family_params(lmi::Family f) const {
        design::FamilyParams fp{f, delays, alpha, sigma};
        if (f == lmi::Family::Lemma2 || f == lmi::Family::Prop3) fp.profile.h = wait_time();
        return fp;
    }
};

namespace detail {

using nlohmann::json;

inline Matrix matrix(const json& j, const std::string& key, bool flat_is_row) {
    if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) throw DomainError("config: " + key + " must be a non-empty list");
    if (!j.front().is_array()) {
        const auto v = j.get<std::vector<double>>();
        Matrix M(flat_is_row ? 1 : static_cast<Eigen::Index>(v.size()), flat_is_row ? static_cast<Eigen::Index>(v.size()) : 1);
        for (std::size_t i = 0; i < v.size(); ++i) M(static_cast<Eigen::Index>(i)) = v[i];
        return M;
    }
    const auto rows = j.get<std::vector<std::vector<double>>>();
    const std::size_t cols = rows.front().size();
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw DimensionError("config: " + key + " has ragged rows");
        for (std::size_t c = 0; c < cols; ++c) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return M;
}

template <class T>
void read(const json& sec, const char* key, T& out) {
    if (sec.contains(key)) out = sec.at(key).get<T>();
}

} // namespace detail

[[nodiscard]] inline Config from_json(const nlohmann::json& j) {
    using detail::matrix;
    using detail::read;
    Config c;
    if (!j.is_object()) throw DomainError("config: top level must be an object");
    if (j.contains("plant")) {
        const auto& p = j.at("plant");
        c.plant = LtiPlant(matrix(p.at("A"), "plant.A", false), matrix(p.at("B"), "plant.B", false));
    }
    if (j.contains("gain")) c.gain = Gain(matrix(j.at("gain").at("K"), "gain.K", true));
    if (j.contains("delays")) {
        const auto& d = j.at("delays");
        read(d, "r0", c.delays.r0);
        read(d, "r1", c.delays.r1);
        read(d, "eta_max", c.delays.eta_max);
        read(d, "mu_max", c.delays.mu_max);
        read(d, "h", c.delays.h);
        c.delays.validate();
    }
    if (j.contains("trigger")) {
        const auto& t = j.at("trigger");
        if (t.contains("omega")) c.omega = matrix(t.at("omega"), "trigger.omega", false);
        read(t, "sigma", c.sigma);
        if (t.contains("wait")) c.wait = t.at("wait").get<double>();
    }
    read(j, "scenario", c.scenario);
    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        read(s, "horizon", c.sim.horizon);
        read(s, "seed", c.sim.seed);
        read(s, "log_step", c.sim.log_step);
        if (s.contains("x0")) {
            const auto v = s.at("x0").get<std::vector<double>>();
            c.sim.x0 = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
    }
    if (j.contains("certify")) {
        const auto& s = j.at("certify");
        read(s, "alpha", c.alpha);
        if (s.contains("method")) c.method = lmi::family_from_string(s.at("method").get<std::string>());
    }
    if (c.plant) {
        if (c.gain) c.gain->check(*c.plant);
        if (c.sim.x0.size() == 0) c.sim.x0 = Vector::Zero(c.plant->n());
        if (c.omega && c.omega->rows() != c.plant->m()) throw DimensionError("config: trigger.omega must be m x m");
    }
    return c;
}

[[nodiscard]] inline Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw DomainError("config '" + path + "': " + e.what());
    }
    return from_json(j);
}

} // namespace netpred::config
