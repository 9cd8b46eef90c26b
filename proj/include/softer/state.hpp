#pragma once

#include "softer/error.hpp"
#include "softer/layout.hpp"
#include "softer/tensor.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace softer {

/// One point in the latent space of the model. Indexing is [mode][component]
/// for the per-mode blocks. In symmetric variants the modes of a shared group
/// carry identical copies of γ, w and λ.
struct ParameterState {
    double mu = 0.0;
    Eigen::VectorXd delta;
    double tau2 = 1.0;
    std::vector<std::vector<Eigen::VectorXd>> gamma;
    std::vector<std::vector<DenseTensor>> beta;
    Eigen::VectorXd sigma2;
    Eigen::VectorXd zeta;
    std::vector<std::vector<Eigen::VectorXd>> w;
    std::vector<std::vector<double>> lambda;
    double tau_gamma = 1.0;
    std::vector<int> xi; // symmetric mode only

    std::size_t K() const { return beta.size(); }
    std::size_t D() const { return static_cast<std::size_t>(zeta.size()); }
    double sign(std::size_t d) const { return xi.empty() ? 1.0 : static_cast<double>(xi[d]); }

    bool operator==(const ParameterState& o) const {
        return mu == o.mu && delta == o.delta && tau2 == o.tau2 && gamma == o.gamma &&
               beta == o.beta && sigma2 == o.sigma2 && zeta == o.zeta && w == o.w &&
               lambda == o.lambda && tau_gamma == o.tau_gamma && xi == o.xi;
    }
};

/// Allocates a state of the right shape with every block at a neutral value.
inline ParameterState blank_state(const Layout& L, std::size_t p_cov) {
    ParameterState s;
    s.delta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p_cov));
    s.gamma.resize(L.K);
    s.beta.resize(L.K);
    s.w.resize(L.K);
    s.lambda.resize(L.K);
    for (std::size_t k = 0; k < L.K; ++k) {
        for (int d = 0; d < L.D; ++d) {
            s.gamma[k].push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.dims[k])));
            s.beta[k].emplace_back(L.dims);
            s.w[k].push_back(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(L.dims[k])));
            s.lambda[k].push_back(1.0);
        }
    }
    s.sigma2 = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(L.K));
    s.zeta = Eigen::VectorXd::Constant(L.D, 1.0 / L.D);
    if (L.symmetry == Symmetry::symmetric) s.xi.assign(static_cast<std::size_t>(L.D), 1);
    return s;
}

/// Checks positivity, the simplex constraint and shapes against a layout.
inline void validate_state(const ParameterState& s, const Layout& L, double simplex_tol = 1e-9) {
    if (s.beta.size() != L.K || s.gamma.size() != L.K)
        throw ShapeError("state has the wrong number of modes");
    if (static_cast<int>(s.zeta.size()) != L.D) throw ShapeError("zeta has the wrong length");
    if (!(s.tau2 > 0.0)) throw NumericError("tau2 must be positive");
    if (!(s.tau_gamma > 0.0)) throw NumericError("tau_gamma must be positive");
    double total = 0.0;
    for (Eigen::Index d = 0; d < s.zeta.size(); ++d) {
        if (!(s.zeta[d] >= 0.0)) throw NumericError("zeta must be non-negative");
        total += s.zeta[d];
    }
    if (std::abs(total - 1.0) > simplex_tol) throw NumericError("zeta must sum to one");
    for (std::size_t k = 0; k < L.K; ++k) {
        if (!L.hard && !(s.sigma2[static_cast<Eigen::Index>(k)] > 0.0)) throw NumericError("sigma2 must be positive");
        for (int d = 0; d < L.D; ++d) {
            if (s.beta[k][d].dims() != L.dims) throw ShapeError("beta dims differ from config dims");
            if (static_cast<std::size_t>(s.gamma[k][d].size()) != L.dims[k])
                throw ShapeError("gamma has the wrong length");
            if (!(s.lambda[k][d] > 0.0)) throw NumericError("lambda must be positive");
            if (!(s.w[k][d].minCoeff() > 0.0)) throw NumericError("w must be positive");
        }
    }
}

namespace detail {
inline nlohmann::json vec_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}
inline Eigen::VectorXd json_vec(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
} // namespace detail

inline nlohmann::json to_json(const ParameterState& s) {
    nlohmann::json j;
    j["mu"] = s.mu;
    j["delta"] = detail::vec_json(s.delta);
    j["tau2"] = s.tau2;
    j["tau_gamma"] = s.tau_gamma;
    j["sigma2"] = detail::vec_json(s.sigma2);
    j["zeta"] = detail::vec_json(s.zeta);
    j["xi"] = s.xi;
    j["lambda"] = s.lambda;
    nlohmann::json gamma = nlohmann::json::array(), w = nlohmann::json::array(),
                   beta = nlohmann::json::array();
    for (std::size_t k = 0; k < s.K(); ++k) {
        nlohmann::json gk = nlohmann::json::array(), wk = nlohmann::json::array(),
                       bk = nlohmann::json::array();
        for (std::size_t d = 0; d < s.beta[k].size(); ++d) {
            gk.push_back(detail::vec_json(s.gamma[k][d]));
            wk.push_back(detail::vec_json(s.w[k][d]));
            bk.push_back(s.beta[k][d].data());
        }
        gamma.push_back(gk);
        w.push_back(wk);
        beta.push_back(bk);
    }
    j["gamma"] = gamma;
    j["w"] = w;
    j["beta"] = beta;
    return j;
}

inline ParameterState state_from_json(const nlohmann::json& j, const Dims& dims) {
    ParameterState s;
    try {
        s.mu = j.at("mu").get<double>();
        s.delta = detail::json_vec(j.at("delta"));
        s.tau2 = j.at("tau2").get<double>();
        s.tau_gamma = j.at("tau_gamma").get<double>();
        s.sigma2 = detail::json_vec(j.at("sigma2"));
        s.zeta = detail::json_vec(j.at("zeta"));
        s.xi = j.at("xi").get<std::vector<int>>();
        s.lambda = j.at("lambda").get<std::vector<std::vector<double>>>();
        const auto& gamma = j.at("gamma");
        const auto& w = j.at("w");
        const auto& beta = j.at("beta");
        s.gamma.resize(gamma.size());
        s.w.resize(gamma.size());
        s.beta.resize(gamma.size());
        for (std::size_t k = 0; k < gamma.size(); ++k)
            for (std::size_t d = 0; d < gamma[k].size(); ++d) {
                s.gamma[k].push_back(detail::json_vec(gamma[k][d]));
                s.w[k].push_back(detail::json_vec(w[k][d]));
                s.beta[k].emplace_back(dims, beta[k][d].get<std::vector<double>>());
            }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed parameter state: ") + e.what());
    }
    return s;
}

} // namespace softer
