#pragma once

#include "softer/calibration.hpp"
#include "softer/config.hpp"
#include "softer/data.hpp"
#include "softer/diagnostics.hpp"
#include "softer/error.hpp"
#include "softer/io.hpp"
#include "softer/random.hpp"
#include "softer/sampler.hpp"
#include "softer/tensor.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace softer {

// ---- truths -------------------------------------------------------------------

/// Axis-aligned constant block, 1-based inclusive rows r0..r1, cols c0..c1.
struct Rect {
    std::size_t r0 = 1, r1 = 1, c0 = 1, c1 = 1;
    double value = 1.0;
};

struct TruthSpec {
    std::string kind = "diagonal"; // diagonal | squares | lowrank | symmetric | file
    std::size_t rank = 1;
    std::vector<Rect> rects;       // squares; empty uses three default blocks
    std::string path;              // file
};

namespace sim_detail {

inline void require_square(const Dims& dims, const std::string& kind) {
    if (dims.size() != 2 || dims[0] != dims[1]) throw ShapeError(kind + " truth needs square matrix dims");
}

inline std::vector<Rect> default_rects(std::size_t p, std::size_t q) {
    // three separated blocks covering roughly a fifth of the matrix
    auto at = [](std::size_t n, double f) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(f * n))); };
    return {{at(p, 0.1), at(p, 0.35), at(q, 0.1), at(q, 0.35), 1.0},
            {at(p, 0.55), at(p, 0.85), at(q, 0.2), at(q, 0.4), 1.0},
            {at(p, 0.2), at(p, 0.4), at(q, 0.6), at(q, 0.9), 1.0}};
}

inline void scale_to_unit_max(DenseTensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::abs(v));
    if (m > 0.0)
        for (auto& v : t.values()) v /= m;
}

} // namespace sim_detail

/// Coefficient tensors for the simulation scenarios.
inline DenseTensor make_truth(const TruthSpec& spec, const Dims& dims, RngStream& rng) {
    if (spec.kind == "diagonal") {
        sim_detail::require_square(dims, spec.kind);
        DenseTensor t(dims);
        for (std::size_t j = 0; j < dims[0]; ++j) t[j * dims[0] + j] = 1.0;
        return t;
    }
    if (spec.kind == "squares") {
        if (dims.size() != 2) throw ShapeError("squares truth needs matrix dims");
        DenseTensor t(dims);
        const auto rects = spec.rects.empty() ? sim_detail::default_rects(dims[0], dims[1]) : spec.rects;
        for (const auto& r : rects) {
            if (r.r0 < 1 || r.r0 > r.r1 || r.r1 > dims[0] || r.c0 < 1 || r.c0 > r.c1 || r.c1 > dims[1])
                throw ConfigError("rectangle outside the coefficient matrix");
            for (std::size_t a = r.r0; a <= r.r1; ++a)
                for (std::size_t b = r.c0; b <= r.c1; ++b) t.set({a, b}, r.value);
        }
        return t;
    }
    if (spec.kind == "lowrank" || spec.kind == "symmetric") {
        if (dims.size() != 2) throw ShapeError(spec.kind + " truth needs matrix dims");
        if (spec.kind == "symmetric") sim_detail::require_square(dims, spec.kind);
        if (spec.rank < 1 || spec.rank > std::min(dims[0], dims[1]))
            throw ConfigError("rank " + std::to_string(spec.rank) + " exceeds the smaller dimension");
        DenseTensor t(dims);
        for (std::size_t d = 0; d < spec.rank; ++d) {
            std::vector<double> u(dims[0]), v(dims[1]);
            for (auto& x : u) x = rng.normal();
            if (spec.kind == "symmetric")
                v = u;
            else
                for (auto& x : v) x = rng.normal();
            for (std::size_t a = 0; a < dims[0]; ++a)
                for (std::size_t b = 0; b < dims[1]; ++b) t[a * dims[1] + b] += u[a] * v[b];
        }
        // self-loops carry no information in network predictors
        if (spec.kind == "symmetric")
            for (std::size_t a = 0; a < dims[0]; ++a) t[a * dims[0] + a] = 0.0;
        sim_detail::scale_to_unit_max(t);
        return t;
    }
    if (spec.kind == "file") {
        const TensorBatch b = load_tensors(spec.path);
        if (b.records.size() != 1) throw DataError(spec.path + " must hold exactly one coefficient tensor");
        if (b.dims != dims)
            throw ShapeError("truth file dims " + dims_to_string(b.dims) + " differ from " + dims_to_string(dims));
        return b.records.front();
    }
    throw ConfigError("unknown truth kind '" + spec.kind + "'");
}

// ---- datasets -------------------------------------------------------------------

struct Scenario {
    std::string name;
    Dims dims;
    std::size_t n = 200;
    DenseTensor truth;
    double tau2 = 0.5;
    std::size_t holdout = 1000;
    bool symmetric_predictors = false;
};

struct SimulatedData {
    Dataset train;
    Dataset holdout;
};

/// X entries i.i.d. N(0, 1) (symmetrized with a zero diagonal when asked),
/// y = ⟨X, B⁰⟩ + N(0, τ²), no scalar covariates. The holdout set continues
/// the same stream, so it is independent of the training set.
inline SimulatedData gen_dataset(const Scenario& sc, RngStream& rng) {
    if (sc.truth.dims() != sc.dims) throw ShapeError("scenario truth dims differ from predictor dims");
    if (!(sc.tau2 > 0.0)) throw ConfigError("residual variance must be positive");
    const std::size_t P = dims_product(sc.dims);
    auto make = [&](std::size_t n) {
        Dataset d;
        d.y.resize(static_cast<Eigen::Index>(n));
        d.covariates = Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0);
        for (std::size_t i = 0; i < n; ++i) {
            DenseTensor x(sc.dims);
            for (auto& v : x.values()) v = rng.normal();
            if (sc.symmetric_predictors) {
                const std::size_t R = sc.dims[0], inner = P / (R * R);
                for (std::size_t a = 0; a < R; ++a)
                    for (std::size_t b = 0; b <= a; ++b)
                        for (std::size_t l = 0; l < inner; ++l) {
                            const std::size_t s = (a * R + b) * inner + l;
                            x[(b * R + a) * inner + l] = a == b ? 0.0 : x[s];
                            if (a == b) x[s] = 0.0;
                        }
            }
            d.y[static_cast<Eigen::Index>(i)] = frobenius_inner(x, sc.truth) + rng.normal(0.0, std::sqrt(sc.tau2));
            d.predictors.push_back(std::move(x));
        }
        return d;
    };
    SimulatedData out;
    out.train = make(sc.n);
    out.holdout = make(sc.holdout);
    return out;
}

// ---- metrics ----------------------------------------------------------------------

struct GroupMetrics {
    std::size_t count = 0;
    double bias = std::numeric_limits<double>::quiet_NaN();
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double coverage = std::numeric_limits<double>::quiet_NaN();
};

struct EstimationMetrics {
    GroupMetrics zero;
    GroupMetrics nonzero;
};

/// Mean |bias|, rMSE of posterior means and CI coverage among truly-zero
/// (|B⁰| ≤ zero_tol) and truly-nonzero entries. Empty groups give NaN.
inline EstimationMetrics estimation_metrics(const DenseTensor& truth, const DenseTensor& mean, const DenseTensor& lower,
                                            const DenseTensor& upper, double zero_tol = 0.0) {
    require_same_dims(truth, mean, "estimation_metrics");
    require_same_dims(truth, lower, "estimation_metrics");
    require_same_dims(truth, upper, "estimation_metrics");
    double sb[2] = {0, 0}, ss[2] = {0, 0}, sc[2] = {0, 0};
    std::size_t n[2] = {0, 0};
    for (std::size_t e = 0; e < truth.size(); ++e) {
        const int g = std::abs(truth[e]) <= zero_tol ? 0 : 1;
        const double err = mean[e] - truth[e];
        sb[g] += std::abs(err);
        ss[g] += err * err;
        sc[g] += (lower[e] <= truth[e] && truth[e] <= upper[e]) ? 1.0 : 0.0;
        ++n[g];
    }
    EstimationMetrics m;
    GroupMetrics* out[2] = {&m.zero, &m.nonzero};
    for (int g = 0; g < 2; ++g) {
        out[g]->count = n[g];
        if (n[g] == 0) continue;
        const double c = static_cast<double>(n[g]);
        out[g]->bias = sb[g] / c;
        out[g]->rmse = std::sqrt(ss[g] / c);
        out[g]->coverage = sc[g] / c;
    }
    return m;
}

inline EstimationMetrics estimation_metrics(const DenseTensor& truth, const FitSummary& s, double zero_tol = 0.0) {
    return estimation_metrics(truth, s.posterior_mean_B, s.ci_lower, s.ci_upper, zero_tol);
}

struct SelectionMetrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double sensitivity = std::numeric_limits<double>::quiet_NaN();
    double specificity = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> fpr; // FP / (FP + TP); undefined when nothing is selected
    std::optional<double> fnr; // FN / (FN + TN); undefined when everything is selected
};

/// Confusion counts of the selection flags against the truth. FPR and FNR
/// are shares of the selected and non-selected sets respectively.
inline SelectionMetrics selection_metrics(const DenseTensor& truth, const std::vector<char>& selected,
                                          double zero_tol = 0.0) {
    if (selected.size() != truth.size()) throw ShapeError("selection flags and truth differ in size");
    SelectionMetrics m;
    for (std::size_t e = 0; e < truth.size(); ++e) {
        const bool important = std::abs(truth[e]) > zero_tol;
        if (selected[e])
            (important ? m.tp : m.fp)++;
        else
            (important ? m.fn : m.tn)++;
    }
    auto ratio = [](std::size_t a, std::size_t b) {
        return b == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(a) / static_cast<double>(b);
    };
    m.sensitivity = ratio(m.tp, m.tp + m.fn);
    m.specificity = ratio(m.tn, m.tn + m.fp);
    if (m.tp + m.fp > 0) m.fpr = ratio(m.fp, m.fp + m.tp);
    if (m.fn + m.tn > 0) m.fnr = ratio(m.fn, m.fn + m.tn);
    return m;
}

inline double predictive_mse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& y) {
    if (predicted.size() != y.size()) throw ShapeError("prediction and outcome lengths differ");
    if (y.size() == 0) throw DataError("no units to score");
    return (predicted - y).squaredNorm() / static_cast<double>(y.size());
}

// ---- benchmark ----------------------------------------------------------------------

struct ScenarioSpec {
    std::string name;
    Dims dims;
    std::size_t n = 200;
    TruthSpec truth;
    double tau2 = 0.5;
    std::size_t holdout = 1000;
    bool symmetric_predictors = false;
};

struct MethodSpec {
    std::string name;
    int D = 3;
    bool hard = false;
    Symmetry symmetry = Symmetry::none;
    SamplerSettings sampler;
};

struct BenchSpec {
    std::uint64_t master_seed = 1;
    std::size_t replicates = 1;
    double zero_tol = 0.0;
    double level = 0.95;
    std::vector<ScenarioSpec> scenarios;
    std::vector<MethodSpec> methods;
};

struct ResultRow {
    std::string scenario;
    std::string method;
    int D = 0;
    std::string replicate; // index, or "mean" for aggregate rows
    std::string metric;
    double value = 0.0;    // NaN is written as NA
};

struct TimingRow {
    std::string scenario;
    std::string method;
    int D = 0;
    std::size_t replicate = 0;
    double seconds = 0.0;
    std::string status;
};

struct BenchResult {
    std::vector<ResultRow> rows;
    std::vector<TimingRow> timing;

    /// Value of one per-replicate metric; NaN when absent.
    double value(const std::string& scenario, const std::string& method, std::size_t replicate,
                 const std::string& metric) const {
        const std::string r = std::to_string(replicate);
        for (const auto& row : rows)
            if (row.scenario == scenario && row.method == method && row.replicate == r && row.metric == metric)
                return row.value;
        return std::numeric_limits<double>::quiet_NaN();
    }
    double mean(const std::string& scenario, const std::string& method, const std::string& metric) const {
        for (const auto& row : rows)
            if (row.scenario == scenario && row.method == method && row.replicate == "mean" && row.metric == metric)
                return row.value;
        return std::numeric_limits<double>::quiet_NaN();
    }
};

namespace sim_detail {

inline std::uint64_t stream_id(const std::string& tag) { return fnv1a(tag) >> 1; }

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{
        "bias_zero",   "rmse_zero",   "coverage_zero", "bias_nonzero", "rmse_nonzero", "coverage_nonzero",
        "sensitivity", "specificity", "fpr",           "fnr",          "pred_mse",     "max_psrf",
        "selected",    "failed"};
    return names;
}

} // namespace sim_detail

/// Config used for one method cell.
inline SofterConfig method_config(const MethodSpec& m, const Dims& dims) {
    SofterConfig c = default_config(dims, m.D);
    if (m.hard) c.hyper = hard_hyperparameters(dims.size(), m.D);
    c.hard_mode = m.hard;
    c.symmetry = m.symmetry;
    c.sampler = m.sampler;
    c.validate();
    return c;
}

struct CellOutput {
    FitSummary summary;
    std::map<std::string, double> metrics;
};

/// Fits one method to one simulated dataset and scores it.
inline CellOutput run_cell(const MethodSpec& m, const Scenario& sc, const SimulatedData& data, std::uint64_t seed,
                           double zero_tol, double level, std::size_t threads = 0) {
    SofterConfig cfg = method_config(m, sc.dims);
    cfg.sampler.seed = seed;
    const GibbsSampler sampler(cfg, data.train);
    const auto chains = run_chains(sampler, threads);
    CellOutput out;
    SummaryOptions so;
    so.level = level;
    so.symmetry = cfg.symmetry;
    out.summary = summarize(chains, so);
    const auto est = estimation_metrics(sc.truth, out.summary, zero_tol);
    const auto sel = selection_metrics(sc.truth, out.summary.selected, zero_tol);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto& r = out.metrics;
    r["bias_zero"] = est.zero.bias;
    r["rmse_zero"] = est.zero.rmse;
    r["coverage_zero"] = est.zero.coverage;
    r["bias_nonzero"] = est.nonzero.bias;
    r["rmse_nonzero"] = est.nonzero.rmse;
    r["coverage_nonzero"] = est.nonzero.coverage;
    r["sensitivity"] = sel.sensitivity;
    r["specificity"] = sel.specificity;
    r["fpr"] = sel.fpr.value_or(nan);
    r["fnr"] = sel.fnr.value_or(nan);
    r["pred_mse"] = predictive_mse(predict(chains, data.holdout), data.holdout.y);
    r["max_psrf"] = out.summary.psrf.empty() ? nan : out.summary.max_psrf();
    r["selected"] = static_cast<double>(out.summary.selected_count());
    r["failed"] = 0.0;
    return out;
}

/// Runs every (scenario, replicate, method) cell. All methods of a
/// (scenario, replicate) pair see the same dataset. Aggregate rows average
/// each metric over the replicates where it is defined (for FPR, the ones
/// with at least one selected entry). Timing is reported separately so the
/// results table is a pure function of the spec.
inline BenchResult run_benchmark(const BenchSpec& spec, std::size_t threads = 0,
                                 const std::function<void(const std::string&)>& log = {}) {
    if (spec.replicates == 0) throw ConfigError("replicates must be positive");
    if (spec.scenarios.empty() || spec.methods.empty()) throw ConfigError("bench needs scenarios and methods");
    BenchResult res;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& ss : spec.scenarios) {
        std::map<std::string, std::map<std::string, std::vector<double>>> per_method;
        for (std::size_t rep = 0; rep < spec.replicates; ++rep) {
            const std::string tag = ss.name + "/" + std::to_string(rep);
            RngStream truth_rng(spec.master_seed, sim_detail::stream_id("truth/" + tag));
            RngStream data_rng(spec.master_seed, sim_detail::stream_id("data/" + tag));
            Scenario sc{ss.name, ss.dims, ss.n, make_truth(ss.truth, ss.dims, truth_rng), ss.tau2, ss.holdout,
                        ss.symmetric_predictors};
            const SimulatedData data = gen_dataset(sc, data_rng);
            for (const auto& m : spec.methods) {
                const std::uint64_t seed = spec.master_seed ^ sim_detail::stream_id("fit/" + tag + "/" + m.name);
                std::map<std::string, double> metrics;
                TimingRow t{ss.name, m.name, m.D, rep, 0.0, "ok"};
                const auto start = std::chrono::steady_clock::now();
                try {
                    metrics = run_cell(m, sc, data, seed, spec.zero_tol, spec.level, threads).metrics;
                } catch (const Error& e) {
                    for (const auto& name : sim_detail::metric_names()) metrics[name] = nan;
                    metrics["failed"] = 1.0;
                    t.status = e.what();
                }
                t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                if (log) log(ss.name + " " + m.name + " replicate " + std::to_string(rep) + ": " + t.status);
                res.timing.push_back(t);
                for (const auto& name : sim_detail::metric_names()) {
                    res.rows.push_back({ss.name, m.name, m.D, std::to_string(rep), name, metrics[name]});
                    per_method[m.name][name].push_back(metrics[name]);
                }
            }
        }
        for (const auto& m : spec.methods)
            for (const auto& name : sim_detail::metric_names()) {
                double sum = 0.0;
                std::size_t k = 0;
                for (double v : per_method[m.name][name])
                    if (!std::isnan(v)) {
                        sum += v;
                        ++k;
                    }
                res.rows.push_back({ss.name, m.name, m.D, "mean", name, k ? sum / static_cast<double>(k) : nan});
            }
    }
    return res;
}

inline std::string results_csv(const BenchResult& r) {
    std::string out = "scenario,method,D,replicate,metric,value\n";
    for (const auto& row : r.rows)
        out += row.scenario + "," + row.method + "," + std::to_string(row.D) + "," + row.replicate + "," + row.metric +
               "," + (std::isnan(row.value) ? std::string("NA") : io_detail::fmt(row.value)) + "\n";
    return out;
}

inline std::string timing_csv(const BenchResult& r) {
    std::string out = "scenario,method,D,replicate,seconds,status\n";
    for (const auto& t : r.timing) {
        std::string status = t.status;
        std::replace(status.begin(), status.end(), ',', ';');
        out += t.scenario + "," + t.method + "," + std::to_string(t.D) + "," + std::to_string(t.replicate) + "," +
               io_detail::fmt(t.seconds) + "," + status + "\n";
    }
    return out;
}

// ---- bench.json ---------------------------------------------------------------------

// Throws nlohmann exceptions; callers wrap them.
inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
    ScenarioSpec sc;
    sc.name = j.at("name").get<std::string>();
    sc.dims = j.at("dims").get<Dims>();
    sc.n = j.value("n", std::size_t{200});
    sc.tau2 = j.value("tau2", 0.5);
    sc.holdout = j.value("holdout", std::size_t{1000});
    sc.symmetric_predictors = j.value("symmetric_predictors", false);
    const auto& t = j.at("truth");
    sc.truth.kind = t.at("kind").get<std::string>();
    sc.truth.rank = t.value("rank", std::size_t{1});
    sc.truth.path = t.value("path", std::string{});
    if (t.contains("rects"))
        for (const auto& r : t["rects"])
            sc.truth.rects.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(),
                                      r.at(2).get<std::size_t>(), r.at(3).get<std::size_t>(),
                                      r.size() > 4 ? r.at(4).get<double>() : 1.0});
    return sc;
}

inline BenchSpec bench_from_json(const nlohmann::json& j) {
    BenchSpec b;
    try {
        b.master_seed = j.value("master_seed", std::uint64_t{1});
        b.replicates = j.value("replicates", std::size_t{1});
        b.zero_tol = j.value("zero_tol", 0.0);
        b.level = j.value("level", 0.95);
        for (const auto& s : j.at("scenarios")) {
            b.scenarios.push_back(scenario_from_json(s));
        }
        for (const auto& m : j.at("methods")) {
            MethodSpec ms;
            ms.name = m.at("name").get<std::string>();
            ms.D = m.value("D", 3);
            ms.hard = m.value("hard", false);
            ms.symmetry = symmetry_from_string(m.value("symmetry", std::string("none")));
            if (m.contains("sampler")) ms.sampler = sampler_from_json(m["sampler"]);
            b.methods.push_back(ms);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad bench spec: ") + e.what());
    }
    for (const auto& m : b.methods)
        if (m.name.find(',') != std::string::npos) throw ConfigError("method names cannot contain commas");
    for (const auto& s : b.scenarios)
        if (s.name.find(',') != std::string::npos) throw ConfigError("scenario names cannot contain commas");
    return b;
}

} // namespace softer
