#include "softer/softer.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

using namespace softer;
namespace fs = std::filesystem;

namespace {

std::string abs_path(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(io_detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string entry_name(const Dims& dims, std::size_t pos) {
    const auto idx = DenseTensor(dims).multi_index(pos);
    std::string s = "B[";
    for (std::size_t k = 0; k < idx.size(); ++k) s += (k ? "," : "") + std::to_string(idx[k]);
    return s + "]";
}

// Matrices also get a p1 x p2 grid for heat maps; other shapes only the
// flattened tensor file.
void write_tensor_tables(const FitSummary& s, const std::string& dir) {
    const std::pair<const char*, const DenseTensor*> tables[] = {
        {"posterior_mean", &s.posterior_mean_B}, {"ci_lower", &s.ci_lower}, {"ci_upper", &s.ci_upper}};
    DenseTensor sel(s.posterior_mean_B.dims());
    for (std::size_t e = 0; e < sel.size(); ++e) sel[e] = s.selected[e];
    auto write = [&](const std::string& name, const DenseTensor& t) {
        save_tensors({t.dims(), Symmetry::none, {t}}, dir + "/" + name + ".csv");
        if (t.modes() == 2) {
            Eigen::MatrixXd M(t.extent(0), t.extent(1));
            for (std::size_t a = 0; a < t.extent(0); ++a)
                for (std::size_t b = 0; b < t.extent(1); ++b)
                    M(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = t[a * t.extent(1) + b];
            save_matrix_csv(M, dir + "/" + name + "_grid.csv");
        }
    };
    for (const auto& [name, t] : tables) write(name, *t);
    write("selected", sel);
}

Eigen::VectorXd predictions_original(const std::vector<ChainSamples>& chains, const Dataset& d,
                                     const Standardization& tr) {
    Eigen::VectorXd p = predict(chains, d);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = tr.to_original_outcome(p[i]);
    return p;
}

std::vector<ChainSamples> load_chains(const std::vector<std::string>& paths) {
    std::vector<ChainSamples> out;
    for (const auto& p : paths) out.push_back(load_chain(p));
    return out;
}

// Chains in parallel, each optionally continuing from a checkpoint.
std::vector<ChainSamples> run_pool(const GibbsSampler& smp, const std::vector<std::optional<ChainSamples>>& resume,
                                   std::size_t threads, const std::function<void(const ChainSamples&)>& on_checkpoint) {
    const std::size_t C = resume.size();
    std::vector<ChainSamples> out(C);
    std::vector<std::exception_ptr> errors(C);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c; (c = next++) < C;) {
            try {
                RunOptions opt;
                opt.on_checkpoint = on_checkpoint;
                if (resume[c]) opt.resume = &*resume[c];
                out[c] = run_chain(smp, c, opt);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads ? threads : thread_budget(), C));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---- calibrate ---------------------------------------------------------------------

struct CalibrateArgs {
    double v_star = 1.0, av_star = 0.1, alpha = 1.0, a_lambda = 3.0, a_tau_gamma = 3.0, a_sigma = 0.5;
    double b_lambda = 0.0;
    int D = 3;
    std::size_t K = 2;
};

int cmd_calibrate(const CalibrateArgs& a) {
    CalibrationInputs in;
    in.D = a.D;
    in.alpha = a.alpha;
    in.a_lambda = a.a_lambda;
    in.a_tau_gamma = a.a_tau_gamma;
    in.a_sigma = a.a_sigma;
    in.b_lambda = a.b_lambda > 0.0 ? a.b_lambda : std::pow(a.a_lambda, 1.0 / (2.0 * static_cast<double>(a.K)));
    const CalibrationTarget t{a.v_star, a.av_star};
    Hyperparameters h = a.K == 2 ? calibrate(t, in, 2) : calibrate_numeric(t, in, a.K);
    const double C = (a.alpha / a.D + 1.0) / (a.alpha + 1.0);
    nlohmann::json j = to_json(h);
    j["K"] = a.K;
    j["V_star"] = a.v_star;
    j["AV_star"] = a.av_star;
    j["C"] = C;
    j["b_tau_gamma_over_sqrt_C"] = h.b_tau_gamma / std::sqrt(C);
    j["b_sigma_over_sqrt_C"] = std::isinf(h.b_sigma) ? nlohmann::json("inf") : nlohmann::json(h.b_sigma / std::sqrt(C));
    j["prior_variance"] = prior_variance(h, a.K);
    j["additional_variance"] = additional_variance(h, a.K);
    std::cout << j.dump(2) << "\n";
    return 0;
}

// ---- simulate ----------------------------------------------------------------------

struct SimulateArgs {
    std::string scenario_file, truth = "squares", dims = "16x16", out = "sim", format = "bin";
    std::size_t rank = 3, n = 200, holdout = 1000;
    double tau2 = 0.5;
    bool symmetric_predictors = false;
    std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateArgs& a) {
    ScenarioSpec ss;
    if (!a.scenario_file.empty()) {
        try {
            ss = scenario_from_json(read_json(a.scenario_file));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(a.scenario_file + ": " + e.what());
        }
    } else {
        ss.name = "sim";
        ss.dims = parse_dims(a.dims);
        ss.n = a.n;
        ss.tau2 = a.tau2;
        ss.holdout = a.holdout;
        ss.symmetric_predictors = a.symmetric_predictors;
        ss.truth.kind = a.truth;
        ss.truth.rank = a.rank;
    }
    if (a.format != "bin" && a.format != "csv") throw ConfigError("format must be bin or csv");
    RngStream truth_rng(a.seed, sim_detail::stream_id("truth"));
    RngStream data_rng(a.seed, sim_detail::stream_id("data"));
    const Scenario sc{ss.name, ss.dims, ss.n, make_truth(ss.truth, ss.dims, truth_rng), ss.tau2, ss.holdout,
                      ss.symmetric_predictors};
    const SimulatedData d = gen_dataset(sc, data_rng);
    const Symmetry tag = sc.symmetric_predictors ? Symmetry::symmetric : Symmetry::none;
    save_tensors({sc.dims, Symmetry::none, {sc.truth}}, a.out + "/truth.csv");
    for (const auto& [name, part] : {std::pair<std::string, const Dataset*>{"train", &d.train}, {"holdout", &d.holdout}}) {
        save_matrix_csv(part->y, a.out + "/" + name + "_y.csv", {"y"});
        save_tensors({sc.dims, tag, part->predictors}, a.out + "/" + name + "_x." + a.format);
    }
    std::cout << "wrote " << a.out << "/{truth.csv,train_y.csv,train_x." << a.format << ",holdout_y.csv,holdout_x."
              << a.format << "}\n";
    return 0;
}

// ---- fit ---------------------------------------------------------------------------

struct FitArgs {
    std::string y, covariates, x, config_file, out = "softer_run", resume, symmetry = "none";
    int D = 3;
    bool hard = false, standardize = false;
    std::size_t iterations = 0, burn_in = 0, thin = 0, chains = 0, checkpoint_every = 0, threads = 0;
    std::uint64_t seed = 0;
    double sym_tol = 0.0, level = 0.95;
};

struct FitFlags {
    CLI::Option *D, *symmetry, *iterations, *burn_in, *thin, *chains, *seed, *checkpoint_every, *sym_tol;
};

SofterConfig build_config(const FitArgs& a, const FitFlags& f, const Dims& dims) {
    SofterConfig c;
    bool hyper_given = false;
    if (!a.config_file.empty()) {
        const nlohmann::json j = read_json(a.config_file);
        c = config_from_json(j);
        hyper_given = j.contains("hyper");
        if (c.dims != dims)
            throw ShapeError("config dims " + dims_to_string(c.dims) + " differ from the data " + dims_to_string(dims));
        if (f.D->count()) c.hyper = default_hyperparameters(dims.size(), a.D);
    } else {
        c = default_config(dims, a.D);
    }
    if (a.hard) c.hard_mode = true;
    if (c.hard_mode && !hyper_given) c.hyper = hard_hyperparameters(dims.size(), c.hyper.D);
    if (f.symmetry->count()) c.symmetry = symmetry_from_string(a.symmetry);
    if (f.sym_tol->count()) c.sym_tol = a.sym_tol;
    if (f.iterations->count()) c.sampler.iterations = a.iterations;
    if (f.burn_in->count()) c.sampler.burn_in = a.burn_in;
    else if (f.iterations->count() && a.config_file.empty()) c.sampler.burn_in = a.iterations / 2;
    if (f.thin->count()) c.sampler.thin = a.thin;
    if (f.chains->count()) c.sampler.chains = a.chains;
    if (f.seed->count()) c.sampler.seed = a.seed;
    if (f.checkpoint_every->count()) c.sampler.checkpoint_every = a.checkpoint_every;
    c.validate();
    return c;
}

void finish_fit(const RunManifest& m, const Dataset& data, const std::vector<ChainSamples>& chains,
                const std::string& dir, double level) {
    for (std::size_t c = 0; c < chains.size(); ++c) save_chain(chains[c], m.chains[c]);
    SummaryOptions so;
    so.level = level;
    so.symmetry = m.config.symmetry;
    const FitSummary s = summarize(chains, so);
    Dataset original = load_dataset(m.inputs, {m.config.symmetry, m.config.sym_tol, false}).data;
    const Eigen::VectorXd p = predictions_original(chains, data, m.transform);
    nlohmann::json j = to_json(s);
    j["config_hash"] = config_hash(m.config);
    j["in_sample_mse"] = predictive_mse(p, original.y);
    io_detail::write_file(dir + "/summary.json", j.dump(2) + "\n");
    write_tensor_tables(s, dir);
    std::cout << "fit complete: " << s.draws << " draws from " << s.chains << " chains, " << s.selected_count()
              << " entries selected, max PSRF "
              << (s.psrf.empty() ? std::string("n/a") : io_detail::fmt(s.max_psrf())) << ", in-sample MSE "
              << io_detail::fmt(j["in_sample_mse"].get<double>()) << "\n";
}

int run_fit(RunManifest m, const std::string& dir, std::size_t threads, double level, bool resuming) {
    const LoadedDataset ld =
        load_dataset(m.inputs, {m.config.symmetry, m.config.sym_tol, m.transform.applied});
    const GibbsSampler smp(m.config, ld.data);
    std::vector<std::optional<ChainSamples>> resume(m.config.sampler.chains);
    if (resuming)
        for (std::size_t c = 0; c < resume.size(); ++c)
            if (fs::exists(m.chains[c])) resume[c] = load_chain(m.chains[c]);
    auto checkpoint = [&m](const ChainSamples& c) { save_chain(c, m.chains[c.chain]); };
    const auto chains = run_pool(smp, resume, threads, checkpoint);
    finish_fit(m, ld.data, chains, dir, level);
    return 0;
}

int cmd_fit(const FitArgs& a, const FitFlags& f) {
    if (!a.resume.empty()) {
        const RunManifest m = load_manifest(a.resume);
        verify_checksums(m);
        if (m.version != kSoftwareVersion) throw IoError("manifest written by version " + m.version);
        return run_fit(m, fs::path(a.resume).parent_path().string(), a.threads, a.level, true);
    }
    if (a.y.empty() || a.x.empty()) throw CLI::RequiredError("fit needs --y and --x (or --resume)");
    const Symmetry sym = f.symmetry->count() ? symmetry_from_string(a.symmetry)
                         : a.config_file.empty() ? Symmetry::none
                                                 : config_from_json(read_json(a.config_file)).symmetry;
    RunManifest m;
    m.inputs = {abs_path(a.y), abs_path(a.covariates), abs_path(a.x)};
    const LoadedDataset probe = load_dataset(m.inputs, {sym, a.sym_tol, a.standardize});
    m.config = build_config(a, f, probe.data.dims());
    m.transform = probe.transform;
    for (const auto& p : {m.inputs.outcomes, m.inputs.covariates, m.inputs.tensors})
        if (!p.empty()) m.checksums[p] = file_checksum(p);
    const std::string dir = abs_path(a.out);
    for (std::size_t c = 0; c < m.config.sampler.chains; ++c) m.chains.push_back(dir + "/chain_" + std::to_string(c) + ".chain");
    save_manifest(m, dir + "/manifest.json");
    return run_fit(m, dir, a.threads, a.level, false);
}

// ---- summarize / diagnose / predict -------------------------------------------------

struct ChainSource {
    std::vector<std::string> chains;
    std::string run;
    std::string symmetry = "none";
};

std::pair<std::vector<ChainSamples>, Symmetry> resolve_chains(const ChainSource& src) {
    if (!src.run.empty()) {
        const RunManifest m = load_manifest(src.run + "/manifest.json");
        return {load_chains(m.chains), m.config.symmetry};
    }
    if (src.chains.empty()) throw CLI::RequiredError("give --chains or --run");
    return {load_chains(src.chains), symmetry_from_string(src.symmetry)};
}

int cmd_summarize(const ChainSource& src, double level, bool split, const std::string& out) {
    const auto [chains, sym] = resolve_chains(src);
    SummaryOptions so;
    so.level = level;
    so.split = split;
    so.symmetry = sym;
    const FitSummary s = summarize(chains, so);
    if (out.empty()) {
        std::cout << to_json(s).dump(2) << "\n";
    } else {
        io_detail::write_file(out + "/summary.json", to_json(s).dump(2) + "\n");
        write_tensor_tables(s, out);
        std::cout << "wrote " << out << "/summary.json and tensor tables\n";
    }
    return 0;
}

int cmd_diagnose(const ChainSource& src, bool split, std::size_t monitored, const std::string& trace_dir) {
    const auto [chains, sym] = resolve_chains(src);
    SummaryOptions so;
    so.split = split;
    so.symmetry = sym;
    so.monitored = monitored;
    so.min_draws = 1;
    const FitSummary s = summarize(chains, so);
    if (s.psrf.empty()) {
        std::cout << "PSRF unavailable: " << s.psrf_note << "\n";
    } else {
        std::printf("%-16s %10s\n", "parameter", "psrf");
        for (const auto& p : s.psrf) std::printf("%-16s %10.4f%s\n", p.name.c_str(), p.value, p.value >= 1.1 ? "  *" : "");
        std::printf("max %.4f over %zu quantities, %zu chains x %zu draws\n", s.max_psrf(), s.psrf.size(), chains.size(),
                    chains.front().draws());
    }
    if (!trace_dir.empty()) {
        const Dims& dims = chains.front().dims;
        const std::size_t P = dims_product(dims), pc = chains.front().p_cov;
        const auto entries = monitored_entries(dims, sym, monitored);
        std::string scal = "chain,draw,mu,tau2";
        for (std::size_t j = 0; j < pc; ++j) scal += ",delta[" + std::to_string(j + 1) + "]";
        std::string bt = "chain,draw";
        for (auto e : entries) bt += ",\"" + entry_name(dims, e) + "\"";
        scal += "\n";
        bt += "\n";
        for (const auto& c : chains)
            for (std::size_t t = 0; t < c.draws(); ++t) {
                const std::string head = std::to_string(c.chain) + "," + std::to_string(t + 1);
                scal += head + "," + io_detail::fmt(c.mu[t]) + "," + io_detail::fmt(c.tau2[t]);
                for (std::size_t j = 0; j < pc; ++j) scal += "," + io_detail::fmt(c.delta[t * pc + j]);
                scal += "\n";
                bt += head;
                for (auto e : entries) bt += "," + io_detail::fmt(c.B[t * P + e]);
                bt += "\n";
            }
        io_detail::write_file(trace_dir + "/trace_scalars.csv", scal);
        io_detail::write_file(trace_dir + "/trace_B.csv", bt);
        std::cout << "traces written to " << trace_dir << "\n";
    }
    return 0;
}

struct PredictArgs {
    std::string run, x, covariates, y, out;
};

int cmd_predict(const PredictArgs& a) {
    const RunManifest m = load_manifest(a.run + "/manifest.json");
    verify_checksums(m);
    const auto chains = load_chains(m.chains);
    Dataset d;
    d.predictors = load_tensors(a.x).records;
    const std::size_t n = d.predictors.size();
    d.y = a.y.empty() ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))
                      : Eigen::VectorXd(load_matrix_csv(a.y).col(0));
    d.covariates = a.covariates.empty() ? Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0) : load_matrix_csv(a.covariates);
    d.validate(m.config.dims);
    prepare_symmetric_predictors(d, m.config.symmetry, m.config.sym_tol);
    const Eigen::VectorXd y = d.y;
    m.transform.apply(d, false);
    const Eigen::VectorXd p = predictions_original(chains, d, m.transform);
    if (!a.out.empty()) save_matrix_csv(p, a.out, {"prediction"});
    nlohmann::json j{{"n", n}};
    if (!a.y.empty()) j["mse"] = predictive_mse(p, y);
    if (a.out.empty()) j["predictions"] = std::vector<double>(p.data(), p.data() + p.size());
    std::cout << j.dump(2) << "\n";
    return 0;
}

// ---- bench ---------------------------------------------------------------------------

int cmd_bench(const std::string& spec_path, const std::string& out, std::size_t threads, bool quiet) {
    BenchSpec spec = bench_from_json(read_json(spec_path));
    for (auto& s : spec.scenarios)
        if (s.truth.kind == "file" && fs::path(s.truth.path).is_relative())
            s.truth.path = (fs::path(spec_path).parent_path() / s.truth.path).string();
    auto log = [quiet](const std::string& line) {
        if (!quiet) std::cerr << line << "\n";
    };
    const BenchResult r = run_benchmark(spec, threads, log);
    io_detail::write_file(out, results_csv(r));
    fs::path timing = out;
    timing.replace_extension(".timing.csv");
    io_detail::write_file(timing.string(), timing_csv(r));
    std::cout << "wrote " << out << " and " << timing.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Soft tensor regression: calibration, Gibbs fitting, summaries and simulation benchmarks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kSoftwareVersion));

    CalibrateArgs ca;
    auto* cal = app.add_subcommand("calibrate", "solve for the prior scale hyperparameters");
    cal->add_option("--v-star", ca.v_star, "prior variance of each coefficient entry")->capture_default_str();
    cal->add_option("--av-star", ca.av_star, "share of that variance due to softening")->capture_default_str();
    cal->add_option("--d", ca.D, "rank D")->capture_default_str();
    cal->add_option("--alpha", ca.alpha, "Dirichlet concentration")->capture_default_str();
    cal->add_option("--k", ca.K, "number of tensor modes")->capture_default_str();
    cal->add_option("--a-lambda", ca.a_lambda)->capture_default_str();
    cal->add_option("--b-lambda", ca.b_lambda, "default a_lambda^(1/(2K))");
    cal->add_option("--a-tau-gamma", ca.a_tau_gamma)->capture_default_str();
    cal->add_option("--a-sigma", ca.a_sigma)->capture_default_str();

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset and its true coefficients");
    sim->add_option("--scenario", sa.scenario_file, "scenario JSON (same schema as a bench scenario)");
    sim->add_option("--truth", sa.truth, "diagonal|squares|lowrank|symmetric")->capture_default_str();
    sim->add_option("--rank", sa.rank)->capture_default_str();
    sim->add_option("--dims", sa.dims, "e.g. 16x16")->capture_default_str();
    sim->add_option("--n", sa.n)->capture_default_str();
    sim->add_option("--holdout", sa.holdout)->capture_default_str();
    sim->add_option("--tau2", sa.tau2, "noise variance")->capture_default_str();
    sim->add_flag("--symmetric-predictors", sa.symmetric_predictors);
    sim->add_option("--seed", sa.seed)->capture_default_str();
    sim->add_option("--format", sa.format, "bin|csv")->capture_default_str();
    sim->add_option("--out", sa.out)->capture_default_str();

    FitArgs fa;
    FitFlags ff{};
    auto* fitc = app.add_subcommand("fit", "run the Gibbs sampler and write manifest, chains and summary");
    fitc->add_option("--y", fa.y, "outcome CSV");
    fitc->add_option("--covariates", fa.covariates, "covariate CSV");
    fitc->add_option("--x", fa.x, "tensor file (binary or CSV)");
    fitc->add_option("--config", fa.config_file, "config JSON; flags override it");
    fitc->add_option("--out", fa.out, "run directory")->capture_default_str();
    fitc->add_option("--resume", fa.resume, "manifest of an interrupted run");
    ff.D = fitc->add_option("--d", fa.D, "rank D");
    ff.symmetry = fitc->add_option("--symmetry", fa.symmetry, "none|symmetric|semi-symmetric");
    ff.sym_tol = fitc->add_option("--sym-tol", fa.sym_tol, "tolerance for asymmetric input");
    fitc->add_flag("--hard", fa.hard, "hard PARAFAC baseline");
    fitc->add_flag("--standardize", fa.standardize, "center and scale inputs");
    ff.iterations = fitc->add_option("--iterations", fa.iterations);
    ff.burn_in = fitc->add_option("--burn-in", fa.burn_in);
    ff.thin = fitc->add_option("--thin", fa.thin);
    ff.chains = fitc->add_option("--chains", fa.chains);
    ff.seed = fitc->add_option("--seed", fa.seed);
    ff.checkpoint_every = fitc->add_option("--checkpoint-every", fa.checkpoint_every);
    fitc->add_option("--threads", fa.threads, "0 uses SOFTER_THREADS or all cores");
    fitc->add_option("--level", fa.level, "credible level of the summary")->capture_default_str();

    ChainSource src;
    double level = 0.95;
    bool split = false;
    std::string sum_out;
    auto* sumc = app.add_subcommand("summarize", "posterior means, credible intervals and selection");
    sumc->add_option("--chains", src.chains, "chain files");
    sumc->add_option("--run", src.run, "run directory (reads its manifest)");
    sumc->add_option("--symmetry", src.symmetry, "symmetry of the fit when using --chains");
    sumc->add_option("--level", level)->capture_default_str();
    sumc->add_flag("--split", split, "split-chain PSRF");
    sumc->add_option("--out", sum_out, "directory for summary.json and tensor CSVs");

    std::size_t monitored = 32;
    std::string trace_dir;
    auto* diag = app.add_subcommand("diagnose", "PSRF table and trace CSVs");
    diag->add_option("--chains", src.chains, "chain files");
    diag->add_option("--run", src.run, "run directory");
    diag->add_option("--symmetry", src.symmetry, "symmetry of the fit when using --chains");
    diag->add_flag("--split", split, "split-chain PSRF");
    diag->add_option("--monitored", monitored, "number of B entries to monitor")->capture_default_str();
    diag->add_option("--trace-dir", trace_dir, "write trace_scalars.csv and trace_B.csv here");

    PredictArgs pa;
    auto* pred = app.add_subcommand("predict", "posterior mean predictions for new units");
    pred->add_option("--run", pa.run, "run directory")->required();
    pred->add_option("--x", pa.x, "tensor file")->required();
    pred->add_option("--covariates", pa.covariates);
    pred->add_option("--y", pa.y, "outcomes, to report the MSE");
    pred->add_option("--out", pa.out, "prediction CSV");

    std::string spec_path, bench_out = "results.csv";
    std::size_t threads = 0;
    bool quiet = false;
    auto* bench = app.add_subcommand("bench", "simulation benchmark");
    bench->add_option("--spec", spec_path, "bench JSON")->required();
    bench->add_option("--out", bench_out, "results CSV; timing goes beside it as <stem>.timing.csv")->capture_default_str();
    bench->add_option("--threads", threads, "chains run in parallel per fit");
    bench->add_flag("--quiet", quiet);

    try {
        app.parse(argc, argv);
        if (*cal) return cmd_calibrate(ca);
        if (*sim) return cmd_simulate(sa);
        if (*fitc) return cmd_fit(fa, ff);
        if (*sumc) return cmd_summarize(src, level, split, sum_out);
        if (*diag) return cmd_diagnose(src, split, monitored, trace_dir);
        if (*pred) return cmd_predict(pa);
        if (*bench) return cmd_bench(spec_path, bench_out, threads, quiet);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        if (rc != 0) std::cerr << app.help();
        return rc == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "softer: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "softer: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
