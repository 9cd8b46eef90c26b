#pragma once

#include "softer/config.hpp"
#include "softer/data.hpp"
#include "softer/error.hpp"
#include "softer/sampler.hpp"
#include "softer/tensor.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace softer {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace io_detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + path);
    }
    std::filesystem::rename(tmp, path);
}

template <class T>
void put(std::string& buf, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf.append(b, sizeof(T));
}

inline void put_doubles(std::string& buf, const double* p, std::size_t n) {
    buf.append(reinterpret_cast<const char*>(p), n * sizeof(double));
}

class Reader {
public:
    Reader(const std::string& bytes, std::string what) : b_(bytes), what_(std::move(what)) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string take(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> doubles(std::size_t n) {
        if (n > (b_.size() - pos_) / sizeof(double)) throw IoError(what_ + " is truncated");
        std::vector<double> v(n);
        if (n) std::memcpy(v.data(), b_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw IoError(what_ + " is truncated");
    }
    const std::string& b_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Parses a CSV cell; "nan"/"inf" are accepted so the caller can report them
// with coordinates.
inline double parse_cell(const std::string& raw, const std::string& where) {
    const std::string s = trim(raw);
    if (s.empty()) throw DataError("empty value at " + where);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw DataError("cannot parse '" + s + "' at " + where);
    }
    if (used != s.size()) throw DataError("cannot parse '" + s + "' at " + where);
    return v;
}

inline bool looks_numeric(const std::string& line) {
    const auto cells = split(line, ',');
    if (cells.empty()) return false;
    try {
        std::size_t used = 0;
        const std::string s = trim(cells.front());
        std::stod(s, &used);
        return used == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

inline std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim(line).empty()) out.push_back(line);
    }
    return out;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace io_detail

// ---- tensor files -----------------------------------------------------------

/// A batch of equally shaped tensors with an optional symmetry tag.
struct TensorBatch {
    Dims dims;
    Symmetry symmetry = Symmetry::none;
    std::vector<DenseTensor> records;
};

inline constexpr char kTensorMagic[] = "SOFT1";
inline constexpr std::uint8_t kLittleEndianTag = 1;

inline std::string encode_tensors(const TensorBatch& b) {
    std::string buf(kTensorMagic, 5);
    io_detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(b.dims.size()));
    for (auto p : b.dims) io_detail::put<std::uint64_t>(buf, p);
    io_detail::put<std::uint64_t>(buf, b.records.size());
    io_detail::put<std::uint8_t>(buf, static_cast<std::uint8_t>(b.symmetry));
    io_detail::put<std::uint8_t>(buf, kLittleEndianTag);
    for (const auto& r : b.records) {
        if (r.dims() != b.dims) throw ShapeError("record dims " + dims_to_string(r.dims()) + " differ from batch dims");
        io_detail::put_doubles(buf, r.data().data(), r.size());
    }
    return buf;
}

inline TensorBatch decode_tensors(const std::string& bytes, const std::string& what = "tensor file") {
    io_detail::Reader rd(bytes, what);
    if (rd.take(5) != std::string(kTensorMagic, 5)) throw IoError(what + " does not start with SOFT1");
    TensorBatch b;
    const auto K = rd.get<std::uint32_t>();
    if (K == 0 || K > 16) throw IoError(what + " declares " + std::to_string(K) + " modes");
    for (std::uint32_t k = 0; k < K; ++k) b.dims.push_back(static_cast<std::size_t>(rd.get<std::uint64_t>()));
    const auto n = rd.get<std::uint64_t>();
    const auto sym = rd.get<std::uint8_t>();
    if (sym > 2) throw IoError(what + " has an unknown symmetry tag");
    b.symmetry = static_cast<Symmetry>(sym);
    if (rd.get<std::uint8_t>() != kLittleEndianTag) throw IoError(what + " is not little-endian");
    const std::size_t P = dims_product(b.dims);
    if (rd.remaining() != n * P * sizeof(double))
        throw IoError(what + " payload has " + std::to_string(rd.remaining()) + " bytes, expected " +
                      std::to_string(n * P * sizeof(double)));
    for (std::uint64_t i = 0; i < n; ++i) b.records.emplace_back(b.dims, rd.doubles(P));
    return b;
}

inline std::string tensors_to_csv(const TensorBatch& b) {
    std::string out = "dims=";
    for (std::size_t k = 0; k < b.dims.size(); ++k) out += (k ? "x" : "") + std::to_string(b.dims[k]);
    out += '\n';
    for (const auto& r : b.records) {
        if (r.dims() != b.dims) throw ShapeError("record dims differ from batch dims");
        for (std::size_t e = 0; e < r.size(); ++e) out += (e ? "," : "") + io_detail::fmt(r[e]);
        out += '\n';
    }
    return out;
}

inline Dims parse_dims(const std::string& text) {
    Dims d;
    for (const auto& part : io_detail::split(text, 'x')) {
        const std::string t = io_detail::trim(part);
        if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
            throw DataError("bad dims specification '" + text + "'");
        d.push_back(std::stoul(t));
    }
    if (d.empty()) throw DataError("empty dims specification");
    return d;
}

inline TensorBatch tensors_from_csv(const std::string& text, const std::string& what = "tensor CSV") {
    const auto lines = io_detail::lines_of(text);
    if (lines.empty() || lines.front().rfind("dims=", 0) != 0)
        throw DataError(what + " must start with a dims=p1xp2... header");
    TensorBatch b;
    b.dims = parse_dims(lines.front().substr(5));
    const std::size_t P = dims_product(b.dims);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = io_detail::split(lines[i], ',');
        if (cells.size() != P)
            throw ShapeError(what + " row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                             " entries, dims need " + std::to_string(P));
        std::vector<double> v(P);
        for (std::size_t e = 0; e < P; ++e)
            v[e] = io_detail::parse_cell(cells[e], what + " row " + std::to_string(i) + ", entry " + std::to_string(e + 1));
        b.records.emplace_back(b.dims, std::move(v));
    }
    return b;
}

/// Reads either encoding, chosen by content.
inline TensorBatch load_tensors(const std::string& path) {
    const std::string bytes = io_detail::read_file(path);
    if (bytes.rfind(std::string(kTensorMagic, 5), 0) == 0) return decode_tensors(bytes, path);
    return tensors_from_csv(bytes, path);
}

inline void save_tensors(const TensorBatch& b, const std::string& path) {
    const bool csv = std::filesystem::path(path).extension() == ".csv";
    io_detail::write_file(path, csv ? tensors_to_csv(b) : encode_tensors(b));
}

// ---- outcome and covariate tables --------------------------------------------

/// Numeric CSV; a non-numeric first line is taken as a header.
inline Eigen::MatrixXd load_matrix_csv(const std::string& path) {
    auto lines = io_detail::lines_of(io_detail::read_file(path));
    if (!lines.empty() && !io_detail::looks_numeric(lines.front())) lines.erase(lines.begin());
    if (lines.empty()) return Eigen::MatrixXd(0, 0);
    const std::size_t cols = io_detail::split(lines.front(), ',').size();
    Eigen::MatrixXd M(static_cast<Eigen::Index>(lines.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto cells = io_detail::split(lines[i], ',');
        if (cells.size() != cols) throw ShapeError(path + " row " + std::to_string(i + 1) + " has the wrong column count");
        for (std::size_t c = 0; c < cols; ++c)
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = io_detail::parse_cell(
                cells[c], path + " row " + std::to_string(i + 1) + ", column " + std::to_string(c + 1));
    }
    return M;
}

inline void save_matrix_csv(const Eigen::MatrixXd& M, const std::string& path, const std::vector<std::string>& header = {}) {
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
    if (!header.empty()) out += '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) out += (c ? "," : "") + io_detail::fmt(M(i, c));
        out += '\n';
    }
    io_detail::write_file(path, out);
}

struct DatasetPaths {
    std::string outcomes;
    std::string covariates; // optional
    std::string tensors;
};

struct LoadOptions {
    Symmetry symmetry = Symmetry::none;
    double sym_tol = 0.0;
    bool standardize = false;
};

struct LoadedDataset {
    Dataset data;
    Standardization transform;
};

/// Reads, shape-checks and optionally standardizes a dataset. Symmetric
/// modes check and clean the predictors here so errors surface at load time.
inline LoadedDataset load_dataset(const DatasetPaths& paths, const LoadOptions& opt = {}) {
    LoadedDataset out;
    const Eigen::MatrixXd y = load_matrix_csv(paths.outcomes);
    if (y.cols() > 1) throw ShapeError(paths.outcomes + " must have a single column");
    out.data.y = y.size() ? Eigen::VectorXd(y.col(0)) : Eigen::VectorXd(0);
    out.data.predictors = load_tensors(paths.tensors).records;
    if (!paths.covariates.empty())
        out.data.covariates = load_matrix_csv(paths.covariates);
    else
        out.data.covariates = Eigen::MatrixXd(out.data.y.size(), 0);
    out.data.validate();
    prepare_symmetric_predictors(out.data, opt.symmetry, opt.sym_tol);
    if (opt.standardize) {
        out.transform = fit_standardization(out.data);
        out.transform.apply(out.data);
    }
    return out;
}

inline nlohmann::json to_json(const Standardization& s) {
    return {{"applied", s.applied}, {"y_mean", s.y_mean}, {"y_sd", s.y_sd},
            {"cov_mean", s.cov_mean}, {"cov_sd", s.cov_sd}, {"x_sd", s.x_sd}};
}

inline Standardization standardization_from_json(const nlohmann::json& j) {
    Standardization s;
    try {
        s.applied = j.at("applied").get<bool>();
        s.y_mean = j.at("y_mean").get<double>();
        s.y_sd = j.at("y_sd").get<double>();
        s.cov_mean = j.at("cov_mean").get<std::vector<double>>();
        s.cov_sd = j.at("cov_sd").get<std::vector<double>>();
        s.x_sd = j.at("x_sd").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad standardization record: ") + e.what());
    }
    return s;
}

// ---- chain files ------------------------------------------------------------

inline constexpr char kChainMagic[] = "SOFTCHN1";
inline constexpr std::uint32_t kChainVersion = 1;

/// Binary layout: magic, version, JSON header (metadata, RNG state, last
/// parameter state) then the draw arrays as raw doubles, closed by an
/// FNV-1a checksum over everything before it.
inline std::string encode_chain(const ChainSamples& c) {
    nlohmann::json h;
    h["config_hash"] = c.config_hash;
    h["seed"] = c.seed;
    h["chain"] = c.chain;
    h["settings"] = to_json(c.settings);
    h["dims"] = c.dims;
    h["p_cov"] = c.p_cov;
    h["D"] = c.D;
    h["completed"] = c.completed;
    h["rng_state"] = c.rng_state;
    h["state"] = c.state;
    h["counts"] = {c.mu.size(), c.tau2.size(), c.delta.size(), c.B.size(), c.sigma2.size(), c.zeta.size()};
    const std::string header = h.dump();
    std::string buf(kChainMagic, 8);
    io_detail::put<std::uint32_t>(buf, kChainVersion);
    io_detail::put<std::uint64_t>(buf, header.size());
    buf += header;
    for (const auto* v : {&c.mu, &c.tau2, &c.delta, &c.B, &c.sigma2, &c.zeta}) io_detail::put_doubles(buf, v->data(), v->size());
    io_detail::put<std::uint64_t>(buf, fnv1a(buf));
    return buf;
}

inline ChainSamples decode_chain(const std::string& bytes, const std::string& what = "chain file") {
    if (bytes.size() < 8 + 4 + 8 + 8 || bytes.compare(0, 8, kChainMagic) != 0)
        throw IoError(what + " is not a chain file");
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    const std::string body = bytes.substr(0, bytes.size() - 8);
    if (fnv1a(body) != stored) throw ChecksumError(what + " failed its checksum");
    io_detail::Reader rd(body, what);
    rd.take(8);
    const auto version = rd.get<std::uint32_t>();
    if (version != kChainVersion)
        throw IoError(what + " has format version " + std::to_string(version) + ", this build reads " +
                      std::to_string(kChainVersion));
    const auto hlen = rd.get<std::uint64_t>();
    ChainSamples c;
    try {
        const nlohmann::json h = nlohmann::json::parse(rd.take(hlen));
        c.config_hash = h.at("config_hash").get<std::string>();
        c.seed = h.at("seed").get<std::uint64_t>();
        c.chain = h.at("chain").get<std::size_t>();
        c.settings = sampler_from_json(h.at("settings"));
        c.dims = h.at("dims").get<Dims>();
        c.p_cov = h.at("p_cov").get<std::size_t>();
        c.D = h.at("D").get<int>();
        c.completed = h.at("completed").get<std::size_t>();
        c.rng_state = h.at("rng_state").get<std::string>();
        c.state = h.at("state");
        const auto counts = h.at("counts").get<std::vector<std::size_t>>();
        if (counts.size() != 6) throw IoError(what + " has a malformed header");
        std::size_t i = 0;
        for (auto* v : {&c.mu, &c.tau2, &c.delta, &c.B, &c.sigma2, &c.zeta}) *v = rd.doubles(counts[i++]);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(what + " header: " + e.what());
    }
    if (rd.remaining() != 0) throw IoError(what + " has trailing bytes");
    return c;
}

inline void save_chain(const ChainSamples& c, const std::string& path) { io_detail::write_file(path, encode_chain(c)); }
inline ChainSamples load_chain(const std::string& path) { return decode_chain(io_detail::read_file(path), path); }

// ---- run manifest -------------------------------------------------------------

inline constexpr char kSoftwareVersion[] = "0.1.0";

inline std::string file_checksum(const std::string& path) { return hex64(fnv1a(io_detail::read_file(path))); }

struct RunManifest {
    SofterConfig config;
    std::map<std::string, std::string> checksums; // input path -> FNV-1a hex
    std::vector<std::string> chains;               // chain file paths
    DatasetPaths inputs;
    Standardization transform;
    std::string version = kSoftwareVersion;
};

inline nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json j;
    j["version"] = m.version;
    j["config"] = to_json(m.config);
    j["seed"] = m.config.sampler.seed;
    j["checksums"] = m.checksums;
    j["chains"] = m.chains;
    j["inputs"] = {{"outcomes", m.inputs.outcomes}, {"covariates", m.inputs.covariates}, {"tensors", m.inputs.tensors}};
    j["standardization"] = to_json(m.transform);
    return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
        m.version = j.at("version").get<std::string>();
        m.config = config_from_json(j.at("config"));
        m.checksums = j.at("checksums").get<std::map<std::string, std::string>>();
        m.chains = j.at("chains").get<std::vector<std::string>>();
        const auto& in = j.at("inputs");
        m.inputs = {in.at("outcomes").get<std::string>(), in.value("covariates", std::string{}),
                    in.at("tensors").get<std::string>()};
        m.transform = standardization_from_json(j.at("standardization"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad manifest: ") + e.what());
    }
    return m;
}

inline void save_manifest(const RunManifest& m, const std::string& path) {
    io_detail::write_file(path, to_json(m).dump(2) + "\n");
}

inline RunManifest load_manifest(const std::string& path) {
    try {
        return manifest_from_json(nlohmann::json::parse(io_detail::read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(path + ": " + e.what());
    }
}

/// Recomputes every recorded input checksum; any drift is fatal.
inline void verify_checksums(const RunManifest& m) {
    for (const auto& [path, sum] : m.checksums) {
        if (!std::filesystem::exists(path)) throw IoError("input " + path + " recorded in the manifest is missing");
        const std::string now = file_checksum(path);
        if (now != sum) throw ChecksumError("input " + path + " changed since the fit (" + sum + " -> " + now + ")");
    }
}

} // namespace softer
