#pragma once

// End-to-end orchestration: exact states -> Renyi datasets (exact or from
// simulated shadow experiments) -> noise injection -> estimates -> reports.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "sac/baselines.hpp"
#include "sac/error.hpp"
#include "sac/estimator.hpp"
#include "sac/quantum_core.hpp"
#include "sac/random.hpp"
#include "sac/shadows.hpp"

namespace sac::pipeline {

using nlohmann::json;

inline constexpr const char* kWorkersEnv = "SAC_WORKERS";
inline constexpr const char* kSchemaVersion = "1";

enum class Scenario { tfim_ground, xy_quench, random_state };
enum class Source { exact, shadows };
enum class Method { sac, chebyshev, lsq };
enum class GroupCovariance { sample, jackknife };

inline std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::tfim_ground: return "tfim_ground";
        case Scenario::xy_quench: return "xy_quench";
        default: return "random_state";
    }
}
inline std::string to_string(Source s) { return s == Source::exact ? "exact" : "shadows"; }
inline std::string to_string(Method m) {
    switch (m) {
        case Method::sac: return "sac";
        case Method::chebyshev: return "chebyshev";
        default: return "lsq";
    }
}
inline std::string to_string(GroupCovariance g) { return g == GroupCovariance::sample ? "sample" : "jackknife"; }

namespace detail {

template <class E, std::size_t N>
E parse_enum(const std::string& text, const std::array<E, N>& all, const char* what) {
    for (E e : all) {
        if (to_string(e) == text) return e;
    }
    throw InvalidArgument(std::string("unknown ") + what + " '" + text + "'");
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& s) {
    return detail::parse_enum(s, std::array{Scenario::tfim_ground, Scenario::xy_quench, Scenario::random_state}, "scenario");
}
inline Source parse_source(const std::string& s) {
    return detail::parse_enum(s, std::array{Source::exact, Source::shadows}, "source");
}
inline Method parse_method(const std::string& s) {
    return detail::parse_enum(s, std::array{Method::sac, Method::chebyshev, Method::lsq}, "method");
}
inline GroupCovariance parse_group_covariance(const std::string& s) {
    return detail::parse_enum(s, std::array{GroupCovariance::sample, GroupCovariance::jackknife}, "group covariance");
}

struct ShadowParams {
    int n_unitaries = 500;
    int n_shots = 150;
    int n_batches = 12;
};

struct GroupingParams {
    int n_experiments = 100;
    int group_size = 10;
    GroupCovariance covariance = GroupCovariance::sample;

    int n_groups() const { return group_size > 0 ? n_experiments / group_size : 0; }
};

struct NoiseParams {
    double gaussian_fraction = 0.0;
    int n_realizations = 200;
};

struct BenchmarkConfig {
    Scenario scenario = Scenario::tfim_ground;
    int n = 12;
    std::vector<int> subsystem_sizes;      // empty: n / 2
    std::optional<double> coupling;        // tfim J (default 1), xy J in 1/s (default 420)
    std::optional<double> field;           // tfim h (default 0.5), xy B in 1/s (default 0)
    double exponent = 1.2;
    std::vector<double> times_ms{0.0};
    int dim = 8;                           // random_state only
    int rank = 4;
    double depolarizing = 0.0;
    int k_max = 6;
    ConformalParams conformal = kDefaultConformal;
    std::optional<double> chi2_0;
    int lsq_degree = 2;
    Source source = Source::exact;
    ShadowParams shadow;
    GroupingParams grouping;
    NoiseParams noise;
    std::uint64_t seed = 1;
    int workers = 0;                       // 0: environment or hardware default

    double coupling_value() const { return coupling.value_or(scenario == Scenario::xy_quench ? 420.0 : 1.0); }
    double field_value() const { return field.value_or(scenario == Scenario::xy_quench ? 0.0 : 0.5); }

    std::vector<int> subsystems() const {
        if (scenario == Scenario::random_state) return {0};
        return subsystem_sizes.empty() ? std::vector<int>{n / 2} : subsystem_sizes;
    }

    std::vector<double> times() const {
        return scenario == Scenario::xy_quench ? times_ms : std::vector<double>{0.0};
    }

    void validate() const {
        using sac::detail::require;
        require(k_max >= 3, "config: k_max must be >= 3");
        conformal.validate();
        if (chi2_0) require(*chi2_0 > 0.0, "config: chi2_0 must be positive");
        require(lsq_degree >= 1, "config: lsq_degree must be >= 1");
        require(depolarizing >= 0.0 && depolarizing <= 1.0, "config: depolarizing must lie in [0, 1]");
        require(noise.gaussian_fraction >= 0.0, "config: noise fraction must be >= 0");
        require(noise.n_realizations >= 1, "config: n_realizations must be >= 1");
        require(workers >= 0, "config: workers must be >= 0");
        if (scenario == Scenario::random_state) {
            require(dim >= 2 && rank >= 1 && rank <= dim, "config: random_state needs dim >= 2 and 1 <= rank <= dim");
        } else {
            require(n >= 2, "config: n must be >= 2");
            if (scenario == Scenario::tfim_ground) require(n <= 14, "config: tfim_ground supports n <= 14");
            if (scenario == Scenario::xy_quench) require(n <= 12, "config: xy_quench supports n <= 12");
            for (int L : subsystems()) require(L >= 1 && L < n, "config: subsystem size must lie in [1, n)");
        }
        for (double t : times()) require(t >= 0.0, "config: times must be >= 0");
        if (source == Source::shadows) {
            require(shadow.n_unitaries >= 1 && shadow.n_shots >= 1, "config: shadow sizes must be positive");
            require(shadow.n_batches >= k_max + 1, "config: n_batches must be >= k_max + 1");
            require(shadow.n_batches <= shadow.n_unitaries, "config: n_batches exceeds n_unitaries");
            require(grouping.group_size >= 1 && grouping.n_groups() >= 1,
                    "config: grouping needs group_size >= 1 and group_size <= n_experiments");
            if (scenario == Scenario::random_state) {
                require((dim & (dim - 1)) == 0 && dim <= (1 << kMaxShadowQubits),
                        "config: shadows need a power-of-two dim <= 64");
            } else {
                for (int L : subsystems()) require(L <= kMaxShadowQubits, "config: shadows support subsystems up to 6 qubits");
            }
        }
    }
};

// --- JSON -------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw InvalidArgument(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
            throw InvalidArgument(where + ": unknown key '" + key + "'");
        }
    }
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& out) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    T v{};
    read(j, key, v);
    out = v;
}

}  // namespace detail

inline json to_json(const BenchmarkConfig& c, bool include_workers = true) {
    json j;
    j["scenario"] = to_string(c.scenario);
    j["n"] = c.n;
    j["subsystem_sizes"] = c.subsystem_sizes;
    j["coupling"] = c.coupling ? json(*c.coupling) : json(nullptr);
    j["field"] = c.field ? json(*c.field) : json(nullptr);
    j["exponent"] = c.exponent;
    j["times_ms"] = c.times_ms;
    j["dim"] = c.dim;
    j["rank"] = c.rank;
    j["depolarizing"] = c.depolarizing;
    j["k_max"] = c.k_max;
    j["conformal"] = {{"epsilon", c.conformal.epsilon}, {"eta", c.conformal.eta}};
    j["chi2_0"] = c.chi2_0 ? json(*c.chi2_0) : json(nullptr);
    j["lsq_degree"] = c.lsq_degree;
    j["source"] = to_string(c.source);
    j["shadow"] = {{"n_unitaries", c.shadow.n_unitaries}, {"n_shots", c.shadow.n_shots}, {"n_batches", c.shadow.n_batches}};
    j["grouping"] = {{"n_experiments", c.grouping.n_experiments},
                     {"group_size", c.grouping.group_size},
                     {"covariance", to_string(c.grouping.covariance)}};
    j["noise"] = {{"gaussian_fraction", c.noise.gaussian_fraction}, {"n_realizations", c.noise.n_realizations}};
    j["seed"] = c.seed;
    if (include_workers) j["workers"] = c.workers;
    return j;
}

/// Overlays the keys present in j onto base; unknown keys are rejected.
inline BenchmarkConfig config_from_json(const json& j, BenchmarkConfig c = {}) {
    detail::check_keys(j,
                       {"scenario", "n", "subsystem_sizes", "coupling", "field", "exponent", "times_ms", "dim", "rank",
                        "depolarizing", "k_max", "conformal", "chi2_0", "lsq_degree", "source", "shadow", "grouping",
                        "noise", "seed", "workers"},
                       "config");
    if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario").get<std::string>());
    if (j.contains("source")) c.source = parse_source(j.at("source").get<std::string>());
    detail::read(j, "n", c.n);
    detail::read(j, "subsystem_sizes", c.subsystem_sizes);
    detail::read(j, "coupling", c.coupling);
    detail::read(j, "field", c.field);
    detail::read(j, "exponent", c.exponent);
    detail::read(j, "times_ms", c.times_ms);
    detail::read(j, "dim", c.dim);
    detail::read(j, "rank", c.rank);
    detail::read(j, "depolarizing", c.depolarizing);
    detail::read(j, "k_max", c.k_max);
    detail::read(j, "chi2_0", c.chi2_0);
    detail::read(j, "lsq_degree", c.lsq_degree);
    detail::read(j, "seed", c.seed);
    detail::read(j, "workers", c.workers);
    if (j.contains("conformal")) {
        const json& s = j.at("conformal");
        detail::check_keys(s, {"epsilon", "eta"}, "config.conformal");
        detail::read(s, "epsilon", c.conformal.epsilon);
        detail::read(s, "eta", c.conformal.eta);
    }
    if (j.contains("shadow")) {
        const json& s = j.at("shadow");
        detail::check_keys(s, {"n_unitaries", "n_shots", "n_batches"}, "config.shadow");
        detail::read(s, "n_unitaries", c.shadow.n_unitaries);
        detail::read(s, "n_shots", c.shadow.n_shots);
        detail::read(s, "n_batches", c.shadow.n_batches);
    }
    if (j.contains("grouping")) {
        const json& s = j.at("grouping");
        detail::check_keys(s, {"n_experiments", "group_size", "covariance"}, "config.grouping");
        detail::read(s, "n_experiments", c.grouping.n_experiments);
        detail::read(s, "group_size", c.grouping.group_size);
        if (s.contains("covariance")) c.grouping.covariance = parse_group_covariance(s.at("covariance").get<std::string>());
    }
    if (j.contains("noise")) {
        const json& s = j.at("noise");
        detail::check_keys(s, {"gaussian_fraction", "n_realizations"}, "config.noise");
        detail::read(s, "gaussian_fraction", c.noise.gaussian_fraction);
        detail::read(s, "n_realizations", c.noise.n_realizations);
    }
    return c;
}

inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Hash of everything that influences results (the worker count does not).
inline std::string config_hash(const BenchmarkConfig& c) { return fnv1a_hex(to_json(c, false).dump()); }

// --- datasets ---------------------------------------------------------------

struct DatasetMetadata {
    std::uint64_t seed = 0;
    std::string scenario;
    std::string config_hash;
    json extra = json::object();  // subsystem, time, exact references, flags, ...
};

struct DatasetDocument {
    RenyiDataset data;
    DatasetMetadata meta;
};

inline json to_json(const DatasetDocument& d) {
    json j;
    j["orders"] = d.data.orders;
    j["values_bits"] = d.data.values;
    if (d.data.covariance) {
        const auto& c = *d.data.covariance;
        std::vector<double> flat;
        for (Eigen::Index r = 0; r < c.rows(); ++r) {
            for (Eigen::Index col = 0; col < c.cols(); ++col) flat.push_back(c(r, col));
        }
        j["covariance"] = flat;
    }
    json meta = d.meta.extra;
    meta["seed"] = d.meta.seed;
    meta["scenario"] = d.meta.scenario;
    meta["config_hash"] = d.meta.config_hash;
    j["metadata"] = meta;
    return j;
}

inline DatasetDocument dataset_from_json(const json& j) {
    detail::check_keys(j, {"orders", "values_bits", "covariance", "metadata"}, "dataset");
    if (!j.contains("orders") || !j.contains("values_bits")) throw InvalidArgument("dataset: orders and values_bits are required");
    DatasetDocument d;
    try {
        d.data.orders = j.at("orders").get<std::vector<int>>();
        d.data.values = j.at("values_bits").get<std::vector<double>>();
        if (j.contains("covariance") && !j.at("covariance").is_null()) {
            const auto flat = j.at("covariance").get<std::vector<double>>();
            const auto n = static_cast<Eigen::Index>(d.data.orders.size());
            if (static_cast<Eigen::Index>(flat.size()) != n * n) {
                throw InvalidArgument("dataset: covariance must hold orders^2 entries (row-major)");
            }
            Eigen::MatrixXd c(n, n);
            for (Eigen::Index r = 0; r < n; ++r) {
                for (Eigen::Index col = 0; col < n; ++col) c(r, col) = flat[r * n + col];
            }
            d.data.covariance = c;
        }
        if (j.contains("metadata")) {
            json meta = j.at("metadata");
            if (meta.contains("seed")) d.meta.seed = meta.at("seed").get<std::uint64_t>();
            if (meta.contains("scenario")) d.meta.scenario = meta.at("scenario").get<std::string>();
            if (meta.contains("config_hash")) d.meta.config_hash = meta.at("config_hash").get<std::string>();
            meta.erase("seed");
            meta.erase("scenario");
            meta.erase("config_hash");
            d.meta.extra = meta;
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("dataset: ") + e.what());
    }
    d.data.validate();
    return d;
}

/// Accepts a single dataset document or an array of them.
inline std::vector<DatasetDocument> datasets_from_json(const json& j) {
    std::vector<DatasetDocument> out;
    if (j.is_array()) {
        for (const auto& item : j) out.push_back(dataset_from_json(item));
    } else {
        out.push_back(dataset_from_json(j));
    }
    sac::detail::require(!out.empty(), "dataset file holds no datasets");
    return out;
}

// --- exact references -------------------------------------------------------

struct Case {
    int subsystem = 0;   // 0 for random_state
    double t_ms = 0.0;
};

struct ExactReference {
    double von_neumann = 0.0;
    std::vector<int> orders;
    std::vector<double> renyi;
    bool ground_degenerate = false;
};

inline std::vector<Case> cases(const BenchmarkConfig& c) {
    std::vector<Case> out;
    for (int L : c.subsystems()) {
        for (double t : c.times()) out.push_back({L, t});
    }
    return out;
}

/// Exact reduced state for one case, recomputed on every call.
inline DensityMatrix case_state(const BenchmarkConfig& c, const Case& cs, bool* degenerate = nullptr) {
    std::optional<DensityMatrix> rho;
    switch (c.scenario) {
        case Scenario::random_state:
            rho = random_density_matrix(c.dim, c.rank, substream_seed(c.seed, 0x5eedULL));
            break;
        case Scenario::tfim_ground: {
            const auto gs = tfim_ground_state(c.n, c.coupling_value(), c.field_value());
            if (degenerate) *degenerate = gs.degenerate;
            const auto sites = first_sites(cs.subsystem);
            rho = partial_trace(gs.state, sites);
            break;
        }
        case Scenario::xy_quench: {
            const auto psi = xy_quench(c.n, c.coupling_value(), c.field_value(), c.exponent, cs.t_ms * 1e-3);
            const auto sites = first_sites(cs.subsystem);
            rho = partial_trace(psi, sites);
            break;
        }
    }
    if (c.depolarizing > 0.0) return depolarize(*rho, c.depolarizing);
    return *rho;
}

inline ExactReference exact_reference(const DensityMatrix& rho, int k_max) {
    ExactReference r;
    r.von_neumann = von_neumann_entropy(rho);
    for (int k = 2; k <= k_max; ++k) {
        r.orders.push_back(k);
        r.renyi.push_back(renyi_entropy(rho, k));
    }
    return r;
}

inline RenyiDataset exact_dataset(const ExactReference& r) { return {r.orders, r.renyi, std::nullopt}; }

// --- workers ----------------------------------------------------------------

inline int default_workers() {
    if (const char* env = std::getenv(kWorkersEnv)) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<int>(v);
        throw InvalidArgument(std::string(kWorkersEnv) + " must be an integer in [1, 1024]");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline int resolve_workers(const BenchmarkConfig& c) { return c.workers > 0 ? c.workers : default_workers(); }

/// Runs task(i) for i in [0, count) on up to `workers` threads. The first
/// exception is rethrown after all threads finish.
inline void parallel_for(int count, int workers, const std::function<void(int)>& task) {
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// --- generate ---------------------------------------------------------------

inline json reference_json(const ExactReference& r) {
    return {{"von_neumann", r.von_neumann}, {"orders", r.orders}, {"renyi", r.renyi}};
}

/// One simulated shadow experiment reduced to a jackknife Renyi dataset.
inline JackknifeResult shadow_experiment(const DensityMatrix& rho, const ShadowParams& p, int k_max, std::uint64_t seed) {
    const auto shadows = sample_shadows(rho, p.n_unitaries, p.n_shots, seed);
    return jackknife(batch_shadows(shadows, p.n_batches), k_max);
}

inline std::uint64_t case_seed(const BenchmarkConfig& c, std::size_t case_index) {
    return substream_seed(c.seed, 0x1000 + case_index);
}

/// Datasets for every case: one exact dataset per case, or n_experiments
/// shadow datasets per case with jackknife covariances.
inline std::vector<DatasetDocument> cmd_generate(const BenchmarkConfig& config) {
    config.validate();
    const auto hash = config_hash(config);
    const auto all = cases(config);
    std::vector<std::vector<DatasetDocument>> per_case(all.size());
    auto base_meta = [&](const Case& cs, const ExactReference& ref, std::uint64_t seed) {
        DatasetMetadata m;
        m.seed = seed;
        m.scenario = to_string(config.scenario);
        m.config_hash = hash;
        m.extra["subsystem"] = cs.subsystem;
        m.extra["t_ms"] = cs.t_ms;
        m.extra["source"] = to_string(config.source);
        m.extra["exact"] = reference_json(ref);
        return m;
    };

    if (config.source == Source::exact) {
        for (std::size_t i = 0; i < all.size(); ++i) {
            bool degenerate = false;
            const auto ref = exact_reference(case_state(config, all[i], &degenerate), config.k_max);
            DatasetDocument doc{exact_dataset(ref), base_meta(all[i], ref, config.seed)};
            if (degenerate) doc.meta.extra["ground_degenerate"] = true;
            per_case[i].push_back(std::move(doc));
        }
    } else {
        const int n_exp = config.grouping.n_experiments;
        for (std::size_t i = 0; i < all.size(); ++i) {
            const auto rho = case_state(config, all[i]);
            const auto ref = exact_reference(rho, config.k_max);
            per_case[i].resize(n_exp);
            parallel_for(n_exp, resolve_workers(config), [&](int e) {
                const auto seed = substream_seed(case_seed(config, i), static_cast<std::uint64_t>(e));
                const auto jk = shadow_experiment(rho, config.shadow, config.k_max, seed);
                DatasetDocument doc{jk.dataset, base_meta(all[i], ref, seed)};
                doc.meta.extra["experiment"] = e;
                doc.meta.extra["dropped_orders"] = jk.dropped_orders;
                doc.meta.extra["replicates_dropped"] = jk.replicates_dropped;
                doc.meta.extra["unreliable"] = jk.unreliable;
                doc.meta.extra["plain_renyi"] = jk.plain;
                doc.meta.extra["shadow"] = {{"n_unitaries", config.shadow.n_unitaries},
                                            {"n_shots", config.shadow.n_shots},
                                            {"n_batches", config.shadow.n_batches}};
                per_case[i][e] = std::move(doc);
            });
        }
    }
    std::vector<DatasetDocument> out;
    for (auto& v : per_case) {
        for (auto& d : v) out.push_back(std::move(d));
    }
    return out;
}

// --- noise ------------------------------------------------------------------

/// Independent Gaussian noise of standard deviation fraction * |S_k| on every
/// order; each realization carries the matching diagonal covariance.
inline std::vector<DatasetDocument> cmd_add_noise(const DatasetDocument& input, double fraction, int n_realizations,
                                                  std::uint64_t seed) {
    sac::detail::require(fraction >= 0.0 && std::isfinite(fraction), "add_noise: fraction must be >= 0");
    sac::detail::require(n_realizations >= 1, "add_noise: n_realizations must be >= 1");
    input.data.validate();
    std::vector<DatasetDocument> out;
    const auto n = static_cast<Eigen::Index>(input.data.size());
    for (int r = 0; r < n_realizations; ++r) {
        DatasetDocument doc = input;
        doc.meta.extra["realization"] = r;
        doc.meta.extra["noise_fraction"] = fraction;
        doc.meta.seed = substream_seed(seed, static_cast<std::uint64_t>(r));
        if (fraction > 0.0) {
            Rng rng(doc.meta.seed);
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double sd = fraction * std::abs(input.data.values[i]);
                doc.data.values[i] += sd * rng.normal();
                cov(i, i) = sd * sd;
            }
            doc.data.covariance = cov;
        }
        out.push_back(std::move(doc));
    }
    return out;
}

// --- estimate ---------------------------------------------------------------

struct EstimateOptions {
    ConformalParams conformal = kDefaultConformal;
    std::optional<double> chi2_0;
    int lsq_degree = 2;
    std::optional<int> k_max;  // truncate the dataset first
};

struct EstimateResult {
    Method method = Method::sac;
    double value = 0.0;
    int k_max = 0;
    int degree = 0;                  // baselines only
    std::optional<SacEstimate> sac;  // SAC diagnostics
};

inline EstimateResult estimate(const RenyiDataset& input, Method method, const EstimateOptions& opt) {
    const RenyiDataset data = opt.k_max ? input.truncated(*opt.k_max) : input;
    EstimateResult r;
    r.method = method;
    r.k_max = data.k_max();
    switch (method) {
        case Method::sac: {
            NoisyOptions no;
            no.chi2_0 = opt.chi2_0;
            r.sac = estimate_sac(data, opt.conformal, no);
            r.value = r.sac->alpha_min;
            break;
        }
        case Method::chebyshev: {
            const auto b = chebyshev_extrapolate(data);
            r.value = b.value;
            r.degree = b.degree;
            break;
        }
        case Method::lsq: {
            const auto b = least_squares_poly(data, std::min(opt.lsq_degree, data.k_max() - 2));
            r.value = b.value;
            r.degree = b.degree;
            break;
        }
    }
    return r;
}

inline json diagnostics_json(const SacDiagnostics& d) {
    return {{"noisy", d.noisy},
            {"lambda", d.lambda},
            {"y0", d.y0},
            {"chi2_achieved", d.chi2_achieved},
            {"chi2_target", d.chi2_target},
            {"iterations", d.iterations},
            {"w0", d.w0},
            {"kernel_condition", d.kernel_condition},
            {"constraint_inactive", d.constraint_inactive},
            {"degenerate", d.degenerate},
            {"multimodal", d.multimodal},
            {"bracket_widened", d.bracket_widened},
            {"lambda_grid_fallback", d.lambda_grid_fallback},
            {"routed_to_noiseless", d.routed_to_noiseless}};
}

/// Error percentage 100 |est - exact| / exact, or the absolute error when the
/// exact entropy is below 1e-9.
struct ErrorValue {
    double value = 0.0;
    bool absolute = false;
};

inline ErrorValue error_of(double estimate, double exact) {
    if (std::abs(exact) < 1e-9) return {std::abs(estimate - exact), true};
    return {100.0 * std::abs(estimate - exact) / std::abs(exact), false};
}

/// One estimate as a result row: inputs, estimate, exact reference if known.
inline json cmd_estimate(const DatasetDocument& doc, Method method, const EstimateOptions& opt) {
    const auto r = estimate(doc.data, method, opt);
    json j;
    j["method"] = to_string(method);
    j["estimate_bits"] = r.value;
    j["k_max"] = r.k_max;
    if (method != Method::sac) j["degree"] = r.degree;
    const RenyiDataset used = opt.k_max ? doc.data.truncated(*opt.k_max) : doc.data;
    j["orders"] = used.orders;
    j["values_bits"] = used.values;
    j["seed"] = doc.meta.seed;
    j["scenario"] = doc.meta.scenario;
    j["config_hash"] = doc.meta.config_hash;
    if (doc.meta.extra.contains("exact")) {
        const double exact = doc.meta.extra["exact"].value("von_neumann", 0.0);
        const auto err = error_of(r.value, exact);
        j["exact_von_neumann"] = exact;
        j[err.absolute ? "error_abs" : "error_pct"] = err.value;
    }
    if (r.sac) {
        j["delta2_min"] = r.sac->delta2_min;
        j["diagnostics"] = diagnostics_json(r.sac->solver);
    }
    return j;
}

// --- grouping ---------------------------------------------------------------

/// Mean Renyi set of a group, restricted to the orders every member kept.
inline RenyiDataset group_mean(std::span<const RenyiDataset> members, GroupCovariance mode) {
    sac::detail::require(!members.empty(), "group_mean: empty group");
    int k_common = members.front().k_max();
    for (const auto& m : members) k_common = std::min(k_common, m.k_max());
    sac::detail::require(k_common >= 2, "group_mean: no common orders");
    const auto g = static_cast<double>(members.size());
    std::vector<RenyiDataset> cut;
    for (const auto& m : members) cut.push_back(m.truncated(k_common));
    const auto n = static_cast<Eigen::Index>(cut.front().size());

    Eigen::MatrixXd values(n, members.size());
    for (std::size_t j = 0; j < cut.size(); ++j) {
        for (Eigen::Index i = 0; i < n; ++i) values(i, static_cast<Eigen::Index>(j)) = cut[j].values[i];
    }
    const Eigen::VectorXd mean = values.rowwise().mean();
    RenyiDataset out;
    out.orders = cut.front().orders;
    out.values.assign(mean.data(), mean.data() + n);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
    if (mode == GroupCovariance::sample && members.size() > 1) {
        const Eigen::MatrixXd centered = values.colwise() - mean;
        cov = centered * centered.transpose() / (g - 1.0) / g;
    } else {
        for (const auto& m : cut) {
            if (m.covariance) cov += *m.covariance;
        }
        cov /= g * g;
    }
    out.covariance = 0.5 * (cov + cov.transpose());
    return out;
}

struct GroupedResult {
    std::vector<double> estimates;  // one per successful group
    std::vector<std::string> failures;
    int degenerate = 0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double spread = std::numeric_limits<double>::quiet_NaN();  // standard deviation over groups
};

inline void summarize(const std::vector<double>& v, double& mean, double& sd) {
    if (v.empty()) return;
    double s = 0.0;
    for (double x : v) s += x;
    mean = s / static_cast<double>(v.size());
    double q = 0.0;
    for (double x : v) q += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(q / static_cast<double>(v.size() - 1)) : 0.0;
}

/// Consecutive groups of group_size datasets; each group mean is estimated
/// once, and the group estimates are averaged.
inline GroupedResult estimate_grouped(std::span<const RenyiDataset> sets, int group_size, Method method,
                                      const EstimateOptions& opt, GroupCovariance mode = GroupCovariance::sample) {
    sac::detail::require(group_size >= 1, "grouping: group_size must be >= 1");
    const int n_groups = static_cast<int>(sets.size()) / group_size;
    sac::detail::require(n_groups >= 1, "grouping: fewer datasets than one group");
    GroupedResult out;
    for (int g = 0; g < n_groups; ++g) {
        try {
            const auto mean = group_mean(sets.subspan(static_cast<std::size_t>(g) * group_size, group_size), mode);
            const auto r = estimate(mean, method, opt);
            out.estimates.push_back(r.value);
            if (r.sac && r.sac->solver.degenerate) ++out.degenerate;
        } catch (const Error& e) {
            out.failures.push_back(e.what());
        }
    }
    summarize(out.estimates, out.mean, out.spread);
    return out;
}

// --- benchmark --------------------------------------------------------------

struct ResultRow {
    std::string scenario;
    int n = 0;
    int subsystem = 0;
    double t_ms = 0.0;
    std::string source;
    double noise_fraction = 0.0;
    int k_max = 0;
    std::string method;
    int degree = 0;
    int samples = 0;
    int failures = 0;
    int degenerate = 0;
    double exact_svn = 0.0;
    double estimate_mean = std::numeric_limits<double>::quiet_NaN();
    double estimate_std = std::numeric_limits<double>::quiet_NaN();
    double error_mean = std::numeric_limits<double>::quiet_NaN();
    double error_std = std::numeric_limits<double>::quiet_NaN();
    bool error_absolute = false;
    std::string renyi_inputs;  // exact S_2..S_kmax, ';'-separated
    std::string first_failure;
    std::uint64_t seed = 0;
    std::string config_hash;

    auto key() const { return std::tie(scenario, subsystem, t_ms, source, noise_fraction, k_max, method); }
};

struct BenchmarkReport {
    std::vector<ResultRow> rows;
    json sidecar;
};

namespace detail {

inline std::string fmt(double x) {
    if (!std::isfinite(x)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + "\"";
}

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt(v[i]);
    return s;
}

}  // namespace detail

inline constexpr const char* kCsvHeader =
    "scenario,n,subsystem,t_ms,source,noise_fraction,k_max,method,degree,samples,failures,degenerate,exact_svn,"
    "estimate_mean,estimate_std,error_mean,error_std,error_kind,renyi_inputs,first_failure,seed,config_hash";

inline std::string to_csv(const std::vector<ResultRow>& rows) {
    using detail::fmt;
    std::ostringstream os;
    os << kCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.scenario << ',' << r.n << ',' << r.subsystem << ',' << fmt(r.t_ms) << ',' << r.source << ','
           << fmt(r.noise_fraction) << ',' << r.k_max << ',' << r.method << ',' << r.degree << ',' << r.samples << ','
           << r.failures << ',' << r.degenerate << ',' << fmt(r.exact_svn) << ',' << fmt(r.estimate_mean) << ','
           << fmt(r.estimate_std) << ',' << fmt(r.error_mean) << ',' << fmt(r.error_std) << ','
           << (r.error_absolute ? "absolute" : "percent") << ',' << r.renyi_inputs << ','
           << detail::csv_field(r.first_failure) << ',' << r.seed << ',' << r.config_hash << '\n';
    }
    return os.str();
}

namespace detail {

struct Accumulator {
    std::vector<double> estimates;
    std::vector<double> errors;
    int failures = 0;
    int degenerate = 0;
    int degree = 0;
    std::string first_failure;
    bool absolute = false;

    void fail(const std::string& what) {
        if (failures++ == 0) first_failure = what;
    }

    void fill(ResultRow& row) const {
        row.samples = static_cast<int>(estimates.size());
        row.failures = failures;
        row.degenerate = degenerate;
        row.degree = degree;
        row.first_failure = first_failure;
        row.error_absolute = absolute;
        summarize(estimates, row.estimate_mean, row.estimate_std);
        summarize(errors, row.error_mean, row.error_std);
    }
};

}  // namespace detail

/// Sweeps k_max in [3, config.k_max] and every method over all cases. Exact
/// sources get a noiseless cell plus a Gaussian-noise cell when the noise
/// fraction is positive; shadow sources are reduced by the grouping protocol.
inline BenchmarkReport cmd_benchmark(const BenchmarkConfig& config) {
    config.validate();
    const auto hash = config_hash(config);
    const auto all = cases(config);
    const std::vector<Method> methods{Method::sac, Method::chebyshev, Method::lsq};
    EstimateOptions opt;
    opt.conformal = config.conformal;
    opt.chi2_0 = config.chi2_0;
    opt.lsq_degree = config.lsq_degree;

    struct Cell {
        std::size_t case_index;
        double noise;
    };
    std::vector<Cell> cells;
    for (std::size_t i = 0; i < all.size(); ++i) {
        cells.push_back({i, 0.0});
        if (config.source == Source::exact && config.noise.gaussian_fraction > 0.0) {
            cells.push_back({i, config.noise.gaussian_fraction});
        }
    }

    std::vector<std::vector<ResultRow>> produced(cells.size());
    const int workers = resolve_workers(config);
    parallel_for(static_cast<int>(cells.size()), workers, [&](int ci) {
        const Cell& cell = cells[ci];
        const Case& cs = all[cell.case_index];
        const auto rho = case_state(config, cs);
        const auto ref = exact_reference(rho, config.k_max);
        const auto seed = substream_seed(case_seed(config, cell.case_index), cell.noise > 0.0 ? 1 : 0);

        std::vector<RenyiDataset> inputs;
        if (config.source == Source::shadows) {
            for (int e = 0; e < config.grouping.n_experiments; ++e) {
                const auto s = substream_seed(case_seed(config, cell.case_index), static_cast<std::uint64_t>(e));
                inputs.push_back(shadow_experiment(rho, config.shadow, config.k_max, s).dataset);
            }
        } else if (cell.noise > 0.0) {
            const DatasetDocument base{exact_dataset(ref), {}};
            for (auto& d : cmd_add_noise(base, cell.noise, config.noise.n_realizations, seed)) {
                inputs.push_back(std::move(d.data));
            }
        } else {
            inputs.push_back(exact_dataset(ref));
        }

        for (int k = 3; k <= config.k_max; ++k) {
            EstimateOptions o = opt;
            o.k_max = k;
            for (Method m : methods) {
                detail::Accumulator acc;
                if (config.source == Source::shadows) {
                    std::vector<RenyiDataset> cut;
                    for (const auto& d : inputs) {
                        if (!d.orders.empty()) cut.push_back(d.truncated(k));
                    }
                    try {
                        const auto g = estimate_grouped(cut, config.grouping.group_size, m, o, config.grouping.covariance);
                        for (const auto& f : g.failures) acc.fail(f);
                        acc.degenerate = g.degenerate;
                        for (double v : g.estimates) {
                            const auto err = error_of(v, ref.von_neumann);
                            acc.estimates.push_back(v);
                            acc.errors.push_back(err.value);
                            acc.absolute = err.absolute;
                        }
                    } catch (const Error& e) {
                        acc.fail(e.what());
                    }
                } else {
                    for (const auto& d : inputs) {
                        try {
                            const auto r = estimate(d, m, o);
                            const auto err = error_of(r.value, ref.von_neumann);
                            acc.estimates.push_back(r.value);
                            acc.errors.push_back(err.value);
                            acc.absolute = err.absolute;
                            acc.degree = r.degree;
                            if (r.sac && r.sac->solver.degenerate) ++acc.degenerate;
                        } catch (const Error& e) {
                            acc.fail(e.what());
                        }
                    }
                }
                if (m == Method::lsq && acc.degree == 0) acc.degree = std::min(config.lsq_degree, k - 2);
                if (m == Method::chebyshev && acc.degree == 0) acc.degree = k - 2;
                ResultRow row;
                row.scenario = to_string(config.scenario);
                row.n = config.scenario == Scenario::random_state ? 0 : config.n;
                row.subsystem = cs.subsystem;
                row.t_ms = cs.t_ms;
                row.source = to_string(config.source);
                row.noise_fraction = cell.noise;
                row.k_max = k;
                row.method = to_string(m);
                row.exact_svn = ref.von_neumann;
                row.renyi_inputs = detail::join(std::vector<double>(ref.renyi.begin(), ref.renyi.begin() + (k - 1)));
                row.seed = config.seed;
                row.config_hash = hash;
                acc.fill(row);
                produced[ci].push_back(std::move(row));
            }
        }
    });

    BenchmarkReport report;
    for (auto& v : produced) {
        for (auto& r : v) report.rows.push_back(std::move(r));
    }
    std::sort(report.rows.begin(), report.rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.key() < b.key(); });
    report.sidecar = {{"schema_version", kSchemaVersion},
                      {"config", to_json(config, false)},
                      {"config_hash", hash},
                      {"columns", kCsvHeader},
                      {"error_definition", "percent: 100*|estimate-exact|/exact; absolute when exact < 1e-9"},
                      {"scale_note", "desk-scale simulation; sizes are those in config, not the published experiment sizes"},
                      {"rows", report.rows.size()}};
    return report;
}

}  // namespace sac::pipeline
