// sac_cli: generate | add-noise | estimate | benchmark
//
// Exit codes: 0 success, 2 invalid configuration or input, 3 numerical failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "sac/pipeline.hpp"

namespace {

using sac::pipeline::json;
namespace pl = sac::pipeline;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw sac::InvalidArgument("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw sac::InvalidArgument("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sac::InvalidArgument("cannot write '" + path + "'");
    out << text;
}

// Flags that mirror BenchmarkConfig. Values given on the command line are
// written over the config file as a JSON patch.
struct ConfigFlags {
    std::string config_path;
    json patch = json::object();
    std::vector<std::function<void()>> collectors;

    template <class T>
    void add(CLI::App* app, const std::string& flag, const std::string& json_path, const std::string& help) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app->add_option(flag, *value, help);
        collectors.push_back([this, opt, value, json_path] {
            if (opt->count() == 0) return;
            json* node = &patch;
            std::stringstream ss(json_path);
            std::string part;
            std::vector<std::string> parts;
            while (std::getline(ss, part, '.')) parts.push_back(part);
            for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
            (*node)[parts.back()] = *value;
        });
    }

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config_path, "JSON config file; flags override its values");
        add<std::string>(app, "--scenario", "scenario", "tfim_ground | xy_quench | random_state");
        add<int>(app, "-n,--sites", "n", "number of qubits of the global state");
        add<std::vector<int>>(app, "-L,--subsystem", "subsystem_sizes", "subsystem sizes (first L sites)");
        add<double>(app, "--coupling", "coupling", "tfim J, or xy J in 1/s");
        add<double>(app, "--field", "field", "tfim h, or xy B in 1/s");
        add<double>(app, "--exponent", "exponent", "power-law decay exponent of the xy couplings");
        add<std::vector<double>>(app, "--times", "times_ms", "quench times in ms");
        add<int>(app, "--dim", "dim", "random_state dimension");
        add<int>(app, "--rank", "rank", "random_state rank");
        add<double>(app, "--depolarizing", "depolarizing", "global depolarizing probability");
        add<int>(app, "--k-max", "k_max", "largest Renyi order");
        add<double>(app, "--epsilon", "conformal.epsilon", "strip half-width of the conformal map");
        add<double>(app, "--eta", "conformal.eta", "Moebius parameter of the conformal map");
        add<double>(app, "--chi2-0", "chi2_0", "chi^2 bound of the noisy solver (default k_max)");
        add<int>(app, "--lsq-degree", "lsq_degree", "least-squares polynomial degree");
        add<std::string>(app, "--source", "source", "exact | shadows");
        add<int>(app, "--n-unitaries", "shadow.n_unitaries", "random unitaries per experiment");
        add<int>(app, "--n-shots", "shadow.n_shots", "measurements per unitary");
        add<int>(app, "--n-batches", "shadow.n_batches", "batches per experiment");
        add<int>(app, "--experiments", "grouping.n_experiments", "shadow experiments per case");
        add<int>(app, "--group-size", "grouping.group_size", "Renyi sets per group");
        add<std::string>(app, "--group-covariance", "grouping.covariance", "sample | jackknife");
        add<double>(app, "--noise", "noise.gaussian_fraction", "relative Gaussian noise level");
        add<int>(app, "--realizations", "noise.n_realizations", "noise realizations");
        add<std::uint64_t>(app, "--seed", "seed", "master seed");
        add<int>(app, "-j,--workers", "workers", "worker threads (default: $SAC_WORKERS or all cores)");
    }

    pl::BenchmarkConfig resolve() {
        for (auto& c : collectors) c();
        pl::BenchmarkConfig cfg;
        if (!config_path.empty()) cfg = pl::config_from_json(read_json_file(config_path));
        cfg = pl::config_from_json(patch, cfg);
        cfg.validate();
        return cfg;
    }
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json documents_json(const std::vector<pl::DatasetDocument>& docs) {
    json arr = json::array();
    for (const auto& d : docs) arr.push_back(pl::to_json(d));
    return arr;
}

int run(int argc, char** argv) {
    CLI::App app{"Stabilized analytic continuation of Renyi entropies"};
    app.require_subcommand(1);

    ConfigFlags gen_flags;
    std::string gen_out;
    auto* gen = app.add_subcommand("generate", "simulate states and write Renyi datasets");
    gen_flags.attach(gen);
    gen->add_option("-o,--out", gen_out, "output file (default stdout)");

    std::string noise_in, noise_out;
    double noise_fraction = 0.1;
    int noise_realizations = 200;
    std::uint64_t noise_seed = 1;
    int noise_index = -1;
    auto* noise = app.add_subcommand("add-noise", "add independent Gaussian noise to a dataset");
    noise->add_option("-i,--input", noise_in, "dataset file")->required();
    noise->add_option("--fraction", noise_fraction, "standard deviation as a fraction of S_k")->capture_default_str();
    noise->add_option("--realizations", noise_realizations, "number of noisy copies")->capture_default_str();
    noise->add_option("--seed", noise_seed, "seed")->capture_default_str();
    noise->add_option("--index", noise_index, "dataset index inside an array file (default: every dataset)");
    noise->add_option("-o,--out", noise_out, "output file (default stdout)");

    std::string est_in, est_out, est_method = "sac", est_group_cov = "sample";
    pl::EstimateOptions est_opt;
    double est_eps = est_opt.conformal.epsilon, est_eta = est_opt.conformal.eta, est_chi2 = 0.0;
    int est_kmax = 0, est_group = 0;
    auto* est = app.add_subcommand("estimate", "estimate the von Neumann entropy of datasets");
    est->add_option("-i,--input", est_in, "dataset file (single document or array)")->required();
    est->add_option("-m,--method", est_method, "sac | chebyshev | lsq")->capture_default_str();
    est->add_option("--epsilon", est_eps, "strip half-width")->capture_default_str();
    est->add_option("--eta", est_eta, "Moebius parameter")->capture_default_str();
    auto* chi2_opt = est->add_option("--chi2-0", est_chi2, "chi^2 bound of the noisy solver (default k_max)");
    est->add_option("--lsq-degree", est_opt.lsq_degree, "least-squares degree")->capture_default_str();
    auto* kmax_opt = est->add_option("--k-max", est_kmax, "truncate datasets to orders <= k_max");
    est->add_option("--group-size", est_group, "average consecutive groups of this size before estimating");
    est->add_option("--group-covariance", est_group_cov, "sample | jackknife")->capture_default_str();
    est->add_option("-o,--out", est_out, "output file (default stdout)");

    ConfigFlags bench_flags;
    std::string bench_csv = "benchmark.csv";
    auto* bench = app.add_subcommand("benchmark", "sweep methods and k_max; write CSV plus JSON sidecar");
    bench_flags.attach(bench);
    bench->add_option("-o,--out", bench_csv, "CSV path; the sidecar is written to <path>.json")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*gen) {
        const auto cfg = gen_flags.resolve();
        write_text(gen_out, dump(documents_json(pl::cmd_generate(cfg))));
        return 0;
    }
    if (*noise) {
        auto docs = pl::datasets_from_json(read_json_file(noise_in));
        if (noise_index >= 0) {
            sac::detail::require(noise_index < static_cast<int>(docs.size()), "add-noise: --index out of range");
            docs = {docs[noise_index]};
        }
        std::vector<pl::DatasetDocument> out;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            for (auto& d : pl::cmd_add_noise(docs[i], noise_fraction, noise_realizations, sac::substream_seed(noise_seed, i))) {
                out.push_back(std::move(d));
            }
        }
        write_text(noise_out, dump(documents_json(out)));
        return 0;
    }
    if (*est) {
        const auto method = pl::parse_method(est_method);
        est_opt.conformal = {est_eps, est_eta};
        est_opt.conformal.validate();
        if (chi2_opt->count()) est_opt.chi2_0 = est_chi2;
        if (kmax_opt->count()) est_opt.k_max = est_kmax;
        const auto docs = pl::datasets_from_json(read_json_file(est_in));
        json result;
        if (est_group > 0) {
            std::vector<sac::RenyiDataset> sets;
            for (const auto& d : docs) sets.push_back(est_opt.k_max ? d.data.truncated(*est_opt.k_max) : d.data);
            const auto g = pl::estimate_grouped(sets, est_group, method, est_opt, pl::parse_group_covariance(est_group_cov));
            result = {{"method", est_method},
                      {"group_size", est_group},
                      {"groups", g.estimates.size()},
                      {"group_estimates", g.estimates},
                      {"failures", g.failures},
                      {"degenerate_groups", g.degenerate},
                      {"estimate_bits", g.mean},
                      {"spread_bits", g.spread}};
            if (docs.front().meta.extra.contains("exact")) {
                result["exact_von_neumann"] = docs.front().meta.extra["exact"]["von_neumann"];
            }
            if (g.estimates.empty()) throw sac::NumericalError("estimate: every group failed");
        } else if (docs.size() == 1) {
            result = pl::cmd_estimate(docs.front(), method, est_opt);
        } else {
            result = json::array();
            for (const auto& d : docs) result.push_back(pl::cmd_estimate(d, method, est_opt));
        }
        write_text(est_out, dump(result));
        return 0;
    }
    if (*bench) {
        const auto cfg = bench_flags.resolve();
        const auto report = pl::cmd_benchmark(cfg);
        write_text(bench_csv, pl::to_csv(report.rows));
        write_text(bench_csv == "-" ? "-" : bench_csv + ".json", dump(report.sidecar));
        return 0;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const sac::InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const sac::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
