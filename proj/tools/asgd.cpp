// asgd: run scenario ensembles and the acceptance checks.
//
//   asgd run <scenario.json> [--out DIR] [--set key=value]... [--seeds S] [--trace]
//   asgd validate <scenario.json> [--set key=value]...
//   asgd verify <suite | criterion>... [--quick]
//
// Exit status: 0 success, 1 failed check or runtime error, 2 invalid input,
// 3 liveness violation in some run.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "asgd/error.hpp"
#include "asgd/harness.hpp"
#include "asgd/scenario.hpp"
#include "asgd/sim.hpp"
#include "asgd/verify.hpp"

namespace fs = std::filesystem;
using namespace asgd;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw UsageError("cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + p.string());
}

int cmd_run(const std::string& file, const std::string& out_dir, const std::vector<std::string>& sets,
            std::size_t seeds, bool trace) {
    auto spec = scenario::parse(slurp(file), sets);
    if (seeds) spec.seeds = seeds;
    const auto results = harness::estimate(spec);
    const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    fs::create_directories(dir);
    write_file(dir / "metrics.csv", harness::to_csv(results));
    write_file(dir / "metrics.json", harness::to_json(results));

    if (trace) {
        for (const auto& r : results) {
            const auto seed = harness::run_seed(spec.seed_root, 0);
            const auto setup = harness::resolve(r.config.scenario, seed);
            sim::TraceOptions opts;
            opts.events = true;
            const auto tr = sim::run(setup.topology, setup.faults, setup.schedule, setup.algorithm,
                                     r.config.scenario.oracle.build(), opts);
            char name[64];
            std::snprintf(name, sizeof name, "trace_%016llx.txt", static_cast<unsigned long long>(r.config.hash));
            write_file(dir / name, sim::export_trace(tr));
        }
    }

    int status = 0;
    for (const auto& r : results) {
        std::cout << "config " << std::hex << r.config.hash << std::dec << " T=" << r.config.scenario.algorithm.T
                  << " N=" << r.config.scenario.algorithm.N << ": ";
        if (r.metrics.complete) {
            std::cout << "external " << r.metrics.external_err.mean << " internal " << r.metrics.internal_err.mean
                      << '\n';
        } else {
            std::cout << r.metrics.failures.size() << " liveness violations (" << r.metrics.failures.front()
                      << ")\n";
            status = 3;
        }
    }
    std::cout << "wrote " << (dir / "metrics.csv").string() << '\n';
    return status;
}

int cmd_verify(const std::vector<std::string>& names, bool quick) {
    std::vector<int> criteria;
    for (const auto& n : names) {
        if (!n.empty() && n.find_first_not_of("0123456789") == std::string::npos) {
            criteria.push_back(std::stoi(n));
        } else {
            const auto s = verify::suite(n);
            criteria.insert(criteria.end(), s.begin(), s.end());
        }
    }
    verify::Options opts;
    opts.quick = quick;
    opts.log = &std::cerr;
    int failed = 0;
    for (int c : criteria) {
        const auto check = verify::run(c, opts);
        std::cout << verify::format(check) << std::endl;
        failed += !check.passed;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " passed\n";
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulator and experiment harness for asynchronous distributed SGD"};
    app.require_subcommand(1);

    std::string file, out_dir;
    std::vector<std::string> sets;
    std::size_t seeds = 0;
    bool trace = false;
    auto* run = app.add_subcommand("run", "Run a scenario ensemble and write metrics.csv / metrics.json");
    run->add_option("scenario", file, "Scenario JSON file")->required();
    run->add_option("--out", out_dir, "Output directory (default: current directory)");
    run->add_option("--set", sets, "Override a field, e.g. --set algorithm.T=128");
    run->add_option("--seeds", seeds, "Override the number of seeds");
    run->add_flag("--trace", trace, "Also export the event trace of seed 0 per configuration");

    std::string vfile;
    std::vector<std::string> vsets;
    auto* val = app.add_subcommand("validate", "Check a scenario file without running it");
    val->add_option("scenario", vfile, "Scenario JSON file")->required();
    val->add_option("--set", vsets, "Override a field");

    std::vector<std::string> suites;
    bool quick = false;
    auto* ver = app.add_subcommand("verify", "Run acceptance checks by suite name or criterion number");
    ver->add_option("suite", suites, "contraction, variance, convergence, faults, divergence, determinism, all, or 1-12")
        ->required();
    ver->add_flag("--quick", quick, "Reduced sample counts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(file, out_dir, sets, seeds, trace);
        if (*val) {
            const auto spec = scenario::parse(slurp(vfile), vsets);
            std::cout << "ok: " << harness::expand(spec).size() << " configuration(s), " << spec.seeds
                      << " seed(s) each\n";
            return 0;
        }
        return cmd_verify(suites, quick);
    } catch (const ConfigError& e) {
        std::cerr << "invalid scenario: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
