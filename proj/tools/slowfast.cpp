#include "slowfast/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace slowfast;

namespace {

std::vector<int> parse_n_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw ConfigError("--n-list: '" + item + "' is not an integer");
        out.push_back(v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Slow-fast diffusion experiments: simulation, filtering, averaging and rate studies"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    std::string config_path, model, n_list, out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::size_t> replicas;
    bool print_config = false;

    for (const auto& name : kind_names()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " study");
        sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "base seed (required here or in the config)");
        sub->add_option("--workers", workers, "worker threads (0 = hardware concurrency)");
        sub->add_option("--out", out, "parent directory of the run directory");
        sub->add_option("--model", model, "SINCOS, LINGAUSS or OU2D");
        sub->add_option("--n-list", n_list, "comma-separated scale separations, e.g. 4,8,16");
        sub->add_option("--replicas", replicas, "replica count");
        sub->add_flag("--print-config", print_config, "print the resolved config and exit");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string kind = app.get_subcommands().front()->get_name();

    try {
        ExperimentConfig cfg;
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            std::stringstream buf;
            buf << is.rdbuf();
            cfg = config_from_json(buf.str());
        }
        cfg.kind = parse_kind(kind);
        if (seed) cfg.seed = *seed;
        if (workers) cfg.workers = *workers;
        if (!out.empty()) cfg.out = out;
        if (!model.empty()) cfg.model = model;
        if (!n_list.empty()) cfg.n_list = parse_n_list(n_list);
        if (replicas) cfg.replicas = *replicas;
        if (print_config) {
            std::cout << config_to_json(cfg) << '\n';
            return 0;
        }
        const ExperimentResult res = run_experiment(cfg);
        std::cout << res.dir.string() << '\n';
        for (const auto& f : res.failures) std::cerr << "check failed: " << f << '\n';
        return res.status;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
