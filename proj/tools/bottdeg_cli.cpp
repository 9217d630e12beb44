// bottdeg: degree, approximate, bott and stabilize experiments.
//
// Every flag mirrors a key of the flat config file; flags given on the
// command line override the file. Exit codes: 0 ok, 1 check failed,
// 2 boundary hit, 3 method disagreement, 64 usage error.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bottdeg/cli.hpp"

namespace {

namespace bc = bottdeg::cli;

struct Flags {
    std::string config;
    std::map<std::string, std::string> values;
    bool frozen = false;
};

void add_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "flat key = value config file");
    for (const auto& key : bc::ExperimentConfig::keys()) {
        if (key == "frozen") continue;
        sub->add_option("--" + key, f.values[key], "config key '" + key + "'");
    }
    sub->add_flag("--frozen", f.frozen, "repeat the first stage (density control)");
}

int run(const std::string& command, CLI::App* sub, Flags& f) {
    bc::ExperimentConfig cfg;
    cfg.command = command;
    if (!f.config.empty()) bc::apply_config_file(cfg, f.config);
    for (const auto& key : bc::ExperimentConfig::keys()) {
        if (key == "frozen") {
            if (f.frozen) cfg.set("frozen", "true");
        } else if (sub->get_option("--" + key)->count() > 0) {
            cfg.set(key, f.values[key]);
        }
    }
    const bc::CommandResult res = bc::run_command(cfg);
    bc::write_outputs(res, bc::output_dir(cfg));
    std::cout << res.summary << "\n";
    return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bottdeg: finite-dimensional degree and Bott-element experiments"};
    app.set_version_flag("--version", std::string(bc::kVersion));
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands{
        {"degree", "certify the Brouwer degree of a registered map"},
        {"approximate", "net subspace and finite-approximation checks on the Sobolev model"},
        {"bott", "pullback identity and commutativity defects"},
        {"stabilize", "degree sequence across approximation stages"},
    };
    std::map<std::string, Flags> flags;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        subs[name] = app.add_subcommand(name, help);
        add_flags(subs[name], flags[name]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : bc::kUsage;
    }

    for (const auto& [name, sub] : subs) {
        if (!sub->parsed()) continue;
        try {
            return run(name, sub, flags[name]);
        } catch (const bc::ConfigError& e) {
            std::cerr << "bottdeg: " << e.what() << "\n";
            return bc::kUsage;
        } catch (const bottdeg::Error& e) {
            std::cerr << "bottdeg: " << e.what() << "\n";
            return e.kind() == bottdeg::ErrorKind::BoundaryHit ? bc::kBoundaryHit : bc::kCheckFailed;
        } catch (const std::exception& e) {
            std::cerr << "bottdeg: " << e.what() << "\n";
            return bc::kCheckFailed;
        }
    }
    return bc::kUsage;
}
