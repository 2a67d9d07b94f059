#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relex/error.hpp"
#include "relex/experiments.hpp"

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string memory;
};

relex::RunConfig load(const GlobalFlags& g) {
    auto config = relex::load_config(g.config);
    if (g.seed) config.seed = *g.seed;
    if (!g.out.empty()) config.out = std::filesystem::absolute(g.out);
    if (!g.memory.empty()) config.memory.mode = relex::memory_mode_from_string(g.memory);
    return config;
}

void print_metrics(const std::string& label, const relex::Metrics& m) {
    std::printf("%-12s P=%.4f R=%.4f F1=%.4f (tp=%zu fp=%zu fn=%zu)\n", label.c_str(), m.precision, m.recall, m.f1,
                m.tp, m.fp, m.fn);
}

void warn_errors(std::size_t errors) {
    if (errors > 0) std::cerr << "  warning: " << errors << " episode(s) failed; see the journal\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relex: retrieval- and memory-augmented relation extraction agent"};
    app.require_subcommand(1);
    GlobalFlags g;
    app.fallthrough();  // global flags may follow the subcommand
    app.add_option("--config", g.config, "TOML run configuration")->required();
    app.add_option("--seed", g.seed, "override the configured seed");
    app.add_option("--out", g.out, "override the output directory");
    app.add_option("--memory", g.memory, "override memory mode (off|shallow|deep)")
        ->check(CLI::IsMember({"off", "shallow", "deep"}));

    auto* extract = app.add_subcommand("extract", "run the agent over the test split");
    std::vector<std::string> variants;
    auto* ablate = app.add_subcommand("ablate", "compare configuration variants");
    ablate->add_option("--variants", variants, "variants (default: eval.variants)");
    std::vector<std::size_t> ns;
    auto* lowres = app.add_subcommand("lowres", "restrict the retrieval corpus to N samples");
    lowres->add_option("--ns", ns, "sample counts (default: eval.ns)");
    std::vector<std::size_t> checkpoints;
    auto* memcurve = app.add_subcommand("memcurve", "probe quality as memory grows");
    memcurve->add_option("--checkpoints", checkpoints, "stream positions (default: eval.checkpoints)");
    auto* distill = app.add_subcommand("distill", "export plain and rationale SFT datasets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        auto config = load(g);
        if (extract->parsed()) {
            auto r = relex::cmd_extract(config);
            print_metrics("extract", r.run.metrics);
            warn_errors(std::count_if(r.run.trajectories.begin(), r.run.trajectories.end(),
                                      [](const auto& t) { return t.terminated == relex::Termination::error; }));
            std::cout << "wrote " << r.directory.string() << "\n";
        } else if (ablate->parsed()) {
            for (const auto& row : relex::cmd_ablate(config, variants.empty() ? config.eval.variants : variants)) {
                if (row.status == "ok") {
                    print_metrics(row.variant, row.metrics);
                } else {
                    std::cout << row.variant << " failed: " << row.error << "\n";
                }
            }
        } else if (lowres->parsed()) {
            for (const auto& p : relex::cmd_lowres(config, ns.empty() ? config.eval.ns : ns)) {
                print_metrics("N=" + std::to_string(p.n), p.metrics);
                warn_errors(p.errors);
            }
        } else if (memcurve->parsed()) {
            for (const auto& p : relex::cmd_memcurve(config, checkpoints.empty() ? config.eval.checkpoints : checkpoints)) {
                print_metrics(std::to_string(p.checkpoint) + " " + p.variant, p.metrics);
                warn_errors(p.errors);
            }
        } else if (distill->parsed()) {
            auto report = relex::cmd_distill(config);
            std::cout << "distilled " << report.distilled << " of " << report.qualifying << " qualifying ("
                      << report.trajectories << " trajectories, " << report.samples << " samples)\n";
        }
    } catch (const relex::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
