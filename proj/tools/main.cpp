#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "stefan/cli.hpp"
#include "stefan/error.hpp"

namespace {

struct SubArgs {
    CLI::App* sub = nullptr;
    std::string config_path;
    std::string out_dir;
    int workers = 0;
    unsigned long long seed = 0;
};

void add_common(SubArgs& a) {
    a.sub->add_option("--config", a.config_path, "JSON run configuration")
        ->required();
    a.sub->add_option("--out", a.out_dir,
                      "artifact directory (overrides the config)");
    a.sub->add_option("--workers", a.workers,
                      "worker threads, 0 keeps the runtime default");
    a.sub->add_option("--seed", a.seed, "seed (overrides the config)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite differences for multiphase free-boundary problems "
                 "with distributed control"};
    app.require_subcommand(1);

    SubArgs solve, optimize, verify, converge;
    solve.sub = app.add_subcommand(
        "solve", "run the forward problem and dump the trajectory");
    optimize.sub = app.add_subcommand(
        "optimize", "recover a source by projected gradient descent");
    verify.sub = app.add_subcommand(
        "verify", "run the configured bound checks and studies");
    converge.sub = app.add_subcommand(
        "converge", "refinement chain: functional gaps and certificates");
    for (SubArgs* a : {&solve, &optimize, &verify, &converge}) add_common(*a);

    CLI11_PARSE(app, argc, argv);

    SubArgs* chosen = &solve;
    stefan::RunMode mode = stefan::RunMode::solve;
    if (optimize.sub->parsed()) {
        chosen = &optimize;
        mode = stefan::RunMode::optimize;
    } else if (verify.sub->parsed()) {
        chosen = &verify;
        mode = stefan::RunMode::verify;
    } else if (converge.sub->parsed()) {
        chosen = &converge;
        mode = stefan::RunMode::converge;
    }

#ifdef _OPENMP
    if (chosen->workers > 0) omp_set_num_threads(chosen->workers);
#endif

    stefan::CliOverrides overrides;
    if (chosen->sub->count("--out") > 0) overrides.out_dir = chosen->out_dir;
    if (chosen->sub->count("--seed") > 0) overrides.seed = chosen->seed;

    try {
        const stefan::RunConfig cfg =
            stefan::load_run_config_file(chosen->config_path, mode, overrides);
        stefan::RunOutcome outcome;
        switch (mode) {
        case stefan::RunMode::solve: outcome = stefan::cmd_solve(cfg); break;
        case stefan::RunMode::optimize:
            outcome = stefan::cmd_optimize(cfg);
            break;
        case stefan::RunMode::verify: outcome = stefan::cmd_verify(cfg); break;
        case stefan::RunMode::converge:
            outcome = stefan::cmd_converge(cfg);
            break;
        }
        for (const std::string& path : outcome.artifacts)
            std::printf("wrote %s\n", path.c_str());
        std::printf("%s\n", outcome.summary.c_str());
        return outcome.exit_code;
    } catch (const stefan::ConfigRejected& e) {
        std::fprintf(stderr, "%s\n",
                     stefan::violations_json(e.violations()).c_str());
        return 2;
    } catch (const stefan::Error& e) {
        std::fprintf(stderr, "%s\n",
                     stefan::runtime_error_json(e.name(), e.what()).c_str());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n",
                     stefan::runtime_error_json("internal", e.what()).c_str());
        return 4;
    }
}
