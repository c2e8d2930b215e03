#pragma once
// Configuration-driven entry points behind the command-line tool: load a
// JSON run description, validate it exhaustively, and drive solve,
// optimize, verify, and converge runs with deterministic artifacts.

#include <exception>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stefan/expression.hpp"
#include "stefan/optimize.hpp"
#include "stefan/verify.hpp"

namespace stefan {

enum class RunMode { solve, optimize, verify, converge };

struct ConfigViolation {
    std::string name; // stable constraint name ("htau", "domain.T", ...)
    std::string message;
};

// Carries every violated constraint, not just the first; the CLI renders
// the list as machine-readable JSON on stdout.
class ConfigRejected : public std::exception {
public:
    explicit ConfigRejected(std::vector<ConfigViolation> violations);
    const std::vector<ConfigViolation>& violations() const {
        return violations_;
    }
    const char* what() const noexcept override { return joined_.c_str(); }

private:
    std::vector<ConfigViolation> violations_;
    std::string joined_;
};

struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<unsigned long long> seed;
};

// A validated run: every field resolved, defaults applied, expressions
// compiled.  `resolved` is the canonical single-line JSON embedded into
// every artifact (math blocks plus seed; the output directory is run
// plumbing and deliberately excluded so artifact bytes do not depend on
// where they are written).
struct RunConfig {
    RunMode mode = RunMode::solve;

    Domain dom;
    double h = 0.0;
    int n_t = 0;
    int n_moll = 0;
    std::shared_ptr<const MonotoneGraph> graph;
    ProblemFields fields; // gamma filled from the target block
    double a_floor = 1.0;
    double sum_b_inf = 0.0;

    bool has_R = false;
    double R = 0.0;
    SpaceTimeFn control_field; // null when the control block has no f
    OptimizerConfig opt;
    double eps_coeff = 1e-3; // per-level target is eps_coeff * h

    SpaceTimeFn manufacture_source; // null unless target.manufacture_from
    bool has_gamma = false;

    std::vector<std::string> checks;
    int chain_depth = 1;
    int instances = 0; // randomized max-principle sweep size, 0 = configured
    StefanStudyConfig stefan;
    SpaceTimeFn manufactured_exact; // null unless verify.manufactured given

    // Compiled expression trees kept for symbolic derivatives (sup-bound
    // and energy data); null where the block was absent.
    std::vector<ExprPtr> b_exprs;
    ExprPtr r_expr, phi_expr;

    std::string out_dir = "out";
    unsigned long long seed = 0;
    std::string resolved;
};

RunConfig load_run_config(const std::string& text, RunMode mode,
                          const CliOverrides& overrides = {});
RunConfig load_run_config_file(const std::string& path, RunMode mode,
                               const CliOverrides& overrides = {});

struct RunOutcome {
    int exit_code = 0; // 0 iff every requested check passed
    std::string summary;
    std::vector<std::string> artifacts; // paths written
};

RunOutcome cmd_solve(const RunConfig& cfg);
RunOutcome cmd_optimize(const RunConfig& cfg);
RunOutcome cmd_verify(const RunConfig& cfg);
RunOutcome cmd_converge(const RunConfig& cfg);

// Machine-readable error shapes printed by the CLI on failure.
std::string violations_json(const std::vector<ConfigViolation>& violations);
std::string runtime_error_json(const std::string& name,
                               const std::string& message);

} // namespace stefan
