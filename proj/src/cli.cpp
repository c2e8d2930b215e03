#include "stefan/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "stefan/error.hpp"
#include "stefan/interpolate.hpp"

namespace stefan {

using json = nlohmann::ordered_json;

ConfigRejected::ConfigRejected(std::vector<ConfigViolation> violations)
    : violations_(std::move(violations)) {
    joined_ = "config rejected:";
    for (const ConfigViolation& v : violations_)
        joined_ += " [" + v.name + "] " + v.message;
}

namespace {

struct Collector {
    std::vector<ConfigViolation> errs;
    void fail(std::string name, std::string message) {
        errs.push_back({std::move(name), std::move(message)});
    }
    bool ok() const { return errs.empty(); }
};

const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where, Collector& c) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known)
            c.fail(where + ".unknown", "unrecognized key '" + item.key() + "'");
    }
}

bool finite_number(const json& j, double& out) {
    if (!j.is_number()) return false;
    out = j.get<double>();
    return std::isfinite(out);
}

// Error::what() repeats the name; violations carry the name separately.
std::string strip_name(const Error& e) {
    const std::string w = e.what();
    const std::string prefix = std::string(e.name()) + ": ";
    return w.rfind(prefix, 0) == 0 ? w.substr(prefix.size()) : w;
}

SpaceTimeFn fn_of(const ExprPtr& e) {
    return [e](std::span<const double> x, double t) { return eval(*e, x, t); };
}

SpatialFn spatial_of(const ExprPtr& e) {
    return [e](std::span<const double> x) { return eval(*e, x, 0.0); };
}

ExprPtr parse_one(const json& j, const std::string& name, int d,
                  Collector& c) {
    if (!j.is_string()) {
        c.fail(name, "expected an expression string");
        return nullptr;
    }
    try {
        return parse_expression(j.get<std::string>(), d);
    } catch (const Error& e) {
        c.fail(name, e.what());
        return nullptr;
    }
}

bool time_independent(const ExprPtr& e) {
    const ExprPtr dt = derivative(e, -1);
    return dt->kind == Expr::Kind::constant && dt->value == 0.0;
}

// Per-axis expression list: a single string applies to every axis.
std::vector<ExprPtr> parse_axis_list(const json& j, const std::string& name,
                                     int d, Collector& c,
                                     std::vector<std::string>& strs) {
    std::vector<ExprPtr> out;
    if (j.is_string()) {
        const ExprPtr e = parse_one(j, name, d, c);
        if (!e) return {};
        out.assign(static_cast<size_t>(d), e);
        strs.assign(static_cast<size_t>(d), j.get<std::string>());
        return out;
    }
    if (!j.is_array() || static_cast<int>(j.size()) != d) {
        c.fail(name, "expected one expression string or an array of " +
                         std::to_string(d));
        return {};
    }
    for (size_t i = 0; i < j.size(); ++i) {
        const ExprPtr e =
            parse_one(j[i], name + "[" + std::to_string(i) + "]", d, c);
        if (!e) return {};
        out.push_back(e);
        strs.push_back(j[i].get<std::string>());
    }
    return out;
}

std::shared_ptr<const MonotoneGraph> default_graph() {
    const PiecewiseLinear only{{-1000.0, 1000.0}, {-1000.0, 1000.0}};
    return std::make_shared<MonotoneGraph>(
        std::vector<double>{}, std::vector<double>{},
        std::vector<PiecewiseLinear>{only}, 1.0);
}

json default_graph_json() {
    json g;
    g["slope_floor"] = 1.0;
    g["breakpoints"] = json::array();
    g["jumps"] = json::array();
    json branch;
    branch["knots"] = {-1000.0, 1000.0};
    branch["values"] = {-1000.0, 1000.0};
    g["branches"] = json::array({branch});
    return g;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double sup_entries(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace

RunConfig load_run_config(const std::string& text, RunMode mode,
                          const CliOverrides& overrides) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigRejected(
            std::vector<ConfigViolation>{{"config.parse", e.what()}});
    }
    if (!root.is_object())
        throw ConfigRejected(std::vector<ConfigViolation>{
            {"config.parse", "top level must be an object"}});

    Collector c;
    check_keys(root,
               {"domain", "discretization", "graph", "coefficients", "control",
                "target", "verify", "output", "seed"},
               "config", c);

    RunConfig cfg;
    cfg.mode = mode;

    // domain
    int d = 0;
    if (const json* jd = find(root, "domain"); jd && jd->is_object()) {
        check_keys(*jd, {"box", "T"}, "domain", c);
        if (const json* jb = find(*jd, "box");
            jb && jb->is_array() && !jb->empty()) {
            bool good = true;
            for (const json& side : *jb) {
                double lo = 0.0, hi = 0.0;
                if (!side.is_array() || side.size() != 2 ||
                    !finite_number(side[0], lo) || !finite_number(side[1], hi) ||
                    !(lo < hi)) {
                    good = false;
                    break;
                }
                cfg.dom.box.push_back({lo, hi});
            }
            if (!good) {
                cfg.dom.box.clear();
                c.fail("domain.box",
                       "expected an array of [lo, hi] pairs with lo < hi");
            }
        } else {
            c.fail("domain.box", "required array of per-axis intervals");
        }
        double T = 0.0;
        if (const json* jt = find(*jd, "T"); jt && finite_number(*jt, T) &&
                                             T > 0.0)
            cfg.dom.T = T;
        else
            c.fail("domain.T", "required positive number");
    } else {
        c.fail("domain", "required object with box and T");
    }
    d = cfg.dom.dim();

    // discretization
    if (const json* jd = find(root, "discretization"); jd && jd->is_object()) {
        check_keys(*jd, {"h", "n_t", "mollification"}, "discretization", c);
        double h = 0.0;
        if (const json* jh = find(*jd, "h"); jh && finite_number(*jh, h) &&
                                             h > 0.0)
            cfg.h = h;
        else
            c.fail("discretization.h", "required positive number");
        if (const json* jn = find(*jd, "n_t");
            jn && jn->is_number_integer() && jn->get<long long>() >= 1)
            cfg.n_t = static_cast<int>(jn->get<long long>());
        else
            c.fail("discretization.n_t", "required integer >= 1");
        if (const json* jm = find(*jd, "mollification")) {
            if (jm->is_number_integer() && jm->get<long long>() >= 1)
                cfg.n_moll = static_cast<int>(jm->get<long long>());
            else
                c.fail("discretization.mollification", "integer >= 1");
        } else if (cfg.h > 0.0) {
            cfg.n_moll = static_cast<int>(std::ceil(1.0 / cfg.h));
        }
    } else {
        c.fail("discretization", "required object with h and n_t");
    }

    // graph
    json graph_res = default_graph_json();
    if (const json* jg = find(root, "graph"); jg && jg->is_object()) {
        check_keys(*jg, {"slope_floor", "breakpoints", "jumps", "branches"},
                   "graph", c);
        double floor = 0.0;
        std::vector<double> breakpoints, jumps;
        std::vector<PiecewiseLinear> branches;
        bool shape_ok = true;
        if (const json* jf = find(*jg, "slope_floor");
            !(jf && finite_number(*jf, floor) && floor > 0.0)) {
            c.fail("graph.slope_floor", "required positive number");
            shape_ok = false;
        }
        auto read_numbers = [&](const json* arr, const char* name,
                                std::vector<double>& out) {
            if (!arr || !arr->is_array()) {
                c.fail(name, "required array of numbers");
                return false;
            }
            for (const json& v : *arr) {
                double x = 0.0;
                if (!finite_number(v, x)) {
                    c.fail(name, "entries must be finite numbers");
                    return false;
                }
                out.push_back(x);
            }
            return true;
        };
        shape_ok &= read_numbers(find(*jg, "breakpoints"), "graph.breakpoints",
                                 breakpoints);
        shape_ok &= read_numbers(find(*jg, "jumps"), "graph.jumps", jumps);
        if (const json* jb = find(*jg, "branches"); jb && jb->is_array()) {
            for (size_t i = 0; i < jb->size(); ++i) {
                const json& br = (*jb)[i];
                const std::string name =
                    "graph.branches[" + std::to_string(i) + "]";
                PiecewiseLinear pl;
                if (!br.is_object() ||
                    !read_numbers(find(br, "knots"), name.c_str(), pl.knots) ||
                    !read_numbers(find(br, "values"), name.c_str(),
                                  pl.values)) {
                    c.fail(name, "expected { knots: [...], values: [...] }");
                    shape_ok = false;
                    break;
                }
                branches.push_back(std::move(pl));
            }
        } else {
            c.fail("graph.branches", "required array of branch objects");
            shape_ok = false;
        }
        if (shape_ok) {
            try {
                cfg.graph = std::make_shared<MonotoneGraph>(
                    breakpoints, jumps, branches, floor);
                graph_res = *jg;
            } catch (const Error& e) {
                c.fail(e.name(), strip_name(e));
            }
        }
    } else if (jg) {
        c.fail("graph", "must be an object");
    }
    if (!cfg.graph && c.ok()) cfg.graph = default_graph();
    if (!cfg.graph) cfg.graph = default_graph(); // placeholder past failures

    // coefficients
    json coeff_res;
    std::vector<std::string> a_strs, b_strs, c_strs;
    std::string r_str, f_str, phi_str;
    bool has_a = false, has_b = false, has_coeff_f = false;
    if (const json* jc = find(root, "coefficients"); jc && d >= 1) {
        if (!jc->is_object()) {
            c.fail("coefficients", "must be an object");
        } else {
            check_keys(*jc,
                       {"a", "b", "c", "r", "f", "phi", "a_floor",
                        "sum_b_inf"},
                       "coefficients", c);
            if (const json* ja = find(*jc, "a")) {
                has_a = true;
                std::vector<ExprPtr> axs =
                    parse_axis_list(*ja, "coefficients.a", d, c, a_strs);
                for (const ExprPtr& e : axs) cfg.fields.a.push_back(fn_of(e));
            }
            if (const json* jb = find(*jc, "b")) {
                has_b = true;
                cfg.b_exprs =
                    parse_axis_list(*jb, "coefficients.b", d, c, b_strs);
                for (const ExprPtr& e : cfg.b_exprs)
                    cfg.fields.b.push_back(fn_of(e));
            }
            if (const json* jcc = find(*jc, "c")) {
                std::vector<ExprPtr> cxs =
                    parse_axis_list(*jcc, "coefficients.c", d, c, c_strs);
                for (const ExprPtr& e : cxs) cfg.fields.c.push_back(fn_of(e));
            }
            if (const json* jr = find(*jc, "r")) {
                cfg.r_expr = parse_one(*jr, "coefficients.r", d, c);
                if (cfg.r_expr) {
                    cfg.fields.r = fn_of(cfg.r_expr);
                    r_str = jr->get<std::string>();
                }
            }
            if (const json* jf = find(*jc, "f")) {
                const ExprPtr e = parse_one(*jf, "coefficients.f", d, c);
                if (e) {
                    cfg.fields.f = fn_of(e);
                    f_str = jf->get<std::string>();
                    has_coeff_f = true;
                }
            }
            if (const json* jp = find(*jc, "phi")) {
                cfg.phi_expr = parse_one(*jp, "coefficients.phi", d, c);
                if (cfg.phi_expr && !time_independent(cfg.phi_expr)) {
                    c.fail("coefficients.phi", "may not depend on t");
                    cfg.phi_expr = nullptr;
                }
                if (cfg.phi_expr) {
                    cfg.fields.phi = spatial_of(cfg.phi_expr);
                    phi_str = jp->get<std::string>();
                }
            }
            if (const json* jaf = find(*jc, "a_floor")) {
                double af = 0.0;
                if (finite_number(*jaf, af) && af > 0.0)
                    cfg.a_floor = af;
                else
                    c.fail("coefficients.a_floor", "must be a positive number");
            } else if (has_a) {
                c.fail("coefficients.a_floor",
                       "required when a is given: a positive lower bound for "
                       "every diffusion coefficient");
            }
            if (const json* jsb = find(*jc, "sum_b_inf")) {
                double sb = 0.0;
                if (finite_number(*jsb, sb) && sb >= 0.0)
                    cfg.sum_b_inf = sb;
                else
                    c.fail("coefficients.sum_b_inf",
                           "must be a nonnegative number");
            } else if (has_b) {
                c.fail("coefficients.sum_b_inf",
                       "required when b is given: the sum over axes of "
                       "sup |b_i|");
            }
        }
    }
    if (!has_a && d >= 1) {
        cfg.fields.a.assign(
            static_cast<size_t>(d),
            [](std::span<const double>, double) { return 1.0; });
        a_strs.assign(static_cast<size_t>(d), "1");
    }
    coeff_res["a"] = a_strs;
    if (!b_strs.empty()) coeff_res["b"] = b_strs;
    if (!c_strs.empty()) coeff_res["c"] = c_strs;
    if (!r_str.empty()) coeff_res["r"] = r_str;
    if (!f_str.empty()) coeff_res["f"] = f_str;
    if (!phi_str.empty()) coeff_res["phi"] = phi_str;
    coeff_res["a_floor"] = cfg.a_floor;
    coeff_res["sum_b_inf"] = cfg.sum_b_inf;

    // step-ratio and divisibility, with the canonical messages
    if (d >= 1 && cfg.dom.T > 0.0 && cfg.h > 0.0 && cfg.n_t >= 1) {
        try {
            build_discretization(cfg.dom, cfg.h, cfg.n_t,
                                 CoeffNorms{cfg.sum_b_inf,
                                            cfg.graph->slope_floor()});
        } catch (const Error& e) {
            c.fail(e.name(), strip_name(e));
        }
    }

    // control
    json control_res;
    std::string control_f_str, manufacture_str, gamma_str;
    if (const json* jc = find(root, "control")) {
        if (!jc->is_object()) {
            c.fail("control", "must be an object");
        } else {
            check_keys(*jc,
                       {"R", "f", "epsilon", "max_outer", "fd_step",
                        "step_init", "backtrack", "step_min", "growth",
                        "epsilon_coefficient"},
                       "control", c);
            if (const json* jr = find(*jc, "R")) {
                double R = 0.0;
                if (finite_number(*jr, R) && R >= 0.0) {
                    cfg.has_R = true;
                    cfg.R = R;
                } else {
                    c.fail("control.R", "must be a nonnegative number");
                }
            }
            if (const json* jf = find(*jc, "f"); jf && d >= 1) {
                if (has_coeff_f)
                    c.fail("control.f", "give the source either as "
                                        "coefficients.f or control.f, not "
                                        "both");
                const ExprPtr e = parse_one(*jf, "control.f", d, c);
                if (e) {
                    cfg.control_field = fn_of(e);
                    control_f_str = jf->get<std::string>();
                }
            }
            auto opt_number = [&](const char* key, double& slot, bool positive,
                                  const char* what) {
                if (const json* j = find(*jc, key)) {
                    double v = 0.0;
                    if (finite_number(*j, v) && (positive ? v > 0.0 : v >= 0.0))
                        slot = v;
                    else
                        c.fail(std::string("control.") + key, what);
                }
            };
            opt_number("epsilon", cfg.opt.epsilon, true,
                       "must be a positive number");
            opt_number("fd_step", cfg.opt.fd_step, false,
                       "must be a nonnegative number");
            opt_number("step_init", cfg.opt.step_init, true,
                       "must be a positive number");
            opt_number("step_min", cfg.opt.step_min, true,
                       "must be a positive number");
            opt_number("epsilon_coefficient", cfg.eps_coeff, true,
                       "must be a positive number");
            if (const json* j = find(*jc, "backtrack")) {
                double v = 0.0;
                if (finite_number(*j, v) && v > 0.0 && v < 1.0)
                    cfg.opt.backtrack = v;
                else
                    c.fail("control.backtrack", "must lie in (0, 1)");
            }
            if (const json* j = find(*jc, "growth")) {
                double v = 0.0;
                if (finite_number(*j, v) && v >= 1.0)
                    cfg.opt.growth = v;
                else
                    c.fail("control.growth", "must be at least 1");
            }
            if (const json* j = find(*jc, "max_outer")) {
                if (j->is_number_integer() && j->get<long long>() >= 1)
                    cfg.opt.max_outer = static_cast<int>(j->get<long long>());
                else
                    c.fail("control.max_outer", "required integer >= 1");
            }
        }
    }

    // target
    if (const json* jt = find(root, "target")) {
        if (!jt->is_object()) {
            c.fail("target", "must be an object");
        } else {
            check_keys(*jt, {"gamma", "manufacture_from"}, "target", c);
            const json* jg = find(*jt, "gamma");
            const json* jm = find(*jt, "manufacture_from");
            if (jg && jm)
                c.fail("target",
                       "give either gamma or manufacture_from, not both");
            if (jg && !jm && d >= 1) {
                const ExprPtr e = parse_one(*jg, "target.gamma", d, c);
                if (e && !time_independent(e))
                    c.fail("target.gamma", "may not depend on t");
                else if (e) {
                    cfg.fields.gamma = spatial_of(e);
                    cfg.has_gamma = true;
                    gamma_str = jg->get<std::string>();
                }
            }
            if (jm && !jg && d >= 1) {
                const ExprPtr e =
                    parse_one(*jm, "target.manufacture_from", d, c);
                if (e) {
                    cfg.manufacture_source = fn_of(e);
                    manufacture_str = jm->get<std::string>();
                }
            }
        }
    }

    // verify
    json stefan_res, manufactured_res;
    std::string exact_str;
    if (const json* jv = find(root, "verify")) {
        if (!jv->is_object()) {
            c.fail("verify", "must be an object");
        } else {
            check_keys(
                *jv,
                {"checks", "chain_depth", "instances", "manufactured",
                 "stefan"},
                "verify", c);
            if (const json* jc2 = find(*jv, "checks")) {
                if (!jc2->is_array()) {
                    c.fail("verify.checks", "must be an array of check names");
                } else {
                    for (const json& name : *jc2) {
                        const std::string s =
                            name.is_string() ? name.get<std::string>() : "";
                        if (s == "max_principle" || s == "energy" ||
                            s == "manufactured" || s == "stefan")
                            cfg.checks.push_back(s);
                        else
                            c.fail("verify.checks",
                                   "unknown check '" + s +
                                       "' (max_principle, energy, "
                                       "manufactured, stefan)");
                    }
                }
            }
            if (const json* j = find(*jv, "chain_depth")) {
                if (j->is_number_integer() && j->get<long long>() >= 1)
                    cfg.chain_depth = static_cast<int>(j->get<long long>());
                else
                    c.fail("verify.chain_depth", "required integer >= 1");
            } else {
                cfg.chain_depth = 3;
            }
            if (const json* j = find(*jv, "instances")) {
                if (j->is_number_integer() && j->get<long long>() >= 0)
                    cfg.instances = static_cast<int>(j->get<long long>());
                else
                    c.fail("verify.instances", "required integer >= 0");
            }
            if (const json* j = find(*jv, "manufactured")) {
                if (!j->is_object() || !find(*j, "exact")) {
                    c.fail("verify.manufactured",
                           "must be an object with an exact expression");
                } else {
                    check_keys(*j, {"exact"}, "verify.manufactured", c);
                    const ExprPtr e = parse_one(*find(*j, "exact"),
                                                "verify.manufactured.exact", d,
                                                c);
                    if (e) {
                        cfg.manufactured_exact = fn_of(e);
                        exact_str = find(*j, "exact")->get<std::string>();
                        manufactured_res["exact"] = exact_str;
                    }
                }
            }
            if (const json* j = find(*jv, "stefan")) {
                if (!j->is_object()) {
                    c.fail("verify.stefan", "must be an object");
                } else {
                    check_keys(*j,
                               {"D_l", "D_s", "V_L", "V_S", "nu", "L", "t0",
                                "T", "moll_base", "graph_span"},
                               "verify.stefan", c);
                    auto num = [&](const char* key, double& slot) {
                        if (const json* v = find(*j, key)) {
                            double x = 0.0;
                            if (finite_number(*v, x))
                                slot = x;
                            else
                                c.fail(std::string("verify.stefan.") + key,
                                       "must be a finite number");
                        }
                    };
                    num("D_l", cfg.stefan.params.D_l);
                    num("D_s", cfg.stefan.params.D_s);
                    num("V_L", cfg.stefan.params.V_L);
                    num("V_S", cfg.stefan.params.V_S);
                    num("nu", cfg.stefan.params.nu);
                    num("L", cfg.stefan.L);
                    num("t0", cfg.stefan.t0);
                    num("T", cfg.stefan.T);
                    num("moll_base", cfg.stefan.moll_base);
                    num("graph_span", cfg.stefan.graph_span);
                    if (!(cfg.stefan.params.D_l > 0.0 &&
                          cfg.stefan.params.D_s > 0.0 &&
                          cfg.stefan.params.V_L >= 0.0 &&
                          cfg.stefan.params.V_S <= 0.0 &&
                          cfg.stefan.params.nu >= 0.0))
                        c.fail("verify.stefan",
                               "needs positive diffusivities, a warm liquid "
                               "side, a cold solid side, and nonnegative nu");
                    if (!(cfg.stefan.L > 0.0 && cfg.stefan.t0 > 0.0 &&
                          cfg.stefan.T > 0.0 && cfg.stefan.moll_base > 0.0 &&
                          cfg.stefan.graph_span > 0.0))
                        c.fail("verify.stefan",
                               "L, t0, T, moll_base, graph_span must be "
                               "positive");
                    stefan_res = *j;
                }
            }
        }
    }

    // output and seed
    if (const json* jo = find(root, "output")) {
        if (jo->is_string())
            cfg.out_dir = jo->get<std::string>();
        else
            c.fail("output", "must be a string");
    }
    if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
    if (const json* js = find(root, "seed")) {
        if (js->is_number_integer() && js->get<long long>() >= 0)
            cfg.seed = js->get<unsigned long long>();
        else
            c.fail("seed", "must be a nonnegative integer");
    }
    if (overrides.seed) cfg.seed = *overrides.seed;
    cfg.opt.seed = cfg.seed;

    // mode requirements
    const bool has_target = cfg.has_gamma || bool(cfg.manufacture_source);
    if (mode == RunMode::optimize && !has_target)
        c.fail("target",
               "optimize needs target.gamma or target.manufacture_from");
    if (mode == RunMode::converge && !has_target && !cfg.control_field)
        c.fail("converge", "needs control.f for the functional gap or a "
                           "target block for the certificate");
    if (mode == RunMode::verify) {
        if (cfg.checks.empty())
            c.fail("verify.checks", "at least one check is required");
        for (const std::string& s : cfg.checks) {
            if (s == "manufactured" && !cfg.manufactured_exact)
                c.fail("verify.manufactured",
                       "the manufactured check needs an exact expression");
            if (s == "stefan" && d != 1)
                c.fail("verify.stefan", "needs a one-dimensional domain");
            if (s == "max_principle" && cfg.instances > 0 && d > 3)
                c.fail("verify.instances",
                       "randomized sweeps cover d in {1, 2, 3}");
        }
    }
    if ((mode == RunMode::optimize ||
         (mode == RunMode::converge && has_target)) &&
        !cfg.has_R) {
        cfg.has_R = true;
        cfg.R = 1.0;
    }

    if (!c.ok()) throw ConfigRejected(std::move(c.errs));

    // canonical resolved config (excludes the output directory)
    json res;
    json dres;
    dres["box"] = json::array();
    for (const auto& side : cfg.dom.box)
        dres["box"].push_back({side[0], side[1]});
    dres["T"] = cfg.dom.T;
    res["domain"] = dres;
    res["discretization"] = {
        {"h", cfg.h}, {"n_t", cfg.n_t}, {"mollification", cfg.n_moll}};
    res["graph"] = graph_res;
    res["coefficients"] = coeff_res;
    if (cfg.has_R || cfg.control_field || mode == RunMode::optimize ||
        mode == RunMode::converge) {
        control_res["R"] = cfg.has_R ? json(cfg.R) : json("auto");
        if (!control_f_str.empty()) control_res["f"] = control_f_str;
        if (mode == RunMode::optimize || mode == RunMode::converge) {
            control_res["epsilon"] = cfg.opt.epsilon;
            control_res["max_outer"] = cfg.opt.max_outer;
            control_res["fd_step"] = cfg.opt.fd_step;
            control_res["step_init"] = cfg.opt.step_init;
            control_res["backtrack"] = cfg.opt.backtrack;
            control_res["step_min"] = cfg.opt.step_min;
            control_res["growth"] = cfg.opt.growth;
            control_res["epsilon_coefficient"] = cfg.eps_coeff;
        }
        res["control"] = control_res;
    }
    if (has_target) {
        json t;
        if (cfg.has_gamma) t["gamma"] = gamma_str;
        if (cfg.manufacture_source) t["manufacture_from"] = manufacture_str;
        res["target"] = t;
    }
    if (mode == RunMode::verify || mode == RunMode::converge) {
        json v;
        v["checks"] = cfg.checks;
        v["chain_depth"] = cfg.chain_depth;
        v["instances"] = cfg.instances;
        if (!manufactured_res.is_null()) v["manufactured"] = manufactured_res;
        if (!stefan_res.is_null()) v["stefan"] = stefan_res;
        res["verify"] = v;
    }
    res["seed"] = cfg.seed;
    cfg.resolved = res.dump();
    return cfg;
}

RunConfig load_run_config_file(const std::string& path, RunMode mode,
                               const CliOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigRejected(std::vector<ConfigViolation>{
            {"config.path", "cannot read " + path}});
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_run_config(buf.str(), mode, overrides);
}

namespace {

StateProblem as_problem(const SolveContext& ctx) {
    return StateProblem{ctx.grid, ctx.graph, ctx.coeff, ctx.shift};
}

SolveContext context_at(const RunConfig& cfg, double h, int n_t) {
    return make_context(cfg.dom, cfg.fields, *cfg.graph, cfg.n_moll,
                        cfg.a_floor, h, n_t, cfg.sum_b_inf);
}

std::vector<GridLevel> chain_of(const RunConfig& cfg) {
    std::vector<GridLevel> levels;
    double h = cfg.h;
    int n_t = cfg.n_t;
    for (int j = 0; j < cfg.chain_depth; ++j) {
        levels.push_back({h, n_t});
        h /= 2.0;
        n_t *= 2;
    }
    return levels;
}

ControlVector control_on(const RunConfig& cfg, const Discretization& grid) {
    ControlVector cv = discretize_Q(cfg.control_field, grid, cfg.R);
    if (!cfg.has_R) cv.R = cv.linf();
    return cv;
}

// The configured forward problem: the source comes from control.f when
// given, otherwise from coefficients.f.
StateProblem problem_for(const RunConfig& cfg, const SolveContext& ctx) {
    StateProblem sp = as_problem(ctx);
    if (cfg.control_field) {
        const ControlVector cv = control_on(cfg, *ctx.grid);
        validate_control(cv, *ctx.grid);
        sp.coeff.f = cv.values;
    }
    return sp;
}

std::vector<std::string> header_lines(const RunConfig& cfg) {
    return {"config " + cfg.resolved, "seed " + std::to_string(cfg.seed)};
}

std::ofstream open_artifact(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("io", "cannot open " + path + " for writing");
    return out;
}

void write_headers(std::ofstream& out, const RunConfig& cfg) {
    for (const std::string& line : header_lines(cfg)) out << "# " << line << '\n';
}

void write_json_artifact(const std::string& path, const json& body) {
    std::ofstream out = open_artifact(path);
    out << body.dump(2) << '\n';
    if (!out)
        throw Error("io", "failed writing " + path);
}

json config_obj(const RunConfig& cfg) { return json::parse(cfg.resolved); }

std::string artifact_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

json report_json(const BoundReport& r) {
    json j;
    j["name"] = r.name;
    j["left"] = r.left;
    j["right"] = r.right;
    j["slack"] = r.slack;
    j["margin"] = r.margin;
    j["pass"] = r.pass;
    j["instance"] = r.instance;
    j["seed"] = r.seed;
    return j;
}

double sup_spatial_of_expr(const ExprPtr& e, const Domain& dom) {
    if (!e) return 0.0;
    return sup_norm(fn_of(e), dom);
}

SupBoundData configured_bound_data(const RunConfig& cfg) {
    SupBoundData data;
    for (size_t i = 0; i < cfg.b_exprs.size(); ++i)
        data.sum_b_x_inf += sup_spatial_of_expr(
            derivative(cfg.b_exprs[i], static_cast<int>(i)), cfg.dom);
    data.r_inf = sup_spatial_of_expr(cfg.r_expr, cfg.dom);
    data.phi_inf = sup_spatial_of_expr(cfg.phi_expr, cfg.dom);
    return data;
}

} // namespace

RunOutcome cmd_solve(const RunConfig& cfg) {
    const SolveContext ctx = context_at(cfg, cfg.h, cfg.n_t);
    SolverOptions opts;
    opts.record_updates = true;
    const StateProblem sp = problem_for(cfg, ctx);
    const DiscreteState state = solve_state(sp, opts);
    const Discretization& grid = *ctx.grid;

    RunOutcome out;
    const std::string traj = artifact_path(cfg, "trajectory.csv");
    {
        std::ofstream f = open_artifact(traj);
        write_headers(f, cfg);
        f << 'k';
        for (int i = 1; i <= grid.dim(); ++i) f << ",i" << i;
        f << ",v\n";
        std::vector<int> multi(static_cast<size_t>(grid.dim()));
        for (int k = 0; k <= grid.n_t(); ++k)
            for (long nd = 0; nd < grid.node_count(); ++nd) {
                grid.node_multi(nd, multi.data());
                f << k;
                for (int m : multi) f << ',' << m;
                f << ','
                  << fmt17(
                         state.v[static_cast<size_t>(k)][static_cast<size_t>(
                             nd)])
                  << '\n';
            }
        if (!f)
            throw Error("io", "failed writing " + traj);
    }
    out.artifacts.push_back(traj);

    json diag;
    diag["config"] = config_obj(cfg);
    diag["seed"] = cfg.seed;
    diag["delta"] = state.delta;
    diag["steps"] = json::array();
    for (const StepDiagnostics& st : state.steps) {
        json s;
        s["k"] = st.k;
        s["sweeps"] = st.sweeps;
        s["first_update"] = st.first_update;
        s["last_update"] = st.last_update;
        s["max_ratio"] = st.max_ratio;
        s["residual"] = st.residual;
        s["zeta_min"] = st.zeta_min;
        s["updates"] = st.updates;
        diag["steps"].push_back(std::move(s));
    }
    const std::string diag_path = artifact_path(cfg, "diagnostics.json");
    write_json_artifact(diag_path, diag);
    out.artifacts.push_back(diag_path);

    const DiscreteNorms norms = discrete_norms(state);
    const SpaceTimeFn zero = [](std::span<const double>, double) {
        return 0.0;
    };
    json nj;
    nj["config"] = config_obj(cfg);
    nj["seed"] = cfg.seed;
    nj["norms"] = {{"linf", norms.linf},
                   {"l2", l2_error_vs(state, zero)},
                   {"time_diff_sq", norms.time_diff_sq},
                   {"grad_max_sq", norms.grad_max_sq},
                   {"grad_max_all_sq", norms.grad_max_all_sq},
                   {"cross_diff_sq", norms.cross_diff_sq}};
    const std::string norms_path = artifact_path(cfg, "norms.json");
    write_json_artifact(norms_path, nj);
    out.artifacts.push_back(norms_path);

    out.summary = "solve: " + std::to_string(grid.node_count()) + " nodes x " +
                  std::to_string(grid.n_t()) + " steps, linf " +
                  fmt17(norms.linf) + ", delta " + fmt17(state.delta);
    return out;
}

RunOutcome cmd_optimize(const RunConfig& cfg) {
    SolveContext ctx = context_at(cfg, cfg.h, cfg.n_t);
    if (cfg.manufacture_source) {
        ControlVector star = discretize_Q(cfg.manufacture_source, *ctx.grid,
                                          cfg.R);
        const DiscreteState st = solve_with_control(ctx, star);
        ctx.coeff.gamma = st.v.back();
    }
    OptimizerConfig opt = cfg.opt;
    opt.R = cfg.R;
    const DescentResult res = projected_descent(ctx, opt);

    RunOutcome out;
    const std::string control_path = artifact_path(cfg, "control.csv");
    write_control_csv(control_path, res.control, *ctx.grid,
                      header_lines(cfg));
    out.artifacts.push_back(control_path);

    json tj;
    tj["config"] = config_obj(cfg);
    tj["seed"] = cfg.seed;
    json trace;
    trace["cost_history"] = res.trace.cost_history;
    trace["steps"] = json::array();
    for (const StepRecord& s : res.trace.steps)
        trace["steps"].push_back({{"outer", s.outer},
                                  {"step", s.step},
                                  {"cost", s.cost},
                                  {"accepted", s.accepted}});
    trace["gradient_solves"] = res.trace.gradient_solves;
    trace["flagged_probes"] = res.trace.flagged_probes;
    trace["final_cost"] = res.trace.final_cost;
    trace["lower_reference"] = res.trace.lower_reference;
    trace["certified"] = res.trace.certified;
    trace["stop_reason"] = res.trace.stop_reason;
    tj["trace"] = trace;
    const std::string trace_path = artifact_path(cfg, "trace.json");
    write_json_artifact(trace_path, tj);
    out.artifacts.push_back(trace_path);

    out.summary = "optimize: final cost " + fmt17(res.trace.final_cost) +
                  " after " +
                  std::to_string(res.trace.cost_history.size() - 1) +
                  " accepted steps (" + res.trace.stop_reason + ")" +
                  (res.trace.certified ? ", certified" : "");
    return out;
}

RunOutcome cmd_verify(const RunConfig& cfg) {
    RunOutcome out;
    json reports = json::array();
    json checks_json = json::array();
    std::vector<std::string> fragments;
    bool all_pass = true;
    const std::vector<GridLevel> levels = chain_of(cfg);

    for (const std::string& check : cfg.checks) {
        if (check == "max_principle") {
            int passed = 0, total = 0;
            if (cfg.instances <= 0) {
                const SolveContext ctx = context_at(cfg, cfg.h, cfg.n_t);
                const StateProblem sp = problem_for(cfg, ctx);
                const DiscreteState state = solve_state(sp);
                SupBoundData data = configured_bound_data(cfg);
                const BoundReport rep = check_max_principle(
                    state, sp, data, "configured instance", cfg.seed);
                reports.push_back(report_json(rep));
                total = 1;
                passed = rep.pass ? 1 : 0;
            } else {
                total = cfg.instances;
                for (int i = 0; i < cfg.instances; ++i) {
                    const SweepInstance inst = random_bound_instance(
                        cfg.seed + static_cast<unsigned long long>(i),
                        cfg.dom.dim());
                    const StateProblem sp = as_problem(inst.ctx);
                    const DiscreteState state = solve_state(sp);
                    const BoundReport rep = check_max_principle(
                        state, sp, inst.data, inst.descriptor,
                        cfg.seed + static_cast<unsigned long long>(i));
                    reports.push_back(report_json(rep));
                    if (rep.pass) ++passed;
                }
            }
            const bool ok = passed == total;
            all_pass &= ok;
            checks_json.push_back({{"name", "max_principle"},
                                   {"pass", ok},
                                   {"passed", passed},
                                   {"total", total}});
            fragments.push_back("max_principle " + std::to_string(passed) +
                                "/" + std::to_string(total) + " pass");
        } else if (check == "energy") {
            double phi_inf = sup_spatial_of_expr(cfg.phi_expr, cfg.dom);
            double dphi_l2 = 0.0;
            if (cfg.phi_expr) {
                const Discretization fine = build_discretization(
                    cfg.dom, levels.back().h, levels.back().n_t,
                    CoeffNorms{cfg.sum_b_inf, cfg.graph->slope_floor()});
                double acc = 0.0;
                for (int i = 0; i < cfg.dom.dim(); ++i) {
                    const double nrm = l2_spatial(
                        spatial_of(derivative(cfg.phi_expr, i)), fine);
                    acc += nrm * nrm;
                }
                dphi_l2 = std::sqrt(acc);
            }
            std::vector<EnergyReport> reps;
            json constants = json::array();
            for (const GridLevel& lvl : levels) {
                const SolveContext ctx = context_at(cfg, lvl.h, lvl.n_t);
                const StateProblem sp = problem_for(cfg, ctx);
                const DiscreteState state = solve_state(sp);
                reps.push_back(check_energy(
                    state, EnergyData{phi_inf, dphi_l2, sup_entries(sp.coeff.f)},
                    "h " + fmt17(lvl.h), cfg.seed));
                reports.push_back(report_json(reps.back().bound));
                constants.push_back(reps.back().implied_constant);
            }
            const BoundReport chain = energy_chain_report(reps);
            reports.push_back(report_json(chain));
            all_pass &= chain.pass;
            checks_json.push_back({{"name", "energy"},
                                   {"pass", chain.pass},
                                   {"constants", constants}});
            fragments.push_back(std::string("energy chain ") +
                                (chain.pass ? "pass" : "fail"));
        } else if (check == "manufactured") {
            const ManufacturedCase mc{cfg.dom,     cfg.fields,
                                      *cfg.graph,  cfg.n_moll,
                                      cfg.a_floor, cfg.sum_b_inf,
                                      cfg.manufactured_exact};
            const std::vector<StudyRow> rows =
                manufactured_solution_study(mc, levels);
            const std::string csv =
                artifact_path(cfg, "study_manufactured.csv");
            {
                std::ofstream f = open_artifact(csv);
                write_headers(f, cfg);
                f << "h,n_t,error,ratio\n";
                for (size_t i = 0; i < rows.size(); ++i) {
                    f << fmt17(rows[i].h) << ',' << rows[i].n_t << ','
                      << fmt17(rows[i].error) << ',';
                    if (i > 0) f << fmt17(rows[i].ratio);
                    f << '\n';
                }
            }
            out.artifacts.push_back(csv);
            bool ok = true;
            json rows_json = json::array();
            for (size_t i = 0; i < rows.size(); ++i) {
                if (i > 0 && !(rows[i].error < rows[i - 1].error)) ok = false;
                rows_json.push_back({{"h", rows[i].h},
                                     {"n_t", rows[i].n_t},
                                     {"error", rows[i].error},
                                     {"ratio", rows[i].ratio}});
            }
            all_pass &= ok;
            checks_json.push_back(
                {{"name", "manufactured"}, {"pass", ok}, {"rows", rows_json}});
            fragments.push_back(std::string("manufactured errors ") +
                                (ok ? "decreasing" : "not decreasing"));
        } else if (check == "stefan") {
            const std::vector<StefanStudyRow> rows =
                stefan_convergence_study(cfg.stefan, levels);
            const std::string csv = artifact_path(cfg, "study_stefan.csv");
            {
                std::ofstream f = open_artifact(csv);
                write_headers(f, cfg);
                f << "h,n_t,n_moll,l2_error,l2_relative,interface_error\n";
                for (const StefanStudyRow& r : rows)
                    f << fmt17(r.h) << ',' << r.n_t << ',' << r.n_moll << ','
                      << fmt17(r.l2_error) << ',' << fmt17(r.l2_relative)
                      << ',' << fmt17(r.interface_error) << '\n';
            }
            out.artifacts.push_back(csv);
            bool ok = true;
            json rows_json = json::array();
            for (size_t i = 0; i < rows.size(); ++i) {
                if (i > 0 && !(rows[i].l2_error < rows[i - 1].l2_error &&
                               rows[i].interface_error <
                                   rows[i - 1].interface_error))
                    ok = false;
                rows_json.push_back(
                    {{"h", rows[i].h},
                     {"n_t", rows[i].n_t},
                     {"n_moll", rows[i].n_moll},
                     {"l2_error", rows[i].l2_error},
                     {"l2_relative", rows[i].l2_relative},
                     {"interface_error", rows[i].interface_error}});
            }
            all_pass &= ok;
            checks_json.push_back(
                {{"name", "stefan"}, {"pass", ok}, {"rows", rows_json}});
            fragments.push_back(std::string("stefan errors ") +
                                (ok ? "decreasing" : "not decreasing"));
        }
    }

    json rj;
    rj["config"] = config_obj(cfg);
    rj["seed"] = cfg.seed;
    rj["checks"] = checks_json;
    rj["reports"] = reports;
    rj["all_pass"] = all_pass;
    const std::string reports_path = artifact_path(cfg, "reports.json");
    write_json_artifact(reports_path, rj);
    out.artifacts.push_back(reports_path);

    int n_pass = 0;
    for (const json& chk : checks_json)
        if (chk["pass"].get<bool>()) ++n_pass;
    std::string summary = "verify:";
    for (const std::string& frag : fragments) summary += " " + frag + ";";
    summary += " " + std::to_string(n_pass) + "/" +
               std::to_string(checks_json.size()) + " checks pass";
    out.summary = summary;
    out.exit_code = all_pass ? 0 : 1;
    return out;
}

RunOutcome cmd_converge(const RunConfig& cfg) {
    RunOutcome out;
    std::vector<std::string> fragments;
    bool all_pass = true;
    const std::vector<GridLevel> levels = chain_of(cfg);

    if (cfg.control_field) {
        std::vector<double> costs, gaps;
        for (const GridLevel& lvl : levels) {
            const SolveContext ctx = context_at(cfg, lvl.h, lvl.n_t);
            ControlVector cv = control_on(cfg, *ctx.grid);
            costs.push_back(cost_of_control(ctx, cv));
        }
        const SolveContext fine =
            context_at(cfg, levels.back().h / 4.0, levels.back().n_t * 4);
        const double reference =
            cost_continuous_reference(fine, cfg.control_field);
        for (double cost : costs) gaps.push_back(std::abs(cost - reference));

        const std::string csv = artifact_path(cfg, "functional_gap.csv");
        {
            std::ofstream f = open_artifact(csv);
            write_headers(f, cfg);
            f << "h,n_t,cost,reference,gap,ratio\n";
            for (size_t i = 0; i < levels.size(); ++i) {
                f << fmt17(levels[i].h) << ',' << levels[i].n_t << ','
                  << fmt17(costs[i]) << ',' << fmt17(reference) << ','
                  << fmt17(gaps[i]) << ',';
                if (i > 0 && gaps[i] > 0.0)
                    f << fmt17(gaps[i - 1] / gaps[i]);
                f << '\n';
            }
        }
        out.artifacts.push_back(csv);

        bool ok = true;
        for (size_t i = 1; i < gaps.size(); ++i)
            if (!(gaps[i] <= gaps[i - 1] * (1.0 + 1e-9) + 1e-15)) ok = false;
        all_pass &= ok;
        fragments.push_back("functional gap " + fmt17(gaps.front()) + " -> " +
                            fmt17(gaps.back()) +
                            (ok ? " non-increasing" : " increasing"));
    }

    if (cfg.has_gamma || cfg.manufacture_source) {
        const ChainProblem prob{cfg.dom,     cfg.fields,
                                *cfg.graph,  cfg.n_moll,
                                cfg.a_floor, cfg.sum_b_inf,
                                cfg.manufacture_source};
        OptimizerConfig opt = cfg.opt;
        opt.R = cfg.R;
        const std::vector<CertificateRow> rows =
            epsilon_certificate(prob, levels, opt, cfg.eps_coeff);
        const std::string csv = artifact_path(cfg, "certificate.csv");
        {
            std::ofstream f = open_artifact(csv);
            write_headers(f, cfg);
            f << "h,n_t,epsilon,cost,surrogate,certified\n";
            for (const CertificateRow& r : rows)
                f << fmt17(r.h) << ',' << r.n_t << ',' << fmt17(r.epsilon)
                  << ',' << fmt17(r.cost) << ',' << fmt17(r.surrogate) << ','
                  << (r.certified ? 1 : 0) << '\n';
        }
        out.artifacts.push_back(csv);

        int certified = 0;
        for (const CertificateRow& r : rows)
            if (r.certified) ++certified;
        const bool ok = certified == static_cast<int>(rows.size());
        all_pass &= ok;
        fragments.push_back("certificate " + std::to_string(certified) + "/" +
                            std::to_string(rows.size()) + " certified");
    }

    std::string summary = "converge:";
    for (const std::string& frag : fragments) summary += " " + frag + ";";
    summary.pop_back();
    out.summary = summary;
    out.exit_code = all_pass ? 0 : 1;
    return out;
}

std::string violations_json(const std::vector<ConfigViolation>& violations) {
    json j;
    j["error"] = "config";
    j["violations"] = json::array();
    for (const ConfigViolation& v : violations)
        j["violations"].push_back({{"name", v.name}, {"message", v.message}});
    return j.dump(2);
}

std::string runtime_error_json(const std::string& name,
                               const std::string& message) {
    json j;
    j["error"] = name;
    j["message"] = message;
    return j.dump(2);
}

} // namespace stefan
