// dcs: command-line front end for the deferred-correction splitting solver.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcs/controller.hpp"
#include "dcs/experiments.hpp"
#include "dcs/io.hpp"

#ifndef DCS_VERSION
#define DCS_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace dcs;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_cells_failed = 1;
constexpr int exit_usage = 2;
constexpr int exit_runtime = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string problem = "bz";
    double lambda = -1.0;
    std::string scheme = "lie";
    std::string ordering = "reaction-last";
    std::vector<double> eta;
    std::vector<std::string> rule;
    int kmax = 0;
    double dt0 = 0.0;
    int levels = 0;
    double tf = 0.0;
    std::size_t grid_n = 0;
    int spatial_order = 2;
    double sub_tol = 0.0;
    double ref_tol = 1e-12;
    bool paper_scale = false;
    bool hybrid = false;
    int steps = 0;
    int k = -1;
    std::string out = "dcs-out";
    std::string config;
};

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

std::string join(const std::vector<std::string>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}

std::string join(const std::vector<double>& v)
{
    std::vector<std::string> s;
    for (double x : v) s.push_back(format_double(x));
    return join(s);
}

double number(const std::string& key, const std::string& v)
{
    try {
        return parse_double(v);
    } catch (const FormatError&) {
        throw UsageError("config: '" + key + "' is not a number: '" + v + "'");
    }
}

int integer(const std::string& key, const std::string& v)
{
    const double x = number(key, v);
    if (x != std::floor(x)) throw UsageError("config: '" + key + "' must be an integer");
    return static_cast<int>(x);
}

bool boolean(const std::string& key, const std::string& v)
{
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw UsageError("config: '" + key + "' must be true or false");
}

// Keys match the long flag names; the manifest uses the same keys, so a
// manifest can be fed back through --config.
void apply_config(Options& o, const KeyValueConfig& kv)
{
    const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters{
        {"problem", [&](auto&, auto& v) { o.problem = v; }},
        {"lambda", [&](auto& k, auto& v) { o.lambda = number(k, v); }},
        {"scheme", [&](auto&, auto& v) { o.scheme = v; }},
        {"ordering", [&](auto&, auto& v) { o.ordering = v; }},
        {"eta", [&](auto& k, auto& v) {
             o.eta.clear();
             for (const auto& x : split_list(v)) o.eta.push_back(number(k, x));
         }},
        {"rule", [&](auto&, auto& v) { o.rule = split_list(v); }},
        {"kmax", [&](auto& k, auto& v) { o.kmax = integer(k, v); }},
        {"dt0", [&](auto& k, auto& v) { o.dt0 = number(k, v); }},
        {"levels", [&](auto& k, auto& v) { o.levels = integer(k, v); }},
        {"tf", [&](auto& k, auto& v) { o.tf = number(k, v); }},
        {"grid-n", [&](auto& k, auto& v) { o.grid_n = static_cast<std::size_t>(integer(k, v)); }},
        {"spatial-order", [&](auto& k, auto& v) { o.spatial_order = integer(k, v); }},
        {"sub-tol", [&](auto& k, auto& v) { o.sub_tol = number(k, v); }},
        {"ref-tol", [&](auto& k, auto& v) { o.ref_tol = number(k, v); }},
        {"paper-scale", [&](auto& k, auto& v) { o.paper_scale = boolean(k, v); }},
        {"hybrid", [&](auto& k, auto& v) { o.hybrid = boolean(k, v); }},
        {"steps", [&](auto& k, auto& v) { o.steps = integer(k, v); }},
        {"k", [&](auto& k, auto& v) { o.k = integer(k, v); }},
    };
    for (const auto& [key, value] : kv.values()) {
        if (key == "command" || key.rfind("info.", 0) == 0) continue;
        const auto it = setters.find(key);
        if (it == setters.end()) throw UsageError("config: unknown key '" + key + "'");
        it->second(key, value);
    }
}

bool is_bz(const Options& o) { return o.problem == "bz"; }

/// Fills every option left at its "unset" value with the per-problem default.
void resolve_defaults(Options& o, const std::string& command)
{
    if (o.problem != "bz" && o.problem != "linear2x2" && o.problem != "dahlquist")
        throw UsageError("unknown problem '" + o.problem + "' (bz, linear2x2, dahlquist)");
    if (o.spatial_order != 2 && o.spatial_order != 4) throw UsageError("--spatial-order must be 2 or 4");
    const bool converge = command == "converge-local" || command == "converge-global";
    if (o.grid_n == 0) o.grid_n = command == "space-study" ? (o.paper_scale ? 101 : 51) : (o.paper_scale ? 1001 : 201);
    if (o.tf == 0.0) o.tf = is_bz(o) && !o.paper_scale ? 0.6 : 1.0;
    if (o.dt0 == 0.0) {
        if (converge)
            o.dt0 = is_bz(o) ? 6.4e-4 : 0.2;
        else if (command == "space-study")
            o.dt0 = 1e-4;
        else
            o.dt0 = is_bz(o) ? 1e-5 : 1e-3;
    }
    if (o.levels == 0) o.levels = converge ? (is_bz(o) ? 8 : 5) : (command == "space-study" ? (o.paper_scale ? 5 : 4) : 1);
    if (o.sub_tol == 0.0) o.sub_tol = converge ? (is_bz(o) ? 1e-10 : 1e-12) : 1e-5;
    if (o.eta.empty()) o.eta = command == "error-control" ? std::vector<double>{1e-5, 1e-6, 1e-7} : std::vector<double>{1e-7};
    if (o.rule.empty())
        o.rule = command == "error-control" ? std::vector<std::string>{"k", "kmax", "split"}
                                            : std::vector<std::string>{"composite"};
    for (const auto& r : o.rule) parse_step_rule(r);
    parse_split_kind(o.scheme);
    parse_split_ordering(o.ordering);
    if (o.hybrid && command != "run") throw UsageError("--hybrid applies to 'run' only (space-study always compares)");
    if (o.hybrid && (o.steps <= 0 || o.spatial_order != 4 || !is_bz(o)))
        throw UsageError("--hybrid needs the bz problem, --spatial-order 4 and a fixed --steps count");
    if (command == "run" && o.eta.size() != 1) throw UsageError("'run' takes a single --eta");
    if (command == "run" && o.rule.size() != 1) throw UsageError("'run' takes a single --rule");
    if (o.levels < 1) throw UsageError("--levels must be >= 1");
    const double t0 = is_bz(o) ? BzSetup{}.t_start : 0.0;
    if (command != "converge-local" && command != "space-study" && !(o.tf > t0))
        throw UsageError(command + ": window [" + format_double(t0) + ", " + format_double(o.tf) + "] has no length");
    if (!(o.dt0 > 0.0)) throw UsageError("--dt0 must be positive");
}

SplittingScheme scheme_of(const Options& o)
{
    return {parse_split_kind(o.scheme), parse_split_ordering(o.ordering)};
}

SubsolverConfig sub_of(const Options& o)
{
    SubsolverConfig s;
    s.rtol = s.atol = o.sub_tol;
    return s;
}

ReferenceConfig ref_of(const Options& o)
{
    ReferenceConfig r;
    r.rtol = r.atol = o.ref_tol;
    return r;
}

BzSetup setup_of(const Options& o)
{
    BzSetup s;
    s.n = o.grid_n;
    s.spatial_order = o.spatial_order;
    return s;
}

ProblemSpec make_problem(const Options& o)
{
    if (o.problem == "linear2x2") return linear2x2_problem();
    if (o.problem == "dahlquist") return dahlquist_problem(o.lambda);
    std::fprintf(stderr, "spinning up BZ profile on %zu points...\n", o.grid_n);
    return bz_problem(setup_of(o));
}

RunManifest manifest_of(const Options& o, const std::string& command)
{
    RunManifest m;
    m.set("command", command);
    m.set("problem", o.problem);
    if (o.problem == "dahlquist") m.set("lambda", o.lambda);
    m.set("scheme", o.scheme);
    m.set("ordering", o.ordering);
    m.set("eta", join(o.eta));
    m.set("rule", join(o.rule));
    m.set("kmax", static_cast<double>(o.kmax));
    m.set("dt0", o.dt0);
    m.set("levels", static_cast<double>(o.levels));
    m.set("tf", o.tf);
    m.set("grid-n", static_cast<double>(o.grid_n));
    m.set("spatial-order", static_cast<double>(o.spatial_order));
    m.set("sub-tol", o.sub_tol);
    m.set("ref-tol", o.ref_tol);
    m.set("paper-scale", o.paper_scale ? "true" : "false");
    m.set("hybrid", o.hybrid ? "true" : "false");
    m.set("steps", static_cast<double>(o.steps));
    m.set("k", static_cast<double>(o.k));
    m.set("info.version", DCS_VERSION);
    if (is_bz(o)) {
        const BzSetup s = setup_of(o);
        m.set("info.seed-width", s.seed_width);
        m.set("info.spinup", s.spinup);
        m.set("info.t-start", s.t_start);
        m.set("info.spinup-rtol", s.spinup_rtol);
        const BzParams& b = s.params;
        m.set("info.bz", "eps=" + format_double(b.eps) + " mu=" + format_double(b.mu) + " f=" + format_double(b.f) +
                             " q=" + format_double(b.q_bz) + " Da=" + format_double(b.Da) +
                             " Db=" + format_double(b.Db) + " Dc=" + format_double(b.Dc));
    }
    return m;
}

void write_out(const fs::path& dir, const std::string& name, const std::string& text)
{
    atomic_write(dir / name, text);
    std::fprintf(stderr, "wrote %s\n", (dir / name).string().c_str());
}

ControllerConfig controller_of(const Options& o, double eta, const std::string& rule)
{
    ControllerConfig c;
    c.eta = eta;
    c.rule = parse_step_rule(rule);
    c.k_max = o.kmax;
    return c;
}

int cmd_run(const Options& o, const fs::path& out)
{
    const ProblemSpec p = make_problem(o);
    const SplittingScheme scheme = scheme_of(o);
    if (!(o.tf > p.t0)) throw UsageError("--tf must exceed the start time " + format_double(p.t0));
    State final_state;
    bool ok = true;
    if (o.steps > 0) {
        DcsIntegrator dcs = DcsIntegrator::for_problem(p, scheme, sub_of(o));
        if (o.hybrid) {
            const ProblemSpec low = with_spatial_order(p, 2);
            dcs.set_hybrid(p.rhs, low.rhs, sub_of(o));
        }
        ControllerConfig cc;
        cc.k_max = o.kmax;
        const int k = o.k >= 0 ? o.k : resolved_kmax(cc, dcs.tableau(), scheme);
        final_state = dcs.integrate_fixed(p.initial_state, p.t0, o.tf, static_cast<std::size_t>(o.steps), k);
    } else {
        const ControllerConfig cc = controller_of(o, o.eta.front(), o.rule.front());
        const AdaptiveResult r =
            adaptive_integrate(p, scheme, cc, p.t0, o.tf, p.initial_state, o.dt0, sub_of(o));
        final_state = r.final_state;
        const int kcols = resolved_kmax(cc, radau_iia_3(), scheme);
        write_out(out, "steps.csv", step_reports_to_csv(r.reports, kcols).to_string());
        std::fprintf(stderr, "accepted %zu rejected %zu\n", r.accepted_steps(), r.rejected_steps());
        ok = r.accepted_steps() > 0;
    }
    if (p.grid)
        write_out(out, "final_state.csv", state_to_csv(*p.grid, final_state, p.species, o.tf).to_string());
    else
        write_out(out, "final_state.csv", trajectory_to_csv({o.tf}, {final_state}).to_string());
    StateDump d;
    d.n = p.grid ? p.grid->n : 1;
    d.m = p.species;
    d.t = o.tf;
    d.u = final_state;
    write_out(out, "final_state.bin", d.encode());
    return ok ? exit_ok : exit_cells_failed;
}

StudyConfig study_of(const Options& o)
{
    StudyConfig c;
    c.scheme = scheme_of(o);
    c.sub = sub_of(o);
    c.reference = ref_of(o);
    c.dts = dyadic_steps(o.dt0, static_cast<std::size_t>(o.levels));
    c.k_max = o.kmax;
    return c;
}

void report_slopes(const ConvergenceResult& r)
{
    std::fprintf(stderr, "%s slopes:", r.kind.c_str());
    for (const auto& s : r.slopes) {
        if (s.valid())
            std::fprintf(stderr, " %.2f", s.slope);
        else
            std::fprintf(stderr, " -");
    }
    std::fprintf(stderr, "\n");
}

int cmd_converge(const Options& o, const fs::path& out, bool global)
{
    const ProblemSpec p = make_problem(o);
    if (global && !(o.tf > p.t0))
        throw UsageError("converge-global: window [" + format_double(p.t0) + ", " + format_double(o.tf) +
                         "] has no length");
    const ConvergenceResult r = global ? converge_global(p, study_of(o), o.tf) : converge_local(p, study_of(o));
    write_out(out, global ? "converge-global.csv" : "converge-local.csv", r.to_csv().to_string());
    report_slopes(r);
    return r.all_ok() ? exit_ok : exit_cells_failed;
}

int cmd_error_control(const Options& o, const fs::path& out)
{
    const ProblemSpec p = make_problem(o);
    if (!(o.tf > p.t0)) throw UsageError("--tf must exceed the start time " + format_double(p.t0));
    ErrorControlConfig c;
    c.scheme = scheme_of(o);
    c.sub = sub_of(o);
    c.controller.k_max = o.kmax;
    c.etas = o.eta;
    c.rules.clear();
    for (const auto& r : o.rule) c.rules.push_back(parse_step_rule(r));
    c.tf = o.tf;
    c.dt0 = o.dt0;
    const auto runs = error_control(p, c);
    const int kcols = resolved_kmax(c.controller, radau_iia_3(), c.scheme);
    bool ok = true;
    for (const auto& run : runs) {
        ok = ok && run.ok;
        char eta_tag[32];
        std::snprintf(eta_tag, sizeof eta_tag, "%g", run.eta);
        const std::string name = "steps-" + to_string(run.rule) + "-eta" + eta_tag + ".csv";
        write_out(out, name, step_reports_to_csv(run.result.reports, kcols).to_string());
        std::fprintf(stderr, "%-9s eta %-8s accepted %zu mean dt %s mean k %s %s\n", to_string(run.rule).c_str(),
                     format_double(run.eta).c_str(), run.accepted, format_double(run.mean_dt).c_str(),
                     format_double(run.mean_k).c_str(), run.message.c_str());
    }
    write_out(out, "error-control-summary.csv", error_control_summary_csv(runs).to_string());
    return ok ? exit_ok : exit_cells_failed;
}

int cmd_space_study(const Options& o, const fs::path& out)
{
    if (!is_bz(o)) throw UsageError("space-study runs on the bz problem only");
    SpaceStudyConfig c;
    c.n_base = o.grid_n;
    c.levels = static_cast<std::size_t>(o.levels - 1);
    c.fine = setup_of(o);
    c.dt = o.dt0;
    c.reference = ref_of(o);
    c.scheme = scheme_of(o);
    c.sub = sub_of(o);
    if (c.levels < 2) throw UsageError("space-study needs --levels >= 3 (coarse grids plus the reference grid)");
    std::fprintf(stderr, "space study: coarse grids from n = %zu, reference grid n = %zu\n", c.n_base, c.fine_n());
    const SpaceStudyResult r = space_study(c);
    write_out(out, "space-resolution.csv", r.resolution.to_string());
    write_out(out, "space-combined.csv", r.combined.to_string());
    write_out(out, "space-hybrid.csv", r.hybrid.to_string());
    for (const auto& [order, fit] : r.spatial_slopes)
        std::fprintf(stderr, "order %d spatial slope %.2f\n", order, fit.slope);
    if (!r.ok) std::fprintf(stderr, "space study failed: %s\n", r.message.c_str());
    return r.ok ? exit_ok : exit_cells_failed;
}

void add_common(CLI::App* sub, Options& o)
{
    sub->add_option("--problem", o.problem, "bz, linear2x2 or dahlquist")->capture_default_str();
    sub->add_option("--lambda", o.lambda, "rate of the dahlquist problem")->capture_default_str();
    sub->add_option("--scheme", o.scheme, "lie or strang")->capture_default_str();
    sub->add_option("--ordering", o.ordering, "reaction-last or diffusion-last")->capture_default_str();
    sub->add_option("--eta", o.eta, "accuracy tolerance(s)")->delimiter(',');
    sub->add_option("--rule", o.rule, "step rule(s): k, kmax, composite, split")->delimiter(',');
    sub->add_option("--kmax", o.kmax, "maximum correction sweeps (0 = scheme default)");
    sub->add_option("--dt0", o.dt0, "initial or largest step");
    sub->add_option("--levels", o.levels, "number of dyadic steps or grids");
    sub->add_option("--tf", o.tf, "end of the time window");
    sub->add_option("--grid-n", o.grid_n, "grid points (coarsest grid for space-study)");
    sub->add_option("--spatial-order", o.spatial_order, "2 or 4")->capture_default_str();
    sub->add_option("--sub-tol", o.sub_tol, "sub-flow solver tolerance");
    sub->add_option("--ref-tol", o.ref_tol, "reference solver tolerance")->capture_default_str();
    sub->add_flag("--paper-scale", o.paper_scale, "n = 1001 and window end t = 1");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--config", o.config, "key = value file; its entries override flags");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"deferred-correction splitting solver"};
    app.set_version_flag("--version", DCS_VERSION);
    app.require_subcommand(1);
    Options o;
    struct Cmd {
        const char* name;
        const char* help;
    };
    const std::vector<Cmd> cmds{
        {"run", "integrate one problem, adaptive or with fixed steps"},
        {"converge-local", "local error study over a dyadic step sweep"},
        {"converge-global", "global error study with constant steps"},
        {"error-control", "adaptive runs over tolerances and step rules"},
        {"space-study", "spatial resolution, combined and hybrid studies"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& c : cmds) {
        CLI::App* s = app.add_subcommand(c.name, c.help);
        add_common(s, o);
        subs[c.name] = s;
    }
    subs["run"]->add_option("--steps", o.steps, "fixed step count (0 = adaptive)");
    subs["run"]->add_option("--k", o.k, "sweeps per fixed step (default kmax)");
    subs["run"]->add_flag("--hybrid", o.hybrid, "order-2 operators inside the sub-flows (fixed steps only)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_usage;
    }
    std::string command;
    for (const auto& [name, s] : subs)
        if (s->parsed()) command = name;

    const fs::path out = o.out;
    try {
        if (!o.config.empty()) apply_config(o, KeyValueConfig::load(o.config));
        resolve_defaults(o, command);
        write_out(out, "manifest.txt", manifest_of(o, command).to_string());
        if (command == "run") return cmd_run(o, out);
        if (command == "converge-local") return cmd_converge(o, out, false);
        if (command == "converge-global") return cmd_converge(o, out, true);
        if (command == "error-control") return cmd_error_control(o, out);
        return cmd_space_study(o, out);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    } catch (const InvalidArgument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_usage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "failed: %s\n", e.what());
        return exit_runtime;
    }
}
