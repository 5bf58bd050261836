#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcs/controller.hpp"
#include "dcs/dcs.hpp"
#include "dcs/io.hpp"
#include "dcs/problems.hpp"
#include "dcs/reference.hpp"
#include "dcs/splitting.hpp"
#include "dcs/subsolvers.hpp"

namespace dcs {

/// Least-squares slope of log2(err) against log2(dt).
struct SlopeFit {
    double slope = std::nan("");
    double intercept = std::nan("");
    std::size_t used = 0;

    bool valid() const { return used >= 2; }
};

/// Points with err <= floor, non-finite err or non-positive dt are skipped.
inline SlopeFit fit_loglog_slope(const std::vector<double>& dt, const std::vector<double>& err, double floor = 0.0)
{
    detail::require(dt.size() == err.size(), "fit_loglog_slope: size mismatch");
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < dt.size(); ++i) {
        if (!(dt[i] > 0.0) || !std::isfinite(err[i]) || !(err[i] > floor) || !(err[i] > 0.0)) continue;
        xs.push_back(std::log2(dt[i]));
        ys.push_back(std::log2(err[i]));
    }
    SlopeFit fit;
    fit.used = xs.size();
    if (xs.size() < 2) return fit;
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) {
        fit.used = 1;
        return fit;
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    return fit;
}

/// Slopes between consecutive entries (dt sorted descending), NaN where either end is invalid.
inline std::vector<double> pairwise_slopes(const std::vector<double>& dt, const std::vector<double>& err,
                                           double floor = 0.0)
{
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < dt.size(); ++i) {
        const bool ok = err[i] > floor && err[i + 1] > floor && std::isfinite(err[i]) && std::isfinite(err[i + 1]);
        out.push_back(ok ? std::log2(err[i] / err[i + 1]) / std::log2(dt[i] / dt[i + 1]) : std::nan(""));
    }
    return out;
}

/// dt0, dt0/2, ..., count entries.
inline std::vector<double> dyadic_steps(double dt0, std::size_t count)
{
    std::vector<double> v;
    for (std::size_t i = 0; i < count; ++i) v.push_back(std::ldexp(dt0, -static_cast<int>(i)));
    return v;
}

struct ConvergenceRow {
    double dt = 0.0;
    int k = 0;
    double error = std::nan("");
    double estimate = std::nan("");
    double zeta = std::nan("");
    bool ok = true;
    std::string message;
};

struct ConvergenceResult {
    std::string kind; ///< "local" or "global"
    std::vector<ConvergenceRow> rows; ///< sorted by dt (descending) then k
    std::vector<SlopeFit> slopes;     ///< indexed by k
    int k_max = 0;
    double floor = 0.0;

    bool all_ok() const
    {
        return std::all_of(rows.begin(), rows.end(), [](const ConvergenceRow& r) { return r.ok; });
    }

    /// (dt, error) series of iterate k in row order.
    std::pair<std::vector<double>, std::vector<double>> series(int k) const
    {
        std::pair<std::vector<double>, std::vector<double>> s;
        for (const auto& r : rows)
            if (r.k == k) {
                s.first.push_back(r.dt);
                s.second.push_back(r.ok ? r.error : std::nan(""));
            }
        return s;
    }

    void fit()
    {
        std::sort(rows.begin(), rows.end(), [](const ConvergenceRow& a, const ConvergenceRow& b) {
            return a.dt != b.dt ? a.dt > b.dt : a.k < b.k;
        });
        slopes.clear();
        for (int k = 0; k <= k_max; ++k) {
            const auto [dts, errs] = series(k);
            slopes.push_back(fit_loglog_slope(dts, errs, floor));
        }
    }

    /// dt, k, error, estimate, zeta, ok, message, slope (fitted slope of that k, repeated).
    CsvTable to_csv() const
    {
        CsvTable tab("converge-" + kind, {"dt", "k", "error", "estimate", "zeta", "ok", "slope", "message"});
        tab.meta.push_back("floor=" + format_double(floor));
        for (const auto& r : rows) {
            const auto k = static_cast<std::size_t>(r.k);
            const std::string slope =
                k < slopes.size() && slopes[k].valid() ? format_double(slopes[k].slope) : std::string();
            tab.add_row({format_double(r.dt), std::to_string(r.k), format_double(r.error), format_double(r.estimate),
                         format_double(r.zeta), r.ok ? "1" : "0", slope, r.message});
        }
        return tab;
    }
};

struct StudyConfig {
    SplittingScheme scheme = SplittingScheme::lie();
    SubsolverConfig sub;
    ReferenceConfig reference;
    std::vector<double> dts;
    int k_max = 0; ///< highest iterate reported; 0 = default_kmax + 1
    double floor_factor = 50.0;

    int resolved_k(const ButcherTableau& tab) const { return k_max > 0 ? k_max : default_kmax(tab, scheme) + 1; }
    double floor() const { return floor_factor * reference.rtol; }
};

namespace detail {

inline std::string sanitize(std::string s)
{
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

/// Reference states at t0 + dt for every dt (closed form when available).
inline std::vector<State> reference_states(const ProblemSpec& p, const ReferenceConfig& rc, double t0,
                                           std::span<const double> u0, const std::vector<double>& offsets)
{
    std::vector<State> out;
    if (p.exact) {
        for (double d : offsets) out.push_back(p.exact(t0, u0, t0 + d));
        return out;
    }
    const double tmax = *std::max_element(offsets.begin(), offsets.end());
    std::vector<double> cps;
    for (double d : offsets) cps.push_back(t0 + d);
    const Trajectory tr = reference_solve(p, rc, t0, t0 + tmax, u0, cps);
    for (double d : offsets) {
        const double target = t0 + d;
        const auto it = std::min_element(tr.times.begin(), tr.times.end(), [target](double a, double b) {
            return std::abs(a - target) < std::abs(b - target);
        });
        out.push_back(tr.states[static_cast<std::size_t>(it - tr.times.begin())]);
    }
    return out;
}

} // namespace detail

/// Local errors of u~^k_s at t0 + dt from the problem's initial state, with
/// the estimator err~_k alongside.
inline ConvergenceResult converge_local(const ProblemSpec& p, const StudyConfig& cfg)
{
    detail::require(!cfg.dts.empty(), "converge_local: empty dt list");
    const DcsIntegrator dcs = DcsIntegrator::for_problem(p, cfg.scheme, cfg.sub);
    ConvergenceResult res;
    res.kind = "local";
    res.k_max = cfg.resolved_k(dcs.tableau());
    res.floor = cfg.floor();
    const double t0 = p.t0;
    const State& u0 = p.initial_state;
    const std::vector<State> refs = detail::reference_states(p, cfg.reference, t0, u0, cfg.dts);
    const double scale = p.norm_scale(u0);
    for (std::size_t i = 0; i < cfg.dts.size(); ++i) {
        const double dt = cfg.dts[i];
        int k_done = -1;
        std::string failure;
        try {
            DcsState st = dcs.initial_sweep(u0, t0, dt);
            const State ut0 = st.last_node();
            std::vector<SweepRecord> hist;
            for (int k = 0; k <= res.k_max; ++k) {
                if (k > 0) st = dcs.correction_sweep(st);
                SweepRecord rec;
                const auto status = detail::fill_estimate(hist, st, ut0, p.norm, scale, rec);
                ConvergenceRow row;
                row.dt = dt;
                row.k = k;
                row.error = p.distance(st.last_node(), refs[i]);
                if (status == detail::EstimateStatus::ok) {
                    row.estimate = rec.err_tilde;
                } else {
                    row.message = status == detail::EstimateStatus::blowup ? "estimator blowup" : "degenerate estimate";
                    if (status == detail::EstimateStatus::degenerate) rec.err_tilde = hist.back().err_tilde;
                }
                if (k > 0) row.zeta = rec.zeta_tilde;
                hist.push_back(rec);
                res.rows.push_back(row);
                k_done = k;
            }
        } catch (const std::exception& e) {
            failure = detail::sanitize(e.what());
        }
        for (int k = k_done + 1; k <= res.k_max; ++k) {
            ConvergenceRow row;
            row.dt = dt;
            row.k = k;
            row.ok = false;
            row.message = failure;
            res.rows.push_back(row);
        }
    }
    res.fit();
    return res;
}

/// Global errors at tf after constant-step marching with k corrections per step.
inline ConvergenceResult converge_global(const ProblemSpec& p, const StudyConfig& cfg, double tf)
{
    detail::require(!cfg.dts.empty(), "converge_global: empty dt list");
    detail::require(tf > p.t0, "converge_global: window must have positive length");
    const DcsIntegrator dcs = DcsIntegrator::for_problem(p, cfg.scheme, cfg.sub);
    ConvergenceResult res;
    res.kind = "global";
    res.k_max = cfg.resolved_k(dcs.tableau());
    res.floor = cfg.floor();
    const State ref = detail::reference_states(p, cfg.reference, p.t0, p.initial_state, {tf - p.t0}).front();
    for (double dt : cfg.dts) {
        const auto steps = static_cast<std::size_t>(std::max(1.0, std::round((tf - p.t0) / dt)));
        const double h = (tf - p.t0) / static_cast<double>(steps);
        for (int k = 0; k <= res.k_max; ++k) {
            ConvergenceRow row;
            row.dt = h;
            row.k = k;
            try {
                row.error = p.distance(dcs.integrate_fixed(p.initial_state, p.t0, tf, steps, k), ref);
            } catch (const std::exception& e) {
                row.ok = false;
                row.message = detail::sanitize(e.what());
            }
            res.rows.push_back(row);
        }
    }
    res.fit();
    return res;
}

/// Summary of one adaptive run.
struct ErrorControlRun {
    StepRule rule = StepRule::composite;
    double eta = 0.0;
    bool ok = true;
    std::string message;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    double mean_dt = std::nan("");
    double mean_k = std::nan("");
    double plateau_dt = std::nan("");        ///< mean accepted dt over the last quartile
    double plateau_variation = std::nan(""); ///< (max - min) / mean over the last quartile
    AdaptiveResult result;
};

inline ErrorControlRun summarize_run(StepRule rule, double eta, AdaptiveResult r, double tf)
{
    ErrorControlRun run;
    run.rule = rule;
    run.eta = eta;
    run.accepted = r.accepted_steps();
    run.rejected = r.rejected_steps();
    std::vector<const StepReport*> acc;
    for (const auto& rep : r.reports)
        if (rep.accepted && rep.t + rep.dt < tf * (1.0 - 1e-12)) acc.push_back(&rep);
    if (acc.empty())
        for (const auto& rep : r.reports)
            if (rep.accepted) acc.push_back(&rep);
    if (!acc.empty()) {
        double sdt = 0.0;
        double sk = 0.0;
        for (const auto* a : acc) {
            sdt += a->dt;
            sk += a->k_used;
        }
        run.mean_dt = sdt / static_cast<double>(acc.size());
        run.mean_k = sk / static_cast<double>(acc.size());
        const std::size_t q = acc.size() * 3 / 4;
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        double s = 0.0;
        for (std::size_t i = q; i < acc.size(); ++i) {
            lo = std::min(lo, acc[i]->dt);
            hi = std::max(hi, acc[i]->dt);
            s += acc[i]->dt;
        }
        run.plateau_dt = s / static_cast<double>(acc.size() - q);
        run.plateau_variation = (hi - lo) / run.plateau_dt;
    }
    run.result = std::move(r);
    return run;
}

struct ErrorControlConfig {
    SplittingScheme scheme = SplittingScheme::lie();
    SubsolverConfig sub;
    ControllerConfig controller;
    std::vector<double> etas{1e-5, 1e-7};
    std::vector<StepRule> rules{StepRule::new_k, StepRule::new_kmax, StepRule::split};
    double tf = 0.0; ///< 0 = t0 + 0.1
    double dt0 = 1e-5;
};

/// Adaptive runs over the (rule, eta) grid from the problem's initial state.
inline std::vector<ErrorControlRun> error_control(const ProblemSpec& p, const ErrorControlConfig& cfg)
{
    const double tf = cfg.tf > 0.0 ? cfg.tf : p.t0 + 0.1;
    const DcsIntegrator dcs = DcsIntegrator::for_problem(p, cfg.scheme, cfg.sub);
    std::vector<ErrorControlRun> runs;
    for (StepRule rule : cfg.rules) {
        for (double eta : cfg.etas) {
            ControllerConfig cc = cfg.controller;
            cc.rule = rule;
            cc.eta = eta;
            if (rule == StepRule::split) cc.eta_split = eta;
            try {
                runs.push_back(summarize_run(rule, eta,
                                             adaptive_integrate(dcs, cc, p.t0, tf, p.initial_state, cfg.dt0, p.norm),
                                             tf));
            } catch (const std::exception& e) {
                ErrorControlRun run;
                run.rule = rule;
                run.eta = eta;
                run.ok = false;
                run.message = detail::sanitize(e.what());
                runs.push_back(std::move(run));
            }
        }
    }
    return runs;
}

/// True local error of each accepted step (every `stride`-th), measured against
/// a reference solve from the step's own start state. Requires stored states.
inline std::vector<double> accepted_step_errors(const ProblemSpec& p, const AdaptiveResult& r,
                                                const ReferenceConfig& rc, std::size_t stride = 1)
{
    detail::require(r.states.size() == r.times.size(), "accepted_step_errors: run did not store states");
    detail::require(stride >= 1, "accepted_step_errors: stride must be >= 1");
    std::vector<double> errs;
    std::size_t i = 0;
    for (const auto& rep : r.reports) {
        if (!rep.accepted) continue;
        if (i % stride == 0) {
            const State& start = r.states[i];
            const State ref = detail::reference_states(p, rc, rep.t, start, {rep.dt}).front();
            errs.push_back(p.norm.distance(r.states[i + 1], ref, p.norm_scale(start)));
        }
        ++i;
    }
    return errs;
}

/// rule, eta, ok, accepted, rejected, mean_dt, mean_k, plateau_dt, plateau_variation, message.
inline CsvTable error_control_summary_csv(const std::vector<ErrorControlRun>& runs)
{
    CsvTable tab("error-control-summary", {"rule", "eta", "ok", "accepted", "rejected", "mean_dt", "mean_k",
                                           "plateau_dt", "plateau_variation", "message"});
    for (const auto& r : runs)
        tab.add_row({to_string(r.rule), format_double(r.eta), r.ok ? "1" : "0", std::to_string(r.accepted),
                     std::to_string(r.rejected), format_double(r.mean_dt), format_double(r.mean_k),
                     format_double(r.plateau_dt), format_double(r.plateau_variation), r.message});
    return tab;
}

/// Distance between hybrid and full high-order iterates, k = 0..k_last.
struct HybridGap {
    std::vector<double> gap;         ///< |hybrid - fullHO| after sweep k
    std::vector<double> error_high;  ///< fullHO against the reference, when one is given
    std::vector<double> error_hybrid;
};

inline HybridGap hybrid_gap(const ProblemSpec& high, int low_order, const SplittingScheme& scheme,
                            const SubsolverConfig& sub, double dt, int k_last, const State* reference = nullptr)
{
    detail::require(high.bz.has_value() && high.grid.has_value(), "hybrid_gap: BZ problem required");
    const ProblemSpec low = with_spatial_order(high, low_order);
    const DcsIntegrator full = DcsIntegrator::for_problem(high, scheme, sub);
    DcsIntegrator hyb = DcsIntegrator::for_problem(high, scheme, sub);
    hyb.set_hybrid(high.rhs, low.rhs, sub);
    const auto a = full.iterate(high.initial_state, high.t0, dt, k_last);
    const auto b = hyb.iterate(high.initial_state, high.t0, dt, k_last);
    HybridGap g;
    for (int k = 0; k <= k_last; ++k) {
        const auto& ua = a[static_cast<std::size_t>(k)].last_node();
        const auto& ub = b[static_cast<std::size_t>(k)].last_node();
        g.gap.push_back(high.distance(ub, ua));
        if (reference) {
            g.error_high.push_back(high.distance(ua, *reference));
            g.error_hybrid.push_back(high.distance(ub, *reference));
        }
    }
    return g;
}

struct SpaceStudyConfig {
    BzSetup fine;            ///< fine reference grid; n must equal (n_base - 1) 2^levels + 1
    std::size_t n_base = 101;
    std::size_t levels = 3;  ///< coarse grids n_base, 2 n_base - 1, ... (levels of them)
    double dt = 1e-4;        ///< length of the single step
    ReferenceConfig reference;
    SplittingScheme scheme = SplittingScheme::lie();
    SubsolverConfig sub;
    std::vector<double> combined_dts = dyadic_steps(1e-4, 6);
    std::size_t combined_n = 0; ///< 0 = second coarsest grid
    int hybrid_k = 4;
    std::size_t hybrid_n = 0;   ///< 0 = second coarsest grid

    std::size_t fine_n() const { return (n_base - 1) * (std::size_t{1} << levels) + 1; }
};

struct SpaceStudyResult {
    CsvTable resolution; ///< order, n, dx, error
    CsvTable combined;   ///< n, order, dt, k, error
    CsvTable hybrid;     ///< n, k, gap, error_fullho, error_hybrid
    std::map<int, SlopeFit> spatial_slopes;
    bool ok = true;
    std::string message;
};

/// Spatial errors on nested grids after one step of length dt, a combined
/// time/space error curve, and the hybrid-vs-full comparison. The fine grid
/// uses the fourth-order operator and serves as reference for every coarse grid.
inline SpaceStudyResult space_study(const SpaceStudyConfig& cfg)
{
    detail::require(cfg.n_base >= 5 && cfg.levels >= 1, "space_study: need n_base >= 5 and at least one level");
    SpaceStudyResult out;
    out.resolution = CsvTable("space-resolution", {"order", "n", "dx", "error"});
    out.combined = CsvTable("space-combined", {"n", "order", "dt", "k", "error"});
    out.hybrid = CsvTable("space-hybrid", {"n", "k", "gap", "error_fullho", "error_hybrid"});

    BzSetup fs = cfg.fine;
    fs.n = cfg.fine_n();
    fs.spatial_order = 4;
    const ProblemSpec fine = bz_problem(fs);
    const Grid1D& fg = *fine.grid;
    const double t0 = fine.t0;

    std::vector<Grid1D> grids;
    for (std::size_t l = 0; l < cfg.levels; ++l)
        grids.emplace_back((cfg.n_base - 1) * (std::size_t{1} << l) + 1, fg.x0, fg.x1);
    std::vector<double> offsets{cfg.dt};
    offsets.insert(offsets.end(), cfg.combined_dts.begin(), cfg.combined_dts.end());
    const std::vector<State> fine_refs = detail::reference_states(fine, cfg.reference, t0, fine.initial_state, offsets);

    auto coarse_problem = [&](const Grid1D& g, int order) {
        return bz_problem_from_state(*fine.bz, g, order, t0, restrict_nested(fg, g, fine.initial_state, 3),
                                     fine.metadata);
    };
    auto pick = [&](std::size_t n) {
        if (n == 0) return grids[std::min<std::size_t>(1, grids.size() - 1)];
        for (const auto& g : grids)
            if (g.n == n) return g;
        throw InvalidArgument("space_study: grid size " + std::to_string(n) + " is not one of the nested grids");
    };

    try {
        for (int order : {2, 4}) {
            std::vector<double> dxs;
            std::vector<double> errs;
            for (const auto& g : grids) {
                const ProblemSpec cp = coarse_problem(g, order);
                const State u = reference_solve(cp, cfg.reference, t0, t0 + cfg.dt, cp.initial_state).final_state();
                const double e = cp.distance(u, restrict_nested(fg, g, fine_refs[0], 3));
                dxs.push_back(g.dx());
                errs.push_back(e);
                out.resolution.add_row({std::to_string(order), std::to_string(g.n), format_double(g.dx()),
                                        format_double(e)});
            }
            out.spatial_slopes[order] = fit_loglog_slope(dxs, errs);
        }

        const Grid1D cg = pick(cfg.combined_n);
        const ProblemSpec cp = coarse_problem(cg, 2);
        const DcsIntegrator dcs = DcsIntegrator::for_problem(cp, cfg.scheme, cfg.sub);
        const int kc = default_kmax(dcs.tableau(), cfg.scheme);
        for (std::size_t i = 0; i < cfg.combined_dts.size(); ++i) {
            const double dt = cfg.combined_dts[i];
            const State ref = restrict_nested(fg, cg, fine_refs[i + 1], 3);
            const auto its = dcs.iterate(cp.initial_state, t0, dt, kc);
            for (int k = 0; k <= kc; ++k)
                out.combined.add_row({std::to_string(cg.n), "2", format_double(dt), std::to_string(k),
                                      format_double(cp.distance(its[static_cast<std::size_t>(k)].last_node(), ref))});
        }

        const Grid1D hg = pick(cfg.hybrid_n);
        const ProblemSpec hp = coarse_problem(hg, 4);
        const State href = restrict_nested(fg, hg, fine_refs[0], 3);
        const HybridGap gap = hybrid_gap(hp, 2, cfg.scheme, cfg.sub, cfg.dt, cfg.hybrid_k, &href);
        for (std::size_t k = 0; k < gap.gap.size(); ++k)
            out.hybrid.add_row({std::to_string(hg.n), std::to_string(k), format_double(gap.gap[k]),
                                format_double(gap.error_high[k]), format_double(gap.error_hybrid[k])});
    } catch (const std::exception& e) {
        out.ok = false;
        out.message = detail::sanitize(e.what());
    }
    return out;
}

} // namespace dcs
