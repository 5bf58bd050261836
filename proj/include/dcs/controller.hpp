#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcs/dcs.hpp"
#include "dcs/errors.hpp"
#include "dcs/problems.hpp"
#include "dcs/quadrature.hpp"
#include "dcs/splitting.hpp"
#include "dcs/state.hpp"

namespace dcs {

/// Error estimates after sweep k. For k = 0 there is no contraction
/// estimate: zeta_tilde = 0, sigma_tilde = 1 (empty product), dt_max_k = inf.
struct SweepRecord {
    int k = 0;
    double dt = 0.0;
    double err_bar = 0.0;         ///< |u_bar^k_s - u~^k_s|
    double err_tilde = 0.0;       ///< estimated error of u~^k_s
    double zeta_tilde = 0.0;      ///< err_bar_k / (dt err_bar_{k-1})
    double sigma_tilde = 1.0;     ///< prod_{j<=k} zeta_tilde_j
    double dt_max_k = std::numeric_limits<double>::infinity();
    double correction_norm = 0.0; ///< |u~^k_s - u~^0_s|

    /// sigma_tilde * dt^k.
    double contraction() const { return k == 0 ? 0.0 : sigma_tilde * std::pow(dt, k); }
};

enum class StepRule { new_k, new_kmax, composite, split };

inline std::string to_string(StepRule r)
{
    switch (r) {
    case StepRule::new_k: return "k";
    case StepRule::new_kmax: return "kmax";
    case StepRule::composite: return "composite";
    case StepRule::split: return "split";
    }
    return "?";
}

inline StepRule parse_step_rule(const std::string& s)
{
    if (s == "k") return StepRule::new_k;
    if (s == "kmax") return StepRule::new_kmax;
    if (s == "composite") return StepRule::composite;
    if (s == "split") return StepRule::split;
    throw InvalidArgument("unknown step rule '" + s + "'");
}

struct ControllerConfig {
    double eta = 1e-7;
    double eta_split = 0.0; ///< 0 = same as eta
    double nu = 0.9;
    int k_max = 0;          ///< 0 = min(p - p_hat, q - p_hat + 1)
    double dt_min = 1e-14;
    double dt_max_abs = std::numeric_limits<double>::infinity();
    StepRule rule = StepRule::composite;
    bool predict = true;
    /// Correction sweeps required before a step may be accepted (split rule: 0).
    int min_sweeps = 1;
    int max_rejections = 10;
    /// Norm for every estimate; unset = the problem's norm.
    std::optional<ErrorNorm> norm;
    bool store_states = true;

    double split_tolerance() const { return eta_split > 0.0 ? eta_split : eta; }

    void validate() const
    {
        detail::require(eta > 0.0 && eta_split >= 0.0, "ControllerConfig: tolerances must be positive");
        detail::require(nu > 0.0 && nu <= 1.0, "ControllerConfig: nu must lie in (0, 1]");
        detail::require(k_max >= 0, "ControllerConfig: k_max must be >= 1 (or 0 for the default)");
        detail::require(dt_min > 0.0 && dt_min < dt_max_abs, "ControllerConfig: need 0 < dt_min < dt_max_abs");
        detail::require(max_rejections >= 1, "ControllerConfig: max_rejections must be >= 1");
        detail::require(min_sweeps >= 0, "ControllerConfig: min_sweeps must be >= 0");
    }
};

/// min(p - p_hat, q - p_hat + 1): 3 for Lie, 2 for Strang with RadauIIA(3).
inline int default_kmax(const ButcherTableau& tab, const SplittingScheme& scheme)
{
    const int ph = scheme.order_hat();
    return std::max(1, std::min(tab.p - ph, tab.q - ph + 1));
}

inline int resolved_kmax(const ControllerConfig& cfg, const ButcherTableau& tab, const SplittingScheme& scheme)
{
    return cfg.k_max > 0 ? cfg.k_max : default_kmax(tab, scheme);
}

/// u_bar^k_s = u0 + dt sum_j b_j F(u~^k_j).
inline State companion_solution(const DcsState& st)
{
    State u = full_step_increment(st.tableau, st.u_tilde);
    for (std::size_t n = 0; n < u.size(); ++n) u[n] += st.u0[n];
    return u;
}

namespace detail {

enum class EstimateStatus { ok, degenerate, blowup };

inline EstimateStatus fill_estimate(const std::vector<SweepRecord>& history, const DcsState& st,
                                    std::span<const double> u_tilde0_s, const ErrorNorm& norm, double scale,
                                    SweepRecord& rec)
{
    rec = SweepRecord{};
    rec.k = st.k;
    rec.dt = st.dt;
    const State ubar = companion_solution(st);
    rec.err_bar = norm.distance(ubar, st.last_node(), scale);
    if (st.k == 0) {
        rec.err_tilde = rec.err_bar;
        return EstimateStatus::ok;
    }
    require(!history.empty() && history.back().k == st.k - 1, "estimate_error: record k-1 missing from history");
    const SweepRecord& prev = history.back();
    rec.correction_norm = norm.distance(st.last_node(), u_tilde0_s, scale);
    const double unorm = norm(st.last_node(), scale);
    if (prev.err_bar <= 10.0 * std::numeric_limits<double>::epsilon() * unorm) return EstimateStatus::degenerate;
    rec.zeta_tilde = rec.err_bar / (st.dt * prev.err_bar);
    rec.sigma_tilde = prev.sigma_tilde * rec.zeta_tilde;
    rec.dt_max_k = rec.zeta_tilde > 0.0 ? 1.0 / rec.zeta_tilde : std::numeric_limits<double>::infinity();
    const double C = rec.contraction();
    if (C >= 1.0) {
        rec.err_tilde = std::numeric_limits<double>::infinity();
        return EstimateStatus::blowup;
    }
    rec.err_tilde = C / (1.0 - C) * rec.correction_norm;
    return EstimateStatus::ok;
}

} // namespace detail

/// Error estimate for iterate `st`; `history` holds the records of sweeps
/// 0..k-1 of the same step and `u_tilde0_s` the last node of sweep 0.
inline SweepRecord estimate_error(const std::vector<SweepRecord>& history, const DcsState& st,
                                  std::span<const double> u_tilde0_s, const ErrorNorm& norm, double scale = 1.0)
{
    SweepRecord rec;
    switch (detail::fill_estimate(history, st, u_tilde0_s, norm, scale, rec)) {
    case detail::EstimateStatus::degenerate:
        throw DegenerateEstimate("estimate_error: previous error at round-off level, iteration has converged");
    case detail::EstimateStatus::blowup:
        throw EstimatorBlowup("estimate_error: sigma_k dt^k >= 1, step outside the contraction radius");
    case detail::EstimateStatus::ok: break;
    }
    return rec;
}

/// [eta / ((1 - C) err~_k + C eta)]^{1/k} dt with C = sigma_k dt^k (k >= 1).
inline double dt_new_k(const SweepRecord& r, double eta)
{
    detail::require(r.k >= 1, "dt_new_k: needs k >= 1");
    const double C = r.contraction();
    const double denom = (1.0 - C) * r.err_tilde + C * eta;
    if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
    return std::pow(eta / denom, 1.0 / r.k) * r.dt;
}

/// Step that reaches eta after k_max sweeps, with sigma_kmax ~ zeta_k^{kmax-k} sigma_k.
inline double dt_new_kmax(const SweepRecord& r, double eta, int k_max)
{
    detail::require(r.k >= 1 && k_max >= r.k, "dt_new_kmax: needs 1 <= k <= k_max");
    const double C = r.contraction();
    const double denom = (1.0 - C) * r.err_tilde + C * eta;
    if (!(denom > 0.0) || !(r.zeta_tilde > 0.0)) return std::numeric_limits<double>::infinity();
    const double km = static_cast<double>(k_max);
    return std::pow(eta / denom, 1.0 / km) * std::pow(r.zeta_tilde, -(km - r.k) / km) * std::pow(r.dt, r.k / km);
}

/// nu (eta_split / err~_0)^{1/(p_hat+1)} dt.
inline double split_dt(double err0, const ControllerConfig& cfg, const SplittingScheme& scheme, double dt)
{
    detail::require(err0 > 0.0, "split_dt: err0 must be positive");
    return cfg.nu * std::pow(cfg.split_tolerance() / err0, 1.0 / (scheme.order_hat() + 1)) * dt;
}

inline double clamp_dt(double dt, const ControllerConfig& cfg)
{
    if (std::isnan(dt)) return cfg.dt_min;
    return std::clamp(dt, cfg.dt_min, cfg.dt_max_abs);
}

/// Step proposal after sweep `r` under cfg.rule (split rule excluded).
inline double next_dt(const SweepRecord& r, const ControllerConfig& cfg, const SplittingScheme& scheme,
                      int k_max)
{
    const double inf = std::numeric_limits<double>::infinity();
    if (cfg.rule == StepRule::split || r.k == 0) {
        const double e = cfg.rule == StepRule::split ? cfg.split_tolerance() : cfg.eta;
        if (!(r.err_tilde > 0.0)) return clamp_dt(inf, cfg);
        return clamp_dt(cfg.nu * std::pow(e / r.err_tilde, 1.0 / (scheme.order_hat() + 1)) * r.dt, cfg);
    }
    double cand = r.dt_max_k;
    if (cfg.rule == StepRule::new_k || cfg.rule == StepRule::composite) cand = std::min(cand, dt_new_k(r, cfg.eta));
    if (cfg.rule == StepRule::new_kmax || cfg.rule == StepRule::composite)
        cand = std::min(cand, dt_new_kmax(r, cfg.eta, std::max(k_max, r.k)));
    return clamp_dt(cfg.nu * cand, cfg);
}

inline double next_dt(const SweepRecord& r, const ControllerConfig& cfg, const SplittingScheme& scheme)
{
    return next_dt(r, cfg, scheme, resolved_kmax(cfg, radau_iia_3(), scheme));
}

struct RestartDecision {
    bool restart = false;
    double predicted_error = 0.0;
    double new_dt = 0.0;
};

/// Predicts err~_{kmax} from sweep k < k_max and proposes a restart step when
/// the prediction exceeds eta. For k = 0 the contraction comes from the
/// previous accepted step: `prev_contraction` = sigma~_{kmax,old} dt_old^{kmax},
/// rescaled by (dt / dt_old)^{kmax}. Without one MissingHistory is thrown.
inline RestartDecision predict_restart(const SweepRecord& r, const ControllerConfig& cfg, int k_max,
                                       std::optional<double> prev_contraction, double prev_dt)
{
    detail::require(r.k < k_max, "predict_restart: requires k < k_max");
    RestartDecision d;
    const double km = static_cast<double>(k_max);
    if (r.k == 0) {
        if (!prev_contraction || !(prev_dt > 0.0))
            throw MissingHistory("predict_restart: no previous step to predict sigma_kmax from");
        const double contraction = *prev_contraction * std::pow(r.dt / prev_dt, km);
        d.predicted_error = contraction * r.err_tilde;
        const double sigma_star = *prev_contraction / std::pow(prev_dt, km);
        if (d.predicted_error > cfg.eta && sigma_star > 0.0 && r.err_tilde > 0.0) {
            d.restart = true;
            d.new_dt = cfg.nu * std::pow(cfg.eta / (sigma_star * r.err_tilde), 1.0 / km);
        }
        return d;
    }
    const int gap = k_max - r.k;
    d.predicted_error = std::pow(r.zeta_tilde * r.dt, gap) * r.err_tilde;
    if (d.predicted_error > cfg.eta) {
        d.restart = true;
        d.new_dt = cfg.nu * std::pow(cfg.eta / (std::pow(r.zeta_tilde, gap) * r.err_tilde), 1.0 / km) *
                   std::pow(r.dt, r.k / km);
    }
    return d;
}

enum class StepOutcome { converged, kmax_reached, predicted_restart, blowup, degenerate };

inline std::string to_string(StepOutcome o)
{
    switch (o) {
    case StepOutcome::converged: return "converged";
    case StepOutcome::kmax_reached: return "kmax";
    case StepOutcome::predicted_restart: return "predicted";
    case StepOutcome::blowup: return "blowup";
    case StepOutcome::degenerate: return "degenerate";
    }
    return "?";
}

/// One attempted step (accepted or not).
struct StepReport {
    double t = 0.0;
    double dt = 0.0;
    int k_used = 0;
    std::vector<SweepRecord> records;
    bool accepted = false;
    int restarts = 0;     ///< rejected attempts preceding this one within the step
    int sweeps = 0;       ///< correction sweeps performed in this attempt
    StepOutcome outcome = StepOutcome::converged;
    double dt_next = 0.0;
    std::int64_t wall_ns = 0;

    double err_tilde() const { return records.empty() ? 0.0 : records.back().err_tilde; }
};

struct AdaptiveResult {
    std::vector<double> times;  ///< accepted time points, starting with t0
    std::vector<State> states;  ///< matching states (when stored)
    std::vector<StepReport> reports;
    State final_state;

    std::size_t accepted_steps() const
    {
        return static_cast<std::size_t>(std::count_if(reports.begin(), reports.end(),
                                                      [](const StepReport& r) { return r.accepted; }));
    }
    std::size_t rejected_steps() const { return reports.size() - accepted_steps(); }
};

/// Adaptive DC-S time loop over [t0, tf]: sweep until err~_k <= eta, k_max
/// is reached, or a predicted restart fires; the final step lands on tf.
inline AdaptiveResult adaptive_integrate(const DcsIntegrator& dcs, const ControllerConfig& cfg_in,
                                         double t0, double tf, std::span<const double> u0, double dt0,
                                         const ErrorNorm& default_norm = {})
{
    cfg_in.validate();
    if (dcs.hybrid())
        throw InvalidArgument("adaptive_integrate: error control is not valid in hybrid spatial mode; "
                              "run with a single spatial operator");
    detail::require(tf > t0, "adaptive_integrate: tf must exceed t0");
    detail::require(dt0 > 0.0, "adaptive_integrate: dt0 must be positive");
    const ControllerConfig& cfg = cfg_in;
    const ErrorNorm norm = cfg.norm.value_or(default_norm);
    const SplittingScheme& scheme = dcs.scheme();
    const bool split_only = cfg.rule == StepRule::split;
    const int k_max = split_only ? 0 : resolved_kmax(cfg, dcs.tableau(), scheme);
    const std::size_t species = dcs.rhs().species();
    const double eta = split_only ? cfg.split_tolerance() : cfg.eta;
    const int min_k = split_only ? 0 : std::min(cfg.min_sweeps, k_max);

    AdaptiveResult res;
    State u(u0.begin(), u0.end());
    double t = t0;
    double dt = clamp_dt(dt0, cfg);
    std::optional<double> prev_contraction;
    double prev_dt = 0.0;
    // latest 1/zeta~_k seen at each depth, carried across steps
    std::vector<double> dt_max_seen(static_cast<std::size_t>(std::max(k_max, 1)) + 1,
                                    std::numeric_limits<double>::infinity());
    auto remembered_cap = [&] { return cfg.nu * *std::min_element(dt_max_seen.begin(), dt_max_seen.end()); };
    res.times.push_back(t);
    if (cfg.store_states) res.states.push_back(u);
    const double span = tf - t0;

    while (t < tf) {
        int rejections = 0;
        bool done = false;
        while (!done) {
            const auto wall0 = std::chrono::steady_clock::now();
            bool last = false;
            double h = dt;
            const double snap = std::max(1e-12 * span, 1e3 * std::numeric_limits<double>::epsilon() * std::abs(tf));
            if (t + h >= tf || tf - (t + h) <= snap) {
                h = tf - t;
                last = true;
            }
            const double scale = norm.scale_of(u, species);
            StepReport rep;
            rep.t = t;
            rep.dt = h;
            rep.restarts = rejections;

            DcsState st = dcs.initial_sweep(u, t, h);
            const State ut0 = st.last_node();
            SweepRecord rec;
            detail::fill_estimate(rep.records, st, ut0, norm, scale, rec);
            rep.records.push_back(rec);
            double proposal = 0.0;
            bool accept = false;
            while (true) {
                const SweepRecord& cur = rep.records.back();
                if (cur.err_tilde <= eta && (cur.k >= min_k || cur.err_bar == 0.0)) {
                    accept = true;
                    rep.outcome = StepOutcome::converged;
                    break;
                }
                if (cur.k >= k_max) {
                    rep.outcome = StepOutcome::kmax_reached;
                    proposal = next_dt(cur, cfg, scheme, std::max(k_max, 1));
                    break;
                }
                if (cfg.predict && cur.k < k_max - 1) {
                    try {
                        const RestartDecision d = predict_restart(cur, cfg, k_max, prev_contraction, prev_dt);
                        if (d.restart) {
                            rep.outcome = StepOutcome::predicted_restart;
                            proposal = d.new_dt;
                            break;
                        }
                    } catch (const MissingHistory&) {
                    }
                }
                st = dcs.correction_sweep(st);
                ++rep.sweeps;
                const auto status = detail::fill_estimate(rep.records, st, ut0, norm, scale, rec);
                if (status == detail::EstimateStatus::degenerate) {
                    rep.outcome = StepOutcome::degenerate;
                    if (rep.records.back().err_tilde <= eta) {
                        accept = true;
                    } else {
                        proposal = 0.5 * h * cfg.nu;
                    }
                    rec.err_tilde = rep.records.back().err_tilde;
                    rep.records.push_back(rec);
                    break;
                }
                rep.records.push_back(rec);
                if (status == detail::EstimateStatus::blowup) {
                    rep.outcome = StepOutcome::blowup;
                    proposal = cfg.nu * std::min(0.5 * h, rec.dt_max_k);
                    break;
                }
            }
            rep.k_used = rep.records.back().k;
            if (!split_only)
                for (const auto& r : rep.records)
                    if (r.k >= 1 && r.zeta_tilde > 0.0) dt_max_seen[static_cast<std::size_t>(r.k)] = r.dt_max_k;
            const SweepRecord& fin = rep.records.back();
            if (accept) {
                rep.accepted = true;
                const SweepRecord& basis =
                    rep.outcome == StepOutcome::degenerate ? rep.records[rep.records.size() - 2] : fin;
                rep.dt_next = clamp_dt(std::min(next_dt(basis, cfg, scheme, std::max(k_max, 1)), remembered_cap()), cfg);
                if (!split_only && fin.k >= 1 && fin.zeta_tilde > 0.0 && rep.outcome != StepOutcome::degenerate) {
                    prev_contraction = fin.sigma_tilde * std::pow(fin.zeta_tilde, k_max - fin.k) * std::pow(h, k_max);
                    prev_dt = h;
                }
                u = st.last_node();
                t = last ? tf : t + h;
                res.times.push_back(t);
                if (cfg.store_states) res.states.push_back(u);
                dt = rep.dt_next;
                done = true;
            } else {
                proposal = std::min(proposal, remembered_cap());
                rep.dt_next = clamp_dt(std::min(proposal, cfg.nu * h), cfg);
                if (!(proposal >= cfg.dt_min)) {
                    rep.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                                      std::chrono::steady_clock::now() - wall0).count();
                    res.reports.push_back(rep);
                    throw StepUnderflow("adaptive_integrate: proposed step below dt_min at t = " +
                                        std::to_string(t));
                }
                dt = rep.dt_next;
                ++rejections;
            }
            rep.wall_ns =
                std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - wall0)
                    .count();
            res.reports.push_back(rep);
            if (!done && rejections > cfg.max_rejections)
                throw StepUnderflow("adaptive_integrate: " + std::to_string(cfg.max_rejections) +
                                    " consecutive rejections at t = " + std::to_string(t));
        }
    }
    res.final_state = u;
    return res;
}

/// Convenience overload building the integrator from a problem.
inline AdaptiveResult adaptive_integrate(const ProblemSpec& problem, const SplittingScheme& scheme,
                                         const ControllerConfig& cfg, double t0, double tf,
                                         std::span<const double> u0, double dt0, const SubsolverConfig& sub = {})
{
    const DcsIntegrator dcs = DcsIntegrator::for_problem(problem, scheme, sub);
    return adaptive_integrate(dcs, cfg, t0, tf, u0, dt0, problem.norm);
}

} // namespace dcs
