#include "dhn/lowlevel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dhn/log.hpp"
#include "dhn/optim.hpp"

#ifdef DHN_HAVE_OPENMP
#include <omp.h>
#endif

namespace dhn {

int HorizonGrid::stages() const {
    if (horizon_s <= 0.0 || step_s <= 0.0)
        throw SpecError("horizon and control interval must be positive");
    const double ratio = horizon_s / step_s;
    const int n = static_cast<int>(std::lround(ratio));
    if (std::abs(ratio - n) > 1e-9 || n < 1)
        throw SpecError("horizon must be an integer multiple of the control interval");
    return n;
}

CandidateSet CandidateSet::log_spaced(double min_pa, double max_pa, int count) {
    if (min_pa <= 0.0 || max_pa <= min_pa || count < 1)
        throw SpecError("invalid candidate grid");
    CandidateSet c;
    if (count == 1) {
        c.pressures_pa.push_back(min_pa);
        return c;
    }
    const double lmin = std::log(min_pa), lmax = std::log(max_pa);
    for (int i = 0; i < count; ++i)
        c.pressures_pa.push_back(
            std::exp(lmin + (lmax - lmin) * static_cast<double>(i) / (count - 1)));
    return c;
}

void CandidateSet::validate() const {
    if (pressures_pa.empty()) throw SpecError("empty candidate set");
    for (size_t i = 0; i < pressures_pa.size(); ++i) {
        if (pressures_pa[i] <= 0.0) throw SpecError("candidate pressures must be positive");
        if (i && pressures_pa[i] <= pressures_pa[i - 1])
            throw SpecError("candidate pressures must be strictly increasing");
    }
}

int SubsystemProblem::users() const {
    return static_cast<int>(subsystem->graph.user_edges().size());
}

SubsystemProblem transcribe(const Subsystem& sub, const SubsystemContext& ctx,
                            const HorizonGrid& grid, double dp_tot_pa) {
    if (dp_tot_pa <= 0.0) throw SpecError("total pressure drop must be positive");
    const int stages = grid.stages();
    if (static_cast<int>(ctx.ambient_c.size()) != stages)
        throw SpecError("ambient series must cover every stage");
    if (ctx.buildings.size() != sub.graph.user_edges().size())
        throw SpecError("one building snapshot per subsystem user required");
    for (const Building& b : ctx.buildings) {
        const double t0 = ctx.t_start_s;
        if (!b.demand.covers(t0, t0 + grid.horizon_s))
            throw SpecError("demand profile for '" + b.id + "' does not cover the horizon");
    }
    SubsystemProblem p;
    p.subsystem = &sub;
    p.context = ctx;
    p.grid = grid;
    p.dp_tot_pa = dp_tot_pa;
    return p;
}

// ---------------------------------------------------------------------------
// Subsystem model: feed-side thermal structure and hydraulic machinery
// ---------------------------------------------------------------------------

struct SubsystemModel::Impl {
    struct FeedEdge {
        int edge = -1;               // local edge id
        double c1 = 0.0, c2 = 0.0;
        std::vector<int> upstream;   // feed positions flowing into the tail
        bool root_inflow = false;
        int state_row = -1;          // row in the subsystem non-user edge order
    };
    std::vector<FeedEdge> feed;      // in topological order
    std::vector<int> feed_pos_of_edge;
    struct UserTap {
        int edge = -1;               // local user edge id
        int bypass = -1;             // parallel bypass edge id
        std::vector<int> upstream;   // feed positions entering the tail node
        bool root_inflow = false;
    };
    std::vector<UserTap> users;
    std::vector<int> bypass_edges;   // all bypass edges (cost terms)
    Eigen::VectorXd zeta_nominal;
    int thermal_substeps = 128;
};

SubsystemModel::SubsystemModel(const Subsystem& sub)
    : sub_(&sub), solver_(sub.graph) {
    auto impl = std::make_shared<Impl>();
    const NetworkGraph& g = sub.graph;
    impl->zeta_nominal = g.nominal_zeta();
    impl->feed_pos_of_edge.assign(g.edge_count(), -1);

    // Feed edges in topological order (upstream before downstream).
    std::vector<int> feed_edges = g.edges_of_kind(EdgeKind::Feed);
    std::vector<int> indeg(feed_edges.size(), 0);
    std::vector<int> pos_of(g.edge_count(), -1);
    for (size_t i = 0; i < feed_edges.size(); ++i) pos_of[feed_edges[i]] = static_cast<int>(i);
    std::vector<std::vector<int>> down(feed_edges.size());
    for (size_t i = 0; i < feed_edges.size(); ++i) {
        const Edge& ed = g.edge(feed_edges[i]);
        for (int out : g.out_edges(ed.head)) {
            if (pos_of[out] >= 0) {
                down[i].push_back(pos_of[out]);
                indeg[pos_of[out]]++;
            }
        }
    }
    std::vector<int> order;
    for (size_t i = 0; i < feed_edges.size(); ++i)
        if (indeg[i] == 0) order.push_back(static_cast<int>(i));
    for (size_t h = 0; h < order.size(); ++h)
        for (int d : down[order[h]])
            if (--indeg[d] == 0) order.push_back(d);
    if (order.size() != feed_edges.size())
        throw SpecError("feed network is not acyclic");

    std::vector<int> state_row(g.edge_count(), -1);
    int row = 0;
    for (int e = 0; e < g.edge_count(); ++e)
        if (g.edge(e).kind != EdgeKind::User) state_row[e] = row++;

    for (size_t h = 0; h < order.size(); ++h) {
        const int e = feed_edges[order[h]];
        Impl::FeedEdge fe;
        fe.edge = e;
        const PipeCoefficients c = pipe_coefficients(g.edge(e).pipe, g.fluid());
        fe.c1 = c.c1;
        fe.c2 = c.c2;
        fe.state_row = state_row[e];
        const int tail = g.edge(e).tail;
        for (int in : g.in_edges(tail)) {
            if (g.edge(in).kind == EdgeKind::Feed) {
                fe.upstream.push_back(-1); // patched below once positions exist
                fe.upstream.back() = in;   // store edge id temporarily
            } else if (g.edge(in).kind != EdgeKind::User) {
                throw SpecError("unexpected non-feed inflow to feed edge '" +
                                g.edge(e).name + "'");
            }
        }
        fe.root_inflow = (tail == g.root());
        impl->feed_pos_of_edge[e] = static_cast<int>(impl->feed.size());
        impl->feed.push_back(std::move(fe));
    }
    for (auto& fe : impl->feed)
        for (int& up : fe.upstream) up = impl->feed_pos_of_edge[up];

    for (int u : g.user_edges()) {
        Impl::UserTap tap;
        tap.edge = u;
        tap.bypass = g.bypass_of_user(u);
        const int tail = g.edge(u).tail;
        for (int in : g.in_edges(tail))
            if (g.edge(in).kind == EdgeKind::Feed)
                tap.upstream.push_back(impl->feed_pos_of_edge[in]);
        tap.root_inflow = (tail == g.root());
        impl->users.push_back(std::move(tap));
    }
    impl->bypass_edges = g.edges_of_kind(EdgeKind::Bypass);
    impl_ = impl;

    // Upper supply bound: wide-open valves at a head well above the candidate
    // range; later-stage supply decisions live inside (0, max].
    Eigen::VectorXd z = impl_->zeta_nominal;
    for (int u : g.user_edges()) z(u) = g.edge(u).zeta / 100.0;
    const HydraulicState st = solver_.solve_given_head(z, 600.0);
    max_supply_kg_s_ = std::max(1.0, 2.0 * st.supply_flow_kg_s);
}

Eigen::VectorXd SubsystemModel::zeta_lower() const {
    const auto& users = sub_->graph.user_edges();
    Eigen::VectorXd lo(static_cast<int>(users.size()));
    for (size_t i = 0; i < users.size(); ++i)
        lo(static_cast<int>(i)) = sub_->graph.edge(users[i]).zeta / 100.0;
    return lo;
}

Eigen::VectorXd SubsystemModel::zeta_upper() const {
    const auto& users = sub_->graph.user_edges();
    Eigen::VectorXd hi(static_cast<int>(users.size()));
    for (size_t i = 0; i < users.size(); ++i)
        hi(static_cast<int>(i)) = sub_->graph.edge(users[i]).zeta * 100.0;
    return hi;
}

// ---------------------------------------------------------------------------
// Rollout of the transcribed problem
// ---------------------------------------------------------------------------

namespace {

class Rollout {
public:
    Rollout(const SubsystemModel& model, const SubsystemProblem& p)
        : model_(&model), impl_(&model.impl()), p_(&p),
          users_(p.users()), stages_(p.stages()) {
        const NetworkGraph& g = model.subsystem().graph;
        cp_ = g.fluid().specific_heat_j_per_kgk;
        dt_ = p.grid.step_s;
        // margined envelope bounds and scales
        f_lower_.resize(users_);
        f_upper_.resize(users_);
        span_.resize(users_);
        f_init_.resize(users_);
        for (int u = 0; u < users_; ++u) {
            const Building& b = p.context.buildings[u];
            f_lower_(u) = b.lower_bound_j() * p.context.planning_margin;
            f_upper_(u) = b.upper_bound_j() * p.context.planning_margin;
            span_(u) = b.heat_capacity_j_per_k *
                       std::max(b.delta_t_upper_k - b.delta_t_lower_k, 0.1);
            f_init_(u) = b.used_flexibility_j;
        }
        // demand per (user, stage)
        demand_.resize(users_, stages_);
        for (int u = 0; u < users_; ++u)
            for (int k = 0; k < stages_; ++k)
                demand_(u, k) = p.context.buildings[u].demand.at(
                    p.context.t_start_s + (k + 0.5) * dt_);
        // initial feed temperatures from the subsystem state snapshot
        t_init_.resize(static_cast<int>(impl_->feed.size()));
        for (size_t f = 0; f < impl_->feed.size(); ++f)
            t_init_(static_cast<int>(f)) = p.context.initial_temp_c(impl_->feed[f].state_row);
    }

    int users() const { return users_; }
    int stages() const { return stages_; }
    int dim() const { return users_ * stages_ + (stages_ - 1); }
    int stage_of_var(int i) const {
        return i < users_ * stages_ ? i / users_ : i - users_ * stages_ + 1;
    }

    Eigen::VectorXd lower_bounds() const {
        Eigen::VectorXd lo(dim());
        const Eigen::VectorXd zl = model_->zeta_lower();
        for (int k = 0; k < stages_; ++k)
            for (int u = 0; u < users_; ++u) lo(k * users_ + u) = std::log(zl(u));
        for (int k = 1; k < stages_; ++k)
            lo(users_ * stages_ + k - 1) = std::log(1e-4);
        return lo;
    }
    Eigen::VectorXd upper_bounds() const {
        Eigen::VectorXd hi(dim());
        const Eigen::VectorXd zu = model_->zeta_upper();
        for (int k = 0; k < stages_; ++k)
            for (int u = 0; u < users_; ++u) hi(k * users_ + u) = std::log(zu(u));
        for (int k = 1; k < stages_; ++k)
            hi(users_ * stages_ + k - 1) = std::log(model_->max_supply_kg_s());
        return hi;
    }

    struct Data {
        std::vector<HydraulicWarmStart> warm;
        std::vector<Eigen::VectorXd> flows;
        std::vector<double> bypass_sum;
        std::vector<Eigen::VectorXd> t_start; // stage boundary feed temps
        Eigen::MatrixXd flex;                 // users x stages, after each stage
        Eigen::VectorXd mdot0;
        double cost_kg = 0.0;
        bool fail = false;
    };

    /// Full rollout (base == nullptr) or a tail recomputation from stage
    /// `k_from` where only stage-`k_from` decisions differ from `base`.
    bool run(const Eigen::VectorXd& x, int k_from, const Data* base, Data& out) const {
        const NetworkGraph& g = model_->subsystem().graph;
        const int ne = g.edge_count();
        out.warm.resize(stages_);
        out.flows.resize(stages_);
        out.bypass_sum.assign(stages_, 0.0);
        out.t_start.resize(stages_ + 1);
        out.flex.resize(users_, stages_);
        out.mdot0.resize(stages_);
        out.fail = false;
        out.cost_kg = 0.0;

        Eigen::VectorXd zeta = impl_->zeta_nominal;
        Eigen::VectorXd f_run = f_init_;
        if (base && k_from > 0) {
            for (int k = 0; k < k_from; ++k) {
                out.flows[k] = base->flows[k];
                out.bypass_sum[k] = base->bypass_sum[k];
                out.t_start[k] = base->t_start[k];
                out.flex.col(k) = base->flex.col(k);
                out.mdot0(k) = base->mdot0(k);
                out.warm[k] = base->warm[k];
                out.cost_kg += dt_ * base->bypass_sum[k];
            }
            f_run = base->flex.col(k_from - 1);
        }
        if (k_from == 0) out.t_start[0] = t_init_;

        for (int k = k_from; k < stages_; ++k) {
            const bool reuse_hydraulics = base && k > k_from;
            if (reuse_hydraulics) {
                out.flows[k] = base->flows[k];
                out.bypass_sum[k] = base->bypass_sum[k];
                out.mdot0(k) = base->mdot0(k);
                out.warm[k] = base->warm[k];
            } else {
                for (int u = 0; u < users_; ++u)
                    zeta(g.user_edges()[u]) = std::exp(x(k * users_ + u));
                HydraulicWarmStart warm =
                    base ? base->warm[k]
                         : (k > 0 ? out.warm[k - 1] : HydraulicWarmStart{});
                try {
                    HydraulicState st;
                    if (k == 0)
                        st = model_->hydraulics().solve_given_head(zeta, p_->dp_tot_pa, &warm);
                    else
                        st = model_->hydraulics().solve_given_supply(
                            zeta, std::exp(x(users_ * stages_ + k - 1)), &warm);
                    out.flows[k] = std::move(st.edge_flow_kg_s);
                    out.mdot0(k) = st.supply_flow_kg_s;
                    out.warm[k] = warm;
                } catch (const NonConvergence&) {
                    out.fail = true;
                    return false;
                }
                double by = 0.0;
                for (int e : impl_->bypass_edges) by += out.flows[k](e);
                out.bypass_sum[k] = by;
            }
            (void)ne;
            // thermal stage + delivered heat
            Eigen::VectorXd heat_w;
            out.t_start[k + 1] = thermal_stage(out.flows[k], out.mdot0(k), out.t_start[k],
                                               p_->context.ambient_c[k], heat_w);
            for (int u = 0; u < users_; ++u) {
                f_run(u) += (heat_w(u) - demand_(u, k)) * dt_;
                out.flex(u, k) = f_run(u);
            }
            out.cost_kg += dt_ * out.bypass_sum[k];
        }
        return true;
    }

    // Backward-Euler feed-side stage with fixed substep count; delivered heat
    // is the substep mean evaluated at end-of-substep temperatures, matching
    // the interval simulator's quadrature.
    Eigen::VectorXd thermal_stage(const Eigen::VectorXd& flows, double mdot0,
                                  const Eigen::VectorXd& t0, double ambient_c,
                                  Eigen::VectorXd& heat_w) const {
        const NetworkGraph& g = model_->subsystem().graph;
        const int nf = static_cast<int>(impl_->feed.size());
        const int ns = impl_->thermal_substeps;
        const double h = dt_ / ns;
        Eigen::VectorXd t = t0, tn(nf);
        heat_w = Eigen::VectorXd::Zero(users_);
        for (int s = 0; s < ns; ++s) {
            for (int f = 0; f < nf; ++f) {
                const auto& fe = impl_->feed[f];
                const double m = flows(fe.edge);
                double mix_flow = 0.0, mix_enth = 0.0;
                for (int up : fe.upstream) {
                    const double mf = flows(impl_->feed[up].edge);
                    mix_flow += mf;
                    mix_enth += mf * tn(up);
                }
                if (fe.root_inflow) {
                    mix_flow += mdot0;
                    mix_enth += mdot0 * p_->context.t0_c;
                }
                const double tin = mix_flow > 0.0 ? mix_enth / mix_flow : t(f);
                tn(f) = (t(f) + h * (fe.c1 * m * tin + fe.c2 * ambient_c)) /
                        (1.0 + h * (fe.c1 * m + fe.c2));
            }
            for (int u = 0; u < users_; ++u) {
                const auto& tap = impl_->users[u];
                double mix_flow = 0.0, mix_enth = 0.0;
                for (int up : tap.upstream) {
                    const double mf = flows(impl_->feed[up].edge);
                    mix_flow += mf;
                    mix_enth += mf * tn(up);
                }
                if (tap.root_inflow) {
                    mix_flow += mdot0;
                    mix_enth += mdot0 * p_->context.t0_c;
                }
                const double tin =
                    mix_flow > 0.0 ? mix_enth / mix_flow : p_->context.tsetr_c;
                heat_w(u) += flows(tap.edge) * cp_ * (tin - p_->context.tsetr_c);
            }
            t.swap(tn);
        }
        heat_w /= static_cast<double>(ns);
        return t;
    }

    // Normalized envelope constraint values, ordered (stage-major, user, lo/hi).
    void constraints(const Data& d, Eigen::VectorXd& gval) const {
        gval.resize(2 * users_ * stages_);
        for (int k = 0; k < stages_; ++k)
            for (int u = 0; u < users_; ++u) {
                const double f = d.flex(u, k);
                gval(2 * (k * users_ + u)) = (f_lower_(u) - f) / span_(u);
                gval(2 * (k * users_ + u) + 1) = (f - f_upper_(u)) / span_(u);
            }
    }

    const Eigen::VectorXd& span() const { return span_; }
    double dt() const { return dt_; }
    const Eigen::MatrixXd& demand() const { return demand_; }

    const SubsystemModel* model_;
    const SubsystemModel::Impl* impl_;
    const SubsystemProblem* p_;
    int users_, stages_;
    double cp_ = 4179.0, dt_ = 600.0;
    Eigen::VectorXd f_lower_, f_upper_, span_, f_init_, t_init_;
    Eigen::MatrixXd demand_;
};

double penalty_value(double g, double lambda, double mu) {
    const double t = lambda + mu * g;
    if (t > 0.0) return (t * t - lambda * lambda) / (2.0 * mu);
    return -lambda * lambda / (2.0 * mu);
}

} // namespace

// ---------------------------------------------------------------------------
// Augmented-Lagrangian stage solve
// ---------------------------------------------------------------------------

StageSolution solve_stage(const SubsystemModel& model, const SubsystemProblem& problem,
                          SolveWarmStart* warm) {
    Rollout roll(model, problem);
    const int n = roll.dim();
    const int users = roll.users();
    const int stages = roll.stages();
    const int ncon = 2 * users * stages;
    const Eigen::VectorXd lo = roll.lower_bounds();
    const Eigen::VectorXd hi = roll.upper_bounds();

    StageSolution sol;
    sol.zeta_user.resize(stages, users);
    sol.mdot0_kg_s.resize(stages);

    // Starting point: warm start shifted one stage, or the nominal valves
    // with the head-implied supply flow everywhere.
    Eigen::VectorXd x(n);
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(ncon);
    bool have_warm = warm && warm->valid &&
                     warm->zeta_user.rows() == stages && warm->zeta_user.cols() == users;
    if (have_warm) {
        for (int k = 0; k < stages; ++k) {
            const int src = std::min(k + 1, stages - 1);
            for (int u = 0; u < users; ++u)
                x(k * users + u) = std::log(warm->zeta_user(src, u));
        }
        for (int k = 1; k < stages; ++k) {
            const int src = std::min(k + 1, stages - 1);
            x(users * stages + k - 1) = std::log(std::max(1e-4, warm->mdot0_kg_s(src)));
        }
        if (warm->multipliers.size() == ncon) lambda = warm->multipliers;
    } else {
        const NetworkGraph& g = model.subsystem().graph;
        Eigen::VectorXd zeta = g.nominal_zeta();
        double m0_nom = 1.0;
        try {
            const HydraulicState st =
                model.hydraulics().solve_given_head(zeta, problem.dp_tot_pa);
            m0_nom = st.supply_flow_kg_s;
        } catch (const NonConvergence&) {
        }
        for (int k = 0; k < stages; ++k)
            for (int u = 0; u < users; ++u)
                x(k * users + u) = std::log(g.edge(g.user_edges()[u]).zeta);
        for (int k = 1; k < stages; ++k)
            x(users * stages + k - 1) = std::log(std::clamp(m0_nom, 1e-4, model.max_supply_kg_s()));
    }
    x = x.cwiseMax(lo).cwiseMin(hi);

    Rollout::Data base;
    if (!roll.run(x, 0, nullptr, base)) {
        sol.feasible = false;
        sol.note = "hydraulics failed at the starting point";
        return sol;
    }
    const double cost_scale = std::max(1.0, base.cost_kg);

    double mu = 10.0;
    const double fd_step = 1e-5;
    Eigen::VectorXd gval(ncon);

    auto al_value_of = [&](const Rollout::Data& d) {
        Eigen::VectorXd gv;
        roll.constraints(d, gv);
        double v = d.cost_kg / cost_scale;
        for (int i = 0; i < ncon; ++i) v += penalty_value(gv(i), lambda(i), mu);
        return v;
    };

    auto value = [&](const Eigen::VectorXd& xx) {
        Rollout::Data d;
        if (!roll.run(xx, 0, nullptr, d)) return 1e8;
        return al_value_of(d);
    };

    Rollout::Data grad_base, scratch;
    auto gradient = [&](const Eigen::VectorXd& xx) {
        Eigen::VectorXd g(n);
        if (!roll.run(xx, 0, nullptr, grad_base)) {
            g.setZero();
            return g;
        }
        for (int i = 0; i < n; ++i) {
            const int k = roll.stage_of_var(i);
            Eigen::VectorXd xp = xx;
            xp(i) = xx(i) + fd_step;
            double fp = roll.run(xp, k, &grad_base, scratch) ? al_value_of(scratch) : 1e8;
            xp(i) = xx(i) - fd_step;
            double fm = roll.run(xp, k, &grad_base, scratch) ? al_value_of(scratch) : 1e8;
            g(i) = (fp - fm) / (2.0 * fd_step);
        }
        return g;
    };

    // Outer loop: multiplier updates with stall-based infeasibility detection.
    double viol = std::numeric_limits<double>::infinity();
    double last_pg = std::numeric_limits<double>::infinity();
    int stalled = 0;
    int total_iters = 0;
    const int max_outer = 14;
    double inner_tol = 1e-4;
    for (int outer = 0; outer < max_outer; ++outer) {
        LbfgsOptions opts;
        opts.max_iterations = outer == 0 ? 160 : 70;
        opts.tolerance = inner_tol;
        const LbfgsResult r = projected_lbfgs(value, gradient, lo, hi, x, opts);
        x = r.x;
        total_iters += r.iterations;
        last_pg = r.projected_gradient_norm;

        if (!roll.run(x, 0, nullptr, base)) {
            sol.feasible = false;
            sol.note = "hydraulics failed during optimization";
            return sol;
        }
        roll.constraints(base, gval);
        const double new_viol = std::max(0.0, gval.maxCoeff());
        const bool improving = new_viol < 0.25 * viol;
        if (new_viol > 1e-6 && !improving)
            stalled++;
        else
            stalled = 0;
        viol = new_viol;
        if (viol <= 1e-7 && last_pg <= 3e-7) break;
        if (stalled >= 5) {
            sol.feasible = false;
            sol.constraint_violation = viol;
            sol.kkt_residual = last_pg;
            sol.iterations = total_iters;
            sol.note = "constraint violation stalled above 1e-6";
            return sol;
        }
        for (int i = 0; i < ncon; ++i)
            lambda(i) = std::max(0.0, lambda(i) + mu * gval(i));
        if (!improving) mu = std::min(mu * 8.0, 1e9);
        inner_tol = std::max(3e-7, inner_tol * 0.15);
    }

    // Feasibility polish: Gauss-Newton on the violated envelope constraints.
    // Constraint values are exact function evaluations, so this drives the
    // violation far below what FD-gradient optimization alone can reach.
    const double viol_target = 1e-8;
    for (int pass = 0; pass < 6 && viol > viol_target; ++pass) {
        std::vector<int> active;
        for (int i = 0; i < ncon; ++i)
            if (gval(i) > -1e-9) active.push_back(i);
        if (active.empty()) break;
        const int na = static_cast<int>(active.size());
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(na, n);
        Eigen::VectorXd rhs(na);
        for (int a = 0; a < na; ++a) rhs(a) = -std::max(0.0, gval(active[a]));
        Eigen::VectorXd gv_p(ncon), gv_m(ncon);
        for (int i = 0; i < n; ++i) {
            const int k = roll.stage_of_var(i);
            Eigen::VectorXd xp = x;
            xp(i) = x(i) + fd_step;
            if (!roll.run(xp, k, &base, scratch)) continue;
            roll.constraints(scratch, gv_p);
            xp(i) = x(i) - fd_step;
            if (!roll.run(xp, k, &base, scratch)) continue;
            roll.constraints(scratch, gv_m);
            for (int a = 0; a < na; ++a)
                jac(a, i) = (gv_p(active[a]) - gv_m(active[a])) / (2.0 * fd_step);
        }
        const Eigen::MatrixXd jjt =
            jac * jac.transpose() + 1e-12 * Eigen::MatrixXd::Identity(na, na);
        const Eigen::VectorXd dx = jac.transpose() * jjt.ldlt().solve(rhs);
        x = (x + dx).cwiseMax(lo).cwiseMin(hi);
        if (!roll.run(x, 0, nullptr, base)) {
            sol.feasible = false;
            sol.note = "hydraulics failed during polish";
            return sol;
        }
        roll.constraints(base, gval);
        viol = std::max(0.0, gval.maxCoeff());
    }

    sol.feasible = viol <= viol_target;
    sol.constraint_violation = viol;
    sol.kkt_residual = last_pg;
    sol.iterations = total_iters;
    sol.cost_kg = base.cost_kg;
    sol.mdot0_kg_s = base.mdot0;
    sol.mdot0_first_kg_s = base.mdot0(0);
    for (int k = 0; k < stages; ++k)
        for (int u = 0; u < users; ++u) sol.zeta_user(k, u) = std::exp(x(k * users + u));
    if (!sol.feasible) sol.note = "polish could not restore feasibility";

    if (sol.feasible && warm) {
        warm->valid = true;
        warm->zeta_user = sol.zeta_user;
        warm->mdot0_kg_s = sol.mdot0_kg_s;
        warm->multipliers = lambda;
    }
    return sol;
}

bool CostTable::any_feasible() const {
    return std::any_of(entries.begin(), entries.end(),
                       [](const CostTableEntry& e) { return e.feasible; });
}

CostTable sweep_candidates(const SubsystemModel& model, const SubsystemContext& ctx,
                           const HorizonGrid& grid, const CandidateSet& candidates,
                           ExecutionPolicy policy, std::vector<SolveWarmStart>* warm) {
    candidates.validate();
    const int nc = static_cast<int>(candidates.pressures_pa.size());
    CostTable table;
    table.entries.resize(nc);
    if (warm && static_cast<int>(warm->size()) != nc)
        warm->assign(nc, SolveWarmStart{});

    auto solve_one = [&](int i) {
        const double dp = candidates.pressures_pa[i];
        const SubsystemProblem problem = transcribe(model.subsystem(), ctx, grid, dp);
        SolveWarmStart* w = warm ? &(*warm)[i] : nullptr;
        CostTableEntry e;
        e.dp_tot_pa = dp;
        e.solution = solve_stage(model, problem, w);
        e.feasible = e.solution.feasible;
        e.cost_kg = e.solution.cost_kg;
        e.mdot0_kg_s = e.solution.mdot0_first_kg_s;
        table.entries[i] = std::move(e);
    };

    if (policy == ExecutionPolicy::OpenMP) {
#ifdef DHN_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < nc; ++i) solve_one(i);
#else
        for (int i = 0; i < nc; ++i) solve_one(i);
#endif
    } else {
        for (int i = 0; i < nc; ++i) solve_one(i);
    }
    return table;
}

void append_cost_table_csv(const std::string& path, int step, double time_s,
                           const std::vector<CostTable>& tables, bool write_header) {
    std::ofstream out(path, write_header ? std::ios::trunc : std::ios::app);
    if (!out) throw SpecError("cannot write cost table CSV '" + path + "'");
    if (write_header) out << "step,time_s,subsystem,dp_tot_pa,feasible,cost_kg,mdot0_kg_s\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const CostTable& t : tables)
        for (const CostTableEntry& e : t.entries)
            out << step << "," << num(time_s) << "," << t.subsystem << "," << num(e.dp_tot_pa)
                << "," << (e.feasible ? 1 : 0) << "," << (e.feasible ? num(e.cost_kg) : "")
                << "," << (e.feasible ? num(e.mdot0_kg_s) : "") << "\n";
}

ReplayResult replay_solution(const SubsystemModel& model, const SubsystemProblem& problem,
                             const StageSolution& sol) {
    const NetworkGraph& g = model.subsystem().graph;
    const int stages = problem.stages();
    const int users = problem.users();
    ReplayResult res;
    res.final_flex_j.resize(users);

    ThermalState state;
    state.temp_c = problem.context.initial_temp_c;
    state.time_s = problem.context.t_start_s;
    Eigen::VectorXd flex(users);
    for (int u = 0; u < users; ++u) flex(u) = problem.context.buildings[u].used_flexibility_j;

    Eigen::VectorXd zeta = g.nominal_zeta();
    for (int k = 0; k < stages; ++k) {
        for (int u = 0; u < users; ++u) zeta(g.user_edges()[u]) = sol.zeta_user(k, u);
        const HydraulicState hyd =
            solve_flow_given_supply(g, zeta, std::max(sol.mdot0_kg_s(k), 1e-12));
        BoundaryConditions bcs;
        bcs.supply_temp_c = problem.context.t0_c;
        bcs.return_set_temp_c = problem.context.tsetr_c;
        bcs.ambient_temp_c = problem.context.ambient_c[k];
        Eigen::VectorXd mean_heat;
        state = simulate_interval(g, hyd, state, bcs, problem.grid.step_s, 1e-4, nullptr,
                                  &mean_heat);
        for (int u = 0; u < users; ++u) {
            const Building& b = problem.context.buildings[u];
            const double qout = b.demand.at(problem.context.t_start_s +
                                            (k + 0.5) * problem.grid.step_s);
            flex(u) += (mean_heat(u) - qout) * problem.grid.step_s;
            const double over = std::max(flex(u) - b.upper_bound_j(),
                                         b.lower_bound_j() - flex(u));
            res.max_envelope_violation_j = std::max(res.max_envelope_violation_j, over);
        }
        double by = 0.0;
        for (int e : g.edges_of_kind(EdgeKind::Bypass)) by += hyd.edge_flow_kg_s(e);
        res.cost_kg += problem.grid.step_s * by;
    }
    res.final_flex_j = flex;
    return res;
}

} // namespace dhn
