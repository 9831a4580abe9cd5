#include "physr/simulate.hpp"

#include <cmath>
#include <tuple>

#include <fmt/format.h>

#include "physr/error.hpp"
#include "physr/grid_ops.hpp"
#include "physr/rng.hpp"

namespace physr::data {

namespace {
constexpr int kMaxRetries = 20;
// Negative real-axis extent of the classical RK4 stability region.
constexpr double kRk4RealStability = 2.785;
} // namespace

void rk4_step(const VectorField& f, Eigen::VectorXd& x, double h) {
    Eigen::VectorXd k1(x.size()), k2(x.size()), k3(x.size()), k4(x.size());
    f(x, k1);
    f(x + 0.5 * h * k1, k2);
    f(x + 0.5 * h * k2, k3);
    f(x + h * k3, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory integrate(const VectorField& f, const Eigen::VectorXd& x0, double dt, int substeps, int records,
                     double bound) {
    Trajectory out;
    out.states = Eigen::MatrixXd::Zero(records, x0.size());
    if (records <= 0) return out;
    auto bad = [bound](const Eigen::VectorXd& x) {
        return !x.allFinite() || (bound > 0.0 && x.cwiseAbs().maxCoeff() > bound);
    };
    Eigen::VectorXd x = x0;
    if (bad(x)) {
        out.failed = true;
        return out;
    }
    out.states.row(0) = x.transpose();
    out.completed = 1;
    const double h = dt / substeps;
    for (int k = 1; k < records; ++k) {
        for (int s = 0; s < substeps; ++s) {
            rk4_step(f, x, h);
            if (bad(x)) {
                out.failed = true;
                out.failure_time = (k - 1) * dt + (s + 1) * h;
                return out;
            }
        }
        out.states.row(k) = x.transpose();
        out.completed = k + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------

OdeRhs::OdeRhs(const std::vector<std::string>& states, const std::vector<Expr>& rhs) {
    for (const auto& e : rhs) rhs_.emplace_back(e, states);
}

void OdeRhs::operator()(const Eigen::VectorXd& x, Eigen::VectorXd& dxdt) const {
    dxdt.resize(static_cast<Eigen::Index>(rhs_.size()));
    for (std::size_t i = 0; i < rhs_.size(); ++i) dxdt(static_cast<Eigen::Index>(i)) = rhs_[i].evaluate_row(x.data());
}

VectorField OdeRhs::field() const {
    return [this](const Eigen::VectorXd& x, Eigen::VectorXd& dxdt) { (*this)(x, dxdt); };
}

PdeRhs::PdeRhs(const std::vector<std::string>& states, const std::vector<Expr>& rhs, const Grid& grid,
               int derivative_order)
    : states_(states), grid_(grid), order_(derivative_order) {
    names_ = states;
    for (auto& n : derivative_names(states, order_)) names_.push_back(std::move(n));
    for (const auto& e : rhs) rhs_.emplace_back(e, names_);
}

Eigen::MatrixXd PdeRhs::features(const Eigen::VectorXd& x) const {
    const Eigen::Index n = grid_.points();
    const auto q = static_cast<Eigen::Index>(states_.size());
    Eigen::MatrixXd fields = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, q);
    const Eigen::MatrixXd d = spatial_derivatives(fields, grid_, order_);
    Eigen::MatrixXd out(n, q + d.cols());
    out << fields, d;
    return out;
}

void PdeRhs::operator()(const Eigen::VectorXd& x, Eigen::VectorXd& dxdt) const {
    const Eigen::MatrixXd table = features(x);
    const Eigen::Index n = grid_.points();
    dxdt.resize(x.size());
    for (std::size_t i = 0; i < rhs_.size(); ++i)
        dxdt.segment(static_cast<Eigen::Index>(i) * n, n) = rhs_[i].evaluate(table);
}

VectorField PdeRhs::field() const {
    return [this](const Eigen::VectorXd& x, Eigen::VectorXd& dxdt) { (*this)(x, dxdt); };
}

Eigen::VectorXd spiral_initial_state(const Grid& grid) {
    const Eigen::Index n = grid.points();
    Eigen::VectorXd x(2 * n);
    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            const double px = grid.lo + i * grid.dx();
            const double py = grid.lo + j * grid.dy();
            const double r = std::hypot(px, py);
            const double theta = std::atan2(py, px);
            const Eigen::Index p = static_cast<Eigen::Index>(j) * grid.nx + i;
            x(p) = std::tanh(r) * std::cos(theta - r);
            x(n + p) = std::tanh(r) * std::sin(theta - r);
        }
    }
    return x;
}

double diffusion_step_limit(const Grid& grid, double diffusion) {
    if (diffusion <= 0.0) return std::numeric_limits<double>::infinity();
    const double eig = diffusion * (4.0 / (grid.dx() * grid.dx()) + 4.0 / (grid.dy() * grid.dy()));
    return kRk4RealStability / eig;
}

// ---------------------------------------------------------------------------

namespace {

BundleMeta base_meta(const SystemSpec& spec, std::uint64_t seed) {
    BundleMeta m;
    m.name = spec.name;
    m.kind = spec.kind;
    m.dt = spec.dt;
    m.seed = seed;
    if (spec.pde) m.grid = spec.pde->grid;
    return m;
}

} // namespace

DatasetBundle simulate_ode(const SystemSpec& spec, std::uint64_t seed) {
    if (spec.kind != SystemKind::Ode) throw ArgumentError("simulate_ode needs an ODE system");
    const auto q = static_cast<Eigen::Index>(spec.states.size());
    const OdeRhs rhs(spec.states, spec.rhs);
    const VectorField f = rhs.field();

    std::vector<Column> cols{{"traj_id", Role::Coordinate, {}}, {"t", Role::Coordinate, {}}};
    for (const auto& s : spec.states) cols.push_back({s, Role::Feature, {}});
    for (const auto& s : spec.states) cols.push_back({s + "_t", Role::Target, {}});

    const Eigen::Index rows = static_cast<Eigen::Index>(spec.trajectories) * spec.steps;
    Eigen::MatrixXd values(rows, 2 + 2 * q);
    Rng rng(seed);
    Eigen::VectorXd dxdt(q);
    for (int traj = 0; traj < spec.trajectories; ++traj) {
        Trajectory path;
        bool ok = false;
        for (int attempt = 0; attempt <= kMaxRetries && !ok; ++attempt) {
            Eigen::VectorXd x0(q);
            for (Eigen::Index i = 0; i < q; ++i) x0(i) = rng.uniform(spec.ic_box[i].lo, spec.ic_box[i].hi);
            path = integrate(f, x0, spec.dt, spec.substeps, spec.steps);
            ok = !path.failed;
        }
        if (!ok)
            throw NumericError(fmt::format("system '{}' diverged on trajectory {} after {} retries", spec.name, traj,
                                           kMaxRetries));
        for (int k = 0; k < spec.steps; ++k) {
            const Eigen::Index r = static_cast<Eigen::Index>(traj) * spec.steps + k;
            const Eigen::VectorXd x = path.states.row(k).transpose();
            rhs(x, dxdt);
            values(r, 0) = traj;
            values(r, 1) = k * spec.dt;
            values.row(r).segment(2, q) = x.transpose();
            values.row(r).segment(2 + q, q) = dxdt.transpose();
        }
    }
    return DatasetBundle(std::move(cols), std::move(values), base_meta(spec, seed));
}

DatasetBundle simulate_pde(const SystemSpec& spec, const Eigen::VectorXd& initial_state) {
    if (spec.kind != SystemKind::Pde || !spec.pde) throw ArgumentError("simulate_pde needs a PDE system");
    const Grid& grid = spec.pde->grid;
    const double h = spec.dt / spec.substeps;
    const double limit = diffusion_step_limit(grid, spec.pde->diffusion);
    if (h > limit)
        throw NumericError(fmt::format("CFL violation: integration step {} exceeds the diffusion stability bound {}",
                                       h, limit));
    const Eigen::Index n = grid.points();
    const auto q = static_cast<Eigen::Index>(spec.states.size());
    if (initial_state.size() != n * q) throw ArgumentError("initial state does not match the grid");

    const PdeRhs rhs(spec.states, spec.rhs, grid, spec.pde->derivative_order);
    std::vector<Eigen::VectorXd> snapshots;
    snapshots.reserve(static_cast<std::size_t>(spec.steps));
    {
        // Integrate once, keeping full snapshots rather than a Trajectory matrix of size steps x (n q).
        Eigen::VectorXd x = initial_state;
        const VectorField f = rhs.field();
        for (int k = 0; k < spec.steps; ++k) {
            if (k > 0) {
                for (int s = 0; s < spec.substeps; ++s) rk4_step(f, x, h);
            }
            if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceBound)
                throw NumericError(fmt::format("system '{}' diverged at t = {}", spec.name, k * spec.dt));
            snapshots.push_back(x);
        }
    }

    std::vector<Column> cols{{"traj_id", Role::Coordinate, {}}, {"t", Role::Coordinate, {}},
                             {"x", Role::Coordinate, {}},       {"y", Role::Coordinate, {}}};
    for (const auto& name : rhs.feature_names()) cols.push_back({name, Role::Feature, {}});
    for (const auto& s : spec.states) cols.push_back({s + "_t", Role::Target, {}});
    const auto n_features = static_cast<Eigen::Index>(rhs.feature_names().size());

    Eigen::MatrixXd values(n * spec.steps, 4 + n_features + q);
    Eigen::VectorXd dxdt;
    for (int k = 0; k < spec.steps; ++k) {
        const Eigen::MatrixXd table = rhs.features(snapshots[static_cast<std::size_t>(k)]);
        rhs(snapshots[static_cast<std::size_t>(k)], dxdt);
        const Eigen::Index base = static_cast<Eigen::Index>(k) * n;
        for (int j = 0; j < grid.ny; ++j) {
            for (int i = 0; i < grid.nx; ++i) {
                const Eigen::Index p = static_cast<Eigen::Index>(j) * grid.nx + i;
                auto row = values.row(base + p);
                row(0) = 0.0;
                row(1) = k * spec.dt;
                row(2) = grid.lo + i * grid.dx();
                row(3) = grid.lo + j * grid.dy();
                row.segment(4, n_features) = table.row(p);
                for (Eigen::Index s = 0; s < q; ++s) row(4 + n_features + s) = dxdt(s * n + p);
            }
        }
    }
    return DatasetBundle(std::move(cols), std::move(values), base_meta(spec, 0));
}

DatasetBundle simulate_pde(const SystemSpec& spec, std::uint64_t seed) {
    if (spec.kind != SystemKind::Pde || !spec.pde) throw ArgumentError("simulate_pde needs a PDE system");
    if (spec.pde->initial_condition != "spiral" || spec.states.size() != 2)
        throw ArgumentError("only the two-field spiral initial condition is built in");
    DatasetBundle b = simulate_pde(spec, spiral_initial_state(spec.pde->grid));
    b.meta().seed = seed;
    return b;
}

DatasetBundle simulate(const SystemSpec& spec, std::uint64_t seed) {
    return spec.kind == SystemKind::Pde ? simulate_pde(spec, seed) : simulate_ode(spec, seed);
}

GeneratedSplits generate_splits(const SystemSpec& spec, double noise_level, std::uint64_t seed) {
    const SplitPolicy policy{spec.kind == SystemKind::Pde ? SplitPolicy::Kind::ByTimePrefix
                                                          : SplitPolicy::Kind::ByTrajectory,
                             spec.train_fraction};
    const auto clean = simulate(spec, seed);
    const auto noisy = add_noise_and_difference(clean, NoiseSpec{noise_level, seed + 1});
    GeneratedSplits out;
    std::tie(out.clean_train, out.clean_test) = split(clean, policy);
    std::tie(out.noisy_train, out.noisy_test) = split(noisy, policy);
    return out;
}

} // namespace physr::data
