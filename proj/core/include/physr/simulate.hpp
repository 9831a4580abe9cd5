#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "physr/bundle.hpp"
#include "physr/compiled_expr.hpp"
#include "physr/systems.hpp"

namespace physr::data {

/// States whose magnitude exceeds this count as diverged.
inline constexpr double kDivergenceBound = 1e6;

using VectorField = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& dxdt)>;

/// One classical fourth-order Runge-Kutta step of size h.
void rk4_step(const VectorField& f, Eigen::VectorXd& x, double h);

struct Trajectory {
    /// records x dim, row k holds the state at t0 + k*dt.
    Eigen::MatrixXd states;
    /// Rows actually produced; < requested when the run failed.
    int completed = 0;
    bool failed = false;
    /// Time of the first non-finite or out-of-bound state.
    double failure_time = 0.0;
};

/// Integrate with `substeps` RK4 steps per interval dt, recording `records`
/// states (including the initial one). Stops at the first non-finite state,
/// or at |x| > bound when `bound` > 0.
Trajectory integrate(const VectorField& f, const Eigen::VectorXd& x0, double dt, int substeps, int records,
                     double bound = kDivergenceBound);

/// ODE right-hand side f(x) from expressions over the state names.
class OdeRhs {
public:
    OdeRhs(const std::vector<std::string>& states, const std::vector<Expr>& rhs);
    void operator()(const Eigen::VectorXd& x, Eigen::VectorXd& dxdt) const;
    VectorField field() const;

private:
    std::vector<CompiledExpr> rhs_;
};

/// Method-of-lines right-hand side on a periodic grid. The state vector
/// stacks the q fields (field-major, each in grid order). Expressions may
/// reference the states and their spatial derivatives (u_x, u_xx, ...).
class PdeRhs {
public:
    PdeRhs(const std::vector<std::string>& states, const std::vector<Expr>& rhs, const Grid& grid,
           int derivative_order = 2);
    void operator()(const Eigen::VectorXd& x, Eigen::VectorXd& dxdt) const;
    VectorField field() const;
    /// Feature table (points x (q + derivative columns)) for one state vector.
    Eigen::MatrixXd features(const Eigen::VectorXd& x) const;
    const std::vector<std::string>& feature_names() const noexcept { return names_; }

private:
    std::vector<std::string> states_;
    Grid grid_;
    int order_;
    std::vector<std::string> names_;
    std::vector<CompiledExpr> rhs_;
};

/// Spiral initial condition u = tanh(r)cos(theta - r), v = tanh(r)sin(theta - r).
Eigen::VectorXd spiral_initial_state(const Grid& grid);

/// Largest stable RK4 step for pure diffusion on the grid.
double diffusion_step_limit(const Grid& grid, double diffusion);

/// ODE data: trajectories x steps rows with exact targets from the RHS.
/// Trajectories that leave the divergence bound are redrawn (20 retries).
DatasetBundle simulate_ode(const SystemSpec& spec, std::uint64_t seed);

/// PDE data on the configured grid with derivative feature columns and exact targets.
DatasetBundle simulate_pde(const SystemSpec& spec, std::uint64_t seed);

/// Same, from an explicit initial state (stacked fields).
DatasetBundle simulate_pde(const SystemSpec& spec, const Eigen::VectorXd& initial_state);

DatasetBundle simulate(const SystemSpec& spec, std::uint64_t seed);

struct GeneratedSplits {
    DatasetBundle clean_train, clean_test;
    DatasetBundle noisy_train, noisy_test;
};

/// Simulate, derive the noisy variant, and split both the same way: ODE data
/// by trajectory, PDE data by time prefix, at `spec.train_fraction`.
GeneratedSplits generate_splits(const SystemSpec& spec, double noise_level, std::uint64_t seed);

} // namespace physr::data
