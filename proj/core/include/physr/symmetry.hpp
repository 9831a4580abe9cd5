#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "physr/bundle.hpp"

namespace physr::symmetry {

/// Smooth map with an input Jacobian. `value` is q-dimensional, `jacobian`
/// q x m for an m-dimensional input.
struct DifferentiableMap {
    Eigen::Index inputs = 0;
    Eigen::Index outputs = 0;
    std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& value, Eigen::MatrixXd& jacobian)> eval;
};

struct SurrogateConfig {
    int hidden = 64;
    int epochs = 2000;
    int batch = 256;
    double learning_rate = 3e-3;
    double holdout_fraction = 0.1;
    /// Rows used for training and holdout; larger bundles are subsampled.
    int max_rows = 4096;
    std::uint64_t seed = 0;
};

/// x -> out_mean + out_scale .* (W2 tanh(W1 ((x - in_mean) ./ in_scale) + b1) + b2)
class Surrogate {
public:
    Eigen::MatrixXd W1, W2;
    Eigen::VectorXd b1, b2;
    Eigen::VectorXd in_mean, in_scale, out_mean, out_scale;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;

    Eigen::Index inputs() const noexcept { return W1.cols(); }
    Eigen::Index outputs() const noexcept { return W2.rows(); }
    Eigen::Index hidden() const noexcept { return W1.rows(); }
    Eigen::Index parameter_count() const noexcept;

    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
    /// Row-wise predictions for an n x inputs() matrix.
    Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;
    DifferentiableMap as_map() const;
};

struct SurrogateFit {
    Surrogate model;
    /// Held-out mean squared error in data units.
    double predictor_loss = 0.0;
    Eigen::Index train_rows = 0;
    Eigen::Index holdout_rows = 0;
    std::vector<std::string> warnings;
};

/// Inputs are the state columns followed by any spatial-derivative columns
/// (state-major, complete up to order 2); outputs are the `<state>_t` targets.
std::vector<std::string> surrogate_inputs(const data::DatasetBundle& bundle);

SurrogateFit train_surrogate(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                             const SurrogateConfig& config);
SurrogateFit train_surrogate(const data::DatasetBundle& bundle, const SurrogateConfig& config);

/// Action of a q x q generator on an input laid out as
/// [q states | q * tiers state-major derivative columns]: the same A acts
/// on every derivative tier.
Eigen::MatrixXd prolong_generator(const Eigen::MatrixXd& A, Eigen::Index input_dim);

/// Mean over the rows of `points` of ||J_f(x) A' x - A f(x)||^2 with A' the
/// prolonged generator.
double equivariance_loss(const DifferentiableMap& f, const Eigen::MatrixXd& A, const Eigen::MatrixXd& points);

/// Per-point data for the generator search: J_f and f at each point.
struct LinearizedSample {
    std::vector<Eigen::MatrixXd> jacobians;
    Eigen::MatrixXd points; // n x m
    Eigen::MatrixXd values; // n x q
};
LinearizedSample linearize(const DifferentiableMap& f, const Eigen::MatrixXd& points);

/// The loss is a quadratic form in vec(A) (column-major): L(A) = vec(A)' Q vec(A).
Eigen::MatrixXd loss_quadratic_form(const LinearizedSample& sample);

struct DiscoveryConfig {
    int restarts = 8;
    int steps = 1500;
    int batch = 256;
    double learning_rate = 1e-2;
    /// Points drawn from the bundle for the search.
    int max_points = 4096;
    std::uint64_t seed = 0;
};

struct LieGenerator {
    Eigen::MatrixXd A;
    double predictor_loss = 0.0;
    double symmetry_loss = 0.0;
    int restart = 0;

    /// {"lie_generator": [[...]], "predictor_loss": ..., "symmetry_loss": ...}
    nlohmann::json to_json() const;
};

/// Flip the sign so the first entry (row-major) with a magnitude above
/// 1e-9 * max|A| is positive.
Eigen::MatrixXd fix_sign(const Eigen::MatrixXd& A);

/// Projected Adam over unit-Frobenius A from random starts; the restart
/// with the lowest full-sample loss wins (ties by index).
LieGenerator discover_generator(const DifferentiableMap& f, const Eigen::MatrixXd& points, Eigen::Index q,
                                const DiscoveryConfig& config);
LieGenerator discover_generator(const Surrogate& f, const data::DatasetBundle& bundle, const DiscoveryConfig& config);

/// Train the surrogate then search for a generator.
LieGenerator discover_symmetry(const data::DatasetBundle& bundle, const SurrogateConfig& surrogate,
                               const DiscoveryConfig& discovery);

} // namespace physr::symmetry
