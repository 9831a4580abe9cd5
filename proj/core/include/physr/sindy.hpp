#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "physr/bundle.hpp"
#include "physr/expr.hpp"

namespace physr::sindy {

struct LibrarySpec {
    int polynomial_degree = 3;
    /// Highest spatial-derivative order; ignored for ODE data.
    int derivative_order = 2;
    bool include_constant = true;
    bool normalize_columns = false;
    double threshold = 0.05;
};

/// One library function: a monomial in the states, optionally multiplied by
/// a spatial-derivative column.
struct Term {
    /// Exponent of each state.
    std::vector<int> powers;
    /// Index into Library::derivative_columns, if any.
    std::optional<int> derivative;

    int degree() const noexcept;
};

struct Library {
    std::vector<std::string> states;
    /// Derivative columns (u_x, u_y, u_xx, ...) in state-major order.
    std::vector<std::string> derivative_columns;
    std::vector<Term> terms;
    /// Readable names: "1", "u", "u*u*v", "u_xx", "u*v_x".
    std::vector<std::string> descriptors;

    std::size_t size() const noexcept { return terms.size(); }
    /// n x p matrix of library functions. `states` is n x q and
    /// `derivatives` n x derivative_columns.size() (may be empty).
    Eigen::MatrixXd evaluate(const Eigen::MatrixXd& states, const Eigen::MatrixXd& derivatives) const;
};

/// Monomials of total degree 0..degree (graded, then lexicographic in state
/// order), then each derivative column, then state x first-derivative products.
Library describe_library(const std::vector<std::string>& states, const std::vector<std::string>& derivative_columns,
                         const LibrarySpec& spec);

/// States, targets and library for a trajectory bundle.
struct Problem {
    Library library;
    Eigen::MatrixXd features; // n x p
    Eigen::MatrixXd targets;  // n x q
    std::vector<std::string> target_names;
};

/// Throws DataError when the bundle has no state/target pairs or lacks a
/// derivative column that `spec` requests.
Problem build_library(const data::DatasetBundle& bundle, const LibrarySpec& spec);

struct Diagnostics {
    double residual = 0.0; // Frobenius norm of the training residual
    double mape = 0.0;     // aggregate training MAPE, percent
    std::vector<double> mape_per_target;
    bool rank_deficient = false;
    bool all_pruned = false;
    int rounds = 0;
    /// Total support size after each round.
    std::vector<int> support_history;
    /// Dimension of the equivariant subspace (constrained fits only).
    std::optional<int> nullspace_dim;
};

struct SindyModel {
    /// q x p; row i holds the coefficients of target i.
    Eigen::MatrixXd coefficients;
    Library library;
    std::vector<std::string> target_names;
    LibrarySpec spec;
    std::optional<Eigen::MatrixXd> generator;
    Diagnostics diagnostics;

    /// Full-precision right-hand sides over the library variables.
    std::vector<Expr> expressions() const;
    /// Right-hand sides with coefficients printed to `decimals` places,
    /// e.g. "1.008*u - 1.017*u*u*u + 0.094*u_xx".
    std::vector<std::string> equation_strings(int decimals = 3) const;
    /// n x q predictions on library features.
    Eigen::MatrixXd predict(const Eigen::MatrixXd& features) const;
};

/// 100 * mean(|y - yhat| / max(|y|, 1e-8)).
double mape(const Eigen::Ref<const Eigen::MatrixXd>& y, const Eigen::Ref<const Eigen::MatrixXd>& yhat);

/// Sequentially thresholded least squares on features (n x p) and targets
/// (n x q). Returns the q x p coefficient matrix and fills `diag`.
Eigen::MatrixXd stlsq(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double threshold,
                      bool normalize_columns, int max_rounds = 10, Diagnostics* diag = nullptr);

/// p x p matrix whose row j holds the library coordinates of v_A(theta_j),
/// so that an equivariant model W satisfies W*B = A*W. Throws DataError if a
/// produced term is missing from the library.
Eigen::MatrixXd action_matrix(const Library& library, const Eigen::MatrixXd& generator);

/// Column-major vec of W (q x p) for every W in the basis of {W : W*B = A*W}.
/// Returns a (q*p) x k orthonormal basis, k possibly 0.
Eigen::MatrixXd equivariant_nullspace(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A, double rel_tol = 1e-10);

/// ||W*B - A*W||_F
double equivariance_residual(const Eigen::MatrixXd& W, const Eigen::MatrixXd& B, const Eigen::MatrixXd& A);

/// Least squares restricted to the equivariant subspace with sequential
/// thresholding: entries below the threshold become extra zero constraints,
/// and the joint problem is re-solved until the zero pattern is stable.
Eigen::MatrixXd constrained_stlsq(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                                  const Eigen::MatrixXd& B, const Eigen::MatrixXd& A, double threshold,
                                  bool normalize_columns, int max_rounds = 10, Diagnostics* diag = nullptr);

/// Fit on a trajectory bundle. With `use_symmetry`, `generator` is required
/// and must be q x q.
SindyModel fit_sindy(const data::DatasetBundle& bundle, const LibrarySpec& spec, bool use_symmetry = false,
                     const std::optional<Eigen::MatrixXd>& generator = std::nullopt);

} // namespace physr::sindy
