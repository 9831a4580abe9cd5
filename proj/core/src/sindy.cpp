#include "physr/sindy.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/QR>
#include <Eigen/SVD>
#include <fmt/format.h>

#include "physr/error.hpp"
#include "physr/grid_ops.hpp"

namespace physr::sindy {

int Term::degree() const noexcept {
    int d = 0;
    for (int p : powers) d += p;
    return d;
}

namespace {

std::string monomial_name(const std::vector<int>& powers, const std::vector<std::string>& states) {
    std::string out;
    for (std::size_t i = 0; i < powers.size(); ++i) {
        for (int k = 0; k < powers[i]; ++k) {
            if (!out.empty()) out += '*';
            out += states[i];
        }
    }
    return out;
}

// Nondecreasing index sequences of the given length over q symbols, in
// lexicographic order, as exponent vectors.
void monomials_of_degree(int q, int degree, std::vector<std::vector<int>>& out) {
    std::vector<int> idx(static_cast<std::size_t>(degree), 0);
    if (degree == 0) {
        out.emplace_back(static_cast<std::size_t>(q), 0);
        return;
    }
    for (;;) {
        std::vector<int> powers(static_cast<std::size_t>(q), 0);
        for (int i : idx) ++powers[static_cast<std::size_t>(i)];
        out.push_back(std::move(powers));
        int pos = degree - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == q - 1) --pos;
        if (pos < 0) return;
        const int v = idx[static_cast<std::size_t>(pos)] + 1;
        for (int k = pos; k < degree; ++k) idx[static_cast<std::size_t>(k)] = v;
    }
}

} // namespace

Library describe_library(const std::vector<std::string>& states, const std::vector<std::string>& derivative_columns,
                         const LibrarySpec& spec) {
    if (spec.polynomial_degree < 0) throw ArgumentError("polynomial_degree must be >= 0");
    if (spec.threshold < 0.0) throw ArgumentError("threshold must be >= 0");
    Library lib;
    lib.states = states;
    lib.derivative_columns = derivative_columns;
    const int q = static_cast<int>(states.size());

    std::vector<std::vector<int>> monos;
    for (int d = spec.include_constant ? 0 : 1; d <= spec.polynomial_degree; ++d) monomials_of_degree(q, d, monos);
    for (auto& m : monos) {
        lib.descriptors.push_back(m == std::vector<int>(static_cast<std::size_t>(q), 0) ? "1" : monomial_name(m, states));
        lib.terms.push_back(Term{std::move(m), std::nullopt});
    }
    for (std::size_t d = 0; d < derivative_columns.size(); ++d) {
        lib.terms.push_back(Term{std::vector<int>(static_cast<std::size_t>(q), 0), static_cast<int>(d)});
        lib.descriptors.push_back(derivative_columns[d]);
    }
    // Degree-one monomials times first derivatives.
    for (int i = 0; i < q; ++i) {
        for (std::size_t d = 0; d < derivative_columns.size(); ++d) {
            const auto parts = data::split_derivative_name(derivative_columns[d], states);
            if (!parts || parts->second.size() != 1) continue;
            std::vector<int> powers(static_cast<std::size_t>(q), 0);
            powers[static_cast<std::size_t>(i)] = 1;
            lib.terms.push_back(Term{std::move(powers), static_cast<int>(d)});
            lib.descriptors.push_back(states[static_cast<std::size_t>(i)] + "*" + derivative_columns[d]);
        }
    }
    return lib;
}

Eigen::MatrixXd Library::evaluate(const Eigen::MatrixXd& state_values, const Eigen::MatrixXd& derivatives) const {
    const Eigen::Index n = state_values.rows();
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(terms.size()));
    for (std::size_t j = 0; j < terms.size(); ++j) {
        Eigen::ArrayXd col = Eigen::ArrayXd::Ones(n);
        const Term& t = terms[j];
        for (std::size_t i = 0; i < t.powers.size(); ++i) {
            for (int k = 0; k < t.powers[i]; ++k) col *= state_values.col(static_cast<Eigen::Index>(i)).array();
        }
        if (t.derivative) col *= derivatives.col(*t.derivative).array();
        out.col(static_cast<Eigen::Index>(j)) = col.matrix();
    }
    return out;
}

Problem build_library(const data::DatasetBundle& bundle, const LibrarySpec& spec) {
    Problem prob;
    const auto states = bundle.state_names();
    if (states.empty()) throw DataError("sparse regression needs state columns with matching '<state>_t' targets");
    std::vector<std::string> deriv;
    if (bundle.meta().kind == data::SystemKind::Pde && spec.derivative_order >= 1) {
        deriv = data::derivative_names(states, std::min(spec.derivative_order, 2));
        for (const auto& d : deriv) {
            if (!bundle.find(d)) throw DataError(fmt::format("missing derivative column '{}'", d));
        }
    }
    prob.library = describe_library(states, deriv, spec);
    const Eigen::MatrixXd x = bundle.matrix(states);
    const Eigen::MatrixXd dx = deriv.empty() ? Eigen::MatrixXd(x.rows(), 0) : bundle.matrix(deriv);
    prob.features = prob.library.evaluate(x, dx);
    for (const auto& s : states) prob.target_names.push_back(s + "_t");
    prob.targets = bundle.matrix(prob.target_names);
    return prob;
}

// ---------------------------------------------------------------------------

double mape(const Eigen::Ref<const Eigen::MatrixXd>& y, const Eigen::Ref<const Eigen::MatrixXd>& yhat) {
    if (y.size() == 0) return 0.0;
    const Eigen::ArrayXXd denom = y.array().abs().max(1e-8);
    return 100.0 * ((y - yhat).array().abs() / denom).mean();
}

namespace {

// Thin QR reduction: for any column subset S, ||y - X_S w|| differs from
// ||Qt y - R_S w|| by a constant, so every solve runs on p rows.
struct Reduced {
    Eigen::MatrixXd R;   // p x p upper triangular
    Eigen::MatrixXd QtY; // p x q
};

Reduced reduce(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    const Eigen::Index p = X.cols();
    if (X.rows() < p) throw DataError(fmt::format("need at least as many rows ({}) as library terms ({})", X.rows(), p));
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
    Reduced r;
    r.R = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd qty = qr.householderQ().adjoint() * Y;
    r.QtY = qty.topRows(p);
    return r;
}

Eigen::VectorXd column_scales(const Eigen::MatrixXd& X, bool normalize) {
    Eigen::VectorXd d = Eigen::VectorXd::Ones(X.cols());
    if (!normalize) return d;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double n = X.col(j).norm();
        if (n > 0.0 && std::isfinite(n)) d(j) = n;
    }
    return d;
}

Eigen::VectorXd solve_min_norm(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, bool& rank_deficient) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    if (cod.rank() < A.cols()) rank_deficient = true;
    return cod.solve(b);
}

void fill_fit_diagnostics(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& W,
                          Diagnostics& diag) {
    const Eigen::MatrixXd pred = X * W.transpose();
    diag.residual = (Y - pred).norm();
    diag.mape = mape(Y, pred);
    diag.mape_per_target.clear();
    for (Eigen::Index i = 0; i < Y.cols(); ++i) diag.mape_per_target.push_back(mape(Y.col(i), pred.col(i)));
}

} // namespace

Eigen::MatrixXd stlsq(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double threshold,
                      bool normalize_columns, int max_rounds, Diagnostics* diag) {
    if (threshold < 0.0) throw ArgumentError("threshold must be >= 0");
    if (features.rows() != targets.rows()) throw DataError("features and targets differ in row count");
    const Eigen::Index p = features.cols();
    const Eigen::Index q = targets.cols();
    const Eigen::VectorXd scale = column_scales(features, normalize_columns);
    const Eigen::MatrixXd Xn = features * scale.cwiseInverse().asDiagonal();
    const Reduced red = reduce(Xn, targets);

    Diagnostics local;
    Diagnostics& d = diag ? *diag : local;
    d = Diagnostics{};

    using Support = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
    Support support = Support::Constant(q, p, true);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(q, p);
    auto solve_all = [&] {
        W.setZero();
        for (Eigen::Index i = 0; i < q; ++i) {
            std::vector<Eigen::Index> cols;
            for (Eigen::Index j = 0; j < p; ++j)
                if (support(i, j)) cols.push_back(j);
            if (cols.empty()) continue;
            Eigen::MatrixXd Rs(p, static_cast<Eigen::Index>(cols.size()));
            for (std::size_t k = 0; k < cols.size(); ++k) Rs.col(static_cast<Eigen::Index>(k)) = red.R.col(cols[k]);
            const Eigen::VectorXd w = solve_min_norm(Rs, red.QtY.col(i), d.rank_deficient);
            for (std::size_t k = 0; k < cols.size(); ++k) W(i, cols[k]) = w(static_cast<Eigen::Index>(k));
        }
    };
    solve_all();
    d.support_history.push_back(static_cast<int>(support.count()));
    for (int round = 1; round <= max_rounds; ++round) {
        d.rounds = round;
        const Support next = support && (W.array().abs() >= threshold);
        if ((next == support).all()) break;
        support = next;
        d.support_history.push_back(static_cast<int>(support.count()));
        solve_all();
    }
    d.all_pruned = p > 0 && support.count() == 0;
    Eigen::MatrixXd out = W * scale.cwiseInverse().asDiagonal();
    fill_fit_diagnostics(features, targets, out, d);
    return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd action_matrix(const Library& library, const Eigen::MatrixXd& A) {
    const auto q = static_cast<Eigen::Index>(library.states.size());
    if (A.rows() != q || A.cols() != q)
        throw ArgumentError(fmt::format("generator must be {0}x{0}, got {1}x{2}", q, A.rows(), A.cols()));
    const auto p = static_cast<Eigen::Index>(library.size());

    std::map<std::pair<std::vector<int>, int>, Eigen::Index> index;
    for (Eigen::Index j = 0; j < p; ++j) {
        const Term& t = library.terms[static_cast<std::size_t>(j)];
        index[{t.powers, t.derivative.value_or(-1)}] = j;
    }
    // Derivative column -> (state, suffix) and back.
    std::vector<std::pair<int, std::string>> deriv_parts;
    std::map<std::pair<int, std::string>, int> deriv_index;
    for (std::size_t d = 0; d < library.derivative_columns.size(); ++d) {
        const auto parts = data::split_derivative_name(library.derivative_columns[d], library.states);
        if (!parts) throw DataError("cannot interpret derivative column '" + library.derivative_columns[d] + "'");
        const auto s = std::find(library.states.begin(), library.states.end(), parts->first) - library.states.begin();
        deriv_parts.emplace_back(static_cast<int>(s), parts->second);
        deriv_index[{static_cast<int>(s), parts->second}] = static_cast<int>(d);
    }

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(p, p);
    auto add = [&](Eigen::Index row, const std::vector<int>& powers, int deriv, double c) {
        if (c == 0.0) return;
        auto it = index.find({powers, deriv});
        if (it == index.end()) {
            std::string name = monomial_name(powers, library.states);
            if (deriv >= 0) name += (name.empty() ? "" : "*") + library.derivative_columns[static_cast<std::size_t>(deriv)];
            throw DataError(fmt::format("library is not closed under the generator: '{}' maps onto missing term '{}'",
                                        library.descriptors[static_cast<std::size_t>(row)], name.empty() ? "1" : name));
        }
        B(row, it->second) += c;
    };
    for (Eigen::Index j = 0; j < p; ++j) {
        const Term& t = library.terms[static_cast<std::size_t>(j)];
        const int deriv = t.derivative.value_or(-1);
        // Lie derivative of the monomial factor: sum_{i,k} A_ik alpha_i x^(alpha - e_i + e_k).
        for (Eigen::Index i = 0; i < q; ++i) {
            const int a = t.powers[static_cast<std::size_t>(i)];
            if (a == 0) continue;
            for (Eigen::Index k = 0; k < q; ++k) {
                std::vector<int> powers = t.powers;
                --powers[static_cast<std::size_t>(i)];
                ++powers[static_cast<std::size_t>(k)];
                add(j, powers, deriv, A(i, k) * a);
            }
        }
        // The derivative factor transforms with the same generator in its tier.
        if (deriv >= 0) {
            const auto& [s, suffix] = deriv_parts[static_cast<std::size_t>(deriv)];
            for (Eigen::Index k = 0; k < q; ++k) {
                const double c = A(s, k);
                if (c == 0.0) continue;
                auto it = deriv_index.find({static_cast<int>(k), suffix});
                if (it == deriv_index.end())
                    throw DataError(fmt::format("library lacks derivative column {}_{}",
                                                library.states[static_cast<std::size_t>(k)], suffix));
                add(j, t.powers, it->second, c);
            }
        }
    }
    return B;
}

namespace {

// Operator vec(W) -> vec(W*B - A*W) for column-major vec of q x p matrices.
Eigen::MatrixXd sylvester_operator(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A) {
    const Eigen::Index q = A.rows();
    const Eigen::Index p = B.rows();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(q * p, q * p);
    for (Eigen::Index l = 0; l < p; ++l) {
        for (Eigen::Index i = 0; i < q; ++i) {
            const Eigen::Index row = l * q + i;
            for (Eigen::Index j = 0; j < p; ++j) M(row, j * q + i) += B(j, l);
            for (Eigen::Index k = 0; k < q; ++k) M(row, l * q + k) -= A(i, k);
        }
    }
    return M;
}

Eigen::MatrixXd nullspace_of(const Eigen::MatrixXd& M, double rel_tol) {
    const Eigen::Index n = M.cols();
    if (M.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    Eigen::Index rank = 0;
    if (smax > 0.0) {
        while (rank < s.size() && s(rank) > rel_tol * smax) ++rank;
    }
    return svd.matrixV().rightCols(n - rank);
}

} // namespace

Eigen::MatrixXd equivariant_nullspace(const Eigen::MatrixXd& B, const Eigen::MatrixXd& A, double rel_tol) {
    if (A.rows() != A.cols() || B.rows() != B.cols()) throw ArgumentError("action and generator matrices must be square");
    return nullspace_of(sylvester_operator(B, A), rel_tol);
}

double equivariance_residual(const Eigen::MatrixXd& W, const Eigen::MatrixXd& B, const Eigen::MatrixXd& A) {
    return (W * B - A * W).norm();
}

Eigen::MatrixXd constrained_stlsq(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                                  const Eigen::MatrixXd& B, const Eigen::MatrixXd& A, double threshold,
                                  bool normalize_columns, int max_rounds, Diagnostics* diag) {
    if (threshold < 0.0) throw ArgumentError("threshold must be >= 0");
    if (features.rows() != targets.rows()) throw DataError("features and targets differ in row count");
    const Eigen::Index p = features.cols();
    const Eigen::Index q = targets.cols();
    if (A.rows() != q || B.rows() != p) throw ArgumentError("generator or action matrix has the wrong shape");

    const Eigen::VectorXd scale = column_scales(features, normalize_columns);
    const Eigen::MatrixXd Xn = features * scale.cwiseInverse().asDiagonal();
    // In scaled coordinates W' = W*D the constraint reads W'*(D^-1 B D) = A*W'.
    const Eigen::MatrixXd Bn = scale.cwiseInverse().asDiagonal() * B * scale.asDiagonal();
    const Eigen::MatrixXd M = sylvester_operator(Bn, A);
    const Reduced red = reduce(Xn, targets);
    Eigen::VectorXd rhs(p * q);
    for (Eigen::Index i = 0; i < q; ++i) rhs.segment(i * p, p) = red.QtY.col(i);

    Diagnostics local;
    Diagnostics& d = diag ? *diag : local;
    d = Diagnostics{};

    std::vector<bool> zero(static_cast<std::size_t>(p * q), false);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(q, p);
    for (int round = 0; round <= max_rounds; ++round) {
        const auto n_zero = std::count(zero.begin(), zero.end(), true);
        Eigen::MatrixXd Mz(M.rows() + n_zero, M.cols());
        Mz.topRows(M.rows()) = M;
        Eigen::Index r = M.rows();
        for (std::size_t k = 0; k < zero.size(); ++k) {
            if (!zero[k]) continue;
            Mz.row(r).setZero();
            Mz(r++, static_cast<Eigen::Index>(k)) = 1.0;
        }
        const Eigen::MatrixXd N = nullspace_of(Mz, 1e-10);
        if (round == 0) d.nullspace_dim = static_cast<int>(N.cols());
        W.setZero();
        if (N.cols() == 0) {
            d.support_history.push_back(0);
            d.rounds = round;
            break;
        }
        // Design in the reduced space: column k is vec_i(R * W_k(i,:)^T).
        const auto K = N.cols();
        Eigen::MatrixXd Wk_t(p, q * K);
        for (Eigen::Index k = 0; k < K; ++k) {
            const Eigen::Map<const Eigen::MatrixXd> Wk(N.col(k).data(), q, p);
            Wk_t.middleCols(k * q, q) = Wk.transpose();
        }
        const Eigen::MatrixXd RW = red.R * Wk_t; // p x (q K)
        Eigen::MatrixXd Z(p * q, K);
        for (Eigen::Index k = 0; k < K; ++k)
            for (Eigen::Index i = 0; i < q; ++i) Z.block(i * p, k, p, 1) = RW.col(k * q + i);
        const Eigen::VectorXd c = solve_min_norm(Z, rhs, d.rank_deficient);
        const Eigen::VectorXd w = N * c;
        W = Eigen::Map<const Eigen::MatrixXd>(w.data(), q, p);
        for (std::size_t k = 0; k < zero.size(); ++k)
            if (zero[k]) W(static_cast<Eigen::Index>(k) % q, static_cast<Eigen::Index>(k) / q) = 0.0;

        int support = 0;
        bool changed = false;
        for (Eigen::Index j = 0; j < p; ++j) {
            for (Eigen::Index i = 0; i < q; ++i) {
                const auto k = static_cast<std::size_t>(j * q + i);
                if (!zero[k] && std::fabs(W(i, j)) < threshold) {
                    zero[k] = true;
                    changed = true;
                }
                support += W(i, j) != 0.0 ? 1 : 0;
            }
        }
        d.support_history.push_back(support);
        d.rounds = round;
        if (!changed) break;
    }
    d.all_pruned = W.isZero(0.0) && p > 0;
    Eigen::MatrixXd out = W * scale.cwiseInverse().asDiagonal();
    fill_fit_diagnostics(features, targets, out, d);
    return out;
}

// ---------------------------------------------------------------------------

SindyModel fit_sindy(const data::DatasetBundle& bundle, const LibrarySpec& spec, bool use_symmetry,
                     const std::optional<Eigen::MatrixXd>& generator) {
    const Problem prob = build_library(bundle, spec);
    SindyModel model;
    model.library = prob.library;
    model.target_names = prob.target_names;
    model.spec = spec;
    if (!use_symmetry) {
        model.coefficients = stlsq(prob.features, prob.targets, spec.threshold, spec.normalize_columns, 10,
                                   &model.diagnostics);
        return model;
    }
    if (!generator) throw ArgumentError("use_symmetry requires a lie_generator");
    const Eigen::MatrixXd& A = *generator;
    const auto q = static_cast<Eigen::Index>(prob.target_names.size());
    if (A.rows() != q || A.cols() != q)
        throw ArgumentError(fmt::format("lie_generator must be {0}x{0} to match the {0} dependent variables, got {1}x{2}",
                                        q, A.rows(), A.cols()));
    if (!A.allFinite()) throw ArgumentError("lie_generator has non-finite entries");
    model.generator = A;
    const Eigen::MatrixXd B = action_matrix(prob.library, A);
    const auto full = q * static_cast<Eigen::Index>(prob.library.size());
    const Eigen::MatrixXd N = equivariant_nullspace(B, A);
    if (N.cols() == full) {
        // The constraint is vacuous (e.g. A = 0).
        model.coefficients = stlsq(prob.features, prob.targets, spec.threshold, spec.normalize_columns, 10,
                                   &model.diagnostics);
        model.diagnostics.nullspace_dim = static_cast<int>(full);
        return model;
    }
    model.coefficients = constrained_stlsq(prob.features, prob.targets, B, A, spec.threshold, spec.normalize_columns,
                                           10, &model.diagnostics);
    return model;
}

// ---------------------------------------------------------------------------

namespace {

Expr term_expr(const Library& lib, const Term& t) {
    std::optional<Expr> e;
    auto mul = [&](Expr f) { e = e ? *e * f : f; };
    for (std::size_t i = 0; i < t.powers.size(); ++i)
        for (int k = 0; k < t.powers[i]; ++k) mul(Expr::variable(lib.states[i]));
    if (t.derivative) mul(Expr::variable(lib.derivative_columns[static_cast<std::size_t>(*t.derivative)]));
    return e ? *e : Expr::constant(1.0);
}

std::string format_coefficient(double c, int decimals) {
    if (std::fabs(c) < 0.5 * std::pow(10.0, -decimals)) return fmt::format("{:.3g}", c);
    return fmt::format("{:.{}f}", c, decimals);
}

} // namespace

std::vector<Expr> SindyModel::expressions() const {
    std::vector<Expr> out;
    for (Eigen::Index i = 0; i < coefficients.rows(); ++i) {
        std::optional<Expr> e;
        for (Eigen::Index j = 0; j < coefficients.cols(); ++j) {
            const double c = coefficients(i, j);
            if (c == 0.0) continue;
            const Term& t = library.terms[static_cast<std::size_t>(j)];
            const bool constant = t.degree() == 0 && !t.derivative;
            const Expr body = term_expr(library, t);
            if (!e) {
                e = constant ? Expr::constant(c) : Expr::constant(c) * body;
            } else {
                const Expr mag = constant ? Expr::constant(std::fabs(c)) : Expr::constant(std::fabs(c)) * body;
                e = c < 0 ? *e - mag : *e + mag;
            }
        }
        out.push_back(e ? *e : Expr::constant(0.0));
    }
    return out;
}

std::vector<std::string> SindyModel::equation_strings(int decimals) const {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < coefficients.rows(); ++i) {
        std::string s;
        for (Eigen::Index j = 0; j < coefficients.cols(); ++j) {
            const double c = coefficients(i, j);
            if (c == 0.0) continue;
            const std::string& desc = library.descriptors[static_cast<std::size_t>(j)];
            const std::string mag = format_coefficient(s.empty() ? c : std::fabs(c), decimals);
            const std::string term = desc == "1" ? mag : mag + "*" + desc;
            if (s.empty())
                s = term;
            else
                s += (c < 0 ? " - " : " + ") + term;
        }
        out.push_back(s.empty() ? "0" : s);
    }
    return out;
}

Eigen::MatrixXd SindyModel::predict(const Eigen::MatrixXd& features) const { return features * coefficients.transpose(); }

} // namespace physr::sindy
