#include "physr/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "physr/error.hpp"
#include "physr/grid_ops.hpp"
#include "physr/rng.hpp"

namespace physr::symmetry {

namespace {

constexpr double kScaleFloor = 1e-12;

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;

    void step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
              double lr) const {
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
};

double cosine_rate(double base, long step, long total) {
    const double floor = 0.01 * base;
    if (total <= 1) return base;
    const double progress = static_cast<double>(step) / static_cast<double>(total - 1);
    return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<Eigen::Index> shuffled(Eigen::Index n, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    return idx;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows, std::size_t from,
                       std::size_t to) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(to - from), m.cols());
    for (std::size_t i = from; i < to; ++i) out.row(static_cast<Eigen::Index>(i - from)) = m.row(rows[i]);
    return out;
}

void standardize(const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& scale) {
    mean = m.colwise().mean().transpose();
    scale.resize(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double var = (m.col(j).array() - mean(j)).square().mean();
        const double s = std::sqrt(var);
        scale(j) = s > kScaleFloor ? s : 1.0;
    }
}

} // namespace

// ---------------------------------------------------------------------------

Eigen::Index Surrogate::parameter_count() const noexcept {
    return W1.size() + b1.size() + W2.size() + b2.size();
}

Eigen::VectorXd Surrogate::operator()(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = (x - in_mean).cwiseQuotient(in_scale);
    const Eigen::VectorXd h = (W1 * z + b1).array().tanh().matrix();
    return out_mean + out_scale.cwiseProduct(W2 * h + b2);
}

Eigen::MatrixXd Surrogate::predict(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z = (x.rowwise() - in_mean.transpose()).array().rowwise() / in_scale.transpose().array();
    Eigen::MatrixXd h = ((z * W1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
    Eigen::MatrixXd out = (h * W2.transpose()).rowwise() + b2.transpose();
    return (out.array().rowwise() * out_scale.transpose().array()).rowwise() + out_mean.transpose().array();
}

Eigen::MatrixXd Surrogate::jacobian(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = (x - in_mean).cwiseQuotient(in_scale);
    const Eigen::ArrayXd h = (W1 * z + b1).array().tanh();
    const Eigen::VectorXd slope = (1.0 - h.square()).matrix();
    Eigen::MatrixXd J = out_scale.asDiagonal() * W2 * slope.asDiagonal() * W1;
    return J * in_scale.cwiseInverse().asDiagonal();
}

DifferentiableMap Surrogate::as_map() const {
    DifferentiableMap map;
    map.inputs = inputs();
    map.outputs = outputs();
    map.eval = [this](const Eigen::VectorXd& x, Eigen::VectorXd& value, Eigen::MatrixXd& jac) {
        value = (*this)(x);
        jac = jacobian(x);
    };
    return map;
}

// ---------------------------------------------------------------------------

std::vector<std::string> surrogate_inputs(const data::DatasetBundle& bundle) {
    const auto states = bundle.state_names();
    if (states.empty())
        throw DataError("symmetry discovery needs state columns with matching '<state>_t' targets");
    std::vector<std::string> names = states;
    for (int order = 2; order >= 1; --order) {
        const auto deriv = data::derivative_names(states, order);
        const bool complete =
            std::all_of(deriv.begin(), deriv.end(), [&](const std::string& d) { return bundle.find(d).has_value(); });
        if (complete) {
            names.insert(names.end(), deriv.begin(), deriv.end());
            break;
        }
    }
    return names;
}

SurrogateFit train_surrogate(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                             const SurrogateConfig& config) {
    if (inputs.rows() != targets.rows()) throw DataError("inputs and targets have different row counts");
    if (inputs.cols() == 0 || targets.cols() == 0) throw DataError("surrogate needs at least one input and one output");
    if (inputs.rows() < 2) throw DataError("surrogate needs at least two rows");
    if (config.hidden < 1 || config.epochs < 0 || config.batch < 1)
        throw ArgumentError("surrogate hidden width and batch size must be positive");
    if (!(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0))
        throw ArgumentError("holdout fraction must lie in (0, 1)");

    Rng rng(config.seed);
    auto order = shuffled(inputs.rows(), rng);
    if (config.max_rows > 0 && static_cast<Eigen::Index>(order.size()) > config.max_rows)
        order.resize(static_cast<std::size_t>(config.max_rows));
    const auto total = order.size();
    auto n_hold = static_cast<std::size_t>(std::llround(config.holdout_fraction * static_cast<double>(total)));
    n_hold = std::clamp<std::size_t>(n_hold, 1, total - 1);
    const std::size_t n_train = total - n_hold;

    const Eigen::MatrixXd x_train = gather(inputs, order, 0, n_train);
    const Eigen::MatrixXd y_train = gather(targets, order, 0, n_train);
    const Eigen::MatrixXd x_hold = gather(inputs, order, n_train, total);
    const Eigen::MatrixXd y_hold = gather(targets, order, n_train, total);

    SurrogateFit fit;
    Surrogate& net = fit.model;
    standardize(x_train, net.in_mean, net.in_scale);
    standardize(y_train, net.out_mean, net.out_scale);
    const Eigen::Index m = inputs.cols(), q = targets.cols(), h = config.hidden;

    // Glorot-uniform weights, zero biases.
    auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols) {
        const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = rng.uniform(-a, a);
        return w;
    };
    net.W1 = glorot(h, m);
    net.b1 = Eigen::VectorXd::Zero(h);
    net.W2 = glorot(q, h);
    net.b2 = Eigen::VectorXd::Zero(q);

    fit.train_rows = static_cast<Eigen::Index>(n_train);
    fit.holdout_rows = static_cast<Eigen::Index>(n_hold);
    if (static_cast<Eigen::Index>(n_train) < 10 * net.parameter_count())
        fit.warnings.push_back(fmt::format("{} training rows for {} parameters; at least {} recommended", n_train,
                                           net.parameter_count(), 10 * net.parameter_count()));

    // Samples as columns.
    const Eigen::MatrixXd Z =
        ((x_train.rowwise() - net.in_mean.transpose()).array().rowwise() / net.in_scale.transpose().array())
            .matrix()
            .transpose();
    const Eigen::MatrixXd T =
        ((y_train.rowwise() - net.out_mean.transpose()).array().rowwise() / net.out_scale.transpose().array())
            .matrix()
            .transpose();

    Eigen::MatrixXd mW1 = Eigen::MatrixXd::Zero(h, m), vW1 = mW1, mW2 = Eigen::MatrixXd::Zero(q, h), vW2 = mW2;
    Eigen::MatrixXd mb1 = Eigen::MatrixXd::Zero(h, 1), vb1 = mb1, mb2 = Eigen::MatrixXd::Zero(q, 1), vb2 = mb2;
    Adam adam;
    const auto batch = static_cast<std::size_t>(config.batch);
    const long per_epoch = static_cast<long>((n_train + batch - 1) / batch);
    const long total_steps = per_epoch * config.epochs;
    Eigen::MatrixXd zb, tb, H, out, dout, dH;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto perm = shuffled(static_cast<Eigen::Index>(n_train), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n_train; start += batch) {
            const std::size_t stop = std::min(n_train, start + batch);
            const auto b = static_cast<Eigen::Index>(stop - start);
            zb.resize(m, b);
            tb.resize(q, b);
            for (Eigen::Index k = 0; k < b; ++k) {
                zb.col(k) = Z.col(perm[start + static_cast<std::size_t>(k)]);
                tb.col(k) = T.col(perm[start + static_cast<std::size_t>(k)]);
            }
            H = ((net.W1 * zb).colwise() + net.b1).array().tanh().matrix();
            out = (net.W2 * H).colwise() + net.b2;
            dout = out - tb;
            epoch_loss += dout.squaredNorm();
            dout *= 2.0 / static_cast<double>(b * q);
            dH = (net.W2.transpose() * dout).cwiseProduct((1.0 - H.array().square()).matrix());
            const Eigen::MatrixXd gW2 = dout * H.transpose();
            const Eigen::MatrixXd gb2 = dout.rowwise().sum();
            const Eigen::MatrixXd gW1 = dH * zb.transpose();
            const Eigen::MatrixXd gb1 = dH.rowwise().sum();
            ++adam.t;
            const double lr = cosine_rate(config.learning_rate, adam.t - 1, total_steps);
            adam.step(net.W1, gW1, mW1, vW1, lr);
            adam.step(net.b1, gb1, mb1, vb1, lr);
            adam.step(net.W2, gW2, mW2, vW2, lr);
            adam.step(net.b2, gb2, mb2, vb2, lr);
        }
        if (!std::isfinite(epoch_loss))
            throw NumericError(fmt::format("surrogate training loss became non-finite at epoch {} (learning rate {}, "
                                           "{} rows, hidden {})",
                                           epoch, config.learning_rate, n_train, h));
    }

    fit.predictor_loss = (net.predict(x_hold) - y_hold).squaredNorm() / static_cast<double>(y_hold.size());
    if (!std::isfinite(fit.predictor_loss)) throw NumericError("surrogate holdout loss is non-finite");
    return fit;
}

SurrogateFit train_surrogate(const data::DatasetBundle& bundle, const SurrogateConfig& config) {
    const auto inputs = surrogate_inputs(bundle);
    std::vector<std::string> outputs;
    for (const auto& s : bundle.state_names()) outputs.push_back(s + "_t");
    SurrogateFit fit = train_surrogate(bundle.matrix(inputs), bundle.matrix(outputs), config);
    fit.model.input_names = inputs;
    fit.model.output_names = outputs;
    return fit;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd prolong_generator(const Eigen::MatrixXd& A, Eigen::Index input_dim) {
    const Eigen::Index q = A.rows();
    if (A.cols() != q) throw ArgumentError("generator must be square");
    if (q == 0 || input_dim % q != 0)
        throw ArgumentError(fmt::format("input dimension {} is not a multiple of the {} states", input_dim, q));
    const Eigen::Index tiers = input_dim / q - 1;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(input_dim, input_dim);
    out.topLeftCorner(q, q) = A;
    // Derivative k of state s sits at q + s*tiers + k.
    for (Eigen::Index k = 0; k < tiers; ++k)
        for (Eigen::Index s = 0; s < q; ++s)
            for (Eigen::Index r = 0; r < q; ++r) out(q + s * tiers + k, q + r * tiers + k) = A(s, r);
    return out;
}

double equivariance_loss(const DifferentiableMap& f, const Eigen::MatrixXd& A, const Eigen::MatrixXd& points) {
    if (points.rows() == 0) return 0.0;
    if (points.cols() != f.inputs) throw ArgumentError("points do not match the map's input dimension");
    if (A.rows() != f.outputs || A.cols() != f.outputs)
        throw ArgumentError(fmt::format("generator must be {0}x{0}", f.outputs));
    const Eigen::MatrixXd Ap = prolong_generator(A, f.inputs);
    Eigen::VectorXd value;
    Eigen::MatrixXd jac;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const Eigen::VectorXd x = points.row(i).transpose();
        f.eval(x, value, jac);
        sum += (jac * (Ap * x) - A * value).squaredNorm();
    }
    return sum / static_cast<double>(points.rows());
}

LinearizedSample linearize(const DifferentiableMap& f, const Eigen::MatrixXd& points) {
    if (points.cols() != f.inputs) throw ArgumentError("points do not match the map's input dimension");
    LinearizedSample s;
    s.points = points;
    s.values.resize(points.rows(), f.outputs);
    s.jacobians.resize(static_cast<std::size_t>(points.rows()));
    Eigen::VectorXd value;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        f.eval(points.row(i).transpose(), value, s.jacobians[static_cast<std::size_t>(i)]);
        s.values.row(i) = value.transpose();
    }
    return s;
}

namespace {

// r = sum_k J_k A x_k - A f, with J_k the q x q block of J acting on tier k
// and x_k the tier-k slice of x.
struct TierView {
    Eigen::Index q, tiers;
    Eigen::Index index(Eigen::Index tier, Eigen::Index s) const { return tier == 0 ? s : q + s * tiers + (tier - 1); }
};

Eigen::VectorXd residual(const LinearizedSample& sample, Eigen::Index i, const Eigen::MatrixXd& A,
                         const TierView& view) {
    const Eigen::MatrixXd& J = sample.jacobians[static_cast<std::size_t>(i)];
    const Eigen::Index q = view.q;
    Eigen::VectorXd r = -A * sample.values.row(i).transpose();
    Eigen::VectorXd xk(q), ax(q);
    for (Eigen::Index k = 0; k <= view.tiers; ++k) {
        for (Eigen::Index s = 0; s < q; ++s) xk(s) = sample.points(i, view.index(k, s));
        ax.noalias() = A * xk;
        for (Eigen::Index s = 0; s < q; ++s) r += J.col(view.index(k, s)) * ax(s);
    }
    return r;
}

// Adds 2 * dL_i/dA for one point.
void accumulate_gradient(const LinearizedSample& sample, Eigen::Index i, const Eigen::VectorXd& r,
                         const TierView& view, Eigen::MatrixXd& grad) {
    const Eigen::MatrixXd& J = sample.jacobians[static_cast<std::size_t>(i)];
    const Eigen::Index q = view.q;
    Eigen::MatrixXd Jk(q, q);
    Eigen::VectorXd xk(q);
    for (Eigen::Index k = 0; k <= view.tiers; ++k) {
        for (Eigen::Index s = 0; s < q; ++s) {
            Jk.col(s) = J.col(view.index(k, s));
            xk(s) = sample.points(i, view.index(k, s));
        }
        grad.noalias() += 2.0 * (Jk.transpose() * r) * xk.transpose();
    }
    grad.noalias() -= 2.0 * r * sample.values.row(i);
}

TierView tier_view(const LinearizedSample& sample) {
    const Eigen::Index q = sample.values.cols();
    const Eigen::Index m = sample.points.cols();
    if (q == 0 || m % q != 0)
        throw ArgumentError(fmt::format("input dimension {} is not a multiple of the {} states", m, q));
    return TierView{q, m / q - 1};
}

double sample_loss(const LinearizedSample& sample, const Eigen::MatrixXd& A, const TierView& view) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < sample.points.rows(); ++i) sum += residual(sample, i, A, view).squaredNorm();
    return sample.points.rows() ? sum / static_cast<double>(sample.points.rows()) : 0.0;
}

} // namespace

Eigen::MatrixXd loss_quadratic_form(const LinearizedSample& sample) {
    const TierView view = tier_view(sample);
    const Eigen::Index q = view.q, n = sample.points.rows();
    // Column c of M_i maps vec(A) to the residual: residual is linear in A.
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(q * q, q * q);
    Eigen::MatrixXd M(q, q * q);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < q * q; ++c) {
            Eigen::MatrixXd E = Eigen::MatrixXd::Zero(q, q);
            E(c % q, c / q) = 1.0;
            M.col(c) = residual(sample, i, E, view);
        }
        Q.noalias() += M.transpose() * M;
    }
    return n ? Eigen::MatrixXd(Q / static_cast<double>(n)) : Q;
}

Eigen::MatrixXd fix_sign(const Eigen::MatrixXd& A) {
    const double top = A.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            if (std::abs(A(i, j)) > 1e-9 * top) return A(i, j) < 0.0 ? Eigen::MatrixXd(-A) : A;
    return A;
}

nlohmann::json LieGenerator::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(A(i, j));
        rows.push_back(std::move(row));
    }
    return {{"lie_generator", rows}, {"predictor_loss", predictor_loss}, {"symmetry_loss", symmetry_loss}};
}

LieGenerator discover_generator(const DifferentiableMap& f, const Eigen::MatrixXd& points, Eigen::Index q,
                                const DiscoveryConfig& config) {
    if (f.outputs != q) throw ArgumentError("generator size must equal the number of dependent variables");
    if (points.rows() == 0) throw DataError("symmetry discovery needs at least one point");
    if (config.restarts < 1 || config.steps < 0 || config.batch < 1)
        throw ArgumentError("restarts and batch size must be positive");
    const LinearizedSample sample = linearize(f, points);
    const TierView view = tier_view(sample);
    const Eigen::Index n = points.rows();
    const auto batch = std::min<Eigen::Index>(config.batch, n);

    Rng root(config.seed);
    LieGenerator best;
    best.symmetry_loss = std::numeric_limits<double>::infinity();
    bool any = false;
    for (int restart = 0; restart < config.restarts; ++restart) {
        Rng rng = root.split(static_cast<std::uint64_t>(restart));
        Eigen::MatrixXd A(q, q);
        for (Eigen::Index j = 0; j < q; ++j)
            for (Eigen::Index i = 0; i < q; ++i) A(i, j) = rng.normal();
        A /= A.norm();
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(q, q), v = m, grad(q, q);
        Adam adam;
        bool diverged = false;
        for (int step = 0; step < config.steps; ++step) {
            grad.setZero();
            for (Eigen::Index k = 0; k < batch; ++k) {
                const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
                accumulate_gradient(sample, i, residual(sample, i, A, view), view, grad);
            }
            grad /= static_cast<double>(batch);
            // Riemannian gradient on the unit sphere.
            grad -= (grad.cwiseProduct(A).sum()) * A;
            ++adam.t;
            adam.step(A, grad, m, v, cosine_rate(config.learning_rate, step, config.steps));
            const double norm = A.norm();
            if (!std::isfinite(norm) || norm == 0.0) {
                diverged = true;
                break;
            }
            A /= norm;
        }
        if (diverged) continue;
        const double loss = sample_loss(sample, A, view);
        if (!std::isfinite(loss)) continue;
        any = true;
        if (loss < best.symmetry_loss) {
            best.symmetry_loss = loss;
            best.A = A;
            best.restart = restart;
        }
    }
    if (!any) throw NumericError(fmt::format("all {} generator restarts diverged", config.restarts));
    best.A = fix_sign(best.A);
    return best;
}

LieGenerator discover_generator(const Surrogate& f, const data::DatasetBundle& bundle, const DiscoveryConfig& config) {
    const auto inputs = f.input_names.empty() ? surrogate_inputs(bundle) : f.input_names;
    Eigen::MatrixXd points = bundle.matrix(inputs);
    if (config.max_points > 0 && points.rows() > config.max_points) {
        Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
        auto order = shuffled(points.rows(), rng);
        points = gather(points, order, 0, static_cast<std::size_t>(config.max_points));
    }
    return discover_generator(f.as_map(), points, f.outputs(), config);
}

LieGenerator discover_symmetry(const data::DatasetBundle& bundle, const SurrogateConfig& surrogate,
                               const DiscoveryConfig& discovery) {
    const SurrogateFit fit = train_surrogate(bundle, surrogate);
    LieGenerator g = discover_generator(fit.model, bundle, discovery);
    g.predictor_loss = fit.predictor_loss;
    return g;
}

} // namespace physr::symmetry
