#include "physr/gpsr.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "physr/compiled_expr.hpp"
#include "physr/error.hpp"
#include "physr/rng.hpp"
#include "physr/sindy.hpp"

namespace physr::gp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMaxExponent = 4.0;
constexpr int kUnaryCount = 9;
constexpr int kKeyCount = kUnaryCount + 5;

// Dense operator key: unary ops first, then binary.
int op_key(UnaryOp op) { return static_cast<int>(op); }
int op_key(BinaryOp op) { return kUnaryCount + static_cast<int>(op); }

int op_key(const Expr& e) {
    if (e.kind() == Expr::Kind::Unary) return op_key(e.unary_op());
    if (e.kind() == Expr::Kind::Binary) return op_key(e.binary_op());
    return -1;
}

std::optional<int> key_from_name(std::string_view name) {
    if (auto u = unary_from_name(name)) return op_key(*u);
    if (auto b = binary_from_name(name)) return op_key(*b);
    return std::nullopt;
}

struct Rules {
    std::array<OperandCaps, kKeyCount> caps{};
    // nested[outer] = list of (inner, max)
    std::array<std::vector<std::pair<int, int>>, kKeyCount> nested{};
    bool empty = true;

    explicit Rules(const GpConfig& cfg) {
        for (const auto& [name, c] : cfg.constraints) {
            const auto k = key_from_name(name);
            if (!k) throw ArgumentError(fmt::format("unknown operator '{}' in constraints", name));
            caps[static_cast<std::size_t>(*k)] = c;
            empty = false;
        }
        for (const auto& [outer, inner_map] : cfg.nested_constraints) {
            const auto ko = key_from_name(outer);
            if (!ko) throw ArgumentError(fmt::format("unknown operator '{}' in nested constraints", outer));
            for (const auto& [inner, limit] : inner_map) {
                const auto ki = key_from_name(inner);
                if (!ki) throw ArgumentError(fmt::format("unknown operator '{}' in nested constraints", inner));
                nested[static_cast<std::size_t>(*ko)].emplace_back(*ki, limit);
                empty = false;
            }
        }
    }

    using Counts = std::array<int, kKeyCount>;

    bool check(const Expr& e, Counts& counts) const {
        counts.fill(0);
        const int key = op_key(e);
        if (key < 0) return true;
        Counts child_counts{};
        Counts scratch;
        const auto& c = caps[static_cast<std::size_t>(key)];
        for (std::size_t i = 0; i < e.children().size(); ++i) {
            const Expr& ch = e.child(i);
            if (!check(ch, scratch)) return false;
            for (int k = 0; k < kKeyCount; ++k) child_counts[static_cast<std::size_t>(k)] += scratch[static_cast<std::size_t>(k)];
            const int cap = i == 0 ? c.left : c.right;
            if (cap >= 0 && ch.size() > cap) return false;
        }
        for (const auto& [inner, limit] : nested[static_cast<std::size_t>(key)])
            if (limit >= 0 && child_counts[static_cast<std::size_t>(inner)] > limit) return false;
        counts = child_counts;
        ++counts[static_cast<std::size_t>(key)];
        return true;
    }

    bool check(const Expr& e) const {
        if (empty) return true;
        Counts counts;
        return check(e, counts);
    }
};

// pow only with a constant exponent in [-4, 4].
bool pow_ok(const Expr& e) {
    if (e.kind() == Expr::Kind::Binary && e.binary_op() == BinaryOp::Pow) {
        const Expr& ex = e.child(1);
        if (ex.kind() != Expr::Kind::Constant || std::abs(ex.value()) > kMaxExponent) return false;
    }
    for (const auto& c : e.children())
        if (!pow_ok(c)) return false;
    return true;
}

void collect_holes(const Expr& e, std::vector<Expr>& out) {
    if (e.kind() == Expr::Kind::Hole) out.push_back(e);
    for (const auto& c : e.children()) collect_holes(c, out);
}

} // namespace

// ---------------------------------------------------------------------------

Expr Template::instantiate(const std::vector<Expr>& trees) const {
    if (trees.size() != holes.size())
        throw ArgumentError(fmt::format("template has {} holes, got {} bodies", holes.size(), trees.size()));
    std::map<std::string, HoleBody> bodies;
    for (std::size_t i = 0; i < holes.size(); ++i) bodies[holes[i].name] = HoleBody{holes[i].params, trees[i]};
    return substitute_holes(combine, bodies);
}

Template parse_template(std::string_view combine, const std::vector<std::string>& variable_names,
                        const std::vector<std::string>& hole_names) {
    Template t;
    t.variable_names = variable_names;
    const std::set<std::string> vars(variable_names.begin(), variable_names.end());
    t.combine = parse(combine, vars, ParseOptions{true});
    std::vector<Expr> calls;
    collect_holes(t.combine, calls);
    std::vector<Hole> found;
    for (const auto& call : calls) {
        std::vector<std::string> params;
        for (const auto& arg : call.children()) {
            if (arg.kind() != Expr::Kind::Variable)
                throw ArgumentError(fmt::format("hole '{}' arguments must be plain variables", call.name()));
            params.push_back(arg.name());
        }
        if (std::set<std::string>(params.begin(), params.end()).size() != params.size())
            throw ArgumentError(fmt::format("hole '{}' repeats an argument", call.name()));
        auto it = std::find_if(found.begin(), found.end(), [&](const Hole& h) { return h.name == call.name(); });
        if (it == found.end()) {
            found.push_back(Hole{call.name(), params});
        } else if (it->params.size() != params.size()) {
            throw ArgumentError(fmt::format("hole '{}' used with {} and {} arguments", call.name(), it->params.size(),
                                            params.size()));
        }
    }
    if (found.empty()) throw ArgumentError("template has no holes");
    if (hole_names.empty()) {
        t.holes = std::move(found);
        return t;
    }
    for (const auto& name : hole_names) {
        auto it = std::find_if(found.begin(), found.end(), [&](const Hole& h) { return h.name == name; });
        if (it == found.end()) throw ArgumentError(fmt::format("expression '{}' does not occur in the template", name));
        t.holes.push_back(*it);
    }
    if (t.holes.size() != found.size()) throw ArgumentError("template uses holes that are not listed in expressions");
    return t;
}

void validate(const GpConfig& cfg) {
    if (cfg.population_size < 4) throw ArgumentError("population size must be at least 4");
    if (cfg.populations < 1) throw ArgumentError("need at least one population");
    if (cfg.niterations < 0) throw ArgumentError("niterations must be non-negative");
    if (cfg.tournament_size < 1) throw ArgumentError("tournament size must be positive");
    if (cfg.max_size < 1) throw ArgumentError("max size must be positive");
    if (cfg.binary_operators.empty() && cfg.unary_operators.empty() && cfg.max_size < 1)
        throw ArgumentError("no operators and no room for a leaf");
    for (const auto& [name, c] : cfg.constraints)
        if (c.left < -1 || c.right < -1) throw ArgumentError(fmt::format("constraint caps for '{}' must be >= -1", name));
    for (const auto& [outer, inner] : cfg.nested_constraints)
        for (const auto& [name, k] : inner)
            if (k < -1) throw ArgumentError(fmt::format("nested limit {} -> {} must be >= -1", outer, name));
    Rules rules(cfg); // rejects unknown operator names
}

bool check_constraints(const Expr& e, const GpConfig& cfg) { return Rules(cfg).check(e); }

// ---------------------------------------------------------------------------

bool ParetoFront::offer(const Candidate& c) {
    if (!std::isfinite(c.loss)) return false;
    for (const auto& [complexity, entry] : entries_) {
        if (complexity > c.complexity) break;
        if (entry.loss <= c.loss) return false;
    }
    for (auto it = entries_.lower_bound(c.complexity); it != entries_.end();) {
        if (it->second.loss >= c.loss)
            it = entries_.erase(it);
        else
            ++it;
    }
    entries_[c.complexity] = c;
    return true;
}

const Candidate& ParetoFront::select() const {
    if (entries_.empty()) throw NumericError("Pareto front is empty");
    auto log_loss = [](double l) { return std::log(std::max(l, 1e-30)); };
    const Candidate* best = &entries_.begin()->second;
    double best_score = 0.0;
    const Candidate* prev = nullptr;
    for (const auto& [complexity, entry] : entries_) {
        if (prev) {
            const double score =
                (log_loss(prev->loss) - log_loss(entry.loss)) / static_cast<double>(complexity - prev->complexity);
            if (score > best_score) {
                best_score = score;
                best = &entry;
            }
        }
        prev = &entry;
    }
    return *best;
}

// ---------------------------------------------------------------------------

double mse(const Expr& e, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
           const std::vector<std::string>& variable_names) {
    const CompiledExpr prog(e, variable_names);
    const Eigen::VectorXd r = prog.evaluate(X) - y;
    const double v = r.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, y.size()));
    return std::isfinite(v) ? v : kInf;
}

double mape(const Candidate& c, const data::DatasetBundle& bundle, const std::string& target) {
    const CompiledExpr prog(c.expression, bundle.all_names());
    const Eigen::VectorXd yhat = prog.evaluate(bundle.values());
    return sindy::mape(bundle.column(target), yhat);
}

namespace {

struct Individual {
    std::vector<Expr> trees;
    Expr combined;
    double loss = kInf;
    double score = kInf;
    int complexity = 0;
    long birth = 0;
};

class Engine {
public:
    Engine(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& vars,
           const GpConfig& cfg, const std::optional<Template>& tmpl)
        : X_(X), y_(y), vars_(vars), cfg_(cfg), tmpl_(tmpl), rules_(cfg) {
        if (tmpl_) {
            for (const auto& h : tmpl_->holes) leaves_.push_back(h.params);
        } else {
            leaves_.push_back(vars_);
        }
    }

    GpResult run() {
        Rng root(cfg_.seed);
        std::vector<Rng> rngs;
        for (int i = 0; i < cfg_.populations; ++i) rngs.push_back(root.split(static_cast<std::uint64_t>(i)));
        islands_.resize(static_cast<std::size_t>(cfg_.populations));
        for (int i = 0; i < cfg_.populations; ++i) {
            auto& island = islands_[static_cast<std::size_t>(i)];
            Rng& rng = rngs[static_cast<std::size_t>(i)];
            int attempts = 0;
            while (static_cast<int>(island.size()) < cfg_.population_size) {
                std::vector<Expr> trees;
                for (const auto& leaves : leaves_) trees.push_back(random_tree(rng, static_cast<int>(rng.index(4)), leaves));
                auto ind = make(std::move(trees));
                // Constraints may reject many random trees; fall back to leaves eventually.
                if (!ind && ++attempts > 50 * cfg_.population_size) {
                    std::vector<Expr> leaf_trees;
                    for (const auto& leaves : leaves_) leaf_trees.push_back(random_leaf(rng, leaves));
                    ind = make(std::move(leaf_trees));
                }
                if (ind) island.push_back(std::move(*ind));
                if (!ind && attempts > 100 * cfg_.population_size)
                    throw ArgumentError("constraints reject every candidate expression");
            }
        }

        GpResult result;
        for (int gen = 0; gen < cfg_.niterations; ++gen) {
            for (int i = 0; i < cfg_.populations; ++i)
                evolve(islands_[static_cast<std::size_t>(i)], rngs[static_cast<std::size_t>(i)]);
            if (gen % 5 == 4) {
                for (auto& island : islands_) refine(island);
            }
            if (gen % 10 == 9 && cfg_.populations > 1) migrate();
            GpProgress p;
            p.generation = gen;
            for (const auto& island : islands_) p.island_best_loss.push_back(island[best_loss_index(island)].loss);
            result.history.push_back(std::move(p));
        }
        if (front_.empty()) throw NumericError("no candidate expression evaluates to finite values on the data");
        result.front = front_;
        result.selected = front_.select();
        result.variable_names = vars_;
        return result;
    }

private:
    Expr random_leaf(Rng& rng, const std::vector<std::string>& leaves) {
        if (!leaves.empty() && rng.bernoulli(0.7)) return Expr::variable(leaves[rng.index(leaves.size())]);
        return Expr::constant(std::round(rng.normal() * 2.0 * 1e3) / 1e3);
    }

    Expr random_exponent(Rng& rng) {
        static constexpr std::array<double, 5> pick{2.0, 3.0, -1.0, -2.0, 0.5};
        return Expr::constant(pick[rng.index(pick.size())]);
    }

    Expr random_tree(Rng& rng, int depth, const std::vector<std::string>& leaves) {
        const auto nu = cfg_.unary_operators.size(), nb = cfg_.binary_operators.size();
        if (depth <= 0 || nu + nb == 0 || rng.bernoulli(0.25)) return random_leaf(rng, leaves);
        // Binary operators are drawn twice as often as unary ones.
        const std::size_t pick = rng.index(nu + 2 * nb);
        if (pick < nu) return Expr::unary(cfg_.unary_operators[pick], random_tree(rng, depth - 1, leaves));
        const BinaryOp op = cfg_.binary_operators[(pick - nu) % nb];
        Expr lhs = random_tree(rng, depth - 1, leaves);
        Expr rhs = op == BinaryOp::Pow ? random_exponent(rng) : random_tree(rng, depth - 1, leaves);
        return Expr::binary(op, std::move(lhs), std::move(rhs));
    }

    std::optional<Individual> make(std::vector<Expr> trees) {
        for (auto& t : trees) {
            t = fold_constants(t);
            if (t.size() > cfg_.max_size || !pow_ok(t)) return std::nullopt;
        }
        Expr combined = tmpl_ ? tmpl_->instantiate(trees) : trees[0];
        if (!rules_.check(combined)) return std::nullopt;
        Individual ind;
        ind.trees = std::move(trees);
        ind.combined = std::move(combined);
        ind.complexity = complexity(ind.combined);
        ind.birth = clock_++;
        score(ind);
        return ind;
    }

    void score(Individual& ind) {
        ind.loss = mse(ind.combined, X_, y_, vars_);
        ind.score = ind.loss + cfg_.parsimony * ind.complexity;
        if (std::isfinite(ind.loss)) front_.offer(Candidate{ind.combined, tmpl_ ? ind.trees : std::vector<Expr>{},
                                                            ind.complexity, ind.loss});
    }

    static std::size_t best_loss_index(const std::vector<Individual>& island) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < island.size(); ++i)
            if (island[i].loss < island[best].loss) best = i;
        return best;
    }

    static std::size_t best_score_index(const std::vector<Individual>& island) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < island.size(); ++i)
            if (island[i].score < island[best].score) best = i;
        return best;
    }

    // Oldest member that is neither the best-loss nor the best-score member.
    static std::size_t replacement_slot(const std::vector<Individual>& island) {
        const auto keep_loss = best_loss_index(island), keep_score = best_score_index(island);
        std::size_t slot = island.size();
        for (std::size_t i = 0; i < island.size(); ++i) {
            if (i == keep_loss || i == keep_score) continue;
            if (slot == island.size() || island[i].birth < island[slot].birth) slot = i;
        }
        return slot;
    }

    const Individual& tournament(const std::vector<Individual>& island, Rng& rng) {
        const Individual* best = nullptr;
        for (int k = 0; k < cfg_.tournament_size; ++k) {
            const Individual& c = island[rng.index(island.size())];
            if (!best || c.score < best->score) best = &c;
        }
        return *best;
    }

    std::optional<Expr> mutate(const Expr& tree, Rng& rng, const std::vector<std::string>& leaves) {
        const int n = tree.size();
        switch (rng.index(4)) {
        case 0: { // point-op swap
            const int idx = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
            const Expr& node = subtree_at(tree, idx);
            if (node.kind() == Expr::Kind::Unary) {
                if (cfg_.unary_operators.empty()) return std::nullopt;
                const UnaryOp op = cfg_.unary_operators[rng.index(cfg_.unary_operators.size())];
                return replace_subtree(tree, idx, Expr::unary(op, node.child(0)));
            }
            if (node.kind() == Expr::Kind::Binary) {
                const BinaryOp op = cfg_.binary_operators[rng.index(cfg_.binary_operators.size())];
                return replace_subtree(tree, idx, Expr::binary(op, node.child(0), node.child(1)));
            }
            return replace_subtree(tree, idx, random_leaf(rng, leaves));
        }
        case 1: { // subtree replacement
            const int idx = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
            return replace_subtree(tree, idx, random_tree(rng, static_cast<int>(rng.index(4)), leaves));
        }
        case 2: { // constant jitter
            std::vector<int> consts;
            for (int i = 0; i < n; ++i)
                if (subtree_at(tree, i).kind() == Expr::Kind::Constant) consts.push_back(i);
            if (consts.empty()) return std::nullopt;
            const int idx = consts[rng.index(consts.size())];
            const double c = subtree_at(tree, idx).value();
            const double sigma = c == 0.0 ? 0.1 : 0.1 * std::abs(c);
            return replace_subtree(tree, idx, Expr::constant(c + sigma * rng.normal()));
        }
        default: { // hoist
            if (n < 2) return std::nullopt;
            return subtree_at(tree, 1 + static_cast<int>(rng.index(static_cast<std::size_t>(n - 1))));
        }
        }
    }

    void evolve(std::vector<Individual>& island, Rng& rng) {
        for (int event = 0; event < cfg_.population_size; ++event) {
            const Individual& parent = tournament(island, rng);
            std::vector<Expr> trees = parent.trees;
            const std::size_t t = rng.index(trees.size());
            std::optional<Expr> child;
            if (rng.bernoulli(0.1)) {
                const Individual& other = tournament(island, rng);
                const Expr& donor_tree = other.trees[t];
                const Expr donor =
                    subtree_at(donor_tree, static_cast<int>(rng.index(static_cast<std::size_t>(donor_tree.size()))));
                child = replace_subtree(trees[t], static_cast<int>(rng.index(static_cast<std::size_t>(trees[t].size()))),
                                        donor);
            } else {
                child = mutate(trees[t], rng, leaves_[t]);
            }
            if (!child) continue;
            trees[t] = std::move(*child);
            auto ind = make(std::move(trees));
            if (!ind) continue; // rejected; the parent stays
            assert(rules_.check(ind->combined));
            island[replacement_slot(island)] = std::move(*ind);
        }
    }

    // Coordinate descent on the constants of the island's best member.
    void refine(std::vector<Individual>& island) {
        Individual& best = island[best_score_index(island)];
        if (!std::isfinite(best.loss)) return;
        Individual work = best;
        bool improved = false;
        for (std::size_t t = 0; t < work.trees.size(); ++t) {
            std::vector<int> consts;
            for (int i = 0; i < work.trees[t].size(); ++i)
                if (subtree_at(work.trees[t], i).kind() == Expr::Kind::Constant) consts.push_back(i);
            for (int idx : consts) {
                double step = 0.1 * std::max(1.0, std::abs(subtree_at(work.trees[t], idx).value()));
                for (int iter = 0; iter < 40 && step > 1e-12; ++iter) {
                    bool moved = false;
                    for (double dir : {1.0, -1.0}) {
                        Individual trial = work;
                        const double c = subtree_at(trial.trees[t], idx).value();
                        trial.trees[t] = replace_subtree(trial.trees[t], idx, Expr::constant(c + dir * step));
                        if (!pow_ok(trial.trees[t])) continue;
                        trial.combined = tmpl_ ? tmpl_->instantiate(trial.trees) : trial.trees[0];
                        if (!rules_.check(trial.combined)) continue;
                        trial.loss = mse(trial.combined, X_, y_, vars_);
                        if (trial.loss < work.loss) {
                            work = std::move(trial);
                            moved = improved = true;
                            break;
                        }
                    }
                    step *= moved ? 1.5 : 0.5;
                }
            }
        }
        if (!improved) return;
        work.score = work.loss + cfg_.parsimony * work.complexity;
        front_.offer(Candidate{work.combined, tmpl_ ? work.trees : std::vector<Expr>{}, work.complexity, work.loss});
        best = std::move(work);
    }

    void migrate() {
        std::vector<std::vector<Individual>> emigrants(islands_.size());
        for (std::size_t i = 0; i < islands_.size(); ++i) {
            std::vector<std::size_t> order(islands_[i].size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return islands_[i][a].score < islands_[i][b].score; });
            for (std::size_t k = 0; k < std::min<std::size_t>(2, order.size()); ++k)
                emigrants[i].push_back(islands_[i][order[k]]);
        }
        for (std::size_t i = 0; i < islands_.size(); ++i) {
            auto& dest = islands_[(i + 1) % islands_.size()];
            for (auto ind : emigrants[i]) {
                ind.birth = clock_++;
                dest[replacement_slot(dest)] = std::move(ind);
            }
        }
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& y_;
    const std::vector<std::string>& vars_;
    const GpConfig& cfg_;
    const std::optional<Template>& tmpl_;
    Rules rules_;
    std::vector<std::vector<std::string>> leaves_;
    std::vector<std::vector<Individual>> islands_;
    ParetoFront front_;
    long clock_ = 0;
};

} // namespace

GpResult fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& variable_names,
             const GpConfig& cfg, const std::optional<Template>& tmpl) {
    validate(cfg);
    if (X.rows() == 0 || y.size() == 0) throw DataError("symbolic regression needs at least one row");
    if (X.rows() != y.size()) throw DataError("feature and target row counts differ");
    if (X.cols() != static_cast<Eigen::Index>(variable_names.size()))
        throw DataError("variable names do not match the feature columns");
    if (cfg.binary_operators.empty() && cfg.unary_operators.empty() && tmpl)
        throw ArgumentError("a template needs at least one operator to fill its holes");

    Eigen::MatrixXd Xs = X;
    Eigen::VectorXd ys = y;
    if (cfg.max_rows > 0 && X.rows() > cfg.max_rows) {
        Rng rng(cfg.seed ^ 0x243f6a8885a308d3ULL);
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(X.rows()));
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
        idx.resize(static_cast<std::size_t>(cfg.max_rows));
        std::sort(idx.begin(), idx.end());
        Xs.resize(cfg.max_rows, X.cols());
        ys.resize(cfg.max_rows);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            Xs.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
            ys(static_cast<Eigen::Index>(i)) = y(idx[i]);
        }
    }
    if (tmpl) {
        for (const auto& v : tmpl->variable_names)
            if (std::find(variable_names.begin(), variable_names.end(), v) == variable_names.end())
                throw DataError(fmt::format("template variable '{}' is not a data column", v));
    }
    Engine engine(Xs, ys, variable_names, cfg, tmpl);
    return engine.run();
}

GpResult fit(const data::DatasetBundle& bundle, const GpConfig& cfg, const std::optional<Template>& tmpl,
             std::optional<std::string> target) {
    if (bundle.empty()) throw DataError("symbolic regression needs a nonempty dataset");
    const auto targets = bundle.target_names();
    if (!target) {
        if (targets.size() != 1)
            throw DataError(fmt::format("bundle has {} target columns; name the one to fit", targets.size()));
        target = targets[0];
    }
    const std::vector<std::string> vars = tmpl ? tmpl->variable_names : bundle.feature_names();
    if (vars.empty()) throw DataError("bundle has no feature columns");
    GpResult r = fit(bundle.matrix(vars), bundle.column(*target), vars, cfg, tmpl);
    r.target_name = *target;
    return r;
}

std::map<std::string, OperandCaps> constraints_from_json(const nlohmann::json& j) {
    std::map<std::string, OperandCaps> out;
    if (j.is_null()) return out;
    if (!j.is_object()) throw ArgumentError("constraints must be an object");
    for (const auto& [name, v] : j.items()) {
        if (v.is_number_integer()) {
            out[name] = OperandCaps{v.get<int>(), v.get<int>()};
        } else if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
            out[name] = OperandCaps{v[0].get<int>(), v[1].get<int>()};
        } else {
            throw ArgumentError(fmt::format("constraint for '{}' must be an integer or a pair of integers", name));
        }
    }
    return out;
}

std::map<std::string, std::map<std::string, int>> nested_constraints_from_json(const nlohmann::json& j) {
    std::map<std::string, std::map<std::string, int>> out;
    if (j.is_null()) return out;
    if (!j.is_object()) throw ArgumentError("nested_constraints must be an object");
    for (const auto& [outer, inner] : j.items()) {
        if (!inner.is_object()) throw ArgumentError(fmt::format("nested constraints for '{}' must be an object", outer));
        for (const auto& [name, k] : inner.items()) {
            if (!k.is_number_integer())
                throw ArgumentError(fmt::format("nested limit {} -> {} must be an integer", outer, name));
            out[outer][name] = k.get<int>();
        }
    }
    return out;
}

} // namespace physr::gp
