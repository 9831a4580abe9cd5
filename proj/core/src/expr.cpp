#include "physr/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "physr/error.hpp"
#include "physr/rng.hpp"

namespace physr {

// ---------------------------------------------------------------------------
// Operators

std::string_view op_name(UnaryOp op) noexcept {
    switch (op) {
    case UnaryOp::Neg: return "neg";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Tan: return "tan";
    case UnaryOp::Cot: return "cot";
    case UnaryOp::Abs: return "abs";
    }
    return "?";
}

std::string_view op_name(BinaryOp op) noexcept {
    switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Pow: return "^";
    }
    return "?";
}

std::optional<UnaryOp> unary_from_name(std::string_view name) noexcept {
    for (auto op : all_unary_ops()) {
        if (op_name(op) == name) return op;
    }
    return std::nullopt;
}

std::optional<BinaryOp> binary_from_name(std::string_view name) noexcept {
    if (name == "+" || name == "add") return BinaryOp::Add;
    if (name == "-" || name == "sub") return BinaryOp::Sub;
    if (name == "*" || name == "mul" || name == "mult") return BinaryOp::Mul;
    if (name == "/" || name == "div") return BinaryOp::Div;
    if (name == "^" || name == "**" || name == "pow") return BinaryOp::Pow;
    return std::nullopt;
}

const std::vector<UnaryOp>& all_unary_ops() {
    static const std::vector<UnaryOp> ops{UnaryOp::Neg,  UnaryOp::Sin, UnaryOp::Cos, UnaryOp::Exp, UnaryOp::Log,
                                          UnaryOp::Sqrt, UnaryOp::Tan, UnaryOp::Cot, UnaryOp::Abs};
    return ops;
}

const std::vector<BinaryOp>& all_binary_ops() {
    static const std::vector<BinaryOp> ops{BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div,
                                           BinaryOp::Pow};
    return ops;
}

double apply(UnaryOp op, double x) noexcept {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    switch (op) {
    case UnaryOp::Neg: return -x;
    case UnaryOp::Sin: return std::sin(x);
    case UnaryOp::Cos: return std::cos(x);
    case UnaryOp::Exp: return std::exp(x);
    case UnaryOp::Log: return x > 0.0 ? std::log(x) : nan;
    case UnaryOp::Sqrt: return x >= 0.0 ? std::sqrt(x) : nan;
    case UnaryOp::Tan: return std::tan(x);
    case UnaryOp::Cot: {
        const double s = std::sin(x);
        return s == 0.0 ? nan : std::cos(x) / s;
    }
    case UnaryOp::Abs: return std::fabs(x);
    }
    return nan;
}

double apply(BinaryOp op, double a, double b) noexcept {
    switch (op) {
    case BinaryOp::Add: return a + b;
    case BinaryOp::Sub: return a - b;
    case BinaryOp::Mul: return a * b;
    case BinaryOp::Div: return b == 0.0 ? std::numeric_limits<double>::quiet_NaN() : a / b;
    case BinaryOp::Pow: return std::pow(a, b);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Expr

struct Expr::Node {
    Kind kind;
    std::string name;
    double value = 0.0;
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    std::vector<Expr> children;
    int size = 1;
    int depth = 1;
};

namespace {

void finish(auto& node) {
    int size = 1;
    int depth = 0;
    for (const auto& c : node.children) {
        size += c.size();
        depth = std::max(depth, c.depth());
    }
    node.size = size;
    node.depth = depth + 1;
}

} // namespace

Expr Expr::variable(std::string name) {
    if (name.empty()) throw Error("variable name must be nonempty");
    auto n = std::make_shared<Node>();
    n->kind = Kind::Variable;
    n->name = std::move(name);
    return Expr(std::move(n));
}

Expr::Expr() : Expr(constant(0.0)) {}

Expr Expr::constant(double value) {
    if (!std::isfinite(value)) throw Error("expression constants must be finite");
    auto n = std::make_shared<Node>();
    n->kind = Kind::Constant;
    n->value = value;
    return Expr(std::move(n));
}

Expr Expr::unary(UnaryOp op, Expr child) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Unary;
    n->uop = op;
    n->children.push_back(std::move(child));
    finish(*n);
    return Expr(std::move(n));
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Binary;
    n->bop = op;
    n->children.push_back(std::move(lhs));
    n->children.push_back(std::move(rhs));
    finish(*n);
    return Expr(std::move(n));
}

Expr Expr::hole(std::string name, std::vector<Expr> args) {
    if (name.empty()) throw Error("hole name must be nonempty");
    auto n = std::make_shared<Node>();
    n->kind = Kind::Hole;
    n->name = std::move(name);
    n->children = std::move(args);
    finish(*n);
    return Expr(std::move(n));
}

Expr::Kind Expr::kind() const noexcept { return node_->kind; }
const std::string& Expr::name() const noexcept { return node_->name; }
double Expr::value() const noexcept { return node_->value; }
UnaryOp Expr::unary_op() const noexcept { return node_->uop; }
BinaryOp Expr::binary_op() const noexcept { return node_->bop; }
std::span<const Expr> Expr::children() const noexcept { return node_->children; }
int Expr::size() const noexcept { return node_->size; }
int Expr::depth() const noexcept { return node_->depth; }

bool operator==(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    if (a.kind() != b.kind() || a.size() != b.size()) return false;
    switch (a.kind()) {
    case Expr::Kind::Variable: return a.name() == b.name();
    case Expr::Kind::Constant: return a.value() == b.value();
    case Expr::Kind::Unary:
        if (a.unary_op() != b.unary_op()) return false;
        break;
    case Expr::Kind::Binary:
        if (a.binary_op() != b.binary_op()) return false;
        break;
    case Expr::Kind::Hole:
        if (a.name() != b.name() || a.children().size() != b.children().size()) return false;
        break;
    }
    for (std::size_t i = 0; i < a.children().size(); ++i) {
        if (!(a.children()[i] == b.children()[i])) return false;
    }
    return true;
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::binary(BinaryOp::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::binary(BinaryOp::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::binary(BinaryOp::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::binary(BinaryOp::Div, a, b); }
Expr operator-(const Expr& a) { return Expr::unary(UnaryOp::Neg, a); }

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
public:
    Parser(std::string_view text, const std::set<std::string>& vars, const ParseOptions& options)
        : text_(text), vars_(vars), options_(options) {}

    Expr run() {
        skip_ws();
        if (at_end()) throw ParseError("empty expression", pos_);
        Expr e = parse_sum();
        skip_ws();
        if (!at_end()) throw ParseError(fmt::format("unexpected '{}'", text_[pos_]), pos_);
        return e;
    }

private:
    struct Operand {
        Expr expr;
        bool bare_literal = false;
    };

    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return at_end() ? '\0' : text_[pos_]; }

    void skip_ws() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(std::string_view token) {
        skip_ws();
        if (text_.substr(pos_, token.size()) == token) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    void expect(char c) {
        skip_ws();
        if (peek() != c) throw ParseError(fmt::format("expected '{}'", c), pos_);
        ++pos_;
    }

    Expr parse_sum() {
        Expr lhs = parse_product();
        for (;;) {
            skip_ws();
            if (peek() == '+') {
                ++pos_;
                lhs = Expr::binary(BinaryOp::Add, lhs, parse_product());
            } else if (peek() == '-') {
                ++pos_;
                lhs = Expr::binary(BinaryOp::Sub, lhs, parse_product());
            } else {
                return lhs;
            }
        }
    }

    Expr parse_product() {
        Expr lhs = parse_unary().expr;
        for (;;) {
            skip_ws();
            if (peek() == '*' && text_.substr(pos_, 2) != "**") {
                ++pos_;
                lhs = Expr::binary(BinaryOp::Mul, lhs, parse_unary().expr);
            } else if (peek() == '/') {
                ++pos_;
                lhs = Expr::binary(BinaryOp::Div, lhs, parse_unary().expr);
            } else {
                return lhs;
            }
        }
    }

    Operand parse_unary() {
        skip_ws();
        if (peek() == '-') {
            ++pos_;
            Operand inner = parse_unary();
            // "-3" is the literal -3; "-(3)" stays a negation node.
            if (inner.bare_literal) return {Expr::constant(-inner.expr.value()), false};
            return {Expr::unary(UnaryOp::Neg, inner.expr), false};
        }
        if (peek() == '+') {
            ++pos_;
            return {parse_unary().expr, false};
        }
        return parse_power();
    }

    Operand parse_power() {
        Operand base = parse_primary();
        skip_ws();
        if (accept("**") || accept("^")) {
            Expr exponent = parse_unary().expr;
            return {Expr::binary(BinaryOp::Pow, base.expr, exponent), false};
        }
        return base;
    }

    Operand parse_primary() {
        skip_ws();
        if (at_end()) throw ParseError("unexpected end of input", pos_);
        const char c = peek();
        if (c == '(') {
            ++pos_;
            Expr inner = parse_sum();
            expect(')');
            return {inner, false};
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return {parse_number(), true};
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return {parse_identifier(), false};
        throw ParseError(fmt::format("unexpected '{}'", c), pos_);
    }

    Expr parse_number() {
        const std::size_t start = pos_;
        while (!at_end() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.')) ++pos_;
        if (!at_end() && (peek() == 'e' || peek() == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (peek() == '+' || peek() == '-') ++pos_;
            if (!std::isdigit(static_cast<unsigned char>(peek()))) {
                pos_ = save;
            } else {
                while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
            }
        }
        double value = 0.0;
        const auto* first = text_.data() + start;
        const auto* last = text_.data() + pos_;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last) throw ParseError("malformed number", start);
        if (!std::isfinite(value)) throw ParseError("number out of range", start);
        return Expr::constant(value);
    }

    Expr parse_identifier() {
        const std::size_t start = pos_;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) ++pos_;
        std::string name(text_.substr(start, pos_ - start));
        skip_ws();
        const bool call = peek() == '(';
        if (!call) {
            if (vars_.contains(name)) return Expr::variable(name);
            throw UnknownIdentifierError(name, start);
        }
        ++pos_;
        std::vector<Expr> args;
        skip_ws();
        if (peek() != ')') {
            args.push_back(parse_sum());
            while (accept(",")) args.push_back(parse_sum());
        }
        expect(')');
        if (auto op = unary_from_name(name)) {
            if (args.size() != 1) throw ParseError(fmt::format("'{}' takes one argument", name), start);
            return Expr::unary(*op, args[0]);
        }
        if (name == "pow") {
            if (args.size() != 2) throw ParseError("'pow' takes two arguments", start);
            return Expr::binary(BinaryOp::Pow, args[0], args[1]);
        }
        if (options_.allow_holes) {
            if (args.empty()) throw ParseError(fmt::format("hole '{}' needs at least one argument", name), start);
            return Expr::hole(name, std::move(args));
        }
        throw UnknownIdentifierError(name, start);
    }

    std::string_view text_;
    const std::set<std::string>& vars_;
    const ParseOptions& options_;
    std::size_t pos_ = 0;
};

} // namespace

Expr parse(std::string_view text, const std::set<std::string>& vars, const ParseOptions& options) {
    return Parser(text, vars, options).run();
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

// Binding strength: sum 1, product 2, prefix minus 3, power 4, atom 5.
int precedence(const Expr& e) {
    switch (e.kind()) {
    case Expr::Kind::Constant: return e.value() < 0.0 || std::signbit(e.value()) ? 3 : 5;
    case Expr::Kind::Variable:
    case Expr::Kind::Hole: return 5;
    case Expr::Kind::Unary: return e.unary_op() == UnaryOp::Neg ? 3 : 5;
    case Expr::Kind::Binary:
        switch (e.binary_op()) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return 1;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 2;
        case BinaryOp::Pow: return 4;
        }
    }
    return 5;
}

std::string format_constant(double v, int digits) {
    std::string s = fmt::format("{:.{}g}", v, digits);
    if (s == "-0") s = "0";
    return s;
}

void render_into(const Expr& e, const RenderOptions& opt, std::string& out);

void render_wrapped(const Expr& e, bool parens, const RenderOptions& opt, std::string& out) {
    if (parens) out += '(';
    render_into(e, opt, out);
    if (parens) out += ')';
}

void render_into(const Expr& e, const RenderOptions& opt, std::string& out) {
    switch (e.kind()) {
    case Expr::Kind::Variable: out += e.name(); return;
    case Expr::Kind::Constant: out += format_constant(e.value(), opt.significant_digits); return;
    case Expr::Kind::Hole:
        out += e.name();
        out += '(';
        for (std::size_t i = 0; i < e.children().size(); ++i) {
            if (i) out += ", ";
            render_into(e.children()[i], opt, out);
        }
        out += ')';
        return;
    case Expr::Kind::Unary:
        if (e.unary_op() == UnaryOp::Neg) {
            const Expr& c = e.child(0);
            out += '-';
            render_wrapped(c, c.kind() == Expr::Kind::Constant || precedence(c) < 3, opt, out);
            return;
        }
        out += op_name(e.unary_op());
        render_wrapped(e.child(0), true, opt, out);
        return;
    case Expr::Kind::Binary: {
        const Expr& l = e.child(0);
        const Expr& r = e.child(1);
        const int p = precedence(e);
        if (e.binary_op() == BinaryOp::Pow) {
            render_wrapped(l, precedence(l) <= 4, opt, out);
            out += '^';
            render_wrapped(r, precedence(r) < 3, opt, out);
            return;
        }
        render_wrapped(l, precedence(l) < p, opt, out);
        switch (e.binary_op()) {
        case BinaryOp::Add: out += " + "; break;
        case BinaryOp::Sub: out += " - "; break;
        case BinaryOp::Mul: out += '*'; break;
        case BinaryOp::Div: out += '/'; break;
        case BinaryOp::Pow: break;
        }
        render_wrapped(r, precedence(r) <= p, opt, out);
        return;
    }
    }
}

} // namespace

std::string render(const Expr& e, const RenderOptions& options) {
    std::string out;
    render_into(e, options, out);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation and structural helpers

int complexity(const Expr& e) noexcept { return e.size(); }

double evaluate(const Expr& e, const std::map<std::string, double>& point) {
    switch (e.kind()) {
    case Expr::Kind::Variable: {
        auto it = point.find(e.name());
        if (it == point.end()) throw UnboundVariableError(e.name());
        return it->second;
    }
    case Expr::Kind::Constant: return e.value();
    case Expr::Kind::Unary: return apply(e.unary_op(), evaluate(e.child(0), point));
    case Expr::Kind::Binary:
        return apply(e.binary_op(), evaluate(e.child(0), point), evaluate(e.child(1), point));
    case Expr::Kind::Hole: throw Error("cannot evaluate unsubstituted hole '" + e.name() + "'");
    }
    return std::numeric_limits<double>::quiet_NaN();
}

namespace {
void collect_vars(const Expr& e, std::set<std::string>& out) {
    if (e.kind() == Expr::Kind::Variable) out.insert(e.name());
    for (const auto& c : e.children()) collect_vars(c, out);
}

Expr rebuild(const Expr& e, std::vector<Expr> kids) {
    switch (e.kind()) {
    case Expr::Kind::Unary: return Expr::unary(e.unary_op(), std::move(kids[0]));
    case Expr::Kind::Binary: return Expr::binary(e.binary_op(), std::move(kids[0]), std::move(kids[1]));
    case Expr::Kind::Hole: return Expr::hole(e.name(), std::move(kids));
    default: return e;
    }
}
} // namespace

std::set<std::string> variables(const Expr& e) {
    std::set<std::string> out;
    collect_vars(e, out);
    return out;
}

Expr substitute(const Expr& e, const std::map<std::string, Expr>& replacements) {
    if (e.kind() == Expr::Kind::Variable) {
        auto it = replacements.find(e.name());
        return it == replacements.end() ? e : it->second;
    }
    if (e.is_leaf()) return e;
    std::vector<Expr> kids;
    kids.reserve(e.children().size());
    for (const auto& c : e.children()) kids.push_back(substitute(c, replacements));
    return rebuild(e, std::move(kids));
}

Expr substitute_holes(const Expr& e, const std::map<std::string, HoleBody>& bodies) {
    if (e.is_leaf()) return e;
    std::vector<Expr> kids;
    kids.reserve(e.children().size());
    for (const auto& c : e.children()) kids.push_back(substitute_holes(c, bodies));
    if (e.kind() == Expr::Kind::Hole) {
        auto it = bodies.find(e.name());
        if (it != bodies.end()) {
            const HoleBody& hb = it->second;
            if (hb.params.size() != kids.size())
                throw Error(fmt::format("hole '{}' expects {} arguments, got {}", e.name(), hb.params.size(),
                                        kids.size()));
            std::map<std::string, Expr> binding;
            for (std::size_t i = 0; i < kids.size(); ++i) binding.emplace(hb.params[i], kids[i]);
            return substitute(hb.body, binding);
        }
    }
    return rebuild(e, std::move(kids));
}

Expr fold_constants(const Expr& e) {
    if (e.is_leaf() || e.kind() == Expr::Kind::Hole) return e;
    std::vector<Expr> kids;
    bool all_const = true;
    for (const auto& c : e.children()) {
        kids.push_back(fold_constants(c));
        all_const = all_const && kids.back().kind() == Expr::Kind::Constant;
    }
    if (all_const) {
        const double v = e.kind() == Expr::Kind::Unary ? apply(e.unary_op(), kids[0].value())
                                                        : apply(e.binary_op(), kids[0].value(), kids[1].value());
        if (std::isfinite(v)) return Expr::constant(v);
    }
    return rebuild(e, std::move(kids));
}

const Expr& subtree_at(const Expr& e, int index) {
    if (index < 0 || index >= e.size()) throw Error("subtree index out of range");
    const Expr* node = &e;
    while (index > 0) {
        --index;
        for (const auto& c : node->children()) {
            if (index < c.size()) {
                node = &c;
                break;
            }
            index -= c.size();
        }
    }
    return *node;
}

Expr replace_subtree(const Expr& e, int index, const Expr& replacement) {
    if (index < 0 || index >= e.size()) throw Error("subtree index out of range");
    if (index == 0) return replacement;
    int offset = index - 1;
    std::vector<Expr> kids(e.children().begin(), e.children().end());
    for (auto& c : kids) {
        if (offset < c.size()) {
            c = replace_subtree(c, offset, replacement);
            break;
        }
        offset -= c.size();
    }
    return rebuild(e, std::move(kids));
}

// ---------------------------------------------------------------------------
// JSON tree form

nlohmann::json to_json(const Expr& e) {
    using nlohmann::json;
    switch (e.kind()) {
    case Expr::Kind::Variable: return json{{"type", "var"}, {"name", e.name()}};
    case Expr::Kind::Constant: return json{{"type", "const"}, {"value", e.value()}};
    case Expr::Kind::Unary:
        return json{{"type", "unary"}, {"op", std::string(op_name(e.unary_op()))}, {"arg", to_json(e.child(0))}};
    case Expr::Kind::Binary:
        return json{{"type", "binary"},
                    {"op", std::string(op_name(e.binary_op()))},
                    {"lhs", to_json(e.child(0))},
                    {"rhs", to_json(e.child(1))}};
    case Expr::Kind::Hole: {
        json args = json::array();
        for (const auto& c : e.children()) args.push_back(to_json(c));
        return json{{"type", "hole"}, {"name", e.name()}, {"args", args}};
    }
    }
    return {};
}

Expr expr_from_json(const nlohmann::json& j) {
    try {
        const std::string type = j.at("type");
        if (type == "var") return Expr::variable(j.at("name"));
        if (type == "const") return Expr::constant(j.at("value").get<double>());
        if (type == "unary") {
            auto op = unary_from_name(j.at("op").get<std::string>());
            if (!op) throw DataError("unknown unary operator in expression JSON");
            return Expr::unary(*op, expr_from_json(j.at("arg")));
        }
        if (type == "binary") {
            auto op = binary_from_name(j.at("op").get<std::string>());
            if (!op) throw DataError("unknown binary operator in expression JSON");
            return Expr::binary(*op, expr_from_json(j.at("lhs")), expr_from_json(j.at("rhs")));
        }
        if (type == "hole") {
            std::vector<Expr> args;
            for (const auto& a : j.at("args")) args.push_back(expr_from_json(a));
            return Expr::hole(j.at("name"), std::move(args));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("malformed expression JSON: ") + ex.what());
    }
    throw DataError("malformed expression JSON: unknown node type");
}

// ---------------------------------------------------------------------------
// Numeric equivalence

EquivalenceResult numeric_equivalent(const Expr& a, const Expr& b, const std::map<std::string, Interval>& domain,
                                     int n_points, double rel_tol, std::uint64_t seed) {
    if (n_points < 32) throw ArgumentError("numeric_equivalent needs at least 32 sample points");
    std::set<std::string> vars = variables(a);
    vars.merge(variables(b));
    for (const auto& v : vars) {
        if (!domain.contains(v)) throw ArgumentError("no sampling interval for variable '" + v + "'");
    }

    Rng rng(seed);
    std::map<std::string, double> point;
    std::vector<std::pair<double, double>> values;
    values.reserve(static_cast<std::size_t>(n_points));
    EquivalenceResult result;
    for (int i = 0; i < n_points; ++i) {
        for (const auto& v : vars) {
            const Interval& iv = domain.at(v);
            point[v] = rng.uniform(iv.lo, iv.hi);
        }
        const double va = evaluate(a, point);
        const double vb = evaluate(b, point);
        if (!std::isfinite(va) || !std::isfinite(vb)) {
            ++result.skipped;
            continue;
        }
        values.emplace_back(va, vb);
    }
    result.evaluated = static_cast<int>(values.size());
    if (2 * result.skipped > n_points)
        throw NumericError(fmt::format("insufficient finite samples: {} of {} skipped", result.skipped, n_points));

    double scale = 0.0;
    double max_diff = 0.0;
    for (auto [va, vb] : values) {
        scale = std::max({scale, std::fabs(va), std::fabs(vb)});
        max_diff = std::max(max_diff, std::fabs(va - vb));
    }
    result.max_relative_deviation = scale > 0.0 ? max_diff / scale : 0.0;
    result.equivalent = result.max_relative_deviation <= rel_tol;
    return result;
}

} // namespace physr
