#ifndef INTERTWINE_EXPR_HPP
#define INTERTWINE_EXPR_HPP

#include <cctype>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "intertwine/errors.hpp"

// Expression trees over {polynomial in x, exp, integer power, +, *}.
// Differentiation is structural, so potentials and test functions have exact
// derivatives of every order.  Polynomials are kept in coefficient form and
// like terms are merged aggressively; repeated differentiation of
// p(x)*exp(q(x)) stays a bounded-size tree instead of doubling each pass.

namespace itw {

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

class Expr {
public:
    enum class Kind { Poly, Exp, Pow, Add, Mul };
    Kind kind;
    std::vector<double> coeff;   // Poly: coeff[i] x^i
    int exponent = 1;            // Pow
    std::vector<ExprPtr> kids;   // Exp: 1, Pow: 1, Add/Mul: >= 2

    explicit Expr(Kind k) : kind(k) {}
};

namespace detail {

inline std::vector<double> ptrim(std::vector<double> c) {
    while (c.size() > 1 && c.back() == 0.0) c.pop_back();
    if (c.empty()) c.push_back(0.0);
    return c;
}

inline std::vector<double> padd(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(std::max(a.size(), b.size()), 0.0);
    for (size_t i = 0; i < a.size(); ++i) r[i] += a[i];
    for (size_t i = 0; i < b.size(); ++i) r[i] += b[i];
    return ptrim(r);
}

inline std::vector<double> pmul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(a.size() + b.size() - 1, 0.0);
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return ptrim(r);
}

inline std::vector<double> pdiff(const std::vector<double>& a) {
    if (a.size() <= 1) return {0.0};
    std::vector<double> r(a.size() - 1);
    for (size_t i = 1; i < a.size(); ++i) r[i - 1] = a[i] * double(i);
    return ptrim(r);
}

inline double peval(const std::vector<double>& a, double x) {
    double r = 0.0;
    for (size_t i = a.size(); i-- > 0;) r = r * x + a[i];
    return r;
}

inline bool pis_const(const std::vector<double>& a) { return a.size() == 1; }
inline bool pis_zero(const std::vector<double>& a) { return a.size() == 1 && a[0] == 0.0; }

} // namespace detail

inline ExprPtr make_poly(std::vector<double> c) {
    auto e = std::make_shared<Expr>(Expr::Kind::Poly);
    e->coeff = detail::ptrim(std::move(c));
    return e;
}

inline ExprPtr make_const(double c) { return make_poly({c}); }
inline ExprPtr make_x() { return make_poly({0.0, 1.0}); }

inline bool is_poly(const ExprPtr& e) { return e->kind == Expr::Kind::Poly; }
inline bool is_zero(const ExprPtr& e) { return is_poly(e) && detail::pis_zero(e->coeff); }
inline bool is_const(const ExprPtr& e, double v) {
    return is_poly(e) && detail::pis_const(e->coeff) && e->coeff[0] == v;
}

inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a.get() == b.get()) return true;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
    case Expr::Kind::Poly: return a->coeff == b->coeff;
    case Expr::Kind::Pow:
        if (a->exponent != b->exponent) return false;
        [[fallthrough]];
    default:
        if (a->kids.size() != b->kids.size()) return false;
        for (size_t i = 0; i < a->kids.size(); ++i)
            if (!expr_equal(a->kids[i], b->kids[i])) return false;
        return true;
    }
}

inline ExprPtr make_add(std::vector<ExprPtr> kids);
inline ExprPtr make_mul(std::vector<ExprPtr> kids);
inline ExprPtr make_pow(ExprPtr base, int n);
inline ExprPtr make_exp(ExprPtr arg);

inline ExprPtr make_exp(ExprPtr arg) {
    if (is_poly(arg) && detail::pis_const(arg->coeff))
        return make_const(std::exp(arg->coeff[0]));
    auto e = std::make_shared<Expr>(Expr::Kind::Exp);
    e->kids.push_back(std::move(arg));
    return e;
}

inline ExprPtr make_pow(ExprPtr base, int n) {
    if (n == 0) return make_const(1.0);
    if (n == 1) return base;
    if (is_poly(base)) {
        if (n > 0 && (base->coeff.size() - 1) * size_t(n) <= 40) {
            std::vector<double> r{1.0};
            for (int i = 0; i < n; ++i) r = detail::pmul(r, base->coeff);
            return make_poly(std::move(r));
        }
        if (detail::pis_const(base->coeff) && base->coeff[0] != 0.0)
            return make_const(std::pow(base->coeff[0], n));
    }
    if (base->kind == Expr::Kind::Pow) return make_pow(base->kids[0], base->exponent * n);
    if (base->kind == Expr::Kind::Exp)
        return make_exp(make_mul({make_const(double(n)), base->kids[0]}));
    auto e = std::make_shared<Expr>(Expr::Kind::Pow);
    e->exponent = n;
    e->kids.push_back(std::move(base));
    return e;
}

inline ExprPtr make_mul(std::vector<ExprPtr> kids) {
    std::vector<ExprPtr> flat;
    for (auto& k : kids) {
        if (k->kind == Expr::Kind::Mul)
            flat.insert(flat.end(), k->kids.begin(), k->kids.end());
        else
            flat.push_back(k);
    }
    std::vector<double> p{1.0};
    std::vector<ExprPtr> expargs, rest;
    for (auto& k : flat) {
        if (is_poly(k)) {
            if (detail::pis_zero(k->coeff)) return make_const(0.0);
            p = detail::pmul(p, k->coeff);
        } else if (k->kind == Expr::Kind::Exp) {
            expargs.push_back(k->kids[0]);
        } else {
            rest.push_back(k);
        }
    }
    // merge powers with structurally equal bases
    std::vector<std::pair<ExprPtr, int>> pows;
    for (auto& k : rest) {
        ExprPtr base = (k->kind == Expr::Kind::Pow) ? k->kids[0] : k;
        int n = (k->kind == Expr::Kind::Pow) ? k->exponent : 1;
        bool merged = false;
        for (auto& pr : pows)
            if (expr_equal(pr.first, base)) { pr.second += n; merged = true; break; }
        if (!merged) pows.emplace_back(base, n);
    }
    std::vector<ExprPtr> out;
    if (!detail::pis_const(p) || p[0] != 1.0) out.push_back(make_poly(p));
    if (!expargs.empty()) {
        ExprPtr a = expargs.size() == 1 ? expargs[0] : make_add(expargs);
        ExprPtr ex = make_exp(a);
        if (!is_const(ex, 1.0)) out.push_back(ex);
    }
    for (auto& pr : pows) {
        ExprPtr q = make_pow(pr.first, pr.second);
        if (!is_const(q, 1.0)) out.push_back(q);
    }
    if (out.empty()) return make_const(detail::pis_const(p) ? p[0] : 1.0);
    if (out.size() == 1) return out[0];
    auto e = std::make_shared<Expr>(Expr::Kind::Mul);
    e->kids = std::move(out);
    return e;
}

namespace detail {
// split a term into (polynomial multiplier, residual factor)
inline std::pair<std::vector<double>, ExprPtr> term_split(const ExprPtr& t) {
    if (is_poly(t)) return {t->coeff, nullptr};
    if (t->kind == Expr::Kind::Mul) {
        std::vector<double> p{1.0};
        std::vector<ExprPtr> rest;
        for (auto& k : t->kids) {
            if (is_poly(k)) p = pmul(p, k->coeff);
            else rest.push_back(k);
        }
        if (rest.empty()) return {p, nullptr};
        ExprPtr r = rest.size() == 1 ? rest[0] : [&] {
            auto e = std::make_shared<Expr>(Expr::Kind::Mul);
            e->kids = rest;
            return ExprPtr(e);
        }();
        return {p, r};
    }
    return {{1.0}, t};
}
} // namespace detail

inline ExprPtr make_add(std::vector<ExprPtr> kids) {
    std::vector<ExprPtr> flat;
    for (auto& k : kids) {
        if (k->kind == Expr::Kind::Add)
            flat.insert(flat.end(), k->kids.begin(), k->kids.end());
        else
            flat.push_back(k);
    }
    std::vector<double> p{0.0};
    // like-term accumulation keyed by the non-polynomial factor
    std::vector<std::pair<ExprPtr, std::vector<double>>> groups;
    for (auto& k : flat) {
        auto [c, r] = detail::term_split(k);
        if (!r) { p = detail::padd(p, c); continue; }
        bool merged = false;
        for (auto& g : groups)
            if (expr_equal(g.first, r)) { g.second = detail::padd(g.second, c); merged = true; break; }
        if (!merged) groups.emplace_back(r, c);
    }
    std::vector<ExprPtr> out;
    if (!detail::pis_zero(p)) out.push_back(make_poly(p));
    for (auto& g : groups) {
        if (detail::pis_zero(g.second)) continue;
        if (detail::pis_const(g.second) && g.second[0] == 1.0) out.push_back(g.first);
        else out.push_back(make_mul({make_poly(g.second), g.first}));
    }
    if (out.empty()) return make_const(0.0);
    if (out.size() == 1) return out[0];
    auto e = std::make_shared<Expr>(Expr::Kind::Add);
    e->kids = std::move(out);
    return e;
}

inline double expr_eval(const ExprPtr& e, double x) {
    switch (e->kind) {
    case Expr::Kind::Poly: return detail::peval(e->coeff, x);
    case Expr::Kind::Exp: return std::exp(expr_eval(e->kids[0], x));
    case Expr::Kind::Pow: return std::pow(expr_eval(e->kids[0], x), e->exponent);
    case Expr::Kind::Add: {
        double s = 0.0;
        for (auto& k : e->kids) s += expr_eval(k, x);
        return s;
    }
    case Expr::Kind::Mul: {
        double s = 1.0;
        for (auto& k : e->kids) s *= expr_eval(k, x);
        return s;
    }
    }
    return 0.0;
}

inline ExprPtr expr_diff(const ExprPtr& e) {
    switch (e->kind) {
    case Expr::Kind::Poly: return make_poly(detail::pdiff(e->coeff));
    case Expr::Kind::Exp:
        return make_mul({expr_diff(e->kids[0]), e});  // reuse node: keeps terms mergeable
    case Expr::Kind::Pow:
        return make_mul({make_const(double(e->exponent)), expr_diff(e->kids[0]),
                         make_pow(e->kids[0], e->exponent - 1)});
    case Expr::Kind::Add: {
        std::vector<ExprPtr> kids;
        for (auto& k : e->kids) kids.push_back(expr_diff(k));
        return make_add(std::move(kids));
    }
    case Expr::Kind::Mul: {
        std::vector<ExprPtr> terms;
        for (size_t i = 0; i < e->kids.size(); ++i) {
            std::vector<ExprPtr> f;
            for (size_t j = 0; j < e->kids.size(); ++j)
                f.push_back(i == j ? expr_diff(e->kids[j]) : e->kids[j]);
            terms.push_back(make_mul(std::move(f)));
        }
        return make_add(std::move(terms));
    }
    }
    return make_const(0.0);
}

inline std::string expr_to_string(const ExprPtr& e) {
    std::ostringstream os;
    switch (e->kind) {
    case Expr::Kind::Poly: {
        os << "(";
        bool first = true;
        for (size_t i = 0; i < e->coeff.size(); ++i) {
            if (e->coeff[i] == 0.0 && e->coeff.size() > 1) continue;
            if (!first) os << " + ";
            os << e->coeff[i];
            if (i >= 1) os << "*x";
            if (i >= 2) os << "^" << i;
            first = false;
        }
        os << ")";
        break;
    }
    case Expr::Kind::Exp: os << "exp(" << expr_to_string(e->kids[0]) << ")"; break;
    case Expr::Kind::Pow: os << expr_to_string(e->kids[0]) << "^" << e->exponent; break;
    case Expr::Kind::Add: {
        os << "(";
        for (size_t i = 0; i < e->kids.size(); ++i) {
            if (i) os << " + ";
            os << expr_to_string(e->kids[i]);
        }
        os << ")";
        break;
    }
    case Expr::Kind::Mul: {
        for (size_t i = 0; i < e->kids.size(); ++i) {
            if (i) os << "*";
            os << expr_to_string(e->kids[i]);
        }
        break;
    }
    }
    return os.str();
}

// --- infix parser ------------------------------------------------------
//
// expr   := term (('+' | '-') term)*
// term   := factor (('*' | '/') factor)*
// factor := ('-' | '+')* base ('^' intexp)?
// base   := number | 'x' | '(' expr ')' | 'exp' '(' expr ')'

namespace detail {

class Parser {
public:
    explicit Parser(std::string s) : s_(std::move(s)) {}

    ExprPtr run() {
        ExprPtr e = expr();
        skip();
        if (pos_ != s_.size())
            throw ParseError("trailing input in potential spec at position " + std::to_string(pos_));
        return e;
    }

private:
    std::string s_;
    size_t pos_ = 0;

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) { ++pos_; return true; }
        return false;
    }
    char peek() {
        skip();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    ExprPtr expr() {
        ExprPtr e = term();
        for (;;) {
            if (eat('+')) e = make_add({e, term()});
            else if (eat('-')) e = make_add({e, make_mul({make_const(-1.0), term()})});
            else return e;
        }
    }

    ExprPtr term() {
        ExprPtr e = factor();
        for (;;) {
            if (eat('*')) e = make_mul({e, factor()});
            else if (eat('/')) e = make_mul({e, make_pow(factor(), -1)});
            else return e;
        }
    }

    ExprPtr factor() {
        int sign = 1;
        for (;;) {
            if (eat('-')) sign = -sign;
            else if (eat('+')) continue;
            else break;
        }
        ExprPtr e = base();
        if (eat('^')) e = make_pow(e, intexp());
        return sign == 1 ? e : make_mul({make_const(-1.0), e});
    }

    int intexp() {
        skip();
        bool paren = eat('(');
        int sign = eat('-') ? -1 : 1;
        skip();
        size_t start = pos_;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        if (pos_ == start) throw ParseError("expected integer exponent at position " + std::to_string(pos_));
        int v = std::stoi(s_.substr(start, pos_ - start));
        if (paren && !eat(')')) throw ParseError("unbalanced parentheses in exponent");
        return sign * v;
    }

    ExprPtr base() {
        skip();
        if (pos_ >= s_.size()) throw ParseError("unexpected end of potential spec");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            ExprPtr e = expr();
            if (!eat(')')) throw ParseError("unbalanced parentheses");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t used = 0;
            double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            return make_const(v);
        }
        if (c == 'x' && (pos_ + 1 >= s_.size() || !std::isalpha(static_cast<unsigned char>(s_[pos_ + 1])))) {
            ++pos_;
            return make_x();
        }
        if (s_.compare(pos_, 3, "exp") == 0) {
            pos_ += 3;
            if (!eat('(')) throw ParseError("exp requires parentheses");
            ExprPtr e = expr();
            if (!eat(')')) throw ParseError("unbalanced parentheses after exp");
            return make_exp(e);
        }
        throw ParseError(std::string("unexpected character '") + c + "' in potential spec");
    }
};

} // namespace detail

inline ExprPtr parse_expr(const std::string& s) { return detail::Parser(s).run(); }

} // namespace itw

#endif
