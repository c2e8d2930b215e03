#include "stefan/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "stefan/error.hpp"

namespace stefan {

namespace {

ExprPtr node(Expr::Kind k, ExprPtr a = nullptr, ExprPtr b = nullptr) {
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->a = std::move(a);
    e->b = std::move(b);
    return e;
}

bool is_const(const ExprPtr& e, double v) {
    return e->kind == Expr::Kind::constant && e->value == v;
}

} // namespace

ExprPtr expr_const(double v) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::constant;
    e->value = v;
    return e;
}

ExprPtr expr_coord(int axis) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::coord;
    e->axis = axis;
    return e;
}

ExprPtr expr_time() { return node(Expr::Kind::time); }

ExprPtr expr_add(ExprPtr a, ExprPtr b) {
    if (a->kind == Expr::Kind::constant && b->kind == Expr::Kind::constant)
        return expr_const(a->value + b->value);
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return node(Expr::Kind::add, std::move(a), std::move(b));
}

ExprPtr expr_sub(ExprPtr a, ExprPtr b) {
    if (a->kind == Expr::Kind::constant && b->kind == Expr::Kind::constant)
        return expr_const(a->value - b->value);
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return expr_neg(std::move(b));
    return node(Expr::Kind::sub, std::move(a), std::move(b));
}

ExprPtr expr_mul(ExprPtr a, ExprPtr b) {
    if (a->kind == Expr::Kind::constant && b->kind == Expr::Kind::constant)
        return expr_const(a->value * b->value);
    if (is_const(a, 0.0) || is_const(b, 0.0)) return expr_const(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    return node(Expr::Kind::mul, std::move(a), std::move(b));
}

ExprPtr expr_div(ExprPtr a, ExprPtr b) {
    if (a->kind == Expr::Kind::constant && b->kind == Expr::Kind::constant &&
        b->value != 0.0)
        return expr_const(a->value / b->value);
    if (is_const(a, 0.0) && !is_const(b, 0.0)) return expr_const(0.0);
    if (is_const(b, 1.0)) return a;
    return node(Expr::Kind::div, std::move(a), std::move(b));
}

ExprPtr expr_neg(ExprPtr a) {
    if (a->kind == Expr::Kind::constant) return expr_const(-a->value);
    return node(Expr::Kind::neg, std::move(a));
}

ExprPtr expr_sin(ExprPtr a) {
    if (a->kind == Expr::Kind::constant) return expr_const(std::sin(a->value));
    return node(Expr::Kind::sin, std::move(a));
}

ExprPtr expr_cos(ExprPtr a) {
    if (a->kind == Expr::Kind::constant) return expr_const(std::cos(a->value));
    return node(Expr::Kind::cos, std::move(a));
}

ExprPtr expr_exp(ExprPtr a) {
    if (a->kind == Expr::Kind::constant) return expr_const(std::exp(a->value));
    return node(Expr::Kind::exp, std::move(a));
}

namespace {

class Parser {
public:
    Parser(const std::string& text, int dim) : text_(text), dim_(dim) {}

    ExprPtr run() {
        ExprPtr e = sum();
        skip_ws();
        if (pos_ != text_.size()) fail("trailing input");
        return e;
    }

private:
    ExprPtr sum() {
        ExprPtr e = product();
        for (;;) {
            skip_ws();
            if (accept('+'))
                e = expr_add(e, product());
            else if (accept('-'))
                e = expr_sub(e, product());
            else
                return e;
        }
    }

    ExprPtr product() {
        ExprPtr e = unary();
        for (;;) {
            skip_ws();
            if (accept('*'))
                e = expr_mul(e, unary());
            else if (accept('/'))
                e = expr_div(e, unary());
            else
                return e;
        }
    }

    ExprPtr unary() {
        skip_ws();
        if (accept('-')) return expr_neg(unary());
        if (accept('+')) return unary();
        return primary();
    }

    ExprPtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return ident();
        if (accept('(')) {
            ExprPtr e = sum();
            expect(')');
            return e;
        }
        fail("unexpected character");
        return nullptr;
    }

    ExprPtr number() {
        const char* begin = text_.c_str() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) fail("malformed number");
        pos_ += static_cast<size_t>(end - begin);
        return expr_const(v);
    }

    ExprPtr ident() {
        size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                text_[pos_] == '_'))
            ++pos_;
        std::string name = text_.substr(start, pos_ - start);
        if (name == "t") return expr_time();
        if (name.size() >= 2 && name[0] == 'x') {
            int axis = 0;
            for (size_t i = 1; i < name.size(); ++i) {
                if (!std::isdigit(static_cast<unsigned char>(name[i])))
                    fail("unknown identifier '" + name + "'");
                axis = axis * 10 + (name[i] - '0');
            }
            if (axis < 1 || axis > dim_)
                fail("coordinate '" + name + "' outside dimension " +
                     std::to_string(dim_));
            return expr_coord(axis - 1);
        }
        if (name == "sin" || name == "cos" || name == "exp") {
            skip_ws();
            expect('(');
            ExprPtr arg = sum();
            expect(')');
            if (name == "sin") return expr_sin(arg);
            if (name == "cos") return expr_cos(arg);
            return expr_exp(arg);
        }
        fail("unknown identifier '" + name + "'");
        return nullptr;
    }

    void skip_ws() {
        while (pos_ < text_.size() &&
               std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool accept(char c) {
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        skip_ws();
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    [[noreturn]] void fail(const std::string& what) {
        throw Error("expression", what + " at position " +
                                       std::to_string(pos_) + " in \"" +
                                       text_ + "\"");
    }

    const std::string& text_;
    int dim_;
    size_t pos_ = 0;
};

} // namespace

ExprPtr parse_expression(const std::string& text, int dim) {
    return Parser(text, dim).run();
}

double eval(const Expr& e, std::span<const double> x, double t) {
    switch (e.kind) {
    case Expr::Kind::constant: return e.value;
    case Expr::Kind::coord: return x[static_cast<size_t>(e.axis)];
    case Expr::Kind::time: return t;
    case Expr::Kind::add: return eval(*e.a, x, t) + eval(*e.b, x, t);
    case Expr::Kind::sub: return eval(*e.a, x, t) - eval(*e.b, x, t);
    case Expr::Kind::mul: return eval(*e.a, x, t) * eval(*e.b, x, t);
    case Expr::Kind::div: return eval(*e.a, x, t) / eval(*e.b, x, t);
    case Expr::Kind::neg: return -eval(*e.a, x, t);
    case Expr::Kind::sin: return std::sin(eval(*e.a, x, t));
    case Expr::Kind::cos: return std::cos(eval(*e.a, x, t));
    case Expr::Kind::exp: return std::exp(eval(*e.a, x, t));
    }
    return 0.0;
}

ExprPtr derivative(const ExprPtr& e, int axis) {
    switch (e->kind) {
    case Expr::Kind::constant: return expr_const(0.0);
    case Expr::Kind::coord: return expr_const(e->axis == axis ? 1.0 : 0.0);
    case Expr::Kind::time: return expr_const(axis == -1 ? 1.0 : 0.0);
    case Expr::Kind::add:
        return expr_add(derivative(e->a, axis), derivative(e->b, axis));
    case Expr::Kind::sub:
        return expr_sub(derivative(e->a, axis), derivative(e->b, axis));
    case Expr::Kind::mul:
        return expr_add(expr_mul(derivative(e->a, axis), e->b),
                        expr_mul(e->a, derivative(e->b, axis)));
    case Expr::Kind::div:
        return expr_div(expr_sub(expr_mul(derivative(e->a, axis), e->b),
                                 expr_mul(e->a, derivative(e->b, axis))),
                        expr_mul(e->b, e->b));
    case Expr::Kind::neg: return expr_neg(derivative(e->a, axis));
    case Expr::Kind::sin: return expr_mul(expr_cos(e->a), derivative(e->a, axis));
    case Expr::Kind::cos:
        return expr_neg(expr_mul(expr_sin(e->a), derivative(e->a, axis)));
    case Expr::Kind::exp: return expr_mul(expr_exp(e->a), derivative(e->a, axis));
    }
    return expr_const(0.0);
}

namespace {

void render(const Expr& e, std::ostream& os) {
    switch (e.kind) {
    case Expr::Kind::constant: {
        std::ostringstream tmp;
        tmp.precision(17);
        tmp << e.value;
        std::string s = tmp.str();
        if (e.value < 0.0)
            os << "(" << s << ")";
        else
            os << s;
        return;
    }
    case Expr::Kind::coord: os << "x" << (e.axis + 1); return;
    case Expr::Kind::time: os << "t"; return;
    case Expr::Kind::add:
        os << "(";
        render(*e.a, os);
        os << " + ";
        render(*e.b, os);
        os << ")";
        return;
    case Expr::Kind::sub:
        os << "(";
        render(*e.a, os);
        os << " - ";
        render(*e.b, os);
        os << ")";
        return;
    case Expr::Kind::mul:
        os << "(";
        render(*e.a, os);
        os << " * ";
        render(*e.b, os);
        os << ")";
        return;
    case Expr::Kind::div:
        os << "(";
        render(*e.a, os);
        os << " / ";
        render(*e.b, os);
        os << ")";
        return;
    case Expr::Kind::neg:
        os << "(-";
        render(*e.a, os);
        os << ")";
        return;
    case Expr::Kind::sin:
        os << "sin(";
        render(*e.a, os);
        os << ")";
        return;
    case Expr::Kind::cos:
        os << "cos(";
        render(*e.a, os);
        os << ")";
        return;
    case Expr::Kind::exp:
        os << "exp(";
        render(*e.a, os);
        os << ")";
        return;
    }
}

} // namespace

std::string to_string(const Expr& e) {
    std::ostringstream os;
    render(e, os);
    return os.str();
}

} // namespace stefan
