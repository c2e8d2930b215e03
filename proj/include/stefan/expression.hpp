#pragma once

#include <memory>
#include <span>
#include <string>

namespace stefan {

// Immutable arithmetic expression over coordinates x1..xd and time t.
// Grammar: +, -, *, /, unary -, parentheses, sin, cos, exp, numeric
// constants.  Nodes are shared and never mutated after construction.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind {
        constant,
        coord, // x{axis+1}
        time,
        add,
        sub,
        mul,
        div,
        neg,
        sin,
        cos,
        exp
    };

    Kind kind;
    double value = 0.0; // constant
    int axis = -1;      // coord
    ExprPtr a, b;
};

// Folding constructors: constant subtrees collapse, *1 / +0 simplify.
ExprPtr expr_const(double v);
ExprPtr expr_coord(int axis);
ExprPtr expr_time();
ExprPtr expr_add(ExprPtr a, ExprPtr b);
ExprPtr expr_sub(ExprPtr a, ExprPtr b);
ExprPtr expr_mul(ExprPtr a, ExprPtr b);
ExprPtr expr_div(ExprPtr a, ExprPtr b);
ExprPtr expr_neg(ExprPtr a);
ExprPtr expr_sin(ExprPtr a);
ExprPtr expr_cos(ExprPtr a);
ExprPtr expr_exp(ExprPtr a);

// Parses `text` for a d-dimensional domain.  Coordinates above x{dim} are
// rejected.  Throws Error("expression") on any syntax problem, quoting the
// offending position.
ExprPtr parse_expression(const std::string& text, int dim);

double eval(const Expr& e, std::span<const double> x, double t);

// Exact symbolic derivative; axis in [0, d) differentiates in x{axis+1},
// axis == -1 differentiates in t.
ExprPtr derivative(const ExprPtr& e, int axis);

// Round-trippable rendering (re-parses to an equivalent tree).
std::string to_string(const Expr& e);

} // namespace stefan
