#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dil/core/table.hpp"
#include "dil/error.hpp"

namespace dil {

// Predicate mini-language used by filter and join conditions.
//
//   expr := or
//   or   := and ('or' and)*
//   and  := not ('and' not)*
//   not  := 'not'? cmp
//   cmp  := term (op term)? | term 'in' (list | ident) | term 'contains' term
//   term := literal | ident | '(' expr ')'
//   op   := '=' | '!=' | '<' | '<=' | '>' | '>='
//   list := '[' (literal (',' literal)*)? ']'
//   literal := number | string | 'true' | 'false' | 'null'
//   ident := [A-Za-z_][A-Za-z0-9_.]*     ("tN." prefix selects input port N)
//
// Strings are double-quoted with JSON escapes (single quotes also accepted).
// Keywords are lowercase and reserved.

enum class CompareOp { eq, ne, lt, le, gt, ge };

std::string_view to_string(CompareOp op);

struct Expr {
    enum class Kind { literal, attribute, compare, logical_and, logical_or, logical_not, in, contains };

    Kind kind = Kind::literal;
    Value literal;       // literal value; list literal for `in`
    int port = 0;        // attribute
    std::string name;    // attribute
    CompareOp op = CompareOp::eq;
    std::vector<Expr> operands;

    static Expr make_literal(Value v);
    static Expr make_attribute(std::string name, int port = 0);
    static Expr make_compare(CompareOp op, Expr lhs, Expr rhs);

    bool is_term() const noexcept { return kind == Kind::literal || kind == Kind::attribute; }

    bool operator==(const Expr&) const = default;
};

// Syntax error; code bad_request, detail {"offset": N}.
class ExpressionError : public Error {
public:
    ExpressionError(std::size_t offset, const std::string& message);
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Throws ExpressionError carrying the byte offset of the first invalid token.
Expr parse_expression(std::string_view text);

// Canonical text; parse(print(e)) == e for every parsed e.
std::string print_expression(const Expr& e);

// Number of nested operator levels (terms do not count).
int expression_depth(const Expr& e);

// Attribute references grouped by port.
std::set<std::string> referenced_attributes(const Expr& e, int port);
std::set<int> referenced_ports(const Expr& e);

// Row bound to each input port; nullptr for an unbound port.
using RowContext = std::span<const Row* const>;

// Total: never throws. A missing attribute or a type-incompatible comparison
// yields false; integers and floats compare numerically.
Value eval_expression(const Expr& e, RowContext rows);

// eval_expression(...) is boolean true.
bool matches(const Expr& e, RowContext rows);

}  // namespace dil
