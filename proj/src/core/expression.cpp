#include "dil/core/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "dil/core/codec.hpp"

namespace dil {

std::string_view to_string(CompareOp op) {
    switch (op) {
        case CompareOp::eq: return "=";
        case CompareOp::ne: return "!=";
        case CompareOp::lt: return "<";
        case CompareOp::le: return "<=";
        case CompareOp::gt: return ">";
        case CompareOp::ge: return ">=";
    }
    return "=";
}

Expr Expr::make_literal(Value v) {
    Expr e;
    e.kind = Kind::literal;
    e.literal = std::move(v);
    return e;
}

Expr Expr::make_attribute(std::string name, int port) {
    Expr e;
    e.kind = Kind::attribute;
    e.name = std::move(name);
    e.port = port;
    return e;
}

Expr Expr::make_compare(CompareOp op, Expr lhs, Expr rhs) {
    Expr e;
    e.kind = Kind::compare;
    e.op = op;
    e.operands.push_back(std::move(lhs));
    e.operands.push_back(std::move(rhs));
    return e;
}

ExpressionError::ExpressionError(std::size_t offset, const std::string& message)
    : Error(ErrorCode::bad_request,
            "expression syntax error at offset " + std::to_string(offset) + ": " + message,
            {{"offset", offset}}),
      offset_(offset) {}

namespace {

enum class Tok { end, ident, number, string, lparen, rparen, lbracket, rbracket, comma, op, kw };

struct Token {
    Tok type = Tok::end;
    std::size_t offset = 0;
    std::string text;  // identifier, keyword, operator spelling
    Value value;       // number / string literal
};

bool is_keyword(std::string_view s) {
    return s == "and" || s == "or" || s == "not" || s == "in" || s == "contains" || s == "true" ||
           s == "false" || s == "null";
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        Token t;
        t.offset = pos_;
        if (pos_ >= src_.size()) return t;
        char c = src_[pos_];
        auto peek = [&](std::size_t k) { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; };
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' || src_[pos_] == '.')) {
                ++pos_;
            }
            t.text = std::string(src_.substr(start, pos_ - start));
            t.type = is_keyword(t.text) ? Tok::kw : Tok::ident;
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
            return number(t);
        }
        if (c == '"' || c == '\'') return string(t, c);
        switch (c) {
            case '(': ++pos_; t.type = Tok::lparen; return t;
            case ')': ++pos_; t.type = Tok::rparen; return t;
            case '[': ++pos_; t.type = Tok::lbracket; return t;
            case ']': ++pos_; t.type = Tok::rbracket; return t;
            case ',': ++pos_; t.type = Tok::comma; return t;
            case '=':
                pos_ += peek(1) == '=' ? 2 : 1;
                t.type = Tok::op;
                t.text = "=";
                return t;
            case '!':
                if (peek(1) == '=') {
                    pos_ += 2;
                    t.type = Tok::op;
                    t.text = "!=";
                    return t;
                }
                break;
            case '<':
            case '>':
                t.type = Tok::op;
                if (peek(1) == '=') {
                    t.text = std::string{c, '='};
                    pos_ += 2;
                } else if (c == '<' && peek(1) == '>') {
                    t.text = "!=";
                    pos_ += 2;
                } else {
                    t.text = std::string{c};
                    ++pos_;
                }
                return t;
            default: break;
        }
        throw ExpressionError(pos_, std::string("unexpected character '") + c + "'");
    }

private:
    Token number(Token& t) {
        std::size_t start = pos_;
        if (src_[pos_] == '-') ++pos_;
        bool is_float = false;
        auto digits = [&] {
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        };
        digits();
        if (pos_ < src_.size() && src_[pos_] == '.' && pos_ + 1 < src_.size() &&
            std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
            is_float = true;
            ++pos_;
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                is_float = true;
                digits();
            } else {
                pos_ = save;
            }
        }
        std::string_view text = src_.substr(start, pos_ - start);
        t.type = Tok::number;
        if (is_float) {
            double d = 0;
            auto res = std::from_chars(text.data(), text.data() + text.size(), d);
            if (res.ec != std::errc() || !std::isfinite(d)) throw ExpressionError(start, "invalid number");
            t.value = Value(d);
        } else {
            std::int64_t i = 0;
            auto res = std::from_chars(text.data(), text.data() + text.size(), i);
            if (res.ec != std::errc()) throw ExpressionError(start, "integer out of range");
            t.value = Value(i);
        }
        return t;
    }

    Token string(Token& t, char quote) {
        std::size_t start = pos_;
        ++pos_;
        std::string out;
        while (true) {
            if (pos_ >= src_.size()) throw ExpressionError(start, "unterminated string");
            char c = src_[pos_];
            if (c == quote) {
                ++pos_;
                break;
            }
            if (c != '\\') {
                out.push_back(c);
                ++pos_;
                continue;
            }
            if (pos_ + 1 >= src_.size()) throw ExpressionError(pos_, "dangling escape");
            char e = src_[pos_ + 1];
            pos_ += 2;
            switch (e) {
                case '"': out.push_back('"'); break;
                case '\'': out.push_back('\''); break;
                case '\\': out.push_back('\\'); break;
                case '/': out.push_back('/'); break;
                case 'b': out.push_back('\b'); break;
                case 'f': out.push_back('\f'); break;
                case 'n': out.push_back('\n'); break;
                case 'r': out.push_back('\r'); break;
                case 't': out.push_back('\t'); break;
                case 'u': {
                    if (pos_ + 4 > src_.size()) throw ExpressionError(pos_ - 2, "short \\u escape");
                    unsigned cp = 0;
                    auto res = std::from_chars(src_.data() + pos_, src_.data() + pos_ + 4, cp, 16);
                    if (res.ptr != src_.data() + pos_ + 4) throw ExpressionError(pos_ - 2, "bad \\u escape");
                    pos_ += 4;
                    if (cp >= 0xD800 && cp <= 0xDFFF) throw ExpressionError(pos_ - 6, "surrogate escape");
                    if (cp < 0x80) {
                        out.push_back(static_cast<char>(cp));
                    } else if (cp < 0x800) {
                        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
                        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
                    } else {
                        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
                        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
                        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
                    }
                    break;
                }
                default: throw ExpressionError(pos_ - 2, "unknown escape");
            }
        }
        t.type = Tok::string;
        t.value = Value(std::move(out));
        return t;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { advance(); }

    Expr parse() {
        Expr e = parse_or();
        if (cur_.type != Tok::end) error("unexpected trailing input");
        return e;
    }

private:
    [[noreturn]] void error(const std::string& msg) const { throw ExpressionError(cur_.offset, msg); }

    void advance() { cur_ = lexer_.next(); }

    bool at_kw(std::string_view kw) const { return cur_.type == Tok::kw && cur_.text == kw; }

    Expr parse_or() {
        Expr first = parse_and();
        if (!at_kw("or")) return first;
        Expr e;
        e.kind = Expr::Kind::logical_or;
        e.operands.push_back(std::move(first));
        while (at_kw("or")) {
            advance();
            e.operands.push_back(parse_and());
        }
        return e;
    }

    Expr parse_and() {
        Expr first = parse_not();
        if (!at_kw("and")) return first;
        Expr e;
        e.kind = Expr::Kind::logical_and;
        e.operands.push_back(std::move(first));
        while (at_kw("and")) {
            advance();
            e.operands.push_back(parse_not());
        }
        return e;
    }

    Expr parse_not() {
        if (!at_kw("not")) return parse_cmp();
        advance();
        Expr e;
        e.kind = Expr::Kind::logical_not;
        e.operands.push_back(parse_cmp());
        return e;
    }

    Expr parse_cmp() {
        Expr lhs = parse_term();
        if (cur_.type == Tok::op) {
            CompareOp op = compare_op(cur_.text);
            advance();
            return Expr::make_compare(op, std::move(lhs), parse_term());
        }
        if (at_kw("in")) {
            advance();
            Expr e;
            e.kind = Expr::Kind::in;
            e.operands.push_back(std::move(lhs));
            if (cur_.type == Tok::lbracket) {
                e.operands.push_back(Expr::make_literal(parse_list()));
            } else if (cur_.type == Tok::ident) {
                e.operands.push_back(attribute());
            } else {
                error("expected list or attribute after 'in'");
            }
            return e;
        }
        if (at_kw("contains")) {
            advance();
            Expr e;
            e.kind = Expr::Kind::contains;
            e.operands.push_back(std::move(lhs));
            e.operands.push_back(parse_term());
            return e;
        }
        return lhs;
    }

    static CompareOp compare_op(std::string_view s) {
        if (s == "=") return CompareOp::eq;
        if (s == "!=") return CompareOp::ne;
        if (s == "<") return CompareOp::lt;
        if (s == "<=") return CompareOp::le;
        if (s == ">") return CompareOp::gt;
        return CompareOp::ge;
    }

    Value parse_list() {
        advance();  // '['
        List items;
        if (cur_.type == Tok::rbracket) {
            advance();
            return Value(std::move(items));
        }
        while (true) {
            auto lit = literal();
            if (!lit) error("list elements must be literals");
            items.push_back(std::move(*lit));
            if (cur_.type == Tok::comma) {
                advance();
                continue;
            }
            if (cur_.type == Tok::rbracket) {
                advance();
                break;
            }
            error("expected ',' or ']'");
        }
        return Value(std::move(items));
    }

    std::optional<Value> literal() {
        Value v;
        if (cur_.type == Tok::number || cur_.type == Tok::string) {
            v = cur_.value;
        } else if (at_kw("true")) {
            v = Value(true);
        } else if (at_kw("false")) {
            v = Value(false);
        } else if (at_kw("null")) {
            v = Value();
        } else {
            return std::nullopt;
        }
        advance();
        return v;
    }

    Expr attribute() {
        std::string text = cur_.text;
        advance();
        // "tN.name" selects port N.
        if (text.size() > 2 && text[0] == 't' && std::isdigit(static_cast<unsigned char>(text[1]))) {
            auto dot = text.find('.');
            if (dot != std::string::npos && dot + 1 < text.size()) {
                int port = 0;
                auto res = std::from_chars(text.data() + 1, text.data() + dot, port);
                if (res.ptr == text.data() + dot && res.ec == std::errc()) {
                    return Expr::make_attribute(text.substr(dot + 1), port);
                }
            }
        }
        return Expr::make_attribute(std::move(text), 0);
    }

    Expr parse_term() {
        if (cur_.type == Tok::lparen) {
            advance();
            Expr e = parse_or();
            if (cur_.type != Tok::rparen) error("expected ')'");
            advance();
            return e;
        }
        if (cur_.type == Tok::ident) return attribute();
        if (auto lit = literal()) return Expr::make_literal(std::move(*lit));
        if (cur_.type == Tok::end) error("unexpected end of expression");
        error("expected a literal, attribute or '('");
    }

    Lexer lexer_;
    Token cur_;
};

void print_into(const Expr& e, std::string& out);

void print_operand(const Expr& e, std::string& out) {
    if (e.is_term()) {
        print_into(e, out);
    } else {
        out.push_back('(');
        print_into(e, out);
        out.push_back(')');
    }
}

void print_into(const Expr& e, std::string& out) {
    switch (e.kind) {
        case Expr::Kind::literal: out += serialize_value(e.literal); break;
        case Expr::Kind::attribute:
            if (e.port != 0) out += "t" + std::to_string(e.port) + ".";
            out += e.name;
            break;
        case Expr::Kind::compare:
            print_operand(e.operands[0], out);
            out += " ";
            out += to_string(e.op);
            out += " ";
            print_operand(e.operands[1], out);
            break;
        case Expr::Kind::logical_and:
        case Expr::Kind::logical_or: {
            const char* sep = e.kind == Expr::Kind::logical_and ? " and " : " or ";
            for (std::size_t i = 0; i < e.operands.size(); ++i) {
                if (i) out += sep;
                print_operand(e.operands[i], out);
            }
            break;
        }
        case Expr::Kind::logical_not:
            out += "not ";
            print_operand(e.operands[0], out);
            break;
        case Expr::Kind::in: {
            print_operand(e.operands[0], out);
            out += " in ";
            const Expr& rhs = e.operands[1];
            if (rhs.kind == Expr::Kind::attribute) {
                print_into(rhs, out);
            } else {
                out.push_back('[');
                const auto& items = rhs.literal.as_list();
                for (std::size_t i = 0; i < items.size(); ++i) {
                    if (i) out += ", ";
                    out += serialize_value(items[i]);
                }
                out.push_back(']');
            }
            break;
        }
        case Expr::Kind::contains:
            print_operand(e.operands[0], out);
            out += " contains ";
            print_operand(e.operands[1], out);
            break;
    }
}

// nullopt = attribute missing from its row (or port unbound).
using Eval = std::optional<Value>;

Eval eval(const Expr& e, RowContext rows);

bool truthy(const Eval& v) { return v && v->is_bool() && v->as_bool(); }

// nullopt when the pair is not comparable under op.
std::optional<bool> compare_values(const Value& a, const Value& b, CompareOp op) {
    int c = 0;
    bool ordered = false;
    if (a.is_number() && b.is_number()) {
        c = compare(a, b);
        ordered = true;
    } else if (a.is_string() && b.is_string()) {
        c = compare(a, b);
        ordered = true;
    } else if (a.type() == b.type()) {
        c = numeric_equal(a, b) ? 0 : 1;
    } else {
        return std::nullopt;
    }
    switch (op) {
        case CompareOp::eq: return c == 0;
        case CompareOp::ne: return c != 0;
        default: break;
    }
    if (!ordered) return std::nullopt;
    switch (op) {
        case CompareOp::lt: return c < 0;
        case CompareOp::le: return c <= 0;
        case CompareOp::gt: return c > 0;
        case CompareOp::ge: return c >= 0;
        default: return std::nullopt;
    }
}

bool equal_for_membership(const Value& a, const Value& b) {
    auto r = compare_values(a, b, CompareOp::eq);
    return r && *r;
}

Eval eval(const Expr& e, RowContext rows) {
    switch (e.kind) {
        case Expr::Kind::literal: return e.literal;
        case Expr::Kind::attribute: {
            if (e.port < 0 || static_cast<std::size_t>(e.port) >= rows.size()) return std::nullopt;
            const Row* row = rows[static_cast<std::size_t>(e.port)];
            if (!row) return std::nullopt;
            auto it = row->find(e.name);
            if (it == row->end()) return std::nullopt;
            return it->second;
        }
        case Expr::Kind::compare: {
            Eval a = eval(e.operands[0], rows);
            Eval b = eval(e.operands[1], rows);
            if (!a || !b) return Value(false);
            auto r = compare_values(*a, *b, e.op);
            return Value(r.value_or(false));
        }
        case Expr::Kind::logical_and:
            for (const auto& o : e.operands) {
                if (!truthy(eval(o, rows))) return Value(false);
            }
            return Value(true);
        case Expr::Kind::logical_or:
            for (const auto& o : e.operands) {
                if (truthy(eval(o, rows))) return Value(true);
            }
            return Value(false);
        case Expr::Kind::logical_not: return Value(!truthy(eval(e.operands[0], rows)));
        case Expr::Kind::in: {
            Eval a = eval(e.operands[0], rows);
            Eval b = eval(e.operands[1], rows);
            if (!a || !b) return Value(false);
            if (b->is_list()) {
                for (const auto& item : b->as_list()) {
                    if (equal_for_membership(*a, item)) return Value(true);
                }
                return Value(false);
            }
            return Value(equal_for_membership(*a, *b));
        }
        case Expr::Kind::contains: {
            Eval a = eval(e.operands[0], rows);
            Eval b = eval(e.operands[1], rows);
            if (!a || !b) return Value(false);
            if (a->is_string() && b->is_string()) {
                return Value(a->as_string().find(b->as_string()) != std::string::npos);
            }
            if (a->is_list()) {
                for (const auto& item : a->as_list()) {
                    if (equal_for_membership(item, *b)) return Value(true);
                }
            }
            return Value(false);
        }
    }
    return Value(false);
}

void collect_refs(const Expr& e, int port, std::set<std::string>& out) {
    if (e.kind == Expr::Kind::attribute && e.port == port) out.insert(e.name);
    for (const auto& o : e.operands) collect_refs(o, port, out);
}

void collect_ports(const Expr& e, std::set<int>& out) {
    if (e.kind == Expr::Kind::attribute) out.insert(e.port);
    for (const auto& o : e.operands) collect_ports(o, out);
}

}  // namespace

Expr parse_expression(std::string_view text) { return Parser(text).parse(); }

std::string print_expression(const Expr& e) {
    std::string out;
    print_into(e, out);
    return out;
}

int expression_depth(const Expr& e) {
    if (e.is_term()) return 0;
    int deepest = 0;
    for (const auto& o : e.operands) deepest = std::max(deepest, expression_depth(o));
    return deepest + 1;
}

std::set<std::string> referenced_attributes(const Expr& e, int port) {
    std::set<std::string> out;
    collect_refs(e, port, out);
    return out;
}

std::set<int> referenced_ports(const Expr& e) {
    std::set<int> out;
    collect_ports(e, out);
    return out;
}

Value eval_expression(const Expr& e, RowContext rows) {
    Eval v = eval(e, rows);
    return v ? std::move(*v) : Value();
}

bool matches(const Expr& e, RowContext rows) { return truthy(eval(e, rows)); }

}  // namespace dil
