#pragma once

// Arithmetic expressions over the current state x1..xN and the delayed state
// y1..yN.  Grammar (EBNF):
//
//   expr    = term { ("+" | "-") term } ;
//   term    = unary { ("*" | "/") unary } ;
//   unary   = "-" unary | "+" unary | power ;
//   power   = primary [ "^" unary ] ;            (* right associative *)
//   primary = number | variable | func "(" expr ")" | "(" expr ")" ;
//   func    = "sin" | "cos" | "exp" | "tanh" | "abs" ;
//   variable= ("x" | "y") digit { digit } ;
//
// so "^" binds tighter than unary minus ("-x1^2" is -(x1^2)).

#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sobdde/errors.hpp"

namespace sobdde {

enum class ExprKind { Number, StateVar, DelayVar, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Tanh, Abs };

struct ExprNode {
    ExprKind kind = ExprKind::Number;
    double value = 0.0;     // Number
    std::size_t index = 0;  // StateVar / DelayVar, 0-based
    int lhs = -1;           // operand (unary, call) or left operand
    int rhs = -1;           // right operand of binary ops
};

/// Parse tree stored as a flat arena; `root` indexes into `nodes`.
class ExprAst {
public:
    ExprAst() = default;
    ExprAst(std::vector<ExprNode> nodes, int root, std::size_t dim)
        : nodes_(std::move(nodes)), root_(root), dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    int root() const noexcept { return root_; }
    const ExprNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    std::size_t size() const noexcept { return nodes_.size(); }

    double evaluate(std::span<const double> x, std::span<const double> y) const { return eval(root_, x, y); }

    /// Fully parenthesized rendering that parses back to an equal tree.
    std::string print() const {
        std::ostringstream os;
        os << std::setprecision(17);
        print(os, root_);
        return os.str();
    }

    friend bool operator==(const ExprAst& a, const ExprAst& b) {
        return a.dim_ == b.dim_ && same(a, a.root_, b, b.root_);
    }

private:
    double eval(int i, std::span<const double> x, std::span<const double> y) const {
        const ExprNode& n = node(i);
        switch (n.kind) {
            case ExprKind::Number: return n.value;
            case ExprKind::StateVar: return x[n.index];
            case ExprKind::DelayVar: return y[n.index];
            case ExprKind::Neg: return -eval(n.lhs, x, y);
            case ExprKind::Add: return eval(n.lhs, x, y) + eval(n.rhs, x, y);
            case ExprKind::Sub: return eval(n.lhs, x, y) - eval(n.rhs, x, y);
            case ExprKind::Mul: return eval(n.lhs, x, y) * eval(n.rhs, x, y);
            case ExprKind::Div: return eval(n.lhs, x, y) / eval(n.rhs, x, y);
            case ExprKind::Pow: return pow_eval(eval(n.lhs, x, y), eval(n.rhs, x, y));
            case ExprKind::Sin: return std::sin(eval(n.lhs, x, y));
            case ExprKind::Cos: return std::cos(eval(n.lhs, x, y));
            case ExprKind::Exp: return std::exp(eval(n.lhs, x, y));
            case ExprKind::Tanh: return std::tanh(eval(n.lhs, x, y));
            case ExprKind::Abs: return std::abs(eval(n.lhs, x, y));
        }
        return 0.0;
    }

    static double pow_eval(double base, double e) {
        // Small integer exponents by repeated multiplication: exact for
        // negative bases and cheaper than std::pow.
        if (e == std::floor(e) && std::abs(e) <= 64.0) {
            auto k = static_cast<long>(std::abs(e));
            double r = 1.0;
            double b = base;
            while (k > 0) {
                if (k & 1) r *= b;
                b *= b;
                k >>= 1;
            }
            return e < 0 ? 1.0 / r : r;
        }
        return std::pow(base, e);
    }

    void print(std::ostream& os, int i) const {
        const ExprNode& n = node(i);
        auto binary = [&](const char* op) {
            os << '(';
            print(os, n.lhs);
            os << ' ' << op << ' ';
            print(os, n.rhs);
            os << ')';
        };
        auto call = [&](const char* f) {
            os << f << '(';
            print(os, n.lhs);
            os << ')';
        };
        switch (n.kind) {
            case ExprKind::Number: os << n.value; break;
            case ExprKind::StateVar: os << 'x' << (n.index + 1); break;
            case ExprKind::DelayVar: os << 'y' << (n.index + 1); break;
            case ExprKind::Neg:
                os << "(-";
                print(os, n.lhs);
                os << ')';
                break;
            case ExprKind::Add: binary("+"); break;
            case ExprKind::Sub: binary("-"); break;
            case ExprKind::Mul: binary("*"); break;
            case ExprKind::Div: binary("/"); break;
            case ExprKind::Pow: binary("^"); break;
            case ExprKind::Sin: call("sin"); break;
            case ExprKind::Cos: call("cos"); break;
            case ExprKind::Exp: call("exp"); break;
            case ExprKind::Tanh: call("tanh"); break;
            case ExprKind::Abs: call("abs"); break;
        }
    }

    static bool same(const ExprAst& a, int i, const ExprAst& b, int j) {
        if ((i < 0) != (j < 0)) return false;
        if (i < 0) return true;
        const ExprNode& x = a.node(i);
        const ExprNode& y = b.node(j);
        if (x.kind != y.kind) return false;
        if (x.kind == ExprKind::Number) return x.value == y.value;
        if (x.kind == ExprKind::StateVar || x.kind == ExprKind::DelayVar) return x.index == y.index;
        return same(a, x.lhs, b, y.lhs) && same(a, x.rhs, b, y.rhs);
    }

    std::vector<ExprNode> nodes_;
    int root_ = -1;
    std::size_t dim_ = 0;
};

namespace detail {

class ExprParser {
public:
    ExprParser(std::string_view src, std::size_t dim) : src_(src), dim_(dim) { advance(); }

    ExprAst parse() {
        if (tok_.kind == Tok::End) fail("expected an expression");
        const int root = parse_expr();
        if (tok_.kind != Tok::End) fail("expected operator or end of input");
        return ExprAst(std::move(nodes_), root, dim_);
    }

private:
    enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

    struct Token {
        Tok kind = Tok::End;
        std::string text;
        double number = 0.0;
        std::size_t line = 1;
        std::size_t column = 1;
    };

    [[noreturn]] void fail(const std::string& expected) const {
        throw SyntaxError(expected + ", found " + describe(tok_), tok_.line, tok_.column);
    }

    static std::string describe(const Token& t) {
        if (t.kind == Tok::End) return "end of input";
        return "'" + t.text + "'";
    }

    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) {
            if (src_[pos_] == '\n') {
                ++line_;
                col_ = 1;
            } else {
                ++col_;
            }
            ++pos_;
        }
        tok_ = Token{};
        tok_.line = line_;
        tok_.column = col_;
        if (pos_ >= src_.size()) return;

        const char c = src_[pos_];
        const std::size_t start = pos_;
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            auto digit_at = [&](std::size_t i) {
                return i < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i]));
            };
            std::size_t end = pos_;
            std::size_t mantissa_digits = 0;
            while (digit_at(end)) ++end, ++mantissa_digits;
            if (end < src_.size() && src_[end] == '.') {
                ++end;
                while (digit_at(end)) ++end, ++mantissa_digits;
            }
            if (mantissa_digits == 0) {
                tok_.kind = Tok::Ident;
                tok_.text = ".";
                fail("expected a number");
            }
            if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
                std::size_t e = end + 1;
                if (e < src_.size() && (src_[e] == '+' || src_[e] == '-')) ++e;
                if (digit_at(e)) {
                    while (digit_at(e)) ++e;
                    end = e;
                }
            }
            tok_.kind = Tok::Number;
            tok_.text = std::string(src_.substr(start, end - start));
            tok_.number = std::strtod(tok_.text.c_str(), nullptr);
            consume(end - start);
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t n = 0;
            while (pos_ + n < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_ + n])) || src_[pos_ + n] == '_'))
                ++n;
            tok_.kind = Tok::Ident;
            tok_.text = std::string(src_.substr(pos_, n));
            consume(n);
            return;
        }
        tok_.text = std::string(1, c);
        switch (c) {
            case '+': tok_.kind = Tok::Plus; break;
            case '-': tok_.kind = Tok::Minus; break;
            case '*': tok_.kind = Tok::Star; break;
            case '/': tok_.kind = Tok::Slash; break;
            case '^': tok_.kind = Tok::Caret; break;
            case '(': tok_.kind = Tok::LParen; break;
            case ')': tok_.kind = Tok::RParen; break;
            default:
                throw SyntaxError("unexpected character '" + tok_.text + "'", tok_.line, tok_.column);
        }
        consume(1);
    }

    void consume(std::size_t n) {
        pos_ += n;
        col_ += n;
    }

    int add(ExprNode n) {
        nodes_.push_back(n);
        return static_cast<int>(nodes_.size() - 1);
    }

    int parse_expr() {
        int lhs = parse_term();
        while (tok_.kind == Tok::Plus || tok_.kind == Tok::Minus) {
            const ExprKind k = tok_.kind == Tok::Plus ? ExprKind::Add : ExprKind::Sub;
            advance();
            const int rhs = parse_term();
            lhs = add({k, 0.0, 0, lhs, rhs});
        }
        return lhs;
    }

    int parse_term() {
        int lhs = parse_unary();
        while (tok_.kind == Tok::Star || tok_.kind == Tok::Slash) {
            const ExprKind k = tok_.kind == Tok::Star ? ExprKind::Mul : ExprKind::Div;
            advance();
            const int rhs = parse_unary();
            lhs = add({k, 0.0, 0, lhs, rhs});
        }
        return lhs;
    }

    int parse_unary() {
        if (tok_.kind == Tok::Minus) {
            advance();
            const int operand = parse_unary();
            return add({ExprKind::Neg, 0.0, 0, operand, -1});
        }
        if (tok_.kind == Tok::Plus) {
            advance();
            return parse_unary();
        }
        return parse_power();
    }

    int parse_power() {
        const int base = parse_primary();
        if (tok_.kind == Tok::Caret) {
            advance();
            const int exponent = parse_unary();
            return add({ExprKind::Pow, 0.0, 0, base, exponent});
        }
        return base;
    }

    int parse_primary() {
        switch (tok_.kind) {
            case Tok::Number: {
                const double v = tok_.number;
                advance();
                return add({ExprKind::Number, v, 0, -1, -1});
            }
            case Tok::LParen: {
                advance();
                const int inner = parse_expr();
                expect(Tok::RParen, "expected ')'");
                return inner;
            }
            case Tok::Ident: return parse_identifier();
            default: fail("expected number, variable, function or '('");
        }
    }

    int parse_identifier() {
        const Token t = tok_;
        static constexpr struct {
            const char* name;
            ExprKind kind;
        } funcs[] = {{"sin", ExprKind::Sin},
                     {"cos", ExprKind::Cos},
                     {"exp", ExprKind::Exp},
                     {"tanh", ExprKind::Tanh},
                     {"abs", ExprKind::Abs}};
        for (const auto& f : funcs) {
            if (t.text == f.name) {
                advance();
                expect(Tok::LParen, "expected '(' after function name");
                const int arg = parse_expr();
                expect(Tok::RParen, "expected ')'");
                return add({f.kind, 0.0, 0, arg, -1});
            }
        }
        if (t.text.size() >= 2 && (t.text[0] == 'x' || t.text[0] == 'y')) {
            bool digits = true;
            for (std::size_t i = 1; i < t.text.size(); ++i)
                digits = digits && std::isdigit(static_cast<unsigned char>(t.text[i]));
            if (digits) {
                const unsigned long idx = std::stoul(t.text.substr(1));
                if (idx >= 1 && idx <= dim_) {
                    advance();
                    const ExprKind k = t.text[0] == 'x' ? ExprKind::StateVar : ExprKind::DelayVar;
                    return add({k, 0.0, static_cast<std::size_t>(idx - 1), -1, -1});
                }
                throw UnknownIdentifier("unknown identifier '" + t.text + "' (state dimension is " +
                                            std::to_string(dim_) + ")",
                                        t.line, t.column);
            }
        }
        throw UnknownIdentifier("unknown identifier '" + t.text + "'", t.line, t.column);
    }

    void expect(Tok kind, const char* message) {
        if (tok_.kind != kind) fail(message);
        advance();
    }

    std::string_view src_;
    std::size_t dim_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
    Token tok_;
    std::vector<ExprNode> nodes_;
};

}  // namespace detail

/// Parses `source` with variables x1..x`dim` and y1..y`dim`.
inline ExprAst parse_expr(std::string_view source, std::size_t dim) {
    return detail::ExprParser(source, dim).parse();
}

}  // namespace sobdde
