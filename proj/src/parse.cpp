#include "flatd2/parse.hpp"

#include <cctype>
#include <string>

namespace flatd2 {

namespace {

class Parser {
public:
    Parser(std::string_view s, int line, int column) : s_(s), line_(line), col0_(column) {}

    Expr parse() {
        Expr e = expr();
        skip();
        if (pos_ < s_.size()) fail(std::string("unexpected '") + s_[pos_] + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, line_, col0_ + static_cast<int>(pos_));
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expr() {
        Expr acc = term();
        for (;;) {
            if (accept('+'))
                acc = acc + term();
            else if (accept('-'))
                acc = acc - term();
            else
                return acc;
        }
    }

    Expr term() {
        Expr acc = unary();
        for (;;) {
            if (accept('*')) {
                acc = acc * unary();
            } else if (accept('/')) {
                std::size_t at = pos_;
                Expr d = unary();
                if (d.is_zero()) {
                    pos_ = at;
                    fail("division by zero");
                }
                acc = acc / d;
            } else {
                return acc;
            }
        }
    }

    Expr unary() {
        if (accept('-')) return -unary();
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) {
            skip();
            std::size_t at = pos_;
            Expr ex = unary();
            if (!ex.is_const()) {
                pos_ = at;
                fail("exponent must be a rational constant");
            }
            try {
                return pow(base, ex.value());
            } catch (const DomainError& e) {
                pos_ = at;
                fail(e.what());
            } catch (const std::overflow_error&) {
                pos_ = at;
                fail("constant overflow");
            }
        }
        return base;
    }

    Rational number() {
        std::size_t start = pos_;
        std::int64_t num = 0, den = 1;
        auto digit_into = [&](std::int64_t& v) {
            if (v > (INT64_MAX - 9) / 10) fail("numeric literal too long");
            v = v * 10 + (s_[pos_] - '0');
        };
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            digit_into(num);
            ++pos_;
        }
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                digit_into(num);
                if (den > INT64_MAX / 10) fail("numeric literal too long");
                den *= 10;
                ++pos_;
            }
        }
        if (pos_ == start + 1 && s_[start] == '.') {
            pos_ = start;
            fail("malformed number");
        }
        Rational r(num, den);
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_++;
            bool neg = false;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) neg = s_[pos_++] == '-';
            if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                pos_ = save;
                fail("malformed exponent");
            }
            int k = 0;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                k = k * 10 + (s_[pos_++] - '0');
                if (k > 18) fail("exponent too large");
            }
            try {
                for (int i = 0; i < k; ++i) r = neg ? r / Rational(10) : r * Rational(10);
            } catch (const std::overflow_error&) {
                fail("constant overflow");
            }
        }
        return r;
    }

    Expr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return Expr(number());
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                ++pos_;
            std::string name(s_.substr(start, pos_ - start));
            skip();
            if (pos_ < s_.size() && s_[pos_] == '(') {
                std::size_t at = start;
                ++pos_;
                Expr arg = expr();
                if (!accept(')')) fail("expected ')'");
                if (name == "sin") return sin(arg);
                if (name == "cos") return cos(arg);
                if (name == "tan") return tan(arg);
                if (name == "asin" || name == "arcsin") return asin(arg);
                if (name == "atan" || name == "arctan") return atan(arg);
                if (name == "exp") return exp(arg);
                if (name == "ln" || name == "log") return ln(arg);
                if (name == "sqrt") return sqrt(arg);
                pos_ = at;
                fail("unknown function '" + name + "'");
            }
            return Expr::var(name);
        }
        fail(std::string("unexpected '") + c + "'");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int line_;
    int col0_;
};

}  // namespace

Expr parse_expr(std::string_view text, int line, int column) {
    Parser p(text, line, column);
    try {
        return p.parse();
    } catch (const ParseError&) {
        throw;
    } catch (const std::overflow_error&) {
        throw ParseError("constant overflow", line, column);
    } catch (const DomainError& e) {
        throw ParseError(e.what(), line, column);
    }
}

}  // namespace flatd2
