#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "jetmech/errors.hpp"
#include "jetmech/expr.hpp"
#include "jetmech/format.hpp"
#include "jetmech/system.hpp"

namespace jetmech {

/// Syntax or declaration error at a 1-based line/column of the source.
///
/// A column one past the last character of a line marks "end of line/input".
class ParseError : public Error {
public:
    ParseError(SourcePos pos, std::string message, std::string token)
        : Error("line " + std::to_string(pos.line) + ", col " + std::to_string(pos.column) + ": " + message +
                (token.empty() ? std::string{} : " (near '" + token + "')")),
          pos_(pos),
          message_(std::move(message)),
          token_(std::move(token)) {}

    int line() const { return pos_.line; }
    int column() const { return pos_.column; }
    const std::string& message() const { return message_; }
    const std::string& token() const { return token_; }

private:
    SourcePos pos_;
    std::string message_;
    std::string token_;
};

class UndeclaredSymbol : public ParseError {
public:
    UndeclaredSymbol(SourcePos pos, const std::string& symbol)
        : ParseError(pos, "undeclared symbol '" + symbol + "'", symbol), symbol_(symbol) {}
    const std::string& symbol() const { return symbol_; }

private:
    std::string symbol_;
};

class DuplicateDeclaration : public ParseError {
public:
    DuplicateDeclaration(SourcePos pos, const std::string& what) : ParseError(pos, "duplicate declaration of " + what, "") {}
};

namespace dsl {

struct Token {
    enum class Kind { ident, number, string, punct, newline, end };
    Kind kind = Kind::end;
    std::string text;  // identifiers keep their primes out of `text`
    int primes = 0;
    SourcePos pos;
    std::size_t offset = 0;  // byte span in the source
    std::size_t length = 0;
};

/// Splits source text into tokens. `#` starts a comment to end of line.
inline std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t count = 1) {
        for (std::size_t k = 0; k < count && i < src.size(); ++k, ++i) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    auto emit = [&](Token t, std::size_t start) {
        t.offset = start;
        t.length = i - start;
        out.push_back(std::move(t));
    };
    while (i < src.size()) {
        const char c = src[i];
        const SourcePos pos{line, col};
        const std::size_t start = i;
        if (c == '\n') {
            advance();
            emit({Token::Kind::newline, "\\n", 0, pos}, start);
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            advance();
        } else if (c == '#') {
            while (i < src.size() && src[i] != '\n') advance();
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            Token t{Token::Kind::ident, std::string(src.substr(i, j - i)), 0, pos};
            advance(j - i);
            while (i < src.size() && src[i] == '\'') {
                ++t.primes;
                advance();
            }
            emit(std::move(t), start);
        } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                   (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            if (j < src.size() && src[j] == '.' && !(j + 1 < src.size() && src[j + 1] == '.')) {
                ++j;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            }
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
                    j = k;
                }
            }
            std::string text(src.substr(i, j - i));
            advance(j - i);
            emit({Token::Kind::number, std::move(text), 0, pos}, start);
        } else if (c == '"') {
            std::size_t j = i + 1;
            while (j < src.size() && src[j] != '"' && src[j] != '\n') ++j;
            if (j >= src.size() || src[j] != '"') throw ParseError(pos, "unterminated string", "\"");
            std::string text(src.substr(i + 1, j - i - 1));
            advance(j - i + 1);
            emit({Token::Kind::string, std::move(text), 0, pos}, start);
        } else if (c == '.' && i + 1 < src.size() && src[i + 1] == '.') {
            advance(2);
            emit({Token::Kind::punct, "..", 0, pos}, start);
        } else if (std::string_view("+-*/^(){},;:=").find(c) != std::string_view::npos) {
            advance();
            emit({Token::Kind::punct, std::string(1, c), 0, pos}, start);
        } else {
            throw ParseError(pos, "unexpected character", std::string(1, c));
        }
    }
    emit({Token::Kind::end, "", 0, {line, col}}, i);
    return out;
}

/// Recursive-descent parser over a token stream.
class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

    const Token& peek() {
        skip_insignificant_newlines();
        return toks_[pos_];
    }
    Token next() {
        skip_insignificant_newlines();
        Token t = toks_[pos_];
        last_ = pos_;
        if (t.kind != Token::Kind::end) ++pos_;
        return t;
    }
    /// Most recently consumed token.
    const Token& last() const { return toks_[last_]; }
    bool at_punct(std::string_view p) {
        const Token& t = peek();
        return t.kind == Token::Kind::punct && t.text == p;
    }
    bool at_keyword(std::string_view k) {
        const Token& t = peek();
        return t.kind == Token::Kind::ident && t.text == k && t.primes == 0;
    }
    Token expect_punct(std::string_view p, std::string_view what) {
        const Token& t = peek();
        if (t.kind != Token::Kind::punct || t.text != p) fail(t, "expected " + std::string(what));
        return next();
    }
    Token expect_ident(std::string_view what) {
        const Token& t = peek();
        if (t.kind != Token::Kind::ident) fail(t, "expected " + std::string(what));
        return next();
    }
    [[noreturn]] static void fail(const Token& t, const std::string& msg) { throw ParseError(t.pos, msg, t.text); }

    /// expr := term (('+' | '-') term)*
    RawExpr expression() {
        RawExpr lhs = term();
        while (at_punct("+") || at_punct("-")) {
            Token op = next();
            RawExpr rhs = term();
            lhs = RawExpr::binary(op.text == "+" ? RawExpr::Op::add : RawExpr::Op::sub, std::move(lhs), std::move(rhs));
            lhs.pos = op.pos;
        }
        return lhs;
    }

    /// Numeric literal with optional sign.
    std::pair<Rational, SourcePos> signed_number(std::string_view what) {
        bool negative = false;
        SourcePos start = peek().pos;
        if (at_punct("-") || at_punct("+")) negative = next().text == "-";
        const Token& t = peek();
        if (t.kind != Token::Kind::number) fail(t, "expected " + std::string(what));
        Token num = next();
        Rational r = literal(num);
        return {negative ? -r : r, start};
    }

    // Newlines inside parentheses are whitespace; elsewhere they end statements.
    void skip_insignificant_newlines() {
        while (depth_ > 0 && toks_[pos_].kind == Token::Kind::newline) ++pos_;
    }
    void skip_newlines() {
        while (toks_[pos_].kind == Token::Kind::newline) ++pos_;
    }
    bool at_statement_end() {
        const Token& t = toks_[pos_];
        return t.kind == Token::Kind::newline || t.kind == Token::Kind::end ||
               (t.kind == Token::Kind::punct && (t.text == ";" || t.text == "}"));
    }

private:
    static Rational literal(const Token& t) {
        try {
            return Rational::parse_decimal(t.text);
        } catch (const Error& e) {
            throw ParseError(t.pos, e.what(), t.text);
        }
    }

    /// term := unary (('*' | '/') unary)*, the divisor being a numeric literal.
    RawExpr term() {
        RawExpr lhs = unary();
        while (at_punct("*") || at_punct("/")) {
            Token op = next();
            if (op.text == "/") {
                const Token& d = peek();
                if (d.kind != Token::Kind::number) fail(d, "division only by numeric literals");
                Token num = next();
                Rational r = literal(num);
                if (r.is_zero()) fail(num, "division by zero");
                RawExpr divisor = RawExpr::number(r);
                divisor.pos = num.pos;
                lhs = RawExpr::binary(RawExpr::Op::div, std::move(lhs), std::move(divisor));
            } else {
                lhs = RawExpr::binary(RawExpr::Op::mul, std::move(lhs), unary());
            }
            lhs.pos = op.pos;
        }
        return lhs;
    }

    /// unary := '-' unary | '+' unary | power
    RawExpr unary() {
        if (at_punct("-")) {
            Token op = next();
            RawExpr e = RawExpr::negate(unary());
            e.pos = op.pos;
            return e;
        }
        if (at_punct("+")) {
            next();
            return unary();
        }
        return power();
    }

    /// power := primary ('^' integer)?
    RawExpr power() {
        RawExpr base = primary();
        if (at_punct("^")) {
            Token op = next();
            const Token& t = peek();
            if (t.kind != Token::Kind::number || t.text.find_first_not_of("0123456789") != std::string::npos)
                fail(t, "exponent must be a nonnegative integer literal");
            Token e = next();
            if (e.text.size() > 4) fail(e, "exponent too large");
            base = RawExpr::power(std::move(base), std::stoi(e.text));
            base.pos = op.pos;
        }
        return base;
    }

    RawExpr primary() {
        const Token& t = peek();
        if (t.kind == Token::Kind::number) {
            Token num = next();
            RawExpr e = RawExpr::number(literal(num));
            e.pos = num.pos;
            return e;
        }
        if (t.kind == Token::Kind::punct && t.text == "(") {
            next();
            ++depth_;
            RawExpr inner = expression();
            expect_punct(")", "')'");
            --depth_;
            return inner;
        }
        if (t.kind == Token::Kind::ident) {
            Token id = next();
            if ((id.text == "sig" || id.text == "dsig") && id.primes == 0 && at_punct("(")) {
                next();
                ++depth_;
                Token name = expect_ident("signal name");
                if (name.primes != 0) fail(name, "signal names take no primes");
                int order = id.text == "sig" ? 0 : 1;
                if (id.text == "dsig" && at_punct(",")) {
                    next();
                    const Token& o = peek();
                    if (o.kind != Token::Kind::number || o.text.find_first_not_of("0123456789") != std::string::npos)
                        fail(o, "derivative order must be a positive integer");
                    Token ord = next();
                    if (ord.text.size() > 4) fail(ord, "derivative order too large");
                    order = std::stoi(ord.text);
                    if (order < 1) fail(ord, "derivative order must be a positive integer");
                }
                expect_punct(")", "')'");
                --depth_;
                RawExpr e;
                e.op = RawExpr::Op::signal_ref;
                e.name = name.text;
                e.primes = order;
                e.pos = name.pos;
                return e;
            }
            if (id.primes > 2) fail(id, "at most two primes (x'')");
            RawExpr e;
            e.op = RawExpr::Op::name;
            e.name = id.text;
            e.primes = id.primes;
            e.pos = id.pos;
            return e;
        }
        fail(t, "expected operand");
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::size_t last_ = 0;
    int depth_ = 0;
};

}  // namespace dsl

/// Parses one expression; identifiers stay unresolved in the tree.
inline RawExpr parse_expr(std::string_view text) {
    dsl::Parser p(dsl::tokenize(text));
    p.skip_newlines();
    RawExpr e = p.expression();
    p.skip_newlines();
    const dsl::Token& t = p.peek();
    if (t.kind != dsl::Token::Kind::end) dsl::Parser::fail(t, "unexpected token after expression");
    return e;
}

/// Resolves chart names to coordinates, `t` to time, anything else to a parameter.
inline Resolver permissive_resolver(const Chart& chart) {
    return [chart](const RawExpr& leaf) -> Symbol {
        if (leaf.op == RawExpr::Op::signal_ref) return Symbol::signal(leaf.name, leaf.primes);
        for (int i = 0; i < chart.dimension(); ++i) {
            if (chart.name(i) != leaf.name) continue;
            if (leaf.primes == 0) return Symbol::coordinate(i);
            if (leaf.primes == 1) return Symbol::velocity(i);
            return Symbol::acceleration(i);
        }
        if (leaf.primes != 0) throw ParseError(leaf.pos, "only coordinates take primes", leaf.name);
        if (leaf.name == "t") return Symbol::time();
        return Symbol::parameter(leaf.name);
    };
}

/// parse_expr + normalize with the permissive resolver.
inline Expr parse_expression(std::string_view text, const Chart& chart = Chart::standard(1)) {
    return normalize(parse_expr(text), permissive_resolver(chart));
}

namespace dsl {

inline const std::set<std::string>& reserved_words() {
    static const std::set<std::string> words{"t",     "sig",       "dsig",    "system",     "parameter",  "coordinate",
                                             "signal", "momentum", "force",   "lagrangian", "antiexact",  "antiexact_momentum",
                                             "oracle", "init",     "time",    "step",       "integrator", "sinusoid",
                                             "polynomial"};
    return words;
}

struct PendingExpr {
    RawExpr tree;
    SourcePos pos;
    std::string source;
};

/// Source text between two tokens, whitespace runs collapsed to one space.
inline std::string source_span(std::string_view src, const Token& first, const Token& last) {
    std::string out;
    const std::size_t end = last.offset + last.length;
    for (std::size_t i = first.offset; i < end && i < src.size(); ++i) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!out.empty() && out.back() != ' ') out += ' ';
        } else {
            out += c;
        }
    }
    return out;
}

}  // namespace dsl

/// Parses a `system "name" { ... }` block into a validated SystemSpec.
///
/// Statements end at `;` or a newline. Expressions may reference symbols
/// declared later in the block. A declared split is checked against phi
/// (SplitReconstructionError on mismatch).
inline SystemSpec parse_system(std::string_view text) {
    using dsl::Token;
    dsl::Parser p(dsl::tokenize(text));
    SystemSpec sys;

    struct CoordClause {
        std::optional<dsl::PendingExpr> momentum, force, anti_f, anti_pi, oracle;
    };
    std::map<std::string, CoordClause> clauses;
    std::vector<std::pair<std::string, Token>> coordinate_tokens;
    std::map<std::string, SourcePos> declared;
    std::optional<dsl::PendingExpr> lagrangian;
    std::map<std::string, std::pair<Rational, bool>> init_values;  // "x" / "x'" -> value
    std::vector<std::pair<Token, int>> init_tokens;
    bool saw_init = false;

    auto declare = [&](const Token& t, const std::string& what) {
        if (t.primes != 0) dsl::Parser::fail(t, what + " names take no primes");
        if (dsl::reserved_words().count(t.text)) dsl::Parser::fail(t, "'" + t.text + "' is reserved");
        if (declared.count(t.text)) throw DuplicateDeclaration(t.pos, "'" + t.text + "'");
        declared.emplace(t.text, t.pos);
    };
    auto end_statement = [&] {
        if (!p.at_statement_end()) dsl::Parser::fail(p.peek(), "expected end of statement");
        const Token& t = p.peek();
        if (t.kind == Token::Kind::punct && t.text == ";") p.next();
    };
    auto coordinate_clause = [&](std::optional<dsl::PendingExpr> CoordClause::*slot, const char* what) {
        Token name = p.expect_ident("coordinate name");
        if (name.primes != 0) dsl::Parser::fail(name, "expected a coordinate name without primes");
        p.expect_punct(":", "':'");
        Token first = p.peek();
        RawExpr e = p.expression();
        auto& target = clauses[name.text].*slot;
        if (target) throw DuplicateDeclaration(name.pos, std::string(what) + " clause for '" + name.text + "'");
        target = dsl::PendingExpr{std::move(e), first.pos, dsl::source_span(text, first, p.last())};
        coordinate_tokens.emplace_back(name.text, name);
    };

    p.skip_newlines();
    if (p.peek().kind == Token::Kind::end) dsl::Parser::fail(p.peek(), "empty input; expected 'system'");
    if (!p.at_keyword("system")) dsl::Parser::fail(p.peek(), "expected 'system'");
    p.next();
    const Token& nm = p.peek();
    if (nm.kind != Token::Kind::string) dsl::Parser::fail(nm, "expected quoted system name");
    sys.name = p.next().text;
    p.expect_punct("{", "'{'");

    for (;;) {
        p.skip_newlines();
        const Token& t = p.peek();
        if (t.kind == Token::Kind::punct && t.text == "}") {
            p.next();
            break;
        }
        if (t.kind == Token::Kind::punct && t.text == ";") {
            p.next();
            continue;
        }
        if (t.kind == Token::Kind::end) dsl::Parser::fail(t, "expected '}'");
        if (t.kind != Token::Kind::ident) dsl::Parser::fail(t, "expected a statement");
        Token kw = p.next();
        if (kw.text == "parameter") {
            for (;;) {
                Token name = p.expect_ident("parameter name");
                declare(name, "parameter");
                std::optional<double> value;
                if (p.at_punct("=")) {
                    p.next();
                    value = p.signed_number("parameter value").first.to_double();
                }
                sys.parameter_order.push_back(name.text);
                sys.parameters.emplace(name.text, value);
                if (!p.at_punct(",")) break;
                p.next();
            }
        } else if (kw.text == "coordinate") {
            for (;;) {
                Token name = p.expect_ident("coordinate name");
                declare(name, "coordinate");
                sys.chart.names.push_back(name.text);
                if (!p.at_punct(",")) break;
                p.next();
            }
        } else if (kw.text == "signal") {
            Token name = p.expect_ident("signal name");
            declare(name, "signal");
            p.expect_punct("=", "'='");
            Token shape = p.expect_ident("'sinusoid' or 'polynomial'");
            p.expect_punct("(", "'('");
            std::vector<Rational> args{p.signed_number("numeric argument").first};
            while (p.at_punct(",")) {
                p.next();
                args.push_back(p.signed_number("numeric argument").first);
            }
            p.expect_punct(")", "')'");
            if (shape.text == "sinusoid") {
                if (args.size() != 3) dsl::Parser::fail(shape, "sinusoid takes (amplitude, frequency, phase)");
                sys.signals.emplace(name.text, ForcingSignal::sinusoid(name.text, args[0], args[1], args[2]));
            } else if (shape.text == "polynomial") {
                sys.signals.emplace(name.text, ForcingSignal::polynomial(name.text, args));
            } else {
                dsl::Parser::fail(shape, "expected 'sinusoid' or 'polynomial'");
            }
        } else if (kw.text == "momentum") {
            coordinate_clause(&CoordClause::momentum, "momentum");
        } else if (kw.text == "force") {
            coordinate_clause(&CoordClause::force, "force");
        } else if (kw.text == "antiexact") {
            coordinate_clause(&CoordClause::anti_f, "antiexact");
        } else if (kw.text == "antiexact_momentum") {
            coordinate_clause(&CoordClause::anti_pi, "antiexact_momentum");
        } else if (kw.text == "oracle") {
            coordinate_clause(&CoordClause::oracle, "oracle");
        } else if (kw.text == "lagrangian") {
            if (lagrangian) throw DuplicateDeclaration(kw.pos, "lagrangian");
            p.expect_punct(":", "':'");
            Token first = p.peek();
            RawExpr e = p.expression();
            lagrangian = dsl::PendingExpr{std::move(e), first.pos, dsl::source_span(text, first, p.last())};
        } else if (kw.text == "init") {
            if (saw_init) throw DuplicateDeclaration(kw.pos, "init");
            saw_init = true;
            for (;;) {
                Token name = p.expect_ident("coordinate name");
                if (name.primes > 1) dsl::Parser::fail(name, "init takes positions (x) and velocities (x')");
                p.expect_punct("=", "'='");
                Rational value = p.signed_number("initial value").first;
                std::string key = name.text + (name.primes ? "'" : "");
                if (init_values.count(key)) throw DuplicateDeclaration(name.pos, "initial value for " + key);
                init_values.emplace(key, std::make_pair(value, name.primes == 1));
                init_tokens.emplace_back(name, name.primes);
                if (!p.at_punct(",")) break;
                p.next();
            }
        } else if (kw.text == "time") {
            if (sys.time) throw DuplicateDeclaration(kw.pos, "time");
            TimeSettings ts;
            ts.start = p.signed_number("start time").first.to_double();
            p.expect_punct("..", "'..'");
            ts.end = p.signed_number("end time").first.to_double();
            if (!p.at_keyword("step")) dsl::Parser::fail(p.peek(), "expected 'step'");
            p.next();
            auto [step, step_pos] = p.signed_number("step size");
            ts.step = step.to_double();
            if (!(ts.end > ts.start)) throw ParseError(kw.pos, "time interval must be increasing", "time");
            if (!(ts.step > 0)) throw ParseError(step_pos, "step must be positive", "step");
            sys.time = ts;
        } else if (kw.text == "integrator") {
            Token m = p.expect_ident("'rk4' or 'rkf45'");
            if (m.text == "rk4")
                sys.method = Method::rk4;
            else if (m.text == "rkf45")
                sys.method = Method::rkf45;
            else
                dsl::Parser::fail(m, "expected 'rk4' or 'rkf45'");
        } else {
            dsl::Parser::fail(kw, "unknown statement '" + kw.text + "'");
        }
        end_statement();
    }
    p.skip_newlines();
    if (p.peek().kind != Token::Kind::end) dsl::Parser::fail(p.peek(), "unexpected text after system block");

    // Resolution against the completed declarations.
    const int n = sys.dimension();
    if (n == 0) throw ParseError({1, 1}, "system declares no coordinates", "");
    auto index_of = [&](const std::string& name) {
        for (int i = 0; i < n; ++i)
            if (sys.chart.names[static_cast<std::size_t>(i)] == name) return i;
        return -1;
    };
    for (const auto& [name, tok] : coordinate_tokens)
        if (index_of(name) < 0) throw UndeclaredSymbol(tok.pos, name);

    auto resolver = [&](bool allow_acceleration) -> Resolver {
        return [&, allow_acceleration](const RawExpr& leaf) -> Symbol {
            if (leaf.op == RawExpr::Op::signal_ref) {
                if (!sys.signals.count(leaf.name)) throw UndeclaredSymbol(leaf.pos, leaf.name);
                return Symbol::signal(leaf.name, leaf.primes);
            }
            if (int i = index_of(leaf.name); i >= 0) {
                if (leaf.primes == 0) return Symbol::coordinate(i);
                if (leaf.primes == 1) return Symbol::velocity(i);
                if (!allow_acceleration) throw ParseError(leaf.pos, "accelerations are not allowed here", leaf.name + "''");
                return Symbol::acceleration(i);
            }
            if (leaf.name == "t" && leaf.primes == 0) return Symbol::time();
            if (sys.parameters.count(leaf.name)) {
                if (leaf.primes != 0) throw ParseError(leaf.pos, "parameters take no primes", leaf.name);
                return Symbol::parameter(leaf.name);
            }
            if (sys.signals.count(leaf.name))
                throw ParseError(leaf.pos, "signals are referenced as sig(" + leaf.name + ")", leaf.name);
            throw UndeclaredSymbol(leaf.pos, leaf.name);
        };
    };
    auto resolve = [&](const dsl::PendingExpr& pe) {
        try {
            return normalize(pe.tree, resolver(false));
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(pe.pos, e.what(), "");
        }
    };

    const bool has_mass = sys.parameters.count("m") != 0;
    std::vector<Expr> F, Pi;
    bool any_anti = false;
    std::vector<Expr> anti_F, anti_Pi;
    for (int i = 0; i < n; ++i) {
        const std::string& name = sys.chart.names[static_cast<std::size_t>(i)];
        const CoordClause& c = clauses[name];
        F.push_back(c.force ? resolve(*c.force) : Expr{});
        sys.force_source.push_back(c.force ? c.force->source : std::string{});
        if (c.momentum)
            Pi.push_back(resolve(*c.momentum));
        else if (has_mass)
            Pi.push_back(Expr(Symbol::parameter("m")) * Expr(Symbol::velocity(i)));
        else
            Pi.emplace_back();
        anti_F.push_back(c.anti_f ? resolve(*c.anti_f) : Expr{});
        anti_Pi.push_back(c.anti_pi ? resolve(*c.anti_pi) : Expr{});
        any_anti = any_anti || c.anti_f || c.anti_pi;
        sys.oracle_forces.push_back(c.oracle ? std::optional<Expr>(resolve(*c.oracle)) : std::nullopt);
    }
    if (std::none_of(sys.oracle_forces.begin(), sys.oracle_forces.end(), [](const auto& o) { return o.has_value(); }))
        sys.oracle_forces.clear();
    sys.phi = VerticalOneForm(std::move(F), std::move(Pi));
    if (lagrangian) sys.lagrangian = resolve(*lagrangian);
    if (any_anti) sys.anti_exact = VerticalOneForm(std::move(anti_F), std::move(anti_Pi));

    if (saw_init) {
        sys.x0 = std::vector<double>(static_cast<std::size_t>(n), 0.0);
        sys.v0 = std::vector<double>(static_cast<std::size_t>(n), 0.0);
        for (const auto& [tok, primes] : init_tokens) {
            int i = index_of(tok.text);
            if (i < 0) throw UndeclaredSymbol(tok.pos, tok.text);
            double value = init_values.at(tok.text + (primes ? "'" : "")).first.to_double();
            (primes ? *sys.v0 : *sys.x0)[static_cast<std::size_t>(i)] = value;
        }
    }

    if (sys.has_user_split()) {
        try {
            (void)sys.user_split();
        } catch (const SplitReconstructionError& e) {
            throw SplitReconstructionError(e.residual(), sys.chart);
        }
    }
    return sys;
}

}  // namespace jetmech
