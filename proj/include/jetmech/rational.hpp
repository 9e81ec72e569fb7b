#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>

#include "jetmech/errors.hpp"

namespace jetmech {

/// Exact rational number on checked 64-bit integers.
///
/// Always stored reduced with a positive denominator, so equality is
/// structural. Every operation is carried out on 128-bit intermediates and
/// throws OverflowError when the reduced result does not fit back into
/// 64 bits; nothing ever wraps around.
class Rational {
public:
    constexpr Rational() = default;
    constexpr Rational(std::int64_t n) : num_(n) {}  // NOLINT: implicit by intent
    Rational(std::int64_t n, std::int64_t d) { assign(n, d); }

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }

    bool is_zero() const { return num_ == 0; }
    bool is_one() const { return num_ == 1 && den_ == 1; }
    bool is_integer() const { return den_ == 1; }
    int sign() const { return (num_ > 0) - (num_ < 0); }

    double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    Rational operator-() const {
        if (num_ == INT64_MIN) throw OverflowError("rational negation overflow");
        Rational r;
        r.num_ = -num_;
        r.den_ = den_;
        return r;
    }

    friend Rational operator+(const Rational& a, const Rational& b) {
        using i128 = __int128;
        i128 n = static_cast<i128>(a.num_) * b.den_ + static_cast<i128>(b.num_) * a.den_;
        i128 d = static_cast<i128>(a.den_) * b.den_;
        return from_wide(n, d);
    }
    friend Rational operator-(const Rational& a, const Rational& b) {
        using i128 = __int128;
        i128 n = static_cast<i128>(a.num_) * b.den_ - static_cast<i128>(b.num_) * a.den_;
        i128 d = static_cast<i128>(a.den_) * b.den_;
        return from_wide(n, d);
    }
    friend Rational operator*(const Rational& a, const Rational& b) {
        using i128 = __int128;
        return from_wide(static_cast<i128>(a.num_) * b.num_, static_cast<i128>(a.den_) * b.den_);
    }
    friend Rational operator/(const Rational& a, const Rational& b) {
        using i128 = __int128;
        if (b.num_ == 0) throw InvalidArgument("rational division by zero");
        return from_wide(static_cast<i128>(a.num_) * b.den_, static_cast<i128>(a.den_) * b.num_);
    }
    Rational& operator+=(const Rational& o) { return *this = *this + o; }
    Rational& operator-=(const Rational& o) { return *this = *this - o; }
    Rational& operator*=(const Rational& o) { return *this = *this * o; }
    Rational& operator/=(const Rational& o) { return *this = *this / o; }

    friend bool operator==(const Rational&, const Rational&) = default;
    friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
        using i128 = __int128;
        i128 l = static_cast<i128>(a.num_) * b.den_;
        i128 r = static_cast<i128>(b.num_) * a.den_;
        return l < r ? std::strong_ordering::less
                     : (l > r ? std::strong_ordering::greater : std::strong_ordering::equal);
    }

    Rational pow(unsigned e) const {
        Rational result(1);
        Rational base = *this;
        while (e != 0) {
            if (e & 1U) result *= base;
            e >>= 1U;
            if (e != 0) base *= base;
        }
        return result;
    }

    /// "3", "-1/2".
    std::string to_string() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

    /// Parses an unsigned decimal literal exactly: "12", "1.25", "1e-3", "2.5E2".
    static Rational parse_decimal(std::string_view text);

    friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.to_string(); }

private:
    static Rational from_wide(__int128 n, __int128 d) {
        if (d == 0) throw InvalidArgument("rational with zero denominator");
        if (d < 0) {
            n = -n;
            d = -d;
        }
        __int128 g = gcd_wide(n < 0 ? -n : n, d);
        if (g > 1) {
            n /= g;
            d /= g;
        }
        if (n > INT64_MAX || n < -static_cast<__int128>(INT64_MAX) || d > INT64_MAX)
            throw OverflowError("rational coefficient overflow");
        Rational r;
        r.num_ = static_cast<std::int64_t>(n);
        r.den_ = static_cast<std::int64_t>(d);
        return r;
    }

    static __int128 gcd_wide(__int128 a, __int128 b) {
        while (b != 0) {
            __int128 t = a % b;
            a = b;
            b = t;
        }
        return a == 0 ? 1 : a;
    }

    void assign(std::int64_t n, std::int64_t d) { *this = from_wide(n, d); }

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

inline Rational Rational::parse_decimal(std::string_view text) {
    Rational mantissa(0);
    std::int64_t frac_digits = 0;
    std::size_t i = 0;
    bool any_digit = false;
    bool in_fraction = false;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c >= '0' && c <= '9') {
            mantissa = mantissa * Rational(10) + Rational(c - '0');
            if (in_fraction) ++frac_digits;
            any_digit = true;
        } else if (c == '.' && !in_fraction) {
            in_fraction = true;
        } else {
            break;
        }
    }
    if (!any_digit) throw InvalidArgument("malformed number '" + std::string(text) + "'");
    std::int64_t exponent = 0;
    if (i < text.size()) {
        if (text[i] != 'e' && text[i] != 'E')
            throw InvalidArgument("malformed number '" + std::string(text) + "'");
        ++i;
        bool negative = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-')) negative = text[i++] == '-';
        if (i == text.size()) throw InvalidArgument("malformed exponent in '" + std::string(text) + "'");
        for (; i < text.size(); ++i) {
            char c = text[i];
            if (c < '0' || c > '9') throw InvalidArgument("malformed exponent in '" + std::string(text) + "'");
            exponent = exponent * 10 + (c - '0');
            if (exponent > 40) throw OverflowError("decimal exponent out of range in '" + std::string(text) + "'");
        }
        if (negative) exponent = -exponent;
    }
    exponent -= frac_digits;
    if (exponent < -40 || exponent > 40) throw OverflowError("decimal literal out of range: " + std::string(text));
    Rational scale = Rational(10).pow(static_cast<unsigned>(exponent < 0 ? -exponent : exponent));
    return exponent < 0 ? mantissa / scale : mantissa * scale;
}

}  // namespace jetmech
