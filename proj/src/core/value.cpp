#include "dil/core/value.hpp"

#include <cmath>
#include <limits>

#include "dil/core/codec.hpp"
#include "dil/error.hpp"

namespace dil {

std::string_view to_string(ValueType type) {
    switch (type) {
        case ValueType::null: return "null";
        case ValueType::boolean: return "boolean";
        case ValueType::integer: return "integer";
        case ValueType::floating: return "float";
        case ValueType::string: return "string";
        case ValueType::list: return "list";
        case ValueType::map: return "map";
    }
    return "null";
}

Value::Value(double d) : data_(d == 0.0 ? 0.0 : d) {
    // -0.0 is folded into 0.0 so equal values serialize identically.
    if (!std::isfinite(d)) fail(ErrorCode::bad_request, "non-finite float value");
}

Value::Value(Map m) {
    for (const auto& [k, _] : m) {
        if (k.empty()) fail(ErrorCode::bad_request, "map keys must be non-empty");
    }
    data_ = std::move(m);
}

namespace {
[[noreturn]] void type_mismatch(ValueType want, ValueType got) {
    fail(ErrorCode::bad_request, "expected " + std::string(to_string(want)) + ", got " +
                                     std::string(to_string(got)));
}
}  // namespace

bool Value::as_bool() const {
    if (!is_bool()) type_mismatch(ValueType::boolean, type());
    return std::get<bool>(data_);
}

std::int64_t Value::as_int() const {
    if (is_int()) return std::get<std::int64_t>(data_);
    if (is_float()) {
        double d = std::get<double>(data_);
        if (std::trunc(d) == d && std::fabs(d) < 9.2e18) return static_cast<std::int64_t>(d);
    }
    type_mismatch(ValueType::integer, type());
}

double Value::as_float() const {
    if (auto n = number()) return *n;
    type_mismatch(ValueType::floating, type());
}

const std::string& Value::as_string() const {
    if (!is_string()) type_mismatch(ValueType::string, type());
    return std::get<std::string>(data_);
}

const List& Value::as_list() const {
    if (!is_list()) type_mismatch(ValueType::list, type());
    return std::get<List>(data_);
}

const Map& Value::as_map() const {
    if (!is_map()) type_mismatch(ValueType::map, type());
    return std::get<Map>(data_);
}

std::optional<double> Value::number() const noexcept {
    if (is_int()) return static_cast<double>(std::get<std::int64_t>(data_));
    if (is_float()) return std::get<double>(data_);
    return std::nullopt;
}

const Value* Value::find(std::string_view key) const {
    if (!is_map()) return nullptr;
    const auto& m = std::get<Map>(data_);
    auto it = m.find(key);
    return it == m.end() ? nullptr : &it->second;
}

namespace {

int rank(const Value& v) {
    switch (v.type()) {
        case ValueType::null: return 0;
        case ValueType::boolean: return 1;
        case ValueType::integer:
        case ValueType::floating: return 2;
        case ValueType::string: return 3;
        case ValueType::list: return 4;
        case ValueType::map: return 5;
    }
    return 0;
}

// Exact int64/double comparison without losing precision on large integers.
int compare_int_double(std::int64_t i, double d) {
    constexpr double two63 = 9223372036854775808.0;
    if (d >= two63) return -1;
    if (d < -two63) return 1;
    double t = std::trunc(d);
    auto ti = static_cast<std::int64_t>(t);
    if (i < ti) return -1;
    if (i > ti) return 1;
    if (d > t) return -1;
    if (d < t) return 1;
    return 0;
}

int compare_numbers(const Value& a, const Value& b) {
    if (a.is_int() && b.is_int()) {
        auto x = a.as_int(), y = b.as_int();
        return x < y ? -1 : (x > y ? 1 : 0);
    }
    if (a.is_float() && b.is_float()) {
        double x = a.as_float(), y = b.as_float();
        return x < y ? -1 : (x > y ? 1 : 0);
    }
    if (a.is_int()) return compare_int_double(a.as_int(), b.as_float());
    return -compare_int_double(b.as_int(), a.as_float());
}

}  // namespace

int compare(const Value& a, const Value& b) {
    int ra = rank(a), rb = rank(b);
    if (ra != rb) return ra < rb ? -1 : 1;
    switch (a.type()) {
        case ValueType::null: return 0;
        case ValueType::boolean: return static_cast<int>(a.as_bool()) - static_cast<int>(b.as_bool());
        case ValueType::integer:
        case ValueType::floating: return compare_numbers(a, b);
        case ValueType::string: {
            int c = a.as_string().compare(b.as_string());
            return c < 0 ? -1 : (c > 0 ? 1 : 0);
        }
        case ValueType::list: {
            const auto& x = a.as_list();
            const auto& y = b.as_list();
            for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
                if (int c = compare(x[i], y[i])) return c;
            }
            return x.size() < y.size() ? -1 : (x.size() > y.size() ? 1 : 0);
        }
        case ValueType::map: {
            const auto& x = a.as_map();
            const auto& y = b.as_map();
            auto ix = x.begin();
            auto iy = y.begin();
            for (; ix != x.end() && iy != y.end(); ++ix, ++iy) {
                if (int c = ix->first.compare(iy->first)) return c < 0 ? -1 : 1;
                if (int c = compare(ix->second, iy->second)) return c;
            }
            if (ix == x.end() && iy == y.end()) return 0;
            return ix == x.end() ? -1 : 1;
        }
    }
    return 0;
}

bool numeric_equal(const Value& a, const Value& b) {
    if (a.is_number() && b.is_number()) return compare_numbers(a, b) == 0;
    if (a.type() != b.type()) return false;
    if (a.is_list()) {
        const auto& x = a.as_list();
        const auto& y = b.as_list();
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!numeric_equal(x[i], y[i])) return false;
        }
        return true;
    }
    if (a.is_map()) {
        const auto& x = a.as_map();
        const auto& y = b.as_map();
        if (x.size() != y.size()) return false;
        for (auto ix = x.begin(), iy = y.begin(); ix != x.end(); ++ix, ++iy) {
            if (ix->first != iy->first || !numeric_equal(ix->second, iy->second)) return false;
        }
        return true;
    }
    return a == b;
}

namespace {
Value normalize_numbers(const Value& v) {
    if (v.is_float()) {
        double d = v.as_float();
        if (std::trunc(d) == d && d >= -9223372036854775808.0 && d < 9223372036854775808.0) {
            return Value(static_cast<std::int64_t>(d));
        }
        return v;
    }
    if (v.is_list()) {
        List out;
        out.reserve(v.as_list().size());
        for (const auto& e : v.as_list()) out.push_back(normalize_numbers(e));
        return Value(std::move(out));
    }
    if (v.is_map()) {
        Map out;
        for (const auto& [k, e] : v.as_map()) out.emplace(k, normalize_numbers(e));
        return Value(std::move(out));
    }
    return v;
}
}  // namespace

std::string normalized_key(const Value& v) {
    return serialize_value(normalize_numbers(v));
}

}  // namespace dil
