#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

namespace dil {

class Value;
using List = std::vector<Value>;
using Map = std::map<std::string, Value, std::less<>>;

enum class ValueType { null, boolean, integer, floating, string, list, map };

std::string_view to_string(ValueType type);

// Dynamically typed cell value. Floats are always finite; map keys are
// non-empty. Immutable in practice: nothing in the engine mutates a Value
// after it has been placed in a Table.
class Value {
public:
    Value() = default;
    Value(std::nullptr_t) {}
    Value(bool b) : data_(b) {}
    template <typename T>
        requires(std::is_integral_v<T> && !std::is_same_v<T, bool>)
    Value(T i) : data_(static_cast<std::int64_t>(i)) {}
    Value(double d);
    Value(std::string s) : data_(std::move(s)) {}
    Value(std::string_view s) : data_(std::string(s)) {}
    Value(const char* s) : data_(std::string(s)) {}
    Value(List l) : data_(std::move(l)) {}
    Value(Map m);

    ValueType type() const noexcept { return static_cast<ValueType>(data_.index()); }

    bool is_null() const noexcept { return type() == ValueType::null; }
    bool is_bool() const noexcept { return type() == ValueType::boolean; }
    bool is_int() const noexcept { return type() == ValueType::integer; }
    bool is_float() const noexcept { return type() == ValueType::floating; }
    bool is_number() const noexcept { return is_int() || is_float(); }
    bool is_string() const noexcept { return type() == ValueType::string; }
    bool is_list() const noexcept { return type() == ValueType::list; }
    bool is_map() const noexcept { return type() == ValueType::map; }

    // Checked accessors; throw dil::Error(bad_request) on a type mismatch.
    bool as_bool() const;
    std::int64_t as_int() const;
    double as_float() const;
    const std::string& as_string() const;
    const List& as_list() const;
    const Map& as_map() const;

    // Integer or float widened to double; nullopt for anything else.
    std::optional<double> number() const noexcept;

    // Map lookup; nullptr when this is not a map or the key is absent.
    const Value* find(std::string_view key) const;

    // Structural equality: 1 and 1.0 are different values.
    bool operator==(const Value& other) const = default;

private:
    std::variant<std::monostate, bool, std::int64_t, double, std::string, List, Map> data_;
};

// Total order used by sort and min/max: null < boolean < number < string <
// list < map. Integers and floats compare numerically.
int compare(const Value& a, const Value& b);

// Equality after numeric normalization (1 == 1.0), recursively.
bool numeric_equal(const Value& a, const Value& b);

// Canonical key for hashing under numeric normalization: integral floats are
// rendered as integers. Two values map to the same key iff numeric_equal.
std::string normalized_key(const Value& v);

}  // namespace dil
