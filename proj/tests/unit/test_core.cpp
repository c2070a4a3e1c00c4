#include <cmath>
#include <limits>

#include "doctest.h"
#include "dil/core/codec.hpp"
#include "dil/core/digest.hpp"
#include "dil/core/expression.hpp"
#include "dil/core/schema.hpp"
#include "dil/error.hpp"
#include "support/random_data.hpp"
#include "support/reference_eval.hpp"

using namespace dil;
using dil::testing::Gen;

TEST_CASE("canonical serialization of trivial batches") {
    CHECK(canonical_serialize(DataBatch{}) == R"({"tables":[]})");
    DataBatch b = DataBatch::single(Table{{Row{{"a", 1}}}, std::nullopt});
    CHECK(canonical_serialize(b) == R"({"tables":[{"rows":[{"a":1}]}]})");
}

TEST_CASE("floats keep their type and render shortest") {
    Row r{{"f", 1.0}, {"g", 0.1}, {"h", 1e21}, {"i", -2.5}};
    auto text = canonical_serialize(DataBatch::single(Table{{r}, std::nullopt}));
    CHECK(text == R"({"tables":[{"rows":[{"f":1.0,"g":0.1,"h":1e+21,"i":-2.5}]}]})");
    CHECK(deserialize_batch(text).tables[0].rows[0].at("f").is_float());
}

TEST_CASE("non-finite floats are rejected") {
    CHECK_THROWS_AS(Value(std::nan("")), Error);
    CHECK_THROWS_AS(Value(std::numeric_limits<double>::infinity()), Error);
    CHECK_THROWS_AS(deserialize_batch(R"({"tables":[{"rows":[{"a":1e400}]}]})"), Error);
}

TEST_CASE("malformed batches are rejected") {
    CHECK_THROWS_AS(deserialize_batch("[]"), Error);
    CHECK_THROWS_AS(deserialize_batch(R"({"tables":[{"rows":[{"":1}]}]})"), Error);
    CHECK_THROWS_AS(deserialize_batch(R"({"tables":[{"rows":[1]}]})"), Error);
    CHECK_THROWS_AS(deserialize_batch(R"({"tables":[{"rows":[{"a":18446744073709551615}]}]})"), Error);
    // schema present: attributes must be declared and conform
    CHECK_THROWS_AS(deserialize_batch(
                        R"({"tables":[{"rows":[{"a":"x"}],"schema":[{"name":"a","type":"integer"}]}]})"),
                    Error);
}

TEST_CASE("serialization round-trips randomized batches") {
    Gen gen(20240101);
    for (int i = 0; i < 100; ++i) {
        DataBatch b = gen.any_batch();
        std::string text = canonical_serialize(b);
        DataBatch back = deserialize_batch(text);
        REQUIRE(back == b);
        CHECK(canonical_serialize(back) == text);
    }
}

TEST_CASE("digest is keyed on canonical bytes") {
    CHECK(digest(DataBatch{}) == "cb2b03b89678ec1fb9db96f116e8e8ad81a81f6b9bbc2594bcb7d941e5234ecc");
    CHECK(digest(DataBatch::single(Table{{Row{{"a", 1}}}, std::nullopt})) ==
          "ba2871e92fac36ba2142ba8392acb7c3ba982d04fa99aac7838b5f6fb41cd0a9");

    Row r1;
    r1["z"] = 1;
    r1["a"] = "x";
    Row r2;
    r2["a"] = "x";
    r2["z"] = 1;
    auto d1 = digest(DataBatch::single(Table{{r1}, std::nullopt}));
    CHECK(d1 == digest(DataBatch::single(Table{{r2}, std::nullopt})));
    r2["z"] = 2;
    CHECK(d1 != digest(DataBatch::single(Table{{r2}, std::nullopt})));
    // 1 and 1.0 are distinct values
    r2["z"] = 1.0;
    CHECK(d1 != digest(DataBatch::single(Table{{r2}, std::nullopt})));
}

TEST_CASE("validate_schema examples") {
    Schema title{{"title", DeclaredType::string, "", false}};
    CHECK(validate_schema(Table{{Row{{"title", "x"}}}, std::nullopt}, title).ok());

    Schema salary{{"salary", DeclaredType::integer, "", false}};
    auto report = validate_schema(Table{{Row{{"salary", "high"}}}, std::nullopt}, salary);
    REQUIRE(report.size() == 1);
    CHECK(report.violations[0].row == 0);
    CHECK(report.violations[0].kind == ViolationKind::type_mismatch);

    Schema req{{"a", DeclaredType::integer, "", true}};
    auto missing = validate_schema(Table{{Row{{"b", 1}}}, std::nullopt}, req);
    REQUIRE(missing.size() == 2);
    CHECK(missing.violations[0].kind == ViolationKind::unknown_attribute);
    CHECK(missing.violations[1].kind == ViolationKind::missing_required);

    // null conforms to every type; integers conform to float
    Schema f{{"x", DeclaredType::floating, "", false}};
    CHECK(validate_schema(Table{{Row{{"x", nullptr}}, Row{{"x", 3}}}, std::nullopt}, f).ok());
}

TEST_CASE("validate_schema count matches a per-cell recount") {
    Gen gen(7);
    const std::vector<std::string> types = {"integer", "float", "string", "boolean", "any"};
    for (int iter = 0; iter < 200; ++iter) {
        Schema schema;
        for (const char* name : {"a", "b", "c"}) {
            if (gen.coin(0.7)) {
                schema.push_back({name, parse_declared_type(gen.pick(types)), "", gen.coin(0.3)});
            }
        }
        Table t = gen.pool_table(6, 4);
        // Naive recount: every (row, attribute) cell and every required column.
        std::size_t expected = 0;
        for (const auto& row : t.rows) {
            for (const auto& [k, v] : row) {
                const ColumnSpec* col = nullptr;
                for (const auto& c : schema) {
                    if (c.name == k) col = &c;
                }
                if (!col) {
                    ++expected;
                    continue;
                }
                bool ok = v.is_null() || col->type == DeclaredType::any ||
                          (col->type == DeclaredType::integer && v.is_int()) ||
                          (col->type == DeclaredType::floating && (v.is_int() || v.is_float())) ||
                          (col->type == DeclaredType::string && v.is_string()) ||
                          (col->type == DeclaredType::boolean && v.is_bool());
                if (!ok) ++expected;
            }
            for (const auto& c : schema) {
                if (c.required && row.find(c.name) == row.end()) ++expected;
            }
        }
        CHECK(validate_schema(t, schema).size() == expected);
    }
}

TEST_CASE("parse_expression examples") {
    Expr e = parse_expression(R"(location in ["San Francisco","Oakland"])");
    CHECK(e.kind == Expr::Kind::in);
    CHECK(e.operands[0].name == "location");
    REQUIRE(e.operands[1].literal.is_list());
    CHECK(e.operands[1].literal.as_list().size() == 2);

    Expr d = parse_expression("a = 1 and not (b > 2)");
    CHECK(d.kind == Expr::Kind::logical_and);
    CHECK(d.operands[1].kind == Expr::Kind::logical_not);
    CHECK(expression_depth(d) == 3);

    Expr p = parse_expression("salary >= t1.min_salary");
    CHECK(p.operands[1].port == 1);
    CHECK(p.operands[1].name == "min_salary");
}

TEST_CASE("syntax errors report the offset of the first bad token") {
    auto offset_of = [](std::string_view text) -> std::size_t {
        try {
            parse_expression(text);
        } catch (const ExpressionError& e) {
            return e.offset();
        }
        return static_cast<std::size_t>(-1);
    };
    CHECK(offset_of("a = ") == 4);
    CHECK(offset_of("a = 1 )") == 6);
    CHECK(offset_of("a in 3") == 5);
    CHECK(offset_of("a = \"open") == 4);
    CHECK(offset_of("a # b") == 2);
    CHECK(offset_of("") == 0);
    CHECK(offset_of("(a = 1") == 6);
}

TEST_CASE("parse-print-parse is a fixpoint on random expressions") {
    Gen gen(42);
    for (int i = 0; i < 200; ++i) {
        std::string text = gen.expression_text();
        Expr first = parse_expression(text);
        std::string printed = print_expression(first);
        Expr second = parse_expression(printed);
        INFO(text, " => ", printed);
        CHECK(second == first);
        CHECK(print_expression(second) == printed);
    }
}

TEST_CASE("eval_expression examples") {
    Row row{{"a", 1}};
    const Row* ctx[] = {&row};
    CHECK(eval_expression(parse_expression("a = 1"), ctx) == Value(true));
    CHECK(eval_expression(parse_expression("a < \"x\""), ctx) == Value(false));
    CHECK(eval_expression(parse_expression("a = 1.0"), ctx) == Value(true));
    CHECK(eval_expression(parse_expression("missing = 1"), ctx) == Value(false));
    CHECK(eval_expression(parse_expression("missing != 1"), ctx) == Value(false));
    CHECK(eval_expression(parse_expression("a"), ctx) == Value(1));
    CHECK(eval_expression(parse_expression("t3.a = 1"), ctx) == Value(false));
    Row text{{"s", "2 eggs"}};
    const Row* ctx2[] = {&text};
    CHECK(matches(parse_expression("s contains \"egg\""), ctx2));
}

TEST_CASE("eval agrees with the reference interpreter and never throws") {
    Gen gen(99);
    for (int i = 0; i < 500; ++i) {
        Expr e = parse_expression(gen.expression_text());
        Row r0 = gen.pool_row(4);
        Row r1 = gen.pool_row(4);
        std::vector<const Row*> ctx = {&r0, &r1};
        Value got;
        REQUIRE_NOTHROW(got = eval_expression(e, ctx));
        CHECK(got == dil::testing::reference_eval(e, ctx));
    }
}

TEST_CASE("total order puts null first and compares numbers numerically") {
    CHECK(compare(Value(), Value(false)) < 0);
    CHECK(compare(Value(2), Value(1.5)) > 0);
    CHECK(compare(Value(1), Value(1.0)) == 0);
    CHECK(compare(Value(9007199254740993LL), Value(9007199254740992.0)) > 0);
    CHECK(compare(Value(100), Value("1")) < 0);
    CHECK(normalized_key(Value(2.0)) == normalized_key(Value(2)));
    CHECK(normalized_key(Value(2.5)) != normalized_key(Value(2)));
}
