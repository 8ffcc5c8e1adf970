#include <string>
#include <vector>

#include "doctest.h"
#include "heatlens/error.hpp"
#include "heatlens/tomlite.hpp"

using namespace heatlens;

TEST_CASE("sections flatten into dotted keys with typed values") {
    const std::string text =
        "# run configuration\n"
        "title = \"demo\"\n"
        "\n"
        "[params]\n"
        "seed = 42\n"
        "alpha = 0.05\n"
        "verbose = true\n"
        "hours = [9, 11, 13]\n"
        "\n"
        "[svf]\n"
        "max_radius_m = 150.0   # comment after value\n";
    const TomlTable t = parse_toml(text);

    CHECK(t.get_string("title") == "demo");
    CHECK(t.get_int("params.seed") == 42);
    CHECK(t.get_double("params.alpha") == doctest::Approx(0.05));
    CHECK(t.get_bool("params.verbose"));
    CHECK(t.get_ints("params.hours") == std::vector<int64_t>{9, 11, 13});
    CHECK(t.get_double("svf.max_radius_m") == doctest::Approx(150.0));
    CHECK(t.has("params.seed"));
    CHECK_FALSE(t.has("params.gamma"));
}

TEST_CASE("strings keep escapes and inline comment markers") {
    const TomlTable t = parse_toml(
        "path = \"out # not a comment\"\n"
        "quoted = \"a \\\"b\\\" c\"\n"
        "multi = \"line\\nbreak\\tand \\\\ slash\"\n");
    CHECK(t.get_string("path") == "out # not a comment");
    CHECK(t.get_string("quoted") == "a \"b\" c");
    CHECK(t.get_string("multi") == "line\nbreak\tand \\ slash");
}

TEST_CASE("numbers parse by shape and widen where a float is wanted") {
    const TomlTable t = parse_toml(
        "a = -7\n"
        "b = 2.5e-3\n"
        "c = [1, 2.5, -3]\n");
    CHECK(t.get_int("a") == -7);
    CHECK(t.get_double("a") == doctest::Approx(-7.0));
    CHECK(t.get_double("b") == doctest::Approx(0.0025));
    CHECK(t.get_doubles("c") == std::vector<double>{1.0, 2.5, -3.0});
}

TEST_CASE("empty and string arrays round-trip") {
    const TomlTable t = parse_toml("none = []\nnames = [\"a\", \"b,c\"]\n");
    CHECK(t.get_ints("none").empty());
    const TomlValue& names = t.get("names");
    REQUIRE(names.items.size() == 2);
    CHECK(names.items[0].str == "a");
    CHECK(names.items[1].str == "b,c");
}

TEST_CASE("syntax errors carry the line number") {
    CHECK_THROWS_WITH_AS(parse_toml("a = 1\nnot a pair\n"), doctest::Contains("line 2"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_toml("[params\nseed = 1\n"), doctest::Contains("line 1"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_toml("a = \"open\n"), doctest::Contains("unterminated string"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_toml("a = [1, [2]]\n"), doctest::Contains("nested"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_toml("a = 1\na = 2\n"), doctest::Contains("duplicate key 'a'"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_toml("[s]\nx = 1\n[s]\nx = 2\n"),
                         doctest::Contains("duplicate key 's.x'"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_toml("a = 12zz\n"), doctest::Contains("cannot parse value"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_toml("a? = 1\n"), doctest::Contains("invalid key"),
                         ValidationError);
}

TEST_CASE("getters name missing keys by their leaf") {
    const TomlTable t = parse_toml("[params]\nalpha = 0.05\n");
    CHECK_THROWS_WITH_AS(t.get_int("params.seed"), doctest::Contains("missing key: seed"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(t.get_string("title"), doctest::Contains("missing key: title"),
                         ValidationError);
}

TEST_CASE("getters reject values of the wrong kind") {
    const TomlTable t = parse_toml("s = \"x\"\nn = 3\nf = 1.5\narr = [1]\n");
    CHECK_THROWS_WITH_AS(t.get_int("s"), doctest::Contains("expects an integer"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(t.get_int("f"), doctest::Contains("expects an integer"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(t.get_string("n"), doctest::Contains("expects a string"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(t.get_bool("n"), doctest::Contains("expects a boolean"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(t.get_double("s"), doctest::Contains("expects a number"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(t.get_ints("n"), doctest::Contains("expects an array"),
                         ValidationError);
    CHECK_NOTHROW(t.get_ints("arr"));
}

TEST_CASE("read_toml reports unreadable paths") {
    CHECK_THROWS_WITH_AS(read_toml("/nonexistent/run.toml"), doctest::Contains("cannot open"),
                         ValidationError);
}
