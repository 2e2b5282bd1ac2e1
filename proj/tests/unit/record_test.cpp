#include "doctest.h"
#include "restore/record.hpp"

using namespace restore;

TEST_CASE("line codec round trips rows") {
    Row r{"a", "", "x y", "1.5"};
    CHECK(to_line(r) == "a\t\tx y\t1.5");
    CHECK(from_line(to_line(r)) == r);
    CHECK(from_line("") == Row{""});
    CHECK(from_line("one") == Row{"one"});
}

TEST_CASE("bag codec round trips and counts") {
    std::vector<Row> tuples{{"a", "b"}, {"c", "d"}, {"", ""}};
    std::string text = bag_to_text(tuples);
    CHECK(text == "{(a,b),(c,d),(,)}");
    auto back = bag_from_text(text);
    REQUIRE(back.has_value());
    CHECK(*back == tuples);

    CHECK(bag_to_text({}) == "{}");
    REQUIRE(bag_from_text("{}").has_value());
    CHECK(bag_from_text("{}")->empty());
    CHECK(*bag_text_count("{(a),(b),(c)}") == 3);
    CHECK(*bag_text_count("{}") == 0);
    CHECK(!bag_from_text("nope").has_value());
    CHECK(!bag_text_count("nope").has_value());
}

TEST_CASE("composite keys display as tuples") {
    Row r{"x", "y", "z"};
    std::string k = composite_key(r, {0, 2});
    CHECK(k == std::string("x") + kKeySep + "z");
    CHECK(key_display(k) == "(x,z)");
    CHECK(key_display("plain") == "plain");
    CHECK(composite_key(r, {1}) == "y");
}

TEST_CASE("number parse and format") {
    CHECK(*parse_number("42") == 42.0);
    CHECK(*parse_number("-1.25") == -1.25);
    CHECK(!parse_number("").has_value());
    CHECK(!parse_number("12abc").has_value());
    CHECK(!parse_number("abc").has_value());
    CHECK(format_number(2.0) == "2");
    CHECK(format_number(-7.0) == "-7");
    CHECK(format_number(2.5) == "2.5");
    CHECK(*parse_number(format_number(0.1 + 0.2)) == doctest::Approx(0.3));
}

TEST_CASE("fnv1a is stable and seed sensitive") {
    CHECK(fnv1a("abc") == fnv1a("abc"));
    CHECK(fnv1a("abc") != fnv1a("abd"));
    CHECK(fnv1a("abc") != fnv1a("abc", 7));
}
