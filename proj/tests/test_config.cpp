#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "lk/config.hpp"

using namespace lk;

TEST_CASE("parsing") {
  SUBCASE("key = value with comments and blanks") {
    auto c = Config::from_string(
        "# header comment\n\na = 1.5\n b = text # trailing\n\nc=3\n");
    CHECK(c.get_double("a") == 1.5);
    CHECK(c.get_string("b") == "text");
    CHECK(c.get_int("c") == 3);
  }
  SUBCASE("malformed line rejected") {
    CHECK_THROWS(Config::from_string("just words\n"));
    CHECK_THROWS(Config::from_string("= 3\n"));
  }
  SUBCASE("duplicate key rejected") {
    CHECK_THROWS(Config::from_string("a = 1\na = 2\n"));
  }
  SUBCASE("missing file rejected") {
    CHECK_THROWS(Config::from_file("no_such_config_file.cfg"));
  }
  SUBCASE("file round trip") {
    {
      std::ofstream os("test_config_tmp.cfg");
      os << "x = 4\nlist = 1 2 3\n";
    }
    auto c = Config::from_file("test_config_tmp.cfg");
    CHECK(c.get_int("x") == 4);
    const auto v = c.get_doubles("list");
    REQUIRE(v.size() == 3);
    CHECK(v[2] == 3.0);
    std::remove("test_config_tmp.cfg");
  }
}

TEST_CASE("typed access") {
  auto c = Config::from_string("a = 2.5\nn = 7\ns = hello\n");
  SUBCASE("fallbacks apply only when absent") {
    CHECK(c.get_double("a", 9.0) == 2.5);
    CHECK(c.get_double("zz", 9.0) == 9.0);
    CHECK(c.get_int("n", 1) == 7);
    CHECK(c.get_string("missing", "dflt") == "dflt");
  }
  SUBCASE("missing required key throws") {
    CHECK_THROWS(c.get_double("nope"));
  }
  SUBCASE("non-numeric value throws") {
    CHECK_THROWS(c.get_double("s"));
  }
}

TEST_CASE("unknown-key tracking") {
  auto c = Config::from_string("a = 1\nb = 2\ntypo_key = 3\n");
  (void)c.get_double("a");
  (void)c.get_double("b");
  SUBCASE("unqueried keys are reported") {
    const auto unknown = c.unknown_keys();
    REQUIRE(unknown.size() == 1);
    CHECK(unknown[0] == "typo_key");
  }
  SUBCASE("require_known rejects strays") {
    CHECK_THROWS(c.require_known({"a", "b"}));
    CHECK_NOTHROW(c.require_known({"a", "b", "typo_key"}));
  }
}

TEST_CASE("hash") {
  auto a = Config::from_string("x = 1\ny = 2\n");
  auto b = Config::from_string("y = 2\nx = 1\n");
  auto c = Config::from_string("x = 1\ny = 3\n");
  SUBCASE("stable under key order") {
    CHECK(a.hash() == b.hash());
  }
  SUBCASE("sensitive to values") {
    CHECK(a.hash() != c.hash());
  }
  SUBCASE("repeatable") {
    CHECK(a.hash() == a.hash());
  }
}
