#include <doctest.h>

#include <algorithm>

#include "testkit.hpp"

using namespace ug;
using testkit::lit;

namespace {

std::vector<std::filesystem::path> corpus() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(testkit::source_dir() / "tests/data/scenarios"))
    if (e.path().extension() == ".ug") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

ParseError parse_error(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ParseError& e) {
    return e;
  }
  FAIL("expected ParseError for:\n" << text);
  return ParseError(0, 0, "", "");
}

const std::string header =
    "functional loc\n"
    "fact f1: x kind box\n"
    "rule r1 prio 1 layer preinstalled: x kind box => x loc shelf\n"
    "decision: x loc\n";

}  // namespace

TEST_CASE("canonical cake scenario") {
  const Scenario s = testkit::load_scenario(testkit::cake_path());
  CHECK(s.kb.facts().size() == 7);
  CHECK(s.kb.rules().size() == 4);
  CHECK(s.personas.size() == 3);
  CHECK(s.kb.decision() == DecisionQuery{"cakeA", "storage_location"});
  CHECK(s.kb.find_rule("r3")->layer == Layer::fixed);
  CHECK(s.kb.find_rule("r4")->body.size() == 3);
  CHECK(s.kb.find_rule("r4")->body[1] == lit("cakeA", "storage_location", "fridge", false));
  CHECK(s.personas.at("C").log.events().back().kind == EventKind::UserObjected);
  CHECK(s.personas.at("C").log.events().back().note == "food should not be left outside");
  CHECK(s.personas.at("A").attributes.at("about") == "unaware of the outside temperature");
  CHECK(s.script.size() == 6);
  CHECK(std::holds_alternative<step::Decide>(s.script[0]));
  const auto& why = std::get<step::Why>(s.script[5]);
  CHECK(why.strategy == Strategy::contrastive);
  CHECK(why.expecting == "fridge");
}

TEST_CASE("syntax errors carry positions") {
  const ParseError neg = parse_error("functional loc\nrule r9 prio -1 layer preinstalled: a b c => a b d\n");
  CHECK(neg.line() == 2);
  CHECK(neg.column() == 14);
  CHECK(neg.code() == ErrorCode::ParseError);
  CHECK(neg.snippet().find("prio -1") != std::string::npos);

  const ParseError colon = parse_error("fact f1 x kind box\n");
  CHECK(colon.line() == 1);
  CHECK(colon.column() == 9);

  CHECK(parse_error("fact f1: x kind\n").line() == 1);
  CHECK(parse_error("rule r1 prio 1 layer nowhere: a b c => a b d\n").column() == 22);
  CHECK(parse_error(header + "step why sideways\n").line() == 5);
  CHECK(parse_error(header + "persona A:\n  attr about \"unterminated\n").line() == 6);
  CHECK(parse_error(header + "  event UserAssertedFact f1\n").line() == 5);
  CHECK(parse_error("bogus\n").line() == 1);
}

TEST_CASE("semantic errors keep their domain code") {
  const ParseError kind = parse_error(header + "persona A:\n  event UserEndorsedRule f1\n");
  CHECK(kind.line() == 6);
  CHECK(kind.cause() == ErrorCode::KindMismatch);
  CHECK(kind.code() == ErrorCode::KindMismatch);
  CHECK(kind.column() == 26);

  CHECK(parse_error(header + "fact f1: y kind box\n").cause() == ErrorCode::DuplicateId);
  CHECK(parse_error(header + "fact f2: not x kind box\n").cause() == ErrorCode::FactConflict);
  CHECK(parse_error(header + "persona A:\n  event UserAssertedFact f9\n").cause() == ErrorCode::UnknownItem);
  CHECK(parse_error(header + "step event UserAssertedFact f9\n").cause() == ErrorCode::UnknownItem);
  CHECK(parse_error(header + "rule r2 prio 0 layer preinstalled: a b c => a b c\n").cause() == ErrorCode::MalformedRule);

  const ParseError cycle = parse_error(header +
                                       "rule a1 prio 0 layer preinstalled: x p a => x p b\n"
                                       "rule a2 prio 0 layer preinstalled: x p b => not x p a\n");
  CHECK(cycle.cause() == ErrorCode::InvalidKB);
  CHECK(std::string(cycle.what()).find("cycle") != std::string::npos);

  CHECK(parse_error("functional loc\nfact f1: x kind box\n").cause() == ErrorCode::InvalidKB);
}

TEST_CASE("script steps may reference statements taught earlier") {
  const Scenario s = parse_scenario(header + "step teach assert f2: x colour red\nstep event UserAssertedFact f2\n");
  CHECK(s.script.size() == 2);
  CHECK(parse_error(header + "step event UserAssertedFact f2\nstep teach assert f2: x colour red\n").line() == 5);
}

TEST_CASE("teach and step text round trip") {
  const std::vector<std::string> actions = {
      "assert f5: patio temp cool",
      "retract f4",
      "replace f7 cool",
      "add u1 prio 3: cakeA needs cool_storage & hallway temp cool => cakeA storage_location hallway",
      "edit r4 prio 2: cakeA needs cool_storage & not cakeA storage_location fridge => cakeA storage_location patio",
      "priority r2 0",
  };
  for (const auto& a : actions) CHECK(format_teach(parse_teach(a)) == a);
  CHECK_THROWS_AS(parse_teach("assert f5 patio temp cool"), ParseError);
  CHECK_THROWS_AS(parse_teach("priority r2 -1"), ParseError);

  const std::vector<std::string> steps = {"decide", "why extrospective", "why contrastive expecting fridge top 2",
                                          "teach retract f1", "event UserObjected r4 \"too \\\"warm\\\"\""};
  for (const auto& st : steps) CHECK(format_step(parse_step(st)) == st);
}

TEST_CASE("serialize round trip on the corpus") {
  const auto files = corpus();
  REQUIRE(files.size() == 20);
  for (const auto& path : files) {
    CAPTURE(path.filename().string());
    const Scenario s = testkit::load_scenario(path);
    const std::string text = serialize_scenario(s);
    const Scenario back = parse_scenario(text);
    CHECK(back == s);
    CHECK(serialize_scenario(back) == text);
  }
}

TEST_CASE("comments are dropped, structure kept") {
  const Scenario s = testkit::load_scenario(testkit::source_dir() / "tests/data/scenarios/s20_comments_everywhere.ug");
  const std::string text = serialize_scenario(s);
  CHECK(text.find('#') == std::string::npos);
  CHECK(parse_scenario(text) == s);
  CHECK(s.personas.at("p1").attributes.at("mood") == "curious");
}

TEST_CASE("fuzzed input yields a scenario or a ParseError") {
  std::mt19937 rng(424242);
  const std::string seed = testkit::read_text(testkit::cake_path());
  int parsed = 0;
  for (int i = 0; i < 3000; ++i) {
    std::string text;
    if (i % 2 == 0) {
      text.resize(rng() % 200);
      for (auto& c : text) c = static_cast<char>(rng() % 256);
    } else {
      text = seed;
      const int edits = 1 + rng() % 8;
      for (int k = 0; k < edits; ++k) {
        const std::size_t at = rng() % text.size();
        switch (rng() % 3) {
          case 0: text[at] = static_cast<char>(rng() % 256); break;
          case 1: text.erase(at, 1 + rng() % 10); break;
          default: text.insert(at, 1, " :&=>-\"\n#"[rng() % 9]);
        }
        if (text.empty()) text = " ";
      }
    }
    try {
      parse_scenario(text);
      ++parsed;
    } catch (const ParseError& e) {
      CHECK(e.line() >= 1);
    }
  }
  CHECK(parsed > 0);
}
