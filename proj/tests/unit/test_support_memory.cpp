#include <doctest.h>

#include <fstream>
#include <sstream>

#include "testkit.hpp"

using namespace ug;
using testkit::lit;

namespace {

Scenario cake_scenario() { return testkit::load_scenario(testkit::cake_path()); }

MemoryLog append(const MemoryLog& log, const KnowledgeBase& kb, EventKind kind, const std::string& item) {
  return record_event(log, SupportEvent{log.next_seq(), log.user(), item, kind, std::nullopt}, kb);
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ug::Error");
  return ErrorCode::ParseError;
}

}  // namespace

TEST_CASE("record_event") {
  const KnowledgeBase kb = cake_scenario().kb;
  MemoryLog log("A");
  log = append(log, kb, EventKind::UserPerceivedFact, "f4");
  CHECK(support_rank(log, "f4").rank == 2);
  CHECK(support_rank(log, "f4").source_event == 1u);

  CHECK(code_of([&] { append(log, kb, EventKind::UserEndorsedRule, "f4"); }) == ErrorCode::KindMismatch);
  CHECK(code_of([&] { append(log, kb, EventKind::UserAssertedFact, "r1"); }) == ErrorCode::KindMismatch);
  CHECK(code_of([&] { append(log, kb, EventKind::UserTaught, "f1"); }) == ErrorCode::KindMismatch);
  CHECK(code_of([&] { append(log, kb, EventKind::UserAssertedFact, "f99"); }) == ErrorCode::UnknownItem);
  CHECK(code_of([&] {
          record_event(log, SupportEvent{5, "A", "f1", EventKind::UserAssertedFact, std::nullopt}, kb);
        }) == ErrorCode::SeqGap);
  CHECK(code_of([&] {
          record_event(log, SupportEvent{2, "B", "f1", EventKind::UserAssertedFact, std::nullopt}, kb);
        }) == ErrorCode::UserMismatch);
  CHECK(log.events().size() == 1);  // failures leave the log untouched

  log = append(log, kb, EventKind::SuccessfulUseNoObjection, "r4");
  log = append(log, kb, EventKind::UserObjected, "r4");
  const SupportRank r4 = support_rank(log, "r4");
  CHECK(r4.rank == 0);
  CHECK(r4.contested);

  // renewed support after the objection lifts the contest
  log = append(log, kb, EventKind::UserEmployedRule, "r4");
  CHECK(support_rank(log, "r4").rank == 2);
  CHECK_FALSE(support_rank(log, "r4").contested);
}

TEST_CASE("support_rank") {
  const Scenario s = cake_scenario();
  const MemoryLog& a = s.personas.at("A").log;
  CHECK(support_rank(a, "f5").rank == 0);
  for (const auto& id : {"f1", "f2", "f3", "f4", "f6", "f7", "r1", "r2", "r3", "r4"}) {
    CAPTURE(id);
    CHECK(support_rank(a, id).rank >= 1);
  }
  CHECK(support_rank(MemoryLog("A"), "f1") == SupportRank{});

  MemoryLog log("u");
  log = append(log, s.kb, EventKind::UserAssertedFact, "f1");
  log = append(log, s.kb, EventKind::PriorAgreementFact, "f1");
  CHECK(support_rank(log, "f1").rank == 3);
  CHECK(support_rank(log, "f1").source_event == 1u);
}

TEST_CASE("rank matches an independent scan") {
  std::mt19937 rng(5);
  for (int i = 0; i < 300; ++i) {
    const KnowledgeBase kb = testkit::random_kb(rng);
    const MemoryLog log = testkit::random_log(rng, kb, rng() % 30);
    for (const auto& f : kb.facts()) CHECK(support_rank(log, f.id).rank == testkit::scan_rank(log, f.id));
    for (const auto& r : kb.rules()) CHECK(support_rank(log, r.id).rank == testkit::scan_rank(log, r.id));
  }
}

TEST_CASE("teaching") {
  const Scenario s = cake_scenario();
  const MemoryLog& a = s.personas.at("A").log;

  SUBCASE("assert a fact") {
    const KnowledgeBase without = retract_fact(s.kb, "f5");
    auto [kb, log] = apply_teaching(snapshot(without), a, AssertFact{"f5", lit("patio", "temp", "cool")});
    REQUIRE(kb.find_fact("f5") != nullptr);
    CHECK(support_rank(log, "f5").rank == 3);
    CHECK(log.events().size() == a.events().size() + 1);
    CHECK(log.events().back().kind == EventKind::UserAssertedFact);
  }

  SUBCASE("asserting a known literal supports the existing fact") {
    auto [kb, log] = apply_teaching(snapshot(s.kb), a, AssertFact{"f9", lit("patio", "temp", "cool")});
    CHECK(kb == s.kb);
    CHECK(log.events().back().item == "f5");
    CHECK(support_rank(log, "f5").rank == 3);
  }

  SUBCASE("edit of a fixed rule") {
    Rule r3 = *s.kb.find_rule("r3");
    r3.priority = 0;
    CHECK(code_of([&] { apply_teaching(snapshot(s.kb), a, EditPreinstalledRule{r3}); }) ==
          ErrorCode::FixedLayerViolation);
    CHECK(code_of([&] { apply_teaching(snapshot(s.kb), a, SetRulePriority{"r3", 0}); }) ==
          ErrorCode::FixedLayerViolation);
  }

  SUBCASE("replace a fact value") {
    auto [kb, log] = apply_teaching(snapshot(s.kb), a, ReplaceFactValue{"f7", "cool"});
    REQUIRE(kb.find_fact("f7") != nullptr);
    CHECK(kb.find_fact("f7")->literal == lit("hallway", "temp", "cool"));
    CHECK(kb.find_fact_by_literal(lit("hallway", "temp", "warm")) == nullptr);
    CHECK(support_rank(log, "f7").rank == 3);
  }

  SUBCASE("retract a fact") {
    auto [kb, log] = apply_teaching(snapshot(s.kb), a, RetractFact{"f4"});
    CHECK(kb.find_fact("f4") == nullptr);
    CHECK(log.events().back().kind == EventKind::UserObjected);
    CHECK(support_rank(log, "f4").contested);
    CHECK(code_of([&] { apply_teaching(snapshot(s.kb), a, RetractFact{"f42"}); }) == ErrorCode::RetractUnknown);
  }

  SUBCASE("add and reprioritise a user rule") {
    Rule mine{"u1", {lit("cakeA", "type", "cake")}, lit("cakeA", "tasty", "yes"), 1};
    auto [kb, log] = apply_teaching(snapshot(s.kb), a, AddUserRule{mine});
    REQUIRE(kb.find_rule("u1") != nullptr);
    CHECK(kb.find_rule("u1")->layer == Layer::user);
    CHECK(log.events().back().kind == EventKind::UserTaught);
    CHECK(support_rank(log, "u1").rank == 3);
    CHECK(code_of([&] { apply_teaching(snapshot(kb), log, AddUserRule{mine}); }) == ErrorCode::DuplicateId);

    auto [kb2, log2] = apply_teaching(snapshot(kb), log, SetRulePriority{"u1", 3});
    CHECK(kb2.find_rule("u1")->priority == 3);
    CHECK(code_of([&] { apply_teaching(snapshot(kb), log, SetRulePriority{"nope", 3}); }) == ErrorCode::UnknownItem);
  }

  SUBCASE("teaching that would break the knowledge base") {
    // a user rule making the decision cyclic is refused as a whole
    Rule loop{"u1", {lit("cakeA", "storage_location", "patio")}, lit("cakeA", "needs", "cool_storage", false), 3};
    CHECK(code_of([&] { apply_teaching(snapshot(s.kb), a, AddUserRule{loop}); }) == ErrorCode::InvalidKB);
  }
}

TEST_CASE("log persistence") {
  const Scenario s = cake_scenario();
  const MemoryLog& a = s.personas.at("A").log;

  std::stringstream buffer;
  save_log(a, buffer);
  CHECK(load_log(buffer, "A") == a);

  const auto dir = testkit::temp_dir("log");
  save_log(a, dir / log_file_name("A"));
  const MemoryLog back = load_log(dir / log_file_name("A"));
  CHECK(back == a);
  for (const auto& id : {"f1", "f2", "f5", "r3", "r4"}) CHECK(support_rank(back, id) == support_rank(a, id));

  std::istringstream empty("");
  const MemoryLog e = load_log(empty, "Z");
  CHECK(e.user() == "Z");
  CHECK(e.events().empty());

  CHECK_THROWS_AS(load_log(dir / "missing.mem.jsonl"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt records") {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      load_log(in, "A");
    } catch (const CorruptRecord& e) {
      return e.line();
    }
    return 0;
  };
  const std::string ok1 = R"({"seq":1,"user":"A","kind":"UserAssertedFact","item":"f1"})" "\n";
  const std::string ok2 = R"({"seq":2,"user":"A","kind":"UserObjected","item":"r4","note":"no"})" "\n";
  CHECK(line_of(ok1 + ok2) == 0);
  CHECK(line_of(ok1 + ok2 + "{not json\n") == 3);
  CHECK(line_of(ok1 + ok2 + R"({"seq":3,"user":"A","kind":"Nope","item":"f1"})" "\n") == 3);
  CHECK(line_of(ok1 + ok2 + R"({"seq":4,"user":"A","kind":"UserAssertedFact","item":"f1"})" "\n") == 3);
  CHECK(line_of(ok1 + R"({"seq":2,"user":"B","kind":"UserAssertedFact","item":"f1"})" "\n") == 2);
  CHECK(line_of(ok1 + R"({"seq":2,"user":"A","kind":"UserAssertedFact"})" "\n") == 2);
  CHECK(line_of(ok1 + R"({"seq":2,"user":"A","kind":"UserAssertedFact","item":"f1","x":1})" "\n") == 2);
  CHECK(line_of(ok1 + R"({"seq":2,"user":"A","kind":"UserAssertedFact","item":"bad id"})" "\n") == 2);
}

TEST_CASE("save/load round trip on random logs") {
  std::mt19937 rng(11);
  for (int i = 0; i < 100; ++i) {
    const KnowledgeBase kb = testkit::random_kb(rng);
    const MemoryLog log = testkit::random_log(rng, kb, rng() % 40);
    std::stringstream buffer;
    save_log(log, buffer);
    const MemoryLog back = load_log(buffer, log.user());
    REQUIRE(back == log);
    for (const auto& f : kb.facts()) CHECK(support_rank(back, f.id) == support_rank(log, f.id));
    for (const auto& r : kb.rules()) CHECK(support_rank(back, r.id) == support_rank(log, r.id));
  }
}
