#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "testkit.hpp"
#include "ug/service.hpp"

using namespace ug;

namespace {

struct Fixture {
  std::filesystem::path data = testkit::temp_dir("svc");
  ServiceConfig config{testkit::source_dir() / "scenarios", data};
  std::unique_ptr<Service> service = std::make_unique<Service>(config);

  ~Fixture() { std::filesystem::remove_all(data); }

  Response post(const std::string& path, const Json& body) { return service->handle_request("POST", path, body.dump()); }
  Response get(const std::string& path) { return service->handle_request("GET", path, ""); }

  std::string open(const std::string& persona) {
    Response r = post("/sessions", Json{{"scenario_name", "birthday_cake"}, {"persona", persona}});
    REQUIRE(r.status == 201);
    return r.body["session_id"].get<std::string>();
  }
};

Json kb_item(const Json& kb, const std::string& id) {
  for (const auto& item : kb["items"])
    if (item["id"] == id) return item;
  FAIL("no item " << id);
  return {};
}

}  // namespace

TEST_CASE("session flow") {
  Fixture fx;
  const std::string sid = fx.open("A");
  const std::string base = "/sessions/" + sid;

  Response kb = fx.get(base + "/kb");
  REQUIRE(kb.status == 200);
  CHECK(kb.body["state_version"] == 1);
  CHECK(kb.body["items"].size() == 11);
  CHECK(kb_item(kb.body, "f5")["support"]["rank"] == 0);
  CHECK(kb_item(kb.body, "r3")["layer"] == "fixed");
  CHECK(kb_item(kb.body, "r3")["priority"] == 2);
  for (const auto& item : kb.body["items"])
    if (item["id"] != "f5") CHECK(item["support"]["rank"].get<int>() >= 1);

  Response decided = fx.post(base + "/decide", Json{{"subject", "cakeA"}, {"relation", "storage_location"}});
  REQUIRE(decided.status == 200);
  CHECK(decided.body["decision"]["value"] == "patio");

  Response ex = fx.post(base + "/explain", Json{{"strategy", "extrospective"}});
  REQUIRE(ex.status == 200);
  CHECK(ex.body["explanation"]["top"] == "f5");

  Response taught = fx.post(base + "/teach", Json{{"action", "assert f5: patio temp cool"}, {"state_version", 1}});
  REQUIRE(taught.status == 200);
  CHECK(taught.body["state_version"] == 2);
  CHECK(taught.body["rank"]["rank"] == 3);

  Response again = fx.post(base + "/explain", Json{{"strategy", "extrospective"}});
  CHECK(again.body["explanation"]["top"] != "f5");
  CHECK(kb_item(fx.get(base + "/kb").body, "f5")["support"]["rank"] == 3);

  Response structured = fx.post(base + "/teach", Json{{"action", Json{{"type", "SetRulePriority"}, {"id", "r1"}, {"priority", 2}}}});
  REQUIRE(structured.status == 200);
  CHECK(kb_item(fx.get(base + "/kb").body, "r1")["priority"] == 2);
  CHECK(kb_item(fx.get(base + "/kb").body, "r1")["layer"] == "user");

  Response event = fx.post(base + "/events", Json{{"kind", "UserObjected"}, {"item", "r4"}, {"note", "no"}});
  REQUIRE(event.status == 200);
  CHECK(event.body["rank"]["contested"] == true);
  CHECK(event.body["state_version"] == 4);

  Response transcript = fx.get(base + "/transcript");
  CHECK(transcript.body["records"].size() == 6);
  CHECK(transcript.body["state_version"] == 4);
}

TEST_CASE("error statuses") {
  Fixture fx;
  const std::string sid = fx.open("B");
  const std::string base = "/sessions/" + sid;

  CHECK(fx.post("/sessions/nope/explain", Json{{"strategy", "last_step"}}).status == 404);
  CHECK(fx.get("/sessions/nope/kb").status == 404);
  CHECK(fx.post("/sessions", Json{{"scenario_name", "no_such"}, {"persona", "A"}}).status == 404);
  CHECK(fx.post("/sessions", Json{{"scenario_name", "../scenarios/birthday_cake"}, {"persona", "A"}}).status == 404);
  CHECK(fx.get(base + "/nothing").status == 404);

  Response unknown_persona = fx.post("/sessions", Json{{"scenario_name", "birthday_cake"}, {"persona", "Q"}});
  CHECK(unknown_persona.status == 422);
  CHECK(unknown_persona.body["error"]["code"] == "UnknownPersona");

  CHECK(fx.service->handle_request("POST", base + "/decide", "{broken").status == 400);

  Response fixed = fx.post(base + "/teach", Json{{"action", "priority r3 0"}});
  CHECK(fixed.status == 422);
  CHECK(fixed.body["error"]["code"] == "FixedLayerViolation");
  Response conflict = fx.post(base + "/teach", Json{{"action", "add u1 prio 5: cakeA type cake => cakeA storage_location fridge"}});
  CHECK(conflict.status == 422);
  CHECK(conflict.body["error"]["code"] == "FixedConflict");
  CHECK(fx.post(base + "/explain", Json{{"strategy", "last_step"}}).body["error"]["code"] == "EmptyTrace");
  CHECK(fx.post(base + "/explain", Json{{"strategy", "sideways"}}).status == 422);

  Response kind = fx.post(base + "/events", Json{{"kind", "UserEndorsedRule"}, {"item", "f1"}});
  CHECK(kind.status == 422);
  CHECK(kind.body["error"]["code"] == "KindMismatch");

  // failed mutations do not bump the version
  CHECK(fx.get(base + "/kb").body["state_version"] == 1);
  Response stale = fx.post(base + "/events", Json{{"kind", "UserAssertedFact"}, {"item", "f1"}, {"state_version", 7}});
  CHECK(stale.status == 409);
  CHECK(stale.body["state_version"] == 1);
  CHECK(fx.post(base + "/events", Json{{"kind", "UserAssertedFact"}, {"item", "f1"}, {"state_version", 1}}).status == 200);
}

TEST_CASE("API transcript equals run_scenario") {
  Fixture fx;
  const Scenario s = testkit::load_scenario(testkit::cake_path());
  for (const auto& persona : {"A", "B", "C"}) {
    const std::string base = "/sessions/" + fx.open(persona);
    for (const auto& st : s.script) {
      if (std::holds_alternative<step::Decide>(st)) {
        fx.post(base + "/decide", Json::object());
      } else {
        const auto& why = std::get<step::Why>(st);
        Json body{{"strategy", std::string(strategy_name(why.strategy))}, {"top_k", why.top_k}};
        if (why.expecting) body["expected"] = *why.expecting;
        fx.post(base + "/explain", body);
      }
    }
    Json expected = Json::array();
    for (const auto& r : run_scenario(s, persona)) expected.push_back(to_json(r));
    CHECK(fx.get(base + "/transcript").body["records"] == expected);
  }
}

TEST_CASE("restart rehydrates sessions") {
  Fixture fx;
  const std::string sid = fx.open("A");
  const std::string base = "/sessions/" + sid;
  fx.post(base + "/decide", Json::object());
  fx.post(base + "/teach", Json{{"action", "replace f7 cool"}});
  fx.post(base + "/teach", Json{{"action", "add u1 prio 3: cakeA needs cool_storage & hallway temp cool => cakeA storage_location hallway"}});
  fx.post(base + "/events", Json{{"kind", "UserObjected"}, {"item", "f2"}});
  const Json before = fx.post(base + "/explain", Json{{"strategy", "extrospective"}, {"top_k", 3}}).body;
  const Json kb_before = fx.get(base + "/kb").body;
  REQUIRE(before["explanation"]["decision"]["value"] == "hallway");

  fx.service = std::make_unique<Service>(fx.config);
  CHECK(fx.service->session_count() == 1);
  CHECK(fx.get(base + "/kb").body == kb_before);
  const Json after = fx.post(base + "/explain", Json{{"strategy", "extrospective"}, {"top_k", 3}}).body;
  CHECK(after["explanation"] == before["explanation"]);
  CHECK(after["state_version"] == before["state_version"]);
  CHECK(after["step"].get<int>() == before["step"].get<int>() + 1);

  // the memory file on disk is the event-log format
  const MemoryLog log = load_log(fx.data / sid / log_file_name("A"));
  CHECK(support_rank(log, "f7").rank == 3);
  CHECK(support_rank(log, "f2").contested);
}

TEST_CASE("readers never see a half-applied mutation") {
  Fixture fx;
  const std::string base = "/sessions/" + fx.open("A");
  // r1 starts at rank 3; every odd event objects, every even one endorses it
  std::atomic<bool> done{false};
  std::thread writer([&] {
    for (int i = 0; i < 60; ++i) {
      const char* kind = i % 2 == 0 ? "UserObjected" : "UserEndorsedRule";
      fx.post(base + "/events", Json{{"kind", kind}, {"item", "r1"}});
    }
    done = true;
  });
  int checks = 0;
  while (!done || checks == 0) {
    const Json kb = fx.get(base + "/kb").body;
    const int version = kb["state_version"].get<int>();
    const int rank = kb_item(kb, "r1")["support"]["rank"].get<int>();
    CHECK(rank == (version % 2 == 0 ? 0 : 3));
    ++checks;
  }
  writer.join();
  CHECK(fx.get(base + "/kb").body["state_version"] == 61);
}

TEST_CASE("HTTP front end") {
  Fixture fx;
  HttpServer server(*fx.service);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread loop([&] { server.listen(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/sessions", R"({"scenario_name":"birthday_cake","persona":"A"})", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(created->get_header_value("Content-Type") == "application/json");
  const std::string sid = Json::parse(created->body)["session_id"];

  auto decided = client.Post("/sessions/" + sid + "/decide", "{}", "application/json");
  REQUIRE(decided);
  CHECK(Json::parse(decided->body)["decision"]["value"] == "patio");
  auto ex = client.Post("/sessions/" + sid + "/explain", R"({"strategy":"extrospective"})", "application/json");
  REQUIRE(ex);
  CHECK(Json::parse(ex->body)["explanation"]["top"] == "f5");
  auto missing = client.Get("/sessions/zzz/transcript");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto stale = client.Post("/sessions/" + sid + "/teach", R"({"action":"retract f4","state_version":9})", "application/json");
  REQUIRE(stale);
  CHECK(stale->status == 409);

  server.stop();
  loop.join();
}
