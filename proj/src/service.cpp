#include "ug/service.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>

namespace ug {

namespace fs = std::filesystem;

namespace {

Response error_response(int status, std::string code, std::string message) {
  return {status, Json{{"error", Json{{"code", std::move(code)}, {"message", std::move(message)}}}}};
}

std::string new_session_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  std::ostringstream out;
  out << std::hex << rng() << rng();
  return out.str();
}

bool valid_name(std::string_view name) {
  if (name.empty() || name.size() > 128) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string required_string(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

Literal literal_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "literal must be an object");
  Literal lit{required_string(j, "subject"), required_string(j, "relation"), required_string(j, "value"), true};
  if (j.contains("positive")) {
    if (!j["positive"].is_boolean()) throw Error(ErrorCode::ParseError, "'positive' must be a boolean");
    lit.positive = j["positive"].get<bool>();
  }
  return lit;
}

unsigned priority_from_json(const Json& j) {
  if (!j.contains("priority") || !j["priority"].is_number_unsigned())
    throw Error(ErrorCode::ParseError, "'priority' must be a non-negative integer");
  return j["priority"].get<unsigned>();
}

// Either DSL text (`"assert f5: patio temp cool"`) or a structured object.
TeachAction teach_from_json(const Json& request) {
  if (!request.contains("action")) throw Error(ErrorCode::ParseError, "missing 'action'");
  const Json& a = request["action"];
  if (a.is_string()) return parse_teach(a.get<std::string>());
  if (!a.is_object()) throw Error(ErrorCode::ParseError, "'action' must be a string or object");

  const std::string type = required_string(a, "type");
  if (type == "AssertFact") return AssertFact{required_string(a, "id"), literal_from_json(a.value("literal", Json()))};
  if (type == "RetractFact") return RetractFact{required_string(a, "id")};
  if (type == "ReplaceFactValue") return ReplaceFactValue{required_string(a, "id"), required_string(a, "value")};
  if (type == "SetRulePriority") return SetRulePriority{required_string(a, "id"), priority_from_json(a)};
  if (type == "AddUserRule" || type == "EditPreinstalledRule") {
    Rule rule;
    rule.id = required_string(a, "id");
    rule.priority = priority_from_json(a);
    rule.layer = Layer::user;
    if (!a.contains("body") || !a["body"].is_array()) throw Error(ErrorCode::ParseError, "'body' must be an array");
    for (const auto& b : a["body"]) rule.body.push_back(literal_from_json(b));
    rule.head = literal_from_json(a.value("head", Json()));
    if (type == "AddUserRule") return AddUserRule{std::move(rule)};
    return EditPreinstalledRule{std::move(rule)};
  }
  throw Error(ErrorCode::ParseError, "unknown action type '" + type + "'");
}

bool is_error(const TranscriptRecord& r) { return r.payload.contains("error"); }

}  // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (!config_.data_dir.empty()) {
    fs::create_directories(config_.data_dir);
    rehydrate();
  }
}

std::size_t Service::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

Scenario Service::load_scenario(const std::string& name) const {
  return parse_scenario(read_file(config_.scenario_dir / (name + ".ug")));
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void Service::persist(const Session& s) const {
  if (config_.data_dir.empty()) return;
  const fs::path dir = config_.data_dir / s.id;
  fs::create_directories(dir);
  save_log(s.interaction->log(), dir / log_file_name(s.persona));
  write_file(dir / "transcript.jsonl", to_jsonl(s.interaction->transcript()));
  Json meta{{"scenario_name", s.scenario_name}, {"persona", s.persona}, {"state_version", s.state_version}};
  if (const auto& q = s.interaction->last_query())
    meta["last_query"] = Json{{"subject", q->subject}, {"relation", q->relation}};
  else
    meta["last_query"] = nullptr;
  write_file(dir / "session.json", meta.dump() + "\n");
}

void Service::rehydrate() {
  for (const auto& entry : fs::directory_iterator(config_.data_dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "session.json")) continue;
    auto session = std::make_shared<Session>();
    session->id = entry.path().filename().string();
    const Json meta = Json::parse(read_file(entry.path() / "session.json"));
    session->scenario_name = meta.at("scenario_name").get<std::string>();
    session->persona = meta.at("persona").get<std::string>();
    session->state_version = meta.at("state_version").get<std::uint64_t>();

    const Scenario scenario = load_scenario(session->scenario_name);
    MemoryLog log = load_log(entry.path() / log_file_name(session->persona));
    KnowledgeBase kb = replay_teaching(scenario.kb, log);
    session->interaction = std::make_unique<Interaction>(std::move(kb), std::move(log));
    if (!meta.at("last_query").is_null()) {
      const Json& q = meta["last_query"];
      session->interaction->set_last_query(
          DecisionQuery{q.at("subject").get<std::string>(), q.at("relation").get<std::string>()});
    }
    Transcript transcript;
    std::istringstream lines(read_file(entry.path() / "transcript.jsonl"));
    for (std::string line; std::getline(lines, line);) {
      const Json r = Json::parse(line);
      transcript.push_back({r.at("step").get<std::size_t>(), r.at("kind").get<std::string>(), r.at("payload")});
    }
    session->interaction->restore_transcript(std::move(transcript));
    sessions_.emplace(session->id, std::move(session));
  }
}

Response Service::handle_request(std::string_view method, std::string_view path, std::string_view body) {
  Json request = Json::object();
  if (method == "POST" && !body.empty()) {
    request = Json::parse(body, nullptr, false);
    if (request.is_discarded() || !request.is_object())
      return error_response(400, "BadRequest", "request body must be a JSON object");
  }

  std::vector<std::string> parts;
  for (std::size_t i = 0; i < path.size();) {
    if (path[i] == '/') {
      ++i;
      continue;
    }
    std::size_t j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    parts.emplace_back(path.substr(i, j - i));
    i = j;
  }

  try {
    if (parts.size() == 1 && parts[0] == "sessions") {
      if (method != "POST") return error_response(405, "MethodNotAllowed", "use POST");
      return create_session(request);
    }
    if (parts.size() != 3 || parts[0] != "sessions")
      return error_response(404, "NotFound", "no route " + std::string(path));

    auto session = find(parts[1]);
    if (!session) return error_response(404, "UnknownSession", "no session " + parts[1]);
    const std::string& route = parts[2];

    if (method == "GET") {
      std::shared_lock lock(session->mutex);
      if (route == "kb") return get_kb(*session);
      if (route == "transcript") return transcript(*session);
      return error_response(404, "NotFound", "no route " + std::string(path));
    }
    if (method != "POST") return error_response(405, "MethodNotAllowed", "unsupported method");

    std::unique_lock lock(session->mutex);
    if (request.contains("state_version")) {
      if (!request["state_version"].is_number_unsigned() ||
          request["state_version"].get<std::uint64_t>() != session->state_version) {
        Json conflict{{"error", Json{{"code", "StaleStateVersion"}, {"message", "state_version is stale"}}},
                      {"state_version", session->state_version}};
        return {409, std::move(conflict)};
      }
    }
    if (route == "decide") return decide(*session, request);
    if (route == "explain") return explain(*session, request);
    if (route == "teach") return teach(*session, request);
    if (route == "events") return add_event(*session, request);
    return error_response(404, "NotFound", "no route " + std::string(path));
  } catch (const ParseError& e) {
    return {422, Json{{"error", error_json(e)}}};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoFailure) return error_response(500, "IoFailure", e.what());
    return {422, Json{{"error", error_json(e)}}};
  } catch (const std::exception& e) {
    return error_response(500, "Internal", e.what());
  }
}

Response Service::create_session(const Json& request) {
  const std::string name = required_string(request, "scenario_name");
  const std::string persona = required_string(request, "persona");
  if (!valid_name(name) || !fs::exists(config_.scenario_dir / (name + ".ug")))
    return error_response(404, "UnknownScenario", "no scenario '" + name + "'");

  const Scenario scenario = load_scenario(name);
  auto it = scenario.personas.find(persona);
  if (it == scenario.personas.end()) throw Error(ErrorCode::UnknownPersona, "no persona '" + persona + "'");

  auto session = std::make_shared<Session>();
  session->id = new_session_id();
  session->scenario_name = name;
  session->persona = persona;
  session->interaction = std::make_unique<Interaction>(scenario.kb, it->second.log);
  persist(*session);
  Json body{{"session_id", session->id}, {"state_version", session->state_version}};
  {
    std::lock_guard lock(sessions_mutex_);
    sessions_.emplace(session->id, std::move(session));
  }
  return {201, std::move(body)};
}

Response Service::get_kb(const Session& s) const {
  const KnowledgeBase& kb = s.interaction->kb();
  const MemoryLog& log = s.interaction->log();
  Json items = Json::array();
  for (const auto& f : kb.facts()) {
    items.push_back(Json{{"id", f.id},
                         {"kind", "fact"},
                         {"statement", verbalize(f.literal)},
                         {"literal", to_json(f.literal)},
                         {"support", to_json(support_rank(log, f.id))}});
  }
  for (const auto& r : kb.rules()) {
    Json body = Json::array();
    for (const auto& b : r.body) body.push_back(to_json(b));
    items.push_back(Json{{"id", r.id},
                         {"kind", "rule"},
                         {"statement", verbalize(r)},
                         {"layer", layer_name(r.layer)},
                         {"priority", r.priority},
                         {"body", body},
                         {"head", to_json(r.head)},
                         {"support", to_json(support_rank(log, r.id))}});
  }
  Json body{{"state_version", s.state_version}, {"persona", s.persona}, {"scenario_name", s.scenario_name}};
  if (kb.decision())
    body["decision_query"] = Json{{"subject", kb.decision()->subject}, {"relation", kb.decision()->relation}};
  body["items"] = std::move(items);
  return {200, std::move(body)};
}

Response Service::decide(Session& s, const Json& request) {
  std::optional<DecisionQuery> query;
  if (request.contains("subject") || request.contains("relation"))
    query = DecisionQuery{required_string(request, "subject"), required_string(request, "relation")};
  const auto& rec = s.interaction->decide(query);
  persist(s);
  if (is_error(rec)) return {422, Json{{"error", rec.payload["error"]}, {"state_version", s.state_version}}};
  Json body = rec.payload;
  body["state_version"] = s.state_version;
  body["step"] = rec.step;
  return {200, std::move(body)};
}

Response Service::explain(Session& s, const Json& request) {
  const std::string name = required_string(request, "strategy");
  auto strategy = parse_strategy(name);
  if (!strategy) throw Error(ErrorCode::ParseError, "unknown strategy '" + name + "'");
  std::optional<std::string> expected;
  if (request.contains("expected") && !request["expected"].is_null()) expected = required_string(request, "expected");
  std::size_t top_k = 1;
  if (request.contains("top_k")) {
    if (!request["top_k"].is_number_unsigned() || request["top_k"].get<std::size_t>() == 0)
      throw Error(ErrorCode::ParseError, "'top_k' must be a positive integer");
    top_k = request["top_k"].get<std::size_t>();
  }
  const auto& rec = s.interaction->why(*strategy, expected, top_k);
  persist(s);
  if (is_error(rec)) return {422, Json{{"error", rec.payload["error"]}, {"state_version", s.state_version}}};
  return {200, Json{{"state_version", s.state_version}, {"step", rec.step}, {"explanation", rec.payload}}};
}

Response Service::teach(Session& s, const Json& request) {
  const TeachAction action = teach_from_json(request);
  const auto& rec = s.interaction->teach(action);
  if (is_error(rec)) {
    persist(s);
    return {422, Json{{"error", rec.payload["error"]}, {"state_version", s.state_version}}};
  }
  ++s.state_version;
  persist(s);
  Json body = rec.payload;
  body["state_version"] = s.state_version;
  body["step"] = rec.step;
  return {200, std::move(body)};
}

Response Service::add_event(Session& s, const Json& request) {
  const std::string kind_name = required_string(request, "kind");
  auto kind = parse_event_kind(kind_name);
  if (!kind) throw Error(ErrorCode::ParseError, "unknown event kind '" + kind_name + "'");
  std::optional<std::string> note;
  if (request.contains("note") && !request["note"].is_null()) note = required_string(request, "note");
  const auto& rec = s.interaction->event(*kind, required_string(request, "item"), note);
  if (is_error(rec)) {
    persist(s);
    return {422, Json{{"error", rec.payload["error"]}, {"state_version", s.state_version}}};
  }
  ++s.state_version;
  persist(s);
  Json body = rec.payload;
  body["state_version"] = s.state_version;
  body["step"] = rec.step;
  return {200, std::move(body)};
}

Response Service::transcript(const Session& s) const {
  Json records = Json::array();
  for (const auto& r : s.interaction->transcript()) records.push_back(to_json(r));
  return {200, Json{{"state_version", s.state_version}, {"records", std::move(records)}}};
}

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    Response r = service_.handle_request(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Get(".*", handler);
  server_->Post(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_->is_running()) server_->stop();
}

void HttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace ug
