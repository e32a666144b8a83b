#include "ug/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ug/scenario.hpp"
#include "ug/service.hpp"

namespace ug {

namespace fs = std::filesystem;

namespace {

enum class Output { text, records };

struct Options {
  std::string scenario_path;
  std::string persona;
  std::string strategy;
  std::string expecting;
  std::size_t top_k = 1;
  std::string memory_path;
  int port = 8080;
  std::string scenario_dir;
  std::string data_dir = "ug-data";
  std::string host = "127.0.0.1";
  Output output = Output::text;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Scenario load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

const Persona& persona_of(const Scenario& s, const std::string& name) {
  auto it = s.personas.find(name);
  if (it == s.personas.end()) throw Error(ErrorCode::UnknownPersona, "no persona '" + name + "'");
  return it->second;
}

bool failed(const TranscriptRecord& r) { return r.payload.contains("error"); }

void print_error(std::ostream& err, const Json& error) {
  err << "error: " << error.value("code", "") << ": " << error.value("message", "") << '\n';
}

void print_text(std::ostream& out, std::ostream& err, const TranscriptRecord& r) {
  const Json& p = r.payload;
  if (failed(r)) {
    print_error(err, p["error"]);
    return;
  }
  if (r.kind == "decide") {
    out << "decision: " << p["decision"]["text"].get<std::string>() << '\n';
    out << "  rules used: ";
    for (const auto& id : p["used_rules"]) out << id.get<std::string>() << ' ';
    out << "\n  facts used: ";
    for (const auto& id : p["used_facts"]) out << id.get<std::string>() << ' ';
    out << '\n';
  } else if (r.kind == "why") {
    out << p["rendered"].get<std::string>() << '\n';
    std::size_t i = 0;
    for (const auto& e : p["ranked"]) {
      out << "  " << ++i << ". " << e["id"].get<std::string>() << "  " << e["statement"].get<std::string>();
      if (!e["support"].is_null()) out << "  [" << e["support"]["rank"].get<int>() << "/3]";
      if (!e["reason"].get<std::string>().empty()) out << "  (" << e["reason"].get<std::string>() << ')';
      out << '\n';
    }
  } else {
    out << r.kind << ' ' << p["item"].get<std::string>() << ": rank " << p["rank"]["rank"].get<int>()
        << (p["rank"]["contested"].get<bool>() ? " (contested)" : "") << '\n';
  }
}

int emit(const Options& o, std::ostream& out, std::ostream& err, const TranscriptRecord& r) {
  if (o.output == Output::records)
    out << to_json(r).dump() << '\n';
  else
    print_text(out, err, r);
  return failed(r) ? exit_runtime : exit_ok;
}

int cmd_check(const Options& o, std::ostream& out) {
  const Scenario s = load(o.scenario_path);
  if (o.output == Output::records) {
    Json payload{{"ok", true},
                 {"facts", s.kb.facts().size()},
                 {"rules", s.kb.rules().size()},
                 {"personas", s.personas.size()},
                 {"steps", s.script.size()}};
    out << to_json(TranscriptRecord{1, "check", payload}).dump() << '\n';
  } else {
    out << o.scenario_path << ": ok (" << s.kb.facts().size() << " facts, " << s.kb.rules().size()
        << " rules, " << s.personas.size() << " personas)\n";
  }
  return exit_ok;
}

MemoryLog memory_for(const Scenario& s, const Options& o) {
  if (!o.memory_path.empty() && fs::exists(o.memory_path)) {
    std::ifstream in(o.memory_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + o.memory_path);
    return load_log(in, o.persona);
  }
  if (o.persona.empty()) return MemoryLog("anonymous");
  return persona_of(s, o.persona).log;
}

int cmd_decide(const Options& o, std::ostream& out, std::ostream& err) {
  const Scenario s = load(o.scenario_path);
  MemoryLog log = memory_for(s, o);
  Interaction session(replay_teaching(s.kb, log), std::move(log));
  return emit(o, out, err, session.decide());
}

int cmd_why(const Options& o, std::ostream& out, std::ostream& err) {
  const Scenario s = load(o.scenario_path);
  auto strategy = parse_strategy(o.strategy);
  MemoryLog log = memory_for(s, o);
  Interaction session(replay_teaching(s.kb, log), std::move(log));
  const TranscriptRecord decided = session.decide();
  if (o.output == Output::records) out << to_json(decided).dump() << '\n';
  if (failed(decided) && *strategy != Strategy::contrastive) {
    print_error(err, decided.payload["error"]);
    return exit_runtime;
  }
  std::optional<std::string> expecting;
  if (!o.expecting.empty()) expecting = o.expecting;
  return emit(o, out, err, session.why(*strategy, expecting, o.top_k));
}

int cmd_compare(const Options& o, std::ostream& out, std::ostream& err) {
  const Scenario s = load(o.scenario_path);
  std::vector<Strategy> strategies{Strategy::last_step, Strategy::most_specific_rule, Strategy::most_used_fact,
                                   Strategy::extrospective};
  if (!o.expecting.empty()) strategies.push_back(Strategy::contrastive);

  std::vector<Json> rows;
  int code = exit_ok;
  for (const auto& [name, persona] : s.personas) {
    Interaction session(s.kb, persona.log);
    const TranscriptRecord decided = session.decide();
    for (Strategy st : strategies) {
      std::optional<std::string> expecting;
      if (st == Strategy::contrastive) expecting = o.expecting;
      const TranscriptRecord r = session.why(st, expecting, o.top_k);
      Json row{{"persona", name}, {"strategy", std::string(strategy_name(st))}};
      row["decision"] = failed(decided) ? Json(nullptr) : decided.payload["decision"]["text"];
      if (failed(r)) {
        row["top"] = nullptr;
        row["support"] = nullptr;
        row["rendered"] = nullptr;
        row["error"] = r.payload["error"];
        code = exit_runtime;
      } else {
        row["top"] = r.payload["top"];
        const Json& ranked = r.payload["ranked"];
        row["support"] = ranked.empty() || ranked[0]["support"].is_null() ? Json(nullptr)
                                                                           : ranked[0]["support"]["rank"];
        row["rendered"] = r.payload["rendered"];
      }
      rows.push_back(std::move(row));
    }
  }

  if (o.output == Output::records) {
    std::size_t step = 0;
    for (auto& row : rows) out << to_json(TranscriptRecord{++step, "compare", std::move(row)}).dump() << '\n';
    return code;
  }
  out << std::left << std::setw(10) << "persona" << std::setw(20) << "strategy" << std::setw(32) << "decision"
      << std::setw(7) << "top" << std::setw(9) << "support" << "explanation\n";
  for (const auto& row : rows) {
    auto cell = [](const Json& j) { return j.is_null() ? std::string("-") : j.is_string() ? j.get<std::string>() : j.dump(); };
    out << std::setw(10) << cell(row["persona"]) << std::setw(20) << cell(row["strategy"]) << std::setw(32)
        << cell(row["decision"]) << std::setw(7) << cell(row["top"]) << std::setw(9) << cell(row["support"]);
    if (row.contains("error"))
      out << "error: " << row["error"]["code"].get<std::string>();
    else
      out << cell(row["rendered"]);
    out << '\n';
  }
  if (code != exit_ok) err << "some explanations failed\n";
  return code;
}

int cmd_repl(const Options& o, std::istream& in, std::ostream& out, std::ostream& err) {
  const Scenario s = load(o.scenario_path);
  MemoryLog log = memory_for(s, o);
  Interaction session(replay_teaching(s.kb, log), std::move(log));
  save_log(session.log(), fs::path(o.memory_path));

  const bool prompt = o.output == Output::text;
  if (prompt) out << "> " << std::flush;
  for (std::string line; std::getline(in, line); ) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      if (prompt) out << "> " << std::flush;
      continue;
    }
    line = line.substr(first);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line == "quit" || line == "exit") break;
    try {
      emit(o, out, err, session.run(parse_step(line)));
      save_log(session.log(), fs::path(o.memory_path));
    } catch (const ParseError& e) {
      err << "error: " << e.what() << '\n';
    }
    if (prompt) out << "> " << std::flush;
  }
  return exit_ok;
}

int cmd_serve(const Options& o, std::ostream& err) {
  std::string dir = o.scenario_dir;
  if (dir.empty())
    if (const char* env = std::getenv("UG_SCENARIO_DIR")) dir = env;
  if (dir.empty()) throw UsageError("--scenario-dir or UG_SCENARIO_DIR is required");
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoFailure, "not a directory: " + dir);

  Service service(ServiceConfig{dir, o.data_dir});
  HttpServer server(service);
  const int port = server.bind(o.host, o.port);
  if (port < 0) throw Error(ErrorCode::IoFailure, "cannot bind " + o.host + ":" + std::to_string(o.port));
  err << "listening on " << o.host << ':' << port << '\n';
  return server.listen() ? exit_ok : exit_runtime;
}

}  // namespace

int execute(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Explainable defeasible decisions with per-user support memory", "ug"};
  app.require_subcommand(1);
  Options o;

  const std::map<std::string, Output> outputs{{"text", Output::text}, {"records", Output::records}};
  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--output", o.output, "text | records")->transform(CLI::CheckedTransformer(outputs));
  };
  auto add_file = [&](CLI::App* sub) {
    sub->add_option("file", o.scenario_path, "scenario file (.ug)")->required();
  };
  std::vector<std::string> strategy_names;
  for (Strategy st : {Strategy::last_step, Strategy::most_specific_rule, Strategy::most_used_fact,
                      Strategy::extrospective, Strategy::contrastive})
    strategy_names.emplace_back(strategy_name(st));

  auto* check = app.add_subcommand("check", "validate a scenario");
  add_file(check);
  add_output(check);

  auto* decide = app.add_subcommand("decide", "decide the scenario's decision query");
  add_file(decide);
  decide->add_option("--persona", o.persona);
  add_output(decide);

  auto* why = app.add_subcommand("why", "explain the decision to one persona");
  add_file(why);
  why->add_option("--persona", o.persona)->required();
  why->add_option("--strategy", o.strategy)->required()->check(CLI::IsMember(strategy_names));
  auto* why_expecting = why->add_option("--expecting", o.expecting, "value the user expected (contrastive)");
  why->add_option("--top", o.top_k)->check(CLI::PositiveNumber);
  why->add_option("--memory", o.memory_path, "memory log to use instead of the persona's");
  add_output(why);

  auto* compare = app.add_subcommand("compare", "all personas x all strategies");
  add_file(compare);
  compare->add_option("--expecting", o.expecting, "also run contrastive against this value");
  compare->add_option("--top", o.top_k)->check(CLI::PositiveNumber);
  add_output(compare);

  auto* repl = app.add_subcommand("repl", "interactive decide / why / teach / event loop");
  add_file(repl);
  repl->add_option("--persona", o.persona)->required();
  repl->add_option("--memory", o.memory_path)->required();
  add_output(repl);

  auto* serve = app.add_subcommand("serve", "start the HTTP service");
  serve->add_option("--port", o.port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", o.host);
  serve->add_option("--scenario-dir", o.scenario_dir);
  serve->add_option("--data-dir", o.data_dir);
  add_output(serve);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (why->parsed()) {
      const bool contrastive = o.strategy == "contrastive";
      if (contrastive && why_expecting->count() == 0) throw UsageError("--strategy contrastive requires --expecting");
      if (!contrastive && why_expecting->count() > 0) throw UsageError("--expecting only applies to contrastive");
    }
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << '\n' << "run 'ug --help' for usage\n";
    return exit_usage;
  } catch (const UsageError& e) {
    err << "usage: " << e.what() << '\n';
    return exit_usage;
  }

  try {
    if (check->parsed()) return cmd_check(o, out);
    if (decide->parsed()) return cmd_decide(o, out, err);
    if (why->parsed()) return cmd_why(o, out, err);
    if (compare->parsed()) return cmd_compare(o, out, err);
    if (repl->parsed()) return cmd_repl(o, in, out, err);
    if (serve->parsed()) return cmd_serve(o, err);
  } catch (const ParseError& e) {
    err << o.scenario_path << ':' << e.line() << ':' << e.column() << ": " << e.message() << '\n';
    if (!e.snippet().empty()) err << "  " << e.snippet() << '\n';
    if (o.output == Output::records)
      out << to_json(TranscriptRecord{1, "check", Json{{"ok", false}, {"error", error_json(e)}}}).dump() << '\n';
    return exit_invalid;
  } catch (const UsageError& e) {
    err << "usage: " << e.what() << '\n';
    return exit_usage;
  } catch (const Error& e) {
    err << "error: " << code_name(e.code()) << ": " << e.what() << '\n';
    return exit_runtime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_usage;
}

}  // namespace ug
