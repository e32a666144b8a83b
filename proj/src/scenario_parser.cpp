#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "ug/scenario.hpp"

namespace ug {

ParseError::ParseError(std::size_t line, std::size_t column, std::string message,
                       std::string snippet, ErrorCode cause)
    : Error(cause, std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column),
      message_(std::move(message)),
      snippet_(std::move(snippet)),
      cause_(cause) {}

namespace {

enum class Tok { ident, integer, colon, amp, arrow, string, end };

struct Token {
  Tok type = Tok::end;
  std::string text;
  std::size_t column = 0;  // 1-based
};

std::string_view tok_name(Tok t) {
  switch (t) {
    case Tok::ident: return "identifier";
    case Tok::integer: return "integer";
    case Tok::colon: return "':'";
    case Tok::amp: return "'&'";
    case Tok::arrow: return "'=>'";
    case Tok::string: return "string";
    case Tok::end: return "end of line";
  }
  return "?";
}

struct Position {
  std::size_t line = 0;
  std::size_t column = 0;
};

class LineCursor {
 public:
  LineCursor(std::string_view line, std::size_t lineno) : line_(line), lineno_(lineno) {
    tokenize();
  }

  [[noreturn]] void fail(const Token& at, const std::string& message,
                         ErrorCode cause = ErrorCode::ParseError) const {
    throw ParseError(lineno_, at.column, message, std::string(line_), cause);
  }
  [[noreturn]] void fail(const std::string& message) const { fail(peek(), message); }

  const Token& peek() const { return tokens_[pos_]; }
  bool at_end() const { return peek().type == Tok::end; }
  bool at(Tok t) const { return peek().type == t; }
  bool at_word(std::string_view w) const { return at(Tok::ident) && peek().text == w; }

  const Token& next() {
    const Token& t = tokens_[pos_];
    if (t.type != Tok::end) ++pos_;
    return t;
  }

  const Token& expect(Tok t, std::string_view what = {}) {
    if (!at(t)) {
      fail("expected " + std::string(what.empty() ? tok_name(t) : what) + ", found " +
           describe(peek()));
    }
    return next();
  }

  void expect_word(std::string_view w) {
    if (!at_word(w)) fail("expected '" + std::string(w) + "', found " + describe(peek()));
    next();
  }

  void expect_end() {
    if (!at_end()) fail("unexpected " + describe(peek()));
  }

  Position position(const Token& t) const { return {lineno_, t.column}; }
  std::size_t lineno() const { return lineno_; }
  std::string_view text() const { return line_; }

  static std::string describe(const Token& t) {
    if (t.type == Tok::end) return "end of line";
    return std::string(tok_name(t.type)) + " '" + t.text + "'";
  }

 private:
  void tokenize() {
    std::size_t i = 0;
    const std::size_t n = line_.size();
    auto is_alpha = [](unsigned char c) { return std::isalpha(c) || c == '_'; };
    auto is_digit = [](unsigned char c) { return c >= '0' && c <= '9'; };
    while (i < n) {
      const unsigned char c = static_cast<unsigned char>(line_[i]);
      if (c == ' ' || c == '\t' || c == '\r') {
        ++i;
        continue;
      }
      Token t;
      t.column = i + 1;
      if (c == '#') break;
      if (is_alpha(c)) {
        std::size_t j = i;
        while (j < n && (is_alpha(line_[j]) || is_digit(line_[j]))) ++j;
        t.type = Tok::ident;
        t.text = line_.substr(i, j - i);
        i = j;
      } else if (is_digit(c) || (c == '-' && i + 1 < n && is_digit(line_[i + 1]))) {
        std::size_t j = i + 1;
        while (j < n && is_digit(line_[j])) ++j;
        t.type = Tok::integer;
        t.text = line_.substr(i, j - i);
        i = j;
      } else if (c == ':') {
        t.type = Tok::colon;
        t.text = ":";
        ++i;
      } else if (c == '&') {
        t.type = Tok::amp;
        t.text = "&";
        ++i;
      } else if (c == '=' && i + 1 < n && line_[i + 1] == '>') {
        t.type = Tok::arrow;
        t.text = "=>";
        i += 2;
      } else if (c == '"') {
        t.type = Tok::string;
        std::size_t j = i + 1;
        bool closed = false;
        while (j < n) {
          char d = line_[j];
          if (d == '"') {
            closed = true;
            ++j;
            break;
          }
          if (d == '\\') {
            if (j + 1 >= n) break;
            char e = line_[j + 1];
            if (e == 'n') t.text += '\n';
            else if (e == 't') t.text += '\t';
            else if (e == '"' || e == '\\') t.text += e;
            else throw ParseError(lineno_, j + 1, "unknown escape sequence", std::string(line_));
            j += 2;
            continue;
          }
          t.text += d;
          ++j;
        }
        if (!closed) throw ParseError(lineno_, t.column, "unterminated string", std::string(line_));
        i = j;
      } else {
        throw ParseError(lineno_, t.column,
                         "unexpected character '" + std::string(1, static_cast<char>(c)) + "'",
                         std::string(line_));
      }
      tokens_.push_back(std::move(t));
    }
    Token end;
    end.column = line_.size() + 1;
    while (end.column > 1 && (line_[end.column - 2] == '\r')) --end.column;
    tokens_.push_back(end);
  }

  std::string_view line_;
  std::size_t lineno_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

std::string parse_ident(LineCursor& cur, std::string_view what) {
  return cur.expect(Tok::ident, what).text;
}

unsigned parse_unsigned(LineCursor& cur, std::string_view what) {
  const Token& t = cur.peek();
  if (t.type != Tok::integer) cur.fail(std::string("expected ") + std::string(what) + ", found " + LineCursor::describe(t));
  if (t.text.front() == '-') cur.fail(t, std::string(what) + " must be a non-negative integer");
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
  if (ec != std::errc() || ptr != t.text.data() + t.text.size()) cur.fail(t, std::string(what) + " is out of range");
  cur.next();
  return value;
}

Literal parse_literal(LineCursor& cur) {
  // `not` is a polarity marker only when three identifiers follow it.
  std::vector<const Token*> words;
  LineCursor probe = cur;
  while (probe.at(Tok::ident) && words.size() < 4) words.push_back(&probe.next());
  Literal lit;
  if (words.size() == 4 && words[0]->text == "not") {
    cur.next();
    lit.positive = false;
  }
  lit.subject = parse_ident(cur, "subject");
  lit.relation = parse_ident(cur, "relation");
  lit.value = parse_ident(cur, "value");
  return lit;
}

struct RuleText {
  std::string id;
  unsigned priority = 0;
  std::vector<Literal> body;
  Literal head;
};

// `<id> prio <n>` [layer ...] `: body => head`; the caller handles `layer`.
void parse_rule_body(LineCursor& cur, RuleText& r) {
  cur.expect(Tok::colon);
  r.body.push_back(parse_literal(cur));
  while (cur.at(Tok::amp)) {
    cur.next();
    r.body.push_back(parse_literal(cur));
  }
  cur.expect(Tok::arrow);
  r.head = parse_literal(cur);
  cur.expect_end();
}

std::optional<std::string> parse_optional_note(LineCursor& cur) {
  if (cur.at(Tok::string)) return cur.next().text;
  return std::nullopt;
}

TeachAction parse_teach_tokens(LineCursor& cur) {
  const Token& verb = cur.expect(Tok::ident, "teaching action");
  if (verb.text == "assert") {
    AssertFact a;
    a.id = parse_ident(cur, "fact id");
    cur.expect(Tok::colon);
    a.literal = parse_literal(cur);
    cur.expect_end();
    return a;
  }
  if (verb.text == "retract") {
    RetractFact a{parse_ident(cur, "fact id")};
    cur.expect_end();
    return a;
  }
  if (verb.text == "replace") {
    ReplaceFactValue a;
    a.id = parse_ident(cur, "fact id");
    a.value = parse_ident(cur, "value");
    cur.expect_end();
    return a;
  }
  if (verb.text == "add" || verb.text == "edit") {
    RuleText r;
    r.id = parse_ident(cur, "rule id");
    cur.expect_word("prio");
    r.priority = parse_unsigned(cur, "priority");
    parse_rule_body(cur, r);
    Rule rule{r.id, r.body, r.head, r.priority, Layer::user};
    if (verb.text == "add") return AddUserRule{rule};
    return EditPreinstalledRule{rule};
  }
  if (verb.text == "priority") {
    SetRulePriority a;
    a.id = parse_ident(cur, "rule id");
    a.priority = parse_unsigned(cur, "priority");
    cur.expect_end();
    return a;
  }
  cur.fail(verb, "unknown teaching action '" + verb.text + "'");
}

ScriptStep parse_step_tokens(LineCursor& cur) {
  const Token& verb = cur.expect(Tok::ident, "step kind");
  if (verb.text == "decide") {
    cur.expect_end();
    return step::Decide{};
  }
  if (verb.text == "why") {
    step::Why w;
    const Token& s = cur.expect(Tok::ident, "strategy");
    auto strategy = parse_strategy(s.text);
    if (!strategy) cur.fail(s, "unknown strategy '" + s.text + "'");
    w.strategy = *strategy;
    if (cur.at_word("expecting")) {
      const Token& kw = cur.next();
      w.expecting = parse_ident(cur, "expected value");
      if (w.strategy != Strategy::contrastive) cur.fail(kw, "'expecting' applies only to contrastive");
    } else if (w.strategy == Strategy::contrastive) {
      cur.fail("contrastive needs 'expecting <value>'");
    }
    if (cur.at_word("top")) {
      cur.next();
      const Token& k = cur.peek();
      w.top_k = parse_unsigned(cur, "top count");
      if (w.top_k == 0) cur.fail(k, "top count must be positive");
    }
    cur.expect_end();
    return w;
  }
  if (verb.text == "teach") return step::Teach{parse_teach_tokens(cur)};
  if (verb.text == "event") {
    step::Event e;
    const Token& k = cur.expect(Tok::ident, "event kind");
    auto kind = parse_event_kind(k.text);
    if (!kind) cur.fail(k, "unknown event kind '" + k.text + "'");
    e.kind = *kind;
    e.item = parse_ident(cur, "statement id");
    e.note = parse_optional_note(cur);
    cur.expect_end();
    return e;
  }
  cur.fail(verb, "unknown step '" + verb.text + "'");
}

struct Located {
  Position pos;
  std::string snippet;
};

struct PendingFact {
  Fact fact;
  Located at;
};

struct PendingRule {
  Rule rule;
  Located at;
};

struct PendingEvent {
  std::string persona;
  step::Event event;
  Located kind_at;
  Located item_at;
};

struct PendingStep {
  ScriptStep step;
  Located at;
};

[[noreturn]] void fail_at(const Located& at, const std::string& message, ErrorCode cause) {
  throw ParseError(at.pos.line, at.pos.column, message, at.snippet, cause);
}

Located locate(const LineCursor& cur, const Token& t) {
  return {cur.position(t), std::string(cur.text())};
}

// Ids a script step needs to exist beforehand, and ids it brings into being.
void step_items(const ScriptStep& s, std::vector<std::string>& needs,
                std::vector<std::string>& creates) {
  if (auto* t = std::get_if<step::Teach>(&s)) {
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, AssertFact>) creates.push_back(a.id);
          else if constexpr (std::is_same_v<T, AddUserRule>) creates.push_back(a.rule.id);
          else if constexpr (std::is_same_v<T, EditPreinstalledRule>) needs.push_back(a.rule.id);
          else needs.push_back(a.id);
        },
        t->action);
  } else if (auto* e = std::get_if<step::Event>(&s)) {
    needs.push_back(e->item);
  }
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  std::vector<std::string> functional;
  std::optional<std::pair<DecisionQuery, Located>> decision;
  std::vector<PendingFact> facts;
  std::vector<PendingRule> rules;
  std::map<std::string, Persona> personas;
  std::vector<PendingEvent> events;
  std::vector<PendingStep> steps;
  std::set<std::string> rule_ids;

  std::optional<std::string> open_persona;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++lineno;
    start = end + 1;

    LineCursor cur(line, lineno);
    if (cur.at_end()) {
      if (end == text.size()) break;
      continue;
    }
    const bool indented = line.front() == ' ' || line.front() == '\t';
    if (indented) {
      if (!open_persona) cur.fail("indented line outside a persona block");
      const Token& kw = cur.expect(Tok::ident, "'event' or 'attr'");
      if (kw.text == "event") {
        PendingEvent pe;
        pe.persona = *open_persona;
        const Token& k = cur.expect(Tok::ident, "event kind");
        auto kind = parse_event_kind(k.text);
        if (!kind) cur.fail(k, "unknown event kind '" + k.text + "'");
        pe.kind_at = locate(cur, k);
        pe.event.kind = *kind;
        const Token& item = cur.expect(Tok::ident, "statement id");
        pe.item_at = locate(cur, item);
        pe.event.item = item.text;
        pe.event.note = parse_optional_note(cur);
        cur.expect_end();
        events.push_back(std::move(pe));
      } else if (kw.text == "attr") {
        const Token& key = cur.expect(Tok::ident, "attribute name");
        if (!cur.at(Tok::ident) && !cur.at(Tok::string)) cur.fail("expected attribute value");
        std::string value = cur.next().text;
        cur.expect_end();
        auto& attrs = personas[*open_persona].attributes;
        if (!attrs.emplace(key.text, std::move(value)).second)
          cur.fail(key, "duplicate attribute '" + key.text + "'", ErrorCode::DuplicateId);
      } else {
        cur.fail(kw, "expected 'event' or 'attr', found '" + kw.text + "'");
      }
      if (end == text.size()) break;
      continue;
    }

    open_persona.reset();
    const Token& kw = cur.expect(Tok::ident, "statement keyword");
    if (kw.text == "functional") {
      functional.push_back(parse_ident(cur, "relation"));
      cur.expect_end();
    } else if (kw.text == "fact") {
      const Token& id = cur.expect(Tok::ident, "fact id");
      PendingFact pf{{id.text, {}}, locate(cur, id)};
      cur.expect(Tok::colon);
      pf.fact.literal = parse_literal(cur);
      cur.expect_end();
      facts.push_back(std::move(pf));
    } else if (kw.text == "rule") {
      const Token& id = cur.expect(Tok::ident, "rule id");
      PendingRule pr;
      pr.at = locate(cur, id);
      RuleText r;
      r.id = id.text;
      cur.expect_word("prio");
      r.priority = parse_unsigned(cur, "priority");
      cur.expect_word("layer");
      const Token& layer_tok = cur.expect(Tok::ident, "layer");
      auto layer = parse_layer(layer_tok.text);
      if (!layer) cur.fail(layer_tok, "unknown layer '" + layer_tok.text + "'");
      parse_rule_body(cur, r);
      if (!rule_ids.insert(r.id).second)
        fail_at(pr.at, "duplicate rule id '" + r.id + "'", ErrorCode::DuplicateId);
      pr.rule = Rule{r.id, r.body, r.head, r.priority, *layer};
      rules.push_back(std::move(pr));
    } else if (kw.text == "decision") {
      if (decision) cur.fail(kw, "decision declared twice");
      cur.expect(Tok::colon);
      DecisionQuery q;
      q.subject = parse_ident(cur, "subject");
      q.relation = parse_ident(cur, "relation");
      cur.expect_end();
      decision.emplace(std::move(q), locate(cur, kw));
    } else if (kw.text == "persona") {
      const Token& id = cur.expect(Tok::ident, "persona name");
      cur.expect(Tok::colon);
      cur.expect_end();
      if (personas.contains(id.text))
        cur.fail(id, "persona '" + id.text + "' declared twice", ErrorCode::DuplicateId);
      personas[id.text].log = MemoryLog(id.text);
      open_persona = id.text;
    } else if (kw.text == "step") {
      const Token& first = cur.peek();
      PendingStep ps{parse_step_tokens(cur), locate(cur, first)};
      steps.push_back(std::move(ps));
    } else {
      cur.fail(kw, "unknown statement '" + kw.text + "'");
    }
    if (end == text.size()) break;
  }

  // Semantic pass: order-independent, so functional declarations apply to
  // every fact regardless of where they appear.
  Scenario s;
  for (auto& rel : functional) s.kb = with_functional(s.kb, rel);
  std::map<std::string, Located> where;
  for (auto& pf : facts) {
    try {
      s.kb = add_fact(s.kb, pf.fact);
    } catch (const Error& e) {
      fail_at(pf.at, e.what(), e.code());
    }
    where.emplace(pf.fact.id, pf.at);
  }
  for (auto& pr : rules) {
    try {
      s.kb = upsert_rule(s.kb, pr.rule, Actor::system);
    } catch (const Error& e) {
      fail_at(pr.at, e.what(), e.code());
    }
    where.emplace(pr.rule.id, pr.at);
  }
  if (decision) s.kb = with_decision(s.kb, decision->first);

  auto report = validate_kb(s.kb);
  if (!report.ok()) {
    const Violation& v = report.violations.front();
    Located at{{lineno, 1}, ""};
    if (!v.items.empty() && where.contains(v.items.front())) at = where.at(v.items.front());
    else if (decision) at = decision->second;
    fail_at(at, std::string(violation_name(v.kind)) + ": " + v.message, ErrorCode::InvalidKB);
  }

  for (auto& pe : events) {
    Persona& p = personas[pe.persona];
    SupportEvent ev{p.log.next_seq(), pe.persona, pe.event.item, pe.event.kind, pe.event.note};
    try {
      p.log = record_event(p.log, std::move(ev), s.kb);
    } catch (const Error& e) {
      fail_at(e.code() == ErrorCode::KindMismatch || e.code() == ErrorCode::UnknownItem ? pe.item_at
                                                                                         : pe.kind_at,
              e.what(), e.code());
    }
  }
  s.personas = std::move(personas);

  std::set<std::string> known;
  for (const auto& f : s.kb.facts()) known.insert(f.id);
  for (const auto& r : s.kb.rules()) known.insert(r.id);
  for (auto& ps : steps) {
    std::vector<std::string> needs, creates;
    step_items(ps.step, needs, creates);
    for (const auto& id : needs) {
      if (!known.contains(id))
        fail_at(ps.at, "step refers to unknown statement '" + id + "'", ErrorCode::UnknownItem);
    }
    known.insert(creates.begin(), creates.end());
    s.script.push_back(std::move(ps.step));
  }
  return s;
}

TeachAction parse_teach(std::string_view text) {
  LineCursor cur(text, 1);
  return parse_teach_tokens(cur);
}

ScriptStep parse_step(std::string_view text) {
  LineCursor cur(text, 1);
  return parse_step_tokens(cur);
}

}  // namespace ug
