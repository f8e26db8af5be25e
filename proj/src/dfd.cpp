#include "liatm/dfd.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace liatm::dfd {

std::string_view to_keyword(ElementKind kind) {
  switch (kind) {
    case ElementKind::ExternalEntity: return "external_entity";
    case ElementKind::Process: return "process";
    case ElementKind::DataStore: return "data_store";
  }
  return "process";
}

std::optional<ElementKind> kind_from_keyword(std::string_view keyword) {
  if (keyword == "external_entity") return ElementKind::ExternalEntity;
  if (keyword == "process") return ElementKind::Process;
  if (keyword == "data_store") return ElementKind::DataStore;
  return std::nullopt;
}

bool is_identifier(std::string_view id) {
  if (id.empty() || id.front() < 'a' || id.front() > 'z') return false;
  return std::all_of(id.begin() + 1, id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

SyntaxError::SyntaxError(std::size_t line, std::size_t column, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + message),
      line_(line),
      column_(column),
      detail_(message) {}

SemanticError::SemanticError(std::string entity_id, const std::string& message)
    : std::runtime_error("'" + entity_id + "': " + message), entity_id_(std::move(entity_id)) {}

// ---------------------------------------------------------------------------
// Model

Model Model::build(std::string system_name, std::vector<Element> elements,
                   std::vector<DataFlow> flows, std::vector<TrustBoundary> boundaries) {
  std::unordered_set<std::string> ids;
  auto claim = [&ids](const std::string& id) {
    if (!is_identifier(id)) throw SemanticError(id, "invalid identifier");
    if (!ids.insert(id).second) throw SemanticError(id, "duplicate identifier");
  };

  std::unordered_map<std::string, std::size_t> element_pos;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    claim(elements[i].id);
    for (const auto& t : elements[i].tags) {
      if (!is_identifier(t)) throw SemanticError(elements[i].id, "invalid tag '" + t + "'");
    }
    element_pos.emplace(elements[i].id, i);
  }
  for (const auto& f : flows) {
    claim(f.id);
    if (!element_pos.count(f.source))
      throw SemanticError(f.source, "flow '" + f.id + "' references unknown source element");
    if (!element_pos.count(f.target))
      throw SemanticError(f.target, "flow '" + f.id + "' references unknown target element");
  }

  std::vector<std::optional<std::string>> assigned(elements.size());
  for (const auto& b : boundaries) {
    claim(b.id);
    if (b.members.empty()) throw SemanticError(b.id, "boundary has no members");
    for (const auto& m : b.members) {
      auto it = element_pos.find(m);
      if (it == element_pos.end())
        throw SemanticError(m, "boundary '" + b.id + "' references unknown element");
      auto& slot = assigned[it->second];
      if (slot) {
        throw SemanticError(m, *slot == b.id ? "listed twice in boundary '" + b.id + "'"
                                             : "element is in boundaries '" + *slot +
                                                   "' and '" + b.id + "'");
      }
      slot = b.id;
    }
  }
  for (std::size_t i = 0; i < elements.size(); ++i) {
    if (elements[i].boundary && elements[i].boundary != assigned[i])
      throw SemanticError(elements[i].id, "boundary field disagrees with boundary declarations");
    elements[i].boundary = assigned[i];
  }

  Model m;
  m.system_name_ = std::move(system_name);
  m.elements_ = std::move(elements);
  m.flows_ = std::move(flows);
  m.boundaries_ = std::move(boundaries);
  return m;
}

const Element* Model::find_element(std::string_view id) const {
  for (const auto& e : elements_)
    if (e.id == id) return &e;
  return nullptr;
}

const DataFlow* Model::find_flow(std::string_view id) const {
  for (const auto& f : flows_)
    if (f.id == id) return &f;
  return nullptr;
}

std::size_t Model::element_index(std::string_view id) const {
  for (std::size_t i = 0; i < elements_.size(); ++i)
    if (elements_[i].id == id) return i;
  return npos;
}

bool Model::contains_id(std::string_view id) const {
  if (find_element(id) || find_flow(id)) return true;
  return std::any_of(boundaries_.begin(), boundaries_.end(),
                     [&](const TrustBoundary& b) { return b.id == id; });
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { Ident, String, Arrow, Colon, LBracket, RBracket, Comma };

struct Token {
  Tok kind;
  std::string text;
  std::size_t column;
};

std::string_view describe(Tok t) {
  switch (t) {
    case Tok::Ident: return "identifier";
    case Tok::String: return "string";
    case Tok::Arrow: return "'->'";
    case Tok::Colon: return "':'";
    case Tok::LBracket: return "'['";
    case Tok::RBracket: return "']'";
    case Tok::Comma: return "','";
  }
  return "token";
}

bool ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

std::vector<Token> lex_line(std::string_view line, std::size_t line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    const std::size_t col = i + 1;
    if (c == ' ' || c == '\t') {
      ++i;
    } else if (c == '#') {
      break;
    } else if (c == '"') {
      std::string value;
      ++i;
      bool closed = false;
      while (i < line.size()) {
        char d = line[i];
        if (d == '"') {
          closed = true;
          ++i;
          break;
        }
        if (d == '\\') {
          if (i + 1 >= line.size()) throw SyntaxError(line_no, i + 1, "dangling escape");
          char e = line[i + 1];
          switch (e) {
            case '"': value += '"'; break;
            case '\\': value += '\\'; break;
            case 'n': value += '\n'; break;
            case 't': value += '\t'; break;
            case 'r': value += '\r'; break;
            default:
              throw SyntaxError(line_no, i + 1, std::string("unknown escape '\\") + e + "'");
          }
          i += 2;
        } else {
          value += d;
          ++i;
        }
      }
      if (!closed) throw SyntaxError(line_no, col, "unterminated string");
      out.push_back({Tok::String, std::move(value), col});
    } else if (c >= 'a' && c <= 'z') {
      std::size_t j = i + 1;
      while (j < line.size() && ident_char(line[j])) {
        if (line[j] == '-' && j + 1 < line.size() && line[j + 1] == '>') break;
        ++j;
      }
      out.push_back({Tok::Ident, std::string(line.substr(i, j - i)), col});
      i = j;
    } else if (c == '-' && i + 1 < line.size() && line[i + 1] == '>') {
      out.push_back({Tok::Arrow, "->", col});
      i += 2;
    } else if (c == ':') {
      out.push_back({Tok::Colon, ":", col});
      ++i;
    } else if (c == '[') {
      out.push_back({Tok::LBracket, "[", col});
      ++i;
    } else if (c == ']') {
      out.push_back({Tok::RBracket, "]", col});
      ++i;
    } else if (c == ',') {
      out.push_back({Tok::Comma, ",", col});
      ++i;
    } else {
      throw SyntaxError(line_no, col, std::string("unexpected character '") + c + "'");
    }
  }
  return out;
}

class LineParser {
 public:
  LineParser(std::vector<Token> tokens, std::size_t line_no, std::size_t line_len)
      : toks_(std::move(tokens)), line_(line_no), end_col_(line_len + 1) {}

  bool done() const { return pos_ >= toks_.size(); }

  const Token& expect(Tok kind, std::string_view what) {
    if (done())
      throw SyntaxError(line_, end_col_, "expected " + std::string(what) + ", found end of line");
    const Token& t = toks_[pos_];
    if (t.kind != kind)
      throw SyntaxError(line_, t.column,
                        "expected " + std::string(what) + ", found " + std::string(describe(t.kind)));
    ++pos_;
    return t;
  }

  bool accept_keyword(std::string_view kw) {
    if (!done() && toks_[pos_].kind == Tok::Ident && toks_[pos_].text == kw) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::vector<std::string> id_list(std::string_view list_name) {
    expect(Tok::LBracket, "'[' after " + std::string(list_name));
    std::vector<std::string> ids;
    ids.push_back(expect(Tok::Ident, "identifier").text);
    while (!done() && toks_[pos_].kind == Tok::Comma) {
      ++pos_;
      ids.push_back(expect(Tok::Ident, "identifier").text);
    }
    expect(Tok::RBracket, "']'");
    return ids;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw SyntaxError(line_, done() ? end_col_ : toks_[pos_].column, message);
  }

  void expect_end() {
    if (!done())
      throw SyntaxError(line_, toks_[pos_].column,
                        "unexpected " + std::string(describe(toks_[pos_].kind)) +
                            " at end of statement");
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::size_t line_;
  std::size_t end_col_;
};

void append_quoted(std::string& out, std::string_view s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  out += '"';
}

void append_list(std::string& out, const auto& ids) {
  bool first = true;
  for (const auto& id : ids) {
    if (!first) out += ',';
    out += id;
    first = false;
  }
}

}  // namespace

Model parse(std::string_view text) {
  std::optional<std::string> system_name;
  std::vector<Element> elements;
  std::vector<DataFlow> flows;
  std::vector<TrustBoundary> boundaries;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? text.npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    auto tokens = lex_line(line, line_no);
    if (tokens.empty()) continue;
    LineParser p(std::move(tokens), line_no, line.size());
    const Token& head = p.expect(Tok::Ident, "statement keyword");

    if (!system_name) {
      if (head.text != "system")
        throw SyntaxError(line_no, head.column, "document must start with a system statement");
      system_name = p.expect(Tok::String, "system name").text;
      p.expect_end();
      continue;
    }

    if (auto kind = kind_from_keyword(head.text)) {
      Element e;
      e.kind = *kind;
      e.id = p.expect(Tok::Ident, "element id").text;
      e.name = p.expect(Tok::String, "element name").text;
      if (p.accept_keyword("tags")) {
        for (auto& t : p.id_list("tags")) e.tags.insert(std::move(t));
      }
      p.expect_end();
      elements.push_back(std::move(e));
    } else if (head.text == "flow") {
      DataFlow f;
      f.id = p.expect(Tok::Ident, "flow id").text;
      f.source = p.expect(Tok::Ident, "source element id").text;
      p.expect(Tok::Arrow, "'->'");
      f.target = p.expect(Tok::Ident, "target element id").text;
      p.expect(Tok::Colon, "':'");
      f.label = p.expect(Tok::String, "flow label").text;
      f.crosses_boundary = p.accept_keyword("crosses_boundary");
      p.expect_end();
      flows.push_back(std::move(f));
    } else if (head.text == "boundary") {
      TrustBoundary b;
      b.id = p.expect(Tok::Ident, "boundary id").text;
      b.name = p.expect(Tok::String, "boundary name").text;
      if (!p.accept_keyword("contains")) p.fail("expected 'contains['");
      b.members = p.id_list("contains");
      p.expect_end();
      boundaries.push_back(std::move(b));
    } else if (head.text == "system") {
      throw SyntaxError(line_no, head.column, "duplicate system statement");
    } else {
      throw SyntaxError(line_no, head.column, "unknown statement '" + head.text + "'");
    }
  }
  if (!system_name) throw SyntaxError(line_no == 0 ? 1 : line_no, 1, "missing system statement");

  return Model::build(std::move(*system_name), std::move(elements), std::move(flows),
                      std::move(boundaries));
}

std::string serialize(const Model& model) {
  std::string out = "system ";
  append_quoted(out, model.system_name());
  out += '\n';
  for (const auto& e : model.elements()) {
    out += to_keyword(e.kind);
    out += ' ';
    out += e.id;
    out += ' ';
    append_quoted(out, e.name);
    if (!e.tags.empty()) {
      out += " tags[";
      append_list(out, e.tags);
      out += ']';
    }
    out += '\n';
  }
  for (const auto& f : model.flows()) {
    out += "flow " + f.id + ' ' + f.source + " -> " + f.target + " : ";
    append_quoted(out, f.label);
    if (f.crosses_boundary) out += " crosses_boundary";
    out += '\n';
  }
  for (const auto& b : model.boundaries()) {
    out += "boundary " + b.id + ' ';
    append_quoted(out, b.name);
    out += " contains[";
    append_list(out, b.members);
    out += "]\n";
  }
  return out;
}

std::string_view to_string(DiagnosticCode code) {
  switch (code) {
    case DiagnosticCode::IsolatedElement: return "isolated-element";
    case DiagnosticCode::FlagWithinBoundary: return "crosses-boundary-within-boundary";
    case DiagnosticCode::NoLlmElement: return "no-llm-element";
  }
  return "unknown";
}

std::vector<Diagnostic> validate(const Model& model) {
  std::vector<Diagnostic> out;
  std::unordered_set<std::string> connected;
  for (const auto& f : model.flows()) {
    connected.insert(f.source);
    connected.insert(f.target);
  }
  bool any_llm = false;
  for (const auto& e : model.elements()) {
    any_llm = any_llm || e.has_tag(tag::kLlm);
    if (!connected.count(e.id))
      out.push_back({DiagnosticCode::IsolatedElement, e.id, "element has no incident data flow"});
  }
  for (const auto& f : model.flows()) {
    if (!f.crosses_boundary) continue;
    const auto& a = model.find_element(f.source)->boundary;
    const auto& b = model.find_element(f.target)->boundary;
    if (a && a == b)
      out.push_back({DiagnosticCode::FlagWithinBoundary, f.id,
                     "flow is marked crosses_boundary but both endpoints are in boundary '" + *a +
                         "'"});
  }
  if (!any_llm)
    out.push_back({DiagnosticCode::NoLlmElement, "", "no element is tagged 'llm'"});
  return out;
}

}  // namespace liatm::dfd
