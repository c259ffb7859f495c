#include "spws/parser.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <set>

#include "spws/error.hpp"

namespace spws {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Recursive-descent parser over one line of text.
class ExprParser {
public:
  ExprParser(const std::string& text, const std::map<std::string, Format>& formats)
      : text_(text), formats_(formats) {}

  ParsedAssignment parse() {
    ParsedAssignment out;
    out.lhs = access();
    // "+=" into a fresh result means the same as "=".
    if (!accept("+=")) expect("=");
    out.rhs = sum();
    skip();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    out.tensors = order_;
    return out;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, 1, pos_ + 1); }

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(const std::string& tok) {
    skip();
    if (text_.compare(pos_, tok.size(), tok) == 0) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void expect(const std::string& tok) {
    if (!accept(tok)) fail("expected '" + tok + "'");
  }

  std::string ident() {
    skip();
    if (pos_ >= text_.size() || !ident_start(text_[pos_])) fail("expected an identifier");
    const std::size_t b = pos_;
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    return text_.substr(b, pos_ - b);
  }

  Access access() {
    skip();
    const std::size_t col = pos_;
    const std::string name = ident();
    IndexVars vars;
    if (accept("(")) {
      if (!accept(")")) {
        do vars.emplace_back(ident());
        while (accept(","));
        expect(")");
      }
    }
    const int order = static_cast<int>(vars.size());
    auto [it, inserted] = orders_.emplace(name, order);
    if (!inserted && it->second != order) {
      pos_ = col;
      fail("tensor " + name + " used with " + std::to_string(order) + " indices and with " +
           std::to_string(it->second));
    }
    if (inserted) order_.push_back(name);
    TensorVar t;
    t.name = name;
    t.order = order;
    const auto f = formats_.find(name);
    t.format = f == formats_.end() ? default_format(order) : f->second;
    if (t.format.order() != order) {
      pos_ = col;
      fail("format " + t.format.name() + " does not fit tensor " + name + " of order " + std::to_string(order));
    }
    return {t, vars};
  }

  Expr sum() {
    Expr e = product();
    while (accept("+")) e = e + product();
    return e;
  }

  Expr product() {
    Expr e = factor();
    while (accept("*")) e = e * factor();
    return e;
  }

  Expr factor() {
    skip();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    if (accept("(")) {
      Expr e = sum();
      expect(")");
      return e;
    }
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-') {
      const char* b = text_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(b, &end);
      if (end == b) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - b);
      return Expr(v);
    }
    return Expr(access());
  }

  const std::string& text_;
  const std::map<std::string, Format>& formats_;
  std::size_t pos_ = 0;
  std::map<std::string, int> orders_;
  std::vector<std::string> order_;
};

} // namespace

Format default_format(int order) {
  if (order <= 1) return formats::dense(order);
  if (order == 2) return formats::csr();
  return formats::csf(order);
}

ParsedAssignment parse_assignment(const std::string& text, const std::map<std::string, Format>& formats) {
  return ExprParser(text, formats).parse();
}

IndexVars parse_index_list(const std::string& text) {
  std::string t;
  for (char c : text) {
    if (c != '(' && c != ')' && c != '{' && c != '}' && !std::isspace(static_cast<unsigned char>(c))) t += c;
  }
  IndexVars out;
  if (t.empty()) return out;
  if (t.find(',') == std::string::npos) {
    for (char c : t) {
      if (!ident_start(c)) throw ParseError("bad index variable '" + std::string(1, c) + "'", 1, 1);
      out.emplace_back(std::string(1, c));
    }
    return out;
  }
  std::size_t b = 0;
  while (b <= t.size()) {
    std::size_t e = t.find(',', b);
    if (e == std::string::npos) e = t.size();
    const std::string name = t.substr(b, e - b);
    if (name.empty() || !ident_start(name[0])) throw ParseError("bad index variable '" + name + "'", 1, b + 1);
    out.emplace_back(name);
    b = e + 1;
  }
  return out;
}

std::vector<ScheduleCommand> parse_schedule(const std::string& script) {
  std::vector<ScheduleCommand> out;
  std::size_t line = 1;
  std::size_t line_start = 0;
  std::size_t i = 0;
  const auto col = [&](std::size_t at) { return at - line_start + 1; };
  while (i < script.size()) {
    const char c = script[i];
    if (c == '\n') {
      ++line;
      line_start = ++i;
      continue;
    }
    if (c == '#') {
      while (i < script.size() && script[i] != '\n') ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)) || c == ';' || c == '.') {
      ++i;
      continue;
    }
    if (!ident_start(c)) throw ParseError("unexpected '" + std::string(1, c) + "' in schedule", line, col(i));
    ScheduleCommand cmd;
    cmd.line = line;
    cmd.column = col(i);
    while (i < script.size() && ident_char(script[i])) cmd.name += script[i++];
    while (i < script.size() && (script[i] == ' ' || script[i] == '\t')) ++i;
    if (cmd.name == "stmt" && (i >= script.size() || script[i] != '(')) continue;
    if (i >= script.size() || script[i] != '(') {
      throw ParseError("expected '(' after " + cmd.name, line, col(i));
    }
    ++i;
    int depth = 1;
    std::string arg;
    for (;;) {
      if (i >= script.size() || script[i] == '\n') throw ParseError("unterminated call to " + cmd.name, line, col(i));
      const char a = script[i++];
      if (a == '{' || a == '}' || std::isspace(static_cast<unsigned char>(a))) continue;
      if (a == '(') ++depth;
      if (a == ')' && --depth == 0) break;
      if (a == ',' && depth == 1) {
        cmd.args.push_back(arg);
        arg.clear();
        continue;
      }
      arg += a;
    }
    if (!arg.empty() || !cmd.args.empty()) cmd.args.push_back(arg);
    out.push_back(std::move(cmd));
  }
  return out;
}

Stmt apply_schedule(const Stmt& stmt, const std::vector<ScheduleCommand>& commands) {
  Stmt s = stmt;
  for (const auto& cmd : commands) {
    const auto arity = [&](std::size_t n) {
      if (cmd.args.size() != n) {
        throw ParseError(cmd.name + " takes " + std::to_string(n) + " arguments, got " + std::to_string(cmd.args.size()),
                         cmd.line, cmd.column);
      }
    };
    try {
      if (cmd.name == "reorder") {
        IndexVars order;
        for (const auto& a : cmd.args) order.emplace_back(a);
        s = s.reorder(order);
      } else if (cmd.name == "split") {
        arity(4);
        std::size_t step = 0;
        const auto& st = cmd.args[3];
        const auto [p, ec] = std::from_chars(st.data(), st.data() + st.size(), step);
        if (ec != std::errc() || p != st.data() + st.size()) {
          throw ParseError("split step '" + st + "' is not a number", cmd.line, cmd.column);
        }
        s = s.split(IndexVar(cmd.args[0]), IndexVar(cmd.args[1]), IndexVar(cmd.args[2]), step);
      } else if (cmd.name == "fuse") {
        arity(3);
        s = s.fuse(IndexVar(cmd.args[0]), IndexVar(cmd.args[1]), IndexVar(cmd.args[2]));
      } else if (cmd.name == "pos") {
        arity(3);
        // The operand is named by tensor ("B") or by access ("B(i,k)").
        const std::string& ref = cmd.args[2];
        const std::string tname = ref.substr(0, ref.find('('));
        const auto accs = accesses(innermost_assign(s).rhs);
        std::vector<Access> hits;
        for (const auto& a : accs) {
          if (a.tensor.name == tname && (ref.find('(') == std::string::npos || a.to_string() == ref)) {
            hits.push_back(a);
          }
        }
        if (hits.empty()) throw ParseError("pos: no operand " + ref, cmd.line, cmd.column);
        if (hits.size() > 1) throw ParseError("pos: operand " + ref + " is ambiguous", cmd.line, cmd.column);
        s = s.pos(IndexVar(cmd.args[0]), IndexVar(cmd.args[1]), hits.front());
      } else {
        throw ParseError("unknown schedule command " + cmd.name, cmd.line, cmd.column);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(e.what(), cmd.line, cmd.column);
    }
  }
  return s;
}

} // namespace spws
