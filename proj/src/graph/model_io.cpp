#include "nodesplit/model_io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nodesplit/errors.hpp"

namespace nodesplit {

namespace {

struct Token {
  enum class Kind { Ident, Number, Symbol, End };
  Kind kind = Kind::End;
  std::string text;
  double number = 0.0;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '@';
}

std::vector<Token> tokenize(std::string_view s, int line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (ident_start(c)) {
      std::size_t j = i + 1;
      while (j < s.size() && ident_char(s[j])) ++j;
      out.push_back({Token::Kind::Ident, std::string(s.substr(i, j - i))});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          j = k;
          while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
      }
      Token t{Token::Kind::Number, std::string(s.substr(i, j - i))};
      auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + j, t.number);
      if (ec != std::errc() || ptr != s.data() + j) {
        throw ParseError("line " + std::to_string(line) + ": bad number '" + t.text + "'");
      }
      out.push_back(std::move(t));
      i = j;
    } else if (std::string_view("~=:(),+-*/@").find(c) != std::string_view::npos) {
      out.push_back({Token::Kind::Symbol, std::string(1, c)});
      ++i;
    } else {
      throw ParseError("line " + std::to_string(line) + ": unexpected character '" +
                       std::string(1, c) + "'");
    }
  }
  out.push_back({Token::Kind::End, ""});
  return out;
}

class LineParser {
 public:
  LineParser(std::string_view text, int line) : toks_(tokenize(text, line)), line_(line) {}

  const Token& peek() const { return toks_[pos_]; }
  bool at_end() const { return peek().kind == Token::Kind::End; }
  bool is_symbol(char c) const {
    return peek().kind == Token::Kind::Symbol && peek().text[0] == c;
  }
  bool accept(char c) {
    if (!is_symbol(c)) return false;
    ++pos_;
    return true;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }
  std::string ident() {
    if (peek().kind != Token::Kind::Ident) fail("expected identifier");
    return toks_[pos_++].text;
  }
  void expect_end() {
    if (!at_end()) fail("unexpected '" + peek().text + "'");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("line " + std::to_string(line_) + ": " + what);
  }

  double signed_number() {
    bool neg = accept('-');
    if (peek().kind != Token::Kind::Number) fail("expected number");
    double v = toks_[pos_++].number;
    return neg ? -v : v;
  }

  Operand operand() {
    if (peek().kind == Token::Kind::Ident) return Operand::node(ident());
    return Operand::value(signed_number());
  }

  Distribution distribution() {
    std::string name = ident();
    auto kind = dist_kind_from_string(name);
    if (!kind) fail("unknown distribution '" + name + "'");
    Distribution d{*kind, {}};
    expect('(');
    if (!accept(')')) {
      do {
        d.params.push_back(operand());
      } while (accept(','));
      expect(')');
    }
    return d;
  }

  Expr expr() {
    Expr e = term();
    while (is_symbol('+') || is_symbol('-')) {
      char op = toks_[pos_++].text[0];
      Expr r = term();
      e = Expr::binary(op == '+' ? Expr::Op::Add : Expr::Op::Sub, std::move(e), std::move(r));
    }
    return e;
  }

  Support support_suffix(Support fallback) {
    if (!accept(':')) return fallback;
    std::string s = ident();
    auto sup = support_from_string(s);
    if (!sup) fail("unknown support '" + s + "'");
    return *sup;
  }

 private:
  Expr term() {
    Expr e = unary();
    while (is_symbol('*') || is_symbol('/')) {
      char op = toks_[pos_++].text[0];
      Expr r = unary();
      e = Expr::binary(op == '*' ? Expr::Op::Mul : Expr::Op::Div, std::move(e), std::move(r));
    }
    return e;
  }

  Expr unary() {
    if (accept('-')) {
      if (peek().kind == Token::Kind::Number) return Expr::constant(-toks_[pos_++].number);
      return -unary();
    }
    return atom();
  }

  Expr atom() {
    if (peek().kind == Token::Kind::Number) return Expr::constant(toks_[pos_++].number);
    if (accept('(')) {
      Expr e = expr();
      expect(')');
      return e;
    }
    std::string name = ident();
    if (!is_symbol('(')) return Expr::node(name);
    ++pos_;
    std::vector<Expr> args;
    if (!accept(')')) {
      do {
        args.push_back(expr());
      } while (accept(','));
      expect(')');
    }
    static const std::pair<const char*, Expr::Op> kFuncs[] = {
        {"log", Expr::Op::Log},
        {"logit", Expr::Op::Logit},
        {"ilogit", Expr::Op::InvLogit},
        {"exp", Expr::Op::Exp},
    };
    for (const auto& [fname, op] : kFuncs) {
      if (name == fname) {
        if (args.size() != 1) fail(name + " takes one argument");
        return Expr::unary(op, std::move(args[0]));
      }
    }
    if (name == "indicator") {
      if (args.size() != 3) fail("indicator takes three arguments");
      return Expr::indicator(std::move(args[0]), std::move(args[1]), std::move(args[2]));
    }
    fail("unknown function '" + name + "'");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int line_;
};

int precedence(const Expr& e) {
  switch (e.op) {
    case Expr::Op::Add:
    case Expr::Op::Sub:
      return 1;
    case Expr::Op::Mul:
    case Expr::Op::Div:
      return 2;
    case Expr::Op::Neg:
      return 3;
    case Expr::Op::Const:
      return std::signbit(e.value) ? 3 : 4;
    default:
      return 4;
  }
}

void write_expr(const Expr& e, std::string& out) {
  auto child = [&out](const Expr& c, bool paren) {
    if (paren) out += '(';
    write_expr(c, out);
    if (paren) out += ')';
  };
  switch (e.op) {
    case Expr::Op::Const:
      out += format_number(e.value);
      return;
    case Expr::Op::Ref:
      out += e.ref;
      return;
    case Expr::Op::Add:
    case Expr::Op::Sub:
    case Expr::Op::Mul:
    case Expr::Op::Div: {
      const int p = precedence(e);
      child(e.args[0], precedence(e.args[0]) < p);
      const char* sym = e.op == Expr::Op::Add   ? " + "
                        : e.op == Expr::Op::Sub ? " - "
                        : e.op == Expr::Op::Mul ? " * "
                                                : " / ";
      out += sym;
      child(e.args[1], precedence(e.args[1]) <= p);
      return;
    }
    case Expr::Op::Neg:
      out += '-';
      // A bare literal would fold into a negative constant on re-parse.
      child(e.args[0], precedence(e.args[0]) < 3 || e.args[0].op == Expr::Op::Const);
      return;
    case Expr::Op::Indicator:
      out += "indicator(";
      write_expr(e.args[0], out);
      out += ", ";
      write_expr(e.args[1], out);
      out += ", ";
      write_expr(e.args[2], out);
      out += ')';
      return;
    default: {
      const char* name = e.op == Expr::Op::Log     ? "log"
                         : e.op == Expr::Op::Logit ? "logit"
                         : e.op == Expr::Op::Exp   ? "exp"
                                                   : "ilogit";
      out += name;
      out += '(';
      write_expr(e.args[0], out);
      out += ')';
    }
  }
}

std::string format_operand(const Operand& o) { return o.is_ref() ? o.ref : format_number(o.constant); }

enum class Section { None, Nodes, Observations, Blocks, Split };

void parse_split_line(LineParser& p, SplitSpec& spec) {
  std::string kw = p.ident();
  if (kw == "separator") {
    SeparatorDecl sep;
    sep.node = p.ident();
    if (p.accept(':')) {
      std::string t = p.ident();
      sep.transform = transform_from_string(t);
      if (!sep.transform) p.fail("unknown transform '" + t + "'");
    }
    spec.separators.push_back(std::move(sep));
  } else if (kw == "partition") {
    PartitionDecl part;
    part.name = p.ident();
    if (p.accept(':')) {
      if (!p.at_end()) {
        do {
          part.data.push_back(p.ident());
        } while (p.accept(','));
      }
    }
    spec.partitions.push_back(std::move(part));
  } else if (kw == "copy") {
    std::string node = p.ident();
    std::string part;
    auto at = node.find('@');
    if (at != std::string::npos) {
      part = node.substr(at + 1);
      node = node.substr(0, at);
    } else {
      p.expect('@');
      part = p.ident();
    }
    CopyDecl copy{part, false, std::nullopt};
    if (p.accept(':')) {
      std::string kind = p.ident();
      if (kind == "founder") {
        copy.founder = true;
        if (!p.at_end()) copy.prior = p.distribution();
      } else if (kind != "derived") {
        p.fail("copy kind must be 'derived' or 'founder'");
      }
    }
    auto it = std::find_if(spec.separators.begin(), spec.separators.end(),
                           [&](const SeparatorDecl& s) { return s.node == node; });
    if (it == spec.separators.end()) p.fail("copy of undeclared separator '" + node + "'");
    it->copies.push_back(std::move(copy));
  } else if (kw == "shared") {
    do {
      spec.shared_nodes.push_back(p.ident());
    } while (p.accept(','));
  } else if (kw == "pairs") {
    std::string mode = p.ident();
    if (mode == "all") {
      spec.pairs = PairPlan::AllPairs;
    } else if (mode == "first") {
      spec.pairs = PairPlan::AgainstFirst;
    } else {
      p.fail("pairs must be 'all' or 'first'");
    }
  } else {
    p.fail("unknown split directive '" + kw + "'");
  }
  p.expect_end();
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_expr(const Expr& e) {
  std::string out;
  write_expr(e, out);
  return out;
}

std::string format_distribution(const Distribution& d) {
  std::string out(to_string(d.kind));
  out += '(';
  for (std::size_t i = 0; i < d.params.size(); ++i) {
    if (i) out += ", ";
    out += format_operand(d.params[i]);
  }
  out += ')';
  return out;
}

Expr parse_expr(std::string_view text) {
  LineParser p(text, 1);
  Expr e = p.expr();
  p.expect_end();
  return e;
}

ModelFile parse_model(std::string_view text) {
  ModelFile mf;
  Section section = Section::None;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    auto first = raw.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = raw.find_last_not_of(" \t\r");
    std::string_view body(raw.data() + first, last - first + 1);
    if (body.front() == '[') {
      if (body == "[nodes]") {
        section = Section::Nodes;
      } else if (body == "[observations]") {
        section = Section::Observations;
      } else if (body == "[blocks]") {
        section = Section::Blocks;
      } else if (body == "[split]") {
        section = Section::Split;
        if (!mf.split) mf.split = SplitSpec{};
      } else {
        throw ParseError("line " + std::to_string(line) + ": unknown section " + std::string(body));
      }
      continue;
    }
    LineParser p(body, line);
    switch (section) {
      case Section::None:
        p.fail("content before the first section header");
      case Section::Nodes: {
        NodeDef def;
        def.id = p.ident();
        if (p.accept('~')) {
          Distribution d = p.distribution();
          bool founder = std::none_of(d.params.begin(), d.params.end(),
                                      [](const Operand& o) { return o.is_ref(); });
          def.role = founder ? NodeRole::StochasticFounder : NodeRole::StochasticInternal;
          def.support = p.support_suffix(natural_support(d, mf.graph));
          def.dist = std::move(d);
        } else {
          p.expect('=');
          def.role = NodeRole::Deterministic;
          def.expr = p.expr();
          def.support = p.support_suffix(Support::Real);
        }
        p.expect_end();
        mf.graph.add_node(std::move(def));
        break;
      }
      case Section::Observations: {
        NodeId id = p.ident();
        p.expect('~');
        Distribution d = p.distribution();
        p.expect('=');
        double v = p.signed_number();
        p.expect_end();
        mf.graph.add_observed(std::move(id), std::move(d), v);
        break;
      }
      case Section::Blocks: {
        std::vector<NodeId> members;
        do {
          members.push_back(p.ident());
        } while (p.accept(','));
        p.expect_end();
        mf.graph.add_block(std::move(members));
        break;
      }
      case Section::Split:
        parse_split_line(p, *mf.split);
        break;
    }
  }
  return mf;
}

ModelFile load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_model(ss.str());
}

std::string serialize_model(const ModelGraph& g, const std::optional<SplitSpec>& split) {
  std::vector<std::size_t> order;
  if (auto o = g.canonical_order()) {
    order = std::move(*o);
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) order.push_back(i);
  }
  std::string out = "[nodes]\n";
  for (auto i : order) {
    const NodeDef& n = g.nodes()[i];
    if (n.role == NodeRole::Observed) continue;
    out += n.id;
    if (n.role == NodeRole::Deterministic) {
      out += " = " + format_expr(*n.expr);
    } else {
      out += " ~ " + format_distribution(*n.dist);
    }
    out += " : ";
    out += to_string(n.support);
    out += '\n';
  }
  out += "[observations]\n";
  for (auto i : order) {
    const NodeDef& n = g.nodes()[i];
    if (n.role != NodeRole::Observed) continue;
    out += n.id + " ~ " + format_distribution(*n.dist) + " = " + format_number(n.observed_value) + '\n';
  }
  if (!g.blocks().empty()) {
    out += "[blocks]\n";
    for (const auto& b : g.blocks()) {
      for (std::size_t k = 0; k < b.size(); ++k) out += (k ? ", " : "") + b[k];
      out += '\n';
    }
  }
  if (split) {
    out += "[split]\n";
    for (const auto& sep : split->separators) {
      out += "separator " + sep.node;
      if (sep.transform) out += " : " + std::string(to_string(*sep.transform));
      out += '\n';
    }
    for (const auto& part : split->partitions) {
      out += "partition " + part.name + " :";
      for (std::size_t k = 0; k < part.data.size(); ++k) out += (k ? ", " : " ") + part.data[k];
      out += '\n';
    }
    for (const auto& sep : split->separators) {
      for (const auto& c : sep.copies) {
        out += "copy " + sep.node + " @ " + c.partition + " : ";
        out += c.founder ? "founder" : "derived";
        if (c.founder && c.prior) out += " " + format_distribution(*c.prior);
        out += '\n';
      }
    }
    if (!split->shared_nodes.empty()) {
      out += "shared";
      for (std::size_t k = 0; k < split->shared_nodes.size(); ++k) {
        out += (k ? ", " : " ") + split->shared_nodes[k];
      }
      out += '\n';
    }
    out += split->pairs == PairPlan::AgainstFirst ? "pairs first\n" : "pairs all\n";
  }
  return out;
}

}  // namespace nodesplit
