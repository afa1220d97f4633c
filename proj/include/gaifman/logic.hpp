#pragma once

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gaifman/common.hpp"
#include "gaifman/graph.hpp"
#include "gaifman/kb.hpp"

namespace gaifman {

// ---------------------------------------------------------------------------
// Formula AST
//
// Terms are target variables s1, s2, ... (the free variables of the target
// query), counting variables u1, u2, ... (free variables whose satisfied
// groundings are counted), quantifier-bound variables, and object constants
// written `name`.
// ---------------------------------------------------------------------------

enum class TermKind { Target, Counting, Bound, Constant };

struct Term {
  TermKind kind;
  int index = 0;        // Target: i of s_i (1-based); Counting: j of u_j (1-based);
                        // Bound: slot of the binding quantifier
  ObjectId object = kInvalidObject;  // Constant only
  std::string name;     // print name ("s1", "u2", bound-variable name, constant name)

  bool operator==(const Term&) const = default;
};

enum class Connective { Atom, Not, And, Or, Implies, Exists, Forall };

struct Formula {
  Connective kind = Connective::Atom;
  // Atom
  std::string relation_name;
  RelationId relation = kInvalidRelation;
  std::vector<Term> args;
  // Exists / Forall
  std::string var_name;
  int var_slot = -1;
  // Not: 1 child; And/Or/Implies: 2; Exists/Forall: 1
  std::vector<Formula> children;

  bool operator==(const Formula&) const = default;
};

/// Derived per-formula facts used by evaluation and by the featurizer's
/// skip path.
struct FormulaInfo {
  int num_targets = 0;                         // highest s index referenced
  std::vector<int> counting_vars;              // distinct u indexes, ascending
  int num_slots = 0;                           // quantifier count
  bool positive_conjunctive = false;           // only Atom / And / Exists
  std::vector<RelationId> relations;           // distinct, ascending (resolved atoms)

  bool is_counting() const { return !counting_vars.empty(); }
};

namespace detail {

inline void analyze_node(const Formula& f, FormulaInfo& info) {
  switch (f.kind) {
    case Connective::Atom:
      for (const Term& t : f.args) {
        if (t.kind == TermKind::Target) info.num_targets = std::max(info.num_targets, t.index);
        if (t.kind == TermKind::Counting) info.counting_vars.push_back(t.index);
      }
      if (f.relation != kInvalidRelation) info.relations.push_back(f.relation);
      break;
    case Connective::Not:
    case Connective::Or:
    case Connective::Implies:
      info.positive_conjunctive = false;
      break;
    case Connective::And:
    case Connective::Exists:
      break;
    case Connective::Forall:
      info.positive_conjunctive = false;
      break;
  }
  if (f.kind == Connective::Exists || f.kind == Connective::Forall)
    info.num_slots = std::max(info.num_slots, f.var_slot + 1);
  for (const Formula& c : f.children) analyze_node(c, info);
}

}  // namespace detail

inline FormulaInfo analyze(const Formula& f) {
  FormulaInfo info;
  info.positive_conjunctive = true;
  detail::analyze_node(f, info);
  std::sort(info.counting_vars.begin(), info.counting_vars.end());
  info.counting_vars.erase(std::unique(info.counting_vars.begin(), info.counting_vars.end()),
                           info.counting_vars.end());
  std::sort(info.relations.begin(), info.relations.end());
  info.relations.erase(std::unique(info.relations.begin(), info.relations.end()),
                       info.relations.end());
  return info;
}

// ---------------------------------------------------------------------------
// Printing. Canonical form round-trips through parse().
// ---------------------------------------------------------------------------

namespace detail {

inline int precedence(Connective k) {
  switch (k) {
    case Connective::Atom: return 5;
    case Connective::Not: return 4;
    case Connective::And: return 3;
    case Connective::Or: return 2;
    case Connective::Implies: return 1;
    default: return 0;  // quantifiers bind loosest (body extends right)
  }
}

inline void print_node(const Formula& f, int min_prec, std::string& out) {
  const int prec = precedence(f.kind);
  const bool parens = prec < min_prec;
  if (parens) out += '(';
  switch (f.kind) {
    case Connective::Atom: {
      out += f.relation_name;
      out += '(';
      for (std::size_t i = 0; i < f.args.size(); ++i) {
        if (i) out += ", ";
        const Term& t = f.args[i];
        if (t.kind == TermKind::Constant) {
          out += '`';
          out += t.name;
          out += '`';
        } else {
          out += t.name;
        }
      }
      out += ')';
      break;
    }
    case Connective::Not:
      out += '!';
      print_node(f.children[0], 4, out);
      break;
    case Connective::And:
      print_node(f.children[0], 3, out);
      out += " & ";
      print_node(f.children[1], 4, out);
      break;
    case Connective::Or:
      print_node(f.children[0], 2, out);
      out += " | ";
      print_node(f.children[1], 3, out);
      break;
    case Connective::Implies:
      print_node(f.children[0], 2, out);
      out += " => ";
      print_node(f.children[1], 2, out);
      break;
    case Connective::Exists:
    case Connective::Forall: {
      out += f.kind == Connective::Exists ? "exists " : "forall ";
      out += f.var_name;
      const Formula* body = &f.children[0];
      while (body->kind == f.kind) {  // group runs of the same quantifier
        out += ", ";
        out += body->var_name;
        body = &body->children[0];
      }
      out += " . ";
      print_node(*body, 0, out);
      break;
    }
  }
  if (parens) out += ')';
}

}  // namespace detail

inline std::string print(const Formula& f) {
  std::string out;
  detail::print_node(f, 0, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line, int column)
      : Error("parse error at line " + std::to_string(line) + ", col " + std::to_string(column) +
              ": " + msg),
        line(line),
        column(column) {}
  int line;
  int column;
};

namespace detail {

struct Token {
  enum Kind { Ident, Constant, LParen, RParen, Comma, Dot, Bang, Amp, Pipe, Arrow, End } kind;
  std::string text;
  int line;
  int column;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return current_; }
  Token take() {
    Token t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        ++line_;
        col_ = 1;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++col_;
        ++pos_;
      } else {
        break;
      }
    }
    current_.line = line_;
    current_.column = col_;
    if (pos_ >= src_.size()) {
      current_.kind = Token::End;
      current_.text.clear();
      return;
    }
    char c = src_[pos_];
    auto single = [&](Token::Kind k) {
      current_.kind = k;
      current_.text = std::string(1, c);
      ++pos_;
      ++col_;
    };
    switch (c) {
      case '(': single(Token::LParen); return;
      case ')': single(Token::RParen); return;
      case ',': single(Token::Comma); return;
      case '.': single(Token::Dot); return;
      case '!': single(Token::Bang); return;
      case '&': single(Token::Amp); return;
      case '|': single(Token::Pipe); return;
      case '=': {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
          current_.kind = Token::Arrow;
          current_.text = "=>";
          pos_ += 2;
          col_ += 2;
          return;
        }
        throw ParseError("unexpected '='", line_, col_);
      }
      case '`': {
        std::size_t end = src_.find('`', pos_ + 1);
        if (end == std::string_view::npos)
          throw ParseError("unterminated constant literal", line_, col_);
        current_.kind = Token::Constant;
        current_.text = std::string(src_.substr(pos_ + 1, end - pos_ - 1));
        col_ += static_cast<int>(end - pos_ + 1);
        pos_ = end + 1;
        return;
      }
      default: break;
    }
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '/') {
      std::size_t start = pos_;
      while (pos_ < src_.size()) {
        char d = src_[pos_];
        if (std::isalnum(static_cast<unsigned char>(d)) || d == '_' || d == '/' || d == '.') {
          // '.' may end a quantifier prefix: only swallow it inside dataset-style
          // names when surrounded by identifier characters
          if (d == '.') {
            if (pos_ + 1 >= src_.size() ||
                !(std::isalnum(static_cast<unsigned char>(src_[pos_ + 1])) ||
                  src_[pos_ + 1] == '_' || src_[pos_ + 1] == '/'))
              break;
          }
          ++pos_;
          ++col_;
        } else {
          break;
        }
      }
      current_.kind = Token::Ident;
      current_.text = std::string(src_.substr(start, pos_ - start));
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token current_;
};

/// Classifies an identifier: s<digits> -> Target, u<digits> -> Counting,
/// anything else -> bound variable name.
inline std::optional<std::pair<TermKind, int>> classify_var(std::string_view name) {
  if (name.size() >= 2 && (name[0] == 's' || name[0] == 'u')) {
    bool digits = true;
    for (std::size_t i = 1; i < name.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(name[i]))) {
        digits = false;
        break;
      }
    if (digits) {
      int idx = 0;
      for (std::size_t i = 1; i < name.size(); ++i) idx = idx * 10 + (name[i] - '0');
      if (idx >= 1)
        return std::make_pair(name[0] == 's' ? TermKind::Target : TermKind::Counting, idx);
    }
  }
  return std::nullopt;
}

class Parser {
 public:
  Parser(std::string_view src, const KnowledgeBase* kb) : lex_(src), kb_(kb) {}

  Formula parse() {
    Formula f = parse_formula();
    const Token& t = lex_.peek();
    if (t.kind != Token::End)
      throw ParseError("unexpected '" + t.text + "' after formula", t.line, t.column);
    return f;
  }

  int num_slots() const { return next_slot_; }

 private:
  Formula parse_formula() {
    if (is_quantifier(lex_.peek())) return parse_quantifier();
    return parse_implies();
  }

  Formula parse_implies() {
    Formula left = parse_or();
    if (lex_.peek().kind == Token::Arrow) {
      lex_.take();
      Formula right = parse_or();
      Formula f;
      f.kind = Connective::Implies;
      f.children.push_back(std::move(left));
      f.children.push_back(std::move(right));
      return f;
    }
    return left;
  }

  Formula parse_or() {
    Formula left = parse_and();
    while (lex_.peek().kind == Token::Pipe) {
      lex_.take();
      Formula right = parse_and();
      Formula f;
      f.kind = Connective::Or;
      f.children.push_back(std::move(left));
      f.children.push_back(std::move(right));
      left = std::move(f);
    }
    return left;
  }

  Formula parse_and() {
    Formula left = parse_unary();
    while (lex_.peek().kind == Token::Amp) {
      lex_.take();
      Formula right = parse_unary();
      Formula f;
      f.kind = Connective::And;
      f.children.push_back(std::move(left));
      f.children.push_back(std::move(right));
      left = std::move(f);
    }
    return left;
  }

  Formula parse_unary() {
    const Token& t = lex_.peek();
    if (t.kind == Token::Bang) {
      lex_.take();
      Formula f;
      f.kind = Connective::Not;
      f.children.push_back(parse_unary());
      return f;
    }
    if (t.kind == Token::LParen) {
      lex_.take();
      Formula f = parse_formula();
      expect(Token::RParen, "')'");
      return f;
    }
    if (is_quantifier(t)) return parse_quantifier();
    if (t.kind == Token::Ident) return parse_atom();
    throw ParseError("expected formula, got '" + t.text + "'", t.line, t.column);
  }

  Formula parse_quantifier() {
    Token kw = lex_.take();
    const bool exists = kw.text == "exists";
    std::vector<std::pair<std::string, int>> vars;  // (name, slot)
    while (true) {
      Token v = lex_.take();
      if (v.kind != Token::Ident)
        throw ParseError("expected variable name after '" + kw.text + "'", v.line, v.column);
      if (auto cls = classify_var(v.text)) {
        throw ParseError(cls->first == TermKind::Target
                             ? "target variable '" + v.text + "' cannot be quantified"
                             : "counting variable '" + v.text + "' cannot be quantified",
                         v.line, v.column);
      }
      vars.emplace_back(v.text, next_slot_++);
      if (lex_.peek().kind == Token::Comma) {
        lex_.take();
        continue;
      }
      break;
    }
    expect(Token::Dot, "'.' after quantified variables");
    for (auto& [name, slot] : vars) scope_.emplace_back(name, slot);
    Formula body = parse_formula();
    scope_.resize(scope_.size() - vars.size());
    for (auto it = vars.rbegin(); it != vars.rend(); ++it) {
      Formula f;
      f.kind = exists ? Connective::Exists : Connective::Forall;
      f.var_name = it->first;
      f.var_slot = it->second;
      f.children.push_back(std::move(body));
      body = std::move(f);
    }
    return body;
  }

  Formula parse_atom() {
    Token name = lex_.take();
    Formula f;
    f.kind = Connective::Atom;
    f.relation_name = name.text;
    expect(Token::LParen, "'(' after relation name");
    while (true) {
      f.args.push_back(parse_term());
      if (lex_.peek().kind == Token::Comma) {
        lex_.take();
        continue;
      }
      break;
    }
    expect(Token::RParen, "')'");
    if (kb_ != nullptr) {
      f.relation = kb_->find_relation(f.relation_name);
      if (f.relation == kInvalidRelation)
        throw ParseError("unknown relation '" + f.relation_name + "'", name.line, name.column);
      if (kb_->arity(f.relation) != static_cast<int>(f.args.size()))
        throw ParseError("relation '" + f.relation_name + "' has arity " +
                             std::to_string(kb_->arity(f.relation)) + ", got " +
                             std::to_string(f.args.size()) + " arguments",
                         name.line, name.column);
    }
    return f;
  }

  Term parse_term() {
    Token t = lex_.take();
    Term term;
    if (t.kind == Token::Constant) {
      term.kind = TermKind::Constant;
      term.name = t.text;
      // Constants naming objects absent from the KB denote nothing; atoms
      // mentioning them evaluate to false.
      term.object = kb_ ? kb_->find_object(t.text) : kInvalidObject;
      return term;
    }
    if (t.kind != Token::Ident)
      throw ParseError("expected term, got '" + t.text + "'", t.line, t.column);
    term.name = t.text;
    if (auto cls = classify_var(t.text)) {
      term.kind = cls->first;
      term.index = cls->second;
      return term;
    }
    for (auto it = scope_.rbegin(); it != scope_.rend(); ++it) {
      if (it->first == t.text) {
        term.kind = TermKind::Bound;
        term.index = it->second;
        return term;
      }
    }
    throw ParseError("unbound variable '" + t.text +
                         "' (bound variables must be quantified; targets are s1, s2, ...; "
                         "counting variables are u1, u2, ...)",
                     t.line, t.column);
  }

  static bool is_quantifier(const Token& t) {
    return t.kind == Token::Ident && (t.text == "exists" || t.text == "forall");
  }

  void expect(Token::Kind k, const char* what) {
    Token t = lex_.take();
    if (t.kind != k) throw ParseError(std::string("expected ") + what, t.line, t.column);
  }

  Lexer lex_;
  const KnowledgeBase* kb_;
  std::vector<std::pair<std::string, int>> scope_;
  int next_slot_ = 0;
};

}  // namespace detail

/// Parses one formula. When a KB is supplied, relation names and arities are
/// validated and resolved; object constants resolve to ids.
inline Formula parse(std::string_view text, const KnowledgeBase* kb = nullptr) {
  detail::Parser p(text, kb);
  return p.parse();
}

/// Re-resolves relation and constant names of a parsed formula against a KB.
inline void resolve(Formula& f, const KnowledgeBase& kb) {
  if (f.kind == Connective::Atom) {
    f.relation = kb.find_relation(f.relation_name);
    if (f.relation == kInvalidRelation) throw Error("unknown relation '" + f.relation_name + "'");
    if (kb.arity(f.relation) != static_cast<int>(f.args.size()))
      throw Error("arity mismatch for relation '" + f.relation_name + "'");
    for (Term& t : f.args)
      if (t.kind == TermKind::Constant) t.object = kb.find_object(t.name);
  }
  for (Formula& c : f.children) resolve(c, kb);
}

// ---------------------------------------------------------------------------
// Evaluation over substructures. Quantifiers range over the carrier, which
// realizes relativization of the formula to the neighborhood.
// ---------------------------------------------------------------------------

namespace detail {

struct EvalEnv {
  std::span<const ObjectId> targets;
  std::vector<ObjectId> counting;  // indexed by u index (1-based)
  std::vector<ObjectId> bound;     // indexed by slot
};

inline bool resolve_args(const Formula& atom, const EvalEnv& env,
                         std::vector<ObjectId>& out) {
  out.clear();
  for (const Term& t : atom.args) {
    switch (t.kind) {
      case TermKind::Target:
        if (t.index > static_cast<int>(env.targets.size()))
          throw Error("binding does not cover target variable s" + std::to_string(t.index));
        out.push_back(env.targets[t.index - 1]);
        break;
      case TermKind::Counting:
        out.push_back(env.counting[t.index]);
        break;
      case TermKind::Bound:
        out.push_back(env.bound[t.index]);
        break;
      case TermKind::Constant:
        if (t.object == kInvalidObject) return false;  // names nothing: atom is false
        out.push_back(t.object);
        break;
    }
  }
  return true;
}

template <typename AtomFn, typename DomainT>
bool eval_node(const Formula& f, EvalEnv& env, const DomainT& domain, AtomFn&& atom_true) {
  switch (f.kind) {
    case Connective::Atom: {
      if (f.relation == kInvalidRelation)
        throw Error("cannot evaluate formula with unresolved relation '" + f.relation_name + "'");
      thread_local std::vector<ObjectId> args;
      if (!resolve_args(f, env, args)) return false;
      return atom_true(f.relation, args);
    }
    case Connective::Not:
      return !eval_node(f.children[0], env, domain, atom_true);
    case Connective::And:
      return eval_node(f.children[0], env, domain, atom_true) &&
             eval_node(f.children[1], env, domain, atom_true);
    case Connective::Or:
      return eval_node(f.children[0], env, domain, atom_true) ||
             eval_node(f.children[1], env, domain, atom_true);
    case Connective::Implies:
      return !eval_node(f.children[0], env, domain, atom_true) ||
             eval_node(f.children[1], env, domain, atom_true);
    case Connective::Exists:
      for (ObjectId o : domain) {
        env.bound[f.var_slot] = o;
        if (eval_node(f.children[0], env, domain, atom_true)) return true;
      }
      return false;
    case Connective::Forall:
      for (ObjectId o : domain) {
        env.bound[f.var_slot] = o;
        if (!eval_node(f.children[0], env, domain, atom_true)) return false;
      }
      return true;
  }
  return false;
}

}  // namespace detail

/// Truth of a formula without counting variables, under a target binding,
/// within the induced substructure.
inline bool evaluate(const Substructure& sub, const Formula& f, std::span<const ObjectId> targets,
                     const FormulaInfo* info_hint = nullptr) {
  FormulaInfo local;
  const FormulaInfo& info = info_hint ? *info_hint : (local = analyze(f), local);
  if (info.is_counting())
    throw Error("evaluate() requires a formula without counting variables; use count()");
  detail::EvalEnv env;
  env.targets = targets;
  env.bound.assign(static_cast<std::size_t>(info.num_slots), kInvalidObject);
  return detail::eval_node(f, env, sub.domain(),
                           [&sub](RelationId r, std::span<const ObjectId> args) {
                             return sub.holds(r, args);
                           });
}

/// Number of counting-variable groundings (over the carrier) satisfying the
/// formula under the target binding.
inline std::uint64_t count(const Substructure& sub, const Formula& f,
                           std::span<const ObjectId> targets,
                           const FormulaInfo* info_hint = nullptr) {
  FormulaInfo local;
  const FormulaInfo& info = info_hint ? *info_hint : (local = analyze(f), local);
  if (!info.is_counting())
    throw Error("count() requires a formula with counting variables; use evaluate()");
  detail::EvalEnv env;
  env.targets = targets;
  env.bound.assign(static_cast<std::size_t>(info.num_slots), kInvalidObject);
  int max_u = info.counting_vars.back();
  env.counting.assign(static_cast<std::size_t>(max_u) + 1, kInvalidObject);
  const auto& domain = sub.domain();
  const std::size_t m = info.counting_vars.size();
  std::uint64_t total = 0;
  if (domain.empty()) return 0;
  std::vector<std::size_t> cursor(m, 0);
  while (true) {
    for (std::size_t i = 0; i < m; ++i) env.counting[info.counting_vars[i]] = domain[cursor[i]];
    if (detail::eval_node(f, env, domain,
                          [&sub](RelationId r, std::span<const ObjectId> args) {
                            return sub.holds(r, args);
                          }))
      ++total;
    std::size_t i = m;
    while (i > 0) {
      --i;
      if (++cursor[i] < domain.size()) break;
      cursor[i] = 0;
      if (i == 0) return total;
    }
    if (m == 0) break;
  }
  return total;
}

/// Evaluates over the full KB with all quantifiers relativized to the
/// r-neighborhood of the bound target tuple. Semantically equal to
/// evaluate(induce(kb, N_r(targets)), f, targets); kept as an independent
/// code path so the two can be checked against each other.
inline bool relativized_evaluate(const KnowledgeBase& kb, const GaifmanGraph& graph,
                                 const Formula& f, std::span<const ObjectId> targets, int radius,
                                 BfsScratch* scratch = nullptr) {
  FormulaInfo info = analyze(f);
  if (info.is_counting())
    throw Error("relativized_evaluate() requires a formula without counting variables");
  std::vector<ObjectId> members = graph.ball(targets, radius, scratch);
  detail::EvalEnv env;
  env.targets = targets;
  env.bound.assign(static_cast<std::size_t>(info.num_slots), kInvalidObject);
  auto in_members = [&members](ObjectId o) {
    return std::binary_search(members.begin(), members.end(), o);
  };
  return detail::eval_node(f, env, members,
                           [&](RelationId r, std::span<const ObjectId> args) {
                             for (ObjectId a : args)
                               if (!in_members(a)) return false;
                             return kb.holds(r, args);
                           });
}

// ---------------------------------------------------------------------------
// Target queries and result sets
// ---------------------------------------------------------------------------

/// A target query: free variables s1..sn (n >= 1), restricted to the
/// range-restricted conjunctive fragment (conjunctions of positive atoms,
/// optionally existentially quantified) so that its result set is computable
/// by index-driven joins.
struct TargetQuery {
  Formula formula;
  int num_targets = 0;
};

namespace detail {

inline void collect_query_atoms(const Formula& f, std::vector<const Formula*>& atoms) {
  switch (f.kind) {
    case Connective::Atom:
      atoms.push_back(&f);
      return;
    case Connective::And:
    case Connective::Exists:
      for (const Formula& c : f.children) collect_query_atoms(c, atoms);
      return;
    default:
      throw Error(
          "target queries are restricted to the range-restricted conjunctive fragment: "
          "conjunctions of positive atoms, optionally under 'exists' (no negation, "
          "disjunction, implication or 'forall')");
  }
}

}  // namespace detail

inline TargetQuery make_target_query(Formula f) {
  FormulaInfo info = analyze(f);
  if (!info.counting_vars.empty())
    throw Error("counting variables are not allowed in target queries");
  std::vector<const Formula*> atoms;
  detail::collect_query_atoms(f, atoms);
  if (info.num_targets < 1) throw Error("target queries need at least one free variable s1, ...");
  std::vector<bool> seen(static_cast<std::size_t>(info.num_targets) + 1, false);
  for (const Formula* a : atoms)
    for (const Term& t : a->args)
      if (t.kind == TermKind::Target) seen[t.index] = true;
  for (int i = 1; i <= info.num_targets; ++i)
    if (!seen[i])
      throw Error("target variable s" + std::to_string(i) +
                  " does not occur in any atom (query is not range-restricted)");
  TargetQuery q;
  q.formula = std::move(f);
  q.num_targets = info.num_targets;
  return q;
}

/// All target bindings satisfying the query on the full KB, computed by an
/// index-driven join. Result tuples are distinct and sorted ascending.
inline std::vector<std::vector<ObjectId>> result_set(const KnowledgeBase& kb,
                                                     const TargetQuery& q) {
  kb.finalize();
  std::vector<const Formula*> atoms;
  detail::collect_query_atoms(q.formula, atoms);
  FormulaInfo info = analyze(q.formula);

  std::vector<ObjectId> targets(static_cast<std::size_t>(q.num_targets), kInvalidObject);
  std::vector<ObjectId> bound(static_cast<std::size_t>(info.num_slots), kInvalidObject);
  std::vector<bool> done(atoms.size(), false);

  auto term_value = [&](const Term& t) -> ObjectId {
    switch (t.kind) {
      case TermKind::Target: return targets[t.index - 1];
      case TermKind::Bound: return bound[t.index];
      case TermKind::Constant: return t.object;
      default: throw Error("unexpected counting variable in target query");
    }
  };
  auto resolved_count = [&](const Formula& a) {
    int n = 0;
    for (const Term& t : a.args)
      if (term_value(t) != kInvalidObject) ++n;
    return n;
  };

  std::set<std::vector<ObjectId>> results;

  // Backtracking join: repeatedly pick the most-constrained remaining atom,
  // enumerate its candidate facts through the narrowest index, unify, recurse.
  auto solve = [&](auto&& self, std::size_t remaining) -> void {
    if (remaining == 0) {
      results.insert(targets);
      return;
    }
    std::size_t best = atoms.size();
    int best_resolved = -1;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (done[i]) continue;
      int r = resolved_count(*atoms[i]);
      if (r > best_resolved) {
        best_resolved = r;
        best = i;
      }
    }
    const Formula& atom = *atoms[best];
    if (atom.relation == kInvalidRelation)
      throw Error("target query has unresolved relation '" + atom.relation_name + "'");
    done[best] = true;

    const int arity = static_cast<int>(atom.args.size());
    // unknown constants denote nothing: no candidate facts
    bool impossible = false;
    for (const Term& t : atom.args)
      if (t.kind == TermKind::Constant && t.object == kInvalidObject) impossible = true;

    auto try_row = [&](std::span<const ObjectId> row) {
      std::vector<std::pair<bool, int>> undo;  // (is_target, index)
      bool ok = true;
      for (int p = 0; p < arity && ok; ++p) {
        const Term& t = atom.args[p];
        ObjectId v = term_value(t);
        if (v != kInvalidObject) {
          ok = v == row[p];
        } else if (t.kind == TermKind::Target) {
          targets[t.index - 1] = row[p];
          undo.emplace_back(true, t.index - 1);
        } else {
          bound[t.index] = row[p];
          undo.emplace_back(false, t.index);
        }
      }
      if (ok) self(self, remaining - 1);
      for (auto& [is_target, idx] : undo)
        (is_target ? targets[idx] : bound[idx]) = kInvalidObject;
    };

    if (!impossible) {
      // narrowest access path among resolved positions
      int pick_pos = -1;
      std::size_t pick_size = std::numeric_limits<std::size_t>::max();
      for (int p = 0; p < arity; ++p) {
        ObjectId v = term_value(atom.args[p]);
        if (v == kInvalidObject) continue;
        std::size_t sz = kb.lookup_count(atom.relation, p, v);
        if (sz < pick_size) {
          pick_size = sz;
          pick_pos = p;
        }
      }
      if (pick_pos >= 0) {
        for (std::uint32_t rowid :
             kb.lookup(atom.relation, pick_pos, term_value(atom.args[pick_pos])))
          try_row(kb.row(atom.relation, rowid));
      } else {
        const std::size_t count = kb.num_facts(atom.relation);
        for (std::uint32_t rowid = 0; rowid < count; ++rowid)
          try_row(kb.row(atom.relation, rowid));
      }
    }
    done[best] = false;
  };
  solve(solve, atoms.size());

  return std::vector<std::vector<ObjectId>>(results.begin(), results.end());
}

inline std::vector<std::vector<ObjectId>> result_set(const KnowledgeBase& kb, const Formula& q) {
  return result_set(kb, make_target_query(q));
}

/// The target query `r(s1, s2)` for one relation.
inline TargetQuery relation_query(const KnowledgeBase& kb, RelationId rel) {
  if (kb.arity(rel) != 2) throw Error("relation_query requires a binary relation");
  Formula f;
  f.kind = Connective::Atom;
  f.relation = rel;
  f.relation_name = kb.relation_name(rel);
  f.args = {Term{TermKind::Target, 1, kInvalidObject, "s1"},
            Term{TermKind::Target, 2, kInvalidObject, "s2"}};
  return make_target_query(std::move(f));
}

// ---------------------------------------------------------------------------
// Feature sets
// ---------------------------------------------------------------------------

/// An ordered, deduplicated list of relational features. The position of a
/// formula is its feature-vector index.
class FeatureSet {
 public:
  /// Adds a formula unless an identical one (by printed form) is present.
  bool add(Formula f) {
    std::string text = print(f);
    if (!seen_.insert(text).second) return false;
    texts_.push_back(std::move(text));
    infos_.push_back(analyze(f));
    formulas_.push_back(std::move(f));
    return true;
  }

  std::size_t size() const { return formulas_.size(); }
  const Formula& operator[](std::size_t i) const { return formulas_[i]; }
  const FormulaInfo& info(std::size_t i) const { return infos_[i]; }
  const std::string& text(std::size_t i) const { return texts_[i]; }

  /// Highest target index used by any feature.
  int num_targets() const {
    int n = 0;
    for (const auto& info : infos_) n = std::max(n, info.num_targets);
    return n;
  }

  bool has_counting_features() const {
    for (const auto& info : infos_)
      if (info.is_counting()) return true;
    return false;
  }

  /// Content hash over the printed formulas, order-sensitive.
  std::uint64_t content_hash() const {
    Fnv64 h;
    h.add_u64(texts_.size());
    for (const auto& t : texts_) h.add_string(t);
    return h.value();
  }

  void write(std::ostream& out) const {
    for (const auto& t : texts_) out << t << '\n';
  }

 private:
  std::vector<Formula> formulas_;
  std::vector<FormulaInfo> infos_;
  std::vector<std::string> texts_;
  std::unordered_set<std::string> seen_;
};

namespace detail {

inline Term target_term(int i) { return Term{TermKind::Target, i, kInvalidObject, "s" + std::to_string(i)}; }
inline Term bound_term(int slot, std::string name) {
  return Term{TermKind::Bound, slot, kInvalidObject, std::move(name)};
}

inline Formula atom2(const KnowledgeBase& kb, RelationId rel, Term a, Term b) {
  Formula f;
  f.kind = Connective::Atom;
  f.relation = rel;
  f.relation_name = kb.relation_name(rel);
  f.args = {std::move(a), std::move(b)};
  return f;
}

inline Formula exists_x(Formula body) {
  Formula f;
  f.kind = Connective::Exists;
  f.var_name = "x";
  f.var_slot = 0;
  f.children.push_back(std::move(body));
  return f;
}

inline Formula conj(Formula a, Formula b) {
  Formula f;
  f.kind = Connective::And;
  f.children.push_back(std::move(a));
  f.children.push_back(std::move(b));
  return f;
}

}  // namespace detail

/// The built-in feature templates for pairs: per binary relation r,
///   r(s1,s2), r(s2,s1),
///   exists x . r(x,s1), exists x . r(s1,x),
///   exists x . r(x,s2), exists x . r(s2,x),
///   exists x . r(s1,x) & r(x,s2), exists x . r(s2,x) & r(x,s1)
/// in that order, giving 8 deduplicated features per relation.
inline FeatureSet default_feature_set(const KnowledgeBase& kb) {
  using namespace detail;
  FeatureSet out;
  for (RelationId r = 0; r < kb.num_relations(); ++r) {
    if (kb.arity(r) != 2)
      throw Error("the built-in feature set requires binary relations; '" + kb.relation_name(r) +
                  "' has arity " + std::to_string(kb.arity(r)));
    const Term s1 = target_term(1);
    const Term s2 = target_term(2);
    const Term x = bound_term(0, "x");
    out.add(atom2(kb, r, s1, s2));
    out.add(atom2(kb, r, s2, s1));
    out.add(exists_x(atom2(kb, r, x, s1)));
    out.add(exists_x(atom2(kb, r, s1, x)));
    out.add(exists_x(atom2(kb, r, x, s2)));
    out.add(exists_x(atom2(kb, r, s2, x)));
    out.add(exists_x(conj(atom2(kb, r, s1, x), atom2(kb, r, x, s2))));
    out.add(exists_x(conj(atom2(kb, r, s2, x), atom2(kb, r, x, s1))));
  }
  return out;
}

/// Parses a feature file: one formula per line, '#' starts a comment (outside
/// backquoted constants), blank lines ignored.
inline FeatureSet load_feature_set(std::istream& in, const KnowledgeBase* kb = nullptr,
                                   int max_targets = 0) {
  FeatureSet out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string body;
    bool in_const = false;
    for (char c : line) {
      if (c == '`') in_const = !in_const;
      if (c == '#' && !in_const) break;
      body += c;
    }
    bool blank = true;
    for (char c : body)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;
    Formula f;
    try {
      f = parse(body, kb);
    } catch (const ParseError& e) {
      throw Error("feature file line " + std::to_string(lineno) + ": " + e.what());
    }
    if (max_targets > 0) {
      FormulaInfo info = analyze(f);
      if (info.num_targets > max_targets)
        throw Error("feature file line " + std::to_string(lineno) + ": feature uses s" +
                    std::to_string(info.num_targets) + " but the target query has only " +
                    std::to_string(max_targets) + " free variables");
    }
    out.add(std::move(f));
  }
  return out;
}

}  // namespace gaifman
