#include "rainbow/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "rainbow/errors.hpp"

namespace rainbow::expr {

namespace {

struct Node {
  enum class Op { constant, variable, add, sub, mul, neg, max, min };
  Op op = Op::constant;
  double value = 0.0;
  int var = -1;
  std::vector<std::shared_ptr<Node>> args;
};

using NodePtr = std::shared_ptr<Node>;

class Parser {
public:
  Parser(const std::string& text, int assets) : text_(text), assets_(assets) {}

  NodePtr parse() {
    auto node = expression();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return node;
  }

private:
  const std::string& text_;
  int assets_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << "payoff expression: " << what << " at position " << pos_;
    throw argument_error(msg.str());
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expression() {
    auto lhs = term();
    for (;;) {
      if (consume('+')) {
        auto node = std::make_shared<Node>();
        node->op = Node::Op::add;
        node->args = {lhs, term()};
        lhs = node;
      } else if (consume('-')) {
        auto node = std::make_shared<Node>();
        node->op = Node::Op::sub;
        node->args = {lhs, term()};
        lhs = node;
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    auto lhs = factor();
    while (consume('*')) {
      auto node = std::make_shared<Node>();
      node->op = Node::Op::mul;
      node->args = {lhs, factor()};
      lhs = node;
    }
    return lhs;
  }

  NodePtr factor() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto inner = expression();
      if (!consume(')')) fail("expected ')'");
      return inner;
    }
    if (c == '-') {
      ++pos_;
      auto node = std::make_shared<Node>();
      node->op = Node::Op::neg;
      node->args = {factor()};
      return node;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail("unexpected character");
  }

  NodePtr number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == 'e' || text_[pos_] == 'E' ||
            ((text_[pos_] == '+' || text_[pos_] == '-') &&
             (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E'))))
      ++pos_;
    auto node = std::make_shared<Node>();
    node->op = Node::Op::constant;
    try {
      node->value = std::stod(text_.substr(start, pos_ - start));
    } catch (const std::exception&) {
      pos_ = start;
      fail("malformed number");
    }
    return node;
  }

  NodePtr identifier() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    std::string name = text_.substr(start, pos_ - start);
    if (name == "max" || name == "min") {
      auto node = std::make_shared<Node>();
      node->op = name == "max" ? Node::Op::max : Node::Op::min;
      if (!consume('(')) fail("expected '(' after " + name);
      node->args.push_back(expression());
      while (consume(',')) node->args.push_back(expression());
      if (!consume(')')) fail("expected ')'");
      if (node->args.empty()) fail(name + " needs at least one argument");
      return node;
    }
    if ((name[0] == 'S' || name[0] == 's') && name.size() > 1) {
      int idx = 0;
      for (std::size_t i = 1; i < name.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) { idx = -1; break; }
        idx = idx * 10 + (name[i] - '0');
      }
      if (idx >= 1) {
        if (idx > assets_) {
          pos_ = start;
          std::ostringstream msg;
          msg << "variable " << name << " exceeds the asset count " << assets_;
          fail(msg.str());
        }
        auto node = std::make_shared<Node>();
        node->op = Node::Op::variable;
        node->var = idx - 1;
        return node;
      }
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }
};

double eval_node(const Node& n, std::span<const double> z) {
  switch (n.op) {
    case Node::Op::constant: return n.value;
    case Node::Op::variable: return z[n.var];
    case Node::Op::add: return eval_node(*n.args[0], z) + eval_node(*n.args[1], z);
    case Node::Op::sub: return eval_node(*n.args[0], z) - eval_node(*n.args[1], z);
    case Node::Op::mul: return eval_node(*n.args[0], z) * eval_node(*n.args[1], z);
    case Node::Op::neg: return -eval_node(*n.args[0], z);
    case Node::Op::max: {
      double v = eval_node(*n.args[0], z);
      for (std::size_t i = 1; i < n.args.size(); ++i)
        v = std::max(v, eval_node(*n.args[i], z));
      return v;
    }
    case Node::Op::min: {
      double v = eval_node(*n.args[0], z);
      for (std::size_t i = 1; i < n.args.size(); ++i)
        v = std::min(v, eval_node(*n.args[i], z));
      return v;
    }
  }
  return 0.0;
}

// Affine form a . z + c, when the subtree is affine.
struct Affine {
  Vec coeffs;
  double c = 0.0;
};

std::optional<Affine> affine_form(const Node& n, int assets) {
  switch (n.op) {
    case Node::Op::constant: {
      Affine a;
      a.coeffs.assign(assets, 0.0);
      a.c = n.value;
      return a;
    }
    case Node::Op::variable: {
      Affine a;
      a.coeffs.assign(assets, 0.0);
      a.coeffs[n.var] = 1.0;
      return a;
    }
    case Node::Op::add:
    case Node::Op::sub: {
      auto l = affine_form(*n.args[0], assets), r = affine_form(*n.args[1], assets);
      if (!l || !r) return std::nullopt;
      double s = n.op == Node::Op::add ? 1.0 : -1.0;
      for (int j = 0; j < assets; ++j) l->coeffs[j] += s * r->coeffs[j];
      l->c += s * r->c;
      return l;
    }
    case Node::Op::neg: {
      auto a = affine_form(*n.args[0], assets);
      if (!a) return std::nullopt;
      for (double& v : a->coeffs) v = -v;
      a->c = -a->c;
      return a;
    }
    case Node::Op::mul: {
      auto l = affine_form(*n.args[0], assets), r = affine_form(*n.args[1], assets);
      if (!l || !r) return std::nullopt;
      bool l_const = std::all_of(l->coeffs.begin(), l->coeffs.end(),
                                 [](double v) { return v == 0.0; });
      bool r_const = std::all_of(r->coeffs.begin(), r->coeffs.end(),
                                 [](double v) { return v == 0.0; });
      if (!l_const && !r_const) return std::nullopt;
      if (!l_const) std::swap(l, r);
      for (int j = 0; j < assets; ++j) r->coeffs[j] *= l->c;
      r->c *= l->c;
      return r;
    }
    default:
      return std::nullopt;
  }
}

int nonzero_count(const Affine& a) {
  int c = 0;
  for (double v : a.coeffs)
    if (v != 0.0) ++c;
  return c;
}

// Flattens nested max into one argument list.
void flatten_max(const NodePtr& n, std::vector<NodePtr>& out) {
  if (n->op == Node::Op::max) {
    for (const auto& a : n->args) flatten_max(a, out);
  } else {
    out.push_back(n);
  }
}

void classify(const NodePtr& root, int assets, payoffs::Payoff& p) {
  // Affine expressions are convex and have vanishing mixed differences.
  if (auto a = affine_form(*root, assets)) {
    p.convex = true;
    p.submodular = true;
    return;
  }
  if (root->op != Node::Op::max) return;  // leave flags unset

  std::vector<NodePtr> args;
  flatten_max(root, args);
  std::vector<Affine> forms;
  for (const auto& arg : args) {
    auto a = affine_form(*arg, assets);
    if (!a) return;
    forms.push_back(*a);
  }
  p.convex = true;  // max of affine functions

  // Single-variable arguments with nonnegative slopes: sub-modular family.
  bool single_var_nonneg = true;
  for (const auto& f : forms) {
    if (nonzero_count(f) > 1) single_var_nonneg = false;
    for (double v : f.coeffs)
      if (v < 0.0) single_var_nonneg = false;
  }
  if (single_var_nonneg) {
    p.submodular = true;
    // best-of: each variable bare exactly once plus one constant floor.
    std::vector<int> bare_count(assets, 0);
    int const_args = 0;
    double floor = 0.0;
    bool clean = true;
    for (const auto& f : forms) {
      int nz = nonzero_count(f);
      if (nz == 0) {
        ++const_args;
        floor = f.c;
      } else {
        int j = 0;
        while (f.coeffs[j] == 0.0) ++j;
        if (f.coeffs[j] == 1.0 && f.c == 0.0)
          ++bare_count[j];
        else
          clean = false;
      }
    }
    if (clean && const_args == 1 &&
        std::all_of(bare_count.begin(), bare_count.end(), [](int c) { return c == 1; })) {
      p.kind = payoffs::Kind::best_of;
      p.strike = floor;
      return;
    }
    // multi-strike / call-on-max: zero floor plus unit-slope legs S_j - K_j.
    std::vector<double> strikes(assets, std::numeric_limits<double>::quiet_NaN());
    bool zero_floor = false;
    bool legs_ok = true;
    for (const auto& f : forms) {
      int nz = nonzero_count(f);
      if (nz == 0) {
        if (f.c == 0.0) zero_floor = true; else legs_ok = false;
      } else {
        int j = 0;
        while (f.coeffs[j] == 0.0) ++j;
        if (f.coeffs[j] == 1.0 && std::isnan(strikes[j]))
          strikes[j] = -f.c;
        else
          legs_ok = false;
      }
    }
    if (legs_ok && zero_floor &&
        std::none_of(strikes.begin(), strikes.end(), [](double s) { return std::isnan(s); })) {
      bool all_equal = true;
      for (double s : strikes)
        if (s != strikes[0]) all_equal = false;
      if (all_equal) {
        p.kind = payoffs::Kind::call_on_max;
        p.strike = strikes[0];
      } else {
        p.kind = payoffs::Kind::multi_strike;
        p.strikes = strikes;
      }
    }
    return;
  }

  // Spread-like: zero floor plus one two-variable leg with opposite slopes.
  if (forms.size() == 2) {
    const Affine* leg = nullptr;
    bool zero_floor = false;
    for (const auto& f : forms) {
      if (nonzero_count(f) == 0 && f.c == 0.0)
        zero_floor = true;
      else
        leg = &f;
    }
    if (zero_floor && leg && nonzero_count(*leg) == 2) {
      double pos = 0.0, negv = 0.0;
      for (double v : leg->coeffs) {
        if (v > 0.0) pos = v;
        if (v < 0.0) negv = v;
      }
      if (pos > 0.0 && negv < 0.0) {
        p.convex = true;
        p.submodular = true;  // g(a z_i - b z_j) with convex g
        if (assets == 2 && leg->coeffs[1] == 1.0 && leg->coeffs[0] == -1.0) {
          p.kind = payoffs::Kind::spread;
          p.strike = -leg->c;
        }
        return;
      }
      // Portfolio-like: all slopes nonnegative, more than one variable.
      bool nonneg = std::all_of(leg->coeffs.begin(), leg->coeffs.end(),
                                [](double v) { return v >= 0.0; });
      if (nonneg) {
        p.kind = payoffs::Kind::portfolio;
        p.weights = leg->coeffs;
        p.strike = -leg->c;
        p.submodular = false;
        return;
      }
    }
  }
}

}  // namespace

payoffs::Payoff parse_payoff_expression(const std::string& text, int assets) {
  if (assets < 1) throw argument_error("payoff expression: asset count must be positive");
  Parser parser(text, assets);
  NodePtr root = parser.parse();
  payoffs::Payoff p;
  p.kind = payoffs::Kind::custom;
  p.assets = assets;
  p.eval = [root](std::span<const double> z) { return eval_node(*root, z); };
  classify(root, assets, p);
  return p;
}

std::function<double(std::span<const double>)> parse_scalar_expression(const std::string& text,
                                                                       int assets) {
  Parser parser(text, assets);
  NodePtr root = parser.parse();
  return [root](std::span<const double> z) { return eval_node(*root, z); };
}

}  // namespace rainbow::expr
