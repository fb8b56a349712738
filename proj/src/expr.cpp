#include "ncmfg/expr.hpp"

#include "ncmfg/errors.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <numbers>

namespace ncmfg {

class ExpressionParser {
 public:
  explicit ExpressionParser(const std::string& text) : s_(text) {}

  Expression run()
  {
    Expression e;
    e.code_.clear();
    out_ = &e.code_;
    expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    e.text_ = s_;
    e.slot_mask_ = mask_;
    check_depth(e.code_);
    return e;
  }

 private:
  using Op = Expression::Op;

  const std::string& s_;
  std::size_t pos_ = 0;
  std::vector<Expression::Instr>* out_ = nullptr;
  std::uint32_t mask_ = 0;

  [[noreturn]] void fail(const std::string& msg) const
  {
    throw ExpressionError("expression '" + s_ + "': " + msg + " at offset " +
                          std::to_string(pos_));
  }

  void skip_ws()
  {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c)
  {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void emit(Op op, int slot = 0, double v = 0.0) { out_->push_back({op, slot, v}); }

  void expr()
  {
    term();
    for (;;) {
      if (accept('+')) { term(); emit(Op::Add); }
      else if (accept('-')) { term(); emit(Op::Sub); }
      else break;
    }
  }

  void term()
  {
    unary();
    for (;;) {
      if (accept('*')) { unary(); emit(Op::Mul); }
      else if (accept('/')) { unary(); emit(Op::Div); }
      else break;
    }
  }

  void unary()
  {
    if (accept('-')) { unary(); emit(Op::Neg); return; }
    if (accept('+')) { unary(); return; }
    power();
  }

  void power()
  {
    primary();
    if (accept('^')) {
      unary();
      emit(Op::Pow);
    }
  }

  std::string identifier()
  {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    return s_.substr(start, pos_ - start);
  }

  void primary()
  {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      expr();
      if (!accept(')')) fail("expected ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::string id = identifier();
      if (id == "pi") { emit(Op::Const, 0, std::numbers::pi); return; }
      if (id == "t") { variable(kSlotT); return; }
      if (id == "z") { variable(kSlotZ); return; }
      if (id.size() == 2 && id[0] == 'x' && id[1] >= '1' && id[1] <= '4') {
        variable(id[1] - '1');
        return;
      }
      function(id);
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  void variable(int slot)
  {
    mask_ |= 1u << slot;
    emit(Op::Var, slot);
  }

  void number()
  {
    std::size_t end = pos_;
    while (end < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[end])) || s_[end] == '.'))
      ++end;
    if (end < s_.size() && (s_[end] == 'e' || s_[end] == 'E')) {
      std::size_t e = end + 1;
      if (e < s_.size() && (s_[e] == '+' || s_[e] == '-')) ++e;
      if (e < s_.size() && std::isdigit(static_cast<unsigned char>(s_[e]))) {
        end = e;
        while (end < s_.size() && std::isdigit(static_cast<unsigned char>(s_[end]))) ++end;
      }
    }
    double v = 0.0;
    auto res = std::from_chars(s_.data() + pos_, s_.data() + end, v);
    if (res.ec != std::errc() || res.ptr != s_.data() + end) fail("malformed number");
    pos_ = end;
    emit(Op::Const, 0, v);
  }

  void function(const std::string& name)
  {
    Op op;
    int arity = 1;
    if (name == "sin") op = Op::Sin;
    else if (name == "cos") op = Op::Cos;
    else if (name == "sqrt") op = Op::Sqrt;
    else if (name == "exp") op = Op::Exp;
    else if (name == "cutoff") { op = Op::Cutoff; arity = 3; }
    else fail("unknown identifier '" + name + "'");

    if (!accept('(')) fail("expected '(' after " + name);
    std::size_t before = out_->size();
    for (int k = 0; k < arity; ++k) {
      if (k > 0 && !accept(',')) fail("expected ',' in " + name);
      if (op == Op::Cutoff && k > 0) before = out_->size();
      expr();
      if (op == Op::Cutoff && k > 0) {
        // Bounds must be numeric constants.
        for (std::size_t i = before; i < out_->size(); ++i)
          if ((*out_)[i].op == Op::Var) fail("cutoff bounds must be constant");
      }
    }
    if (!accept(')')) fail("expected ')' closing " + name);
    emit(op);
  }

  void check_depth(const std::vector<Expression::Instr>& code) const
  {
    int depth = 0, max_depth = 0;
    for (const auto& in : code) {
      switch (in.op) {
        case Op::Const:
        case Op::Var: ++depth; break;
        case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Pow: --depth; break;
        case Op::Cutoff: depth -= 2; break;
        default: break;
      }
      max_depth = std::max(max_depth, depth);
    }
    if (max_depth > 40) throw ExpressionError("expression '" + s_ + "' nests too deeply");
  }
};

static std::string format_constant(double c)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", c);
  return buf;
}

Expression::Expression(double constant)
    : text_(format_constant(constant)), code_{{Op::Const, 0, constant}}
{
}

Expression Expression::parse(const std::string& text)
{
  return ExpressionParser(text).run();
}

int Expression::max_x_index() const
{
  int m = 0;
  for (int i = 0; i < 4; ++i)
    if (uses(i)) m = i + 1;
  return m;
}

}  // namespace ncmfg
