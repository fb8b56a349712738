#pragma once

// Closed-form scalar expressions over x1..x4, t and z.
//
// Grammar:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'pi' | var | func '(' expr (',' expr)* ')' | '(' expr ')'
//   var     := 'x1' .. 'x4' | 't' | 'z'
//   func    := sin | cos | sqrt | exp | cutoff
//
// cutoff(s, a, b) is a C-infinity step equal to 1 for s <= a and 0 for s >= b.
// Programs are compiled to postfix code and evaluated on double or Dual.

#include "ncmfg/dual.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace ncmfg {

inline constexpr int kSlotT = 4;
inline constexpr int kSlotZ = 5;
inline constexpr int kNumSlots = 6;

namespace detail {

inline double smooth_psi(double u) { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; }

// Smooth step 0 -> 1 on [0,1] and its derivative.
inline void smooth_step(double u, double& value, double& deriv)
{
  if (u <= 0.0) { value = 0.0; deriv = 0.0; return; }
  if (u >= 1.0) { value = 1.0; deriv = 0.0; return; }
  const double a = smooth_psi(u);
  const double b = smooth_psi(1.0 - u);
  const double da = a / (u * u);
  const double db = b / ((1.0 - u) * (1.0 - u));
  const double s = a + b;
  value = a / s;
  deriv = (da * b + a * db) / (s * s);
}

inline double cutoff_value(double s, double lo, double hi, double& ds)
{
  double v, dv;
  smooth_step((s - lo) / (hi - lo), v, dv);
  ds = -dv / (hi - lo);
  return 1.0 - v;
}

}  // namespace detail

class Expression {
 public:
  enum class Op : std::uint8_t {
    Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Sqrt, Exp, Cutoff
  };
  struct Instr {
    Op op;
    int slot = 0;
    double value = 0.0;
  };

  Expression() : Expression(0.0) {}
  explicit Expression(double constant);

  // Throws ExpressionError on malformed input.
  static Expression parse(const std::string& text);

  const std::string& text() const { return text_; }
  bool uses(int slot) const { return (slot_mask_ >> slot) & 1u; }
  bool is_constant() const { return slot_mask_ == 0; }
  // Highest x-index referenced (1-based), 0 when no x variable appears.
  int max_x_index() const;

  template <class S>
  S eval(std::span<const S> slots) const;

  double operator()(std::span<const double> slots) const { return eval<double>(slots); }

 private:
  static constexpr int kStack = 48;

  std::string text_;
  std::vector<Instr> code_;
  std::uint32_t slot_mask_ = 0;

  friend class ExpressionParser;
};

template <class S>
S Expression::eval(std::span<const S> slots) const
{
  using std::cos;
  using std::exp;
  using std::pow;
  using std::sin;
  using std::sqrt;
  std::array<S, kStack> st;
  int top = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const: st[top++] = S(in.value); break;
      case Op::Var: st[top++] = slots[in.slot]; break;
      case Op::Add: --top; st[top - 1] = st[top - 1] + st[top]; break;
      case Op::Sub: --top; st[top - 1] = st[top - 1] - st[top]; break;
      case Op::Mul: --top; st[top - 1] = st[top - 1] * st[top]; break;
      case Op::Div: --top; st[top - 1] = st[top - 1] / st[top]; break;
      case Op::Pow: --top; st[top - 1] = pow(st[top - 1], st[top]); break;
      case Op::Neg: st[top - 1] = -st[top - 1]; break;
      case Op::Sin: st[top - 1] = sin(st[top - 1]); break;
      case Op::Cos: st[top - 1] = cos(st[top - 1]); break;
      case Op::Sqrt: st[top - 1] = sqrt(st[top - 1]); break;
      case Op::Exp: st[top - 1] = exp(st[top - 1]); break;
      case Op::Cutoff: {
        top -= 2;
        const S& s = st[top - 1];
        double lo, hi;
        if constexpr (std::is_same_v<S, double>) {
          lo = st[top];
          hi = st[top + 1];
          double ds;
          st[top - 1] = detail::cutoff_value(s, lo, hi, ds);
        } else {
          lo = st[top].v;
          hi = st[top + 1].v;
          double ds;
          const double v = detail::cutoff_value(s.v, lo, hi, ds);
          st[top - 1] = s.chain(v, ds);
        }
        break;
      }
    }
  }
  return st[0];
}

}  // namespace ncmfg
