#pragma once

// Small arithmetic language for coefficient components.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | primary
//   primary := number | x[i] | y[j] | mean(mu|nu)[i] | var(mu|nu)[i]
//            | m2(mu|nu) | f1(expr) | f2(expr, expr) | '(' expr ')'
//   f1      := sin cos tanh exp sqrt abs
//   f2      := min max pow
//
// Measures enter only through their moments.

#include <cstddef>
#include <string>
#include <vector>

#include "mmv/error.hpp"
#include "mmv/measure.hpp"

namespace mmv {

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& msg, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Division by zero, sqrt of a negative number, or any non-finite value.
class EvalError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

enum class Op {
  literal,
  x,
  y,
  mean_mu,
  mean_nu,
  var_mu,
  var_nu,
  m2_mu,
  m2_nu,
  neg,
  add,
  sub,
  mul,
  div,
  sin,
  cos,
  tanh,
  exp,
  sqrt,
  abs,
  min,
  max,
  pow,
};

struct Expr {
  Op op = Op::literal;
  double value = 0.0;  // literal
  int index = 0;       // coordinate or moment component
  std::vector<Expr> args;

  bool operator==(const Expr& other) const;
};

constexpr int kMaxExprDepth = 64;

struct CoeffExpr {
  Expr root;
  int d1 = 0;
  int d2 = 0;
};

struct ParseOptions {
  bool allow_y = true;
};

CoeffExpr parse_coeff(const std::string& src, int d1, int d2,
                      const ParseOptions& opts = {});

// Fully parenthesised source that parses back to an equal tree.
std::string print_coeff(const CoeffExpr& e);

int expr_depth(const Expr& e);
const char* op_name(Op op);

struct EvalPoint {
  const double* x = nullptr;
  const double* y = nullptr;
  const MeasureView* mu = nullptr;
  const MeasureView* nu = nullptr;
};

// Stack-machine form of an expression, evaluated over blocks of points.
class CompiledCoeff {
 public:
  CompiledCoeff() = default;
  explicit CompiledCoeff(const CoeffExpr& e);

  double eval(const EvalPoint& p) const;

  // out[i * out_stride] for points i in [0, n); x and y rows have strides
  // d1 and d2. y may be null when the expression does not read it.
  void eval_batch(const double* x, const double* y, std::size_t n,
                  const MeasureView& mu, const MeasureView& nu, double* out,
                  std::size_t out_stride) const;

  bool reads_y() const { return reads_y_; }
  bool is_constant() const { return constant_; }

 private:
  struct Instr {
    Op op;
    double value;
    int index;
  };
  std::vector<Instr> code_;
  int max_stack_ = 0;
  int d1_ = 0;
  int d2_ = 0;
  bool reads_y_ = false;
  bool constant_ = true;
};

double eval_coeff(const CoeffExpr& e, const EvalPoint& p);

}  // namespace mmv
