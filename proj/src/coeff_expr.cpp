#include "mmv/coeff_expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include <fmt/format.h>

namespace mmv {

ParseError::ParseError(const std::string& msg, int line, int column)
    : ValidationError(fmt::format("{}:{}: {}", line, column, msg)),
      line_(line),
      column_(column) {}

bool Expr::operator==(const Expr& other) const {
  if (op != other.op || args.size() != other.args.size()) return false;
  if (op == Op::literal) {
    return std::memcmp(&value, &other.value, sizeof value) == 0;
  }
  if (index != other.index) return false;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (!(args[i] == other.args[i])) return false;
  }
  return true;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::literal: return "literal";
    case Op::x: return "x";
    case Op::y: return "y";
    case Op::mean_mu: return "mean(mu)";
    case Op::mean_nu: return "mean(nu)";
    case Op::var_mu: return "var(mu)";
    case Op::var_nu: return "var(nu)";
    case Op::m2_mu: return "m2(mu)";
    case Op::m2_nu: return "m2(nu)";
    case Op::neg: return "-";
    case Op::add: return "+";
    case Op::sub: return "-";
    case Op::mul: return "*";
    case Op::div: return "/";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::tanh: return "tanh";
    case Op::exp: return "exp";
    case Op::sqrt: return "sqrt";
    case Op::abs: return "abs";
    case Op::min: return "min";
    case Op::max: return "max";
    case Op::pow: return "pow";
  }
  return "?";
}

int expr_depth(const Expr& e) {
  int d = 0;
  for (const auto& a : e.args) d = std::max(d, expr_depth(a));
  return d + 1;
}

namespace {

struct Token {
  enum Kind { number, ident, punct, end } kind = end;
  std::string text;
  double value = 0.0;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  Token next() {
    skip_space();
    Token t;
    t.line = line_;
    t.column = col_;
    if (pos_ >= src_.size()) return t;
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
      if (pos_ < src_.size() && src_[pos_] == '.') {
        advance();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        std::size_t look = pos_ + 1;
        if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
        if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
          while (pos_ < look) advance();
          while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
        }
      }
      t.kind = Token::number;
      t.text = src_.substr(start, pos_ - start);
      t.value = std::strtod(t.text.c_str(), nullptr);
      if (!std::isfinite(t.value)) {
        throw ParseError("literal out of range: " + t.text, t.line, t.column);
      }
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        advance();
      }
      t.kind = Token::ident;
      t.text = src_.substr(start, pos_ - start);
      return t;
    }
    if (std::string_view("+-*/()[],").find(c) != std::string_view::npos) {
      advance();
      t.kind = Token::punct;
      t.text = std::string(1, c);
      return t;
    }
    throw ParseError(fmt::format("unexpected character '{}'", c), t.line, t.column);
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  Parser(const std::string& src, int d1, int d2, const ParseOptions& opts)
      : lex_(src), d1_(d1), d2_(d2), opts_(opts) {
    tok_ = lex_.next();
  }

  Expr parse() {
    Expr e = parse_expr();
    if (tok_.kind != Token::end) fail("unexpected '" + tok_.text + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, tok_.line, tok_.column);
  }
  [[noreturn]] void fail_at(const Token& t, const std::string& msg) const {
    throw ParseError(msg, t.line, t.column);
  }

  bool is_punct(char c) const {
    return tok_.kind == Token::punct && tok_.text[0] == c;
  }
  void expect(char c) {
    if (!is_punct(c)) {
      fail(fmt::format("expected '{}' but found '{}'", c,
                       tok_.kind == Token::end ? std::string("end of input") : tok_.text));
    }
    tok_ = lex_.next();
  }

  Expr node(Op op, std::vector<Expr> args, const Token& at) {
    Expr e;
    e.op = op;
    e.args = std::move(args);
    if (expr_depth(e) > kMaxExprDepth) {
      fail_at(at, fmt::format("expression deeper than {}", kMaxExprDepth));
    }
    return e;
  }

  struct Nesting {
    explicit Nesting(Parser& p) : p_(p) {
      if (++p_.nesting_ > 4 * kMaxExprDepth) p_.fail("expression nested too deeply");
    }
    ~Nesting() { --p_.nesting_; }
    Parser& p_;
  };

  Expr parse_expr() {
    Nesting guard(*this);
    Expr lhs = parse_term();
    while (is_punct('+') || is_punct('-')) {
      const Token at = tok_;
      const Op op = is_punct('+') ? Op::add : Op::sub;
      tok_ = lex_.next();
      Expr rhs = parse_term();
      std::vector<Expr> args;
      args.push_back(std::move(lhs));
      args.push_back(std::move(rhs));
      lhs = node(op, std::move(args), at);
    }
    return lhs;
  }

  Expr parse_term() {
    Expr lhs = parse_unary();
    while (is_punct('*') || is_punct('/')) {
      const Token at = tok_;
      const Op op = is_punct('*') ? Op::mul : Op::div;
      tok_ = lex_.next();
      Expr rhs = parse_unary();
      std::vector<Expr> args;
      args.push_back(std::move(lhs));
      args.push_back(std::move(rhs));
      lhs = node(op, std::move(args), at);
    }
    return lhs;
  }

  Expr parse_unary() {
    Nesting guard(*this);
    if (is_punct('-')) {
      const Token at = tok_;
      tok_ = lex_.next();
      std::vector<Expr> args;
      args.push_back(parse_unary());
      return node(Op::neg, std::move(args), at);
    }
    return parse_primary();
  }

  int parse_index(int bound, const std::string& what) {
    expect('[');
    if (tok_.kind != Token::number ||
        tok_.text.find_first_not_of("0123456789") != std::string::npos) {
      fail("index must be a non-negative integer");
    }
    const Token at = tok_;
    const long v = std::strtol(tok_.text.c_str(), nullptr, 10);
    if (v >= bound || tok_.text.size() > 9) {
      fail_at(at, fmt::format("index {} out of range for {} (dimension {})",
                              tok_.text, what, bound));
    }
    tok_ = lex_.next();
    expect(']');
    return static_cast<int>(v);
  }

  // Returns true for mu, false for nu.
  bool parse_measure_arg() {
    expect('(');
    if (tok_.kind != Token::ident || (tok_.text != "mu" && tok_.text != "nu")) {
      fail("expected 'mu' or 'nu'");
    }
    const bool is_mu = tok_.text == "mu";
    tok_ = lex_.next();
    expect(')');
    return is_mu;
  }

  Expr parse_primary() {
    const Token at = tok_;
    if (tok_.kind == Token::number) {
      Expr e;
      e.op = Op::literal;
      e.value = tok_.value;
      tok_ = lex_.next();
      return e;
    }
    if (is_punct('(')) {
      tok_ = lex_.next();
      Expr e = parse_expr();
      expect(')');
      return e;
    }
    if (tok_.kind != Token::ident) {
      if (tok_.kind == Token::end) fail("unexpected end of input");
      fail("unexpected '" + tok_.text + "'");
    }
    const std::string name = tok_.text;
    tok_ = lex_.next();
    Expr e;
    if (name == "x") {
      e.op = Op::x;
      e.index = parse_index(d1_, "x");
      return e;
    }
    if (name == "y") {
      if (!opts_.allow_y) fail_at(at, "this coefficient cannot read y");
      e.op = Op::y;
      e.index = parse_index(d2_, "y");
      return e;
    }
    if (name == "mean" || name == "var") {
      const bool mu = parse_measure_arg();
      e.op = name == "mean" ? (mu ? Op::mean_mu : Op::mean_nu)
                            : (mu ? Op::var_mu : Op::var_nu);
      e.index = parse_index(mu ? d1_ : d2_, name + (mu ? "(mu)" : "(nu)"));
      return e;
    }
    if (name == "m2") {
      e.op = parse_measure_arg() ? Op::m2_mu : Op::m2_nu;
      return e;
    }
    static const std::pair<const char*, Op> unary[] = {
        {"sin", Op::sin}, {"cos", Op::cos},   {"tanh", Op::tanh},
        {"exp", Op::exp}, {"sqrt", Op::sqrt}, {"abs", Op::abs}};
    static const std::pair<const char*, Op> binary[] = {
        {"min", Op::min}, {"max", Op::max}, {"pow", Op::pow}};
    for (const auto& [fname, op] : unary) {
      if (name == fname) {
        expect('(');
        std::vector<Expr> args;
        args.push_back(parse_expr());
        expect(')');
        return node(op, std::move(args), at);
      }
    }
    for (const auto& [fname, op] : binary) {
      if (name == fname) {
        expect('(');
        std::vector<Expr> args;
        args.push_back(parse_expr());
        expect(',');
        args.push_back(parse_expr());
        expect(')');
        return node(op, std::move(args), at);
      }
    }
    fail_at(at, "unknown identifier '" + name + "'");
  }

  Lexer lex_;
  Token tok_;
  int d1_;
  int d2_;
  ParseOptions opts_;
  int nesting_ = 0;
};

void print_expr(const Expr& e, std::string& out) {
  switch (e.op) {
    case Op::literal:
      out += fmt::format("{:.17g}", e.value);
      return;
    case Op::x:
    case Op::y:
    case Op::mean_mu:
    case Op::mean_nu:
    case Op::var_mu:
    case Op::var_nu:
      out += fmt::format("{}[{}]", op_name(e.op), e.index);
      return;
    case Op::m2_mu:
    case Op::m2_nu:
      out += op_name(e.op);
      return;
    case Op::neg:
      out += "(-";
      print_expr(e.args[0], out);
      out += ")";
      return;
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div:
      out += "(";
      print_expr(e.args[0], out);
      out += fmt::format(" {} ", op_name(e.op));
      print_expr(e.args[1], out);
      out += ")";
      return;
    default:
      out += op_name(e.op);
      out += "(";
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i > 0) out += ", ";
        print_expr(e.args[i], out);
      }
      out += ")";
      return;
  }
}

[[noreturn]] void eval_fail(Op op, const char* what) {
  throw EvalError(fmt::format("coefficient evaluation error in '{}': {}",
                              op_name(op), what));
}

inline double checked(Op op, double v) {
  if (!std::isfinite(v)) eval_fail(op, "non-finite value");
  return v;
}

inline double apply1(Op op, double a) {
  switch (op) {
    case Op::neg: return -a;
    case Op::sin: return checked(op, std::sin(a));
    case Op::cos: return checked(op, std::cos(a));
    case Op::tanh: return std::tanh(a);
    case Op::exp: return checked(op, std::exp(a));
    case Op::sqrt:
      if (a < 0.0) eval_fail(op, "square root of a negative number");
      return std::sqrt(a);
    case Op::abs: return std::abs(a);
    default: eval_fail(op, "not a unary operation");
  }
}

inline double apply2(Op op, double a, double b) {
  switch (op) {
    case Op::add: return checked(op, a + b);
    case Op::sub: return checked(op, a - b);
    case Op::mul: return checked(op, a * b);
    case Op::div:
      if (b == 0.0) eval_fail(op, "division by zero");
      return checked(op, a / b);
    case Op::min: return std::min(a, b);
    case Op::max: return std::max(a, b);
    case Op::pow: return checked(op, std::pow(a, b));
    default: eval_fail(op, "not a binary operation");
  }
}

double moment(Op op, int index, const MeasureView* mu, const MeasureView* nu) {
  const bool is_mu = op == Op::mean_mu || op == Op::var_mu || op == Op::m2_mu;
  const MeasureView* m = is_mu ? mu : nu;
  if (m == nullptr || m->dim() == 0) {
    eval_fail(op, is_mu ? "measure slot mu is not available"
                        : "measure slot nu is not available");
  }
  const Moments& mo = m->moments();
  switch (op) {
    case Op::mean_mu:
    case Op::mean_nu: return mo.mean.at(static_cast<std::size_t>(index));
    case Op::var_mu:
    case Op::var_nu: return mo.var.at(static_cast<std::size_t>(index));
    default: return mo.m2;
  }
}

bool is_leaf(Op op) { return op <= Op::m2_nu; }
bool is_moment(Op op) { return op >= Op::mean_mu && op <= Op::m2_nu; }
int arity(Op op) {
  if (is_leaf(op)) return 0;
  if (op == Op::neg || (op >= Op::sin && op <= Op::abs)) return 1;
  return 2;
}

}  // namespace

CoeffExpr parse_coeff(const std::string& src, int d1, int d2,
                      const ParseOptions& opts) {
  require(d1 >= 1 && d2 >= 1, "coefficient dimensions must be positive");
  bool blank = true;
  for (char c : src) blank = blank && std::isspace(static_cast<unsigned char>(c));
  if (blank) throw ParseError("empty expression", 1, 1);
  Parser p(src, d1, d2, opts);
  return CoeffExpr{p.parse(), d1, d2};
}

std::string print_coeff(const CoeffExpr& e) {
  std::string out;
  print_expr(e.root, out);
  return out;
}

CompiledCoeff::CompiledCoeff(const CoeffExpr& e) : d1_(e.d1), d2_(e.d2) {
  int depth = 0;
  auto emit = [&](auto&& self, const Expr& n) -> void {
    for (const auto& a : n.args) self(self, a);
    code_.push_back({n.op, n.value, n.index});
    if (n.op == Op::y) reads_y_ = true;
    if (n.op == Op::x || n.op == Op::y || is_moment(n.op)) constant_ = false;
    depth += 1 - arity(n.op);
    max_stack_ = std::max(max_stack_, depth);
  };
  emit(emit, e.root);
}

double CompiledCoeff::eval(const EvalPoint& p) const {
  double out = 0.0;
  const MeasureView empty;
  eval_batch(p.x, p.y, 1, p.mu ? *p.mu : empty, p.nu ? *p.nu : empty, &out, 1);
  return out;
}

void CompiledCoeff::eval_batch(const double* x, const double* y, std::size_t n,
                               const MeasureView& mu, const MeasureView& nu,
                               double* out, std::size_t out_stride) const {
  constexpr std::size_t kBlock = 64;
  thread_local std::vector<double> scratch;
  scratch.resize(static_cast<std::size_t>(std::max(max_stack_, 1)) * kBlock);
  const auto sx = static_cast<std::size_t>(d1_);
  const auto sy = static_cast<std::size_t>(d2_);
  for (std::size_t base = 0; base < n; base += kBlock) {
    const std::size_t m = std::min(kBlock, n - base);
    int top = 0;
    for (const Instr& ins : code_) {
      if (is_leaf(ins.op)) {
        double* dst = scratch.data() + static_cast<std::size_t>(top) * kBlock;
        if (ins.op == Op::literal) {
          std::fill(dst, dst + m, ins.value);
        } else if (ins.op == Op::x) {
          for (std::size_t i = 0; i < m; ++i) dst[i] = x[(base + i) * sx + ins.index];
        } else if (ins.op == Op::y) {
          if (y == nullptr) eval_fail(ins.op, "fast variable is not available");
          for (std::size_t i = 0; i < m; ++i) dst[i] = y[(base + i) * sy + ins.index];
        } else {
          std::fill(dst, dst + m, moment(ins.op, ins.index, &mu, &nu));
        }
        ++top;
      } else if (arity(ins.op) == 1) {
        double* a = scratch.data() + static_cast<std::size_t>(top - 1) * kBlock;
        for (std::size_t i = 0; i < m; ++i) a[i] = apply1(ins.op, a[i]);
      } else {
        double* a = scratch.data() + static_cast<std::size_t>(top - 2) * kBlock;
        const double* b = a + kBlock;
        for (std::size_t i = 0; i < m; ++i) a[i] = apply2(ins.op, a[i], b[i]);
        --top;
      }
    }
    for (std::size_t i = 0; i < m; ++i) out[(base + i) * out_stride] = scratch[i];
  }
}

double eval_coeff(const CoeffExpr& e, const EvalPoint& p) {
  return CompiledCoeff(e).eval(p);
}

}  // namespace mmv
