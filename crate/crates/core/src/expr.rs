//! Small arithmetic expression language for problem-file scalar fields.
//!
//! Grammar: number literals, variables from a declared set, binary `+ - * / ^`
//! (with `^` right-associative and binding tighter than unary minus), unary
//! minus, and the functions `sin cos exp log sqrt abs min max tanh`. Errors
//! carry the byte offset of the offending token.

use std::fmt;

/// Parse or evaluation error with a byte offset into the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExprError {
    pub kind: ExprErrorKind,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprErrorKind {
    UnexpectedChar(char),
    InvalidNumber,
    UnknownVariable(String),
    UnknownFunction(String),
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    UnexpectedToken,
    UnexpectedEnd,
    TrailingInput,
    DivisionByZero,
    LogDomain,
    SqrtDomain,
    NonFiniteResult,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ExprErrorKind::InvalidNumber => write!(f, "invalid number literal"),
            ExprErrorKind::UnknownVariable(name) => write!(f, "unknown identifier '{name}'"),
            ExprErrorKind::UnknownFunction(name) => write!(f, "unknown function '{name}'"),
            ExprErrorKind::ArityMismatch {
                name,
                expected,
                found,
            } => write!(
                f,
                "function '{name}' expects {expected} argument(s), found {found}"
            ),
            ExprErrorKind::UnexpectedToken => write!(f, "unexpected token"),
            ExprErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ExprErrorKind::TrailingInput => write!(f, "trailing input after expression"),
            ExprErrorKind::DivisionByZero => write!(f, "division by zero"),
            ExprErrorKind::LogDomain => write!(f, "log of a non-positive value"),
            ExprErrorKind::SqrtDomain => write!(f, "sqrt of a negative value"),
            ExprErrorKind::NonFiniteResult => write!(f, "result is not a number"),
        }?;
        write!(f, " at byte {}", self.offset)
    }
}

impl std::error::Error for ExprError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
    Tanh,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Tanh => "tanh",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Num {
        value: f64,
        off: usize,
    },
    Var {
        index: usize,
        off: usize,
    },
    Neg {
        arg: Box<Node>,
        off: usize,
    },
    Bin {
        op: BinOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
        off: usize,
    },
    Call {
        func: Func,
        args: Vec<Node>,
        off: usize,
    },
}

/// A parsed, validated expression over a fixed variable set.
#[derive(Clone, Debug)]
pub struct Expr {
    root: Node,
    vars: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a str,
    tokens: Vec<(Tok, usize, usize)>, // token, byte offset, byte length
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Self, ExprError> {
        let bytes = src.as_bytes();
        let mut tokens = Vec::new();
        let mut i = 0usize;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            let tok = match c {
                '+' => {
                    i += 1;
                    Tok::Plus
                }
                '-' => {
                    i += 1;
                    Tok::Minus
                }
                '*' => {
                    i += 1;
                    Tok::Star
                }
                '/' => {
                    i += 1;
                    Tok::Slash
                }
                '^' => {
                    i += 1;
                    Tok::Caret
                }
                '(' => {
                    i += 1;
                    Tok::LParen
                }
                ')' => {
                    i += 1;
                    Tok::RParen
                }
                ',' => {
                    i += 1;
                    Tok::Comma
                }
                '0'..='9' | '.' => {
                    let mut j = i;
                    let mut saw_digit = false;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                        saw_digit = true;
                    }
                    if j < bytes.len() && bytes[j] == b'.' {
                        j += 1;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                            saw_digit = true;
                        }
                    }
                    if !saw_digit {
                        return Err(ExprError {
                            kind: ExprErrorKind::InvalidNumber,
                            offset: start,
                        });
                    }
                    // Exponent part only if followed by digits (optionally
                    // signed); otherwise the 'e' starts the next identifier.
                    if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                        let mut k = j + 1;
                        if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                            k += 1;
                        }
                        if k < bytes.len() && bytes[k].is_ascii_digit() {
                            while k < bytes.len() && bytes[k].is_ascii_digit() {
                                k += 1;
                            }
                            j = k;
                        }
                    }
                    i = j;
                    let text = &src[start..j];
                    let value: f64 = text.parse().map_err(|_| ExprError {
                        kind: ExprErrorKind::InvalidNumber,
                        offset: start,
                    })?;
                    Tok::Num(value)
                }
                'a'..='z' | 'A'..='Z' | '_' => {
                    let mut j = i;
                    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')
                    {
                        j += 1;
                    }
                    i = j;
                    Tok::Ident
                }
                other => {
                    return Err(ExprError {
                        kind: ExprErrorKind::UnexpectedChar(other),
                        offset: start,
                    })
                }
            };
            tokens.push((tok, start, i - start));
        }
        Ok(Self {
            src,
            tokens,
            pos: 0,
        })
    }

    fn peek(&self) -> Option<(Tok, usize)> {
        self.tokens.get(self.pos).map(|&(t, o, _)| (t, o))
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn text(&self, idx: usize) -> &str {
        let (_, off, len) = self.tokens[idx];
        &self.src[off..off + len]
    }

    fn end_offset(&self) -> usize {
        self.src.len()
    }
}

// Binding powers: + - (1,2) < * / (3,4) < unary minus (5) < ^ (7,6 right-assoc).
const BP_ADD: (u8, u8) = (1, 2);
const BP_MUL: (u8, u8) = (3, 4);
const BP_NEG: u8 = 5;
const BP_POW: (u8, u8) = (7, 6);

struct Parser<'a> {
    lx: Lexer<'a>,
    vars: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn parse_expr(&mut self, min_bp: u8) -> Result<Node, ExprError> {
        let mut lhs = self.parse_prefix()?;
        while let Some((tok, off)) = self.lx.peek() {
            let (op, l_bp, r_bp) = match tok {
                Tok::Plus => (BinOp::Add, BP_ADD.0, BP_ADD.1),
                Tok::Minus => (BinOp::Sub, BP_ADD.0, BP_ADD.1),
                Tok::Star => (BinOp::Mul, BP_MUL.0, BP_MUL.1),
                Tok::Slash => (BinOp::Div, BP_MUL.0, BP_MUL.1),
                Tok::Caret => (BinOp::Pow, BP_POW.0, BP_POW.1),
                _ => break,
            };
            if l_bp < min_bp {
                break;
            }
            self.lx.next();
            let rhs = self.parse_expr(r_bp)?;
            lhs = Node::Bin {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                off,
            };
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Node, ExprError> {
        let (tok, off) = self.lx.next().ok_or(ExprError {
            kind: ExprErrorKind::UnexpectedEnd,
            offset: self.lx.end_offset(),
        })?;
        match tok {
            Tok::Num(value) => Ok(Node::Num { value, off }),
            Tok::Minus => {
                let arg = self.parse_expr(BP_NEG)?;
                Ok(Node::Neg {
                    arg: Box::new(arg),
                    off,
                })
            }
            Tok::LParen => {
                let inner = self.parse_expr(0)?;
                match self.lx.next() {
                    Some((Tok::RParen, _)) => Ok(inner),
                    Some((_, o)) => Err(ExprError {
                        kind: ExprErrorKind::UnexpectedToken,
                        offset: o,
                    }),
                    None => Err(ExprError {
                        kind: ExprErrorKind::UnexpectedEnd,
                        offset: self.lx.end_offset(),
                    }),
                }
            }
            Tok::Ident => {
                let name = self.lx.text(self.lx.pos - 1).to_string();
                if matches!(self.lx.peek(), Some((Tok::LParen, _))) {
                    let func = Func::lookup(&name).ok_or(ExprError {
                        kind: ExprErrorKind::UnknownFunction(name.clone()),
                        offset: off,
                    })?;
                    self.lx.next(); // consume '('
                    let mut args = Vec::new();
                    if matches!(self.lx.peek(), Some((Tok::RParen, _))) {
                        self.lx.next();
                    } else {
                        loop {
                            args.push(self.parse_expr(0)?);
                            match self.lx.next() {
                                Some((Tok::Comma, _)) => continue,
                                Some((Tok::RParen, _)) => break,
                                Some((_, o)) => {
                                    return Err(ExprError {
                                        kind: ExprErrorKind::UnexpectedToken,
                                        offset: o,
                                    })
                                }
                                None => {
                                    return Err(ExprError {
                                        kind: ExprErrorKind::UnexpectedEnd,
                                        offset: self.lx.end_offset(),
                                    })
                                }
                            }
                        }
                    }
                    if args.len() != func.arity() {
                        return Err(ExprError {
                            kind: ExprErrorKind::ArityMismatch {
                                name,
                                expected: func.arity(),
                                found: args.len(),
                            },
                            offset: off,
                        });
                    }
                    Ok(Node::Call { func, args, off })
                } else {
                    let index = self.vars.iter().position(|v| *v == name).ok_or(ExprError {
                        kind: ExprErrorKind::UnknownVariable(name.clone()),
                        offset: off,
                    })?;
                    Ok(Node::Var { index, off })
                }
            }
            _ => Err(ExprError {
                kind: ExprErrorKind::UnexpectedToken,
                offset: off,
            }),
        }
    }
}

impl Expr {
    /// Parses `text` against the declared variable set; identifiers outside
    /// the set and arity mistakes are rejected at parse time.
    pub fn parse(text: &str, allowed_vars: &[&str]) -> Result<Expr, ExprError> {
        let lx = Lexer::tokenize(text)?;
        let mut parser = Parser {
            lx,
            vars: allowed_vars,
        };
        let root = parser.parse_expr(0)?;
        if let Some((_, off)) = parser.lx.peek() {
            return Err(ExprError {
                kind: ExprErrorKind::TrailingInput,
                offset: off,
            });
        }
        Ok(Expr {
            root,
            vars: allowed_vars.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// IEEE double evaluation; log/sqrt of out-of-domain arguments, division
    /// by zero, and NaN results are reported with their source offset.
    pub fn eval(&self, values: &[f64]) -> Result<f64, ExprError> {
        assert_eq!(
            values.len(),
            self.vars.len(),
            "binding count must match the declared variable set"
        );
        eval_node(&self.root, values)
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Whether the expression references the variable at `index`.
    pub fn uses_var(&self, index: usize) -> bool {
        fn walk(n: &Node, index: usize) -> bool {
            match n {
                Node::Num { .. } => false,
                Node::Var { index: i, .. } => *i == index,
                Node::Neg { arg, .. } => walk(arg, index),
                Node::Bin { lhs, rhs, .. } => walk(lhs, index) || walk(rhs, index),
                Node::Call { args, .. } => args.iter().any(|a| walk(a, index)),
            }
        }
        walk(&self.root, index)
    }

    /// Structural equality ignoring source offsets.
    pub fn structurally_eq(&self, other: &Expr) -> bool {
        fn eq(a: &Node, b: &Node) -> bool {
            match (a, b) {
                (Node::Num { value: x, .. }, Node::Num { value: y, .. }) => {
                    x.to_bits() == y.to_bits()
                }
                (Node::Var { index: x, .. }, Node::Var { index: y, .. }) => x == y,
                (Node::Neg { arg: x, .. }, Node::Neg { arg: y, .. }) => eq(x, y),
                (
                    Node::Bin {
                        op: xo,
                        lhs: xl,
                        rhs: xr,
                        ..
                    },
                    Node::Bin {
                        op: yo,
                        lhs: yl,
                        rhs: yr,
                        ..
                    },
                ) => xo == yo && eq(xl, yl) && eq(xr, yr),
                (
                    Node::Call {
                        func: xf, args: xa, ..
                    },
                    Node::Call {
                        func: yf, args: ya, ..
                    },
                ) => xf == yf && xa.len() == ya.len() && xa.iter().zip(ya).all(|(p, q)| eq(p, q)),
                _ => false,
            }
        }
        self.vars == other.vars && eq(&self.root, &other.root)
    }
}

fn eval_node(node: &Node, values: &[f64]) -> Result<f64, ExprError> {
    let (result, off) = match node {
        Node::Num { value, off } => (*value, *off),
        Node::Var { index, off } => (values[*index], *off),
        Node::Neg { arg, off } => (-eval_node(arg, values)?, *off),
        Node::Bin { op, lhs, rhs, off } => {
            let a = eval_node(lhs, values)?;
            let b = eval_node(rhs, values)?;
            let v = match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(ExprError {
                            kind: ExprErrorKind::DivisionByZero,
                            offset: *off,
                        });
                    }
                    a / b
                }
                BinOp::Pow => a.powf(b),
            };
            (v, *off)
        }
        Node::Call { func, args, off } => {
            let a = eval_node(&args[0], values)?;
            let v = match func {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
                Func::Tanh => a.tanh(),
                Func::Abs => a.abs(),
                Func::Log => {
                    if a <= 0.0 {
                        return Err(ExprError {
                            kind: ExprErrorKind::LogDomain,
                            offset: *off,
                        });
                    }
                    a.ln()
                }
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(ExprError {
                            kind: ExprErrorKind::SqrtDomain,
                            offset: *off,
                        });
                    }
                    a.sqrt()
                }
                Func::Min => a.min(eval_node(&args[1], values)?),
                Func::Max => a.max(eval_node(&args[1], values)?),
            };
            (v, *off)
        }
    };
    if result.is_nan() {
        return Err(ExprError {
            kind: ExprErrorKind::NonFiniteResult,
            offset: off,
        });
    }
    Ok(result)
}

// Printing precedence levels, mirroring the parser's.
fn node_prec(n: &Node) -> u8 {
    match n {
        Node::Num { .. } | Node::Var { .. } | Node::Call { .. } => 5,
        Node::Bin { op: BinOp::Pow, .. } => 4,
        Node::Neg { .. } => 3,
        Node::Bin {
            op: BinOp::Mul | BinOp::Div,
            ..
        } => 2,
        Node::Bin { .. } => 1,
    }
}

fn write_node(out: &mut String, n: &Node, vars: &[String]) {
    match n {
        Node::Num { value, .. } => out.push_str(&format!("{value}")),
        Node::Var { index, .. } => out.push_str(&vars[*index]),
        Node::Neg { arg, .. } => {
            out.push('-');
            write_child(out, arg, node_prec(n), false, vars);
        }
        Node::Bin { op, lhs, rhs, .. } => {
            let prec = node_prec(n);
            let (sym, right_assoc) = match op {
                BinOp::Add => ('+', false),
                BinOp::Sub => ('-', false),
                BinOp::Mul => ('*', false),
                BinOp::Div => ('/', false),
                BinOp::Pow => ('^', true),
            };
            // Parenthesize the non-associative side on precedence ties.
            if right_assoc {
                write_child(out, lhs, prec, true, vars);
                out.push(sym);
                write_child(out, rhs, prec, false, vars);
            } else {
                write_child(out, lhs, prec, false, vars);
                out.push(sym);
                write_child(out, rhs, prec, true, vars);
            }
        }
        Node::Call { func, args, .. } => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_node(out, a, vars);
            }
            out.push(')');
        }
    }
}

fn write_child(out: &mut String, child: &Node, parent_prec: u8, strict: bool, vars: &[String]) {
    let cp = node_prec(child);
    let needs_parens = if strict {
        cp <= parent_prec
    } else {
        cp < parent_prec
    };
    if needs_parens {
        out.push('(');
        write_node(out, child, vars);
        out.push(')');
    } else {
        write_node(out, child, vars);
    }
}

impl fmt::Display for Expr {
    /// Canonical form: re-parsing it yields a structurally identical AST.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_node(&mut out, &self.root, &self.vars);
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Expr {
        Expr::parse(text, &["t", "s", "r", "x1", "x2"]).unwrap()
    }

    #[test]
    fn precedence_mul_over_add() {
        assert_eq!(p("1+2*3").eval(&[0.0; 5]).unwrap(), 7.0);
    }

    #[test]
    fn caret_is_right_associative() {
        assert_eq!(p("2^3^2").eval(&[0.0; 5]).unwrap(), 512.0);
    }

    #[test]
    fn unary_minus_binds_below_pow() {
        assert_eq!(p("-2^2").eval(&[0.0; 5]).unwrap(), -4.0);
        assert_eq!(p("(-2)^2").eval(&[0.0; 5]).unwrap(), 4.0);
        assert_eq!(p("2^-1").eval(&[0.0; 5]).unwrap(), 0.5);
    }

    #[test]
    fn pythagorean_identity() {
        let e = p("sin(t)^2+cos(t)^2");
        let v = e.eval(&[0.7, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn variable_bindings() {
        let e = p("t*x1");
        assert_eq!(e.eval(&[2.0, 0.0, 0.0, 3.0, 0.0]).unwrap(), 6.0);
    }

    #[test]
    fn exp_reference_value() {
        let e = p("exp(-t)");
        let v = e.eval(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn log_domain_error_at_zero() {
        let e = p("log(t)");
        let err = e.eval(&[0.0; 5]).unwrap_err();
        assert_eq!(err.kind, ExprErrorKind::LogDomain);
        assert_eq!(err.offset, 0);
    }

    #[test]
    fn division_by_zero_reports_offset() {
        let e = p("1/(t-1)");
        let err = e.eval(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err.kind, ExprErrorKind::DivisionByZero);
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn unknown_identifier_with_offset() {
        let err = Expr::parse("2*y", &["t"]).unwrap_err();
        assert_eq!(err.kind, ExprErrorKind::UnknownVariable("y".into()));
        assert_eq!(err.offset, 2);
    }

    #[test]
    fn arity_mismatch_with_offset() {
        let err = Expr::parse("1+min(2)", &[]).unwrap_err();
        assert_eq!(
            err.kind,
            ExprErrorKind::ArityMismatch {
                name: "min".into(),
                expected: 2,
                found: 1
            }
        );
        assert_eq!(err.offset, 2);
    }

    #[test]
    fn errors_are_deterministic() {
        let e1 = Expr::parse("3 + * 4", &[]).unwrap_err();
        let e2 = Expr::parse("3 + * 4", &[]).unwrap_err();
        assert_eq!(e1, e2);
        assert_eq!(e1.offset, 4);
    }

    #[test]
    fn scientific_literals_and_e_identifier_boundary() {
        assert_eq!(p("2e3").eval(&[0.0; 5]).unwrap(), 2000.0);
        assert_eq!(p("1.5e-2").eval(&[0.0; 5]).unwrap(), 0.015);
        // '2exp(t)' is not valid (no implicit multiplication), but '2*exp(0)'
        // must not have its 'e' swallowed by the number literal.
        assert_eq!(p("2*exp(0*t)").eval(&[0.0; 5]).unwrap(), 2.0);
    }

    #[test]
    fn print_parse_fixpoint() {
        for text in [
            "1+2*3",
            "2^3^2",
            "-t^2",
            "(-t)^2",
            "(1+t)*(2-s)",
            "min(t,max(s,r))",
            "sin(t)^2+cos(t)^2",
            "-(t+s)/(r+1)",
            "t/s/r",
            "t-(s-r)",
            "2^-1",
        ] {
            let once = Expr::parse(text, &["t", "s", "r"]).unwrap();
            let printed = once.to_string();
            let twice = Expr::parse(&printed, &["t", "s", "r"]).unwrap();
            assert!(
                once.structurally_eq(&twice),
                "fixpoint failed: {text} -> {printed} -> {twice}"
            );
            assert_eq!(printed, twice.to_string());
        }
    }

    #[test]
    fn uses_var_detection() {
        let e = Expr::parse("2+sin(s)", &["t", "s"]).unwrap();
        assert!(!e.uses_var(0));
        assert!(e.uses_var(1));
    }
}
