//! Concrete plan syntax: parenthesized prefix terms.
//!
//! ```text
//! (groupby (cmap (lambda (p) (bag (tuple (fst p) (snd p)))) (source 0)))
//! (reduce sum (cmap (lambda (x) (bag x)) (source 0)))
//! (repeat (lambda (r) STEP) 10 INIT)
//! ```
//!
//! The expression sublanguage covers tuples, positional field access,
//! arithmetic, comparisons, boolean operators, conditionals, bag literals,
//! lambdas with tuple patterns, application, and the nearest-point and
//! singleton-extraction builtins. Functions passed to cmap must not
//! reference a stream source; the repeat step may.

use crate::error::{Error, Result};
use crate::monoid::Monoid;
use crate::scalar::Scalar;
use crate::term::{AlgebraTerm, BinOp, Builtin, Expr, Pattern};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    LParen,
    RParen,
    Symbol(String),
    Int(i64),
    Float(String),
    Str(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                chars.next();
                bump(c, &mut line, &mut col);
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    chars.next();
                    bump(c, &mut line, &mut col);
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' => {
                chars.next();
                bump(c, &mut line, &mut col);
                out.push(Spanned { token: Token::LParen, line: tline, col: tcol });
            }
            ')' => {
                chars.next();
                bump(c, &mut line, &mut col);
                out.push(Spanned { token: Token::RParen, line: tline, col: tcol });
            }
            '"' => {
                chars.next();
                bump(c, &mut line, &mut col);
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => {
                            bump('"', &mut line, &mut col);
                            break;
                        }
                        Some('\\') => {
                            bump('\\', &mut line, &mut col);
                            match chars.next() {
                                Some(e) => {
                                    bump(e, &mut line, &mut col);
                                    s.push(match e {
                                        'n' => '\n',
                                        't' => '\t',
                                        other => other,
                                    });
                                }
                                None => {
                                    return Err(Error::Parse {
                                        line,
                                        col,
                                        msg: "unterminated string".into(),
                                    })
                                }
                            }
                        }
                        Some(c) => {
                            bump(c, &mut line, &mut col);
                            s.push(c);
                        }
                        None => {
                            return Err(Error::Parse {
                                line,
                                col,
                                msg: "unterminated string".into(),
                            })
                        }
                    }
                }
                out.push(Spanned { token: Token::Str(s), line: tline, col: tcol });
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                    bump(c, &mut line, &mut col);
                }
                let token = if let Ok(i) = s.parse::<i64>() {
                    Token::Int(i)
                } else if s.parse::<f64>().is_ok() {
                    Token::Float(s)
                } else {
                    Token::Symbol(s)
                };
                out.push(Spanned { token, line: tline, col: tcol });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Sexp {
    Atom(Spanned),
    List(Vec<Sexp>, usize, usize),
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom(s) => (s.line, s.col),
            Sexp::List(_, l, c) => (*l, *c),
        }
    }
}

fn parse_sexp(tokens: &[Spanned], at: &mut usize) -> Result<Sexp> {
    let Some(t) = tokens.get(*at) else {
        return Err(Error::Parse { line: 0, col: 0, msg: "unexpected end of input".into() });
    };
    *at += 1;
    match &t.token {
        Token::LParen => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*at) {
                    Some(Spanned { token: Token::RParen, .. }) => {
                        *at += 1;
                        return Ok(Sexp::List(items, t.line, t.col));
                    }
                    Some(_) => items.push(parse_sexp(tokens, at)?),
                    None => {
                        return Err(Error::Parse {
                            line: t.line,
                            col: t.col,
                            msg: "unclosed parenthesis".into(),
                        })
                    }
                }
            }
        }
        Token::RParen => Err(Error::Parse {
            line: t.line,
            col: t.col,
            msg: "unexpected `)`".into(),
        }),
        _ => Ok(Sexp::Atom(t.clone())),
    }
}

fn err<T>(sexp: &Sexp, msg: impl Into<String>) -> Result<T> {
    let (line, col) = sexp.pos();
    Err(Error::Parse { line, col, msg: msg.into() })
}

/// Parses one plan. The result uses only the user-facing constructors, with
/// `repeat` permitted at the root only.
pub fn parse_plan<F: Scalar>(text: &str) -> Result<AlgebraTerm<F>> {
    let tokens = tokenize(text)?;
    let mut at = 0;
    let sexp = parse_sexp(&tokens, &mut at)?;
    if at != tokens.len() {
        let t = &tokens[at];
        return Err(Error::Parse {
            line: t.line,
            col: t.col,
            msg: "trailing input after the plan".into(),
        });
    }
    let term = parse_term(&sexp, true)?;
    validate(&term, &sexp)?;
    Ok(term)
}

fn head<'s>(items: &'s [Sexp], sexp: &Sexp) -> Result<(&'s str, &'s [Sexp])> {
    match items.first() {
        Some(Sexp::Atom(Spanned { token: Token::Symbol(s), .. })) => Ok((s.as_str(), &items[1..])),
        _ => err(sexp, "expected an operator symbol"),
    }
}

fn parse_term<F: Scalar>(sexp: &Sexp, root: bool) -> Result<AlgebraTerm<F>> {
    match sexp {
        Sexp::Atom(Spanned { token: Token::Symbol(s), .. }) => Ok(AlgebraTerm::Var(s.clone())),
        Sexp::Atom(_) => err(sexp, "expected a term"),
        Sexp::List(items, ..) => {
            let (op, args) = head(items, sexp)?;
            match op {
                "source" => match args {
                    [Sexp::Atom(Spanned { token: Token::Int(i), .. })] if *i >= 0 => {
                        Ok(AlgebraTerm::Source(*i as usize))
                    }
                    _ => err(sexp, "source takes one non-negative index"),
                },
                "cmap" => match args {
                    [f, x] => Ok(AlgebraTerm::CMap(
                        parse_expr(f)?,
                        Box::new(parse_term(x, false)?),
                    )),
                    _ => err(sexp, format!("cmap takes 2 arguments, got {}", args.len())),
                },
                "groupby" => match args {
                    [x] => Ok(AlgebraTerm::GroupBy(Box::new(parse_term(x, false)?))),
                    _ => err(sexp, format!("groupby takes 1 argument, got {}", args.len())),
                },
                "cogroup" => match args {
                    [a, b] => Ok(AlgebraTerm::CoGroup(
                        Box::new(parse_term(a, false)?),
                        Box::new(parse_term(b, false)?),
                    )),
                    _ => err(sexp, format!("cogroup takes 2 arguments, got {}", args.len())),
                },
                "reduce" => match args {
                    [m, x] => Ok(AlgebraTerm::Reduce(
                        parse_monoid(m)?,
                        Box::new(parse_term(x, false)?),
                    )),
                    _ => err(sexp, format!("reduce takes 2 arguments, got {}", args.len())),
                },
                "repeat" => {
                    if !root {
                        return err(sexp, "repeat may only appear at the plan root");
                    }
                    match args {
                        [f, Sexp::Atom(Spanned { token: Token::Int(n), .. }), init] if *n >= 0 => {
                            let (param, body) = parse_repeat_lambda(f)?;
                            Ok(AlgebraTerm::Repeat {
                                param,
                                rounds: *n as usize,
                                init: Box::new(parse_term(init, false)?),
                                body: Box::new(body),
                            })
                        }
                        _ => err(sexp, "repeat takes a lambda, an iteration count, and an initial term"),
                    }
                }
                other => err(sexp, format!("unknown term operator `{other}`")),
            }
        }
    }
}

fn parse_repeat_lambda<F: Scalar>(sexp: &Sexp) -> Result<(String, AlgebraTerm<F>)> {
    let Sexp::List(items, ..) = sexp else {
        return err(sexp, "repeat expects (lambda (x) STEP)");
    };
    let (op, args) = head(items, sexp)?;
    if op != "lambda" {
        return err(sexp, "repeat expects (lambda (x) STEP)");
    }
    match args {
        [Sexp::List(params, ..), body] => match params.as_slice() {
            [Sexp::Atom(Spanned { token: Token::Symbol(p), .. })] => {
                Ok((p.clone(), parse_term(body, false)?))
            }
            _ => err(sexp, "the repeat lambda takes exactly one variable"),
        },
        _ => err(sexp, "repeat expects (lambda (x) STEP)"),
    }
}

fn parse_monoid(sexp: &Sexp) -> Result<Monoid> {
    match sexp {
        Sexp::Atom(Spanned { token: Token::Symbol(s), .. }) => match s.as_str() {
            "sum" | "+" => Ok(Monoid::Sum),
            "prod" | "*" => Ok(Monoid::Prod),
            "union" => Ok(Monoid::Union),
            "and" => Ok(Monoid::And),
            "or" => Ok(Monoid::Or),
            other => err(sexp, format!("unknown monoid name `{other}`")),
        },
        _ => err(sexp, "expected a monoid name"),
    }
}

fn parse_pattern(sexp: &Sexp) -> Result<Pattern> {
    match sexp {
        Sexp::Atom(Spanned { token: Token::Symbol(s), .. }) => {
            if s == "_" {
                Ok(Pattern::Wildcard)
            } else {
                Ok(Pattern::Var(s.clone()))
            }
        }
        Sexp::List(items, ..) => {
            let ps: Result<Vec<Pattern>> = items.iter().map(parse_pattern).collect();
            Ok(Pattern::Tuple(ps?))
        }
        _ => err(sexp, "expected a pattern"),
    }
}

fn parse_expr<F: Scalar>(sexp: &Sexp) -> Result<Expr<F>> {
    match sexp {
        Sexp::Atom(s) => match &s.token {
            Token::Int(i) => Ok(Expr::Lit(Value::Int(*i))),
            Token::Float(text) => match text.parse::<F>() {
                Ok(f) => Ok(Expr::Lit(Value::Float(f))),
                Err(_) => err(sexp, format!("bad float literal `{text}`")),
            },
            Token::Str(v) => Ok(Expr::Lit(Value::str(v))),
            Token::Symbol(name) => match name.as_str() {
                "true" => Ok(Expr::Lit(Value::Bool(true))),
                "false" => Ok(Expr::Lit(Value::Bool(false))),
                "unit" => Ok(Expr::Lit(Value::Unit)),
                _ => Ok(Expr::Var(name.clone())),
            },
            _ => err(sexp, "expected an expression"),
        },
        Sexp::List(items, ..) => {
            let (op, args) = head(items, sexp)?;
            let bin_op = |op: BinOp, args: &[Sexp]| -> Result<Expr<F>> {
                match args {
                    [a, b] => Ok(Expr::Bin(op, Box::new(parse_expr(a)?), Box::new(parse_expr(b)?))),
                    _ => err(sexp, format!("`{}` takes 2 arguments", op.symbol())),
                }
            };
            match op {
                "tuple" => {
                    let es: Result<Vec<Expr<F>>> = args.iter().map(parse_expr).collect();
                    Ok(Expr::Tuple(es?))
                }
                "fst" => match args {
                    [e] => Ok(Expr::Proj(0, Box::new(parse_expr(e)?))),
                    _ => err(sexp, "fst takes 1 argument"),
                },
                "snd" => match args {
                    [e] => Ok(Expr::Proj(1, Box::new(parse_expr(e)?))),
                    _ => err(sexp, "snd takes 1 argument"),
                },
                "get" => match args {
                    [e, Sexp::Atom(Spanned { token: Token::Int(i), .. })] if *i >= 0 => {
                        Ok(Expr::Proj(*i as usize, Box::new(parse_expr(e)?)))
                    }
                    _ => err(sexp, "get takes an expression and a position"),
                },
                "+" => bin_op(BinOp::Add, args),
                "-" => bin_op(BinOp::Sub, args),
                "*" => bin_op(BinOp::Mul, args),
                "/" => bin_op(BinOp::Div, args),
                "=" => bin_op(BinOp::Eq, args),
                "!=" => bin_op(BinOp::Ne, args),
                "<" => bin_op(BinOp::Lt, args),
                "<=" => bin_op(BinOp::Le, args),
                ">" => bin_op(BinOp::Gt, args),
                ">=" => bin_op(BinOp::Ge, args),
                "and" => bin_op(BinOp::And, args),
                "or" => bin_op(BinOp::Or, args),
                "not" => match args {
                    [e] => Ok(Expr::Not(Box::new(parse_expr(e)?))),
                    _ => err(sexp, "not takes 1 argument"),
                },
                "if" => match args {
                    [c, t, e] => Ok(Expr::If(
                        Box::new(parse_expr(c)?),
                        Box::new(parse_expr(t)?),
                        Box::new(parse_expr(e)?),
                    )),
                    _ => err(sexp, "if takes 3 arguments"),
                },
                "bag" => {
                    let mut out = Expr::EmptyBag;
                    for e in args.iter().rev() {
                        let single = Expr::Singleton(Box::new(parse_expr(e)?));
                        out = if matches!(out, Expr::EmptyBag) {
                            single
                        } else {
                            Expr::Union(Box::new(single), Box::new(out))
                        };
                    }
                    Ok(out)
                }
                "union" => match args {
                    [a, b] => Ok(Expr::Union(Box::new(parse_expr(a)?), Box::new(parse_expr(b)?))),
                    _ => err(sexp, "union takes 2 arguments"),
                },
                "lambda" => match args {
                    [Sexp::List(params, ..), body] => {
                        let pattern = match params.as_slice() {
                            [] => return err(sexp, "lambda needs at least one parameter"),
                            [p] => parse_pattern(p)?,
                            ps => {
                                let pats: Result<Vec<Pattern>> =
                                    ps.iter().map(parse_pattern).collect();
                                Pattern::Tuple(pats?)
                            }
                        };
                        Ok(Expr::Lambda(pattern, Box::new(parse_expr(body)?)))
                    }
                    _ => err(sexp, "lambda takes a parameter list and a body"),
                },
                "apply" => match args {
                    [f, rest @ ..] if !rest.is_empty() => {
                        let f = parse_expr(f)?;
                        let arg = if rest.len() == 1 {
                            parse_expr(&rest[0])?
                        } else {
                            let es: Result<Vec<Expr<F>>> = rest.iter().map(parse_expr).collect();
                            Expr::Tuple(es?)
                        };
                        Ok(Expr::Apply(Box::new(f), Box::new(arg)))
                    }
                    _ => err(sexp, "apply takes a function and at least one argument"),
                },
                "closest" => match args {
                    [a, b] => Ok(Expr::Call(Builtin::Closest, vec![parse_expr(a)?, parse_expr(b)?])),
                    _ => err(sexp, "closest takes 2 arguments"),
                },
                "elem" => match args {
                    [e] => Ok(Expr::Call(Builtin::Elem, vec![parse_expr(e)?])),
                    _ => err(sexp, "elem takes 1 argument"),
                },
                // Algebra operators are usable inside expressions.
                "cmap" | "groupby" | "cogroup" | "reduce" | "source" => {
                    Ok(Expr::Alg(Box::new(parse_term(sexp, false)?)))
                }
                other => err(sexp, format!("unknown operator `{other}`")),
            }
        }
    }
}

/// A cmap function must not reach a stream source.
fn validate<F: Scalar>(term: &AlgebraTerm<F>, sexp: &Sexp) -> Result<()> {
    fn walk<F: Scalar>(t: &AlgebraTerm<F>, sexp: &Sexp) -> Result<()> {
        use AlgebraTerm as T;
        match t {
            T::CMap(f, x) => {
                if let Some(s) = f.sources().into_iter().next() {
                    return err(
                        sexp,
                        format!("cmap function references stream source {s}"),
                    );
                }
                walk(x, sexp)
            }
            T::GroupBy(x) | T::Reduce(_, x) => walk(x, sexp),
            T::CoGroup(a, b) => walk(a, sexp).and_then(|_| walk(b, sexp)),
            T::Repeat { init, body, .. } => walk(init, sexp).and_then(|_| walk(body, sexp)),
            _ => Ok(()),
        }
    }
    walk(term, sexp)
}
