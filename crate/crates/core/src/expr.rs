//! Entropy-query expressions and their text syntax.
//!
//! ```text
//! query  := kind '[' expr (',' expr)* ']'
//! expr   := term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := var | int | '(' expr ')' | '-' factor
//! var    := uppercase letter, then optional digits
//! ```
//!
//! Parsing performs no algebraic simplification; the printed form of a
//! parsed query is a faithful witness of what was evaluated.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    /// Non-negative integer literal, embedded in the ambient field at evaluation.
    Const(BigUint),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn int(n: u64) -> Expr {
        Expr::Const(BigUint::from(n))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Expr) -> Expr {
        Expr::Neg(Box::new(a))
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Const(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) => a.collect_vars(out),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Var(_) | Expr::Const(_) => 4,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) => f.write_str(v),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Add(a, b) => {
                a.write_child(f, 1)?;
                f.write_str("+")?;
                b.write_child(f, 2)
            }
            Expr::Sub(a, b) => {
                a.write_child(f, 1)?;
                f.write_str("-")?;
                b.write_child(f, 2)
            }
            Expr::Mul(a, b) => {
                a.write_child(f, 2)?;
                f.write_str("*")?;
                b.write_child(f, 3)
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_child(f, 4)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    Shannon,
    Min,
    Collision,
    Ruzsa,
}

impl QueryKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            QueryKind::Shannon => "H",
            QueryKind::Min => "Hmin",
            QueryKind::Collision => "H2",
            QueryKind::Ruzsa => "dR",
        }
    }

    fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "H" => QueryKind::Shannon,
            "Hmin" => QueryKind::Min,
            "H2" => QueryKind::Collision,
            "dR" => QueryKind::Ruzsa,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryAst {
    pub kind: QueryKind,
    pub components: Vec<Expr>,
}

impl QueryAst {
    pub fn new(kind: QueryKind, components: Vec<Expr>) -> Self {
        Self { kind, components }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        self.components.iter().flat_map(|c| c.variables()).collect()
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.kind.keyword())?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for QueryAst {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_query(s)
    }
}

pub fn parse_query(text: &str) -> Result<QueryAst> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0 };
    p.skip_ws();
    let kind_start = p.pos;
    while p.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
        p.pos += 1;
    }
    let word: String = p.chars[kind_start..p.pos].iter().collect();
    let kind = QueryKind::from_keyword(&word).ok_or_else(|| Error::Syntax {
        column: kind_start + 1,
        message: format!("unknown query kind `{word}` (expected H, Hmin, H2 or dR)"),
    })?;
    p.skip_ws();
    p.expect('[')?;
    p.skip_ws();
    if p.peek() == Some(']') {
        return Err(p.error("empty query"));
    }
    let mut components = vec![p.expr()?];
    loop {
        p.skip_ws();
        match p.peek() {
            Some(',') => {
                p.pos += 1;
                components.push(p.expr()?);
            }
            Some(']') => {
                p.pos += 1;
                break;
            }
            _ => return Err(p.error("expected `,` or `]`")),
        }
    }
    p.skip_ws();
    if p.pos != p.chars.len() {
        return Err(p.error("trailing input"));
    }
    Ok(QueryAst { kind, components })
}

/// Parses a bare expression (no kind or brackets).
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.chars.len() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn error(&self, message: &str) -> Error {
        let found = match self.peek() {
            Some(c) => format!("`{c}`"),
            None => "end of input".into(),
        };
        Error::Syntax { column: self.pos + 1, message: format!("{message}, found {found}") }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    lhs = Expr::add(lhs, self.term()?);
                }
                Some('-') => {
                    self.pos += 1;
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            self.skip_ws();
            if self.peek() == Some('*') {
                self.pos += 1;
                lhs = Expr::mul(lhs, self.factor()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::neg(self.factor()?))
            }
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_uppercase() => {
                let start = self.pos;
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                Ok(Expr::Var(self.chars[start..self.pos].iter().collect()))
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let digits: String = self.chars[start..self.pos].iter().collect();
                Ok(Expr::Const(digits.parse().expect("ascii digits")))
            }
            _ => Err(self.error("expected a variable, integer, `(` or `-`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(n: &str) -> Expr {
        Expr::var(n)
    }

    #[test]
    fn parses_examples() {
        let q = parse_query("H[X*(Y+Z)]").unwrap();
        assert_eq!(q.kind, QueryKind::Shannon);
        assert_eq!(q.components, vec![Expr::mul(v("X"), Expr::add(v("Y"), v("Z")))]);

        let q = parse_query("H[X*Y, X*Z]").unwrap();
        assert_eq!(q.components.len(), 2);
        assert_eq!(q.to_string(), "H[X*Y, X*Z]");

        assert_eq!(parse_query("Hmin[X1]").unwrap().kind, QueryKind::Min);
        assert_eq!(parse_query("H2[X]").unwrap().kind, QueryKind::Collision);
    }

    #[test]
    fn syntax_errors_report_columns() {
        match parse_query("H[X+*Y]") {
            Err(Error::Syntax { column, .. }) => assert_eq!(column, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_query("H[]"), Err(Error::Syntax { column: 3, .. })));
        assert!(matches!(parse_query("K[X]"), Err(Error::Syntax { column: 1, .. })));
        assert!(matches!(parse_query("H[X"), Err(Error::Syntax { column: 4, .. })));
        assert!(parse_query("H[x]").is_err());
        assert!(parse_query("H[X] extra").is_err());
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse_expr("X+Y*Z").unwrap(), Expr::add(v("X"), Expr::mul(v("Y"), v("Z"))));
        assert_eq!(parse_expr("X-Y-Z").unwrap(), Expr::sub(Expr::sub(v("X"), v("Y")), v("Z")));
        assert_eq!(parse_expr("-X*Y").unwrap(), Expr::mul(Expr::neg(v("X")), v("Y")));
        assert_eq!(parse_expr("X*-Y").unwrap(), Expr::mul(v("X"), Expr::neg(v("Y"))));
    }

    #[test]
    fn printer_examples() {
        let q = QueryAst::new(QueryKind::Shannon, vec![Expr::mul(v("X"), Expr::add(v("Y"), v("Z")))]);
        assert_eq!(q.to_string(), "H[X*(Y+Z)]");
        let q = QueryAst::new(QueryKind::Ruzsa, vec![v("X"), Expr::neg(v("Y"))]);
        assert_eq!(q.to_string(), "dR[X, -Y]");
        let q = QueryAst::new(QueryKind::Shannon, vec![Expr::neg(Expr::neg(v("X")))]);
        assert_eq!(q.to_string(), "H[-(-X)]");
        assert_eq!(parse_query("H[-(-X)]").unwrap(), q);
        assert_eq!(Expr::sub(v("X"), Expr::sub(v("Y"), v("Z"))).to_string(), "X-(Y-Z)");
        assert_eq!(Expr::mul(v("X"), Expr::mul(v("Y"), v("Z"))).to_string(), "X*(Y*Z)");
        assert_eq!(Expr::neg(Expr::mul(v("X"), v("Y"))).to_string(), "-(X*Y)");
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u8..5, proptest::option::of(0u8..20)).prop_map(|(c, d)| {
                let mut name = ((b'X' + c % 3) as char).to_string();
                if let Some(d) = d {
                    name.push_str(&d.to_string());
                }
                Expr::Var(name)
            }),
            (0u64..1000).prop_map(Expr::int),
        ];
        leaf.prop_recursive(6, 64, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
                inner.prop_map(Expr::neg),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn print_parse_round_trip(
            comps in proptest::collection::vec(arb_expr(), 1..4),
            kind in prop_oneof![
                Just(QueryKind::Shannon), Just(QueryKind::Min),
                Just(QueryKind::Collision), Just(QueryKind::Ruzsa)
            ],
        ) {
            let ast = QueryAst::new(kind, comps);
            let text = ast.to_string();
            let back = parse_query(&text).unwrap();
            prop_assert_eq!(&back, &ast);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
