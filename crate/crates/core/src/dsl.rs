//! Index-notation equation language.
//!
//! ```text
//! assign ::= name ( "(" idxlist ")" )? "<-" sum
//! sum    ::= ("+" | "-")? term (("+" | "-") term)*
//! term   ::= factor ("*" factor)*
//! factor ::= number | name | name "(" idxlist ")" | "eps" "(" idx "," idx "," idx ")"
//! idxlist ::= (idx ("," idx)*)?
//! ```
//!
//! A bare name is a constant; a field always carries parentheses, so a scalar
//! field reads `s()`.
//!
//! Whitespace and newlines are insignificant and `#` starts a comment that
//! runs to the end of the line. Indices are single letters. Indices that
//! appear on the right-hand side but not on the target are summed over
//! `0..3`, and may appear any number of times in a term.
//!
//! The micromagnetic equation of motion reads:
//!
//! ```text
//! dmdt(i) <-   c1 * eps(i, j, k) * m(j) * H(k)
//!            + c2 * eps(i, j, k) * m(j)
//!            * eps(k, p, q) * m(p) * H(q)
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("eps takes exactly 3 indices, got {got} at {line}:{column}")]
    Arity {
        got: usize,
        line: usize,
        column: usize,
    },
    #[error("target index `{index}` does not appear in term {term}")]
    UnusedFreeIndex { index: Index, term: usize },
}

/// A single-letter tensor index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Index(pub char);

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldRef {
    pub name: String,
    pub indices: Vec<Index>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Const(String),
    Number(f64),
    Field(FieldRef),
    Eps([Index; 3]),
}

impl Factor {
    fn indices(&self) -> &[Index] {
        match self {
            Factor::Field(r) => &r.indices,
            Factor::Eps(ix) => ix,
            Factor::Const(_) | Factor::Number(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub sign: Sign,
    pub factors: Vec<Factor>,
}

impl Term {
    /// All indices of the term in order of first appearance.
    pub fn indices(&self) -> Vec<Index> {
        let mut seen = Vec::new();
        for ix in self.factors.iter().flat_map(Factor::indices) {
            if !seen.contains(ix) {
                seen.push(*ix);
            }
        }
        seen
    }
}

/// A parsed assignment `target <- terms`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub target: FieldRef,
    pub terms: Vec<Term>,
}

/// Free indices (those on the target) and the summed indices of one term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexClassification {
    pub free: Vec<Index>,
    pub bound: Vec<Index>,
}

impl Equation {
    /// Split each term's indices into free and bound sets.
    pub fn classify_indices(&self) -> Result<Vec<IndexClassification>, DslError> {
        let free = &self.target.indices;
        self.terms
            .iter()
            .enumerate()
            .map(|(n, term)| {
                let all = term.indices();
                if let Some(missing) = free.iter().find(|i| !all.contains(i)) {
                    return Err(DslError::UnusedFreeIndex {
                        index: *missing,
                        term: n,
                    });
                }
                Ok(IndexClassification {
                    free: free.clone(),
                    bound: all.into_iter().filter(|i| !free.contains(i)).collect(),
                })
            })
            .collect()
    }
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (n, i) in self.indices.iter().enumerate() {
            if n > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Const(c) => f.write_str(c),
            Factor::Number(x) => write!(f, "{x:?}"),
            Factor::Field(r) => write!(f, "{r}"),
            Factor::Eps([a, b, c]) => write!(f, "eps({a}, {b}, {c})"),
        }
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <-", self.target)?;
        for (n, term) in self.terms.iter().enumerate() {
            match (n, term.sign) {
                (0, Sign::Plus) => f.write_str(" ")?,
                (0, Sign::Minus) => f.write_str(" -")?,
                (_, Sign::Plus) => f.write_str(" + ")?,
                (_, Sign::Minus) => f.write_str(" - ")?,
            }
            for (k, factor) in term.factors.iter().enumerate() {
                if k > 0 {
                    f.write_str(" * ")?;
                }
                write!(f, "{factor}")?;
            }
        }
        Ok(())
    }
}

/// Parse exactly one assignment.
pub fn parse(source: &str) -> Result<Equation, DslError> {
    let mut p = Parser::new(source)?;
    let eq = p.assignment()?;
    if let Some(tok) = p.peek() {
        return Err(p.error_at(tok, "expected end of input"));
    }
    Ok(eq)
}

/// Parse a sequence of assignments, e.g. the contents of a `.dsl` file.
pub fn parse_many(source: &str) -> Result<Vec<Equation>, DslError> {
    let mut p = Parser::new(source)?;
    let mut out = Vec::new();
    while p.peek().is_some() {
        out.push(p.assignment()?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Arrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Name(n) => write!(f, "`{n}`"),
            Tok::Number(x) => write!(f, "number {x}"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Arrow => f.write_str("`<-`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, column, message: String| DslError::Syntax {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '<' if chars.get(i + 1) == Some(&'-') => {
                i += 1;
                Tok::Arrow
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i + 1 < chars.len() && (chars[i + 1].is_ascii_alphanumeric() || chars[i + 1] == '_') {
                    i += 1;
                }
                Tok::Name(chars[start..=i].iter().collect())
            }
            c if c.is_ascii_digit() || c == '.' => {
                while i + 1 < chars.len() && (chars[i + 1].is_ascii_digit() || chars[i + 1] == '.') {
                    i += 1;
                }
                if matches!(chars.get(i + 1), Some('e' | 'E')) {
                    let mut j = i + 2;
                    if matches!(chars.get(j), Some('+' | '-')) {
                        j += 1;
                    }
                    if chars.get(j).is_some_and(char::is_ascii_digit) {
                        while chars.get(j + 1).is_some_and(char::is_ascii_digit) {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..=i].iter().collect();
                let x = text
                    .parse::<f64>()
                    .map_err(|_| err(l0, c0, format!("malformed number `{text}`")))?;
                Tok::Number(x)
            }
            other => return Err(err(l0, c0, format!("unexpected character `{other}`"))),
        };
        i += 1;
        col += i - start;
        out.push(Spanned {
            tok,
            line: l0,
            column: c0,
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn new(src: &str) -> Result<Parser, DslError> {
        let lines: Vec<&str> = src.split('\n').collect();
        let end = (lines.len(), lines.last().map_or(0, |l| l.chars().count()) + 1);
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            end,
        })
    }

    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn peek_tok(&self) -> Option<&Tok> {
        self.peek().map(|s| &s.tok)
    }

    fn error_at(&self, at: &Spanned, message: &str) -> DslError {
        DslError::Syntax {
            line: at.line,
            column: at.column,
            message: format!("{message}, found {}", at.tok),
        }
    }

    fn error_here(&self, message: &str) -> DslError {
        match self.peek() {
            Some(t) => self.error_at(t, message),
            None => DslError::Syntax {
                line: self.end.0,
                column: self.end.1,
                message: format!("{message}, found end of input"),
            },
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), DslError> {
        if self.peek_tok() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(&format!("expected {what}")))
        }
    }

    fn name(&mut self) -> Result<String, DslError> {
        match self.peek_tok() {
            Some(Tok::Name(n)) => {
                let n = n.clone();
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.error_here("expected a name")),
        }
    }

    fn index(&mut self) -> Result<Index, DslError> {
        match self.peek_tok() {
            Some(Tok::Name(n)) if n.chars().count() == 1 => {
                let c = n.chars().next().expect("one char");
                self.pos += 1;
                Ok(Index(c))
            }
            _ => Err(self.error_here("expected a single-letter index")),
        }
    }

    /// `( idx ("," idx)* )`, the opening paren already consumed.
    fn index_list(&mut self) -> Result<Vec<Index>, DslError> {
        if self.peek_tok() == Some(&Tok::RParen) {
            self.pos += 1;
            return Ok(Vec::new());
        }
        let mut out = vec![self.index()?];
        while self.peek_tok() == Some(&Tok::Comma) {
            self.pos += 1;
            out.push(self.index()?);
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        Ok(out)
    }

    fn assignment(&mut self) -> Result<Equation, DslError> {
        let start = self.peek().cloned();
        let name = self.name()?;
        let mut indices = Vec::new();
        if self.peek_tok() == Some(&Tok::LParen) {
            self.pos += 1;
            indices = self.index_list()?;
        }
        for (n, i) in indices.iter().enumerate() {
            if indices[..n].contains(i) {
                let at = start.expect("a name was parsed");
                return Err(DslError::Syntax {
                    line: at.line,
                    column: at.column,
                    message: format!("target index `{i}` repeated"),
                });
            }
        }
        self.expect(Tok::Arrow, "`<-`")?;
        let mut terms = Vec::new();
        let mut sign = match self.peek_tok() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Sign::Minus
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                Sign::Plus
            }
            _ => Sign::Plus,
        };
        loop {
            terms.push(Term {
                sign,
                factors: self.term()?,
            });
            sign = match self.peek_tok() {
                Some(Tok::Plus) => Sign::Plus,
                Some(Tok::Minus) => Sign::Minus,
                _ => break,
            };
            self.pos += 1;
        }
        Ok(Equation {
            target: FieldRef { name, indices },
            terms,
        })
    }

    fn term(&mut self) -> Result<Vec<Factor>, DslError> {
        let mut factors = vec![self.factor()?];
        while self.peek_tok() == Some(&Tok::Star) {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        Ok(factors)
    }

    fn factor(&mut self) -> Result<Factor, DslError> {
        let at = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(self.error_here("expected a factor")),
        };
        match at.tok {
            Tok::Number(x) => {
                self.pos += 1;
                Ok(Factor::Number(x))
            }
            Tok::Name(name) => {
                self.pos += 1;
                if self.peek_tok() != Some(&Tok::LParen) {
                    return Ok(Factor::Const(name));
                }
                self.pos += 1;
                let indices = self.index_list()?;
                if name == "eps" {
                    return match indices[..] {
                        [a, b, c] => Ok(Factor::Eps([a, b, c])),
                        _ => Err(DslError::Arity {
                            got: indices.len(),
                            line: at.line,
                            column: at.column,
                        }),
                    };
                }
                Ok(Factor::Field(FieldRef { name, indices }))
            }
            _ => Err(self.error_at(&at, "expected a number, name or `eps(...)`")),
        }
    }
}

/// The precession/damping equation of motion as written for the engine.
pub const DMDT_SOURCE: &str = "dmdt(i) <-   c1 * eps(i, j, k) * m(j) * H(k)
             + c2 * eps(i, j, k) * m(j)
             * eps(k, p, q) * m(p) * H(q)";

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ix(c: char) -> Index {
        Index(c)
    }

    fn field(name: &str, idx: &[char]) -> Factor {
        Factor::Field(FieldRef {
            name: name.into(),
            indices: idx.iter().map(|&c| Index(c)).collect(),
        })
    }

    #[test]
    fn parses_equation_of_motion() {
        let eq = parse(DMDT_SOURCE).unwrap();
        assert_eq!(eq.target.name, "dmdt");
        assert_eq!(eq.target.indices, vec![ix('i')]);
        assert_eq!(eq.terms.len(), 2);
        assert_eq!(
            eq.terms[0].factors,
            vec![
                Factor::Const("c1".into()),
                Factor::Eps([ix('i'), ix('j'), ix('k')]),
                field("m", &['j']),
                field("H", &['k']),
            ]
        );
        assert_eq!(
            eq.terms[1].factors,
            vec![
                Factor::Const("c2".into()),
                Factor::Eps([ix('i'), ix('j'), ix('k')]),
                field("m", &['j']),
                Factor::Eps([ix('k'), ix('p'), ix('q')]),
                field("m", &['p']),
                field("H", &['q']),
            ]
        );
        assert!(eq.terms.iter().all(|t| t.sign == Sign::Plus));
    }

    #[test]
    fn identity_assignment() {
        let eq = parse("a(i) <- b(i)").unwrap();
        assert_eq!(eq.terms.len(), 1);
        assert_eq!(eq.terms[0].factors, vec![field("b", &['i'])]);
    }

    #[test]
    fn eps_arity() {
        assert!(matches!(
            parse("a(i) <- eps(i,j)"),
            Err(DslError::Arity { got: 2, line: 1, column: 9 })
        ));
        assert!(matches!(parse("a(i) <- eps(i,j,k,l)"), Err(DslError::Arity { got: 4, .. })));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse("a(i) <- b(i) *\n  * c") {
            Err(DslError::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("a(ij) <- b(i)"), Err(DslError::Syntax { .. })));
        assert!(matches!(parse("a(i) b(i)"), Err(DslError::Syntax { .. })));
        assert!(matches!(parse("a(i, i) <- b(i)"), Err(DslError::Syntax { .. })));
        assert!(matches!(parse("a(i) <- b(i) $"), Err(DslError::Syntax { line: 1, column: 14, .. })));
        assert!(matches!(parse("a(i) <-"), Err(DslError::Syntax { .. })));
    }

    #[test]
    fn literals_subtraction_and_scalars() {
        let eq = parse("s <- -2.5e-1 * m(j) * m(j) - x").unwrap();
        assert!(eq.target.indices.is_empty());
        assert_eq!(eq.terms[0].sign, Sign::Minus);
        assert_eq!(eq.terms[0].factors[0], Factor::Number(0.25));
        assert_eq!(eq.terms[1].sign, Sign::Minus);
        assert_eq!(eq.terms[1].factors, vec![Factor::Const("x".into())]);
    }

    #[test]
    fn comments_and_multiple_assignments() {
        let src = "# exchange-free torque\n t(i) <- eps(i,j,k) * m(j) * H(k)\n s <- m(j)*H(j) # projection\n";
        let eqs = parse_many(src).unwrap();
        assert_eq!(eqs.len(), 2);
        assert_eq!(eqs[1].target.name, "s");
    }

    #[test]
    fn classification_of_equation_of_motion() {
        let eq = parse(DMDT_SOURCE).unwrap();
        let cls = eq.classify_indices().unwrap();
        assert_eq!(cls[0].free, vec![ix('i')]);
        assert_eq!(cls[0].bound, vec![ix('j'), ix('k')]);
        assert_eq!(cls[1].free, vec![ix('i')]);
        assert_eq!(cls[1].bound, vec![ix('j'), ix('k'), ix('p'), ix('q')]);
    }

    #[test]
    fn unused_free_index() {
        let eq = parse("a(i) <- c").unwrap();
        assert_eq!(
            eq.classify_indices(),
            Err(DslError::UnusedFreeIndex { index: ix('i'), term: 0 })
        );
    }

    #[test]
    fn free_set_independent_of_factor_order() {
        let a = parse("v(i) <- w(j) * eps(i, j, k) * u(k)").unwrap();
        let b = parse("v(i) <- u(k) * eps(i, j, k) * w(j)").unwrap();
        let (ca, cb) = (a.classify_indices().unwrap(), b.classify_indices().unwrap());
        assert_eq!(ca[0].free, cb[0].free);
        assert_eq!(ca[0].bound, vec![ix('j'), ix('k')]);
        assert_eq!(cb[0].bound, vec![ix('k'), ix('j')]);
    }

    fn arb_index() -> impl Strategy<Value = Index> {
        prop::sample::select(vec!['i', 'j', 'k', 'p']).prop_map(Index)
    }

    fn arb_factor() -> impl Strategy<Value = Factor> {
        prop_oneof![
            prop::sample::select(vec!["c1", "alpha"]).prop_map(|s| Factor::Const(s.into())),
            (0.0f64..100.0).prop_map(Factor::Number),
            (prop::sample::select(vec!["m", "H", "s"]), prop::collection::vec(arb_index(), 0..2))
                .prop_map(|(n, idx)| Factor::Field(FieldRef { name: n.into(), indices: idx })),
            (arb_index(), arb_index(), arb_index()).prop_map(|(a, b, c)| Factor::Eps([a, b, c])),
        ]
    }

    fn arb_equation() -> impl Strategy<Value = Equation> {
        let term = (any::<bool>(), prop::collection::vec(arb_factor(), 1..5)).prop_map(|(neg, factors)| Term {
            sign: if neg { Sign::Minus } else { Sign::Plus },
            factors,
        });
        (prop::collection::vec(term, 1..4), any::<bool>()).prop_map(|(terms, vector)| Equation {
            target: FieldRef {
                name: "out".into(),
                indices: if vector { vec![Index('i')] } else { vec![] },
            },
            terms,
        })
    }

    proptest! {
        #[test]
        fn print_parse_fixed_point(eq in arb_equation()) {
            let printed = eq.to_string();
            let back = parse(&printed).unwrap();
            prop_assert_eq!(&back, &eq);
            prop_assert_eq!(parse(&back.to_string()).unwrap(), back);
        }
    }
}
