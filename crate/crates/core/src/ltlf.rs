//! Linear temporal logic over finite traces.
//!
//! Every position of a trace carries exactly one activity, so an atom holds
//! at position `i` iff the activity at `i` has that name. Position `len`
//! stands for the empty suffix, where no atom holds. `X` is the strong next
//! operator: it is false at the last position.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An LTLf formula over activity names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Globally(Box<Formula>),
    Finally(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Self {
        Formula::Atom(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Self {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn globally(f: Formula) -> Self {
        Formula::Globally(Box::new(f))
    }

    pub fn finally(f: Formula) -> Self {
        Formula::Finally(Box::new(f))
    }

    pub fn until(l: Formula, r: Formula) -> Self {
        Formula::Until(Box::new(l), Box::new(r))
    }

    /// Truth value at `position` of `trace`.
    ///
    /// Positions past the end are treated as the empty suffix.
    pub fn eval<S: AsRef<str>>(&self, trace: &[S], position: usize) -> bool {
        let values = self.positions(trace);
        values[position.min(trace.len())]
    }

    /// Truth value on the whole trace (position 0).
    pub fn holds<S: AsRef<str>>(&self, trace: &[S]) -> bool {
        self.eval(trace, 0)
    }

    /// Truth values at every position `0..=len`, computed bottom-up in
    /// `O(|formula| * len)`.
    pub fn positions<S: AsRef<str>>(&self, trace: &[S]) -> Vec<bool> {
        let n = trace.len();
        match self {
            Formula::True => vec![true; n + 1],
            Formula::False => vec![false; n + 1],
            Formula::Atom(a) => {
                let mut v: Vec<bool> = trace.iter().map(|e| e.as_ref() == a).collect();
                v.push(false);
                v
            }
            Formula::Not(f) => f.positions(trace).into_iter().map(|b| !b).collect(),
            Formula::And(l, r) => zip_with(l.positions(trace), r.positions(trace), |a, b| a && b),
            Formula::Or(l, r) => zip_with(l.positions(trace), r.positions(trace), |a, b| a || b),
            Formula::Implies(l, r) => zip_with(l.positions(trace), r.positions(trace), |a, b| !a || b),
            Formula::Next(f) => {
                let inner = f.positions(trace);
                (0..=n).map(|i| i + 1 < n && inner[i + 1]).collect()
            }
            Formula::Finally(f) => {
                let inner = f.positions(trace);
                let mut out = vec![false; n + 1];
                for i in (0..n).rev() {
                    out[i] = inner[i] || out[i + 1];
                }
                out
            }
            Formula::Globally(f) => {
                let inner = f.positions(trace);
                let mut out = vec![true; n + 1];
                for i in (0..n).rev() {
                    out[i] = inner[i] && out[i + 1];
                }
                out
            }
            Formula::Until(l, r) => {
                let hold = l.positions(trace);
                let goal = r.positions(trace);
                let mut out = vec![false; n + 1];
                for i in (0..n).rev() {
                    out[i] = goal[i] || (hold[i] && out[i + 1]);
                }
                out
            }
        }
    }

    /// All atom names occurring in the formula.
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(a.clone());
            }
            Formula::Not(f) | Formula::Next(f) | Formula::Globally(f) | Formula::Finally(f) => {
                f.collect_atoms(out)
            }
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) | Formula::Until(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }

    /// Atoms that are not in `alphabet`; they simply never hold.
    pub fn unknown_atoms<'a, I>(&self, alphabet: I) -> Vec<String>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let known: BTreeSet<&String> = alphabet.into_iter().collect();
        self.atoms().into_iter().filter(|a| !known.contains(a)).collect()
    }
}

fn zip_with(a: Vec<bool>, b: Vec<bool>, f: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

fn write_atom(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    let bare = !name.is_empty()
        && !matches!(name, "X" | "G" | "F" | "U" | "true" | "false")
        && name.chars().all(is_ident_char);
    if bare {
        f.write_str(name)
    } else {
        f.write_str("\"")?;
        for c in name.chars() {
            if c == '"' || c == '\\' {
                f.write_str("\\")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("\"")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => write_atom(f, a),
            Formula::Not(x) => write!(f, "!({x})"),
            Formula::And(l, r) => write!(f, "({l}) && ({r})"),
            Formula::Or(l, r) => write!(f, "({l}) || ({r})"),
            Formula::Implies(l, r) => write!(f, "({l}) -> ({r})"),
            Formula::Next(x) => write!(f, "X({x})"),
            Formula::Globally(x) => write!(f, "G({x})"),
            Formula::Finally(x) => write!(f, "F({x})"),
            Formula::Until(l, r) => write!(f, "({l}) U ({r})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {position}: expected {expected}")]
pub struct SyntaxError {
    pub position: usize,
    pub expected: String,
}

/// A parsed formula plus the atoms that fall outside the given alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub formula: Formula,
    pub unknown_atoms: Vec<String>,
}

/// Parses the textual LTLf grammar.
///
/// Operators: `!`, `&&`, `||`, `->`, `X`, `G`, `F`, `U`, parentheses and the
/// constants `true` / `false`. Precedence from tightest: unary, `U`, `&&`,
/// `||`, `->`; `U` and `->` associate to the right. Atoms are bare
/// identifiers or double-quoted strings (needed for names with spaces).
pub fn parse_ltlf<'a, I>(text: &str, alphabet: I) -> Result<Parsed, SyntaxError>
where
    I: IntoIterator<Item = &'a String>,
{
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0, end: text.len() };
    let formula = p.implies()?;
    if let Some(t) = p.peek() {
        return Err(SyntaxError { position: t.offset, expected: "end of input".to_owned() });
    }
    let unknown_atoms = formula.unknown_atoms(alphabet);
    if !unknown_atoms.is_empty() {
        log::warn!("formula mentions activities outside the alphabet: {unknown_atoms:?}");
    }
    Ok(Parsed { formula, unknown_atoms })
}

/// Parses without alphabet checking.
pub fn parse_formula(text: &str) -> Result<Formula, SyntaxError> {
    parse_ltlf(text, core::iter::empty()).map(|p| p.formula)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Not,
    And,
    Or,
    Implies,
    Next,
    Globally,
    Finally,
    Until,
    True,
    False,
    Atom(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | ':' | '\'')
}

fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        let simple = |tok| Token { tok, offset: off };
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push(simple(Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push(simple(Tok::RParen));
                i += 1;
            }
            '!' => {
                out.push(simple(Tok::Not));
                i += 1;
            }
            '&' if next == Some('&') => {
                out.push(simple(Tok::And));
                i += 2;
            }
            '|' if next == Some('|') => {
                out.push(simple(Tok::Or));
                i += 2;
            }
            '-' if next == Some('>') => {
                out.push(simple(Tok::Implies));
                i += 2;
            }
            '"' => {
                let mut name = String::new();
                let mut j = i + 1;
                let mut closed = false;
                while j < chars.len() {
                    match chars[j].1 {
                        '\\' if j + 1 < chars.len() => {
                            name.push(chars[j + 1].1);
                            j += 2;
                        }
                        '"' => {
                            closed = true;
                            j += 1;
                            break;
                        }
                        ch => {
                            name.push(ch);
                            j += 1;
                        }
                    }
                }
                if !closed {
                    return Err(SyntaxError { position: text.len(), expected: "closing quote".to_owned() });
                }
                out.push(simple(Tok::Atom(name)));
                i = j;
            }
            c if is_ident_char(c) || c == '-' => {
                let mut j = i;
                let mut word = String::new();
                while j < chars.len() {
                    let ch = chars[j].1;
                    let dash_ok = ch == '-' && chars.get(j + 1).map(|p| p.1) != Some('>');
                    if is_ident_char(ch) || dash_ok {
                        word.push(ch);
                        j += 1;
                    } else {
                        break;
                    }
                }
                let tok = match word.as_str() {
                    "X" => Tok::Next,
                    "G" => Tok::Globally,
                    "F" => Tok::Finally,
                    "U" => Tok::Until,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Atom(word),
                };
                out.push(simple(tok));
                i = j;
            }
            _ => return Err(SyntaxError { position: off, expected: "an operator or atom".to_owned() }),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn implies(&mut self) -> Result<Formula, SyntaxError> {
        let lhs = self.or()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, SyntaxError> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Or) {
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, SyntaxError> {
        let mut lhs = self.until()?;
        while self.eat(&Tok::And) {
            let rhs = self.until()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, SyntaxError> {
        let lhs = self.unary()?;
        if self.eat(&Tok::Until) {
            let rhs = self.until()?;
            return Ok(Formula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, SyntaxError> {
        if self.eat(&Tok::Not) {
            return Ok(Formula::not(self.unary()?));
        }
        if self.eat(&Tok::Next) {
            return Ok(Formula::next(self.unary()?));
        }
        if self.eat(&Tok::Globally) {
            return Ok(Formula::globally(self.unary()?));
        }
        if self.eat(&Tok::Finally) {
            return Ok(Formula::finally(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula, SyntaxError> {
        let offset = self.offset();
        let Some(tok) = self.peek().map(|t| t.tok.clone()) else {
            return Err(SyntaxError { position: offset, expected: "an atom or '('".to_owned() });
        };
        self.pos += 1;
        match tok {
            Tok::True => Ok(Formula::True),
            Tok::False => Ok(Formula::False),
            Tok::Atom(a) => Ok(Formula::Atom(a)),
            Tok::LParen => {
                let inner = self.implies()?;
                if !self.eat(&Tok::RParen) {
                    return Err(SyntaxError { position: self.offset(), expected: "')'".to_owned() });
                }
                Ok(inner)
            }
            _ => Err(SyntaxError { position: offset, expected: "an atom or '('".to_owned() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<&str> {
        s.split(',').filter(|x| !x.is_empty()).collect()
    }

    #[test]
    fn eventually_and_next() {
        let f = parse_formula("F(a)").unwrap();
        assert!(f.eval(&t("b,a"), 0));
        assert!(!parse_formula("X(a)").unwrap().eval(&t("a"), 0));
        assert!(parse_formula("X a").unwrap().eval(&t("b,a"), 0));
    }

    #[test]
    fn response_formula_on_repeated_fulfilment() {
        let f = parse_formula("G(a -> F(b))").unwrap();
        assert!(f.holds(&t("a,b,c,b")));
        assert!(!f.holds(&t("a,b,a,c")));
    }

    #[test]
    fn empty_suffix_semantics() {
        let empty: Vec<&str> = Vec::new();
        assert!(parse_formula("G(a)").unwrap().holds(&empty));
        assert!(!parse_formula("F(a)").unwrap().holds(&empty));
        assert!(!parse_formula("a U b").unwrap().holds(&empty));
        assert!(parse_formula("!a").unwrap().eval(&t("a"), 1));
    }

    #[test]
    fn until_requires_goal() {
        let f = parse_formula("!b U a").unwrap();
        assert!(f.holds(&t("c,a,b")));
        assert!(!f.holds(&t("c,b,a")));
        assert!(!f.holds(&t("c,c")));
    }

    #[test]
    fn precedence_and_associativity() {
        let f = parse_formula("a || b && c -> d -> e").unwrap();
        let expected = Formula::implies(
            Formula::or(Formula::atom("a"), Formula::and(Formula::atom("b"), Formula::atom("c"))),
            Formula::implies(Formula::atom("d"), Formula::atom("e")),
        );
        assert_eq!(f, expected);
        let u = parse_formula("!a U b U c").unwrap();
        assert_eq!(
            u,
            Formula::until(
                Formula::not(Formula::atom("a")),
                Formula::until(Formula::atom("b"), Formula::atom("c"))
            )
        );
        assert_eq!(
            parse_formula("F a && G b").unwrap(),
            Formula::and(Formula::finally(Formula::atom("a")), Formula::globally(Formula::atom("b")))
        );
    }

    #[test]
    fn quoted_and_bare_atoms() {
        let f = parse_formula("F(\"tumor marker CA-19.9\") || F(\"ca-125 using meia\")").unwrap();
        assert_eq!(f.atoms().len(), 2);
        let g = parse_formula("G(send_confirmation_receipt -> F(retrieve_missing_data))").unwrap();
        assert_eq!(
            g,
            Formula::globally(Formula::implies(
                Formula::atom("send_confirmation_receipt"),
                Formula::finally(Formula::atom("retrieve_missing_data"))
            ))
        );
        // a dash inside a bare name is kept unless it starts an arrow
        let h = parse_formula("CEA-tumor->b").unwrap();
        assert_eq!(h, Formula::implies(Formula::atom("CEA-tumor"), Formula::atom("b")));
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse_formula("F(a").unwrap_err();
        assert_eq!(err.position, 3);
        assert_eq!(err.expected, "')'");
        assert!(parse_formula("a &&").is_err());
        assert!(parse_formula("a b").is_err());
        assert!(parse_formula("\"open").is_err());
    }

    #[test]
    fn unknown_atoms_are_reported_and_never_hold() {
        let sigma: Vec<String> = vec!["a".into(), "b".into()];
        let p = parse_ltlf("F(a) || F(zz)", &sigma).unwrap();
        assert_eq!(p.unknown_atoms, vec!["zz".to_string()]);
        assert!(!Formula::finally(Formula::atom("zz")).holds(&t("a,b")));
    }

    #[test]
    fn display_round_trips() {
        for src in ["G(a -> F(b))", "(!b U a) || G(!b)", "F(\"Release A\" && X(F(\"Release A\")))"] {
            let f = parse_formula(src).unwrap();
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        }
    }
}
