//! Formulas of the full intuitionistic temporal language.
//!
//! Surface syntax:
//!
//! ```text
//! formula := impl
//! impl    := or ('->' impl)? | or '<->' or
//! or      := and ('|' and)*
//! and     := unary ('&' unary)*
//! unary   := ('~' | 'X' | '<>' | '[]' | 'A' | 'E') unary | atom | '#' | '(' formula ')'
//! atom    := [a-z][a-zA-Z0-9_]*
//! ```
//!
//! `~a` is sugar for `a -> #` and `a <-> b` for `(a -> b) & (b -> a)`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

/// A formula. Structural equality is the identity used for Σ-membership.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Bottom,
    Atom(String),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Eventually(Box<Formula>),
    Henceforth(Box<Formula>),
    Forall(Box<Formula>),
    Exists(Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Formula {
        Formula::Atom(name.to_string())
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn not(a: Formula) -> Formula {
        Formula::implies(a, Formula::Bottom)
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::and(Formula::implies(a.clone(), b.clone()), Formula::implies(b, a))
    }

    pub fn next(a: Formula) -> Formula {
        Formula::Next(Box::new(a))
    }

    pub fn eventually(a: Formula) -> Formula {
        Formula::Eventually(Box::new(a))
    }

    pub fn henceforth(a: Formula) -> Formula {
        Formula::Henceforth(Box::new(a))
    }

    pub fn forall(a: Formula) -> Formula {
        Formula::Forall(Box::new(a))
    }

    pub fn exists(a: Formula) -> Formula {
        Formula::Exists(Box::new(a))
    }

    pub fn parse(text: &str) -> Result<Formula, ParseError> {
        Parser::new(text)?.parse_all()
    }

    /// Immediate subformulas, left to right.
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::Bottom | Formula::Atom(_) => vec![],
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => vec![a, b],
            Formula::Next(a)
            | Formula::Eventually(a)
            | Formula::Henceforth(a)
            | Formula::Forall(a)
            | Formula::Exists(a) => vec![a],
        }
    }

    /// Nesting depth; atoms and ⊥ have depth 0.
    pub fn depth(&self) -> usize {
        self.children()
            .into_iter()
            .map(|c| c.depth() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(Formula::node_count)
            .sum::<usize>()
    }

    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        if let Formula::Atom(name) = self {
            out.insert(name.clone());
        }
        for c in self.children() {
            c.collect_atoms(out);
        }
    }

    /// Replaces every `E ψ` by `~A~ψ'`, innermost first.
    pub fn eliminate_exists(&self) -> Formula {
        let map = |f: &Formula| Box::new(f.eliminate_exists());
        match self {
            Formula::Bottom | Formula::Atom(_) => self.clone(),
            Formula::And(a, b) => Formula::And(map(a), map(b)),
            Formula::Or(a, b) => Formula::Or(map(a), map(b)),
            Formula::Implies(a, b) => Formula::Implies(map(a), map(b)),
            Formula::Next(a) => Formula::Next(map(a)),
            Formula::Eventually(a) => Formula::Eventually(map(a)),
            Formula::Henceforth(a) => Formula::Henceforth(map(a)),
            Formula::Forall(a) => Formula::Forall(map(a)),
            Formula::Exists(a) => {
                Formula::not(Formula::forall(Formula::not(a.eliminate_exists())))
            }
        }
    }

    /// The set of modalities occurring in the formula.
    pub fn fragment(&self) -> Fragment {
        let mut frag = Fragment::empty();
        self.collect_fragment(&mut frag);
        frag
    }

    fn collect_fragment(&self, frag: &mut Fragment) {
        match self {
            Formula::Next(_) => frag.insert(Modality::Next),
            Formula::Eventually(_) => frag.insert(Modality::Eventually),
            Formula::Henceforth(_) => frag.insert(Modality::Henceforth),
            Formula::Forall(_) => frag.insert(Modality::Forall),
            Formula::Exists(_) => frag.insert(Modality::Exists),
            _ => {}
        }
        for c in self.children() {
            c.collect_fragment(frag);
        }
    }

    /// Gödel–Tarski translation into the classical language, printed with
    /// `■` for the interior modality and `→`/`¬`-free classical connectives.
    pub fn godel_tarski(&self) -> String {
        fn go(f: &Formula) -> String {
            match f {
                Formula::Bottom => "⊥".to_string(),
                Formula::Atom(p) => format!("■{p}"),
                Formula::And(a, b) => format!("({} ∧ {})", go(a), go(b)),
                Formula::Or(a, b) => format!("({} ∨ {})", go(a), go(b)),
                Formula::Implies(a, b) => format!("■({} → {})", go(a), go(b)),
                Formula::Next(a) => format!("∘{}", go(a)),
                Formula::Eventually(a) => format!("◊{}", go(a)),
                Formula::Henceforth(a) => format!("■□{}", go(a)),
                Formula::Forall(a) => format!("∀{}", go(a)),
                Formula::Exists(a) => format!("∃{}", go(a)),
            }
        }
        go(self)
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(_, b) if **b == Formula::Bottom => 4,
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            _ => 4,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.write_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Formula::Bottom => write!(f, "#"),
            Formula::Atom(p) => write!(f, "{p}"),
            Formula::Implies(a, b) if **b == Formula::Bottom => {
                write!(f, "~")?;
                a.write_prec(f, 4)
            }
            Formula::Implies(a, b) => {
                a.write_prec(f, 2)?;
                write!(f, " -> ")?;
                b.write_prec(f, 1)
            }
            Formula::Or(a, b) => {
                a.write_prec(f, 2)?;
                write!(f, " | ")?;
                b.write_prec(f, 3)
            }
            Formula::And(a, b) => {
                a.write_prec(f, 3)?;
                write!(f, " & ")?;
                b.write_prec(f, 4)
            }
            Formula::Next(a) => {
                write!(f, "X")?;
                a.write_prec(f, 4)
            }
            Formula::Eventually(a) => {
                write!(f, "<>")?;
                a.write_prec(f, 4)
            }
            Formula::Henceforth(a) => {
                write!(f, "[]")?;
                a.write_prec(f, 4)
            }
            Formula::Forall(a) => {
                write!(f, "A")?;
                a.write_prec(f, 4)
            }
            Formula::Exists(a) => {
                write!(f, "E")?;
                a.write_prec(f, 4)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Formula::parse(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Next,
    Eventually,
    Henceforth,
    Forall,
    Exists,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Next,
        Modality::Eventually,
        Modality::Henceforth,
        Modality::Forall,
        Modality::Exists,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// A set of modalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Fragment(u8);

impl Fragment {
    pub const fn empty() -> Fragment {
        Fragment(0)
    }

    pub fn of(mods: &[Modality]) -> Fragment {
        let mut f = Fragment::empty();
        for &m in mods {
            f.insert(m);
        }
        f
    }

    /// The fragment handled by the decision procedure: `X`, `<>`, `A`.
    pub fn decidable() -> Fragment {
        Fragment::of(&[Modality::Next, Modality::Eventually, Modality::Forall])
    }

    pub fn full() -> Fragment {
        Fragment::of(&Modality::ALL)
    }

    pub fn insert(&mut self, m: Modality) {
        self.0 |= m.bit();
    }

    pub fn contains(&self, m: Modality) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn is_subset(&self, other: &Fragment) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = Modality> + '_ {
        Modality::ALL.into_iter().filter(|m| self.contains(*m))
    }
}

/// Whether `φ` is accepted by the decision procedure once `E` is eliminated.
pub fn in_decidable_fragment(phi: &Formula) -> bool {
    phi.eliminate_exists()
        .fragment()
        .is_subset(&Fragment::decidable())
}

/// Random formula over `atoms` using only the modalities in `fragment`.
/// Depth is at most `max_depth`.
pub fn random_formula<R: Rng + ?Sized>(
    rng: &mut R,
    max_depth: usize,
    atoms: &[&str],
    fragment: Fragment,
) -> Formula {
    let leaf = |rng: &mut R| {
        let k = rng.gen_range(0..=atoms.len());
        if k == atoms.len() {
            Formula::Bottom
        } else {
            Formula::atom(atoms[k])
        }
    };
    if max_depth == 0 || rng.gen_bool(0.25) {
        return leaf(rng);
    }
    let mods: Vec<Modality> = fragment.iter().collect();
    let choice = rng.gen_range(0..3 + mods.len());
    let sub = |rng: &mut R| random_formula(rng, max_depth - 1, atoms, fragment);
    match choice {
        0 => Formula::and(sub(rng), sub(rng)),
        1 => Formula::or(sub(rng), sub(rng)),
        2 => Formula::implies(sub(rng), sub(rng)),
        k => {
            let body = sub(rng);
            match mods[k - 3] {
                Modality::Next => Formula::next(body),
                Modality::Eventually => Formula::eventually(body),
                Modality::Henceforth => Formula::henceforth(body),
                Modality::Forall => Formula::forall(body),
                Modality::Exists => Formula::exists(body),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unknown token {token:?} at position {position}")]
    UnknownToken { token: String, position: usize },
    #[error("syntax error at position {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: &'static str,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Bottom,
    LParen,
    RParen,
    Not,
    Next,
    Eventually,
    Henceforth,
    Forall,
    Exists,
    And,
    Or,
    Arrow,
    Iff,
    Atom(String),
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Token::Bottom => "'#'",
            Token::LParen => "'('",
            Token::RParen => "')'",
            Token::Not => "'~'",
            Token::Next => "'X'",
            Token::Eventually => "'<>'",
            Token::Henceforth => "'[]'",
            Token::Forall => "'A'",
            Token::Exists => "'E'",
            Token::And => "'&'",
            Token::Or => "'|'",
            Token::Arrow => "'->'",
            Token::Iff => "'<->'",
            Token::Atom(name) => return write!(f, "atom '{name}'"),
            Token::End => "end of input",
        };
        f.write_str(s)
    }
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        let (tok, len) = if rest.starts_with("<->") {
            (Token::Iff, 3)
        } else if rest.starts_with("<>") {
            (Token::Eventually, 2)
        } else if rest.starts_with("[]") {
            (Token::Henceforth, 2)
        } else if rest.starts_with("->") {
            (Token::Arrow, 2)
        } else {
            match c {
                b'#' => (Token::Bottom, 1),
                b'(' => (Token::LParen, 1),
                b')' => (Token::RParen, 1),
                b'~' => (Token::Not, 1),
                b'X' => (Token::Next, 1),
                b'A' => (Token::Forall, 1),
                b'E' => (Token::Exists, 1),
                b'&' => (Token::And, 1),
                b'|' => (Token::Or, 1),
                b'a'..=b'z' => {
                    let len = rest
                        .bytes()
                        .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
                        .count();
                    (Token::Atom(rest[..len].to_string()), len)
                }
                _ => {
                    let token = rest.chars().next().map(String::from).unwrap_or_default();
                    return Err(ParseError::UnknownToken { token, position: i });
                }
            }
        };
        out.push((tok, i));
        i += len;
    }
    out.push((Token::End, text.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Parser, ParseError> {
        Ok(Parser {
            tokens: tokenize(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn position(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &'static str) -> ParseError {
        ParseError::Syntax {
            position: self.position(),
            expected,
            found: self.peek().to_string(),
        }
    }

    fn parse_all(mut self) -> Result<Formula, ParseError> {
        let f = self.implication()?;
        if *self.peek() != Token::End {
            return Err(self.error("end of input"));
        }
        Ok(f)
    }

    fn implication(&mut self) -> Result<Formula, ParseError> {
        let left = self.disjunction()?;
        match self.peek() {
            Token::Arrow => {
                self.bump();
                let right = self.implication()?;
                Ok(Formula::implies(left, right))
            }
            Token::Iff => {
                self.bump();
                let right = self.disjunction()?;
                Ok(Formula::iff(left, right))
            }
            _ => Ok(left),
        }
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.conjunction()?;
        while *self.peek() == Token::Or {
            self.bump();
            acc = Formula::or(acc, self.conjunction()?);
        }
        Ok(acc)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.unary()?;
        while *self.peek() == Token::And {
            self.bump();
            acc = Formula::and(acc, self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Token::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Token::Next => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Token::Eventually => {
                self.bump();
                Ok(Formula::eventually(self.unary()?))
            }
            Token::Henceforth => {
                self.bump();
                Ok(Formula::henceforth(self.unary()?))
            }
            Token::Forall => {
                self.bump();
                Ok(Formula::forall(self.unary()?))
            }
            Token::Exists => {
                self.bump();
                Ok(Formula::exists(self.unary()?))
            }
            Token::Bottom => {
                self.bump();
                Ok(Formula::Bottom)
            }
            Token::Atom(name) => {
                self.bump();
                Ok(Formula::Atom(name))
            }
            Token::LParen => {
                self.bump();
                let inner = self.implication()?;
                if *self.peek() != Token::RParen {
                    return Err(self.error("')'"));
                }
                self.bump();
                Ok(inner)
            }
            _ => Err(self.error("a formula")),
        }
    }
}
