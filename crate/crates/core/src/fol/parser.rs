use super::{Atom, BinaryOp, FolError, Formula, Quantifier, UnaryOp, Vocabulary, ANSWER_PREDICATE};

/// Parse and validate a closed formula.
///
/// ```
/// use logicloss::fol::{parse_formula, Formula, BinaryOp};
///
/// let vocab = ["queryObj", "queryAttrObj"];
/// let f = parse_formula("forall x1 forall x2: (queryObj(x1) => queryAttrObj(x2))", &vocab[..]).unwrap();
/// let expected = Formula::forall("x1", Formula::forall("x2", Formula::binary(
///     BinaryOp::ResidualImply,
///     Formula::task("queryObj", "x1"),
///     Formula::task("queryAttrObj", "x2"),
/// )));
/// assert_eq!(f, expected);
/// ```
pub fn parse_formula<V: Vocabulary + ?Sized>(text: &str, vocab: &V) -> Result<Formula, FolError> {
    if text.trim().is_empty() {
        return Err(FolError::Syntax {
            position: 0,
            expected: "formula".into(),
        });
    }
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        nesting: 0,
    };
    let f = p.formula()?;
    p.expect(&Tok::Eof, "end of input")?;
    f.validate(vocab)?;
    Ok(f)
}

const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Colon,
    Comma,
    Star,
    OPlus,
    Amp,
    Pipe,
    FatArrow,
    Arrow,
    Iff,
    Tilde,
    Bang,
    Eof,
}

struct Spanned {
    tok: Tok,
    at: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, FolError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let rest = &bytes[i..];
        let (tok, len) = if rest.starts_with(b"(+)") {
            (Tok::OPlus, 3)
        } else if rest.starts_with(b"<=>") {
            (Tok::Iff, 3)
        } else if rest.starts_with(b"=>") {
            (Tok::FatArrow, 2)
        } else if rest.starts_with(b"->") {
            (Tok::Arrow, 2)
        } else {
            match c {
                b'(' => (Tok::LParen, 1),
                b')' => (Tok::RParen, 1),
                b':' => (Tok::Colon, 1),
                b',' => (Tok::Comma, 1),
                b'*' => (Tok::Star, 1),
                b'&' => (Tok::Amp, 1),
                b'|' => (Tok::Pipe, 1),
                b'~' => (Tok::Tilde, 1),
                b'!' => (Tok::Bang, 1),
                b'0'..=b'9' => {
                    let mut j = i;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j] == b'.' {
                        j += 1;
                        let frac = j;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        if j == frac {
                            return Err(syntax(j, "digit after decimal point"));
                        }
                    }
                    let value: f64 = text[i..j].parse().map_err(|_| syntax(i, "number"))?;
                    (Tok::Number(value), j - i)
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let mut j = i;
                    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                        j += 1;
                    }
                    (Tok::Ident(text[i..j].to_string()), j - i)
                }
                _ => return Err(syntax(i, "token")),
            }
        };
        out.push(Spanned { tok, at: i });
        i += len;
    }
    out.push(Spanned {
        tok: Tok::Eof,
        at: bytes.len(),
    });
    Ok(out)
}

fn syntax(position: usize, expected: &str) -> FolError {
    FolError::Syntax {
        position,
        expected: expected.to_string(),
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn at(&self) -> usize {
        self.tokens[self.pos].at
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<(), FolError> {
        if self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.at(), what))
        }
    }

    fn enter(&mut self) -> Result<(), FolError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(syntax(self.at(), "shallower nesting"));
        }
        Ok(())
    }

    fn quantifier_keyword(&self) -> Option<Quantifier> {
        match self.peek() {
            Tok::Ident(s) if s == "forall" => Some(Quantifier::ForAll),
            Tok::Ident(s) if s == "exists" => Some(Quantifier::Exists),
            _ => None,
        }
    }

    fn formula(&mut self) -> Result<Formula, FolError> {
        if self.quantifier_keyword().is_some() {
            self.quantified()
        } else {
            self.iff()
        }
    }

    // forall x1 [,] forall x2 : body
    fn quantified(&mut self) -> Result<Formula, FolError> {
        self.enter()?;
        let q = self.quantifier_keyword().ok_or_else(|| syntax(self.at(), "quantifier"))?;
        self.bump();
        let var = match self.bump() {
            Tok::Ident(v) if !is_keyword(&v) => v,
            _ => return Err(syntax(self.tokens[self.pos.saturating_sub(1)].at, "variable name")),
        };
        let body = match self.peek() {
            Tok::Colon => {
                self.bump();
                self.formula()?
            }
            Tok::Comma => {
                self.bump();
                if self.quantifier_keyword().is_none() {
                    return Err(syntax(self.at(), "quantifier after `,`"));
                }
                self.quantified()?
            }
            _ if self.quantifier_keyword().is_some() => self.quantified()?,
            _ => return Err(syntax(self.at(), "`:` or another quantifier")),
        };
        self.nesting -= 1;
        Ok(Formula::Quant(q, var, Box::new(body)))
    }

    fn iff(&mut self) -> Result<Formula, FolError> {
        let mut lhs = self.imply()?;
        let depth = self.nesting;
        while *self.peek() == Tok::Iff {
            self.bump();
            self.enter()?;
            let rhs = self.imply()?;
            lhs = Formula::binary(BinaryOp::BiResiduum, lhs, rhs);
        }
        self.nesting = depth;
        Ok(lhs)
    }

    fn imply(&mut self) -> Result<Formula, FolError> {
        let lhs = self.disj()?;
        let op = match self.peek() {
            Tok::FatArrow => BinaryOp::ResidualImply,
            Tok::Arrow => BinaryOp::MaterialImply,
            _ => return Ok(lhs),
        };
        self.bump();
        self.enter()?;
        let rhs = self.imply()?;
        self.nesting -= 1;
        Ok(Formula::binary(op, lhs, rhs))
    }

    fn disj(&mut self) -> Result<Formula, FolError> {
        let mut lhs = self.conj()?;
        let depth = self.nesting;
        loop {
            let op = match self.peek() {
                Tok::OPlus => BinaryOp::TConorm,
                Tok::Pipe => BinaryOp::WeakDisj,
                _ => {
                    self.nesting = depth;
                    return Ok(lhs);
                }
            };
            self.bump();
            // left-deep chains count towards the nesting limit
            self.enter()?;
            let rhs = self.conj()?;
            lhs = Formula::binary(op, lhs, rhs);
        }
    }

    fn conj(&mut self) -> Result<Formula, FolError> {
        let mut lhs = self.unary()?;
        let depth = self.nesting;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::StrongConj,
                Tok::Amp => BinaryOp::WeakConj,
                _ => {
                    self.nesting = depth;
                    return Ok(lhs);
                }
            };
            self.bump();
            // left-deep chains count towards the nesting limit
            self.enter()?;
            let rhs = self.unary()?;
            lhs = Formula::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Formula, FolError> {
        let op = match self.peek() {
            Tok::Tilde => UnaryOp::ResidualNeg,
            Tok::Bang => UnaryOp::StrongNeg,
            _ => return self.primary(),
        };
        self.bump();
        self.enter()?;
        let inner = self.unary()?;
        self.nesting -= 1;
        Ok(Formula::unary(op, inner))
    }

    fn primary(&mut self) -> Result<Formula, FolError> {
        if self.quantifier_keyword().is_some() {
            return self.quantified();
        }
        let at = self.at();
        match self.bump() {
            Tok::LParen => {
                self.enter()?;
                let f = self.formula()?;
                self.expect(&Tok::RParen, "`)`")?;
                self.nesting -= 1;
                Ok(f)
            }
            Tok::Number(v) => Ok(Formula::constant(v)),
            Tok::Ident(name) if !is_keyword(&name) => {
                self.expect(&Tok::LParen, "`(` after predicate name")?;
                let var = match self.bump() {
                    Tok::Ident(v) if !is_keyword(&v) => v,
                    _ => return Err(syntax(self.tokens[self.pos.saturating_sub(1)].at, "variable name")),
                };
                self.expect(&Tok::RParen, "`)` after predicate argument")?;
                if name == ANSWER_PREDICATE {
                    Ok(Formula::Atom(Atom::AnswerMatch { var }))
                } else {
                    Ok(Formula::Atom(Atom::Task { task: name, var }))
                }
            }
            _ => Err(syntax(at, "atom, `(`, negation or quantifier")),
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "forall" | "exists")
}
