//! Tiny expression parsers for command-line values.
//!
//! Thresholds like `4m` or `1+log(m)` are written in terms of the
//! subdomain refinement `m`, wavenumbers like `8pi` in units of π, and the
//! economic slab width in units of the mesh size `h`. Each parser evaluates
//! to a plain `f64`; `log` is the natural logarithm.

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    M,
    Log,
    Plus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn lex(s: &str) -> Result<Vec<Tok>, String> {
    let mut toks = Vec::new();
    let b: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '^' => {
                toks.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == '.') {
                    i += 1;
                }
                let lit: String = b[start..i].iter().collect();
                toks.push(Tok::Num(lit.parse().map_err(|_| format!("bad number `{lit}`"))?));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < b.len() && b[i].is_ascii_alphabetic() {
                    i += 1;
                }
                let word: String = b[start..i].iter().collect();
                match word.as_str() {
                    "m" => toks.push(Tok::M),
                    "log" | "ln" => toks.push(Tok::Log),
                    other => return Err(format!("unknown identifier `{other}`")),
                }
            }
            other => return Err(format!("unexpected character `{other}`")),
        }
    }
    Ok(toks)
}

struct P<'a> {
    toks: &'a [Tok],
    pos: usize,
    m: f64,
}

impl P<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut v = self.term()?;
        while self.peek() == Some(&Tok::Plus) {
            self.pos += 1;
            v += self.term()?;
        }
        Ok(v)
    }

    /// Factors multiply by juxtaposition (`4m`) or explicit `*`.
    fn term(&mut self) -> Result<f64, String> {
        let mut v = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    v *= self.factor()?;
                }
                Some(Tok::Num(_)) | Some(Tok::M) | Some(Tok::Log) | Some(Tok::LParen) => {
                    v *= self.factor()?;
                }
                _ => break,
            }
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<f64, String> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let e = self.atom()?;
            return Ok(base.powf(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<f64, String> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(v)
            }
            Some(Tok::M) => {
                self.pos += 1;
                Ok(self.m)
            }
            Some(Tok::Log) => {
                self.pos += 1;
                if self.peek() != Some(&Tok::LParen) {
                    return Err("expected `(` after log".into());
                }
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err("unbalanced parentheses".into());
                }
                self.pos += 1;
                Ok(v.ln())
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err("unbalanced parentheses".into());
                }
                self.pos += 1;
                Ok(v)
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}

/// Evaluates a threshold expression in the variable `m`.
pub fn eval_theta(s: &str, m: usize) -> Result<f64, String> {
    let toks = lex(s)?;
    let mut p = P { toks: &toks, pos: 0, m: m as f64 };
    let v = p.expr()?;
    if p.pos != toks.len() {
        return Err(format!("trailing input in `{s}`"));
    }
    if !v.is_finite() || v <= 0.0 {
        return Err(format!("threshold `{s}` must evaluate positive (got {v})"));
    }
    Ok(v)
}

/// `8pi`, `2*pi`, `pi`, or a plain number.
pub fn parse_kappa(s: &str) -> Result<f64, String> {
    let t: String = s.to_ascii_lowercase().chars().filter(|c| !c.is_whitespace() && *c != '*').collect();
    if let Some(prefix) = t.strip_suffix("pi") {
        let coef = if prefix.is_empty() {
            1.0
        } else {
            prefix.parse::<f64>().map_err(|_| format!("bad wavenumber `{s}`"))?
        };
        return Ok(coef * std::f64::consts::PI);
    }
    t.parse::<f64>().map_err(|_| format!("bad wavenumber `{s}`"))
}

/// `h`, `2h`, `0.5*h`, or a plain number; `h` is the mesh size.
pub fn parse_eta(s: &str, h: f64) -> Result<f64, String> {
    let t: String = s.to_ascii_lowercase().chars().filter(|c| !c.is_whitespace() && *c != '*').collect();
    if let Some(prefix) = t.strip_suffix('h') {
        let coef = if prefix.is_empty() {
            1.0
        } else {
            prefix.parse::<f64>().map_err(|_| format!("bad slab width `{s}`"))?
        };
        return Ok(coef * h);
    }
    t.parse::<f64>().map_err(|_| format!("bad slab width `{s}`"))
}
