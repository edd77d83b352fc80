//! Recursive-descent parser for speed-law expressions in the variable `H`.
//!
//! ```text
//! expr   = term { ("+"|"-") term } ;
//! term   = factor { ("*"|"/") factor } ;
//! factor = base [ "^" number ] ;
//! base   = "H" | number | ident "(" expr ")" | "(" expr ")" ;
//! ident  = "exp" | "log" | "sqrt" | "sinh" | "cosh" ;
//! ```

use super::SpeedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
}

impl Func {
    fn from_ident(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var,
    Num(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

pub fn parse(source: &str) -> Result<Expr, SpeedError> {
    let mut p = Parser { src: source.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> SpeedError {
        SpeedError::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), SpeedError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, SpeedError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SpeedError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, SpeedError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let k = self.number()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, SpeedError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Num(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                if name == "H" {
                    return Ok(Expr::Var);
                }
                let Some(func) = Func::from_ident(name) else {
                    self.pos = start;
                    return Err(self.error(&format!("unknown identifier '{name}'")));
                };
                self.expect(b'(')?;
                let arg = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            Some(_) => Err(self.error("expected 'H', a number, a function call or '('")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<f64, SpeedError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("expected a number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = mark;
                return Err(self.error("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.error("malformed number")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse("1 + H * 2 ^ 3").unwrap();
        assert_eq!(
            e,
            Expr::Add(
                Box::new(Expr::Num(1.0)),
                Box::new(Expr::Mul(Box::new(Expr::Var), Box::new(Expr::Pow(Box::new(Expr::Num(2.0)), 3.0))))
            )
        );
    }

    #[test]
    fn left_associative_subtraction() {
        let e = parse("H-1-2").unwrap();
        assert!(matches!(e, Expr::Sub(ref l, _) if matches!(**l, Expr::Sub(_, _))));
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(parse("2.5e-1").unwrap(), Expr::Num(0.25));
        assert_eq!(parse(".5").unwrap(), Expr::Num(0.5));
        assert!(parse("1e").is_err());
    }

    #[test]
    fn syntax_error_positions() {
        let pos = |s: &str| match parse(s) {
            Err(SpeedError::Syntax { pos, .. }) => pos,
            other => panic!("expected syntax error, got {other:?}"),
        };
        assert_eq!(pos("H +"), 3);
        assert_eq!(pos("foo(H)"), 0);
        assert_eq!(pos("log(H"), 5);
        assert_eq!(pos("H H"), 2);
        assert_eq!(pos("H^x"), 2);
        assert_eq!(pos(""), 0);
    }
}
