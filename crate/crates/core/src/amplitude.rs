//! Expression grammar for transition amplitudes.
//!
//! Machine files keep amplitudes as exact expressions over rationals and
//! square roots so that tables stay auditable. The grammar, roughly:
//!
//! ```text
//! ampl     := term (("+" | "-") term)*
//! term     := factor "i"? | "(" factor ")" "i"?
//! factor   := rational | rational "*"? root | rational "/" root | root ("/" int)?
//! root     := "sqrt(" int ")"
//! rational := "-"? int ("/" int)?
//! ```
//!
//! A leading sign on the first term is accepted (`-sqrt(3)/2`).

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A transition amplitude together with the expression it was parsed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Amplitude {
    pub value: Complex64,
    pub source: Option<String>,
}

impl Amplitude {
    pub fn new(value: Complex64) -> Self {
        Amplitude {
            value,
            source: None,
        }
    }
}

/// Evaluates an amplitude expression.
pub fn parse_amplitude(text: &str) -> Result<Complex64> {
    let mut p = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.error("empty amplitude expression"));
    }
    let mut re = 0.0;
    let mut im = 0.0;

    let mut sign = p.leading_sign();
    loop {
        let (mag, imaginary) = p.term()?;
        if imaginary {
            im += sign * mag;
        } else {
            re += sign * mag;
        }
        p.skip_ws();
        if p.at_end() {
            break;
        }
        sign = match p.peek() {
            Some(b'+') => 1.0,
            Some(b'-') => -1.0,
            _ => return Err(p.error("expected `+` or `-` between terms")),
        };
        p.pos += 1;
        p.skip_ws();
    }

    let value = Complex64::new(re, im);
    if !value.re.is_finite() || !value.im.is_finite() {
        return Err(Error::Amplitude {
            pos: 0,
            msg: format!("`{text}` does not evaluate to a finite value"),
        });
    }
    Ok(value)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> Error {
        Error::Amplitude {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn leading_sign(&mut self) -> f64 {
        // A sign directly before `sqrt` or `(` is consumed here; a sign before
        // a digit is left for the rational parser.
        match self.peek() {
            Some(b'-') if !self.next_is_digit(1) => {
                self.pos += 1;
                self.skip_ws();
                -1.0
            }
            Some(b'+') => {
                self.pos += 1;
                self.skip_ws();
                1.0
            }
            _ => 1.0,
        }
    }

    fn next_is_digit(&self, offset: usize) -> bool {
        self.bytes
            .get(self.pos + offset)
            .is_some_and(|b| b.is_ascii_digit())
    }

    /// One additive term; returns (value, is_imaginary).
    fn term(&mut self) -> Result<(f64, bool)> {
        self.skip_ws();
        let value = if self.peek() == Some(b'(') {
            self.pos += 1;
            let v = self.factor()?;
            self.skip_ws();
            if self.peek() != Some(b')') {
                return Err(self.error("expected `)`"));
            }
            self.pos += 1;
            v
        } else {
            self.factor()?
        };
        let imaginary = if self.peek() == Some(b'i') {
            self.pos += 1;
            true
        } else {
            false
        };
        Ok((value, imaginary))
    }

    fn factor(&mut self) -> Result<f64> {
        self.skip_ws();
        match self.peek() {
            Some(b's') => {
                // sqrt(k) ("/" int)?
                let root = self.sqrt()?;
                self.skip_ws();
                if self.peek() == Some(b'/') {
                    self.pos += 1;
                    self.skip_ws();
                    let d = self.integer()?;
                    if d == 0 {
                        return Err(self.error("division by zero"));
                    }
                    Ok(root / d as f64)
                } else {
                    Ok(root)
                }
            }
            Some(b) if b == b'-' || b.is_ascii_digit() => {
                let q = self.rational()?;
                self.skip_ws();
                // rational "*"? sqrt | rational "/" sqrt
                match self.peek() {
                    Some(b'*') => {
                        self.pos += 1;
                        self.skip_ws();
                        Ok(q * self.sqrt()?)
                    }
                    Some(b's') => Ok(q * self.sqrt()?),
                    Some(b'/') if self.bytes.get(self.pos + 1) == Some(&b's') => {
                        self.pos += 1;
                        let root = self.sqrt()?;
                        if root == 0.0 {
                            return Err(self.error("division by zero"));
                        }
                        Ok(q / root)
                    }
                    _ => Ok(q),
                }
            }
            _ => Err(self.error("expected a rational or `sqrt(`")),
        }
    }

    fn rational(&mut self) -> Result<f64> {
        let negative = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let n = self.integer()? as f64;
        let value = if self.peek() == Some(b'/') && self.bytes.get(self.pos + 1) != Some(&b's') {
            self.pos += 1;
            let d = self.integer()?;
            if d == 0 {
                return Err(self.error("division by zero"));
            }
            n / d as f64
        } else {
            n
        };
        Ok(if negative { -value } else { value })
    }

    fn sqrt(&mut self) -> Result<f64> {
        if !self.bytes[self.pos..].starts_with(b"sqrt(") {
            return Err(self.error("expected `sqrt(`"));
        }
        self.pos += 5;
        self.skip_ws();
        let k = self.integer()?;
        self.skip_ws();
        if self.peek() != Some(b')') {
            return Err(self.error("expected `)` after sqrt argument"));
        }
        self.pos += 1;
        Ok((k as f64).sqrt())
    }

    fn integer(&mut self) -> Result<u64> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected an integer"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<u64>().map_err(|_| Error::Amplitude {
            pos: start,
            msg: format!("integer literal `{text}` overflows"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(text: &str) -> f64 {
        parse_amplitude(text).unwrap().re
    }

    #[test]
    fn defining_constant_of_the_grammar() {
        assert!((re("1/sqrt(2)") - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero() {
        assert_eq!(parse_amplitude("0").unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn complex_sixth_root_of_unity() {
        // Oracle: -1/2 + (sqrt(3)/2) i evaluated independently.
        let v = parse_amplitude("-1/2 + (sqrt(3)/2)i").unwrap();
        assert!((v.re - (-0.5)).abs() < 1e-15);
        assert!((v.im - 0.8660254037844386).abs() < 1e-15);
    }

    #[test]
    fn sqrt_with_denominator_and_signs() {
        assert!((re("sqrt(3)/2") - 0.8660254037844386).abs() < 1e-15);
        assert!((re("-sqrt(3)/2") + 0.8660254037844386).abs() < 1e-15);
        assert!((re("-1/2*sqrt(3)") + 0.8660254037844386).abs() < 1e-15);
        assert!((re("7/sqrt(85)") - 7.0 / 85f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn plain_imaginary_and_sums() {
        let v = parse_amplitude("1/2 - 1/2i").unwrap();
        assert_eq!(v, Complex64::new(0.5, -0.5));
        let v = parse_amplitude("1i").unwrap();
        assert_eq!(v, Complex64::new(0.0, 1.0));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_amplitude("1/").unwrap_err();
        assert!(matches!(err, Error::Amplitude { pos: 2, .. }), "{err}");
        assert!(parse_amplitude("sqrt(2").is_err());
        assert!(parse_amplitude("").is_err());
        assert!(parse_amplitude("1 ? 2").is_err());
        assert!(parse_amplitude("1/0").is_err());
    }

    #[test]
    fn out_of_norm_values_still_parse() {
        // Norm enforcement happens at the machine level, not here.
        assert_eq!(re("2"), 2.0);
    }
}
