//! Canonical text form of a [`KernelSpec`].
//!
//! ```text
//! spec   := term [ '+' term ]          one main kernel and/or one whitenoise
//! term   := name '(' [ base [ ';' ] ] [ param { ',' param } ] ')'
//! name   := 'se' | 'rq' | 'matern12' | 'matern32' | 'matern52'
//!         | 'periodic' | 'whitenoise'
//! base   := 'se' | 'rq' | 'matern12' | 'matern32' | 'matern52'   (periodic only)
//! param  := key '=' ( number | '[' number { ',' number } ']' )
//! ```
//!
//! Keys: `h` amplitude, `l` lengthscale list, `alpha` RQ index, `w`
//! roughness and `T` period (periodic), `σ²` (alias `sigma2`) noise variance
//! (whitenoise). Omitted values default to `h=1`, `alpha=1`, `w=1`,
//! `T=288`, `σ²=0`; an omitted `l` leaves the spec as a template to be sized
//! with [`KernelSpec::conformed_to`]. Whitespace is insignificant.
//!
//! The printer always emits every parameter and appends the whitenoise term
//! after a main kernel, e.g.
//! `periodic(matern12; h=1.5, w=0.8, T=288, l=[0.3]) + whitenoise(σ²=0.01)`.
//! Numbers are printed in shortest round-trip form, so `parse(print(s)) == s`.

use std::fmt;

use super::{KernelSpec, MainKernel, MaternNu, Stationary, DAY_STEPS};
use crate::error::{Error, Result};

pub(crate) fn write_spec(spec: &KernelSpec, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if let Some(main) = &spec.main {
        match main {
            MainKernel::Stationary {
                base,
                amplitude,
                lengthscales,
            } => {
                write!(f, "{}(h={}", base_token(base), amplitude)?;
                write_alpha(base, f)?;
                write_list(lengthscales, f)?;
                f.write_str(")")?;
            }
            MainKernel::Periodic {
                base,
                amplitude,
                roughness,
                period,
                lengthscales,
            } => {
                write!(f, "periodic({}; h={}", base_token(base), amplitude)?;
                write_alpha(base, f)?;
                write!(f, ", w={}, T={}", roughness, period)?;
                write_list(lengthscales, f)?;
                f.write_str(")")?;
            }
        }
        f.write_str(" + ")?;
    }
    write!(f, "whitenoise(σ²={})", spec.noise_variance)
}

fn write_alpha(base: &Stationary, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if let Stationary::RationalQuadratic { alpha } = base {
        write!(f, ", alpha={alpha}")?;
    }
    Ok(())
}

fn write_list(values: &[f64], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    f.write_str(", l=[")?;
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{v}")?;
    }
    f.write_str("]")
}

fn base_token(base: &Stationary) -> &'static str {
    match base {
        Stationary::SquaredExponential => "se",
        Stationary::RationalQuadratic { .. } => "rq",
        Stationary::Matern(MaternNu::Half) => "matern12",
        Stationary::Matern(MaternNu::ThreeHalves) => "matern32",
        Stationary::Matern(MaternNu::FiveHalves) => "matern52",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BaseName {
    Se,
    Rq,
    Matern(MaternNu),
}

impl BaseName {
    fn from_token(tok: &str) -> Option<Self> {
        Some(match tok {
            "se" => BaseName::Se,
            "rq" => BaseName::Rq,
            "matern12" => BaseName::Matern(MaternNu::Half),
            "matern32" => BaseName::Matern(MaternNu::ThreeHalves),
            "matern52" => BaseName::Matern(MaternNu::FiveHalves),
            _ => return None,
        })
    }

    fn build(self, alpha: f64) -> Stationary {
        match self {
            BaseName::Se => Stationary::SquaredExponential,
            BaseName::Rq => Stationary::RationalQuadratic { alpha },
            BaseName::Matern(nu) => Stationary::Matern(nu),
        }
    }
}

enum Value {
    Scalar(f64),
    List(Vec<f64>),
}

enum Term {
    Main(MainKernel),
    Noise(f64),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::KernelSyntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|&(_, c)| !(c.is_alphanumeric() || c == '_' || c == '²'))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return self.err("expected identifier");
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|&(_, c)| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .map_or(rest.len(), |(i, _)| i);
        match rest[..len].parse::<f64>() {
            Ok(v) => {
                self.pos += len;
                Ok(v)
            }
            Err(_) => self.err("expected number"),
        }
    }

    fn value(&mut self) -> Result<Value> {
        if self.eat('[') {
            let mut out = Vec::new();
            if self.eat(']') {
                return Ok(Value::List(out));
            }
            loop {
                out.push(self.number()?);
                if self.eat(']') {
                    return Ok(Value::List(out));
                }
                self.expect(',')?;
            }
        }
        Ok(Value::Scalar(self.number()?))
    }

    fn params(&mut self) -> Result<Vec<(String, Value, usize)>> {
        let mut out = Vec::new();
        if self.eat(')') {
            return Ok(out);
        }
        loop {
            let at = self.pos;
            let key = self.ident()?.to_string();
            self.expect('=')?;
            let value = self.value()?;
            if out.iter().any(|(k, _, _)| *k == key) {
                self.pos = at;
                return self.err(format!("duplicate parameter `{key}`"));
            }
            out.push((key, value, at));
            if self.eat(')') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    fn term(&mut self) -> Result<Term> {
        let start = self.pos;
        let name = self.ident()?;
        self.expect('(')?;
        let (periodic, base) = if name == "periodic" {
            let at = self.pos;
            let tok = self.ident()?;
            let Some(base) = BaseName::from_token(tok) else {
                self.pos = at;
                return self.err(format!(
                    "periodic base must be a stationary kernel (se, rq, matern12/32/52), got `{tok}`"
                ));
            };
            self.skip_ws();
            if !self.rest().starts_with(')') {
                self.expect(';')?;
            }
            (true, Some(base))
        } else if name == "whitenoise" {
            (false, None)
        } else if let Some(b) = BaseName::from_token(name) {
            (false, Some(b))
        } else {
            self.pos = start;
            return self.err(format!("unknown kernel `{name}`"));
        };

        let params = self.params()?;
        let mut h = 1.0;
        let mut alpha = 1.0;
        let mut w = 1.0;
        let mut period = DAY_STEPS;
        let mut sigma2 = 0.0;
        let mut lengthscales = Vec::new();
        for (key, value, at) in params {
            let allowed = match (key.as_str(), base) {
                ("σ²" | "sigma2", None) => true,
                ("h" | "l", Some(_)) => true,
                ("alpha", Some(BaseName::Rq)) => true,
                ("w" | "T", Some(_)) => periodic,
                _ => false,
            };
            if !allowed {
                self.pos = at;
                return self.err(format!("parameter `{key}` not valid for `{name}`"));
            }
            match (key.as_str(), value) {
                ("l", Value::List(v)) => lengthscales = v,
                ("l", Value::Scalar(_)) => {
                    self.pos = at;
                    return self.err("`l` takes a list, e.g. l=[1, 0.5]");
                }
                (_, Value::List(_)) => {
                    self.pos = at;
                    return self.err(format!("`{key}` takes a number"));
                }
                ("h", Value::Scalar(v)) => h = v,
                ("alpha", Value::Scalar(v)) => alpha = v,
                ("w", Value::Scalar(v)) => w = v,
                ("T", Value::Scalar(v)) => period = v,
                (_, Value::Scalar(v)) => sigma2 = v,
            }
        }

        Ok(match base {
            None => Term::Noise(sigma2),
            Some(b) if periodic => Term::Main(MainKernel::Periodic {
                base: b.build(alpha),
                amplitude: h,
                roughness: w,
                period,
                lengthscales,
            }),
            Some(b) => Term::Main(MainKernel::Stationary {
                base: b.build(alpha),
                amplitude: h,
                lengthscales,
            }),
        })
    }
}

pub(crate) fn parse_spec(src: &str) -> Result<KernelSpec> {
    let mut p = Parser { src, pos: 0 };
    let mut main = None;
    let mut noise = None;
    loop {
        let at = p.pos;
        match p.term()? {
            Term::Main(m) => {
                if main.replace(m).is_some() {
                    p.pos = at;
                    return p.err("at most one main kernel is allowed");
                }
            }
            Term::Noise(s) => {
                if noise.replace(s).is_some() {
                    p.pos = at;
                    return p.err("at most one whitenoise term is allowed");
                }
            }
        }
        p.skip_ws();
        if p.rest().is_empty() {
            break;
        }
        p.expect('+')?;
    }
    let spec = KernelSpec {
        main,
        noise_variance: noise.unwrap_or(0.0),
    };
    spec.validate()?;
    Ok(spec)
}
