//! Working-model formulas such as `linear: x1 + x2` or `logistic: sin(x1) + ind(x2>0) + x1*x2`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::data::Covariates;
use crate::error::{IdidError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Var(String),
    Sin(String),
    /// `1{x > cut}`
    Ind(String, f64),
    Product(String, String),
}

impl Term {
    fn eval(&self, x: &Covariates) -> Result<Vec<f64>> {
        let col = |name: &str| {
            x.column(name).ok_or_else(|| {
                IdidError::Schema(format!("formula references unknown covariate `{name}`"))
            })
        };
        Ok(match self {
            Term::Var(a) => col(a)?.to_vec(),
            Term::Sin(a) => col(a)?.iter().map(|v| v.sin()).collect(),
            Term::Ind(a, c) => col(a)?
                .iter()
                .map(|&v| f64::from(u8::from(v > *c)))
                .collect(),
            Term::Product(a, b) => col(a)?.iter().zip(col(b)?).map(|(u, v)| u * v).collect(),
        })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(a) => write!(f, "{a}"),
            Term::Sin(a) => write!(f, "sin({a})"),
            Term::Ind(a, c) => write!(f, "ind({a}>{c})"),
            Term::Product(a, b) => write!(f, "{a}*{b}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Linear,
    Logistic,
}

/// Intercept plus a list of terms. An empty term list is the constant model.
#[derive(Clone, Debug, PartialEq)]
pub struct Formula {
    pub family: Option<Family>,
    pub terms: Vec<Term>,
}

impl Formula {
    pub fn constant() -> Self {
        Formula {
            family: None,
            terms: Vec::new(),
        }
    }

    /// Every covariate entering linearly.
    pub fn all_linear(x: &Covariates) -> Self {
        Formula {
            family: None,
            terms: x.names.iter().cloned().map(Term::Var).collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Design matrix with a leading intercept column.
    pub fn design(&self, x: &Covariates, rows: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::from_element(rows, self.terms.len() + 1, 1.0);
        for (j, term) in self.terms.iter().enumerate() {
            let v = term.eval(x)?;
            if v.len() != rows {
                return Err(IdidError::Schema(
                    "covariate rows do not match the cell".into(),
                ));
            }
            m.set_column(j + 1, &nalgebra::DVector::from_vec(v));
        }
        Ok(m)
    }

    pub fn check_family(&self, expected: Family) -> Result<()> {
        match self.family {
            Some(f) if f != expected => Err(IdidError::Config(format!(
                "formula `{self}` has the wrong model family for this role"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("constant");
        }
        match self.family {
            Some(Family::Linear) => f.write_str("linear: ")?,
            Some(Family::Logistic) => f.write_str("logistic: ")?,
            None => {}
        }
        let parts: Vec<String> = self.terms.iter().map(Term::to_string).collect();
        f.write_str(&parts.join(" + "))
    }
}

fn ident(s: &str) -> Result<String> {
    let s = s.trim();
    let ok = !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '.')
        && !s.starts_with(|c: char| c.is_ascii_digit());
    if ok {
        Ok(s.to_owned())
    } else {
        Err(IdidError::Config(format!(
            "bad variable name `{s}` in formula"
        )))
    }
}

fn parse_term(s: &str) -> Result<Term> {
    let s = s.trim();
    let inner = |prefix: &str| {
        s.strip_prefix(prefix)
            .and_then(|r| r.strip_suffix(')'))
            .map(str::trim)
    };
    if let Some(a) = inner("sin(") {
        return Ok(Term::Sin(ident(a)?));
    }
    if let Some(body) = inner("ind(") {
        let (a, c) = body
            .split_once('>')
            .ok_or_else(|| IdidError::Config(format!("indicator `{s}` must read ind(x>c)")))?;
        let c = c
            .trim()
            .parse::<f64>()
            .map_err(|_| IdidError::Config(format!("bad threshold in `{s}`")))?;
        return Ok(Term::Ind(ident(a)?, c));
    }
    if let Some((a, b)) = s.split_once('*') {
        return Ok(Term::Product(ident(a)?, ident(b)?));
    }
    Ok(Term::Var(ident(s)?))
}

impl FromStr for Formula {
    type Err = IdidError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, body) = match s.split_once(':') {
            Some((fam, body)) => {
                let fam = match fam.trim() {
                    "linear" => Family::Linear,
                    "logistic" => Family::Logistic,
                    other => {
                        return Err(IdidError::Config(format!("unknown model family `{other}`")))
                    }
                };
                (Some(fam), body.trim())
            }
            None => (None, s),
        };
        if body == "constant" || body == "1" {
            return Ok(Formula {
                family,
                terms: Vec::new(),
            });
        }
        let terms = body
            .split('+')
            .map(parse_term)
            .filter(|t| !matches!(t, Ok(Term::Var(v)) if v == "1"))
            .collect::<Result<Vec<_>>>()?;
        Ok(Formula { family, terms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_misspecification_terms() {
        let f: Formula = "logistic: sin(x1) + ind(x2>0) + x1*x2".parse().unwrap();
        assert_eq!(f.family, Some(Family::Logistic));
        assert_eq!(
            f.terms,
            vec![
                Term::Sin("x1".into()),
                Term::Ind("x2".into(), 0.0),
                Term::Product("x1".into(), "x2".into())
            ]
        );
        assert_eq!(f.to_string().parse::<Formula>().unwrap(), f);
    }

    #[test]
    fn constant_and_errors() {
        assert!("constant".parse::<Formula>().unwrap().is_constant());
        assert!("linear: 1".parse::<Formula>().unwrap().is_constant());
        assert!("probit: x1".parse::<Formula>().is_err());
        assert!("x1 + ind(x2)".parse::<Formula>().is_err());
    }

    #[test]
    fn design_columns() {
        let x = Covariates::new(
            vec!["x1".into(), "x2".into()],
            vec![vec![0.0, 1.0], vec![-1.0, 2.0]],
        )
        .unwrap();
        let f: Formula = "sin(x1) + ind(x2>0) + x1*x2".parse().unwrap();
        let m = f.design(&x, 2).unwrap();
        assert_eq!(m.ncols(), 4);
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(m[(1, 1)], 1f64.sin());
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 3)], 2.0);
        let bad: Formula = "x3".parse().unwrap();
        assert!(matches!(bad.design(&x, 2), Err(IdidError::Schema(_))));
    }
}
