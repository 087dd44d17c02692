//! Parameter domains and affine decompositions `Σ_q θ_q(µ) · term_q`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SparseMatrix;

/// Compact box `[lower, upper] ⊂ Rⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::InvalidDomain(format!("need finite lower < upper, got {lower:?} / {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim() && mu.iter().zip(self.lower.iter().zip(&self.upper)).all(|(m, (l, u))| l <= m && m <= u)
    }

    /// `Ok(())` iff `mu` lies in the box.
    pub fn check(&self, mu: &[f64]) -> Result<()> {
        if self.contains(mu) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { mu: mu.to_vec() })
        }
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| l + t * (u - l))
            .collect()
    }
}

/// A point `µ` that is known to lie in its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterValue {
    coords: Vec<f64>,
}

impl ParameterValue {
    pub fn new(domain: &ParameterDomain, coords: Vec<f64>) -> Result<Self> {
        domain.check(&coords)?;
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

impl fmt::Display for ParameterValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords.iter().map(|c| format!("{c}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Rational expression in the parameter components.
///
/// Textual form is an s-expression: `1.5`, `(mu 0)`, `(+ a b)`, `(* a b)`, `(/ a b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaExpr {
    Const(f64),
    Coord(usize),
    Add(Box<ThetaExpr>, Box<ThetaExpr>),
    Mul(Box<ThetaExpr>, Box<ThetaExpr>),
    Div(Box<ThetaExpr>, Box<ThetaExpr>),
}

impl ThetaExpr {
    pub fn one() -> Self {
        ThetaExpr::Const(1.0)
    }

    pub fn coord(i: usize) -> Self {
        ThetaExpr::Coord(i)
    }

    /// `c0 + Σ cᵢ µᵢ` with zero coefficients left out.
    pub fn affine(c0: f64, coeffs: &[f64]) -> Self {
        let mut e: Option<ThetaExpr> = (c0 != 0.0).then_some(ThetaExpr::Const(c0));
        for (i, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let term = if c == 1.0 { ThetaExpr::Coord(i) } else { ThetaExpr::Const(c).mul(ThetaExpr::Coord(i)) };
            e = Some(match e {
                None => term,
                Some(prev) => prev.add(term),
            });
        }
        e.unwrap_or(ThetaExpr::Const(0.0))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: ThetaExpr) -> Self {
        match (&self, &other) {
            (ThetaExpr::Const(a), ThetaExpr::Const(b)) => ThetaExpr::Const(a + b),
            (ThetaExpr::Const(a), _) if *a == 0.0 => other,
            (_, ThetaExpr::Const(b)) if *b == 0.0 => self,
            _ => ThetaExpr::Add(Box::new(self), Box::new(other)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: ThetaExpr) -> Self {
        match (&self, &other) {
            (ThetaExpr::Const(a), ThetaExpr::Const(b)) => ThetaExpr::Const(a * b),
            (ThetaExpr::Const(a), _) if *a == 1.0 => other,
            (_, ThetaExpr::Const(b)) if *b == 1.0 => self,
            _ => ThetaExpr::Mul(Box::new(self), Box::new(other)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn div(self, other: ThetaExpr) -> Self {
        match (&self, &other) {
            (ThetaExpr::Const(a), ThetaExpr::Const(b)) => ThetaExpr::Const(a / b),
            (_, ThetaExpr::Const(b)) if *b == 1.0 => self,
            _ if self == other => ThetaExpr::Const(1.0),
            _ => ThetaExpr::Div(Box::new(self), Box::new(other)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ThetaExpr::Const(c) if *c == 0.0)
    }

    pub fn eval(&self, mu: &[f64]) -> f64 {
        match self {
            ThetaExpr::Const(c) => *c,
            ThetaExpr::Coord(i) => mu[*i],
            ThetaExpr::Add(a, b) => a.eval(mu) + b.eval(mu),
            ThetaExpr::Mul(a, b) => a.eval(mu) * b.eval(mu),
            ThetaExpr::Div(a, b) => a.eval(mu) / b.eval(mu),
        }
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            ThetaExpr::Const(_) => None,
            ThetaExpr::Coord(i) => Some(*i),
            ThetaExpr::Add(a, b) | ThetaExpr::Mul(a, b) | ThetaExpr::Div(a, b) => a.max_coord().max(b.max_coord()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text);
        let mut pos = 0;
        let e = parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Artifact(format!("trailing tokens in theta expression {text:?}")));
        }
        Ok(e)
    }
}

impl fmt::Display for ThetaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest exact round-trip form.
            ThetaExpr::Const(c) => write!(f, "{c:?}"),
            ThetaExpr::Coord(i) => write!(f, "(mu {i})"),
            ThetaExpr::Add(a, b) => write!(f, "(+ {a} {b})"),
            ThetaExpr::Mul(a, b) => write!(f, "(* {a} {b})"),
            ThetaExpr::Div(a, b) => write!(f, "(/ {a} {b})"),
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_owned).collect()
}

fn parse_tokens(tokens: &[String], pos: &mut usize) -> Result<ThetaExpr> {
    let bad = |msg: &str| Error::Artifact(format!("theta expression: {msg}"));
    let tok = tokens.get(*pos).ok_or_else(|| bad("unexpected end"))?;
    *pos += 1;
    if tok != "(" {
        return tok.parse::<f64>().map(ThetaExpr::Const).map_err(|_| bad(&format!("bad number {tok:?}")));
    }
    let head = tokens.get(*pos).ok_or_else(|| bad("unexpected end"))?.clone();
    *pos += 1;
    let e = match head.as_str() {
        "mu" => {
            let idx = tokens.get(*pos).ok_or_else(|| bad("missing index"))?;
            *pos += 1;
            ThetaExpr::Coord(idx.parse().map_err(|_| bad(&format!("bad index {idx:?}")))?)
        }
        "+" | "*" | "/" => {
            let a = Box::new(parse_tokens(tokens, pos)?);
            let b = Box::new(parse_tokens(tokens, pos)?);
            match head.as_str() {
                "+" => ThetaExpr::Add(a, b),
                "*" => ThetaExpr::Mul(a, b),
                _ => ThetaExpr::Div(a, b),
            }
        }
        other => return Err(bad(&format!("unknown operator {other:?}"))),
    };
    if tokens.get(*pos).map(String::as_str) != Some(")") {
        return Err(bad("missing ')'"));
    }
    *pos += 1;
    Ok(e)
}

/// Payload of an affine term: a sparse matrix or a dense vector.
pub trait AffineTerm: Clone + Send + Sync {
    /// Data shared by all terms that makes combination cheap.
    type Plan: Clone + Send + Sync;

    fn shape(&self) -> (usize, usize);
    fn plan(terms: &[Self]) -> Self::Plan;
    fn combine(plan: &Self::Plan, coeffs: &[f64], terms: &[Self]) -> Self;
    fn add(&self, other: &Self) -> Self;
}

impl AffineTerm for Vec<f64> {
    type Plan = ();

    fn shape(&self) -> (usize, usize) {
        (self.len(), 1)
    }

    fn plan(_: &[Self]) {}

    fn combine(_: &(), coeffs: &[f64], terms: &[Self]) -> Self {
        let mut out = vec![0.0; terms[0].len()];
        for (c, t) in coeffs.iter().zip(terms) {
            out.iter_mut().zip(t).for_each(|(o, v)| *o += c * v);
        }
        out
    }

    fn add(&self, other: &Self) -> Self {
        self.iter().zip(other).map(|(a, b)| a + b).collect()
    }
}

/// Union sparsity pattern plus, per term, where each stored entry lands in it.
#[derive(Debug, Clone)]
pub struct MatrixPlan {
    pattern: SparseMatrix,
    slots: Vec<Vec<usize>>,
}

impl AffineTerm for SparseMatrix {
    type Plan = MatrixPlan;

    fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    fn plan(terms: &[Self]) -> MatrixPlan {
        let refs: Vec<&SparseMatrix> = terms.iter().collect();
        let zeros = vec![0.0; refs.len()];
        let pattern = SparseMatrix::linear_combination(&zeros, &refs).expect("terms share a shape");
        let slots = terms
            .iter()
            .map(|t| t.triplets().map(|(r, c, _)| pattern.position(r, c).expect("entry in union")).collect())
            .collect();
        MatrixPlan { pattern, slots }
    }

    fn combine(plan: &MatrixPlan, coeffs: &[f64], terms: &[Self]) -> Self {
        let mut data = vec![0.0; plan.pattern.nnz()];
        for ((c, t), slots) in coeffs.iter().zip(terms).zip(&plan.slots) {
            for (&k, v) in slots.iter().zip(t.data()) {
                data[k] += c * v;
            }
        }
        plan.pattern.with_data(data)
    }

    fn add(&self, other: &Self) -> Self {
        SparseMatrix::linear_combination(&[1.0, 1.0], &[self, other]).expect("terms share a shape")
    }
}

/// `Σ_q θ_q(µ) term_q` over a parameter domain.
#[derive(Debug, Clone)]
pub struct AffineDecomposition<T: AffineTerm> {
    domain: ParameterDomain,
    thetas: Vec<ThetaExpr>,
    terms: Vec<T>,
    plan: T::Plan,
}

impl<T: AffineTerm> AffineDecomposition<T> {
    /// Builds the decomposition, merging terms whose θ are structurally equal
    /// and dropping terms whose θ is identically zero.
    pub fn new(domain: ParameterDomain, parts: Vec<(ThetaExpr, T)>) -> Result<Self> {
        let mut thetas: Vec<ThetaExpr> = Vec::new();
        let mut terms: Vec<T> = Vec::new();
        let mut shape = None;
        for (theta, term) in parts {
            if *shape.get_or_insert(term.shape()) != term.shape() {
                return Err(Error::DimensionMismatch("affine terms of different shapes".into()));
            }
            if theta.max_coord().is_some_and(|i| i >= domain.dim()) {
                return Err(Error::DimensionMismatch(format!("theta {theta} exceeds parameter dimension")));
            }
            if theta.is_zero() {
                continue;
            }
            match thetas.iter().position(|t| *t == theta) {
                Some(k) => terms[k] = terms[k].add(&term),
                None => {
                    thetas.push(theta);
                    terms.push(term);
                }
            }
        }
        if terms.is_empty() {
            return Err(Error::DimensionMismatch("affine decomposition needs at least one term".into()));
        }
        let plan = T::plan(&terms);
        Ok(Self { domain, thetas, terms, plan })
    }

    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    /// Number of terms `Q`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn thetas(&self) -> &[ThetaExpr] {
        &self.thetas
    }

    pub fn terms(&self) -> &[T] {
        &self.terms
    }

    pub fn term(&self, q: usize) -> &T {
        &self.terms[q]
    }

    pub fn eval_thetas(&self, mu: &[f64]) -> Result<Vec<f64>> {
        self.domain.check(mu)?;
        Ok(self.thetas.iter().map(|t| t.eval(mu)).collect())
    }

    pub fn assemble_at(&self, mu: &[f64]) -> Result<T> {
        let coeffs = self.eval_thetas(mu)?;
        Ok(T::combine(&self.plan, &coeffs, &self.terms))
    }

    /// `Σ cₖ termₖ` for caller-supplied coefficients.
    pub fn combine(&self, coeffs: &[f64]) -> T {
        assert_eq!(coeffs.len(), self.len());
        T::combine(&self.plan, coeffs, &self.terms)
    }

    /// Decomposition of the sum of two parametrized objects.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::InvalidDomain("summing decompositions over different domains".into()));
        }
        let parts = self
            .thetas
            .iter()
            .cloned()
            .zip(self.terms.iter().cloned())
            .chain(other.thetas.iter().cloned().zip(other.terms.iter().cloned()))
            .collect();
        Self::new(self.domain.clone(), parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ParameterDomain {
        ParameterDomain::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap()
    }

    #[test]
    fn constant_and_ratio_thetas() {
        let dom = unit_square();
        let d = AffineDecomposition::new(
            dom,
            vec![
                (ThetaExpr::one(), vec![1.0]),
                (ThetaExpr::coord(0).div(ThetaExpr::coord(1)), vec![2.0]),
            ],
        )
        .unwrap();
        assert_eq!(d.eval_thetas(&[2.0, 4.0]).unwrap(), vec![1.0, 0.5]);
        assert_eq!(d.eval_thetas(&[7.0, 1.0]).unwrap()[0], 1.0);
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let d = AffineDecomposition::new(unit_square(), vec![(ThetaExpr::one(), vec![1.0])]).unwrap();
        assert!(matches!(d.eval_thetas(&[11.0, 0.0]), Err(Error::OutOfDomain { .. })));
        assert!(matches!(d.assemble_at(&[1.0]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn single_term_is_returned_unchanged() {
        let m = SparseMatrix::from_dense(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let d = AffineDecomposition::new(unit_square(), vec![(ThetaExpr::one(), m.clone())]).unwrap();
        assert_eq!(d.assemble_at(&[1.0, 1.0]).unwrap().to_dense(), m.to_dense());
    }

    #[test]
    fn opposite_terms_cancel() {
        let m = SparseMatrix::from_dense(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let d = AffineDecomposition::new(
            unit_square(),
            vec![(ThetaExpr::one(), m.clone()), (ThetaExpr::coord(0), m)],
        )
        .unwrap();
        // θ = (1, µ₁) at µ₁ = -1 is not in the box; use combine directly.
        assert_eq!(d.combine(&[1.0, -1.0]).max_abs(), 0.0);
    }

    #[test]
    fn equal_thetas_are_merged() {
        let th = ThetaExpr::affine(1.0, &[-1.0, 0.0]).div(ThetaExpr::Const(0.6));
        let d = AffineDecomposition::new(
            unit_square(),
            vec![(th.clone(), vec![1.0, 0.0]), (th, vec![0.0, 1.0]), (ThetaExpr::Const(0.0), vec![5.0, 5.0])],
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.term(0), &vec![1.0, 1.0]);
    }

    #[test]
    fn sexpr_round_trip() {
        let e = ThetaExpr::affine(0.1, &[-1.0, 2.5]).mul(ThetaExpr::Const(1.0 / 3.0)).div(ThetaExpr::coord(1));
        let text = e.to_string();
        let back = ThetaExpr::parse(&text).unwrap();
        assert_eq!(back, e);
        assert_eq!(ThetaExpr::parse("(/ (mu 0) (mu 1))").unwrap().eval(&[2.0, 4.0]), 0.5);
        assert!(ThetaExpr::parse("(^ 1 2)").is_err());
        assert!(ThetaExpr::parse("(+ 1 2").is_err());
    }

    #[test]
    fn invalid_domains() {
        assert!(ParameterDomain::new(vec![1.0], vec![1.0]).is_err());
        assert!(ParameterDomain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(ParameterDomain::new(vec![], vec![]).is_err());
    }
}
