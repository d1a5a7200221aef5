//! Sums of separable trigonometric products on `[0, pi]^n`.
//!
//! Every basis function, its curl and its divergence is a short sum of terms
//! `c * prod_a trig_a(k_a x_a)`. Differentiation maps this class to itself,
//! and integrals of products over `[0, pi]^n` factor into exact 1D integrals.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Trig {
    Sin,
    Cos,
}

/// One axis factor `trig(k x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Factor {
    pub trig: Trig,
    pub k: u32,
}

impl Factor {
    pub fn sin(k: u32) -> Self {
        Factor { trig: Trig::Sin, k }
    }

    pub fn cos(k: u32) -> Self {
        Factor { trig: Trig::Cos, k }
    }

    pub fn eval(self, x: f64) -> f64 {
        let t = self.k as f64 * x;
        match self.trig {
            Trig::Sin => t.sin(),
            Trig::Cos => t.cos(),
        }
    }

    fn is_zero(self) -> bool {
        self.trig == Trig::Sin && self.k == 0
    }

    /// `d/dx trig(k x) = scale * other(k x)`.
    fn derivative(self) -> (f64, Factor) {
        let k = self.k as f64;
        match self.trig {
            Trig::Sin => (k, Factor::cos(self.k)),
            Trig::Cos => (-k, Factor::sin(self.k)),
        }
    }
}

/// Exact `int_0^pi f(x) g(x) dx`.
pub fn integral_1d(f: Factor, g: Factor) -> f64 {
    // int_0^pi sin(j x) dx, odd in j.
    fn sin_integral(j: i64) -> f64 {
        if j == 0 || j % 2 == 0 {
            0.0
        } else {
            2.0 / j as f64
        }
    }
    let (k, m) = (f.k as i64, g.k as i64);
    match (f.trig, g.trig) {
        (Trig::Sin, Trig::Sin) => {
            if k == m && k > 0 {
                PI / 2.0
            } else {
                0.0
            }
        }
        (Trig::Cos, Trig::Cos) => match (k == m, k) {
            (true, 0) => PI,
            (true, _) => PI / 2.0,
            _ => 0.0,
        },
        (Trig::Sin, Trig::Cos) => 0.5 * (sin_integral(k + m) + sin_integral(k - m)),
        (Trig::Cos, Trig::Sin) => integral_1d(g, f),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn eval(&self, p: &[f64]) -> f64 {
        self.factors
            .iter()
            .zip(p)
            .fold(self.coef, |acc, (f, &x)| acc * f.eval(x))
    }
}

/// A finite sum of separable terms in a fixed dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    terms: Vec<Term>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { terms: Vec::new() }
    }

    pub fn monomial(coef: f64, factors: Vec<Factor>) -> Self {
        Poly::from_terms(vec![Term { coef, factors }])
    }

    /// Merges terms with identical factors and drops vanishing ones.
    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut merged: Vec<Term> = Vec::new();
        for t in terms {
            if t.coef == 0.0 || t.factors.iter().any(|f| f.is_zero()) {
                continue;
            }
            match merged.iter_mut().find(|m| m.factors == t.factors) {
                Some(m) => m.coef += t.coef,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.coef != 0.0);
        Poly { terms: merged }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(p)).sum()
    }

    pub fn derivative(&self, axis: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let (scale, f) = t.factors[axis].derivative();
                let mut factors = t.factors.clone();
                factors[axis] = f;
                Term {
                    coef: t.coef * scale,
                    factors,
                }
            })
            .collect();
        Poly::from_terms(terms)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::from_terms(
            self.terms
                .iter()
                .map(|t| Term {
                    coef: t.coef * s,
                    factors: t.factors.clone(),
                })
                .collect(),
        )
    }

    pub fn add(&self, other: &Poly) -> Poly {
        Poly::from_terms(self.terms.iter().chain(&other.terms).cloned().collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    /// Exact `int_{[0,pi]^n} self * other`.
    pub fn integral_product(&self, other: &Poly) -> f64 {
        let mut acc = 0.0;
        for a in &self.terms {
            for b in &other.terms {
                let mut v = a.coef * b.coef;
                for (fa, fb) in a.factors.iter().zip(&b.factors) {
                    v *= integral_1d(*fa, *fb);
                    if v == 0.0 {
                        break;
                    }
                }
                acc += v;
            }
        }
        acc
    }
}

/// Vector field with one [`Poly`] per component.
pub type VectorPoly = Vec<Poly>;

pub fn gradient(phi: &Poly, dim: usize) -> VectorPoly {
    (0..dim).map(|a| phi.derivative(a)).collect()
}

/// 2D rotated gradient `(-d_y phi, d_x phi)`.
pub fn curl_adjoint_2d(phi: &Poly) -> VectorPoly {
    vec![phi.derivative(1).scale(-1.0), phi.derivative(0)]
}

/// 2D scalar curl `d_y v_1 - d_x v_2` (returned as a one-component field) or
/// the standard 3D curl.
pub fn curl(v: &[Poly]) -> VectorPoly {
    match v.len() {
        2 => vec![v[0].derivative(1).sub(&v[1].derivative(0))],
        3 => vec![
            v[2].derivative(1).sub(&v[1].derivative(2)),
            v[0].derivative(2).sub(&v[2].derivative(0)),
            v[1].derivative(0).sub(&v[0].derivative(1)),
        ],
        n => panic!("curl needs 2 or 3 components, got {n}"),
    }
}

/// Curl of a scalar-valued 2D curl, i.e. the adjoint applied to a one-component field.
pub fn curl_of_curl(v: &[Poly]) -> VectorPoly {
    let c = curl(v);
    if v.len() == 2 {
        curl_adjoint_2d(&c[0])
    } else {
        curl(&c)
    }
}

pub fn divergence(v: &[Poly]) -> Poly {
    v.iter()
        .enumerate()
        .fold(Poly::zero(), |acc, (a, p)| acc.add(&p.derivative(a)))
}

pub fn inner_product(a: &[Poly], b: &[Poly]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.integral_product(y)).sum()
}
