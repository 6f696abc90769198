//! Exact symbolic algebra on the asymptotic basis.
//!
//! Every tail is a finite combination of the two families
//!
//! ```text
//!   A(k) = <x>^-k           B(k) = x <x>^-(k+1),     <x> = sqrt(1 + x^2)
//! ```
//!
//! with exact rational coefficients. Both families behave like `|x|^-k` at
//! infinity; `A(k) + B(k)` dominates on the right and `A(k) - B(k)` on the
//! left. The span is closed under differentiation and multiplication, which is
//! what lets the Helmholtz inverse act on tails without any rounding.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Basis family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Kind {
    /// `<x>^-k`
    A,
    /// `x <x>^-(k+1)`
    B,
}

/// One basis element. Ordered by index first so iteration runs from the
/// slowest decaying term outward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Basis {
    pub k: u32,
    pub kind: Kind,
}

impl Basis {
    pub fn a(k: u32) -> Self {
        Basis { k, kind: Kind::A }
    }

    pub fn b(k: u32) -> Self {
        Basis { k, kind: Kind::B }
    }

    pub fn eval(self, x: f64) -> f64 {
        let r = 1.0 / (1.0 + x * x).sqrt();
        match self.kind {
            Kind::A => r.powi(self.k as i32),
            Kind::B => x * r.powi(self.k as i32 + 1),
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            Kind::A => write!(f, "A({})", self.k),
            Kind::B => write!(f, "B({})", self.k),
        }
    }
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Exact rational value of a finite double.
pub fn exact_f64(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap_or_else(BigRational::zero)
}

fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Finite exact combination of `A(k)` and `B(k)` terms in canonical form
/// (zero coefficients are never stored).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TailExpansion {
    terms: BTreeMap<Basis, BigRational>,
}

impl TailExpansion {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn term(basis: Basis, coeff: BigRational) -> Self {
        let mut t = Self::zero();
        t.add_term(basis, coeff);
        t
    }

    pub fn a(k: u32) -> Self {
        Self::term(Basis::a(k), BigRational::one())
    }

    pub fn b(k: u32) -> Self {
        Self::term(Basis::b(k), BigRational::one())
    }

    /// Constant function `c`.
    pub fn constant(c: BigRational) -> Self {
        Self::term(Basis::a(0), c)
    }

    pub fn add_term(&mut self, basis: Basis, coeff: BigRational) {
        if coeff.is_zero() {
            return;
        }
        let slot = self.terms.entry(basis).or_insert_with(BigRational::zero);
        *slot += coeff;
        if slot.is_zero() {
            self.terms.remove(&basis);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, basis: Basis) -> BigRational {
        self.terms.get(&basis).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn coeff_f64(&self, basis: Basis) -> f64 {
        self.terms.get(&basis).map(to_f64).unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Basis, &BigRational)> {
        self.terms.iter().map(|(b, c)| (*b, c))
    }

    pub fn min_index(&self) -> Option<u32> {
        self.terms.keys().map(|b| b.k).min()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.terms.keys().map(|b| b.k).max()
    }

    /// Sum of absolute coefficients, the finite-dimensional part of the
    /// asymptotic norm.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| to_f64(&c.abs())).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (b, c) in other.terms() {
            out.add_term(b, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-BigRational::one()))
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(b, v)| (*b, v * c)).collect(),
        }
    }

    pub fn scale_f64(&self, c: f64) -> Self {
        self.scale(&exact_f64(c))
    }

    /// Splits into `(terms with k <= max_k, terms with k > max_k)`.
    pub fn split_above(&self, max_k: u32) -> (Self, Self) {
        let mut keep = Self::zero();
        let mut rest = Self::zero();
        for (b, c) in self.terms() {
            if b.k <= max_k {
                keep.terms.insert(b, c.clone());
            } else {
                rest.terms.insert(b, c.clone());
            }
        }
        (keep, rest)
    }

    /// Exact derivative.
    ///
    /// `A(k)' = -k B(k+1)` and `B(k)' = -k A(k+1) + (k+1) A(k+3)`.
    pub fn derivative(&self) -> Self {
        let mut out = Self::zero();
        for (b, c) in self.terms() {
            let k = b.k as i64;
            match b.kind {
                Kind::A => out.add_term(Basis::b(b.k + 1), c * int(-k)),
                Kind::B => {
                    out.add_term(Basis::a(b.k + 1), c * int(-k));
                    out.add_term(Basis::a(b.k + 3), c * int(k + 1));
                }
            }
        }
        out
    }

    pub fn nth_derivative(&self, order: usize) -> Self {
        (0..order).fold(self.clone(), |acc, _| acc.derivative())
    }

    /// Exact product. `B(j) B(k) = A(j+k) - A(j+k+2)` because `x^2 = <x>^2 - 1`.
    pub fn product(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (b1, c1) in self.terms() {
            for (b2, c2) in other.terms() {
                let c = c1 * c2;
                let k = b1.k + b2.k;
                match (b1.kind, b2.kind) {
                    (Kind::A, Kind::A) => out.add_term(Basis::a(k), c),
                    (Kind::A, Kind::B) | (Kind::B, Kind::A) => out.add_term(Basis::b(k), c),
                    (Kind::B, Kind::B) => {
                        out.add_term(Basis::a(k + 2), -c.clone());
                        out.add_term(Basis::a(k), c);
                    }
                }
            }
        }
        out
    }

    /// `e - e''`, the Helmholtz operator applied symbolically.
    pub fn helmholtz(&self) -> Self {
        self.sub(&self.derivative().derivative())
    }

    /// Telescoping preimage under `1 - d^2/dx^2`.
    ///
    /// Returns `(S, R)` with `S - S'' + R = e` exactly, where for each term of
    /// index `k` the sum `S = sum_{j<=l} e^(2j)` stops at the smallest `l` with
    /// `k + 2l + 2 >= n_target + 1`, and `R = e^(2l+2)` has every index above
    /// `n_target`.
    pub fn helmholtz_preimage(&self, n_target: u32) -> Result<(Self, Self)> {
        if self.is_empty() {
            return Err(Error::EmptyTail);
        }
        let mut s = Self::zero();
        let mut r = Self::zero();
        for (b, c) in self.terms() {
            let need = (n_target as i64 + 1) - (b.k as i64) - 2;
            let l = if need <= 0 { 0 } else { ((need + 1) / 2) as usize };
            let mut d = Self::term(b, c.clone());
            for _ in 0..=l {
                s = s.add(&d);
                d = d.derivative().derivative();
            }
            r = r.add(&d);
        }
        Ok((s, r))
    }

    /// Coefficients of the `1/x^k` expansions at `+inf` and `-inf`, exact.
    ///
    /// Uses `<x>^-p = |x|^-p (1 + x^-2)^(-p/2)` expanded binomially.
    pub fn c_coeffs_exact(&self, order: u32) -> (Vec<BigRational>, Vec<BigRational>) {
        let n = order as usize + 1;
        let mut plus = vec![BigRational::zero(); n];
        let mut minus = vec![BigRational::zero(); n];
        for (b, c) in self.terms() {
            // exponent p of <x> and sign of the x<0 branch
            let (p, neg_sign) = match b.kind {
                Kind::A => (b.k, b.k % 2 == 1),
                Kind::B => (b.k + 1, b.k % 2 == 0),
            };
            let alpha = rational(-(p as i64), 2);
            let mut binom = BigRational::one();
            let mut j = 0u32;
            while b.k + 2 * j <= order {
                let idx = (b.k + 2 * j) as usize;
                let v = c * &binom;
                plus[idx] += &v;
                if neg_sign {
                    minus[idx] -= &v;
                } else {
                    minus[idx] += &v;
                }
                binom = binom * (&alpha - int(j as i64)) / int(j as i64 + 1);
                j += 1;
            }
        }
        (plus, minus)
    }

    /// Floating-point view of [`Self::c_coeffs_exact`].
    pub fn c_coeffs(&self, order: u32) -> (Vec<f64>, Vec<f64>) {
        let (p, m) = self.c_coeffs_exact(order);
        (p.iter().map(to_f64).collect(), m.iter().map(to_f64).collect())
    }

    /// Inverse of [`Self::c_coeffs_exact`]: the unique tail with indices
    /// `0..=order` whose expansions at `+-inf` start with the given values.
    pub fn from_c_coeffs(plus: &[BigRational], minus: &[BigRational]) -> Result<Self> {
        if plus.len() != minus.len() {
            return Err(Error::Invalid(format!(
                "c+ has {} entries but c- has {}",
                plus.len(),
                minus.len()
            )));
        }
        let mut out = Self::zero();
        let two = int(2);
        for k in 0..plus.len() {
            let (lp, lm) = out.c_coeffs_exact(k as u32);
            let dp = &plus[k] - &lp[k];
            let dm = &minus[k] - &lm[k];
            // A(k) contributes (1, (-1)^k); B(k) contributes (1, (-1)^(k+1))
            let dm = if k % 2 == 1 { -dm } else { dm };
            out.add_term(Basis::a(k as u32), (&dp + &dm) / &two);
            out.add_term(Basis::b(k as u32), (&dp - &dm) / &two);
        }
        Ok(out)
    }

    pub fn numeric(&self) -> NumericTail {
        NumericTail::new(self)
    }

    /// Evaluates at one point. Use [`Self::numeric`] for repeated evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.numeric().eval(x)
    }
}

impl fmt::Display for TailExpansion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (b, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})*{b}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermRecord {
    kind: Kind,
    k: u32,
    num: String,
    den: String,
}

impl Serialize for TailExpansion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let recs: Vec<TermRecord> = self
            .terms()
            .map(|(b, c)| TermRecord {
                kind: b.kind,
                k: b.k,
                num: c.numer().to_string(),
                den: c.denom().to_string(),
            })
            .collect();
        recs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TailExpansion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let recs = Vec::<TermRecord>::deserialize(d)?;
        let mut out = TailExpansion::zero();
        for r in recs {
            let num: BigInt = r.num.parse().map_err(D::Error::custom)?;
            let den: BigInt = r.den.parse().map_err(D::Error::custom)?;
            if den.is_zero() {
                return Err(D::Error::custom("zero denominator"));
            }
            out.add_term(Basis { k: r.k, kind: r.kind }, BigRational::new(num, den));
        }
        Ok(out)
    }
}

/// Tail with coefficients rounded once to `f64`, for fast pointwise work.
#[derive(Clone, Debug, Default)]
pub struct NumericTail {
    // (kind, k, coeff), sorted by k
    terms: Vec<(Kind, u32, f64)>,
}

impl NumericTail {
    pub fn new(t: &TailExpansion) -> Self {
        Self { terms: t.terms().map(|(b, c)| (b.kind, b.k, to_f64(c))).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.terms.is_empty() {
            return 0.0;
        }
        self.eval_with(x, 1.0 / (1.0 + x * x).sqrt())
    }

    /// Evaluation with `r = 1/<x>` supplied by the caller.
    #[inline]
    pub fn eval_with(&self, x: f64, r: f64) -> f64 {
        let mut pow = 1.0;
        let mut p = 0u32;
        let mut acc = 0.0;
        // exponents A(k) -> k, B(k) -> k + 1 are nondecreasing in this order
        for &(kind, k, c) in &self.terms {
            let e = if kind == Kind::B { k + 1 } else { k };
            while p < e {
                pow *= r;
                p += 1;
            }
            acc += match kind {
                Kind::A => c * pow,
                Kind::B => c * x * pow,
            };
        }
        acc
    }

    /// Bound on `sup_{|x| >= l} |e(x)|`, using `|A(k)|, |B(k)| <= <l>^-k` there.
    pub fn sup_beyond(&self, l: f64) -> f64 {
        let r = 1.0 / (1.0 + l * l).sqrt();
        self.terms.iter().map(|&(_, k, c)| c.abs() * r.powi(k as i32)).sum()
    }

    /// Bound on `sup_x |e(x)|` (each basis function is bounded by 1).
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|&(_, _, c)| c.abs()).sum()
    }
}
