//! Exact rational scalars and finitely supported sparse vectors.
//!
//! Every computation in this crate runs over arbitrary-precision rationals;
//! there is no floating point anywhere. Indices are 1-based positive integers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

/// Exact arbitrary-precision fraction. Always stored in lowest terms with a
/// positive denominator (`num_rational` maintains both invariants).
pub type Rational = num_rational::BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NumericsError {
    #[error("assignment provides no value for index {0}")]
    MissingAssignment(usize),
    #[error("invalid rational literal {0:?}")]
    BadRational(String),
    #[error("zero denominator in rational literal {0:?}")]
    ZeroDenominator(String),
}

/// Shorthand constructor for small rationals. Panics on a zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> Rational {
    Rational::from_integer(BigInt::from(num))
}

/// Parses `"p"` or `"p/q"`. The result is normalized (lowest terms, q > 0).
pub fn parse_rational(s: &str) -> Result<Rational, NumericsError> {
    let s = s.trim();
    let (num_s, den_s) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let num =
        BigInt::from_str(num_s.trim()).map_err(|_| NumericsError::BadRational(s.to_string()))?;
    let den =
        BigInt::from_str(den_s.trim()).map_err(|_| NumericsError::BadRational(s.to_string()))?;
    if den.is_zero() {
        return Err(NumericsError::ZeroDenominator(s.to_string()));
    }
    Ok(Rational::new(num, den))
}

/// Renders as `"p"` when the denominator is 1, `"p/q"` otherwise.
pub fn render_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// A value for every variable a dot product may touch. Implementations only
/// need to answer for the finitely many indices in the vector's support.
pub trait Assignment {
    fn value_at(&self, index: usize) -> Option<Rational>;
}

/// Slices are read 1-based: index `j` maps to `self[j - 1]`.
impl Assignment for [Rational] {
    fn value_at(&self, index: usize) -> Option<Rational> {
        index.checked_sub(1).and_then(|i| self.get(i)).cloned()
    }
}

impl Assignment for Vec<Rational> {
    fn value_at(&self, index: usize) -> Option<Rational> {
        self.as_slice().value_at(index)
    }
}

impl Assignment for BTreeMap<usize, Rational> {
    fn value_at(&self, index: usize) -> Option<Rational> {
        self.get(&index).cloned()
    }
}

/// The all-ones assignment, defined on every index.
pub struct AllOnes;

impl Assignment for AllOnes {
    fn value_at(&self, _index: usize) -> Option<Rational> {
        Some(Rational::one())
    }
}

/// A vector with finite support: a map from 1-based index to nonzero rational.
/// No stored entry is ever zero, so the key set *is* the support.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct SparseVector {
    entries: BTreeMap<usize, Rational>,
}

impl SparseVector {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The standard basis vector e_j.
    pub fn unit(j: usize) -> Self {
        assert!(j >= 1, "indices are 1-based");
        let mut entries = BTreeMap::new();
        entries.insert(j, Rational::one());
        Self { entries }
    }

    /// Builds a vector from (index, value) pairs, dropping zeros. Later pairs
    /// for the same index overwrite earlier ones.
    pub fn from_entries<I: IntoIterator<Item = (usize, Rational)>>(pairs: I) -> Self {
        let mut v = Self::zero();
        for (j, c) in pairs {
            v.set(j, c);
        }
        v
    }

    /// Test helper: integer entries on indices 1..=n, zeros dropped.
    pub fn from_ints(values: &[i64]) -> Self {
        Self::from_entries(
            values
                .iter()
                .enumerate()
                .map(|(i, &c)| (i + 1, rat_int(c))),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn support(&self) -> impl DoubleEndedIterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Rational)> {
        self.entries.iter().map(|(&j, c)| (j, c))
    }

    pub fn get(&self, j: usize) -> Option<&Rational> {
        self.entries.get(&j)
    }

    /// The coefficient at `j`, with absent entries read as zero.
    pub fn coeff(&self, j: usize) -> Rational {
        self.entries.get(&j).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn min_support(&self) -> Option<usize> {
        self.entries.keys().next().copied()
    }

    pub fn max_support(&self) -> Option<usize> {
        self.entries.keys().next_back().copied()
    }

    /// Stores `value` at `j`, removing the entry when the value is zero.
    pub fn set(&mut self, j: usize, value: Rational) {
        assert!(j >= 1, "indices are 1-based");
        if value.is_zero() {
            self.entries.remove(&j);
        } else {
            self.entries.insert(j, value);
        }
    }

    /// `self + c * other`, canonically pruned of zeros.
    pub fn add_scaled(&self, c: &Rational, other: &SparseVector) -> SparseVector {
        if c.is_zero() {
            return self.clone();
        }
        let mut result = self.clone();
        for (j, value) in other.iter() {
            let sum = result.coeff(j) + c * value;
            result.set(j, sum);
        }
        result
    }

    pub fn scale(&self, c: &Rational) -> SparseVector {
        if c.is_zero() {
            return SparseVector::zero();
        }
        SparseVector {
            entries: self.entries.iter().map(|(&j, v)| (j, v * c)).collect(),
        }
    }

    /// Σ_{k∈support} self(k)·x(k). Errors when `x` is silent on a support index.
    pub fn dot<A: Assignment + ?Sized>(&self, x: &A) -> Result<Rational, NumericsError> {
        let mut acc = Rational::zero();
        for (j, c) in self.iter() {
            let v = x
                .value_at(j)
                .ok_or(NumericsError::MissingAssignment(j))?;
            acc += c * v;
        }
        Ok(acc)
    }

    /// Dot product against another finitely supported vector (missing = 0).
    pub fn dot_sparse(&self, other: &SparseVector) -> Rational {
        let (small, large) = if self.support_size() <= other.support_size() {
            (self, other)
        } else {
            (other, self)
        };
        let mut acc = Rational::zero();
        for (j, c) in small.iter() {
            if let Some(v) = large.get(j) {
                acc += c * v;
            }
        }
        acc
    }
}

impl fmt::Debug for SparseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, (j, c)) in self.iter().enumerate() {
            if n > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}:{}", j, render_rational(c))?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rational_text_form() {
        assert_eq!(render_rational(&rat(1, 2)), "1/2");
        assert_eq!(render_rational(&rat(-4, 2)), "-2");
        assert_eq!(render_rational(&rat(2, -4)), "-1/2");
        assert_eq!(parse_rational("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("-7").unwrap(), rat_int(-7));
        assert_eq!(parse_rational("5/-10").unwrap(), rat(-1, 2));
        assert!(matches!(
            parse_rational("1/0"),
            Err(NumericsError::ZeroDenominator(_))
        ));
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn add_scaled_cancels_exactly() {
        let u = SparseVector::from_ints(&[1]);
        let v = SparseVector::from_ints(&[-1]);
        assert!(u.add_scaled(&Rational::one(), &v).is_zero());
    }

    #[test]
    fn add_scaled_zero_scalar_is_identity() {
        let u = SparseVector::from_ints(&[2, 3]);
        let v = SparseVector::from_ints(&[9, 9, 9]);
        assert_eq!(u.add_scaled(&Rational::zero(), &v), u);
    }

    #[test]
    fn add_scaled_componentwise() {
        // {1:1,2:1} + (-1)*{2:1,3:1} = {1:1, 3:-1}
        let u = SparseVector::from_ints(&[1, 1]);
        let v = SparseVector::from_entries([(2, rat_int(1)), (3, rat_int(1))]);
        let got = u.add_scaled(&rat_int(-1), &v);
        assert_eq!(
            got,
            SparseVector::from_entries([(1, rat_int(1)), (3, rat_int(-1))])
        );
    }

    #[test]
    fn dot_against_assignments() {
        let u = SparseVector::from_entries([(1, rat_int(1)), (2, rat_int(-1))]);
        assert_eq!(u.dot(&AllOnes).unwrap(), Rational::zero());
        assert_eq!(SparseVector::zero().dot(&AllOnes).unwrap(), Rational::zero());

        // {1:2, 3:1/2} · (1, _, 4) = 4
        let u = SparseVector::from_entries([(1, rat_int(2)), (3, rat(1, 2))]);
        let mut x = BTreeMap::new();
        x.insert(1, rat_int(1));
        x.insert(3, rat_int(4));
        assert_eq!(u.dot(&x).unwrap(), rat_int(4));

        // Missing index on the support is an error.
        x.remove(&3);
        assert_eq!(u.dot(&x), Err(NumericsError::MissingAssignment(3)));
    }

    #[test]
    fn unit_vector_delta_property() {
        assert_eq!(SparseVector::unit(1), SparseVector::from_ints(&[1]));
        assert_eq!(
            SparseVector::unit(5),
            SparseVector::from_entries([(5, rat_int(1))])
        );
        let x = vec![rat_int(3), rat_int(7), rat_int(11)];
        for j in 1..=3 {
            assert_eq!(
                SparseVector::unit(j).dot(&x).unwrap(),
                x.as_slice().value_at(j).unwrap()
            );
        }
    }

    fn arb_rational() -> impl Strategy<Value = Rational> {
        (-20i64..=20, 1i64..=12).prop_map(|(n, d)| rat(n, d))
    }

    fn arb_vector() -> impl Strategy<Value = SparseVector> {
        proptest::collection::btree_map(1usize..=10, arb_rational(), 0..6)
            .prop_map(SparseVector::from_entries)
    }

    proptest! {
        #[test]
        fn support_union_and_no_stored_zero(u in arb_vector(), v in arb_vector(), c in arb_rational()) {
            let sum = u.add_scaled(&c, &v);
            for j in sum.support() {
                prop_assert!(u.get(j).is_some() || v.get(j).is_some());
                prop_assert!(!sum.get(j).unwrap().is_zero());
            }
        }

        #[test]
        fn dot_is_bilinear(u in arb_vector(), v in arb_vector(), c in arb_rational()) {
            // Assignment covering both supports.
            let x: BTreeMap<usize, Rational> =
                (1..=10).map(|j| (j, rat_int(j as i64 - 4))).collect();
            let lhs = u.add_scaled(&c, &v).dot(&x).unwrap();
            let rhs = u.dot(&x).unwrap() + c * v.dot(&x).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn rational_round_trips(n in -999i64..=999, d in 1i64..=999) {
            let r = rat(n, d);
            prop_assert_eq!(parse_rational(&render_rational(&r)).unwrap(), r);
        }
    }
}
