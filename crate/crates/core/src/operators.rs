//! Single-site matrices and products of them.
//!
//! Physical index 0 is spin up (`Z = +1`), index 1 is spin down. The reference
//! vacuum is all down, so the number operator `n = (Z + 1)/2` counts flipped
//! sites.

use ndarray::{array, Array2};

use crate::error::{Error, Result};
use crate::tensor::{C64, ONE, ZERO};

pub fn identity() -> Array2<C64> {
    array![[ONE, ZERO], [ZERO, ONE]]
}

pub fn pauli_x() -> Array2<C64> {
    array![[ZERO, ONE], [ONE, ZERO]]
}

pub fn pauli_z() -> Array2<C64> {
    array![[ONE, ZERO], [ZERO, -ONE]]
}

/// `n = (Z + 1)/2`: one on an up spin.
pub fn number() -> Array2<C64> {
    array![[ONE, ZERO], [ZERO, ZERO]]
}

/// `1 - n`.
pub fn hole() -> Array2<C64> {
    array![[ZERO, ZERO], [ZERO, ONE]]
}

/// Raises a down spin to up and annihilates an up spin.
pub fn raise() -> Array2<C64> {
    array![[ZERO, ONE], [ZERO, ZERO]]
}

/// A product of single-site matrices times a scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    support: Vec<usize>,
    factors: Vec<Array2<C64>>,
    coefficient: C64,
}

impl LocalOperator {
    pub fn new(support: Vec<usize>, factors: Vec<Array2<C64>>, coefficient: C64) -> Result<Self> {
        if support.len() != factors.len() {
            return Err(Error::InvalidOperator(format!(
                "{} sites but {} factors",
                support.len(),
                factors.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::InvalidOperator("empty support".into()));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidOperator(format!("repeated site in {support:?}")));
        }
        if let Some(f) = factors.iter().find(|f| f.dim() != (2, 2)) {
            return Err(Error::InvalidOperator(format!("factor of shape {:?}", f.dim())));
        }
        Ok(Self { support, factors, coefficient })
    }

    /// Build from `(site, matrix)` pairs, multiplying matrices that act on
    /// the same site (in the given order, rightmost acts first).
    pub fn from_factors(pairs: Vec<(usize, Array2<C64>)>, coefficient: C64) -> Result<Self> {
        let mut support: Vec<usize> = Vec::new();
        let mut factors: Vec<Array2<C64>> = Vec::new();
        for (site, m) in pairs {
            if let Some(k) = support.iter().position(|&s| s == site) {
                factors[k] = factors[k].dot(&m);
            } else {
                support.push(site);
                factors.push(m);
            }
        }
        Self::new(support, factors, coefficient)
    }

    pub fn single(site: usize, m: Array2<C64>) -> Self {
        Self::new(vec![site], vec![m], ONE).expect("valid single-site operator")
    }

    pub fn z(site: usize) -> Self {
        Self::single(site, pauli_z())
    }

    pub fn x(site: usize) -> Self {
        Self::single(site, pauli_x())
    }

    pub fn n(site: usize) -> Self {
        Self::single(site, number())
    }

    /// Product of number operators on the given sites (sites may repeat).
    pub fn n_product(sites: &[usize]) -> Self {
        Self::from_factors(sites.iter().map(|&s| (s, number())).collect(), ONE)
            .expect("number products are valid")
    }

    pub fn zz(i: usize, j: usize) -> Result<Self> {
        Self::new(vec![i, j], vec![pauli_z(), pauli_z()], ONE)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn factors(&self) -> &[Array2<C64>] {
        &self.factors
    }

    pub fn coefficient(&self) -> C64 {
        self.coefficient
    }

    pub fn scaled(mut self, c: C64) -> Self {
        self.coefficient *= c;
        self
    }

    pub fn factor_on(&self, site: usize) -> Option<&Array2<C64>> {
        self.support.iter().position(|&s| s == site).map(|k| &self.factors[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_repeated_sites() {
        assert!(LocalOperator::new(vec![1, 1], vec![pauli_z(), pauli_z()], ONE).is_err());
        assert!(LocalOperator::new(vec![1], vec![], ONE).is_err());
    }

    #[test]
    fn from_factors_merges_repeats() {
        let op = LocalOperator::from_factors(vec![(3, number()), (4, hole()), (3, number())], ONE)
            .unwrap();
        assert_eq!(op.support(), &[3, 4]);
        assert_eq!(op.factor_on(3).unwrap(), &number());
        let killed = LocalOperator::from_factors(vec![(2, number()), (2, hole())], ONE).unwrap();
        assert!(killed.factor_on(2).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn number_is_z_plus_one_over_two() {
        let n = (pauli_z() + identity()).mapv(|z| z * 0.5);
        assert_eq!(n, number());
        assert_eq!(identity() - number(), hole());
    }
}
