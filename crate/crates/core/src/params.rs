//! Named, ordered parameter vectors with positivity constraints.

use std::fmt;

use crate::error::{Error, Result};

/// Floor applied to positivity-constrained entries by [`ParamVector::project`].
pub const POSITIVITY_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    names: Vec<String>,
    values: Vec<f64>,
    positive: Vec<bool>,
}

impl ParamVector {
    pub fn new<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        values: Vec<f64>,
        positive: Vec<bool>,
    ) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() != values.len() || names.len() != positive.len() {
            return Err(Error::InvalidParameter(format!(
                "parameter vector lengths differ: {} names, {} values, {} flags",
                names.len(),
                values.len(),
                positive.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidParameter(format!("duplicate parameter name {n}")));
            }
        }
        Ok(Self { names, values, positive })
    }

    /// `prefix1, prefix2, ...` with every entry flagged positive.
    pub fn positive_indexed(prefix: &str, values: Vec<f64>) -> Self {
        let n = values.len();
        Self { names: (1..=n).map(|i| format!("{prefix}{i}")).collect(), values, positive: vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn positive(&self) -> &[bool] {
        &self.positive
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Same names and flags, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::InvalidParameter(format!("expected {} values, got {}", self.len(), values.len())));
        }
        Ok(Self { names: self.names.clone(), values, positive: self.positive.clone() })
    }

    /// Clamps flagged entries at [`POSITIVITY_FLOOR`]; returns how many moved.
    pub fn project(&mut self) -> usize {
        let mut moved = 0;
        for (v, &pos) in self.values.iter_mut().zip(&self.positive) {
            if pos && (v.is_nan() || *v < POSITIVITY_FLOOR) {
                *v = POSITIVITY_FLOOR;
                moved += 1;
            }
        }
        moved
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.4}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_clamps_only_flagged() {
        let mut p = ParamVector::new(["a", "b", "c"], vec![-1.0, -2.0, 0.5], vec![true, false, true]).unwrap();
        assert_eq!(p.project(), 1);
        assert_eq!(p.values(), &[POSITIVITY_FLOOR, -2.0, 0.5]);
        assert_eq!(p.project(), 0);
    }

    #[test]
    fn nan_is_projected() {
        let mut p = ParamVector::positive_indexed("t", vec![f64::NAN]);
        assert_eq!(p.project(), 1);
        assert_eq!(p.values()[0], POSITIVITY_FLOOR);
    }

    #[test]
    fn lookup_and_validation() {
        let p = ParamVector::positive_indexed("zeta", vec![1.0, 2.0]);
        assert_eq!(p.get("zeta2"), Some(2.0));
        assert_eq!(p.get("zeta3"), None);
        assert!(ParamVector::new(["a", "a"], vec![1.0, 2.0], vec![true, true]).is_err());
        assert!(ParamVector::new(["a"], vec![1.0, 2.0], vec![true]).is_err());
        assert!(p.with_values(vec![1.0]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn flagged_entries_positive_after_projection(vals in proptest::collection::vec(-10.0f64..10.0, 1..8)) {
            let n = vals.len();
            let flags: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
            let mut p = ParamVector::new((0..n).map(|i| format!("p{i}")), vals.clone(), flags.clone()).unwrap();
            p.project();
            for i in 0..n {
                if flags[i] {
                    proptest::prop_assert!(p.values()[i] > 0.0);
                } else {
                    proptest::prop_assert_eq!(p.values()[i], vals[i]);
                }
            }
        }
    }
}
