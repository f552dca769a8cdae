use crate::error::{Error, Result};
use crate::tensor::{Bindings, DenseArray, Scalar};

/// Ordered collection of named parameter arrays.
///
/// Gradients use the same container and layout as the parameters they
/// belong to, so updates are plain `axpy` calls.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<(String, DenseArray<T>)>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, value: DenseArray<T>) {
        assert!(self.get(name).is_none(), "duplicate parameter `{name}`");
        self.entries.push((name.to_string(), value));
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray<T>> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray<T>)> {
        self.entries.iter().map(|(n, a)| (n.as_str(), a))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Number of arrays.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars, `p`.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, a)| a.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, a)| (n.clone(), DenseArray::zeros(a.shape())))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((n1, a1), (n2, a2))| n1 == n2 && a1.shape() == a2.shape())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        assert!(self.same_layout(other), "parameter layout mismatch");
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            a.axpy(alpha, b);
        }
    }

    pub fn scale(&mut self, c: T) {
        for (_, a) in &mut self.entries {
            for v in a.data_mut() {
                *v = *v * c;
            }
        }
    }

    pub fn norm(&self) -> T {
        self.entries
            .iter()
            .map(|(_, a)| a.sum_squares())
            .sum::<T>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, a)| a.all_finite())
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.entries
            .iter()
            .flat_map(|(_, a)| a.data().iter().copied())
            .collect()
    }

    /// Same layout as `self`, values taken from `flat`.
    pub fn with_flat(&self, flat: &[T]) -> Result<Self> {
        if flat.len() != self.num_scalars() {
            return Err(Error::InvalidArgument(format!(
                "flat vector has {} entries, layout needs {}",
                flat.len(),
                self.num_scalars()
            )));
        }
        let mut offset = 0;
        let mut out = self.clone();
        for (_, a) in &mut out.entries {
            let n = a.len();
            a.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert!(self.same_layout(other));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|((_, a), (_, b))| a.max_abs_diff(b))
            .fold(T::zero(), T::max)
    }

    /// Bitwise equality of every scalar.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.same_layout(other)
            && self
                .to_flat()
                .iter()
                .zip(other.to_flat())
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, a)| (n.clone(), a.cast()))
                .collect(),
        }
    }
}

impl<T> Bindings<T> for ParamSet<T> {
    fn lookup(&self, name: &str) -> Option<&DenseArray<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.push(
            "w",
            DenseArray::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        );
        p.push("b", DenseArray::vector(vec![0.5, -0.5]).unwrap());
        p
    }

    #[test]
    fn flat_round_trip() {
        let p = sample();
        let flat = p.to_flat();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]);
        assert_eq!(p.with_flat(&flat).unwrap(), p);
        assert!(p.with_flat(&flat[..3]).is_err());
    }

    #[test]
    fn axpy_and_norm() {
        let mut p = sample();
        let q = sample();
        p.axpy(-1.0, &q);
        assert_eq!(p.norm(), 0.0);
        assert_eq!(p.num_scalars(), 6);
    }
}
