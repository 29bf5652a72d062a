use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, CLOSURE_TOL, PSD_TOL};

/// Labeled positive operators that sum to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmSet<L> {
    elements: Vec<(L, ComplexMatrix)>,
}

impl<L: Clone + PartialEq> PovmSet<L> {
    /// Validates Hermiticity, positivity of every element and closure.
    pub fn new(elements: Vec<(L, ComplexMatrix)>) -> Result<Self> {
        let set = Self::closed(elements)?;
        for (_, e) in &set.elements {
            linalg::ensure_psd(e)?;
        }
        Ok(set)
    }

    /// Validates shapes and closure only; positivity is the caller's
    /// responsibility.
    pub(crate) fn closed(elements: Vec<(L, ComplexMatrix)>) -> Result<Self> {
        let first = elements.first().ok_or_else(|| Error::invalid("POVM needs at least one element"))?;
        let n = linalg::ensure_square(&first.1)?;
        for (_, e) in &elements {
            let m = linalg::ensure_square(e)?;
            if m != n {
                return Err(Error::DimensionMismatch { expected: n, found: m });
            }
        }
        let set = Self { elements };
        let deviation = set.closure_deviation();
        if deviation > CLOSURE_TOL || !deviation.is_finite() {
            return Err(Error::ClosureViolated { deviation, tol: CLOSURE_TOL });
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.elements[0].1.nrows()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[(L, ComplexMatrix)] {
        &self.elements
    }

    pub fn labels(&self) -> impl Iterator<Item = &L> {
        self.elements.iter().map(|(l, _)| l)
    }

    pub fn element(&self, label: &L) -> Option<&ComplexMatrix> {
        self.elements.iter().find(|(l, _)| l == label).map(|(_, e)| e)
    }

    /// `max |Σ E_m - I|`.
    pub fn closure_deviation(&self) -> f64 {
        let n = self.dim();
        let mut sum = -linalg::identity(n);
        for (_, e) in &self.elements {
            sum += e;
        }
        linalg::max_abs(&sum)
    }

    /// Smallest eigenvalue over all elements.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut min = f64::INFINITY;
        for (_, e) in &self.elements {
            min = min.min(linalg::herm_eigenvalues(e)?[0]);
        }
        Ok(min)
    }

    pub fn is_positive(&self) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -PSD_TOL)
    }
}
