use ndarray::{Array2, Zip};

/// Named parameter tensors in declaration order. Gradients and optimizer
/// moments use the same container.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.values
    }

    pub fn get(&self, i: usize) -> &Array2<f64> {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Array2<f64> {
        &mut self.values[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Array2<f64>> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect(),
        }
    }

    /// `self += c · other`, tensor by tensor in declaration order.
    pub fn add_scaled(&mut self, other: &Params, c: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            Zip::from(a).and(b).for_each(|a, &b| *a += c * b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            v.mapv_inplace(|x| x * c);
        }
    }

    /// Two distinct tensors borrowed mutably at once.
    pub(crate) fn pair_mut(&mut self, a: usize, b: usize) -> (&mut Array2<f64>, &mut Array2<f64>) {
        assert_ne!(a, b);
        if a < b {
            let (lo, hi) = self.values.split_at_mut(b);
            (&mut lo[a], &mut hi[0])
        } else {
            let (lo, hi) = self.values.split_at_mut(a);
            (&mut hi[0], &mut lo[b])
        }
    }
}
