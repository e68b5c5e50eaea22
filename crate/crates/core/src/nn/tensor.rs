use super::{NnError, Real};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![F::zero(); len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || expected != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} does not match {} elements",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the leading (batch) axis.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn item(&self, n: usize) -> &[F] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self, NnError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NnError::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&x| G::from_f64_lossy(x.to_f64_lossy()))
                .collect(),
        }
    }

    /// Stacks equally-shaped items along a new leading axis.
    pub fn stack(items: &[&[F]], item_shape: &[usize]) -> Result<Self, NnError> {
        let len: usize = item_shape.iter().product();
        let mut data = Vec::with_capacity(items.len() * len);
        for item in items {
            if item.len() != len {
                return Err(NnError::Shape(format!(
                    "item of {} elements does not match {item_shape:?}",
                    item.len()
                )));
            }
            data.extend_from_slice(item);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(item_shape);
        Self::from_vec(&shape, data)
    }
}
