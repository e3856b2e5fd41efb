use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major binary32 array.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = checked_numel(&dims)?;
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![0.0; n],
        }
    }

    pub fn full(dims: Vec<usize>, value: f32) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![value; n],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data, new dims with equal element count.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Tensor::new(dims, self.data)
    }

    /// Copy of the `index`-th slice along the leading axis.
    pub fn slice_first(&self, index: usize) -> Result<Tensor> {
        let (&n, rest) = self
            .dims
            .split_first()
            .ok_or_else(|| Error::Shape("cannot slice a rank-0 tensor".into()))?;
        if index >= n {
            return Err(Error::Shape(format!(
                "index {index} out of range for leading extent {n}"
            )));
        }
        let stride: usize = rest.iter().product();
        Ok(Tensor {
            dims: rest.to_vec(),
            data: self.data[index * stride..(index + 1) * stride].to_vec(),
        })
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or(Error::Empty("tensor stack"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.dims != first.dims {
                return Err(Error::Shape(format!("cannot stack {:?} with {:?}", t.dims, first.dims)));
            }
            data.extend_from_slice(&t.data);
        }
        let mut dims = vec![items.len()];
        dims.extend_from_slice(&first.dims);
        Ok(Tensor { dims, data })
    }

    pub fn ensure_dims(&self, want: &[usize], what: &str) -> Result<()> {
        if self.dims != want {
            return Err(Error::Shape(format!("{what}: expected {want:?}, got {:?}", self.dims)));
        }
        Ok(())
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }
}

pub(crate) fn checked_numel(dims: &[usize]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow")))
    })
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("dims", &self.dims)
            .field("data", &preview)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(Tensor::new(vec![2, 3], vec![0.0; 5]), Err(Error::Shape(_))));
        assert!(Tensor::new(vec![usize::MAX, 2], vec![]).is_err());
    }

    #[test]
    fn slice_and_stack() {
        let t = Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let row = t.slice_first(1).unwrap();
        assert_eq!(row.dims(), &[2]);
        assert_eq!(row.data(), &[3.0, 4.0]);
        assert!(t.slice_first(3).is_err());
        let items: Vec<Tensor> = (0..3).map(|i| t.slice_first(i).unwrap()).collect();
        assert_eq!(Tensor::stack(&items).unwrap(), t);
        assert!(Tensor::stack(&[]).is_err());
    }

    #[test]
    fn argmax_prefers_first_of_ties() {
        let t = Tensor::new(vec![4], vec![0.1, 0.7, 0.7, 0.2]).unwrap();
        assert_eq!(t.argmax(), 1);
    }
}
