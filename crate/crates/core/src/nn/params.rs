//! Named tensor store for model parameters and gradients.

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayView3, IxDyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::scalar::Scalar;

/// Index of a tensor inside a [`Parameters`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Batch-norm running statistics: saved and loaded, never optimized.
    RunningStat,
}

/// How a tensor is filled at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// He initialization: normal with std `sqrt(2 / fan_in)`.
    HeNormal { fan_in: usize },
}

#[derive(Debug, Clone)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub init: Init,
}

/// Declares the tensors a model owns; materialized into [`Parameters`].
#[derive(Debug, Clone, Default)]
pub struct Layout {
    specs: Vec<TensorSpec>,
}

impl Layout {
    pub fn push(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        kind: ParamKind,
        init: Init,
    ) -> TensorId {
        self.specs.push(TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            kind,
            init,
        });
        TensorId(self.specs.len() - 1)
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    /// Materializes the layout, drawing initial values in declaration
    /// order so results are reproducible for a given RNG state.
    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Parameters<F> {
        let tensors = self
            .specs
            .iter()
            .map(|spec| {
                let mut t = ArrayD::<F>::zeros(IxDyn(&spec.shape));
                match spec.init {
                    Init::Zeros => {}
                    Init::Ones => t.fill(F::one()),
                    Init::HeNormal { fan_in } => {
                        let std = F::from_f64((2.0 / fan_in as f64).sqrt());
                        for v in t.iter_mut() {
                            *v = F::randn(rng) * std;
                        }
                    }
                }
                t
            })
            .collect();
        Parameters {
            specs: self.specs.clone(),
            tensors,
        }
    }
}

/// The trainable weights and running statistics of a model.
#[derive(Debug, Clone)]
pub struct Parameters<F> {
    specs: Vec<TensorSpec>,
    tensors: Vec<ArrayD<F>>,
}

impl<F: Scalar> Parameters<F> {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn spec(&self, id: TensorId) -> &TensorSpec {
        &self.specs[id.0]
    }

    pub fn get(&self, id: TensorId) -> &ArrayD<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: TensorId) -> &mut ArrayD<F> {
        &mut self.tensors[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TensorSpec, &ArrayD<F>)> {
        self.specs.iter().zip(self.tensors.iter())
    }

    pub fn tensor_ids(&self) -> impl Iterator<Item = TensorId> {
        (0..self.tensors.len()).map(TensorId)
    }

    /// Total element count over trainable tensors.
    pub fn num_trainable(&self) -> usize {
        self.iter()
            .filter(|(s, _)| s.kind == ParamKind::Trainable)
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn view1(&self, id: TensorId) -> ArrayView1<'_, F> {
        self.tensors[id.0]
            .view()
            .into_dimensionality()
            .expect("rank-1 tensor")
    }

    pub fn view2(&self, id: TensorId) -> ArrayView2<'_, F> {
        self.tensors[id.0]
            .view()
            .into_dimensionality()
            .expect("rank-2 tensor")
    }

    pub fn view3(&self, id: TensorId) -> ArrayView3<'_, F> {
        self.tensors[id.0]
            .view()
            .into_dimensionality()
            .expect("rank-3 tensor")
    }

    /// Replaces a tensor's contents; shapes must agree.
    pub fn set(&mut self, id: TensorId, value: ArrayD<F>) -> Result<()> {
        if value.shape() != self.tensors[id.0].shape() {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{}` expects {:?}, got {:?}",
                self.specs[id.0].name,
                self.tensors[id.0].shape(),
                value.shape()
            )));
        }
        self.tensors[id.0] = value;
        Ok(())
    }
}

/// Gradient tensors, parallel to a [`Parameters`] store.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    tensors: Vec<ArrayD<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(params: &Parameters<F>) -> Self {
        Self {
            tensors: params
                .tensors
                .iter()
                .map(|t| ArrayD::zeros(t.raw_dim()))
                .collect(),
        }
    }

    pub fn get(&self, id: TensorId) -> &ArrayD<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: TensorId) -> &mut ArrayD<F> {
        &mut self.tensors[id.0]
    }

    /// Element-wise accumulate: `self += other`.
    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    /// Scales every gradient in place.
    pub fn scale(&mut self, factor: F) {
        for t in &mut self.tensors {
            t.mapv_inplace(|v| v * factor);
        }
    }

    /// Accumulates a fixed-dimension gradient into tensor `id`.
    pub fn accumulate<D: ndarray::Dimension>(&mut self, id: TensorId, delta: &ndarray::Array<F, D>) {
        let view = delta.view().into_dyn();
        debug_assert_eq!(self.tensors[id.0].shape(), view.shape());
        self.tensors[id.0].zip_mut_with(&view, |a, &b| *a = *a + b);
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArrayD<F>> {
        self.tensors.iter()
    }
}
