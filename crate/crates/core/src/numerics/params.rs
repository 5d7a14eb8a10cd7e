use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::TensorRef;
use super::NumericsError;

/// Handle to one named tensor inside a [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
}

impl ParamShape {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Vectors are viewed as a single row.
    fn matrix_dims(&self) -> (usize, usize) {
        match self.dims.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (1, self.len()),
        }
    }
}

/// Flat parameter storage with per-tensor shape metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<ParamShape>,
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamVector {
    pub fn new() -> Self {
        Self { values: Vec::new(), layout: Vec::new() }
    }

    pub fn from_parts(values: Vec<f64>, layout: Vec<ParamShape>) -> Result<Self, NumericsError> {
        let mut offset = 0;
        for shape in &layout {
            if shape.offset != offset {
                return Err(NumericsError::Contract(format!("parameter {} has offset {} (expected {offset})", shape.name, shape.offset)));
            }
            offset += shape.len();
        }
        if offset != values.len() {
            return Err(NumericsError::Shape { expected: offset, got: values.len(), what: "parameter vector length" });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("parameter values"));
        }
        Ok(Self { values, layout })
    }

    /// Appends a tensor initialised uniformly in `[-scale, scale]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, dims: &[usize], scale: f64, rng: &mut impl Rng) -> ParamId {
        let id = self.add_constant(name, dims, 0.0);
        if scale > 0.0 {
            for v in self.slice_mut(id) {
                *v = rng.gen_range(-scale..scale);
            }
        }
        id
    }

    pub fn add_constant(&mut self, name: impl Into<String>, dims: &[usize], value: f64) -> ParamId {
        let offset = self.values.len();
        let shape = ParamShape { name: name.into(), dims: dims.to_vec(), offset };
        self.values.extend(std::iter::repeat_n(value, shape.len()));
        self.layout.push(shape);
        ParamId(self.layout.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[ParamShape] {
        &self.layout
    }

    pub fn shape(&self, id: ParamId) -> &ParamShape {
        &self.layout[id.0]
    }

    pub fn slice(&self, id: ParamId) -> &[f64] {
        let s = &self.layout[id.0];
        &self.values[s.offset..s.offset + s.len()]
    }

    pub fn slice_mut(&mut self, id: ParamId) -> &mut [f64] {
        let s = &self.layout[id.0];
        let range = s.offset..s.offset + s.len();
        &mut self.values[range]
    }

    pub fn view(&self, id: ParamId) -> TensorRef<'_> {
        let (rows, cols) = self.layout[id.0].matrix_dims();
        TensorRef { rows, cols, data: self.slice(id) }
    }

    pub(crate) fn matrix_dims(&self, id: ParamId) -> (usize, usize) {
        self.layout[id.0].matrix_dims()
    }

    pub(crate) fn offset(&self, id: ParamId) -> usize {
        self.layout[id.0].offset
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Overwrites values from another vector with an identical layout.
    pub fn copy_from(&mut self, other: &ParamVector) -> Result<(), NumericsError> {
        if self.layout != other.layout {
            return Err(NumericsError::Contract("parameter layouts differ".into()));
        }
        self.values.copy_from_slice(&other.values);
        Ok(())
    }
}
