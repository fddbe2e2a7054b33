use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;

use super::graph::{Graph, Var};
use super::NeuralError;

/// Named parameter matrices, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams {
    entries: IndexMap<String, Array2<f64>>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) -> Result<(), NeuralError> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(NeuralError::DuplicateParam(name));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFiniteGrad { name });
        }
        self.entries.insert(name, value.as_standard_layout().into_owned());
        Ok(())
    }

    /// Inserts a `rows x cols` matrix drawn uniformly from `[-scale, scale]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<(), NeuralError> {
        let value = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..=scale));
        self.insert(name, value)
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars.
    pub fn size(&self) -> usize {
        self.entries.values().map(|v| v.len()).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Array2::zeros(v.dim())))
                .collect(),
        }
    }

    /// Records every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), g.leaf(v.clone())))
                .collect(),
        }
    }
}

/// Parameters recorded in a particular [`Graph`].
#[derive(Debug, Clone, Default)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var, NeuralError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NeuralError::UnknownParam(name.to_string()))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().copied().collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// Gradients of scalar `loss` for every bound parameter.
    pub fn grads(&self, g: &mut Graph, loss: Var) -> Result<LayerGrads, NeuralError> {
        let vars = self.vars();
        let gvars = g.grad(loss, &vars);
        let mut entries = IndexMap::with_capacity(vars.len());
        for (name, gv) in self.vars.keys().zip(gvars) {
            let value = g.value(gv).clone();
            if value.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFiniteGrad { name: name.clone() });
            }
            entries.insert(name.clone(), value);
        }
        Ok(LayerGrads { entries })
    }
}

/// Gradient matrices keyed like the [`ModelParams`] they belong to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerGrads {
    entries: IndexMap<String, Array2<f64>>,
}

impl LayerGrads {
    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Euclidean norm over all entries.
    pub fn global_norm(&self) -> f64 {
        self.entries.values().flat_map(|v| v.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Evaluates `loss_fn` on a fresh graph and returns its value together with
/// the gradient for every entry of `params`.
pub fn grad<F>(params: &ModelParams, loss_fn: F) -> Result<(f64, LayerGrads), NeuralError>
where
    F: FnOnce(&mut Graph, &BoundParams) -> Result<Var, NeuralError>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let loss = loss_fn(&mut g, &bound)?;
    g.check()?;
    let value = g.scalar(loss);
    let grads = bound.grads(&mut g, loss)?;
    g.check()?;
    Ok((value, grads))
}
