//! Parameter layout and storage.
//!
//! Each parameter is initialized from a stream seeded by `(seed, name)`, so
//! two models that declare a parameter under the same name start from the
//! same values no matter which other parameters they declare.

use std::ops::Index;

use autograd::{Graph, Real, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Optimizer group. Backbone parameters train at the lower learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Backbone,
    Head,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-a, a]`.
    Uniform(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: ParamGroup,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered list of parameter declarations.
#[derive(Clone, Debug, Default)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], group: ParamGroup, init: Init) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.specs.push(ParamSpec { name, shape: shape.to_vec(), group, init });
        ParamId(self.specs.len() - 1)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn numel(&self) -> usize {
        self.specs.iter().map(ParamSpec::numel).sum()
    }
}

fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Initial values of one parameter, drawn in double precision.
pub fn init_values(spec: &ParamSpec, seed: u64) -> Vec<f64> {
    let n = spec.numel();
    match spec.init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::Uniform(a) => {
            let mut rng = stream(seed, &spec.name);
            (0..n).map(|_| rng.gen_range(-a..=a)).collect()
        }
    }
}

/// Parameter values matching a [`ParamLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    specs: Vec<ParamSpec>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> Params<T> {
    pub fn init(layout: &ParamLayout, seed: u64) -> Self {
        let values = layout
            .specs
            .iter()
            .map(|s| Tensor::new(&s.shape, init_values(s, seed).into_iter().map(T::c).collect()))
            .collect();
        Params { specs: layout.specs.clone(), values }
    }

    pub fn from_values(layout: &ParamLayout, values: Vec<Tensor<T>>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Checkpoint(format!("{} tensors for {} parameters", values.len(), layout.len())));
        }
        for (s, v) in layout.specs.iter().zip(&values) {
            if s.shape != v.shape() {
                return Err(Error::Checkpoint(format!("{}: shape {:?} vs {:?}", s.name, v.shape(), s.shape)));
            }
        }
        Ok(Params { specs: layout.specs.clone(), values })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.specs.iter().position(|s| s.name == name).map(|i| &self.values[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.specs.iter().position(|s| s.name == name).map(move |i| &mut self.values[i])
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params { specs: self.specs.clone(), values: self.values.iter().map(|t| t.cast()).collect() }
    }

    /// Places every parameter on the tape, as a gradient leaf when
    /// `trainable`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        Bound(vars)
    }

    /// Copies every parameter whose name and shape match one in `other`.
    /// Returns the names that were left at their current values.
    pub fn load_matching(&mut self, other: &Params<T>) -> Vec<String> {
        let mut missing = Vec::new();
        for (s, v) in self.specs.iter().zip(self.values.iter_mut()) {
            match other.by_name(&s.name) {
                Some(o) if o.shape() == v.shape() => *v = o.clone(),
                _ => missing.push(s.name.clone()),
            }
        }
        missing
    }
}

/// Tape handles of a bound [`Params`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_depends_only_on_seed_and_name() {
        let mut a = ParamLayout::new();
        a.add("x", &[3, 2], ParamGroup::Head, Init::Uniform(0.5));
        a.add("y", &[4], ParamGroup::Head, Init::Uniform(0.5));
        let mut b = ParamLayout::new();
        b.add("extra", &[5], ParamGroup::Head, Init::Uniform(0.5));
        b.add("y", &[4], ParamGroup::Head, Init::Uniform(0.5));
        let pa = Params::<f32>::init(&a, 3);
        let pb = Params::<f32>::init(&b, 3);
        assert_eq!(pa.by_name("y"), pb.by_name("y"));
        assert_ne!(Params::<f32>::init(&a, 4).by_name("y"), pa.by_name("y"));
        assert!(pa.by_name("x").unwrap().data().iter().all(|v| v.abs() <= 0.5));
    }

    #[test]
    fn load_matching_reports_missing() {
        let mut a = ParamLayout::new();
        a.add("x", &[2], ParamGroup::Head, Init::Zeros);
        a.add("ctx", &[2], ParamGroup::Head, Init::Zeros);
        let mut b = ParamLayout::new();
        b.add("x", &[2], ParamGroup::Head, Init::Ones);
        let mut pa = Params::<f64>::init(&a, 0);
        let missing = pa.load_matching(&Params::init(&b, 0));
        assert_eq!(missing, vec!["ctx".to_string()]);
        assert_eq!(pa.by_name("x").unwrap().data(), &[1.0, 1.0]);
    }
}
