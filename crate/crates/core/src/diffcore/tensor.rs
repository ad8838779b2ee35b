use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A dense row-major matrix with an optional gradient buffer.
///
/// Vectors are stored as `1 x k` rows so that every primitive works on
/// plain matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("tensor", [rows, cols], [data.len(), 1]));
        }
        Ok(Self {
            shape: [rows, cols],
            data,
            grad: None,
            requires_grad: true,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            shape: [rows, cols],
            data: vec![value; rows * cols],
            grad: None,
            requires_grad: true,
        }
    }

    pub fn row(data: Vec<f64>) -> Self {
        let cols = data.len();
        Self {
            shape: [1, cols],
            data,
            grad: None,
            requires_grad: true,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::row(vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Uniform in `±sqrt(1 / fan_in)`, where `fan_in` is the row count.
    pub fn uniform_init<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = (1.0 / rows.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self {
            shape: [rows, cols],
            data,
            grad: None,
            requires_grad: true,
        }
    }

    /// [`Tensor::uniform_init`] from a stream keyed by `(seed, name)`, so a
    /// parameter's initial value does not depend on which others exist.
    pub fn seeded_init(rows: usize, cols: usize, seed: u64, name: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(name.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        Self::uniform_init(rows, cols, &mut ChaCha8Rng::from_seed(digest))
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.data.len(), "gradient length");
        let buf = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (b, x) in buf.iter_mut().zip(g) {
            *b += x;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn take_grad(&mut self) -> Option<Vec<f64>> {
        self.grad.take()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Named parameters in lexicographic order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        self.params.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.params.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let params = self
            .params
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(t.rows(), t.cols())))
            .collect();
        Self { params }
    }

    /// Parameters whose name starts with any of `prefixes`.
    pub fn subset(&self, prefixes: &[&str]) -> Self {
        let params = self
            .params
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(k, t)| (k.clone(), t.clone()))
            .collect();
        Self { params }
    }

    /// Replaces the values of every parameter present in `other`.
    pub fn overlay(&mut self, other: &ParamSet) -> Result<()> {
        for (name, t) in &other.params {
            let dst = self
                .params
                .get_mut(name)
                .ok_or_else(|| Error::UnknownParam(name.clone()))?;
            if dst.shape() != t.shape() {
                return Err(Error::shape("overlay", dst.shape(), t.shape()));
            }
            dst.data.copy_from_slice(&t.data);
        }
        Ok(())
    }

    fn check_congruent(&self, other: &ParamSet) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Incongruent(format!(
                "{} vs {} entries",
                self.params.len(),
                other.params.len()
            )));
        }
        for ((ka, ta), (kb, tb)) in self.params.iter().zip(&other.params) {
            if ka != kb {
                return Err(Error::Incongruent(format!("`{ka}` vs `{kb}`")));
            }
            if ta.shape() != tb.shape() {
                return Err(Error::shape("param arithmetic", ta.shape(), tb.shape()));
            }
        }
        Ok(())
    }

    /// Element-wise `f(self, other)` over two congruent sets.
    pub fn zip_map(&self, other: &ParamSet, f: impl Fn(f64, f64) -> f64) -> Result<ParamSet> {
        self.check_congruent(other)?;
        let params = self
            .params
            .iter()
            .zip(other.params.values())
            .map(|((k, a), b)| {
                let mut t = a.clone();
                t.grad = None;
                for (x, y) in t.data.iter_mut().zip(&b.data) {
                    *x = f(*x, *y);
                }
                (k.clone(), t)
            })
            .collect();
        Ok(ParamSet { params })
    }

    /// `self + alpha * other`, leaving both inputs untouched.
    pub fn scaled_add(&self, other: &ParamSet, alpha: f64) -> Result<ParamSet> {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    pub fn add_assign(&mut self, other: &ParamSet) -> Result<()> {
        self.check_congruent(other)?;
        for (a, b) in self.params.values_mut().zip(other.params.values()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.params.values_mut() {
            for x in &mut t.data {
                *x *= alpha;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.params
            .values()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(Tensor::is_finite)
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            t.zero_grad();
        }
    }

    /// Moves accumulated gradients out into a congruent set (zeros where absent).
    pub fn take_grads(&mut self) -> ParamSet {
        let params = self
            .params
            .iter_mut()
            .map(|(k, t)| {
                let data = t.take_grad().unwrap_or_else(|| vec![0.0; t.len()]);
                let g = Tensor {
                    shape: t.shape,
                    data,
                    grad: None,
                    requires_grad: false,
                };
                (k.clone(), g)
            })
            .collect();
        ParamSet { params }
    }

    /// Hex SHA-256 over names, shapes and the exact bit patterns of all values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, t) in &self.params {
            h.update(k.as_bytes());
            h.update([0u8]);
            h.update((t.rows() as u64).to_le_bytes());
            h.update((t.cols() as u64).to_le_bytes());
            for x in &t.data {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex_string(&h.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(a: f64, b: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("x.a", Tensor::scalar(a)).unwrap();
        p.insert("x.b", Tensor::row(vec![b, b])).unwrap();
        p
    }

    #[test]
    fn iteration_is_lexicographic() {
        let mut p = ParamSet::new();
        for name in ["zeta", "alpha", "mid.b", "mid.a"] {
            p.insert(name, Tensor::scalar(0.0)).unwrap();
        }
        let names: Vec<_> = p.names().collect();
        assert_eq!(names, ["alpha", "mid.a", "mid.b", "zeta"]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = two(1.0, 2.0);
        assert!(matches!(
            p.insert("x.a", Tensor::scalar(3.0)),
            Err(Error::DuplicateParam(_))
        ));
    }

    #[test]
    fn scaled_add_is_pure() {
        let a = two(1.0, 2.0);
        let b = two(10.0, 20.0);
        let c = a.scaled_add(&b, 0.5).unwrap();
        assert_eq!(a, two(1.0, 2.0));
        assert_eq!(c.get("x.a").unwrap().data(), &[6.0]);
        assert_eq!(c.get("x.b").unwrap().data(), &[12.0, 12.0]);
    }

    #[test]
    fn incongruent_sets_error() {
        let a = two(1.0, 2.0);
        let mut b = ParamSet::new();
        b.insert("x.a", Tensor::scalar(1.0)).unwrap();
        b.insert("x.c", Tensor::row(vec![1.0, 1.0])).unwrap();
        assert!(a.scaled_add(&b, 1.0).is_err());
    }

    #[test]
    fn grads_accumulate_and_take() {
        let mut p = two(0.0, 0.0);
        p.get_mut("x.b").unwrap().accumulate_grad(&[1.0, 2.0]);
        p.get_mut("x.b").unwrap().accumulate_grad(&[1.0, 2.0]);
        let g = p.take_grads();
        assert_eq!(g.get("x.a").unwrap().data(), &[0.0]);
        assert_eq!(g.get("x.b").unwrap().data(), &[2.0, 4.0]);
        assert!(p.get("x.b").unwrap().grad().is_none());
    }

    #[test]
    fn digest_tracks_bits() {
        let a = two(1.0, 2.0);
        assert_eq!(a.digest(), two(1.0, 2.0).digest());
        assert_ne!(a.digest(), two(1.0, 2.0 + 1e-15).digest());
    }
}
