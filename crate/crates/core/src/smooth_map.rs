//! Analytic test maps `T: R^d → R^m` with exact Jacobians.
//!
//! A map is a sum of primitive terms: affine maps, coordinate polynomials of
//! total degree at most four, and sinusoids `a_ℓ sin(f_ℓ · x + φ_ℓ)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::density::{Dataset, Domain};
use crate::error::{Error, Result};

pub const MAX_POLYNOMIAL_DEGREE: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Primitive {
    /// `A x + b` with `A` stored as `m` rows of length `d`.
    Linear { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// One list of monomials per output.
    Polynomial { outputs: Vec<Vec<Monomial>> },
    /// Output ℓ is `amplitude[ℓ] · sin(frequency[ℓ] · x + phase[ℓ])`.
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: Vec<Vec<f64>>,
        phase: Vec<f64>,
    },
}

impl Primitive {
    fn validate(&self, d: usize, m: usize) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Primitive::Linear { a, b } => {
                if a.len() != m || b.len() != m || a.iter().any(|row| row.len() != d) {
                    return Err(Error::InvalidMap(format!("linear term must be {m}x{d} with offset of length {m}")));
                }
                if !a.iter().all(|r| finite(r)) || !finite(b) {
                    return Err(Error::InvalidMap("linear term has non-finite entries".into()));
                }
            }
            Primitive::Polynomial { outputs } => {
                if outputs.len() != m {
                    return Err(Error::InvalidMap(format!("polynomial term needs {m} outputs")));
                }
                for mono in outputs.iter().flatten() {
                    if mono.powers.len() != d || !mono.coef.is_finite() {
                        return Err(Error::InvalidMap(format!(
                            "monomials need {d} exponents and a finite coefficient"
                        )));
                    }
                    let degree: u32 = mono.powers.iter().sum();
                    if degree > MAX_POLYNOMIAL_DEGREE {
                        return Err(Error::InvalidMap(format!(
                            "monomial degree {degree} exceeds {MAX_POLYNOMIAL_DEGREE}"
                        )));
                    }
                }
            }
            Primitive::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                if amplitude.len() != m || phase.len() != m || frequency.len() != m {
                    return Err(Error::InvalidMap(format!("sinusoid term needs {m} outputs")));
                }
                if frequency.iter().any(|f| f.len() != d || !finite(f)) || !finite(amplitude) || !finite(phase) {
                    return Err(Error::InvalidMap(format!("sinusoid frequencies must be finite {d}-vectors")));
                }
            }
        }
        Ok(())
    }

    fn add_value(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Primitive::Linear { a, b } => {
                for (l, (row, bl)) in a.iter().zip(b).enumerate() {
                    out[l] += bl + row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
                }
            }
            Primitive::Polynomial { outputs } => {
                for (l, monos) in outputs.iter().enumerate() {
                    for mono in monos {
                        out[l] += mono.coef * monomial(x, &mono.powers);
                    }
                }
            }
            Primitive::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                for l in 0..amplitude.len() {
                    out[l] += amplitude[l] * (dot(&frequency[l], x) + phase[l]).sin();
                }
            }
        }
    }

    /// Adds this term's Jacobian to `jac`, stored row-major `m × d`.
    fn add_jacobian(&self, x: &[f64], jac: &mut [f64]) {
        let d = x.len();
        match self {
            Primitive::Linear { a, .. } => {
                for (l, row) in a.iter().enumerate() {
                    for k in 0..d {
                        jac[l * d + k] += row[k];
                    }
                }
            }
            Primitive::Polynomial { outputs } => {
                let mut powers = Vec::with_capacity(d);
                for (l, monos) in outputs.iter().enumerate() {
                    for mono in monos {
                        for k in 0..d {
                            let p = mono.powers[k];
                            if p == 0 {
                                continue;
                            }
                            powers.clear();
                            powers.extend_from_slice(&mono.powers);
                            powers[k] = p - 1;
                            jac[l * d + k] += mono.coef * p as f64 * monomial(x, &powers);
                        }
                    }
                }
            }
            Primitive::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                for l in 0..amplitude.len() {
                    let c = amplitude[l] * (dot(&frequency[l], x) + phase[l]).cos();
                    for k in 0..d {
                        jac[l * d + k] += c * frequency[l][k];
                    }
                }
            }
        }
    }

    fn scale(&mut self, lambda: f64) {
        match self {
            Primitive::Linear { a, b } => {
                a.iter_mut().flatten().for_each(|v| *v *= lambda);
                b.iter_mut().for_each(|v| *v *= lambda);
            }
            Primitive::Polynomial { outputs } => {
                outputs.iter_mut().flatten().for_each(|mono| mono.coef *= lambda);
            }
            Primitive::Sinusoid { amplitude, .. } => amplitude.iter_mut().for_each(|v| *v *= lambda),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn monomial(x: &[f64], powers: &[u32]) -> f64 {
    x.iter().zip(powers).map(|(x, &p)| x.powi(p as i32)).product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapRepr", into = "MapRepr")]
pub struct SmoothMap {
    input_dim: usize,
    output_dim: usize,
    terms: Vec<Primitive>,
}

#[derive(Serialize, Deserialize)]
struct MapRepr {
    input_dim: usize,
    output_dim: usize,
    terms: Vec<Primitive>,
}

impl TryFrom<MapRepr> for SmoothMap {
    type Error = Error;

    fn try_from(r: MapRepr) -> Result<Self> {
        SmoothMap::new(r.input_dim, r.output_dim, r.terms)
    }
}

impl From<SmoothMap> for MapRepr {
    fn from(m: SmoothMap) -> Self {
        MapRepr {
            input_dim: m.input_dim,
            output_dim: m.output_dim,
            terms: m.terms,
        }
    }
}

impl SmoothMap {
    pub fn new(input_dim: usize, output_dim: usize, terms: Vec<Primitive>) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidMap("input and output dimensions must be positive".into()));
        }
        for t in &terms {
            t.validate(input_dim, output_dim)?;
        }
        Ok(Self {
            input_dim,
            output_dim,
            terms,
        })
    }

    /// `T(x) = A x + b`.
    pub fn linear(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let m = a.len();
        let d = a.first().map_or(0, Vec::len);
        Self::new(d, m, vec![Primitive::Linear { a, b }])
    }

    pub fn identity(d: usize) -> Self {
        let a = (0..d)
            .map(|l| (0..d).map(|k| if k == l { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::linear(a, vec![0.0; d]).expect("identity is a valid map")
    }

    /// The constant map `x ↦ c` on `R^d`.
    pub fn constant(d: usize, c: Vec<f64>) -> Result<Self> {
        let a = vec![vec![0.0; d]; c.len()];
        Self::new(d, c.len(), vec![Primitive::Linear { a, b: c }])
    }

    pub fn sinusoid(amplitude: Vec<f64>, frequency: Vec<Vec<f64>>, phase: Vec<f64>) -> Result<Self> {
        let m = amplitude.len();
        let d = frequency.first().map_or(0, Vec::len);
        Self::new(
            d,
            m,
            vec![Primitive::Sinusoid {
                amplitude,
                frequency,
                phase,
            }],
        )
    }

    pub fn polynomial(d: usize, outputs: Vec<Vec<Monomial>>) -> Result<Self> {
        let m = outputs.len();
        Self::new(d, m, vec![Primitive::Polynomial { outputs }])
    }

    /// Sum of two maps with the same dimensions.
    pub fn plus(mut self, other: SmoothMap) -> Result<Self> {
        if self.input_dim != other.input_dim || self.output_dim != other.output_dim {
            return Err(Error::DimensionMismatch(format!(
                "cannot add a {}→{} map to a {}→{} map",
                other.input_dim, other.output_dim, self.input_dim, self.output_dim
            )));
        }
        self.terms.extend(other.terms);
        Ok(self)
    }

    /// `x ↦ T(x) + c`.
    pub fn translated(&self, c: &[f64]) -> Result<Self> {
        self.clone().plus(Self::constant(self.input_dim, c.to_vec())?)
    }

    /// `x ↦ λ T(x)`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(|t| t.scale(lambda));
        out
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn terms(&self) -> &[Primitive] {
        &self.terms
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.terms {
            t.add_value(x, out);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Jacobian written row-major as `m × d` into `jac`.
    pub fn jacobian_into(&self, x: &[f64], jac: &mut [f64]) {
        jac.fill(0.0);
        for t in &self.terms {
            t.add_jacobian(x, jac);
        }
    }

    /// Jacobian `DT(x)` as an `m × d` matrix.
    pub fn jacobian(&self, x: &[f64]) -> Array2<f64> {
        let mut jac = vec![0.0; self.output_dim * self.input_dim];
        self.jacobian_into(x, &mut jac);
        Array2::from_shape_vec((self.output_dim, self.input_dim), jac).expect("jacobian shape")
    }

    /// `Σ_ℓ |∇T_ℓ(x)|²`.
    pub fn jacobian_sq_norm(&self, x: &[f64]) -> f64 {
        let mut jac = vec![0.0; self.output_dim * self.input_dim];
        self.jacobian_into(x, &mut jac);
        jac.iter().map(|v| v * v).sum()
    }

    /// Largest Frobenius norm of the Jacobian over a closed grid with `per_axis` points per axis.
    pub fn max_jacobian_norm(&self, domain: &Domain, per_axis: usize) -> f64 {
        let d = domain.dim();
        let per_axis = per_axis.max(2);
        let total = per_axis.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut best = 0.0f64;
        for g in 0..total {
            let mut rem = g;
            for k in (0..d).rev() {
                let t = (rem % per_axis) as f64 / (per_axis - 1) as f64;
                rem /= per_axis;
                x[k] = domain.lower()[k] + t * (domain.upper()[k] - domain.lower()[k]);
            }
            best = best.max(self.jacobian_sq_norm(&x));
        }
        best.sqrt()
    }

    /// Rows `T(X_i)` for every sample point.
    pub fn apply(&self, data: &Dataset) -> Result<Array2<f64>> {
        if data.dim() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "map expects {}-dimensional inputs, data has dimension {}",
                self.input_dim,
                data.dim()
            )));
        }
        let mut y = Array2::zeros((data.len(), self.output_dim));
        for (i, mut row) in y.rows_mut().into_iter().enumerate() {
            self.eval_into(data.point(i), row.as_slice_mut().expect("standard layout"));
        }
        Ok(y)
    }
}
