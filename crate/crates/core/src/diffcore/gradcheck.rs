//! Central-difference verification of tape gradients.

use super::tape::{Bound, Tape, Var};
use super::tensor::ParamSet;
use crate::error::{Error, Result};

/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`,
/// so coordinates with vanishing gradient are held to an absolute bound.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub eps: f64,
    /// Check at most this many evenly spaced coordinates per parameter.
    pub max_coords: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_coords: None,
        }
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn eval<F>(params: &ParamSet, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let out = f(&mut tape, &bound)?;
    if tape.shape(out) != [1, 1] {
        return Err(Error::NonScalarLoss(tape.shape(out)));
    }
    Ok(tape.scalar(out))
}

/// Gradient of `f` by one backward pass.
pub fn analytic_grad<F>(params: &ParamSet, f: &F) -> Result<ParamSet>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let out = f(&mut tape, &bound)?;
    tape.backward(out)?;
    tape.grads(&bound, params)
}

fn coords(len: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m < len => (0..m).map(|i| i * len / m).collect(),
        _ => (0..len).collect(),
    }
}

impl GradCheck {
    /// Compares `analytic` against `(f(θ+eps) − f(θ−eps)) / 2eps` coordinate-wise.
    pub fn compare<F>(&self, params: &ParamSet, analytic: &ParamSet, f: &F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &Bound) -> Result<Var>,
    {
        let mut report = GradCheckReport {
            max_rel_err: 0.0,
            worst: None,
            checked: 0,
        };
        let mut probe = params.clone();
        let names: Vec<String> = params
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(n, _)| n.to_string())
            .collect();
        for name in names {
            let len = params.require(&name)?.len();
            let a = analytic.require(&name)?;
            for i in coords(len, self.max_coords) {
                let orig = params.require(&name)?.data()[i];
                probe.get_mut(&name).expect("cloned").data_mut()[i] = orig + self.eps;
                let up = eval(&probe, f)?;
                probe.get_mut(&name).expect("cloned").data_mut()[i] = orig - self.eps;
                let down = eval(&probe, f)?;
                probe.get_mut(&name).expect("cloned").data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * self.eps);
                let err = rel_err(a.data()[i], numeric);
                report.checked += 1;
                if err > report.max_rel_err || !err.is_finite() {
                    report.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
                    report.worst = Some((name.clone(), i));
                }
            }
        }
        Ok(report)
    }

    pub fn run<F>(&self, params: &ParamSet, f: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &Bound) -> Result<Var>,
    {
        let analytic = analytic_grad(params, &f)?;
        self.compare(params, &analytic, &f)
    }
}

/// Max relative error between backward-pass and central-difference gradients.
pub fn grad_check<F>(params: &ParamSet, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    Ok(GradCheck {
        eps,
        max_coords: None,
    }
    .run(params, f)?
    .max_rel_err)
}
