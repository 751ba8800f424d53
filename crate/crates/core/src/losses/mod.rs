//! Scale-invariant training objectives.
//!
//! Every term compares an estimate against a reference after rescaling the
//! reference by the least-squares scalar `alpha`, computed per batch item
//! over all channels jointly and held constant during differentiation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bilateral::{BilateralLayer, BilateralParams, SolverError};
use crate::image::ImageF;
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Below this `sum(reference^2)` the scale is undefined and `alpha = 0`.
pub const DEGENERATE_REFERENCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("reference is numerically zero (sum of squares {0:e})")]
    DegenerateReference(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// `sum(e r) / sum(r r)`.
pub fn si_alpha(estimate: &[f64], reference: &[f64]) -> Result<f64, LossError> {
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if rr < DEGENERATE_REFERENCE {
        return Err(LossError::DegenerateReference(rr));
    }
    let er: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    Ok(er / rr)
}

fn alpha_or_zero(estimate: &[f64], reference: &[f64]) -> f64 {
    si_alpha(estimate, reference).unwrap_or(0.0)
}

/// `(1/N) |e - alpha r|^2` on plain slices.
pub fn si_mse_value(estimate: &[f64], reference: &[f64]) -> f64 {
    let a = alpha_or_zero(estimate, reference);
    let sq: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - a * r).powi(2))
        .sum();
    sq / estimate.len() as f64
}

/// Per-item alphas of two same-shaped batches.
pub fn item_alphas(estimate: &Tensor, reference: &Tensor) -> Vec<f64> {
    (0..estimate.shape().n)
        .map(|n| alpha_or_zero(estimate.batch_item(n), reference.batch_item(n)))
        .collect()
}

/// Scale-invariant MSE recorded on the tape, averaged over batch items.
pub fn si_mse(tape: &mut Tape, estimate: Var, reference: Var) -> Result<Var, LossError> {
    tape.shape(estimate)
        .check_same(&tape.shape(reference), "si_mse")?;
    let alphas = item_alphas(tape.value(estimate), tape.value(reference));
    Ok(tape.residual_mse(estimate, reference, alphas)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub omega: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { omega: 0.5 }
    }
}

/// Scalar values of every loss component that was computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub si_r: Option<f64>,
    pub si_s: Option<f64>,
    pub si_recon: Option<f64>,
    pub si_pair: Option<f64>,
    pub si_swap12: Option<f64>,
    pub si_swap21: Option<f64>,
    pub e_syn: Option<f64>,
    pub e_real: Option<f64>,
    pub total: f64,
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).data()[0]
}

/// `E_si(R, R_gt) + E_si(S, S_gt) + E_si(R S, I)`.
pub fn synthetic_loss(
    tape: &mut Tape,
    r: Var,
    s: Var,
    r_gt: Var,
    s_gt: Var,
    input: Var,
) -> Result<(Var, LossReport), LossError> {
    let lr = si_mse(tape, r, r_gt)?;
    let ls = si_mse(tape, s, s_gt)?;
    let recon = tape.mul_broadcast_channel(r, s)?;
    let li = si_mse(tape, recon, input)?;
    let partial = tape.add(lr, ls)?;
    let total = tape.add(partial, li)?;
    let value = scalar(tape, total);
    let report = LossReport {
        si_r: Some(scalar(tape, lr)),
        si_s: Some(scalar(tape, ls)),
        si_recon: Some(scalar(tape, li)),
        e_syn: Some(value),
        total: value,
        ..LossReport::default()
    };
    Ok((total, report))
}

/// Network outputs and inputs for a batch of aligned image pairs.
#[derive(Debug, Clone, Copy)]
pub struct PairVars {
    pub r1: Var,
    pub s1: Var,
    pub r2: Var,
    pub s2: Var,
    pub i1: Var,
    pub i2: Var,
}

/// Solver layers for the first and second image of each pair.
#[derive(Clone)]
pub struct PairFilter {
    pub first: Arc<BilateralLayer>,
    pub second: Arc<BilateralLayer>,
}

impl PairFilter {
    pub fn new(
        guides1: &[ImageF],
        guides2: &[ImageF],
        params: &BilateralParams,
    ) -> Result<Self, SolverError> {
        Ok(PairFilter {
            first: Arc::new(BilateralLayer::new(guides1, params)?),
            second: Arc::new(BilateralLayer::new(guides2, params)?),
        })
    }
}

/// `E_si(R1*, R2*) + E_si(R1* S2, I2) + E_si(R2* S1, I1)`, where `Ri*` is
/// the filtered reflectance when `filter` is given and the raw one otherwise.
pub fn real_pair_loss(
    tape: &mut Tape,
    v: PairVars,
    filter: Option<&PairFilter>,
) -> Result<(Var, LossReport), LossError> {
    let (r1, r2) = match filter {
        Some(f) => (f.first.record(tape, v.r1)?, f.second.record(tape, v.r2)?),
        None => (v.r1, v.r2),
    };
    let pair = si_mse(tape, r1, r2)?;
    let p12 = tape.mul_broadcast_channel(r1, v.s2)?;
    let swap12 = si_mse(tape, p12, v.i2)?;
    let p21 = tape.mul_broadcast_channel(r2, v.s1)?;
    let swap21 = si_mse(tape, p21, v.i1)?;
    let partial = tape.add(pair, swap12)?;
    let total = tape.add(partial, swap21)?;
    let value = scalar(tape, total);
    let report = LossReport {
        si_pair: Some(scalar(tape, pair)),
        si_swap12: Some(scalar(tape, swap12)),
        si_swap21: Some(scalar(tape, swap21)),
        e_real: Some(value),
        total: value,
        ..LossReport::default()
    };
    Ok((total, report))
}

/// Value-level combination `e_syn + omega e_real`.
pub fn combine_reports(syn: &LossReport, real: Option<&LossReport>, w: LossWeights) -> LossReport {
    let e_syn = syn.e_syn.unwrap_or(syn.total);
    let mut out = LossReport {
        e_syn: Some(e_syn),
        total: e_syn,
        ..syn.clone()
    };
    if let Some(real) = real {
        let e_real = real.e_real.unwrap_or(real.total);
        out.si_pair = real.si_pair;
        out.si_swap12 = real.si_swap12;
        out.si_swap21 = real.si_swap21;
        out.e_real = Some(e_real);
        out.total = e_syn + w.omega * e_real;
    }
    out
}

/// Records `e_syn + omega e_real`, or `e_syn` alone without a real branch.
pub fn total_loss(
    tape: &mut Tape,
    syn: (Var, &LossReport),
    real: Option<(Var, &LossReport)>,
    w: LossWeights,
) -> Result<(Var, LossReport), LossError> {
    let report = combine_reports(syn.1, real.map(|r| r.1), w);
    let var = match real {
        Some((rv, _)) => {
            let weighted = tape.scale(rv, w.omega)?;
            tape.add(syn.0, weighted)?
        }
        None => syn.0,
    };
    Ok((var, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn t(values: &[f64]) -> Tensor {
        Tensor::new(Shape::new(1, 1, 1, values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn alpha_closed_form() {
        assert_eq!(si_alpha(&[1.0, 2.0], &[1.0, 1.0]).unwrap(), 1.5);
        assert_eq!(si_alpha(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(
            si_alpha(&[1.0], &[0.0]),
            Err(LossError::DegenerateReference(_))
        ));
    }

    #[test]
    fn hand_case_is_quarter() {
        let mut tape = Tape::new();
        let e = tape.constant(t(&[1.0, 2.0]));
        let r = tape.constant(t(&[1.0, 1.0]));
        let l = si_mse(&mut tape, e, r).unwrap();
        assert!((tape.value(l).data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_reference_falls_back() {
        assert!((si_mse_value(&[1.0, 3.0], &[0.0, 0.0]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn omega_arithmetic() {
        let syn = LossReport {
            e_syn: Some(1.0),
            total: 1.0,
            ..Default::default()
        };
        let real = LossReport {
            e_real: Some(2.0),
            total: 2.0,
            ..Default::default()
        };
        assert_eq!(
            combine_reports(&syn, Some(&real), LossWeights::default()).total,
            2.0
        );
        assert_eq!(
            combine_reports(&syn, None, LossWeights::default()).total,
            1.0
        );
        assert_eq!(
            combine_reports(&syn, Some(&real), LossWeights { omega: 0.0 }).total,
            1.0
        );
    }
}
