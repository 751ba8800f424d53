use super::{solve, BilateralParams, SolverError};
use crate::image::ImageF;
use crate::metrics::{whdr, JudgementSet};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: BilateralParams,
    pub best_index: usize,
    /// Mean WHDR per candidate, in candidate order.
    pub table: Vec<f64>,
}

/// Picks the candidate whose filtered reflectances score the lowest mean
/// WHDR. Ties go to the earliest candidate.
pub fn solver_param_search(
    candidates: &[BilateralParams],
    reflectances: &[ImageF],
    guides: &[ImageF],
    judgements: &[JudgementSet],
    delta: f64,
) -> Result<SearchOutcome, SolverError> {
    if candidates.is_empty() || reflectances.is_empty() {
        return Err(SolverError::Contract(
            "parameter search needs candidates and scenes".into(),
        ));
    }
    if reflectances.len() != guides.len() || reflectances.len() != judgements.len() {
        return Err(SolverError::Contract(format!(
            "parameter search got {} reflectances, {} guides, {} judgement sets",
            reflectances.len(),
            guides.len(),
            judgements.len()
        )));
    }
    let mut table = Vec::with_capacity(candidates.len());
    for params in candidates {
        let mut sum = 0.0;
        for ((r, g), j) in reflectances.iter().zip(guides).zip(judgements) {
            let filtered = solve(g, r, params)?;
            sum += whdr(&filtered, j, delta).map_err(|e| SolverError::Contract(e.to_string()))?;
        }
        table.push(sum / reflectances.len() as f64);
    }
    let mut best_index = 0;
    for (i, v) in table.iter().enumerate() {
        if *v < table[best_index] {
            best_index = i;
        }
    }
    Ok(SearchOutcome {
        best: candidates[best_index].clone(),
        best_index,
        table,
    })
}
