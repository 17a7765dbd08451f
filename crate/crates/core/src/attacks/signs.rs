//! Prescribed-magnitude attacks: choose the sign of each offset `a_j - y_j`
//! so the offset direction is orthogonal to `y`.

use serde::{Deserialize, Serialize};

use super::{dot, norm, AttackError, AttackFamily, AttackVector, GapVector};

/// Largest support searched exhaustively.
pub const MAX_SIGN_DIM: usize = 24;

const EQUAL_TOL: f64 = 1e-12;
const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityProfile {
    /// `d_j = 1 - ||y||^2 / (a_j - y_j)^2` on the included indices.
    pub d: Vec<f64>,
    /// Indices (into the input vectors) that carry a `d_j`.
    pub included: Vec<usize>,
    /// Indices where `a_j = y_j`, left out of the system.
    pub excluded: Vec<usize>,
    /// `sum 1 / (1 - d_j)`.
    pub sum_check: f64,
    pub feasible: bool,
}

pub fn feasibility_profile(a_desired: &[f64], y: &[f64]) -> Result<FeasibilityProfile, AttackError> {
    if a_desired.len() != y.len() {
        return Err(AttackError::Dimension { expected: y.len(), found: a_desired.len() });
    }
    let yy = dot(y, y);
    if yy == 0.0 {
        return Err(AttackError::NoGap);
    }
    let mut profile = FeasibilityProfile { d: Vec::new(), included: Vec::new(), excluded: Vec::new(), sum_check: 0.0, feasible: false };
    for (j, (&a, &yj)) in a_desired.iter().zip(y).enumerate() {
        let off = a - yj;
        if off.abs() <= EQUAL_TOL {
            profile.excluded.push(j);
        } else {
            profile.d.push(1.0 - yy / (off * off));
            profile.included.push(j);
        }
    }
    profile.sum_check = profile.d.iter().map(|d| 1.0 / (1.0 - d)).sum();
    profile.feasible = profile.d.iter().all(|&d| d < 1.0) && (profile.sum_check - 1.0).abs() <= SUM_TOL;
    Ok(profile)
}

/// Nonnegative null vector of the matrix with ones off the diagonal and `d`
/// on it, normalized to unit sum: `x_j = 1 / (1 - d_j)`. Infeasible unless
/// every `d_j < 1` and the `x_j` sum to one.
pub fn lemma4_solve(d: &[f64]) -> Option<Vec<f64>> {
    if d.is_empty() || d.iter().any(|&v| v.is_nan() || v >= 1.0) {
        return None;
    }
    let x: Vec<f64> = d.iter().map(|v| 1.0 / (1.0 - v)).collect();
    let total: f64 = x.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return None;
    }
    let certified = (0..d.len()).all(|i| {
        let row: f64 = x.iter().enumerate().map(|(j, &xj)| if i == j { d[i] * xj } else { xj }).sum();
        row.abs() <= SUM_TOL
    });
    certified.then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSelection {
    pub attack: AttackVector,
    /// +1 or -1 per supported entry, applied to `|a_j - y_j|`.
    pub signs: Vec<i8>,
    /// `|c^T y|` for the chosen pattern, with `c = s * |a - y| / ||y||`.
    pub orthogonality: f64,
}

/// Exhaustive search over sign patterns of the offsets `|a_j - y_j|` for
/// the one most nearly orthogonal to `y`. Patterns are enumerated as flips
/// relative to the desired signs, trailing entries first, so the desired
/// attack itself wins ties and leading entries keep their sign when possible.
pub fn sign_selection(a_desired: &[f64], y: &GapVector, tol: f64) -> Result<SignSelection, AttackError> {
    let ys = y.restricted();
    let n = ys.len();
    if a_desired.len() != n {
        return Err(AttackError::Dimension { expected: n, found: a_desired.len() });
    }
    if n > MAX_SIGN_DIM {
        return Err(AttackError::Capacity(n));
    }
    let ynorm = y.norm();
    if ynorm == 0.0 {
        return Err(AttackError::NoGap);
    }
    let offsets: Vec<f64> = a_desired.iter().zip(ys).map(|(a, v)| a - v).collect();
    let ratio = norm(&offsets) / ynorm;
    if (ratio - 1.0).abs() > SUM_TOL {
        return Err(AttackError::OffSphere { ratio });
    }
    let base: Vec<f64> = offsets.iter().map(|o| if *o < 0.0 { -1.0 } else { 1.0 }).collect();
    let terms: Vec<f64> = offsets.iter().zip(ys).map(|(o, v)| o.abs() * v).collect();

    let mut best_mask = 0u32;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << n) {
        let mut sum = 0.0;
        for j in 0..n {
            let s = if flipped(mask, j, n) { -base[j] } else { base[j] };
            sum += s * terms[j];
        }
        if sum.abs() < best {
            best = sum.abs();
            best_mask = mask;
        }
    }
    let orthogonality = best / ynorm;
    if best > tol * ynorm * ynorm {
        return Err(AttackError::SignInfeasible { best: orthogonality });
    }
    let signs: Vec<i8> = (0..n)
        .map(|j| {
            let s = if flipped(best_mask, j, n) { -base[j] } else { base[j] };
            s as i8
        })
        .collect();
    let a: Vec<f64> = (0..n).map(|j| ys[j] + f64::from(signs[j]) * offsets[j].abs()).collect();
    let attack = AttackVector { values: y.embed(&a), support: y.support().clone(), family: AttackFamily::SignSelection, scenario: None };
    Ok(SignSelection { attack, signs, orthogonality })
}

fn flipped(mask: u32, j: usize, n: usize) -> bool {
    mask & (1 << (n - 1 - j)) != 0
}
