//! Perturbations of the shared boundary vector, and the residual evasion
//! criterion `a^T (a - 2y) = 0` with `y = x - z`: adding such an `a` to `z`
//! leaves `||x - z||` unchanged.

mod goal;
mod naive;
mod signs;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{BoundaryVector, Component};

pub use goal::{goal_oriented, DualGuard, GoalAttack, GoalOptions};
pub use naive::{naive_percent, parse_attack_values, replay_vector};
pub use signs::{feasibility_profile, lemma4_solve, sign_selection, FeasibilityProfile, SignSelection, MAX_SIGN_DIM};

/// Relative tolerance of the evasion criterion and the sphere check.
pub const CRITERION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("gap vector is zero; only a = 0 evades")]
    NoGap,
    #[error("direction is parallel to the gap vector")]
    Degenerate,
    #[error("lambda = {0} lies outside [0, 2]")]
    LambdaRange(f64),
    #[error("support index {0} is out of range or repeated")]
    Support(usize),
    #[error("bus {0} is not a boundary bus")]
    NotBoundary(usize),
    #[error("desired attack is off the evasion sphere: ||a - y|| / ||y|| = {ratio}")]
    OffSphere { ratio: f64 },
    #[error("no sign pattern is orthogonal within tolerance; best |c^T y| = {best}")]
    SignInfeasible { best: f64 },
    #[error("support dimension {0} exceeds the exhaustive search bound")]
    Capacity(usize),
    #[error("voltage target unreachable on the evasion sphere; best achievable {max_voltage:?}")]
    GoalInfeasible { max_voltage: Vec<f64> },
    #[error("dual residual guard cannot be met; best predicted {best}")]
    GuardInfeasible { best: f64 },
    #[error("cannot parse attack vector: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackFamily {
    Naive,
    Proposition1,
    LambdaFamily,
    SignSelection,
    GoalOriented,
    Replay,
}

/// Sorted set of flat boundary indices an attack may touch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support(Vec<usize>);

impl Support {
    pub fn new(mut indices: Vec<usize>, dim: usize) -> Result<Support, AttackError> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(AttackError::Support(w[0]));
            }
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(AttackError::Support(bad));
        }
        Ok(Support(indices))
    }

    pub fn all(dim: usize) -> Support {
        Support((0..dim).collect())
    }

    /// All `components` of the listed boundary buses.
    pub fn buses(boundary_ids: &[usize], targets: &[usize], components: &[Component]) -> Result<Support, AttackError> {
        let mut idx = Vec::new();
        for &bus in targets {
            let pos = boundary_ids.iter().position(|&b| b == bus).ok_or(AttackError::NotBoundary(bus))?;
            idx.extend(components.iter().map(|&c| BoundaryVector::index_of(pos, c)));
        }
        Support::new(idx, 4 * boundary_ids.len())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, index: usize) -> Option<usize> {
        self.0.binary_search(&index).ok()
    }
}

/// `y = x - z`, restricted to an attack support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapVector {
    full: Vec<f64>,
    support: Support,
    y: Vec<f64>,
    norm: f64,
}

impl GapVector {
    pub fn between(x: &BoundaryVector, z: &BoundaryVector, support: Support) -> Result<GapVector, AttackError> {
        if x.len() != z.len() {
            return Err(AttackError::Dimension { expected: x.len(), found: z.len() });
        }
        let full: Vec<f64> = x.as_slice().iter().zip(z.as_slice()).map(|(a, b)| a - b).collect();
        GapVector::with_support(full, support)
    }

    pub fn with_support(full: Vec<f64>, support: Support) -> Result<GapVector, AttackError> {
        if let Some(&bad) = support.indices().iter().find(|&&i| i >= full.len()) {
            return Err(AttackError::Support(bad));
        }
        let y: Vec<f64> = support.indices().iter().map(|&i| full[i]).collect();
        let norm = norm(&y);
        Ok(GapVector { full, support, y, norm })
    }

    /// A gap over the whole space, for synthetic instances.
    pub fn from_values(y: Vec<f64>) -> GapVector {
        let support = Support::all(y.len());
        GapVector::with_support(y, support).expect("full support is valid")
    }

    pub fn restricted(&self) -> &[f64] {
        &self.y
    }

    pub fn full(&self) -> &[f64] {
        &self.full
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    /// Places a support-restricted vector into the full space.
    pub fn embed(&self, restricted: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full.len()];
        for (&i, &v) in self.support.indices().iter().zip(restricted) {
            out[i] = v;
        }
        out
    }
}

/// A perturbation of the shared boundary vector with declared support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVector {
    /// Full boundary-order vector; exactly zero off `support`.
    pub values: Vec<f64>,
    pub support: Support,
    pub family: AttackFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<u32>,
}

impl AttackVector {
    pub fn new(values: Vec<f64>, support: Support, family: AttackFamily) -> Result<AttackVector, AttackError> {
        if let Some(&bad) = support.indices().iter().find(|&&i| i >= values.len()) {
            return Err(AttackError::Support(bad));
        }
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 && support.position(i).is_none() {
                return Err(AttackError::Support(i));
            }
        }
        Ok(AttackVector { values, support, family, scenario: None })
    }

    pub fn zero(dim: usize, family: AttackFamily) -> AttackVector {
        AttackVector { values: vec![0.0; dim], support: Support(Vec::new()), family, scenario: None }
    }

    fn from_restricted(gap: &GapVector, restricted: &[f64], family: AttackFamily) -> AttackVector {
        AttackVector { values: gap.embed(restricted), support: gap.support.clone(), family, scenario: None }
    }

    pub fn with_scenario(mut self, id: u32) -> AttackVector {
        self.scenario = Some(id);
        self
    }

    pub fn restricted(&self) -> Vec<f64> {
        self.support.indices().iter().map(|&i| self.values[i]).collect()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn to_boundary(&self) -> BoundaryVector {
        BoundaryVector::from_vec(self.values.clone()).expect("attack dimension is a multiple of four")
    }

    /// Sum of two attacks; the support is the union.
    pub fn combine(&self, other: &AttackVector) -> Result<AttackVector, AttackError> {
        if self.values.len() != other.values.len() {
            return Err(AttackError::Dimension { expected: self.values.len(), found: other.values.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        let mut idx = self.support.0.clone();
        idx.extend(other.support.indices().iter().filter(|i| self.support.position(**i).is_none()));
        Ok(AttackVector { values, support: Support::new(idx, self.values.len())?, family: self.family, scenario: self.scenario })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    /// `a^T (a - 2y)`.
    pub value: f64,
    pub satisfied: bool,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(a: &[f64], y: &[f64]) -> Result<(), AttackError> {
    if a.len() != y.len() {
        return Err(AttackError::Dimension { expected: y.len(), found: a.len() });
    }
    Ok(())
}

/// `a^T (a - 2y)` over plain vectors, with its satisfaction flag.
pub fn criterion(a: &[f64], y: &[f64]) -> Result<Criterion, AttackError> {
    check_len(a, y)?;
    let value: f64 = a.iter().zip(y).map(|(ai, yi)| ai * (ai - 2.0 * yi)).sum();
    let yy = dot(y, y);
    Ok(Criterion { value, satisfied: value.abs() <= CRITERION_TOL * yy.max(1.0) })
}

/// Whether `||a - y|| = ||y||` within tolerance, computed from the norms.
pub fn on_sphere(a: &[f64], y: &[f64]) -> Result<bool, AttackError> {
    check_len(a, y)?;
    let dist = a.iter().zip(y).map(|(ai, yi)| (ai - yi).powi(2)).sum::<f64>().sqrt();
    let radius = norm(y);
    Ok((dist - radius).abs() <= CRITERION_TOL * radius.max(1.0))
}

/// The evasion criterion of an attack against a gap. Off the attack's support
/// `a` is zero, so only supported entries contribute.
pub fn evasion_criterion(a: &AttackVector, y: &GapVector) -> Result<Criterion, AttackError> {
    if a.values.len() != y.full.len() {
        return Err(AttackError::Dimension { expected: y.full.len(), found: a.values.len() });
    }
    let ai: Vec<f64> = a.support.indices().iter().map(|&i| a.values[i]).collect();
    let yi: Vec<f64> = a.support.indices().iter().map(|&i| y.full[i]).collect();
    let value: f64 = ai.iter().zip(&yi).map(|(p, q)| p * (p - 2.0 * q)).sum();
    let yy = dot(&y.full, &y.full);
    Ok(Criterion { value, satisfied: value.abs() <= CRITERION_TOL * yy.max(1.0) })
}

/// Geometric form of the criterion: `||a - y|| = ||y||` over the full space.
pub fn sphere_check(a: &AttackVector, y: &GapVector) -> bool {
    on_sphere(&a.values, &y.full).unwrap_or(false)
}

/// Gram-Schmidt: the part of `c` orthogonal to `y`, rescaled to `||y||`.
pub fn orthogonal_component(c: &[f64], y: &[f64]) -> Result<Vec<f64>, AttackError> {
    check_len(c, y)?;
    let yy = dot(y, y);
    if yy == 0.0 {
        return Err(AttackError::NoGap);
    }
    let mut d: Vec<f64> = c.to_vec();
    // second pass removes the rounding left by the first
    for _ in 0..2 {
        let k = dot(&d, y) / yy;
        for (di, yi) in d.iter_mut().zip(y) {
            *di -= k * yi;
        }
    }
    let dn = norm(&d);
    if dn.is_nan() || dn <= 1e-12 * norm(c) || dn == 0.0 {
        return Err(AttackError::Degenerate);
    }
    let scale = yy.sqrt() / dn;
    Ok(d.into_iter().map(|v| v * scale).collect())
}

/// `a = lambda y + b` with `b` orthogonal to `y` and
/// `||b||^2 = (1 - (lambda - 1)^2) ||y||^2`.
pub fn lambda_family(y: &GapVector, lambda: f64, c: &[f64]) -> Result<AttackVector, AttackError> {
    if !(0.0..=2.0).contains(&lambda) {
        return Err(AttackError::LambdaRange(lambda));
    }
    if y.norm == 0.0 {
        return Err(AttackError::NoGap);
    }
    let ys = &y.y;
    let ratio = (1.0 - (lambda - 1.0).powi(2)).max(0.0).sqrt();
    let mut a: Vec<f64> = ys.iter().map(|v| lambda * v).collect();
    if ratio > 0.0 {
        let b = orthogonal_component(c, ys)?;
        for (ai, bi) in a.iter_mut().zip(b) {
            *ai += ratio * bi;
        }
    }
    let family = if lambda == 1.0 { AttackFamily::Proposition1 } else { AttackFamily::LambdaFamily };
    Ok(AttackVector::from_restricted(y, &a, family))
}

/// Randomized evasive attack `a = y + b` from a direction `c` drawn uniformly on
/// `[0, 1)` per supported entry, redrawn while parallel to `y`.
pub fn random_evasive<R: Rng + ?Sized>(y: &GapVector, rng: &mut R) -> Result<AttackVector, AttackError> {
    if y.norm == 0.0 {
        return Err(AttackError::NoGap);
    }
    loop {
        let c: Vec<f64> = (0..y.dim()).map(|_| rng.gen::<f64>()).collect();
        match lambda_family(y, 1.0, &c) {
            Err(AttackError::Degenerate) => continue,
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn criterion_examples() {
        let y = [1.0, 0.0, 0.0, 0.0];
        assert!(criterion(&[0.0; 4], &y).unwrap().satisfied);
        let two_y: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!(criterion(&two_y, &y).unwrap().satisfied);
        let c = criterion(&[1.0, 0.0, 0.0, 0.0], &y).unwrap();
        assert_eq!(c.value, -1.0);
        assert!(!c.satisfied);
        assert!(criterion(&[1.0], &y).is_err());
    }

    #[test]
    fn sphere_examples() {
        let y = [1.0, 0.0, 0.0, 0.0];
        assert!(on_sphere(&[0.0; 4], &y).unwrap());
        assert!(on_sphere(&[1.0, 1.0, 0.0, 0.0], &y).unwrap());
        assert_eq!(criterion(&[1.0, 1.0, 0.0, 0.0], &y).unwrap().value, 0.0);
    }

    #[test]
    fn orthogonal_examples() {
        let b = orthogonal_component(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(b, vec![0.0, 1.0, 0.0, 0.0]);
        let b = orthogonal_component(&[0.0, 3.0, 4.0, 0.0], &[2.0, 0.0, 0.0, 0.0]).unwrap();
        for (got, want) in b.iter().zip([0.0, 1.2, 1.6, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let y = [0.3, -1.0, 2.0, 0.5];
        let c: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        assert_eq!(orthogonal_component(&c, &y), Err(AttackError::Degenerate));
        assert_eq!(orthogonal_component(&[1.0; 4], &[0.0; 4]), Err(AttackError::NoGap));
    }

    #[test]
    fn lambda_endpoints() {
        let y = GapVector::from_values(vec![0.5, -0.2, 0.1, 0.3]);
        let c = [0.1, 0.7, 0.2, 0.9];
        let a2 = lambda_family(&y, 2.0, &c).unwrap();
        assert_eq!(a2.values, vec![1.0, -0.4, 0.2, 0.6]);
        let a0 = lambda_family(&y, 0.0, &c).unwrap();
        assert!(a0.values.iter().all(|&v| v == 0.0));
        assert!(matches!(lambda_family(&y, 2.5, &c), Err(AttackError::LambdaRange(_))));
        for lambda in [0.0, 0.3, 1.0, 1.7, 2.0] {
            let a = lambda_family(&y, lambda, &c).unwrap();
            assert!(evasion_criterion(&a, &y).unwrap().satisfied, "lambda {lambda}");
        }
    }

    #[test]
    fn forced_direction_reproduces_hand_example() {
        let y = GapVector::from_values(vec![1.0, 0.0, 0.0, 0.0]);
        let a = lambda_family(&y, 1.0, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a.values, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(evasion_criterion(&a, &y).unwrap().value, 0.0);
    }

    #[test]
    fn random_evasive_stays_on_support() {
        let x = BoundaryVector::from_vec(vec![1.0, 0.1, 0.4, 0.2, 1.02, 0.05, -0.3, 0.1]).unwrap();
        let z = BoundaryVector::zeros(2);
        let support = Support::buses(&[4, 5], &[4], &Component::ALL).unwrap();
        let y = GapVector::between(&x, &z, support).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_evasive(&y, &mut rng).unwrap();
        assert!(a.values[4..].iter().all(|&v| v == 0.0));
        assert!(evasion_criterion(&a, &y).unwrap().satisfied);
        let zero = GapVector::from_values(vec![0.0; 4]);
        assert_eq!(random_evasive(&zero, &mut rng), Err(AttackError::NoGap));
    }

    #[test]
    fn attack_vector_rejects_values_off_support() {
        let support = Support::new(vec![1], 4).unwrap();
        assert!(AttackVector::new(vec![0.0, 1.0, 0.0, 0.0], support.clone(), AttackFamily::Naive).is_ok());
        assert_eq!(
            AttackVector::new(vec![1.0, 1.0, 0.0, 0.0], support, AttackFamily::Naive),
            Err(AttackError::Support(0))
        );
        assert!(Support::new(vec![1, 1], 4).is_err());
        assert!(Support::new(vec![4], 4).is_err());
    }
}
