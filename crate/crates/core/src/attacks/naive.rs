use crate::network::{BoundaryVector, Component};

use super::{AttackError, AttackFamily, AttackVector, Support};

/// Single-entry attack adding `percent` % of the current value of one
/// component at one boundary bus.
pub fn naive_percent(
    v: &BoundaryVector,
    boundary_ids: &[usize],
    bus: usize,
    component: Component,
    percent: f64,
) -> Result<AttackVector, AttackError> {
    if v.len() != 4 * boundary_ids.len() {
        return Err(AttackError::Dimension { expected: 4 * boundary_ids.len(), found: v.len() });
    }
    let pos = boundary_ids.iter().position(|&b| b == bus).ok_or(AttackError::NotBoundary(bus))?;
    let idx = BoundaryVector::index_of(pos, component);
    let mut values = vec![0.0; v.len()];
    values[idx] = percent / 100.0 * v[idx];
    AttackVector::new(values, Support::new(vec![idx], v.len())?, AttackFamily::Naive)
}

/// Places a per-bus `[V, Theta, p, q]` block at `bus`.
pub fn replay_vector(block: &[f64], boundary_ids: &[usize], bus: usize) -> Result<AttackVector, AttackError> {
    if block.len() != 4 {
        return Err(AttackError::Dimension { expected: 4, found: block.len() });
    }
    let support = Support::buses(boundary_ids, &[bus], &Component::ALL)?;
    let mut values = vec![0.0; 4 * boundary_ids.len()];
    for (&i, &v) in support.indices().iter().zip(block) {
        values[i] = v;
    }
    AttackVector::new(values, support, AttackFamily::Replay)
}

/// Reads an attack vector written either as a JSON array (`[0.1, -2e-3]`)
/// or in whitespace-separated bracket form (`[0.1 -2e-3]`).
pub fn parse_attack_values(text: &str) -> Result<Vec<f64>, AttackError> {
    let trimmed = text.trim();
    if let Ok(values) = serde_json::from_str::<Vec<f64>>(trimmed) {
        return Ok(values);
    }
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| AttackError::Parse(format!("expected a bracketed list, got {trimmed:?}")))?;
    inner
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|tok| tok.parse::<f64>().map_err(|_| AttackError::Parse(format!("bad number {tok:?}"))))
        .collect()
}
