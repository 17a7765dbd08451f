use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::NetworkError;

/// Bus classification, numbered as in the case-file `type` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
    Isolated,
}

impl BusType {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Slack),
            4 => Some(BusType::Isolated),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
            BusType::Isolated => 4,
        }
    }
}

/// A bus. Power quantities are per-unit on the case base, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusType,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: u32,
    pub vm: f64,
    pub va: f64,
    pub base_kv: f64,
    pub zone: u32,
    pub vmax: f64,
    pub vmin: f64,
}

impl Bus {
    pub fn has_load(&self) -> bool {
        self.pd != 0.0 || self.qd != 0.0
    }
}

/// Pi-model branch. `ratio == 0` marks a line; anything else is a transformer
/// with off-nominal tap `ratio` on the from side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    pub ratio: f64,
    /// Phase shift in radians.
    pub shift: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn is_transformer(&self) -> bool {
        self.ratio != 0.0 || self.shift != 0.0
    }

    pub fn tap(&self) -> f64 {
        if self.ratio == 0.0 {
            1.0
        } else {
            self.ratio
        }
    }

    pub fn connects(&self, a: usize, b: usize) -> bool {
        (self.from == a && self.to == b) || (self.from == b && self.to == a)
    }
}

/// Polynomial generation cost `c2 * P^2 + c1 * P + c0` with `P` in MW and
/// the result in cost units per hour, exactly as tabulated in the case file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub startup: f64,
    pub shutdown: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl QuadraticCost {
    pub const ZERO: QuadraticCost = QuadraticCost {
        startup: 0.0,
        shutdown: 0.0,
        c2: 0.0,
        c1: 0.0,
        c0: 0.0,
    };

    pub fn eval_mw(&self, p_mw: f64) -> f64 {
        (self.c2 * p_mw + self.c1) * p_mw + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub mbase: f64,
    pub in_service: bool,
    pub pmax: f64,
    pub pmin: f64,
    pub cost: QuadraticCost,
}

/// A validated grid case in per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl NetworkCase {
    /// The IEEE 14-bus case shipped with the crate.
    pub fn ieee14() -> NetworkCase {
        super::parse_matpower_case(super::IEEE14_CASE).expect("embedded IEEE 14-bus case is valid")
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_ids(&self) -> BTreeSet<usize> {
        self.buses.iter().map(|b| b.id).collect()
    }

    pub fn slack_bus(&self) -> Option<&Bus> {
        self.buses.iter().find(|b| b.kind == BusType::Slack)
    }

    pub fn load_count(&self) -> usize {
        self.buses.iter().filter(|b| b.has_load()).count()
    }

    /// Returns a copy with every bus voltage band replaced.
    pub fn with_voltage_limits(mut self, vmin: f64, vmax: f64) -> Result<NetworkCase, NetworkError> {
        for bus in &mut self.buses {
            bus.vmin = vmin;
            bus.vmax = vmax;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(NetworkError::Validation(format!("base MVA {} must be positive", self.base_mva)));
        }
        if self.buses.is_empty() {
            return Err(NetworkError::Validation("case has no buses".into()));
        }
        let mut ids = BTreeSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                return Err(NetworkError::Validation(format!("duplicate bus id {}", bus.id)));
            }
            let vals = [bus.pd, bus.qd, bus.gs, bus.bs, bus.vm, bus.va, bus.base_kv, bus.vmax, bus.vmin];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::Validation(format!("bus {} has a non-finite value", bus.id)));
            }
            if !(bus.vmin > 0.0 && bus.vmin < bus.vmax) {
                return Err(NetworkError::Validation(format!(
                    "bus {} voltage limits [{}, {}] must satisfy 0 < vmin < vmax",
                    bus.id, bus.vmin, bus.vmax
                )));
            }
        }
        let slack = self.buses.iter().filter(|b| b.kind == BusType::Slack).count();
        if slack != 1 {
            return Err(NetworkError::Validation(format!("expected exactly one slack bus, found {slack}")));
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !ids.contains(&end) {
                    return Err(NetworkError::Validation(format!(
                        "branch {}-{} references unknown bus {end}",
                        br.from, br.to
                    )));
                }
            }
            if br.from == br.to {
                return Err(NetworkError::Validation(format!("branch {}-{} is a self loop", br.from, br.to)));
            }
            let vals = [br.r, br.x, br.b, br.rate_a, br.ratio, br.shift];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::Validation(format!(
                    "branch {}-{} has a non-finite value",
                    br.from, br.to
                )));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(NetworkError::Validation(format!("branch {}-{} has zero impedance", br.from, br.to)));
            }
        }
        for gen in &self.generators {
            if !ids.contains(&gen.bus) {
                return Err(NetworkError::Validation(format!("generator references unknown bus {}", gen.bus)));
            }
            let vals = [gen.pg, gen.qg, gen.qmax, gen.qmin, gen.vg, gen.pmax, gen.pmin, gen.cost.c2, gen.cost.c1, gen.cost.c0];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::Validation(format!("generator at bus {} has a non-finite value", gen.bus)));
            }
            if gen.pmin > gen.pmax || gen.qmin > gen.qmax {
                return Err(NetworkError::Validation(format!("generator at bus {} has inverted limits", gen.bus)));
            }
        }
        Ok(())
    }
}
