use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::case::{BusType, NetworkCase, QuadraticCost};
use super::NetworkError;

/// Bounds (p.u.) on the synthetic boundary attachments. Wide enough that the
/// coupling values are settled by the consensus penalty, not by local limits.
pub const ATTACHMENT_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    Tso,
    Dso,
}

impl RegionKind {
    /// Sign applied to the attachment injection when it is written into the
    /// shared boundary vector.
    pub fn injection_sign(self) -> f64 {
        match self {
            RegionKind::Tso => 1.0,
            RegionKind::Dso => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttachmentKind {
    /// Power leaving the region through the removed coupling branches.
    Load,
    /// Power entering the region from the other side.
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBus {
    /// Original bus id.
    pub id: usize,
    /// True for the duplicated boundary bus on the side that does not own it.
    pub is_copy: bool,
    pub kind: BusType,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vmin: f64,
    pub vmax: f64,
    pub vm0: f64,
    pub va0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBranch {
    /// Local bus indices.
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub ratio: f64,
    pub shift: f64,
}

impl RegionBranch {
    pub fn tap(&self) -> f64 {
        if self.ratio == 0.0 {
            1.0
        } else {
            self.ratio
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenSource {
    /// Index into the original case generator list.
    Case(usize),
    /// Synthetic attachment for the boundary position.
    Boundary(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGen {
    /// Local bus index.
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub cost: QuadraticCost,
    pub source: GenSource,
    pub pg0: f64,
    pub qg0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryAttachment {
    pub bus_id: usize,
    pub local_bus: usize,
    /// Index into [`RegionModel::generators`].
    pub gen: usize,
    pub kind: AttachmentKind,
}

/// One side of a two-region split, with its boundary buses duplicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionModel {
    pub kind: RegionKind,
    pub base_mva: f64,
    pub buses: Vec<RegionBus>,
    pub branches: Vec<RegionBranch>,
    pub generators: Vec<RegionGen>,
    /// Ascending by original bus id.
    pub boundary: Vec<BoundaryAttachment>,
    /// Local index of the angle reference.
    pub reference: usize,
    /// Whether the reference angle is held at zero. Only the region owning
    /// the case slack pins it; the other side's angles are tied to it through
    /// the consensus on boundary angles.
    pub reference_pinned: bool,
}

impl RegionModel {
    pub fn boundary_ids(&self) -> Vec<usize> {
        self.boundary.iter().map(|b| b.bus_id).collect()
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Branches as (from id, to id) pairs in original numbering.
    pub fn branch_ids(&self) -> Vec<(usize, usize)> {
        self.branches
            .iter()
            .map(|br| (self.buses[br.from].id, self.buses[br.to].id))
            .collect()
    }

    /// Branches that touch a duplicated boundary bus; these carried the flow
    /// between the regions in the undivided case.
    pub fn coupling_branches(&self) -> Vec<(usize, usize)> {
        self.branches
            .iter()
            .filter(|br| self.buses[br.from].is_copy || self.buses[br.to].is_copy)
            .map(|br| (self.buses[br.from].id, self.buses[br.to].id))
            .collect()
    }

    pub fn physical_generator_count(&self) -> usize {
        self.generators
            .iter()
            .filter(|g| matches!(g.source, GenSource::Case(_)))
            .count()
    }
}

/// Splits `case` into a TSO region (`tso_buses`) and a DSO region (the rest).
///
/// Every boundary bus stays in the TSO and is duplicated into the DSO. A
/// branch between a boundary bus and a DSO bus is removed from the TSO and
/// re-attached to the DSO copy of that boundary bus. The TSO gets a synthetic
/// load at each boundary bus, the DSO a synthetic generator at each copy.
pub fn partition(
    case: &NetworkCase,
    tso_buses: &BTreeSet<usize>,
    boundary_buses: &[usize],
) -> Result<(RegionModel, RegionModel), NetworkError> {
    let all = case.bus_ids();
    if let Some(stray) = tso_buses.iter().find(|id| !all.contains(id)) {
        return Err(NetworkError::Partition(format!("TSO bus {stray} is not in the case")));
    }
    let boundary: BTreeSet<usize> = boundary_buses.iter().copied().collect();
    if boundary.len() != boundary_buses.len() {
        return Err(NetworkError::Partition("boundary bus list contains duplicates".into()));
    }
    if let Some(stray) = boundary.iter().find(|id| !tso_buses.contains(id)) {
        return Err(NetworkError::Partition(format!("boundary bus {stray} is not a TSO bus")));
    }
    let dso_original: BTreeSet<usize> = all.difference(tso_buses).copied().collect();
    if tso_buses.is_empty() || dso_original.is_empty() {
        return Err(NetworkError::Partition("both regions must own at least one bus".into()));
    }

    let mut tso_branches = Vec::new();
    let mut dso_branches = Vec::new();
    for br in case.branches.iter().filter(|b| b.in_service) {
        let from_tso = tso_buses.contains(&br.from);
        let to_tso = tso_buses.contains(&br.to);
        match (from_tso, to_tso) {
            (true, true) => tso_branches.push((br, br.from, br.to, false)),
            (false, false) => dso_branches.push((br, br.from, br.to, false)),
            _ => {
                let tso_end = if from_tso { br.from } else { br.to };
                if !boundary.contains(&tso_end) {
                    return Err(NetworkError::Partition(format!(
                        "branch {}-{} crosses the boundary at non-boundary bus {tso_end}",
                        br.from, br.to
                    )));
                }
                dso_branches.push((br, br.from, br.to, true));
            }
        }
    }

    let slack_id = case.slack_bus().map(|b| b.id);
    let build = |kind: RegionKind, owned: &BTreeSet<usize>, copies: &BTreeSet<usize>, branches: &[(&super::Branch, usize, usize, bool)]| {
        let mut ids: Vec<(usize, bool)> = owned.iter().map(|&id| (id, false)).collect();
        ids.extend(copies.iter().map(|&id| (id, true)));
        ids.sort();

        let buses: Vec<RegionBus> = ids
            .iter()
            .map(|&(id, is_copy)| {
                let src = case.bus(id).expect("bus id validated above");
                if is_copy {
                    RegionBus {
                        id,
                        is_copy,
                        kind: BusType::Pq,
                        pd: 0.0,
                        qd: 0.0,
                        gs: 0.0,
                        bs: 0.0,
                        vmin: src.vmin,
                        vmax: src.vmax,
                        vm0: src.vm,
                        va0: src.va,
                    }
                } else {
                    RegionBus {
                        id,
                        is_copy,
                        kind: src.kind,
                        pd: src.pd,
                        qd: src.qd,
                        gs: src.gs,
                        bs: src.bs,
                        vmin: src.vmin,
                        vmax: src.vmax,
                        vm0: src.vm,
                        va0: src.va,
                    }
                }
            })
            .collect();
        let index = |id: usize| buses.iter().position(|b| b.id == id).expect("endpoint belongs to region");

        let branches: Vec<RegionBranch> = branches
            .iter()
            .map(|&(br, from, to, _)| RegionBranch {
                from: index(from),
                to: index(to),
                r: br.r,
                x: br.x,
                b: br.b,
                ratio: br.ratio,
                shift: br.shift,
            })
            .collect();

        let mut generators: Vec<RegionGen> = case
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.in_service && owned.contains(&g.bus))
            .map(|(i, g)| RegionGen {
                bus: index(g.bus),
                pmin: g.pmin,
                pmax: g.pmax,
                qmin: g.qmin,
                qmax: g.qmax,
                cost: g.cost,
                source: GenSource::Case(i),
                pg0: g.pg,
                qg0: g.qg,
            })
            .collect();

        let attachment = match kind {
            RegionKind::Tso => AttachmentKind::Load,
            RegionKind::Dso => AttachmentKind::Generator,
        };
        let mut attachments = Vec::new();
        for (pos, &id) in boundary.iter().enumerate() {
            let local = buses
                .iter()
                .position(|b| b.id == id && (b.is_copy || kind == RegionKind::Tso))
                .expect("boundary bus present in both regions");
            attachments.push(BoundaryAttachment { bus_id: id, local_bus: local, gen: generators.len(), kind: attachment });
            generators.push(RegionGen {
                bus: local,
                pmin: -ATTACHMENT_LIMIT,
                pmax: ATTACHMENT_LIMIT,
                qmin: -ATTACHMENT_LIMIT,
                qmax: ATTACHMENT_LIMIT,
                cost: QuadraticCost::ZERO,
                source: GenSource::Boundary(pos),
                pg0: 0.0,
                qg0: 0.0,
            });
        }

        let (reference, pinned) = match slack_id.and_then(|s| owned.contains(&s).then(|| index(s))) {
            Some(r) => (r, true),
            None => (attachments.first().map(|a| a.local_bus).unwrap_or(0), false),
        };
        let mut buses = buses;
        if !pinned {
            if let Some(b) = buses.get_mut(reference) {
                b.kind = BusType::Slack;
            }
        }

        RegionModel {
            kind,
            base_mva: case.base_mva,
            buses,
            branches,
            generators,
            boundary: attachments,
            reference,
            reference_pinned: pinned,
        }
    };

    let none = BTreeSet::new();
    let tso = build(RegionKind::Tso, tso_buses, &none, &tso_branches);
    let dso = build(RegionKind::Dso, &dso_original, &boundary, &dso_branches);
    Ok((tso, dso))
}

/// The undivided case as a single region with no boundary. Used as the
/// reference optimum that a converged split should reproduce.
pub fn whole_network(case: &NetworkCase) -> Result<RegionModel, NetworkError> {
    let slack = case
        .slack_bus()
        .ok_or_else(|| NetworkError::Validation("case has no slack bus".into()))?
        .id;
    let buses: Vec<RegionBus> = case
        .buses
        .iter()
        .map(|b| RegionBus {
            id: b.id,
            is_copy: false,
            kind: b.kind,
            pd: b.pd,
            qd: b.qd,
            gs: b.gs,
            bs: b.bs,
            vmin: b.vmin,
            vmax: b.vmax,
            vm0: b.vm,
            va0: b.va,
        })
        .collect();
    let index = |id: usize| buses.iter().position(|b| b.id == id).expect("validated case");
    let branches = case
        .branches
        .iter()
        .filter(|b| b.in_service)
        .map(|br| RegionBranch {
            from: index(br.from),
            to: index(br.to),
            r: br.r,
            x: br.x,
            b: br.b,
            ratio: br.ratio,
            shift: br.shift,
        })
        .collect();
    let generators = case
        .generators
        .iter()
        .enumerate()
        .filter(|(_, g)| g.in_service)
        .map(|(i, g)| RegionGen {
            bus: index(g.bus),
            pmin: g.pmin,
            pmax: g.pmax,
            qmin: g.qmin,
            qmax: g.qmax,
            cost: g.cost,
            source: GenSource::Case(i),
            pg0: g.pg,
            qg0: g.qg,
        })
        .collect();
    let reference = index(slack);
    Ok(RegionModel {
        kind: RegionKind::Tso,
        base_mva: case.base_mva,
        buses,
        branches,
        generators,
        boundary: Vec::new(),
        reference,
        reference_pinned: true,
    })
}

/// The split used throughout: buses 1-5 form the TSO, buses 4 and 5 are the boundary.
pub fn ieee14_split(case: &NetworkCase) -> Result<(RegionModel, RegionModel), NetworkError> {
    let tso: BTreeSet<usize> = (1..=5).collect();
    partition(case, &tso, &[4, 5])
}
