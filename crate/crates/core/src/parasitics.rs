//! Field-solver extraction of interconnect capacitance and resistance, netlist
//! emission and ratio tables between two extracted designs.
//!
//! Capacitance: one Laplace solve per conductor with that conductor at 1 V and
//! the rest at 0 V. Conductor cells are pinned, so the potential only lives in
//! the dielectric. The charge on a conductor is the flux `ε∇φ` leaving its
//! cells. Semiconductors count as dielectrics; metal that belongs to no
//! conductor floats, modelled as a very high permittivity.
//!
//! Resistance: a conduction solve inside the metal body joining two contacts,
//! `R = 1 V / I`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::circuit::{Netlist, GROUND};
use crate::error::{Error, Result};
use crate::fv::{default_max_iter, pcg, FaceBc, Network, FACES};
use crate::geometry::{locate_conductors, InverterCell, Rail, VoxelGrid};
use crate::materials::{MaterialLibrary, Role, EPS0};
use crate::report::num;

/// Conductor order of an inverter extraction.
pub const INVERTER_CONDUCTORS: [&str; 8] = ["Input", "Output", "Power", "Ground", "Gate", "Drain", "NSource", "PSource"];

/// Couplings below this are dropped from emitted netlists, F.
pub const DEFAULT_FLOOR: f64 = 1e-21;

#[derive(Debug, Clone, PartialEq)]
pub struct Conductor {
    pub name: String,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacitanceOptions {
    /// Relative residual of each Laplace solve.
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// Pin the outer boundary at 0 V instead of leaving it flux-free.
    pub grounded_shield: bool,
    /// Relative permittivity given to metal outside every conductor.
    pub floating_metal_eps: f64,
}

impl Default for CapacitanceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: None,
            grounded_shield: false,
            floating_metal_eps: 1e4,
        }
    }
}

/// Maxwell capacitance matrix, F. `c[i][j]` is the charge on `j` with `i` at
/// 1 V and every other conductor grounded, symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitanceMatrix {
    pub names: Vec<String>,
    pub c: Vec<Vec<f64>>,
    /// Largest `|c_ij − c_ji|` before averaging, relative to the largest
    /// diagonal entry.
    pub asymmetry: f64,
    /// PCG iterations of each solve.
    pub iterations: Vec<usize>,
    /// Conductor pairs that share a cell face. Their coupling is set to zero
    /// and taken out of both diagonals: the field at a zero-gap contact is
    /// singular and its charge grows without bound under mesh refinement,
    /// while electrically the pair is joined by the rail resistance anyway.
    pub in_contact: Vec<(String, String)>,
}

impl CapacitanceMatrix {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Entry between two named conductors.
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.c[self.index(a)?][self.index(b)?])
    }

    /// Positive coupling capacitance between two conductors.
    pub fn coupling(&self, a: &str, b: &str) -> Option<f64> {
        self.get(a, b).map(|v| -v)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.c[i].iter().sum()
    }

    /// Checks symmetry, signs and diagonal dominance. `slack` absorbs solver
    /// noise, relative to the largest diagonal entry.
    pub fn check_structure(&self, slack: f64) -> Result<()> {
        let n = self.names.len();
        let scale = (0..n).map(|i| self.c[i][i]).fold(0.0, f64::max);
        let eps = slack * scale;
        for i in 0..n {
            if !(self.c[i][i] > 0.0) {
                return Err(Error::Validation(format!(
                    "capacitance of `{}` to itself is not positive",
                    self.names[i]
                )));
            }
            for j in 0..n {
                if i != j && self.c[i][j] > eps {
                    return Err(Error::Validation(format!(
                        "positive coupling between `{}` and `{}`",
                        self.names[i], self.names[j]
                    )));
                }
                if (self.c[i][j] - self.c[j][i]).abs() > 1e-9 * scale {
                    return Err(Error::Validation("capacitance matrix is not symmetric".into()));
                }
            }
            if self.row_sum(i) < -eps {
                return Err(Error::Validation(format!(
                    "row of `{}` sums below zero",
                    self.names[i]
                )));
            }
        }
        Ok(())
    }

    /// Square CSV with a `conductor` column, F.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("conductor");
        for n in &self.names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.c) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{}", num(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Cell masks of the conductors and the index pairs that touch.
fn conductor_masks(grid: &VoxelGrid, conductors: &[Conductor]) -> Result<(Vec<Vec<bool>>, Vec<(usize, usize)>)> {
    let n = grid.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut masks = Vec::with_capacity(conductors.len());
    for (k, cond) in conductors.iter().enumerate() {
        if cond.cells.is_empty() {
            return Err(Error::Validation(format!("conductor `{}` has no cells", cond.name)));
        }
        if conductors[..k].iter().any(|c| c.name == cond.name) {
            return Err(Error::Validation(format!("conductor `{}` listed twice", cond.name)));
        }
        let mut mask = vec![false; n];
        for &c in &cond.cells {
            if let Some(other) = owner[c] {
                if other != k {
                    return Err(Error::Geometry(format!(
                        "conductors `{}` and `{}` overlap",
                        conductors[other].name, cond.name
                    )));
                }
            }
            owner[c] = Some(k);
            mask[c] = true;
        }
        masks.push(mask);
    }
    let mut touching = Vec::new();
    for c in 0..n {
        let Some(i) = owner[c] else { continue };
        for m in grid.neighbours(c) {
            if let Some(j) = owner[m] {
                if i < j && !touching.contains(&(i, j)) {
                    touching.push((i, j));
                }
            }
        }
    }
    touching.sort_unstable();
    Ok((masks, touching))
}

/// Maxwell capacitance matrix among `conductors`.
pub fn extract_capacitance(
    grid: &VoxelGrid,
    materials: &MaterialLibrary,
    conductors: &[Conductor],
    opts: &CapacitanceOptions,
) -> Result<CapacitanceMatrix> {
    if conductors.len() < 2 {
        return Err(Error::Validation("capacitance extraction needs at least two conductors".into()));
    }
    if !(opts.tol > 0.0 && opts.floating_metal_eps >= 1.0) {
        return Err(Error::Config("capacitance tolerance and floating-metal permittivity must be positive".into()));
    }
    let n = grid.len();
    let (masks, touching) = conductor_masks(grid, conductors)?;
    let fixed: Vec<bool> = (0..n).map(|c| masks.iter().any(|m| m[c])).collect();

    let mut palette = Vec::new();
    for name in grid.material_names() {
        let m = materials.get(name)?;
        palette.push(match m.role {
            Role::Conductor => opts.floating_metal_eps * EPS0,
            _ => m.eps_r.unwrap_or(1.0) * EPS0,
        });
    }
    let ids = grid.material_ids();
    let coeff: Vec<f64> = (0..n)
        .map(|c| if fixed[c] { f64::INFINITY } else { palette[ids[c] as usize] })
        .collect();
    let face = if opts.grounded_shield { FaceBc::pinned(0.0) } else { FaceBc::Open };
    let net = Network::assemble(grid, &coeff, &[face; 6]);
    let op = net.operator(&fixed)?;
    let max_iter = opts.max_iter.unwrap_or_else(|| 4 * default_max_iter(n));

    let columns: Vec<(Vec<f64>, usize)> = masks
        .par_iter()
        .map(|driven| {
            let values: Vec<f64> = driven.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
            let b = net.rhs(&fixed, &values, None);
            let mut u = values.clone();
            let stats = pcg(&op, &b, &mut u, opts.tol, max_iter)?;
            let charges = masks.iter().map(|m| net.outflow(&u, m)).collect();
            Ok((charges, stats.iterations))
        })
        .collect::<Result<_>>()?;

    let k = conductors.len();
    let raw: Vec<Vec<f64>> = columns.iter().map(|(q, _)| q.clone()).collect();
    let scale = (0..k).map(|i| raw[i][i]).fold(0.0, f64::max);
    let mut asymmetry = 0.0f64;
    let mut c = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            asymmetry = asymmetry.max((raw[i][j] - raw[j][i]).abs());
            c[i][j] = 0.5 * (raw[i][j] + raw[j][i]);
        }
    }
    for &(i, j) in &touching {
        let v = c[i][j];
        c[i][i] += v;
        c[j][j] += v;
        c[i][j] = 0.0;
        c[j][i] = 0.0;
    }
    let matrix = CapacitanceMatrix {
        names: conductors.iter().map(|c| c.name.clone()).collect(),
        c,
        asymmetry: if scale > 0.0 { asymmetry / scale } else { 0.0 },
        iterations: columns.iter().map(|(_, it)| *it).collect(),
        in_contact: touching
            .iter()
            .map(|&(i, j)| (conductors[i].name.clone(), conductors[j].name.clone()))
            .collect(),
    };
    matrix.check_structure(1e-6)?;
    Ok(matrix)
}

/// Where a resistance terminal meets the conducting body.
#[derive(Debug, Clone, PartialEq)]
pub enum Contact {
    /// One outer face of the domain, by index in [`FACES`] order.
    Face(usize),
    /// Every outer face the body reaches.
    Boundary,
    /// A set of cells next to the body, held at one potential.
    Cells(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResistancePair {
    pub a: String,
    pub b: String,
    /// Conductor cells the current may flow through.
    pub body: Vec<usize>,
    pub contact_a: Contact,
    pub contact_b: Contact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceEntry {
    pub a: String,
    pub b: String,
    pub ohms: f64,
    /// `|I_a − I_b| / I_a` between the currents at the two contacts.
    pub current_mismatch: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResistanceReport {
    pub entries: Vec<ResistanceEntry>,
}

impl ResistanceReport {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.ohms)
    }

    /// CSV with columns `node_a,node_b,r_ohm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_a,node_b,r_ohm\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.a, e.b, num(e.ohms));
        }
        out
    }
}

/// Faces a contact pins, and the matching outer-face test for a cell.
fn contact_faces(grid: &VoxelGrid, contact: &Contact, body: &[bool]) -> [bool; 6] {
    let dims = grid.dims();
    match contact {
        Contact::Face(f) => std::array::from_fn(|k| k == *f),
        Contact::Boundary => std::array::from_fn(|f| {
            let (a, high) = FACES[f];
            let plane = if high { dims[a] - 1 } else { 0 };
            (0..grid.len()).any(|c| body[c] && grid.ijk(c)[a] == plane)
        }),
        Contact::Cells(_) => [false; 6],
    }
}

fn on_faces(grid: &VoxelGrid, c: usize, faces: &[bool; 6]) -> bool {
    let dims = grid.dims();
    let p = grid.ijk(c);
    (0..6).any(|f| {
        let (a, high) = FACES[f];
        faces[f] && p[a] == if high { dims[a] - 1 } else { 0 }
    })
}

fn resistance(grid: &VoxelGrid, sigma: &[f64], pair: &ResistancePair, tol: f64) -> Result<ResistanceEntry> {
    let n = grid.len();
    let name = format!("{}-{}", pair.a, pair.b);
    let mut body = vec![false; n];
    for &c in &pair.body {
        if !(sigma[c] > 0.0) {
            return Err(Error::Validation(format!(
                "resistance path {name} runs through non-metal `{}`",
                grid.material(c)
            )));
        }
        body[c] = true;
    }
    let mut cells_a = vec![false; n];
    let mut cells_b = vec![false; n];
    for (contact, mask) in [(&pair.contact_a, &mut cells_a), (&pair.contact_b, &mut cells_b)] {
        if let Contact::Cells(cells) = contact {
            for &c in cells {
                if body[c] {
                    return Err(Error::Validation(format!("contact of {name} overlaps its body")));
                }
                mask[c] = true;
            }
        }
    }
    if (0..n).any(|c| cells_a[c] && cells_b[c]) {
        return Err(Error::Validation(format!("both contacts of {name} share cells")));
    }
    let faces_a = contact_faces(grid, &pair.contact_a, &body);
    let faces_b = contact_faces(grid, &pair.contact_b, &body);
    if (0..6).any(|f| faces_a[f] && faces_b[f]) {
        return Err(Error::Validation(format!("both contacts of {name} use the same outer face")));
    }
    let touches = |c: usize, cells: &[bool], faces: &[bool; 6]| {
        on_faces(grid, c, faces) || grid.neighbours(c).any(|m| cells[m])
    };

    // Keep only the part of the body reachable from contact a.
    let mut reach = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|&c| body[c] && touches(c, &cells_a, &faces_a))
        .collect();
    if queue.is_empty() {
        return Err(Error::Connectivity(format!("contact {} does not touch its path", pair.a)));
    }
    for &c in &queue {
        reach[c] = true;
    }
    while let Some(c) = queue.pop_front() {
        for m in grid.neighbours(c) {
            if body[m] && !reach[m] {
                reach[m] = true;
                queue.push_back(m);
            }
        }
    }
    if !(0..n).any(|c| reach[c] && touches(c, &cells_b, &faces_b)) {
        return Err(Error::Connectivity(format!(
            "{} and {} are not joined by a conducting path",
            pair.a, pair.b
        )));
    }

    let coeff: Vec<f64> = (0..n)
        .map(|c| {
            if reach[c] {
                sigma[c]
            } else if cells_a[c] || cells_b[c] {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect();
    let faces: [FaceBc; 6] = std::array::from_fn(|f| {
        if faces_a[f] {
            FaceBc::pinned(1.0)
        } else if faces_b[f] {
            FaceBc::pinned(0.0)
        } else {
            FaceBc::Open
        }
    });
    let net = Network::assemble(grid, &coeff, &faces);
    let fixed: Vec<bool> = reach.iter().map(|r| !r).collect();
    let values: Vec<f64> = cells_a.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let op = net.operator(&fixed)?;
    let b = net.rhs(&fixed, &values, None);
    let mut u = values.clone();
    let stats = pcg(&op, &b, &mut u, tol, 4 * default_max_iter(n))?;

    let face_flux = net.face_outflow(&u);
    let current_in = |cells: &[bool], pinned: &[bool; 6]| -> f64 {
        let through_faces: f64 = (0..6).filter(|&f| pinned[f]).map(|f| -face_flux[f]).sum();
        through_faces + net.outflow(&u, cells)
    };
    let i_a = current_in(&cells_a, &faces_a);
    let i_b = -current_in(&cells_b, &faces_b);
    if !(i_a > 0.0) {
        return Err(Error::Connectivity(format!("no current flows between {} and {}", pair.a, pair.b)));
    }
    Ok(ResistanceEntry {
        a: pair.a.clone(),
        b: pair.b.clone(),
        ohms: 2.0 / (i_a + i_b),
        current_mismatch: (i_a - i_b).abs() / i_a,
        iterations: stats.iterations,
    })
}

/// Terminal-pair resistances. Pairs are independent and solved in parallel.
pub fn extract_resistance(
    grid: &VoxelGrid,
    materials: &MaterialLibrary,
    pairs: &[ResistancePair],
    tol: f64,
) -> Result<ResistanceReport> {
    let mut palette = Vec::new();
    for name in grid.material_names() {
        let m = materials.get(name)?;
        palette.push(match (m.role, m.rho_e) {
            (Role::Conductor, Some(rho)) => 1.0 / rho,
            _ => 0.0,
        });
    }
    let sigma: Vec<f64> = grid.material_ids().iter().map(|&id| palette[id as usize]).collect();
    let entries = pairs
        .par_iter()
        .map(|p| resistance(grid, &sigma, p, tol))
        .collect::<Result<_>>()?;
    Ok(ResistanceReport { entries })
}

/// The eight inverter conductors: the four rails and the device terminals.
pub fn inverter_conductors(grid: &VoxelGrid, cell: &InverterCell) -> Result<Vec<Conductor>> {
    let rails = locate_conductors(grid)?;
    INVERTER_CONDUCTORS
        .iter()
        .map(|&name| {
            let cells = match rails.get(name) {
                Some(cells) => cells.clone(),
                None => {
                    let labels = cell
                        .terminals
                        .get(name)
                        .ok_or_else(|| Error::Lookup(format!("inverter has no conductor `{name}`")))?;
                    let mut cells: Vec<usize> = labels.iter().flat_map(|l| grid.cells_labelled(l)).collect();
                    cells.sort_unstable();
                    cells
                }
            };
            if cells.is_empty() {
                return Err(Error::Lookup(format!("conductor `{name}` is not on the grid")));
            }
            Ok(Conductor {
                name: name.to_string(),
                cells,
            })
        })
        .collect()
}

/// One pair per rail, from its open end on the domain boundary to the
/// terminal it lands on.
pub fn inverter_resistance_pairs(grid: &VoxelGrid, cell: &InverterCell) -> Result<Vec<ResistancePair>> {
    let conductors = inverter_conductors(grid, cell)?;
    let find = |name: &str| {
        conductors
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.cells.clone())
            .ok_or_else(|| Error::Lookup(format!("conductor `{name}` missing")))
    };
    [Rail::Ground, Rail::Power, Rail::Input, Rail::Output]
        .iter()
        .map(|rail| {
            Ok(ResistancePair {
                a: rail.name().to_string(),
                b: rail.terminal().to_string(),
                body: find(rail.name())?,
                contact_a: Contact::Boundary,
                contact_b: Contact::Cells(find(rail.terminal())?),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruningReport {
    /// `(a, b, farads)` of every coupling under the floor.
    pub pruned: Vec<(String, String, f64)>,
    pub floor: f64,
}

/// Coupling capacitors, capacitors to ground for positive row sums, and one
/// resistor per extracted pair. `node_map` renames conductors; names not in
/// it are kept.
pub fn to_netlist(
    cm: &CapacitanceMatrix,
    rr: &ResistanceReport,
    node_map: &BTreeMap<String, String>,
    floor: f64,
) -> Result<(Netlist, PruningReport)> {
    let node = |n: &str| node_map.get(n).cloned().unwrap_or_else(|| n.to_string());
    let mut net = Netlist::new();
    let mut report = PruningReport {
        pruned: Vec::new(),
        floor,
    };
    for e in &rr.entries {
        let (a, b) = (node(&e.a), node(&e.b));
        net.resistor(&format!("R{a}_{b}"), &a, &b, e.ohms)?;
    }
    let k = cm.names.len();
    for i in 0..k {
        for j in i + 1..k {
            let shorted = cm
                .in_contact
                .iter()
                .any(|(x, y)| (x, y) == (&cm.names[i], &cm.names[j]) || (y, x) == (&cm.names[i], &cm.names[j]));
            if shorted {
                continue;
            }
            let (a, b) = (node(&cm.names[i]), node(&cm.names[j]));
            let v = -cm.c[i][j];
            if v >= floor {
                net.capacitor(&format!("C{a}_{b}"), &a, &b, v)?;
            } else {
                report.pruned.push((a, b, v));
            }
        }
    }
    for i in 0..k {
        let a = node(&cm.names[i]);
        let v = cm.row_sum(i);
        if v >= floor {
            net.capacitor(&format!("C{a}_gnd"), &a, GROUND, v)?;
        } else {
            report.pruned.push((a, GROUND.to_string(), v));
        }
    }
    Ok((net, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub element: String,
    pub base: f64,
    pub variant: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioTable {
    pub rows: Vec<RatioRow>,
    pub only_in_base: Vec<String>,
    pub only_in_variant: Vec<String>,
}

impl RatioTable {
    pub fn get(&self, element: &str) -> Option<&RatioRow> {
        self.rows.iter().find(|r| r.element == element)
    }

    /// `element,base,variant,ratio` with the ratio at two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("element,base,variant,ratio\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.2}", r.element, num(r.base), num(r.variant), r.ratio);
        }
        out
    }
}

/// `variant / base` for every resistor and capacitor present in both.
pub fn compare_tiers(base: &Netlist, variant: &Netlist) -> Result<RatioTable> {
    let valued = |n: &Netlist| -> Vec<(String, f64)> {
        n.elements()
            .iter()
            .filter_map(|e| e.value().map(|v| (e.name().to_string(), v)))
            .collect()
    };
    let b = valued(base);
    let v = valued(variant);
    let mut rows = Vec::new();
    let mut only_in_base = Vec::new();
    for (name, bv) in &b {
        match v.iter().find(|(n, _)| n == name) {
            Some((_, vv)) if *bv != 0.0 => rows.push(RatioRow {
                element: name.clone(),
                base: *bv,
                variant: *vv,
                ratio: vv / bv,
            }),
            Some(_) => only_in_base.push(name.clone()),
            None => only_in_base.push(name.clone()),
        }
    }
    let only_in_variant = v
        .iter()
        .filter(|(n, _)| !b.iter().any(|(m, _)| m == n))
        .map(|(n, _)| n.clone())
        .collect();
    if rows.is_empty() {
        return Err(Error::Comparison("the netlists share no comparable elements".into()));
    }
    Ok(RatioTable {
        rows,
        only_in_base,
        only_in_variant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{voxelize, Aabb, Refinement, Region};
    use crate::materials::{default_library, Material};

    fn lib() -> MaterialLibrary {
        default_library()
            .with_material(Material::dielectric("vac", 1.0, 1.0))
            .unwrap()
    }

    /// Two square plates of side `w` and thickness `t`, `d` apart along z,
    /// in a dielectric box reaching `guard` past the plate edges.
    fn plates(w: f64, t: f64, d: f64, guard: f64, h: f64) -> (VoxelGrid, Vec<Conductor>) {
        let lo = Region::new(Aabb::from_ranges((0.0, w), (0.0, w), (-t, 0.0)), "interconnect_metal").conductor("lo");
        let hi = Region::new(Aabb::from_ranges((0.0, w), (0.0, w), (d, d + t)), "interconnect_metal").conductor("hi");
        let bx = Region::new(
            Aabb::from_ranges((-guard, w + guard), (-guard, w + guard), (-t - guard, d + t + guard)),
            "vac",
        );
        let grid = voxelize(&[bx, lo, hi], h, &Refinement::new()).unwrap();
        let conds = locate_conductors(&grid)
            .unwrap()
            .into_iter()
            .map(|(name, cells)| Conductor { name, cells })
            .collect();
        (grid, conds)
    }

    #[test]
    fn guarded_parallel_plate_capacitance() {
        // Sense electrode inside a guard ring reaching five gaps past it.
        let (w, d, t) = (20.0, 2.0, 1.0);
        let g = 5.0 * d;
        let span = (-g, w + g);
        let regions = [
            Region::new(Aabb::from_ranges((-2.0 * g, w + 2.0 * g), (-2.0 * g, w + 2.0 * g), (-t - g, d + t + g)), "vac"),
            Region::new(Aabb::from_ranges(span, span, (-t, 0.0)), "interconnect_metal").conductor("bottom"),
            Region::new(Aabb::from_ranges(span, span, (d, d + t)), "interconnect_metal").conductor("guard"),
            Region::new(Aabb::from_ranges((0.0, w), (0.0, w), (d, d + t)), "interconnect_metal").conductor("sense"),
        ];
        let grid = voxelize(&regions, 1.0, &Refinement::new()).unwrap();
        let conds: Vec<Conductor> = locate_conductors(&grid)
            .unwrap()
            .into_iter()
            .map(|(name, cells)| Conductor { name, cells })
            .collect();
        let cm = extract_capacitance(&grid, &lib(), &conds, &CapacitanceOptions::default()).unwrap();
        let ideal = EPS0 * (w * w * 1e-18) / (d * 1e-9);
        let c = cm.coupling("bottom", "sense").unwrap();
        assert!((c - ideal).abs() / ideal < 0.05, "{c:e} vs {ideal:e}");
        for i in 0..3 {
            assert!(cm.row_sum(i).abs() < 1e-6 * cm.c[i][i]);
        }
    }

    #[test]
    fn fringing_adds_to_bare_plates() {
        let (w, d) = (40.0, 2.0);
        let (grid, conds) = plates(w, 1.0, d, 5.0 * d, 1.0);
        let cm = extract_capacitance(&grid, &lib(), &conds, &CapacitanceOptions::default()).unwrap();
        let ideal = EPS0 * (w * w * 1e-18) / (d * 1e-9);
        let c = cm.coupling("hi", "lo").unwrap();
        assert!(c > ideal && c < 1.3 * ideal, "{c:e} vs {ideal:e}");
    }

    #[test]
    fn permittivity_scales_every_entry() {
        let (grid, conds) = plates(8.0, 1.0, 2.0, 4.0, 1.0);
        let a = extract_capacitance(&grid, &lib(), &conds, &CapacitanceOptions::default()).unwrap();
        let b = extract_capacitance(&grid, &lib().scale_permittivity(2.0), &conds, &CapacitanceOptions::default())
            .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((b.c[i][j] - 2.0 * a.c[i][j]).abs() <= 1e-6 * a.c[i][i]);
            }
        }
    }

    #[test]
    fn shielded_conductor_has_self_capacitance() {
        let (grid, conds) = plates(8.0, 1.0, 2.0, 4.0, 1.0);
        let opts = CapacitanceOptions {
            grounded_shield: true,
            ..Default::default()
        };
        let cm = extract_capacitance(&grid, &lib(), &conds, &opts).unwrap();
        for i in 0..2 {
            assert!(cm.row_sum(i) > 0.0);
        }
        assert!(cm.asymmetry < 1e-6);
    }

    #[test]
    fn swapping_roles_keeps_the_coupling() {
        let (grid, conds) = plates(8.0, 1.0, 2.0, 4.0, 1.0);
        let mut swapped = conds.clone();
        swapped.reverse();
        let a = extract_capacitance(&grid, &lib(), &conds, &CapacitanceOptions::default()).unwrap();
        let b = extract_capacitance(&grid, &lib(), &swapped, &CapacitanceOptions::default()).unwrap();
        let (x, y) = (a.coupling("lo", "hi").unwrap(), b.coupling("lo", "hi").unwrap());
        assert!((x - y).abs() < 1e-9 * x);
    }

    #[test]
    fn touching_conductors_drop_their_coupling() {
        let a = Region::new(Aabb::from_ranges((0.0, 4.0), (0.0, 2.0), (0.0, 2.0)), "interconnect_metal").conductor("a");
        let b = Region::new(Aabb::from_ranges((4.0, 8.0), (0.0, 2.0), (0.0, 2.0)), "interconnect_metal").conductor("b");
        let c = Region::new(Aabb::from_ranges((0.0, 8.0), (0.0, 2.0), (4.0, 6.0)), "interconnect_metal").conductor("c");
        let bx = Region::new(Aabb::from_ranges((-3.0, 11.0), (-3.0, 5.0), (-3.0, 9.0)), "vac");
        let grid = voxelize(&[bx, a, b, c], 1.0, &Refinement::new()).unwrap();
        let conds: Vec<Conductor> = locate_conductors(&grid)
            .unwrap()
            .into_iter()
            .map(|(name, cells)| Conductor { name, cells })
            .collect();
        let cm = extract_capacitance(&grid, &lib(), &conds, &CapacitanceOptions::default()).unwrap();
        assert_eq!(cm.in_contact, vec![("a".to_string(), "b".to_string())]);
        assert_eq!(cm.get("a", "b"), Some(0.0));
        assert!(cm.coupling("a", "c").unwrap() > 0.0);
        let (net, pruned) = to_netlist(&cm, &ResistanceReport::default(), &BTreeMap::new(), DEFAULT_FLOOR).unwrap();
        assert!(net.get("Ca_b").is_none());
        assert!(!pruned.pruned.iter().any(|(x, y, _)| x == "a" && y == "b"));
    }

    #[test]
    fn overlapping_conductors_are_rejected() {
        let (grid, mut conds) = plates(4.0, 1.0, 2.0, 2.0, 1.0);
        let stolen = conds[0].cells[0];
        conds[1].cells.push(stolen);
        let err = extract_capacitance(&grid, &lib(), &conds, &CapacitanceOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    fn bar_grid(segments: &[(&str, f64)], a: f64, h: f64) -> VoxelGrid {
        let mut x = 0.0;
        let mut regions = vec![Region::new(
            Aabb::from_ranges((0.0, segments.iter().map(|s| s.1).sum()), (-a, 2.0 * a), (-a, 2.0 * a)),
            "vac",
        )];
        for (label, len) in segments {
            regions.push(
                Region::new(Aabb::from_ranges((x, x + len), (0.0, a), (0.0, a)), "interconnect_metal")
                    .conductor(label),
            );
            x += len;
        }
        voxelize(&regions, h, &Refinement::new()).unwrap()
    }

    fn metal_cells(grid: &VoxelGrid) -> Vec<usize> {
        grid.cells_of_material("interconnect_metal")
    }

    #[test]
    fn bar_resistance() {
        let (len, a) = (60.0, 6.0);
        let grid = bar_grid(&[("bar", len)], a, 1.0);
        let pair = ResistancePair {
            a: "left".into(),
            b: "right".into(),
            body: metal_cells(&grid),
            contact_a: Contact::Face(0),
            contact_b: Contact::Face(1),
        };
        let rr = extract_resistance(&grid, &lib(), &[pair], 1e-10).unwrap();
        let rho = 3e-8;
        let ideal = rho * len * 1e-9 / (a * a * 1e-18);
        let r = rr.get("left", "right").unwrap();
        assert!((r - ideal).abs() / ideal < 0.02, "{r} vs {ideal}");
        assert!(rr.entries[0].current_mismatch < 1e-6);
    }

    #[test]
    fn series_bars_add() {
        let one = bar_grid(&[("a", 30.0)], 4.0, 1.0);
        let two = bar_grid(&[("a", 30.0), ("b", 30.0)], 4.0, 1.0);
        let r = |g: &VoxelGrid| {
            let pair = ResistancePair {
                a: "l".into(),
                b: "r".into(),
                body: metal_cells(g),
                contact_a: Contact::Face(0),
                contact_b: Contact::Face(1),
            };
            extract_resistance(g, &lib(), &[pair], 1e-10).unwrap().entries[0].ohms
        };
        let (r1, r2) = (r(&one), r(&two));
        assert!((r2 - 2.0 * r1).abs() / (2.0 * r1) < 0.02);
    }

    #[test]
    fn cell_contact_matches_face_contact() {
        // Right half of a bar used as the contact: current enters at the midplane.
        let grid = bar_grid(&[("a", 30.0), ("b", 30.0)], 4.0, 1.0);
        let left = grid.cells_labelled("a");
        let right = grid.cells_labelled("b");
        let pair = ResistancePair {
            a: "l".into(),
            b: "r".into(),
            body: left,
            contact_a: Contact::Face(0),
            contact_b: Contact::Cells(right),
        };
        let r = extract_resistance(&grid, &lib(), &[pair], 1e-10).unwrap().entries[0].ohms;
        let ideal = 3e-8 * 30e-9 / 16e-18;
        assert!((r - ideal).abs() / ideal < 0.02);
    }

    #[test]
    fn disconnected_contacts() {
        let r1 = Region::new(Aabb::from_ranges((0.0, 10.0), (0.0, 2.0), (0.0, 2.0)), "interconnect_metal");
        let r2 = Region::new(Aabb::from_ranges((14.0, 24.0), (0.0, 2.0), (0.0, 2.0)), "interconnect_metal");
        let bx = Region::new(Aabb::from_ranges((0.0, 24.0), (-2.0, 4.0), (-2.0, 4.0)), "vac");
        let grid = voxelize(&[bx, r1, r2], 1.0, &Refinement::new()).unwrap();
        let pair = ResistancePair {
            a: "l".into(),
            b: "r".into(),
            body: metal_cells(&grid),
            contact_a: Contact::Face(0),
            contact_b: Contact::Face(1),
        };
        let err = extract_resistance(&grid, &lib(), &[pair], 1e-10).unwrap_err();
        assert!(matches!(err, Error::Connectivity(_)));
    }

    #[test]
    fn netlist_from_two_conductors() {
        let cm = CapacitanceMatrix {
            names: vec!["a".into(), "b".into()],
            c: vec![vec![2e-18, -2e-18], vec![-2e-18, 2e-18]],
            asymmetry: 0.0,
            iterations: vec![0, 0],
            in_contact: vec![],
        };
        let rr = ResistanceReport {
            entries: vec![ResistanceEntry {
                a: "a".into(),
                b: "x".into(),
                ohms: 12.5,
                current_mismatch: 0.0,
                iterations: 0,
            }],
        };
        let (net, pruned) = to_netlist(&cm, &rr, &BTreeMap::new(), DEFAULT_FLOOR).unwrap();
        let caps: Vec<_> = net.elements().iter().filter(|e| e.name().starts_with('C')).collect();
        assert_eq!(caps.len(), 1);
        assert_eq!(net.value("Ca_b"), Some(2e-18));
        assert_eq!(net.value("Ra_x"), Some(12.5));
        assert_eq!(pruned.pruned.len(), 2);

        let weak = CapacitanceMatrix {
            c: vec![vec![5e-22, -5e-22], vec![-5e-22, 5e-22]],
            ..cm
        };
        let (net, pruned) = to_netlist(&weak, &ResistanceReport::default(), &BTreeMap::new(), DEFAULT_FLOOR).unwrap();
        assert!(net.is_empty());
        assert!(pruned.pruned.iter().any(|(a, b, v)| a == "a" && b == "b" && *v == 5e-22));
    }

    #[test]
    fn colliding_names_fail() {
        let rr = ResistanceReport {
            entries: vec![
                ResistanceEntry {
                    a: "a".into(),
                    b: "b".into(),
                    ohms: 1.0,
                    current_mismatch: 0.0,
                    iterations: 0,
                },
                ResistanceEntry {
                    a: "a".into(),
                    b: "b".into(),
                    ohms: 2.0,
                    current_mismatch: 0.0,
                    iterations: 0,
                },
            ],
        };
        let cm = CapacitanceMatrix {
            names: vec!["a".into(), "b".into()],
            c: vec![vec![0.0; 2]; 2],
            asymmetry: 0.0,
            iterations: vec![],
            in_contact: vec![],
        };
        assert!(matches!(
            to_netlist(&cm, &rr, &BTreeMap::new(), DEFAULT_FLOOR),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn ratio_table() {
        let mut base = Netlist::new();
        base.resistor("R1", "a", "b", 21.62).unwrap();
        base.capacitor("C4", "a", "b", 2.29e-19).unwrap();
        base.resistor("Rx", "a", "b", 1.0).unwrap();
        let mut var = Netlist::new();
        var.resistor("R1", "a", "b", 68.18).unwrap();
        var.capacitor("C4", "a", "b", 1.66e-20).unwrap();
        var.resistor("Ry", "a", "b", 1.0).unwrap();
        let t = compare_tiers(&base, &var).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.only_in_base, vec!["Rx"]);
        assert_eq!(t.only_in_variant, vec!["Ry"]);
        let csv = t.to_csv();
        assert!(csv.contains("R1,21.62,68.18,3.15\n"));
        assert!(csv.contains(",0.07\n"));
        assert!(matches!(compare_tiers(&base, &Netlist::new()), Err(Error::Comparison(_))));
    }
}
