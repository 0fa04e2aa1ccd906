//! Steady-state heat conduction on a voxel grid.
//!
//! The solver works on the rise `θ = T − ambient`, so pinned faces at ambient
//! contribute nothing to the right-hand side and a zero source gives exactly
//! `T ≡ ambient`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fv::{default_max_iter, pcg, FaceBc, Network, SolveStats, Stencil, NM};
use crate::geometry::{channel_label, VoxelGrid, X};
use crate::materials::MaterialLibrary;
use crate::report::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcKind {
    Dirichlet(f64),
    Adiabatic,
    /// Film coefficient `h` in W/(m²·K) to a far-field temperature.
    Robin { h: f64, t_amb: f64 },
}

/// Boundary conditions on the six outer faces, ordered −x, +x, −y, +y, −z, +z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalBC {
    pub faces: [BcKind; 6],
    /// Reference temperature reported as the zero of ΔT, K.
    pub ambient: f64,
}

pub const FACE_NAMES: [&str; 6] = ["-x", "+x", "-y", "+y", "-z", "+z"];

impl ThermalBC {
    /// Substrate sink at the bottom, weak package egress at the top and
    /// adiabatic sides (a cell inside an array).
    pub fn package(ambient: f64, top_h: f64) -> Self {
        let mut faces = [BcKind::Adiabatic; 6];
        faces[4] = BcKind::Dirichlet(ambient);
        faces[5] = BcKind::Robin { h: top_h, t_amb: ambient };
        Self { faces, ambient }
    }

    /// Package conditions plus film contacts on the ±x faces.
    pub fn with_x_contacts(mut self, h: f64) -> Self {
        for f in [0, 1] {
            self.faces[f] = BcKind::Robin { h, t_amb: self.ambient };
        }
        self
    }

    pub fn uniform_dirichlet(t: f64) -> Self {
        Self {
            faces: [BcKind::Dirichlet(t); 6],
            ambient: t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.faces.iter().all(|f| matches!(f, BcKind::Adiabatic)) {
            return Err(Error::Singular("every boundary face is adiabatic".into()));
        }
        for (f, kind) in self.faces.iter().enumerate() {
            let ok = match *kind {
                BcKind::Dirichlet(t) => t > 0.0,
                BcKind::Adiabatic => true,
                BcKind::Robin { h, t_amb } => h > 0.0 && h.is_finite() && t_amb > 0.0,
            };
            if !ok {
                return Err(Error::Config(format!("invalid boundary on face {}", FACE_NAMES[f])));
            }
        }
        Ok(())
    }
}

impl Default for ThermalBC {
    fn default() -> Self {
        Self::package(300.0, 5e4)
    }
}

/// Volumetric power density per cell, W/m³.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatSource {
    pub q: Vec<f64>,
}

impl HeatSource {
    pub fn zeros(n: usize) -> Self {
        Self { q: vec![0.0; n] }
    }

    /// Σ q·V, W.
    pub fn total_power(&self, grid: &VoxelGrid) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(c, q)| q * grid.cell_volume(c) * NM * NM * NM)
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            q: self.q.iter().map(|q| q * factor).collect(),
        }
    }

    pub fn add(&self, other: &HeatSource) -> Self {
        Self {
            q: self.q.iter().zip(&other.q).map(|(a, b)| a + b).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureField {
    /// Per-cell temperature, K.
    pub t: Vec<f64>,
    pub ambient: f64,
}

impl TemperatureField {
    pub fn uniform(n: usize, t: f64) -> Self {
        Self { t: vec![t; n], ambient: t }
    }

    pub fn max(&self) -> f64 {
        self.t.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.t.iter().copied().fold(f64::MAX, f64::min)
    }

    /// Volume-weighted mean over `cells`.
    pub fn mean_over(&self, grid: &VoxelGrid, cells: &[usize]) -> f64 {
        let (mut tv, mut v) = (0.0, 0.0);
        for &c in cells {
            let vol = grid.cell_volume(c);
            tv += self.t[c] * vol;
            v += vol;
        }
        tv / v
    }
}

/// Peak rise above ambient, K.
pub fn delta_t_max(field: &TemperatureField) -> f64 {
    field.max() - field.ambient
}

/// Assembled heat-conduction problem.
#[derive(Debug, Clone)]
pub struct ThermalOperator {
    network: Network,
    stencil: Stencil,
    volumes_m3: Vec<f64>,
    ambient: f64,
}

/// Builds the 7-point finite-volume operator for `∇·(κ∇T) + q = 0`.
pub fn assemble(grid: &VoxelGrid, materials: &MaterialLibrary, bc: &ThermalBC) -> Result<ThermalOperator> {
    bc.validate()?;
    let kappa_of: Vec<f64> = grid
        .material_names()
        .iter()
        .map(|m| materials.get(m).map(|m| m.kappa))
        .collect::<Result<_>>()?;
    let kappa: Vec<f64> = grid.material_ids().iter().map(|&id| kappa_of[id as usize]).collect();
    let faces = bc.faces.map(|f| match f {
        BcKind::Adiabatic => FaceBc::Open,
        BcKind::Dirichlet(t) => FaceBc::pinned(t - bc.ambient),
        BcKind::Robin { h, t_amb } => FaceBc::Sink {
            h,
            value: t_amb - bc.ambient,
        },
    });
    let network = Network::assemble(grid, &kappa, &faces);
    let stencil = network.operator(&vec![false; grid.len()])?;
    let volumes_m3 = (0..grid.len()).map(|c| grid.cell_volume(c) * NM * NM * NM).collect();
    Ok(ThermalOperator {
        network,
        stencil,
        volumes_m3,
        ambient: bc.ambient,
    })
}

impl ThermalOperator {
    pub fn len(&self) -> usize {
        self.volumes_m3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes_m3.is_empty()
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    fn rhs(&self, source: &HeatSource) -> Result<Vec<f64>> {
        if source.q.len() != self.len() {
            return Err(Error::Validation("heat source does not match the grid".into()));
        }
        if let Some(bad) = source.q.iter().find(|q| !(**q >= 0.0 && q.is_finite())) {
            return Err(Error::Validation(format!("heat source density {bad} is not a finite non-negative value")));
        }
        let watts: Vec<f64> = source.q.iter().zip(&self.volumes_m3).map(|(q, v)| q * v).collect();
        Ok(self.network.rhs(&vec![false; self.len()], &[], Some(&watts)))
    }

    /// Solves from `guess` (ambient when `None`).
    pub fn solve_from(
        &self,
        source: &HeatSource,
        tol: f64,
        max_iter: Option<usize>,
        guess: Option<&TemperatureField>,
    ) -> Result<(TemperatureField, SolveStats)> {
        let b = self.rhs(source)?;
        let mut theta: Vec<f64> = match guess {
            Some(g) => g.t.iter().map(|t| t - self.ambient).collect(),
            None => vec![0.0; self.len()],
        };
        let budget = max_iter.unwrap_or_else(|| default_max_iter(self.len()));
        let stats = pcg(&self.stencil, &b, &mut theta, tol, budget)?;
        let t = theta.into_iter().map(|th| th + self.ambient).collect();
        Ok((
            TemperatureField {
                t,
                ambient: self.ambient,
            },
            stats,
        ))
    }

    /// Heat leaving through each outer face, W.
    pub fn face_outflow(&self, field: &TemperatureField) -> [f64; 6] {
        let theta: Vec<f64> = field.t.iter().map(|t| t - self.ambient).collect();
        self.network.face_outflow(&theta)
    }

    /// Compares boundary outflow with injected power.
    pub fn energy_balance(&self, field: &TemperatureField, source: &HeatSource) -> EnergyBalance {
        let injected: f64 = source.q.iter().zip(&self.volumes_m3).map(|(q, v)| q * v).sum();
        let outflow: f64 = self.face_outflow(field).iter().sum();
        let relative = if injected > 0.0 {
            (outflow - injected).abs() / injected
        } else {
            outflow.abs()
        };
        EnergyBalance {
            injected,
            outflow,
            relative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBalance {
    pub injected: f64,
    pub outflow: f64,
    pub relative: f64,
}

/// Solves with the default iteration budget.
pub fn solve_steady(
    op: &ThermalOperator,
    source: &HeatSource,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<TemperatureField> {
    op.solve_from(source, tol, max_iter, None).map(|(f, _)| f)
}

/// Channel cells of a device, given a tier name such as `t0` or the channel
/// label itself.
pub fn channel_cells(grid: &VoxelGrid, device: &str) -> Result<Vec<usize>> {
    let label = if device.ends_with(".channel") {
        device.to_string()
    } else if let Some(tier) = device.strip_prefix('t').and_then(|t| t.parse::<usize>().ok()) {
        channel_label(tier)
    } else {
        format!("{device}.channel")
    };
    let cells = grid.cells_labelled(&label);
    if cells.is_empty() {
        return Err(Error::Lookup(format!("no channel region `{label}` in the grid")));
    }
    Ok(cells)
}

/// Spreads `total_power` over a device channel with `concentration` of it in
/// the drain-side half (+x) and the rest in the source-side half.
pub fn drain_hotspot_source(grid: &VoxelGrid, device: &str, total_power: f64, concentration: f64) -> Result<HeatSource> {
    if !(total_power >= 0.0 && total_power.is_finite()) {
        return Err(Error::Validation(format!("power must be non-negative, got {total_power}")));
    }
    if !(concentration > 0.0 && concentration <= 1.0) {
        return Err(Error::Validation(format!("concentration must lie in (0, 1], got {concentration}")));
    }
    let cells = channel_cells(grid, device)?;
    let (lo, hi) = cells.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &c| {
        let p = grid.ijk(c);
        (lo.min(grid.coords(X)[p[X]]), hi.max(grid.coords(X)[p[X] + 1]))
    });
    let mid = 0.5 * (lo + hi);
    let (drain, rest): (Vec<usize>, Vec<usize>) = cells.iter().partition(|&&c| grid.center(c)[X] > mid);
    let volume = |set: &[usize]| set.iter().map(|&c| grid.cell_volume(c) * NM * NM * NM).sum::<f64>();
    let mut q = vec![0.0; grid.len()];
    let (v_drain, v_rest) = (volume(&drain), volume(&rest));
    let drain_share = if v_rest > 0.0 { concentration } else { 1.0 };
    for &c in &drain {
        q[c] = total_power * drain_share / v_drain;
    }
    if v_rest > 0.0 {
        for &c in &rest {
            q[c] = total_power * (1.0 - concentration) / v_rest;
        }
    }
    Ok(HeatSource { q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapFormat {
    Csv,
    VtkLegacy,
}

pub fn heatmap_csv(field: &TemperatureField, grid: &VoxelGrid) -> String {
    let mut out = String::with_capacity(grid.len() * 40);
    out.push_str("x_nm,y_nm,z_nm,T_K\n");
    for c in 0..grid.len() {
        let p = grid.center(c);
        let _ = writeln!(out, "{},{},{},{}", p[0], p[1], p[2], field.t[c]);
    }
    out
}

/// Legacy ASCII structured grid; points are cell centres.
pub fn heatmap_vtk(field: &TemperatureField, grid: &VoxelGrid) -> String {
    let [nx, ny, nz] = grid.dims();
    let n = grid.len();
    let mut out = String::with_capacity(n * 48);
    out.push_str("# vtk DataFile Version 3.0\ncfet temperature field\nASCII\nDATASET STRUCTURED_GRID\n");
    let _ = writeln!(out, "DIMENSIONS {nx} {ny} {nz}");
    let _ = writeln!(out, "POINTS {n} double");
    for c in 0..n {
        let p = grid.center(c);
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    let _ = writeln!(out, "POINT_DATA {n}\nSCALARS temperature double 1\nLOOKUP_TABLE default");
    for t in &field.t {
        let _ = writeln!(out, "{t}");
    }
    out
}

pub fn export_heatmap(field: &TemperatureField, grid: &VoxelGrid, path: &Path, format: HeatmapFormat) -> Result<()> {
    if field.t.len() != grid.len() {
        return Err(Error::Validation("temperature field does not match the grid".into()));
    }
    let text = match format {
        HeatmapFormat::Csv => heatmap_csv(field, grid),
        HeatmapFormat::VtkLegacy => heatmap_vtk(field, grid),
    };
    write_atomic(path, text.as_bytes())
}

/// Reads a heatmap CSV back as `(centre, T)` rows.
pub fn read_heatmap_csv(path: &Path) -> Result<Vec<([f64; 3], f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let parse_err = |reason: String| Error::Parse {
            file: file.clone(),
            line: n + 1,
            reason,
        };
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| parse_err(e.to_string())))
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", vals.len())));
        }
        rows.push(([vals[0], vals[1], vals[2]], vals[3]));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{voxelize, Aabb, Refinement, Region};
    use crate::materials::{default_library, Field};

    fn slab(n: usize, length: f64, material: &str) -> VoxelGrid {
        let r = Region::new(Aabb::new([0.0; 3], [length, 1.0, 1.0]), material);
        voxelize(&[r], length / n as f64, &Refinement::new().with(material, length / n as f64)).unwrap()
    }

    fn ends_pinned(t: f64) -> ThermalBC {
        let mut faces = [BcKind::Adiabatic; 6];
        faces[0] = BcKind::Dirichlet(t);
        faces[1] = BcKind::Dirichlet(t);
        ThermalBC { faces, ambient: t }
    }

    #[test]
    fn uniform_cube_rows_sum_to_zero() {
        let r = Region::new(Aabb::new([0.0; 3], [4.0; 3]), "sio2");
        let g = voxelize(&[r], 1.0, &Refinement::new()).unwrap();
        let op = assemble(&g, &default_library(), &ThermalBC::uniform_dirichlet(300.0)).unwrap();
        let st = op.stencil();
        let s = st.strides();
        for c in 0..g.len() {
            let p = g.ijk(c);
            if p.iter().any(|&i| i == 0 || i == 3) {
                continue;
            }
            let mut sum = st.diag()[c];
            for a in 0..3 {
                sum -= st.coupling(a, c) + st.coupling(a, c - s[a]);
            }
            assert!(sum.abs() < 1e-12 * st.diag()[c]);
        }
    }

    #[test]
    fn interface_conductance_is_harmonic() {
        // κ 1 and 4 across a 1 nm² face with 1 nm cells: 1.6 × the lower κ.
        let lib = default_library()
            .with_override("sio2", Field::Kappa, 1.0)
            .unwrap()
            .with_override("hfo2", Field::Kappa, 4.0)
            .unwrap();
        let regions = [
            Region::new(Aabb::new([0.0; 3], [1.0; 3]), "sio2"),
            Region::new(Aabb::new([1.0, 0.0, 0.0], [2.0, 1.0, 1.0]), "hfo2"),
        ];
        let g = voxelize(&regions, 1.0, &Refinement::new()).unwrap();
        let op = assemble(&g, &lib, &ThermalBC::uniform_dirichlet(300.0)).unwrap();
        let expected = 1.6 * 1.0 * NM;
        assert!((op.stencil().coupling(0, 0) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn all_adiabatic_is_singular() {
        let g = slab(4, 4.0, "sio2");
        let bc = ThermalBC {
            faces: [BcKind::Adiabatic; 6],
            ambient: 300.0,
        };
        assert!(matches!(assemble(&g, &default_library(), &bc), Err(Error::Singular(_))));
    }

    #[test]
    fn zero_source_is_ambient() {
        let g = slab(16, 16.0, "sio2");
        let op = assemble(&g, &default_library(), &ends_pinned(300.0)).unwrap();
        let f = solve_steady(&op, &HeatSource::zeros(g.len()), 1e-10, None).unwrap();
        assert!(f.t.iter().all(|&t| t == 300.0));
        assert_eq!(delta_t_max(&f), 0.0);
    }

    #[test]
    fn slab_matches_parabola() {
        let (n, len_nm, q) = (64, 64.0, 1e18);
        let g = slab(n, len_nm, "sio2");
        let kappa = default_library().get("sio2").unwrap().kappa;
        let op = assemble(&g, &default_library(), &ends_pinned(300.0)).unwrap();
        let src = HeatSource { q: vec![q; g.len()] };
        let f = solve_steady(&op, &src, 1e-12, None).unwrap();
        let l = len_nm * NM;
        let peak = q * l * l / (8.0 * kappa);
        for c in 0..g.len() {
            let x = g.center(c)[0] * NM;
            let exact = q * x * (l - x) / (2.0 * kappa);
            assert!(((f.t[c] - 300.0) - exact).abs() / exact < 0.01, "cell {c}");
        }
        assert!((delta_t_max(&f) - peak).abs() / peak < 0.01);
        assert!(op.energy_balance(&f, &src).relative < 1e-6);
    }

    #[test]
    fn hotspot_integrates_exactly() {
        let regions = crate::geometry::build_cfet_stack(
            &crate::geometry::DeviceSpec::default(),
            &crate::geometry::StackConfig::two_tier(),
        )
        .unwrap();
        let g = voxelize(&regions, 1.0, &Refinement::new().with("substrate", 25.0)).unwrap();
        let p = 10e-6;
        let src = drain_hotspot_source(&g, "t0", p, 0.7).unwrap();
        assert!((src.total_power(&g) - p).abs() < 1e-12 * p);
        let drain_half: f64 = (0..g.len())
            .filter(|&c| g.center(c)[X] > 0.0)
            .map(|c| src.q[c] * g.cell_volume(c) * NM * NM * NM)
            .sum();
        assert!((drain_half - 7e-6).abs() < 1e-12 * p);

        let all = drain_hotspot_source(&g, "t1", p, 1.0).unwrap();
        assert!((all.total_power(&g) - p).abs() < 1e-12 * p);
        assert!((0..g.len()).all(|c| all.q[c] == 0.0 || g.center(c)[X] > 0.0));

        assert!(drain_hotspot_source(&g, "t0", 0.0, 0.7).unwrap().q.iter().all(|&q| q == 0.0));
        assert!(matches!(drain_hotspot_source(&g, "t7", p, 0.7), Err(Error::Lookup(_))));
    }

    #[test]
    fn heatmap_round_trip() {
        let r = Region::new(Aabb::new([0.0; 3], [2.0; 3]), "sio2");
        let g = voxelize(&[r], 1.0, &Refinement::new()).unwrap();
        let field = TemperatureField {
            t: (0..8).map(|i| 300.0 + i as f64 / 3.0).collect(),
            ambient: 300.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("h.csv");
        let vtk = dir.path().join("h.vtk");
        export_heatmap(&field, &g, &csv, HeatmapFormat::Csv).unwrap();
        export_heatmap(&field, &g, &vtk, HeatmapFormat::VtkLegacy).unwrap();
        let rows = read_heatmap_csv(&csv).unwrap();
        assert_eq!(rows.len(), 8);
        for (c, (p, t)) in rows.iter().enumerate() {
            assert_eq!(*p, g.center(c));
            assert_eq!(*t, field.t[c]);
        }
        let text = std::fs::read_to_string(&vtk).unwrap();
        assert!(text.starts_with("# vtk DataFile Version"));
        assert!(text.contains("SCALARS temperature"));
        let bad = dir.path().join("missing").join("h.csv");
        assert!(matches!(export_heatmap(&field, &g, &bad, HeatmapFormat::Csv), Err(Error::Io { .. })));
    }
}
