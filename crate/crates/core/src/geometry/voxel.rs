use std::collections::{BTreeMap, VecDeque};

use super::{Aabb, Label, LabelKind, Region, X, Y, Z};
use crate::error::{Error, Result};

/// Two coordinates closer than this (nm) are the same grid plane.
const SNAP: f64 = 1e-6;
const NO_LABEL: u16 = u16::MAX;

/// Per-region cell size overrides, keyed by label name or material id.
/// A label match takes precedence over a material match.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Refinement {
    sizes: BTreeMap<String, f64>,
}

impl Refinement {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, size: f64) -> Self {
        self.sizes.insert(key.to_string(), size);
        self
    }

    pub fn insert(&mut self, key: &str, size: f64) {
        self.sizes.insert(key.to_string(), size);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.sizes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn size_for(&self, region: &Region, default: f64) -> f64 {
        region
            .label_name()
            .and_then(|l| self.sizes.get(l))
            .or_else(|| self.sizes.get(&region.material))
            .copied()
            .unwrap_or(default)
    }
}

/// Structured, material-labelled voxel grid. Cells are indexed
/// `i + nx * (j + ny * k)` with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    /// Grid plane coordinates per axis, nm; `n + 1` planes for `n` cells.
    coords: [Vec<f64>; 3],
    materials: Vec<String>,
    cell_material: Vec<u16>,
    labels: Vec<Label>,
    cell_label: Vec<u16>,
}

impl VoxelGrid {
    pub fn dims(&self) -> [usize; 3] {
        [self.coords[X].len() - 1, self.coords[Y].len() - 1, self.coords[Z].len() - 1]
    }

    pub fn len(&self) -> usize {
        self.cell_material.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_material.is_empty()
    }

    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    pub fn bounds(&self) -> Aabb {
        let first = |a: usize| self.coords[a][0];
        let last = |a: usize| *self.coords[a].last().unwrap();
        Aabb::new([first(X), first(Y), first(Z)], [last(X), last(Y), last(Z)])
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.dims();
        i + nx * (j + ny * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims();
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Cell width along `axis` at position `i`, nm.
    #[inline]
    pub fn width(&self, axis: usize, i: usize) -> f64 {
        self.coords[axis][i + 1] - self.coords[axis][i]
    }

    pub fn center(&self, idx: usize) -> [f64; 3] {
        let p = self.ijk(idx);
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = 0.5 * (self.coords[a][p[a]] + self.coords[a][p[a] + 1]);
        }
        c
    }

    /// Cell volume, nm³.
    pub fn cell_volume(&self, idx: usize) -> f64 {
        let p = self.ijk(idx);
        (0..3).map(|a| self.width(a, p[a])).product()
    }

    pub fn material_names(&self) -> &[String] {
        &self.materials
    }

    /// Index into [`material_names`](Self::material_names) for each cell.
    pub fn material_ids(&self) -> &[u16] {
        &self.cell_material
    }

    pub fn material(&self, idx: usize) -> &str {
        &self.materials[self.cell_material[idx] as usize]
    }

    pub fn label(&self, idx: usize) -> Option<&Label> {
        match self.cell_label[idx] {
            NO_LABEL => None,
            l => Some(&self.labels[l as usize]),
        }
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// All cells carrying the given label.
    pub fn cells_labelled(&self, name: &str) -> Vec<usize> {
        let Some(id) = self.labels.iter().position(|l| l.name == name) else {
            return Vec::new();
        };
        let id = id as u16;
        (0..self.len()).filter(|&c| self.cell_label[c] == id).collect()
    }

    pub fn cells_of_material(&self, name: &str) -> Vec<usize> {
        let Some(id) = self.materials.iter().position(|m| m == name) else {
            return Vec::new();
        };
        let id = id as u16;
        (0..self.len()).filter(|&c| self.cell_material[c] == id).collect()
    }

    /// Summed cell volume of a material, nm³.
    pub fn material_volume(&self, name: &str) -> f64 {
        self.cells_of_material(name).iter().map(|&c| self.cell_volume(c)).sum()
    }

    /// Overwrites one cell. Used to build defective fixtures.
    pub fn set_cell(&mut self, idx: usize, material: &str, label: Option<Label>) {
        self.cell_material[idx] = intern(&mut self.materials, material.to_string());
        self.cell_label[idx] = match label {
            Some(l) => intern(&mut self.labels, l),
            None => NO_LABEL,
        };
    }

    /// Face neighbours of a cell, in axis order (−x, +x, −y, +y, −z, +z).
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let p = self.ijk(idx);
        let d = self.dims();
        (0..3).flat_map(move |a| {
            let lo = (p[a] > 0).then(|| {
                let mut q = p;
                q[a] -= 1;
                self.index(q[0], q[1], q[2])
            });
            let hi = (p[a] + 1 < d[a]).then(|| {
                let mut q = p;
                q[a] += 1;
                self.index(q[0], q[1], q[2])
            });
            lo.into_iter().chain(hi)
        })
    }
}

fn intern<T: PartialEq>(palette: &mut Vec<T>, value: T) -> u16 {
    match palette.iter().position(|v| *v == value) {
        Some(i) => i as u16,
        None => {
            palette.push(value);
            (palette.len() - 1) as u16
        }
    }
}

fn snap_sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for v in values {
        if out.last().is_none_or(|&l| v - l > SNAP) {
            out.push(v);
        }
    }
    out
}

fn plane_index(planes: &[f64], v: f64) -> usize {
    let i = planes.partition_point(|&p| p < v - SNAP);
    debug_assert!((planes[i] - v).abs() <= SNAP);
    i
}

/// Rasterizes `regions` onto a grid with a plane at every region boundary.
///
/// Each interval between boundaries is split uniformly at the finest cell
/// size requested by any region covering it. Later regions overwrite earlier
/// ones where they overlap.
pub fn voxelize(regions: &[Region], resolution: f64, refinement: &Refinement) -> Result<VoxelGrid> {
    if regions.is_empty() {
        return Err(Error::Geometry("no regions to voxelize".into()));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::Geometry(format!("resolution must be positive, got {resolution}")));
    }
    let sizes: Vec<f64> = regions.iter().map(|r| refinement.size_for(r, resolution)).collect();
    for (r, &size) in regions.iter().zip(&sizes) {
        if (0..3).any(|a| !(r.bbox.extent(a) > 0.0)) {
            return Err(Error::Geometry(format!("region {} has a degenerate box", r.describe())));
        }
        if !(size > 0.0) {
            return Err(Error::Geometry(format!("cell size for {} must be positive", r.describe())));
        }
        let thickness = r.bbox.min_extent();
        if thickness + SNAP < size {
            return Err(Error::Refinement {
                region: r.describe(),
                thickness,
                cell: size,
            });
        }
    }

    let mut coords: [Vec<f64>; 3] = Default::default();
    for axis in 0..3 {
        let breaks = snap_sorted(regions.iter().flat_map(|r| [r.bbox.min[axis], r.bbox.max[axis]]).collect());
        let mut planes = vec![breaks[0]];
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let size = regions
                .iter()
                .zip(&sizes)
                .filter(|(r, _)| r.bbox.min[axis] <= a + SNAP && r.bbox.max[axis] >= b - SNAP)
                .map(|(_, &s)| s)
                .reduce(f64::min)
                .unwrap_or(resolution);
            let n = (((b - a) / size) - 1e-9).ceil().max(1.0) as usize;
            for m in 1..n {
                planes.push(a + (b - a) * m as f64 / n as f64);
            }
            planes.push(b);
        }
        coords[axis] = planes;
    }

    let dims = [coords[X].len() - 1, coords[Y].len() - 1, coords[Z].len() - 1];
    let count = dims[0] * dims[1] * dims[2];
    let mut materials = Vec::new();
    let mut labels = Vec::new();
    let mut cell_material = vec![u16::MAX; count];
    let mut cell_label = vec![NO_LABEL; count];
    for r in regions {
        let m = intern(&mut materials, r.material.clone());
        let l = match &r.label {
            Some(l) => intern(&mut labels, l.clone()),
            None => NO_LABEL,
        };
        let range = |a: usize| plane_index(&coords[a], r.bbox.min[a])..plane_index(&coords[a], r.bbox.max[a]);
        for k in range(Z) {
            for j in range(Y) {
                let row = dims[0] * (j + dims[1] * k);
                for i in range(X) {
                    cell_material[row + i] = m;
                    cell_label[row + i] = l;
                }
            }
        }
    }
    if let Some(hole) = cell_material.iter().position(|&m| m == u16::MAX) {
        let p = [hole % dims[0], (hole / dims[0]) % dims[1], hole / (dims[0] * dims[1])];
        let at: Vec<f64> = (0..3).map(|a| 0.5 * (coords[a][p[a]] + coords[a][p[a] + 1])).collect();
        return Err(Error::Geometry(format!(
            "no region covers the point ({:.3}, {:.3}, {:.3}) nm",
            at[0], at[1], at[2]
        )));
    }
    Ok(VoxelGrid {
        coords,
        materials,
        cell_material,
        labels,
        cell_label,
    })
}

/// Maps each conductor label to its cells, checking that every conductor is
/// one face-connected piece. Device-part labels are ignored.
pub fn locate_conductors(grid: &VoxelGrid) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut out = BTreeMap::new();
    for (id, label) in grid.labels.iter().enumerate() {
        if label.kind != LabelKind::Conductor {
            continue;
        }
        let id = id as u16;
        let cells: Vec<usize> = (0..grid.len()).filter(|&c| grid.cell_label[c] == id).collect();
        if cells.is_empty() {
            continue;
        }
        let mut seen = vec![false; grid.len()];
        let mut queue = VecDeque::from([cells[0]]);
        seen[cells[0]] = true;
        let mut reached = 0;
        while let Some(c) = queue.pop_front() {
            reached += 1;
            for n in grid.neighbours(c) {
                if !seen[n] && grid.cell_label[n] == id {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if reached != cells.len() {
            return Err(Error::Integrity(label.name.clone()));
        }
        out.insert(label.name.clone(), cells);
    }
    Ok(out)
}
