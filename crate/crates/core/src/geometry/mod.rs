//! Parameterized box models of stacked nanosheet CFET devices and inverter
//! cells.
//!
//! Axes: `x` runs source → drain (drain on the +x side), `y` across the sheet
//! width, `z` upward from the substrate. All lengths are in nanometres.
//!
//! Tiers are numbered from the bottom. Consecutive tiers `(2k, 2k + 1)` form
//! complementary pair `k` and share one gate, which is bridged through the
//! vertical gap between them.

mod voxel;

pub use voxel::{locate_conductors, voxelize, Refinement, VoxelGrid};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    N,
    P,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::N => "n",
            Polarity::P => "p",
        })
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" | "nfet" => Ok(Polarity::N),
            "p" | "pfet" => Ok(Polarity::P),
            other => Err(Error::Config(format!("unknown polarity `{other}`"))),
        }
    }
}

/// Device dimensions and supply. Defaults follow the calibrated 2-tier CFET.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub gate_length: f64,
    pub sheet_width: f64,
    pub sheet_thickness: f64,
    /// Effective oxide thickness; modeled as a conformal oxide shell.
    pub eot: f64,
    pub spacer_thickness: f64,
    /// cm⁻³
    pub channel_doping: f64,
    /// cm⁻³
    pub sd_doping: f64,
    /// V
    pub vdd: f64,
    /// Source/drain epitaxy length beyond each spacer.
    pub sd_extension: f64,
    /// Gate metal thickness around the oxide shell.
    pub gate_metal_thickness: f64,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        Self {
            gate_length: 15.0,
            sheet_width: 16.0,
            sheet_thickness: 6.0,
            eot: 0.9,
            spacer_thickness: 5.0,
            channel_doping: 1e15,
            sd_doping: 1e20,
            vdd: 0.75,
            sd_extension: 10.0,
            gate_metal_thickness: 3.0,
        }
    }
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("gate_length", self.gate_length),
            ("sheet_width", self.sheet_width),
            ("sheet_thickness", self.sheet_thickness),
            ("eot", self.eot),
            ("spacer_thickness", self.spacer_thickness),
            ("sd_extension", self.sd_extension),
            ("gate_metal_thickness", self.gate_metal_thickness),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("device.{name} must be positive, got {v}")));
            }
        }
        if self.eot >= self.sheet_thickness {
            return Err(Error::Config(format!(
                "device.eot ({}) must be thinner than the sheet ({})",
                self.eot, self.sheet_thickness
            )));
        }
        if !(self.channel_doping > 0.0 && self.sd_doping > self.channel_doping) {
            return Err(Error::Config(
                "device.sd_doping must exceed a positive channel_doping".into(),
            ));
        }
        if !(self.vdd > 0.0) {
            return Err(Error::Config("device.vdd must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tier {
    pub polarity: Polarity,
    /// Vertical gap to the tier below (or to the substrate for tier 0), nm.
    pub gap_below: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackConfig {
    pub tiers: Vec<Tier>,
    pub substrate_thickness: f64,
    pub inter_tier_dielectric: String,
    /// Dielectric margin beside the gate stack along y.
    pub lateral_margin: f64,
    /// Dielectric cap above the top tier.
    pub cap_thickness: f64,
}

impl StackConfig {
    /// pFET below nFET, repeated once per pair.
    pub fn with_tier_count(tier_count: usize) -> Self {
        let tiers = (0..tier_count)
            .map(|k| Tier {
                polarity: if k % 2 == 0 { Polarity::P } else { Polarity::N },
                gap_below: 10.0,
            })
            .collect();
        Self {
            tiers,
            substrate_thickness: 200.0,
            inter_tier_dielectric: "sio2".into(),
            lateral_margin: 5.0,
            cap_thickness: 10.0,
        }
    }

    pub fn two_tier() -> Self {
        Self::with_tier_count(2)
    }

    pub fn four_tier() -> Self {
        Self::with_tier_count(4)
    }

    pub fn tier_count(&self) -> usize {
        self.tiers.len()
    }

    pub fn pair_count(&self) -> usize {
        self.tiers.len() / 2
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.tiers.len(), 2 | 4) {
            return Err(Error::Config(format!(
                "tier count must be 2 or 4, got {}",
                self.tiers.len()
            )));
        }
        for (k, t) in self.tiers.iter().enumerate() {
            if !(t.gap_below > 0.0 && t.gap_below.is_finite()) {
                return Err(Error::Config(format!("tier {k}: vertical gap must be positive")));
            }
        }
        for pair in self.tiers.chunks(2) {
            if pair[0].polarity == pair[1].polarity {
                return Err(Error::Config(
                    "each stacked pair needs one nFET and one pFET".into(),
                ));
            }
        }
        if !(self.substrate_thickness > 0.0 && self.lateral_margin >= 0.0 && self.cap_thickness > 0.0)
        {
            return Err(Error::Config("stack dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Tier index of the given polarity within pair `pair`.
    pub fn tier_of(&self, pair: usize, polarity: Polarity) -> usize {
        if self.tiers[2 * pair].polarity == polarity {
            2 * pair
        } else {
            2 * pair + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rail {
    Input,
    Output,
    Power,
    Ground,
}

impl Rail {
    pub const ALL: [Rail; 4] = [Rail::Input, Rail::Output, Rail::Power, Rail::Ground];

    pub fn name(self) -> &'static str {
        match self {
            Rail::Input => "Input",
            Rail::Output => "Output",
            Rail::Power => "Power",
            Rail::Ground => "Ground",
        }
    }

    /// Device terminal the rail lands on.
    pub fn terminal(self) -> &'static str {
        match self {
            Rail::Input => "Gate",
            Rail::Output => "Drain",
            Rail::Power => "PSource",
            Rail::Ground => "NSource",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeolSpec {
    /// Square via cross-section, nm².
    pub via_cross_section: f64,
    /// Heights of the horizontal metal levels above the top of the stack, nm.
    pub metal_level_heights: Vec<f64>,
    pub buried_power_rail: bool,
    pub conductor_material: String,
    /// Minimum spacing between a rail and an unrelated device region, nm.
    pub clearance: f64,
    /// Height of the buried rails, nm.
    pub bpr_height: f64,
}

impl Default for BeolSpec {
    fn default() -> Self {
        Self {
            via_cross_section: 36.0,
            metal_level_heights: vec![10.0, 26.0],
            buried_power_rail: true,
            conductor_material: "interconnect_metal".into(),
            clearance: 4.0,
            bpr_height: 12.0,
        }
    }
}

impl BeolSpec {
    pub fn via_width(&self) -> f64 {
        self.via_cross_section.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.via_cross_section > 0.0 && self.clearance > 0.0 && self.bpr_height > 0.0) {
            return Err(Error::Config("beol dimensions must be positive".into()));
        }
        let needed = if self.buried_power_rail { 1 } else { 2 };
        if self.metal_level_heights.len() < needed {
            return Err(Error::Config(format!(
                "beol.metal_level_heights needs at least {needed} level(s)"
            )));
        }
        let s = self.via_width();
        let mut prev = 0.0;
        for (i, &h) in self.metal_level_heights.iter().enumerate() {
            let min_gap = if i == 0 { 0.0 } else { s };
            if !(h > prev + min_gap) {
                return Err(Error::Config(
                    "beol.metal_level_heights must increase by more than the via width".into(),
                ));
            }
            prev = h;
        }
        Ok(())
    }
}

/// Axis-aligned box, nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn from_ranges(x: (f64, f64), y: (f64, f64), z: (f64, f64)) -> Self {
        Self::new([x.0, y.0, z.0], [x.1, y.1, z.1])
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn min_extent(&self) -> f64 {
        (0..3).map(|a| self.extent(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| self.extent(a)).product()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn overlap_volume(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|a| (self.max[a].min(other.max[a]) - self.min[a].max(other.min[a])).max(0.0))
            .product()
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelKind {
    /// Interconnect net participating in extraction (Input, Output, ...).
    Conductor,
    /// Named device part (channel, source, drain, gate).
    Part,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Label {
    pub name: String,
    pub kind: LabelKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub bbox: Aabb,
    pub material: String,
    pub label: Option<Label>,
}

impl Region {
    pub fn new(bbox: Aabb, material: &str) -> Self {
        Self {
            bbox,
            material: material.to_string(),
            label: None,
        }
    }

    pub fn conductor(mut self, name: &str) -> Self {
        self.label = Some(Label {
            name: name.to_string(),
            kind: LabelKind::Conductor,
        });
        self
    }

    pub fn part(mut self, name: &str) -> Self {
        self.label = Some(Label {
            name: name.to_string(),
            kind: LabelKind::Part,
        });
        self
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label.as_ref().map(|l| l.name.as_str())
    }

    /// Label if any, else material; used in error messages.
    pub fn describe(&self) -> String {
        match &self.label {
            Some(l) => format!("{} ({})", l.name, self.material),
            None => self.material.clone(),
        }
    }
}

/// One row per region: `label,material,x_min,x_max,y_min,y_max,z_min,z_max`
/// in nm. Unlabelled regions have an empty label.
pub fn regions_csv(regions: &[Region]) -> String {
    let mut out = String::from("label,material,x_min,x_max,y_min,y_max,z_min,z_max\n");
    for r in regions {
        out.push_str(r.label_name().unwrap_or(""));
        out.push(',');
        out.push_str(&r.material);
        for axis in 0..3 {
            out.push_str(&format!(",{:?},{:?}", r.bbox.min[axis], r.bbox.max[axis]));
        }
        out.push('\n');
    }
    out
}

/// Label of the substrate slab, handy as a coarse-mesh refinement key.
pub const SUBSTRATE: &str = "substrate";

pub fn channel_label(tier: usize) -> String {
    format!("t{tier}.channel")
}

pub fn source_label(tier: usize) -> String {
    format!("t{tier}.source")
}

pub fn drain_label(tier: usize) -> String {
    format!("t{tier}.drain")
}

pub fn gate_label(pair: usize) -> String {
    format!("pair{pair}.gate")
}

/// Derived coordinates of the stack, shared by the device and inverter
/// builders.
#[derive(Debug, Clone)]
pub struct StackLayout {
    pub x_gate: f64,
    pub x_spacer: f64,
    pub x_sd: f64,
    pub y_sheet: f64,
    pub y_oxide: f64,
    pub y_gate: f64,
    /// Half-height of one tier's gate stack.
    pub half_height: f64,
    pub tier_base: Vec<f64>,
    pub tier_center: Vec<f64>,
    pub stack_top: f64,
}

impl StackLayout {
    pub fn new(spec: &DeviceSpec, config: &StackConfig) -> Self {
        let x_gate = spec.gate_length / 2.0;
        let x_spacer = x_gate + spec.spacer_thickness;
        let x_sd = x_spacer + spec.sd_extension;
        let y_sheet = spec.sheet_width / 2.0;
        let y_oxide = y_sheet + spec.eot;
        let y_gate = y_oxide + spec.gate_metal_thickness;
        let half_height = spec.sheet_thickness / 2.0 + spec.eot + spec.gate_metal_thickness;
        let mut tier_base = Vec::with_capacity(config.tiers.len());
        let mut tier_center = Vec::with_capacity(config.tiers.len());
        let mut top = 0.0;
        for tier in &config.tiers {
            let base = top + tier.gap_below;
            tier_base.push(base);
            tier_center.push(base + half_height);
            top = base + 2.0 * half_height;
        }
        Self {
            x_gate,
            x_spacer,
            x_sd,
            y_sheet,
            y_oxide,
            y_gate,
            half_height,
            tier_base,
            tier_center,
            stack_top: top,
        }
    }

    pub fn tier_top(&self, tier: usize) -> f64 {
        self.tier_base[tier] + 2.0 * self.half_height
    }

    fn tier_z(&self, tier: usize) -> (f64, f64) {
        (self.tier_base[tier], self.tier_top(tier))
    }

    /// Regions of a single tier: spacers, gate stack, sheet, source/drain.
    fn tier_regions(&self, spec: &DeviceSpec, tier: usize, pair_gate: &str) -> Vec<Region> {
        let z = self.tier_z(tier);
        let zc = self.tier_center[tier];
        let ht = spec.sheet_thickness / 2.0;
        let yg = (-self.y_gate, self.y_gate);
        let ys = (-self.y_sheet, self.y_sheet);
        let zs = (zc - ht, zc + ht);
        vec![
            Region::new(Aabb::from_ranges((-self.x_spacer, -self.x_gate), yg, z), "spacer_dielectric"),
            Region::new(Aabb::from_ranges((self.x_gate, self.x_spacer), yg, z), "spacer_dielectric"),
            Region::new(Aabb::from_ranges((-self.x_gate, self.x_gate), yg, z), "gate_metal").part(pair_gate),
            Region::new(
                Aabb::from_ranges(
                    (-self.x_gate, self.x_gate),
                    (-self.y_oxide, self.y_oxide),
                    (zc - ht - spec.eot, zc + ht + spec.eot),
                ),
                "hfo2",
            ),
            Region::new(Aabb::from_ranges((-self.x_spacer, -self.x_gate), ys, zs), "silicon_nanosheet"),
            Region::new(Aabb::from_ranges((self.x_gate, self.x_spacer), ys, zs), "silicon_nanosheet"),
            Region::new(Aabb::from_ranges((-self.x_gate, self.x_gate), ys, zs), "silicon_nanosheet")
                .part(&channel_label(tier)),
            Region::new(Aabb::from_ranges((-self.x_sd, -self.x_spacer), yg, z), "silicon_bulk")
                .part(&source_label(tier)),
            Region::new(Aabb::from_ranges((self.x_spacer, self.x_sd), yg, z), "silicon_bulk")
                .part(&drain_label(tier)),
        ]
    }

    /// All device regions of every tier plus the shared-gate bridges.
    fn device_regions(&self, spec: &DeviceSpec, config: &StackConfig) -> Vec<Region> {
        let mut out = Vec::new();
        for pair in 0..config.pair_count() {
            let gate = gate_label(pair);
            let (lo, hi) = (2 * pair, 2 * pair + 1);
            out.extend(self.tier_regions(spec, lo, &gate));
            out.extend(self.tier_regions(spec, hi, &gate));
            out.push(
                Region::new(
                    Aabb::from_ranges(
                        (-self.x_gate, self.x_gate),
                        (-self.y_gate, self.y_gate),
                        (self.tier_top(lo), self.tier_base[hi]),
                    ),
                    "gate_metal",
                )
                .part(&gate),
            );
        }
        out
    }
}

/// Device-level model: substrate, inter-tier dielectric and every tier.
///
/// The domain ends at the outer source/drain faces along x, which are where
/// the device contacts sit.
pub fn build_cfet_stack(spec: &DeviceSpec, config: &StackConfig) -> Result<Vec<Region>> {
    spec.validate()?;
    config.validate()?;
    let lay = StackLayout::new(spec, config);
    let x = (-lay.x_sd, lay.x_sd);
    let y = (-(lay.y_gate + config.lateral_margin), lay.y_gate + config.lateral_margin);
    let mut regions = vec![
        Region::new(Aabb::from_ranges(x, y, (-config.substrate_thickness, 0.0)), "silicon_bulk")
            .part(SUBSTRATE),
        Region::new(
            Aabb::from_ranges(x, y, (0.0, lay.stack_top + config.cap_thickness)),
            &config.inter_tier_dielectric,
        ),
    ];
    regions.extend(lay.device_regions(spec, config));
    Ok(regions)
}

/// Which stacked pair of a multi-tier stack is wired as the inverter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Design {
    TwoTier,
    FourTierBottom,
    FourTierTop,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::TwoTier, Design::FourTierBottom, Design::FourTierTop];

    pub fn tier_count(self) -> usize {
        match self {
            Design::TwoTier => 2,
            _ => 4,
        }
    }

    pub fn wired_pair(self) -> usize {
        match self {
            Design::FourTierTop => 1,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Design::TwoTier => "2tier",
            Design::FourTierBottom => "4tier-bottom",
            Design::FourTierTop => "4tier-top",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2tier" => Ok(Design::TwoTier),
            "4tier-bottom" => Ok(Design::FourTierBottom),
            "4tier-top" => Ok(Design::FourTierTop),
            other => Err(Error::Config(format!(
                "unknown design `{other}` (expected 2tier, 4tier-bottom or 4tier-top)"
            ))),
        }
    }
}

/// An inverter cell with its routed rails.
#[derive(Debug, Clone)]
pub struct InverterCell {
    pub regions: Vec<Region>,
    pub wired_pair: usize,
    pub n_tier: usize,
    pub p_tier: usize,
    /// Device terminal name (Gate, Drain, NSource, PSource) → part labels.
    pub terminals: BTreeMap<String, Vec<String>>,
}

/// Builds the stack with Input/Output/Power/Ground rails landing on pair
/// `wired_pair`. The other pair of a 4-tier stack stays unwired.
///
/// Input and Output climb to the first metal level. Power and Ground come up
/// from buried rails in the substrate, or drop from the second metal level
/// when buried rails are disabled.
pub fn build_inverter_cell(
    spec: &DeviceSpec,
    config: &StackConfig,
    beol: &BeolSpec,
    wired_pair: usize,
) -> Result<InverterCell> {
    spec.validate()?;
    config.validate()?;
    beol.validate()?;
    if wired_pair >= config.pair_count() {
        return Err(Error::Config(format!(
            "pair {wired_pair} does not exist in a {}-tier stack",
            config.tier_count()
        )));
    }
    let lay = StackLayout::new(spec, config);
    let s = beol.via_width();
    let g = beol.clearance;
    if s > spec.sd_extension || s > spec.gate_length || s > 2.0 * lay.half_height {
        return Err(Error::Geometry(format!(
            "via width {s:.3} nm does not fit on the device terminals"
        )));
    }
    let metal = beol.conductor_material.as_str();

    let n_tier = config.tier_of(wired_pair, Polarity::N);
    let p_tier = config.tier_of(wired_pair, Polarity::P);
    let (lo, hi) = (2 * wired_pair, 2 * wired_pair + 1);

    let x_min = -(lay.x_sd + 2.0 * g + s);
    let x_max = lay.x_sd + 3.0 * g + s;
    let y_min = -(lay.y_gate + 2.0 * g + s);
    let y_max = lay.y_gate + 3.0 * g + s;
    let m0 = lay.stack_top + beol.metal_level_heights[0];
    let m_last = lay.stack_top + *beol.metal_level_heights.last().unwrap();
    let m1 = lay.stack_top + beol.metal_level_heights.get(1).copied().unwrap_or(beol.metal_level_heights[0]);
    let z_top = m_last + s + config.cap_thickness;
    let ild_floor = lay.stack_top + beol.metal_level_heights[0] / 2.0;

    let xd = (x_min, x_max);
    let yd = (y_min, y_max);
    let mut regions = vec![
        Region::new(Aabb::from_ranges(xd, yd, (-config.substrate_thickness, 0.0)), "silicon_bulk")
            .part(SUBSTRATE),
        Region::new(Aabb::from_ranges(xd, yd, (0.0, ild_floor)), &config.inter_tier_dielectric),
        Region::new(Aabb::from_ranges(xd, yd, (ild_floor, z_top)), "interlayer_dielectric"),
    ];
    let devices = lay.device_regions(spec, config);

    let half = s / 2.0;
    let mut rails: Vec<Region> = Vec::new();

    // Output: a stub off each drain end, one column, a line on the first level.
    let out_x = (lay.x_sd + g, lay.x_sd + g + s);
    for tier in [lo, hi] {
        let zc = lay.tier_center[tier];
        rails.push(
            Region::new(Aabb::from_ranges((lay.x_sd, lay.x_sd + g), (-half, half), (zc - half, zc + half)), metal)
                .conductor(Rail::Output.name()),
        );
    }
    rails.push(
        Region::new(
            Aabb::from_ranges(out_x, (-half, half), (lay.tier_center[lo] - half, m0 + s)),
            metal,
        )
        .conductor(Rail::Output.name()),
    );
    rails.push(
        Region::new(Aabb::from_ranges((out_x.0, x_max), (-half, half), (m0, m0 + s)), metal)
            .conductor(Rail::Output.name()),
    );

    // Input: stub off the +y face of the shared gate.
    let gate_mid = (lay.tier_base[lo] + lay.tier_top(hi)) / 2.0;
    let in_y = (lay.y_gate + g, lay.y_gate + g + s);
    rails.push(
        Region::new(
            Aabb::from_ranges((-half, half), (lay.y_gate, in_y.0), (gate_mid - half, gate_mid + half)),
            metal,
        )
        .conductor(Rail::Input.name()),
    );
    rails.push(
        Region::new(Aabb::from_ranges((-half, half), in_y, (gate_mid - half, m0 + s)), metal)
            .conductor(Rail::Input.name()),
    );
    rails.push(
        Region::new(Aabb::from_ranges((-half, half), (in_y.0, y_max), (m0, m0 + s)), metal)
            .conductor(Rail::Input.name()),
    );

    // Power: stub off the pFET source end, column beyond the source side.
    let pwr_x = (-(lay.x_sd + g + s), -(lay.x_sd + g));
    let zp = lay.tier_center[p_tier];
    rails.push(
        Region::new(Aabb::from_ranges((-(lay.x_sd + g), -lay.x_sd), (-half, half), (zp - half, zp + half)), metal)
            .conductor(Rail::Power.name()),
    );
    // Ground: stub off the -y face of the nFET source, column in the -y lane.
    let src_mid = -(lay.x_sd + lay.x_spacer) / 2.0;
    let gnd_x = (src_mid - half, src_mid + half);
    let gnd_y = (-(lay.y_gate + g + s), -(lay.y_gate + g));
    let zn = lay.tier_center[n_tier];
    rails.push(
        Region::new(Aabb::from_ranges(gnd_x, (-(lay.y_gate + g), -lay.y_gate), (zn - half, zn + half)), metal)
            .conductor(Rail::Ground.name()),
    );
    if beol.buried_power_rail {
        let bpr_z = (-beol.bpr_height, 0.0);
        rails.push(Region::new(Aabb::from_ranges(pwr_x, yd, bpr_z), metal).conductor(Rail::Power.name()));
        rails.push(
            Region::new(Aabb::from_ranges(pwr_x, (-half, half), (bpr_z.0, zp + half)), metal)
                .conductor(Rail::Power.name()),
        );
        rails.push(Region::new(Aabb::from_ranges(gnd_x, yd, bpr_z), metal).conductor(Rail::Ground.name()));
        rails.push(
            Region::new(Aabb::from_ranges(gnd_x, gnd_y, (bpr_z.0, zn + half)), metal)
                .conductor(Rail::Ground.name()),
        );
    } else {
        rails.push(
            Region::new(Aabb::from_ranges(pwr_x, (-half, half), (zp - half, m1 + s)), metal)
                .conductor(Rail::Power.name()),
        );
        rails.push(
            Region::new(Aabb::from_ranges((x_min, pwr_x.1), (-half, half), (m1, m1 + s)), metal)
                .conductor(Rail::Power.name()),
        );
        rails.push(
            Region::new(Aabb::from_ranges(gnd_x, gnd_y, (zn - half, m1 + s)), metal)
                .conductor(Rail::Ground.name()),
        );
        rails.push(
            Region::new(Aabb::from_ranges(gnd_x, (y_min, gnd_y.1), (m1, m1 + s)), metal)
                .conductor(Rail::Ground.name()),
        );
    }

    check_routing(&rails, &devices)?;

    regions.extend(devices);
    regions.extend(rails);

    let mut terminals = BTreeMap::new();
    terminals.insert("Gate".to_string(), vec![gate_label(wired_pair)]);
    terminals.insert("Drain".to_string(), vec![drain_label(n_tier), drain_label(p_tier)]);
    terminals.insert("NSource".to_string(), vec![source_label(n_tier)]);
    terminals.insert("PSource".to_string(), vec![source_label(p_tier)]);

    Ok(InverterCell {
        regions,
        wired_pair,
        n_tier,
        p_tier,
        terminals,
    })
}

/// Rails may touch device regions but never cut into them, and distinct rails
/// may not overlap each other.
fn check_routing(rails: &[Region], devices: &[Region]) -> Result<()> {
    const TOL: f64 = 1e-9;
    for r in rails {
        for d in devices {
            if r.bbox.overlap_volume(&d.bbox) > TOL {
                return Err(Error::Geometry(format!(
                    "rail routing blocked: {} overlaps {}",
                    r.describe(),
                    d.describe()
                )));
            }
        }
        for other in rails {
            if other.label_name() != r.label_name() && r.bbox.overlap_volume(&other.bbox) > TOL {
                return Err(Error::Geometry(format!(
                    "rail routing blocked: {} overlaps {}",
                    r.describe(),
                    other.describe()
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_dump_has_a_row_per_region() {
        let regions = build_cfet_stack(&DeviceSpec::default(), &StackConfig::two_tier()).unwrap();
        let csv = regions_csv(&regions);
        assert_eq!(csv.lines().count(), regions.len() + 1);
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 8));
        assert!(csv.contains("t0.channel,silicon_nanosheet,"));
    }

    fn stack_height(regions: &[Region]) -> f64 {
        regions
            .iter()
            .filter(|r| r.label.as_ref().is_some_and(|l| l.kind == LabelKind::Part))
            .map(|r| r.bbox.max[Z])
            .fold(f64::MIN, f64::max)
    }

    #[test]
    fn two_tier_has_two_wrapped_channels() {
        let spec = DeviceSpec::default();
        let regions = build_cfet_stack(&spec, &StackConfig::two_tier()).unwrap();
        let channels: Vec<_> = regions
            .iter()
            .filter(|r| r.label_name().is_some_and(|n| n.ends_with(".channel")))
            .collect();
        assert_eq!(channels.len(), 2);
        for ch in &channels {
            assert!((ch.bbox.extent(Z) - 6.0).abs() < 1e-12);
            // Gate stack encloses the channel on all four sides.
            let wrapped = regions.iter().any(|r| {
                r.material == "hfo2"
                    && r.bbox.min[Y] < ch.bbox.min[Y]
                    && r.bbox.max[Y] > ch.bbox.max[Y]
                    && r.bbox.min[Z] < ch.bbox.min[Z]
                    && r.bbox.max[Z] > ch.bbox.max[Z]
            });
            assert!(wrapped);
        }
        // pFET below nFET.
        let z_of = |t: usize| {
            channels
                .iter()
                .find(|r| r.label_name() == Some(channel_label(t).as_str()))
                .unwrap()
                .bbox
                .min[Z]
        };
        assert!(z_of(0) < z_of(1));
        assert_eq!(StackConfig::two_tier().tiers[0].polarity, Polarity::P);
    }

    #[test]
    fn four_tier_is_taller() {
        let spec = DeviceSpec::default();
        let two = build_cfet_stack(&spec, &StackConfig::two_tier()).unwrap();
        let four = build_cfet_stack(&spec, &StackConfig::four_tier()).unwrap();
        assert!(stack_height(&four) > stack_height(&two));
    }

    #[test]
    fn invalid_tier_count() {
        let spec = DeviceSpec::default();
        let cfg = StackConfig::with_tier_count(3);
        assert!(matches!(build_cfet_stack(&spec, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn device_spec_invariants() {
        let mut spec = DeviceSpec::default();
        spec.eot = 7.0;
        assert!(spec.validate().is_err());
        let mut spec = DeviceSpec::default();
        spec.sd_doping = 1e14;
        assert!(spec.validate().is_err());
        let mut spec = DeviceSpec::default();
        spec.spacer_thickness = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn inverter_has_four_rails() {
        let cell = build_inverter_cell(
            &DeviceSpec::default(),
            &StackConfig::two_tier(),
            &BeolSpec::default(),
            0,
        )
        .unwrap();
        let mut names: Vec<_> = cell
            .regions
            .iter()
            .filter_map(|r| r.label.as_ref())
            .filter(|l| l.kind == LabelKind::Conductor)
            .map(|l| l.name.clone())
            .collect();
        names.sort();
        names.dedup();
        assert_eq!(names, ["Ground", "Input", "Output", "Power"]);
    }

    fn via_length(cell: &InverterCell, rail: Rail) -> f64 {
        cell.regions
            .iter()
            .filter(|r| r.label_name() == Some(rail.name()))
            .map(|r| r.bbox.extent(Z))
            .fold(0.0, f64::max)
    }

    #[test]
    fn top_variant_has_longer_supply_vias() {
        let spec = DeviceSpec::default();
        let cfg = StackConfig::four_tier();
        let beol = BeolSpec::default();
        let bottom = build_inverter_cell(&spec, &cfg, &beol, 0).unwrap();
        let top = build_inverter_cell(&spec, &cfg, &beol, 1).unwrap();
        for rail in [Rail::Power, Rail::Ground] {
            assert!(via_length(&top, rail) > via_length(&bottom, rail));
        }
        assert!(build_inverter_cell(&spec, &cfg, &beol, 2).is_err());
    }

    #[test]
    fn buried_rails_sit_below_devices() {
        let cell = build_inverter_cell(
            &DeviceSpec::default(),
            &StackConfig::two_tier(),
            &BeolSpec::default(),
            0,
        )
        .unwrap();
        for rail in [Rail::Power, Rail::Ground] {
            let lowest = cell
                .regions
                .iter()
                .filter(|r| r.label_name() == Some(rail.name()))
                .map(|r| r.bbox.min[Z])
                .fold(f64::MAX, f64::min);
            assert!(lowest < 0.0);
        }
    }

    #[test]
    fn frontside_power_routing_is_clean() {
        let beol = BeolSpec {
            buried_power_rail: false,
            ..BeolSpec::default()
        };
        for pair in 0..2 {
            build_inverter_cell(&DeviceSpec::default(), &StackConfig::four_tier(), &beol, pair).unwrap();
        }
    }

    #[test]
    fn oversized_via_is_rejected() {
        let beol = BeolSpec {
            via_cross_section: 400.0,
            ..BeolSpec::default()
        };
        assert!(build_inverter_cell(&DeviceSpec::default(), &StackConfig::two_tier(), &beol, 0).is_err());
    }

    #[test]
    fn routing_overlap_is_reported() {
        let dev = Region::new(Aabb::new([0.0; 3], [10.0; 3]), "silicon_bulk").part("t0.drain");
        let rail = Region::new(Aabb::new([5.0; 3], [15.0; 3]), "interconnect_metal").conductor("Output");
        assert!(matches!(check_routing(&[rail], &[dev]), Err(Error::Geometry(_))));
    }
}
