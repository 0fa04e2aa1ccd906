//! Run configuration: INI sections with typed, unit-aware values.
//!
//! ```text
//! [device]      geometry of one transistor, supply, calibration targets and
//!               temperature coefficients
//! [stack]       substrate, inter-tier gap and dielectric, margins
//! [beol]        via size, metal levels, buried power rails
//! [mesh]        cell sizes and solver tolerances
//! [thermal]     ambient, boundary films, self-heating loop
//! [experiment]  inverter stimulus, time step, delay target, netlist floor
//! [materials]   file = <path of an override file, relative to this file>
//! [materials.<name>]  role, kappa, eps_r, rho_e
//! ```
//!
//! Numbers may carry a unit: an optional SI prefix (`f p n u µ m k M G`)
//! followed by the symbol of the quantity, as in `15nm`, `0.75V`, `40uA`,
//! `1ps`, `30uW`. A bare number is read in the unit documented for its key.
//! Booleans are `true`/`false`, lists are comma separated. Unknown sections
//! and keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;

use crate::device::SheOptions;
use crate::error::{Error, Result};
use crate::geometry::{BeolSpec, DeviceSpec, StackConfig};
use crate::materials::{Field, Material, MaterialLibrary, Role};
use crate::parasitics::DEFAULT_FLOOR;

#[derive(Debug, Clone, PartialEq)]
pub struct StackOptions {
    /// Tier count of `thermal` runs; inverter designs fix their own.
    pub tiers: usize,
    pub substrate_thickness: f64,
    pub tier_gap: f64,
    pub inter_tier_dielectric: String,
    pub lateral_margin: f64,
    pub cap_thickness: f64,
}

impl Default for StackOptions {
    fn default() -> Self {
        let base = StackConfig::two_tier();
        Self {
            tiers: 2,
            substrate_thickness: base.substrate_thickness,
            tier_gap: base.tiers[1].gap_below,
            inter_tier_dielectric: base.inter_tier_dielectric,
            lateral_margin: base.lateral_margin,
            cap_thickness: base.cap_thickness,
        }
    }
}

impl StackOptions {
    pub fn stack(&self, tier_count: usize) -> StackConfig {
        let mut s = StackConfig::with_tier_count(tier_count);
        for t in s.tiers.iter_mut().skip(1) {
            t.gap_below = self.tier_gap;
        }
        s.substrate_thickness = self.substrate_thickness;
        s.inter_tier_dielectric = self.inter_tier_dielectric.clone();
        s.lateral_margin = self.lateral_margin;
        s.cap_thickness = self.cap_thickness;
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshOptions {
    /// Default cell size, nm.
    pub resolution: f64,
    /// Cell size inside the substrate, nm.
    pub substrate_cell: f64,
    pub thermal_tol: f64,
    pub extraction_tol: f64,
    pub grounded_shield: bool,
    pub floating_metal_eps: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            resolution: 2.0,
            substrate_cell: 20.0,
            thermal_tol: 1e-8,
            extraction_tol: 1e-9,
            grounded_shield: false,
            floating_metal_eps: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalOptions {
    pub ambient: f64,
    /// Film coefficient of the top face, W/(m²·K).
    pub top_h: f64,
    /// Film coefficient of the source/drain contact faces, W/(m²·K).
    pub contact_h: f64,
    /// Power for `thermal` runs, W. Defaults to `I_ON · vdd` of the device.
    pub power: Option<f64>,
    pub she: SheOptions,
}

impl Default for ThermalOptions {
    fn default() -> Self {
        Self {
            ambient: 300.0,
            top_h: 5e4,
            contact_h: 1e9,
            power: None,
            she: SheOptions::default(),
        }
    }
}

/// Calibration targets and temperature coefficients of the two devices.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTargets {
    pub vth_n: f64,
    pub vth_p: f64,
    /// Subthreshold swing, mV/dec.
    pub ss: f64,
    pub ioff: f64,
    pub ion_n: f64,
    pub ion_p: f64,
    pub alpha_mu_n: f64,
    pub alpha_mu_p: f64,
    pub alpha_vsat: f64,
    /// Threshold magnitude drop per kelvin, V/K.
    pub k_vth: f64,
    /// Drive of the top pair of a 4-tier stack relative to the bottom pair.
    pub top_ion_scale_n: f64,
    pub top_ion_scale_p: f64,
}

impl Default for DeviceTargets {
    fn default() -> Self {
        Self {
            vth_n: 0.25,
            vth_p: -0.25,
            ss: 70.0,
            ioff: 1e-10,
            ion_n: 40e-6,
            ion_p: 47e-6,
            alpha_mu_n: 1.5,
            alpha_mu_p: 1.3,
            alpha_vsat: 0.4,
            k_vth: 0.7e-3,
            top_ion_scale_n: 1.0,
            top_ion_scale_p: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub edge: f64,
    pub period: f64,
    pub lead: f64,
    pub dt: f64,
    /// Parasitic-free delay the intrinsic capacitances are fitted to, s.
    /// `None` keeps the geometric capacitances.
    pub target_tp: Option<f64>,
    /// Output load, F. Defaults to one fanout inverter.
    pub load_c: Option<f64>,
    pub floor: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            edge: 1e-12,
            period: 20e-12,
            lead: 2e-12,
            dt: 5e-15,
            target_tp: Some(1e-12),
            load_c: None,
            floor: DEFAULT_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub device: DeviceSpec,
    pub targets: DeviceTargets,
    pub stack: StackOptions,
    pub beol: BeolSpec,
    pub mesh: MeshOptions,
    pub materials: MaterialLibrary,
    pub thermal: ThermalOptions,
    pub experiment: ExperimentOptions,
}

/// Physical dimension of a key and the unit its bare numbers use.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Unit {
    /// Symbol and the power of ten from SI to the stored unit.
    Si(&'static str, i32),
    /// Fixed spelling accepted besides bare numbers.
    Fixed(&'static str),
    Plain,
}

const NM: Unit = Unit::Si("m", 9);
const VOLT: Unit = Unit::Si("V", 0);
const AMP: Unit = Unit::Si("A", 0);
const SEC: Unit = Unit::Si("s", 0);
const FARAD: Unit = Unit::Si("F", 0);
const WATT: Unit = Unit::Si("W", 0);
const KELVIN: Unit = Unit::Fixed("K");
const FILM: Unit = Unit::Fixed("W/m2K");
const DOPING: Unit = Unit::Fixed("cm-3");
const AREA: Unit = Unit::Fixed("nm2");
const SWING: Unit = Unit::Fixed("mV/dec");
const PER_K: Unit = Unit::Fixed("V/K");

fn prefix(p: &str) -> Option<i32> {
    Some(match p {
        "" => 0,
        "f" => -15,
        "p" => -12,
        "n" => -9,
        "u" | "µ" => -6,
        "m" => -3,
        "k" => 3,
        "M" => 6,
        "G" => 9,
        _ => return None,
    })
}

/// Splits `15nm` into `15` and `nm`.
fn split_number(text: &str) -> (&str, &str) {
    let b = text.as_bytes();
    let mut end = 0;
    while end < b.len() {
        let c = b[end] as char;
        let exponent = (c == 'e' || c == 'E')
            && end > 0
            && b.get(end + 1).is_some_and(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+');
        if c.is_ascii_digit() || c == '.' || ((c == '-' || c == '+') && (end == 0 || matches!(b[end - 1], b'e' | b'E'))) || exponent {
            end += 1;
        } else {
            break;
        }
    }
    (&text[..end], text[end..].trim())
}

fn quantity(text: &str, unit: Unit) -> std::result::Result<f64, String> {
    let (number, suffix) = split_number(text.trim());
    let value: f64 = number.parse().map_err(|_| format!("`{text}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    if suffix.is_empty() {
        return Ok(value);
    }
    match unit {
        Unit::Si(symbol, to_stored) => {
            let p = suffix
                .strip_suffix(symbol)
                .and_then(prefix)
                .ok_or_else(|| format!("unit `{suffix}` does not fit here (expected a multiple of {symbol})"))?;
            // Whole powers of ten so that `15nm` stays exactly 15.
            let shift = p + to_stored;
            Ok(if shift >= 0 { value * 10f64.powi(shift) } else { value / 10f64.powi(-shift) })
        }
        Unit::Fixed(spelling) if suffix == spelling => Ok(value),
        Unit::Fixed(spelling) => Err(format!("unit `{suffix}` does not fit here (expected {spelling})")),
        Unit::Plain => Err(format!("`{text}` takes no unit")),
    }
}

fn boolean(text: &str) -> std::result::Result<bool, String> {
    match text.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("`{other}` is not true or false")),
    }
}

/// Line of `key` in `section`, for error messages.
fn line_of(text: &str, section: Option<&str>, key: Option<&str>) -> usize {
    let mut current: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            if key.is_none() && current.as_deref() == section {
                return n + 1;
            }
            continue;
        }
        if let (Some(k), true) = (key, current.as_deref() == section) {
            if line.split(['=', ':']).next().map(str::trim) == Some(k) {
                return n + 1;
            }
        }
    }
    0
}

struct Reader<'a> {
    file: &'a str,
    text: &'a str,
}

impl Reader<'_> {
    fn err(&self, section: Option<&str>, key: Option<&str>, reason: String) -> Error {
        let line = line_of(self.text, section, key);
        let place = match (section, key) {
            (Some(s), Some(k)) => format!("[{s}] {k}: "),
            (Some(s), None) => format!("[{s}]: "),
            _ => String::new(),
        };
        Error::Config(format!("{}:{line}: {place}{reason}", self.file))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), &base)
    }

    /// Parses `text`; `file` names it in errors and `base_dir` anchors
    /// relative paths.
    pub fn parse(text: &str, file: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(text, file, base_dir)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, text: &str, file: &str, base_dir: &Path) -> Result<()> {
        let rd = Reader { file, text };
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Config(format!("{file}:{}: {}", e.line, e.msg)))?;
        let mut overrides: Vec<(String, BTreeMap<String, String>)> = Vec::new();
        let mut override_file: Option<PathBuf> = None;
        for (section, props) in ini.iter() {
            let mut seen = BTreeMap::new();
            for (k, v) in props.iter() {
                if seen.insert(k.to_string(), v.to_string()).is_some() {
                    return Err(rd.err(section, Some(k), "key given twice".into()));
                }
            }
            let Some(section) = section else {
                if let Some(k) = seen.keys().next() {
                    return Err(rd.err(None, Some(k), format!("key `{k}` outside of any section")));
                }
                continue;
            };
            if let Some(name) = section.strip_prefix("materials.") {
                overrides.push((name.to_string(), seen));
                continue;
            }
            if section == "materials" {
                for (k, v) in &seen {
                    if k != "file" {
                        return Err(rd.err(Some(section), Some(k), "unknown key (expected `file`)".into()));
                    }
                    let path = base_dir.join(v.trim());
                    if !path.is_file() {
                        return Err(rd.err(Some(section), Some(k), format!("file {} does not exist", path.display())));
                    }
                    override_file = Some(path);
                }
                continue;
            }
            for (k, v) in &seen {
                self.set(section, k, v)
                    .map_err(|reason| rd.err(Some(section), Some(k), reason))?;
            }
        }
        if let Some(path) = override_file {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let ini = Ini::load_from_str_noescape(&text)
                .map_err(|e| Error::Config(format!("{}:{}: {}", path.display(), e.line, e.msg)))?;
            let sub = Reader {
                file: &path.display().to_string(),
                text: &text,
            };
            for (section, props) in ini.iter() {
                let name = match section {
                    None if props.is_empty() => continue,
                    Some(s) => s.strip_prefix("materials."),
                    None => None,
                };
                let Some(name) = name else {
                    return Err(sub.err(section, None, "override files hold only [materials.<name>] sections".into()));
                };
                let map = props.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
                self.materials = apply_material(&self.materials, name, &map)
                    .map_err(|reason| sub.err(section, None, reason))?;
            }
        }
        // Inline sections come last so they win over the file.
        for (name, map) in overrides {
            let section = format!("materials.{name}");
            self.materials =
                apply_material(&self.materials, &name, &map).map_err(|reason| rd.err(Some(&section), None, reason))?;
        }
        Ok(())
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
        let q = |unit| quantity(value, unit);
        let d = &mut self.device;
        let t = &mut self.targets;
        let s = &mut self.stack;
        let b = &mut self.beol;
        let m = &mut self.mesh;
        let th = &mut self.thermal;
        let e = &mut self.experiment;
        match (section, key) {
            ("device", "gate_length") => d.gate_length = q(NM)?,
            ("device", "sheet_width") => d.sheet_width = q(NM)?,
            ("device", "sheet_thickness") => d.sheet_thickness = q(NM)?,
            ("device", "eot") => d.eot = q(NM)?,
            ("device", "spacer_thickness") => d.spacer_thickness = q(NM)?,
            ("device", "sd_extension") => d.sd_extension = q(NM)?,
            ("device", "gate_metal_thickness") => d.gate_metal_thickness = q(NM)?,
            ("device", "channel_doping") => d.channel_doping = q(DOPING)?,
            ("device", "sd_doping") => d.sd_doping = q(DOPING)?,
            ("device", "vdd") => d.vdd = q(VOLT)?,
            ("device", "vth_n") => t.vth_n = q(VOLT)?,
            ("device", "vth_p") => t.vth_p = q(VOLT)?,
            ("device", "ss") => t.ss = q(SWING)?,
            ("device", "ioff") => t.ioff = q(AMP)?,
            ("device", "ion_n") => t.ion_n = q(AMP)?,
            ("device", "ion_p") => t.ion_p = q(AMP)?,
            ("device", "alpha_mu_n") => t.alpha_mu_n = q(Unit::Plain)?,
            ("device", "alpha_mu_p") => t.alpha_mu_p = q(Unit::Plain)?,
            ("device", "alpha_vsat") => t.alpha_vsat = q(Unit::Plain)?,
            ("device", "k_vth") => t.k_vth = q(PER_K)?,
            ("device", "top_ion_scale_n") => t.top_ion_scale_n = q(Unit::Plain)?,
            ("device", "top_ion_scale_p") => t.top_ion_scale_p = q(Unit::Plain)?,
            ("stack", "tiers") => {
                s.tiers = match value.trim() {
                    "2" => 2,
                    "4" => 4,
                    other => return Err(format!("tiers must be 2 or 4, got `{other}`")),
                }
            }
            ("stack", "substrate_thickness") => s.substrate_thickness = q(NM)?,
            ("stack", "tier_gap") => s.tier_gap = q(NM)?,
            ("stack", "inter_tier_dielectric") => s.inter_tier_dielectric = value.trim().to_string(),
            ("stack", "lateral_margin") => s.lateral_margin = q(NM)?,
            ("stack", "cap_thickness") => s.cap_thickness = q(NM)?,
            ("beol", "via_cross_section") => b.via_cross_section = q(AREA)?,
            ("beol", "metal_level_heights") => {
                b.metal_level_heights = value
                    .split(',')
                    .map(|v| quantity(v, NM))
                    .collect::<std::result::Result<_, _>>()?
            }
            ("beol", "buried_power_rail") => b.buried_power_rail = boolean(value)?,
            ("beol", "conductor_material") => b.conductor_material = value.trim().to_string(),
            ("beol", "clearance") => b.clearance = q(NM)?,
            ("beol", "bpr_height") => b.bpr_height = q(NM)?,
            ("mesh", "resolution") => m.resolution = q(NM)?,
            ("mesh", "substrate_cell") => m.substrate_cell = q(NM)?,
            ("mesh", "thermal_tol") => m.thermal_tol = q(Unit::Plain)?,
            ("mesh", "extraction_tol") => m.extraction_tol = q(Unit::Plain)?,
            ("mesh", "grounded_shield") => m.grounded_shield = boolean(value)?,
            ("mesh", "floating_metal_eps") => m.floating_metal_eps = q(Unit::Plain)?,
            ("thermal", "ambient") => th.ambient = q(KELVIN)?,
            ("thermal", "top_h") => th.top_h = q(FILM)?,
            ("thermal", "contact_h") => th.contact_h = q(FILM)?,
            ("thermal", "power") => th.power = Some(q(WATT)?),
            ("thermal", "concentration") => th.she.concentration = q(Unit::Plain)?,
            ("thermal", "damping") => th.she.damping = q(Unit::Plain)?,
            ("thermal", "tolerance") => th.she.tolerance = q(KELVIN)?,
            ("thermal", "max_iterations") => {
                th.she.max_iterations = value
                    .trim()
                    .parse()
                    .map_err(|_| format!("`{value}` is not a whole number"))?
            }
            ("experiment", "edge") => e.edge = q(SEC)?,
            ("experiment", "period") => e.period = q(SEC)?,
            ("experiment", "lead") => e.lead = q(SEC)?,
            ("experiment", "dt") => e.dt = q(SEC)?,
            ("experiment", "target_tp") => {
                let v = q(SEC)?;
                e.target_tp = (v > 0.0).then_some(v);
            }
            ("experiment", "load_c") => e.load_c = Some(q(FARAD)?),
            ("experiment", "floor") => e.floor = q(FARAD)?,
            (s, _) if !KNOWN_SECTIONS.contains(&s) => return Err(format!("unknown section [{s}]")),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.beol.validate()?;
        self.thermal.she.validate()?;
        self.materials.get(&self.beol.conductor_material)?;
        self.materials.get(&self.stack.inter_tier_dielectric)?;
        let positive = [
            ("mesh.resolution", self.mesh.resolution),
            ("mesh.substrate_cell", self.mesh.substrate_cell),
            ("mesh.thermal_tol", self.mesh.thermal_tol),
            ("mesh.extraction_tol", self.mesh.extraction_tol),
            ("thermal.ambient", self.thermal.ambient),
            ("thermal.top_h", self.thermal.top_h),
            ("thermal.contact_h", self.thermal.contact_h),
            ("experiment.dt", self.experiment.dt),
            ("device.ss", self.targets.ss),
            ("device.ioff", self.targets.ioff),
            ("device.ion_n", self.targets.ion_n),
            ("device.ion_p", self.targets.ion_p),
            ("device.top_ion_scale_n", self.targets.top_ion_scale_n),
            ("device.top_ion_scale_p", self.targets.top_ion_scale_p),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.thermal.power.is_some_and(|p| !(p >= 0.0)) {
            return Err(Error::Config("thermal.power must be non-negative".into()));
        }
        if !(self.targets.vth_n > 0.0 && self.targets.vth_p < 0.0) {
            return Err(Error::Config("device.vth_n must be positive and device.vth_p negative".into()));
        }
        Ok(())
    }
}

const KNOWN_SECTIONS: [&str; 6] = ["device", "stack", "beol", "mesh", "thermal", "experiment"];

/// Overrides fields of an existing material, or defines a new one when a
/// `role` is given.
fn apply_material(
    lib: &MaterialLibrary,
    name: &str,
    keys: &BTreeMap<String, String>,
) -> std::result::Result<MaterialLibrary, String> {
    let number = |k: &str, v: &str| quantity(v, Unit::Plain).map_err(|e| format!("{k}: {e}"));
    if let Some(role) = keys.get("role") {
        let role = match role.trim() {
            "conductor" => Role::Conductor,
            "dielectric" => Role::Dielectric,
            "semiconductor" => Role::Semiconductor,
            other => return Err(format!("unknown role `{other}`")),
        };
        let mut m = Material {
            name: name.to_string(),
            role,
            kappa: 0.0,
            eps_r: None,
            rho_e: None,
        };
        for (k, v) in keys {
            match k.as_str() {
                "role" => {}
                "kappa" => m.kappa = number(k, v)?,
                "eps_r" => m.eps_r = Some(number(k, v)?),
                "rho_e" => m.rho_e = Some(number(k, v)?),
                other => return Err(format!("unknown material key `{other}`")),
            }
        }
        return lib.with_material(m).map_err(|e| e.to_string());
    }
    let mut out = lib.clone();
    for (k, v) in keys {
        let field: Field = k.parse().map_err(|e: Error| e.to_string())?;
        out = out.with_override(name, field, number(k, v)?).map_err(|e| e.to_string())?;
    }
    Ok(out)
}

/// The stock configuration with every key at its default, in the config
/// dialect.
pub fn default_config_text() -> String {
    let d = DeviceSpec::default();
    let t = DeviceTargets::default();
    let s = StackOptions::default();
    let b = BeolSpec::default();
    let m = MeshOptions::default();
    let th = ThermalOptions::default();
    let e = ExperimentOptions::default();
    let heights: Vec<String> = b.metal_level_heights.iter().map(|h| format!("{h}nm")).collect();
    format!(
        "[device]\n\
         gate_length = {}nm\nsheet_width = {}nm\nsheet_thickness = {}nm\neot = {}nm\n\
         spacer_thickness = {}nm\nsd_extension = {}nm\ngate_metal_thickness = {}nm\n\
         channel_doping = {:e}\nsd_doping = {:e}\nvdd = {}V\n\
         vth_n = {}V\nvth_p = {}V\nss = {}\nioff = {:e}\nion_n = {}uA\nion_p = {}uA\n\
         alpha_mu_n = {}\nalpha_mu_p = {}\nalpha_vsat = {}\nk_vth = {:e}\n\
         top_ion_scale_n = {}\ntop_ion_scale_p = {}\n\n\
         [stack]\ntiers = {}\nsubstrate_thickness = {}nm\ntier_gap = {}nm\ninter_tier_dielectric = {}\n\
         lateral_margin = {}nm\ncap_thickness = {}nm\n\n\
         [beol]\nvia_cross_section = {}\nmetal_level_heights = {}\nburied_power_rail = {}\n\
         conductor_material = {}\nclearance = {}nm\nbpr_height = {}nm\n\n\
         [mesh]\nresolution = {}nm\nsubstrate_cell = {}nm\nthermal_tol = {:e}\nextraction_tol = {:e}\n\
         grounded_shield = {}\nfloating_metal_eps = {:e}\n\n\
         [thermal]\nambient = {}\ntop_h = {:e}\ncontact_h = {:e}\nconcentration = {}\ndamping = {}\n\
         tolerance = {}\nmax_iterations = {}\n\n\
         [experiment]\nedge = {}ps\nperiod = {}ps\nlead = {}ps\ndt = {}fs\ntarget_tp = {}ps\nfloor = {:e}\n",
        d.gate_length,
        d.sheet_width,
        d.sheet_thickness,
        d.eot,
        d.spacer_thickness,
        d.sd_extension,
        d.gate_metal_thickness,
        d.channel_doping,
        d.sd_doping,
        d.vdd,
        t.vth_n,
        t.vth_p,
        t.ss,
        t.ioff,
        t.ion_n * 1e6,
        t.ion_p * 1e6,
        t.alpha_mu_n,
        t.alpha_mu_p,
        t.alpha_vsat,
        t.k_vth,
        t.top_ion_scale_n,
        t.top_ion_scale_p,
        s.tiers,
        s.substrate_thickness,
        s.tier_gap,
        s.inter_tier_dielectric,
        s.lateral_margin,
        s.cap_thickness,
        b.via_cross_section,
        heights.join(", "),
        b.buried_power_rail,
        b.conductor_material,
        b.clearance,
        b.bpr_height,
        m.resolution,
        m.substrate_cell,
        m.thermal_tol,
        m.extraction_tol,
        m.grounded_shield,
        m.floating_metal_eps,
        th.ambient,
        th.top_h,
        th.contact_h,
        th.she.concentration,
        th.she.damping,
        th.she.tolerance,
        th.she.max_iterations,
        e.edge * 1e12,
        e.period * 1e12,
        e.lead * 1e12,
        e.dt * 1e15,
        e.target_tp.unwrap_or(0.0) * 1e12,
        e.floor,
    )
}
