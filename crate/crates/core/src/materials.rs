//! Material property library shared by the thermal, capacitance and
//! resistance solvers.
//!
//! Thermal conductivities are room-temperature values and do not vary with
//! temperature, which keeps the heat equation linear.
//!
//! `silicon_nanosheet` carries a conductivity of 13 W/(m·K), a reduction
//! factor of about 0.088 against bulk silicon. Measured silicon-film
//! conductivities fall to roughly 20 W/(m·K) near 20 nm thickness and keep
//! dropping for thinner films as phonon-boundary scattering takes over; the
//! Matthiessen estimate `k_bulk / (1 + L/t)` with an effective mean free path
//! `L` of about 60 nm gives 13.5 W/(m·K) at the 6 nm sheet thickness.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Vacuum permittivity, F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Conductor,
    Dielectric,
    Semiconductor,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Conductor => "conductor",
            Role::Dielectric => "dielectric",
            Role::Semiconductor => "semiconductor",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub role: Role,
    /// Thermal conductivity, W/(m·K).
    pub kappa: f64,
    /// Relative permittivity. Required for dielectrics and semiconductors.
    pub eps_r: Option<f64>,
    /// Electrical resistivity, Ω·m. Conductors only.
    pub rho_e: Option<f64>,
}

impl Material {
    pub fn conductor(name: &str, kappa: f64, rho_e: f64) -> Self {
        Self {
            name: name.to_string(),
            role: Role::Conductor,
            kappa,
            eps_r: None,
            rho_e: Some(rho_e),
        }
    }

    pub fn dielectric(name: &str, kappa: f64, eps_r: f64) -> Self {
        Self {
            name: name.to_string(),
            role: Role::Dielectric,
            kappa,
            eps_r: Some(eps_r),
            rho_e: None,
        }
    }

    pub fn semiconductor(name: &str, kappa: f64, eps_r: f64) -> Self {
        Self {
            name: name.to_string(),
            role: Role::Semiconductor,
            kappa,
            eps_r: Some(eps_r),
            rho_e: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Validation(format!("material `{}`: {what}", self.name)));
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        match self.role {
            Role::Conductor => match self.rho_e {
                Some(rho) if rho > 0.0 && rho.is_finite() => {}
                Some(rho) => return bad(format!("rho_e must be positive, got {rho}")),
                None => return bad("conductors need rho_e".into()),
            },
            Role::Dielectric | Role::Semiconductor => {
                match self.eps_r {
                    Some(eps) if eps >= 1.0 && eps.is_finite() => {}
                    Some(eps) => return bad(format!("eps_r must be >= 1, got {eps}")),
                    None => return bad(format!("{}s need eps_r", self.role)),
                }
                if self.rho_e.is_some() {
                    return bad(format!("{}s carry no rho_e", self.role));
                }
            }
        }
        Ok(())
    }
}

/// Overridable material field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Kappa,
    EpsR,
    RhoE,
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa" => Ok(Field::Kappa),
            "eps_r" => Ok(Field::EpsR),
            "rho_e" => Ok(Field::RhoE),
            other => Err(Error::Config(format!(
                "unknown material field `{other}` (expected kappa, eps_r or rho_e)"
            ))),
        }
    }
}

/// Immutable name → material map.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLibrary {
    materials: BTreeMap<String, Material>,
}

impl Default for MaterialLibrary {
    fn default() -> Self {
        default_library()
    }
}

/// The stock library. Values are literature-typical; every one can be
/// overridden.
pub fn default_library() -> MaterialLibrary {
    let list = [
        Material::semiconductor("silicon_bulk", 148.0, 11.7),
        Material::semiconductor("silicon_nanosheet", 13.0, 11.7),
        Material::dielectric("sio2", 1.4, 3.9),
        Material::dielectric("hfo2", 1.0, 22.0),
        Material::dielectric("spacer_dielectric", 1.2, 4.0),
        Material::dielectric("interlayer_dielectric", 0.5, 2.5),
        Material::conductor("gate_metal", 11.0, 2e-7),
        Material::conductor("interconnect_metal", 170.0, 3e-8),
    ];
    MaterialLibrary {
        materials: list.into_iter().map(|m| (m.name.clone(), m)).collect(),
    }
}

impl MaterialLibrary {
    pub fn from_materials(list: impl IntoIterator<Item = Material>) -> Result<Self> {
        let mut materials = BTreeMap::new();
        for m in list {
            m.validate()?;
            if materials.insert(m.name.clone(), m.clone()).is_some() {
                return Err(Error::Validation(format!("material `{}` defined twice", m.name)));
            }
        }
        Ok(Self { materials })
    }

    pub fn get(&self, name: &str) -> Result<&Material> {
        self.materials
            .get(name)
            .ok_or_else(|| Error::Lookup(format!("unknown material `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    /// Returns a copy with one field replaced. The receiver is untouched.
    pub fn with_override(&self, name: &str, field: Field, value: f64) -> Result<Self> {
        let mut m = self.get(name)?.clone();
        match field {
            Field::Kappa => m.kappa = value,
            Field::EpsR => m.eps_r = Some(value),
            Field::RhoE => m.rho_e = Some(value),
        }
        m.validate()?;
        let mut out = self.clone();
        out.materials.insert(name.to_string(), m);
        Ok(out)
    }

    /// Adds a new material or replaces an existing one wholesale.
    pub fn with_material(&self, material: Material) -> Result<Self> {
        material.validate()?;
        let mut out = self.clone();
        out.materials.insert(material.name.clone(), material);
        Ok(out)
    }

    /// Multiplies every permittivity by `factor`.
    pub fn scale_permittivity(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in out.materials.values_mut() {
            if let Some(eps) = m.eps_r.as_mut() {
                *eps *= factor;
            }
        }
        out
    }
}
