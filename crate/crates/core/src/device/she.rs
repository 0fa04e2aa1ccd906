//! Self-consistent channel temperature: current → dissipated power → heat
//! solve → channel temperature → current, with damping.

use super::{drain_current, CompactModelParams};
use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::materials::MaterialLibrary;
use crate::thermal::{
    assemble, channel_cells, delta_t_max, drain_hotspot_source, TemperatureField, ThermalBC, ThermalOperator,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SheOptions {
    /// Fraction of the computed update applied per iteration.
    pub damping: f64,
    /// Stop when the applied update is below this, K.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Share of the power placed in the drain-side half of the channel.
    pub concentration: f64,
    /// Relative residual of each heat solve.
    pub solver_tol: f64,
    pub solver_max_iter: Option<usize>,
}

impl Default for SheOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 0.01,
            max_iterations: 100,
            concentration: 0.7,
            solver_tol: 1e-8,
            solver_max_iter: None,
        }
    }
}

impl SheOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tolerance > 0.0 && self.solver_tol > 0.0 && self.max_iterations > 0) {
            return Err(Error::Config("coupling tolerances and iteration limit must be positive".into()));
        }
        if !(self.concentration > 0.0 && self.concentration <= 1.0) {
            return Err(Error::Config(format!("concentration must lie in (0, 1], got {}", self.concentration)));
        }
        Ok(())
    }
}

/// Heat problem around one device. Holds the last solved field so the next
/// solve starts from it, rescaled to the new power; the heat equation is
/// linear, so that guess is already the answer whenever only the power
/// changed. One context must not be shared between concurrent loops.
#[derive(Debug, Clone)]
pub struct ThermalContext {
    grid: VoxelGrid,
    op: ThermalOperator,
    device: String,
    channel: Vec<usize>,
    options: SheOptions,
    last: Option<(f64, TemperatureField)>,
}

impl ThermalContext {
    /// `device` names the heated tier, e.g. `t0`.
    pub fn new(grid: VoxelGrid, materials: &MaterialLibrary, bc: &ThermalBC, device: &str) -> Result<Self> {
        let op = assemble(&grid, materials, bc)?;
        let channel = channel_cells(&grid, device)?;
        Ok(Self {
            grid,
            op,
            device: device.to_string(),
            channel,
            options: SheOptions::default(),
            last: None,
        })
    }

    pub fn with_options(mut self, options: SheOptions) -> Result<Self> {
        options.validate()?;
        self.options = options;
        Ok(self)
    }

    pub fn options(&self) -> &SheOptions {
        &self.options
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn operator(&self) -> &ThermalOperator {
        &self.op
    }

    pub fn device(&self) -> &str {
        &self.device
    }

    pub fn ambient(&self) -> f64 {
        self.op.ambient()
    }

    /// Steady field with `power` (W) dissipated in the device.
    pub fn field_for_power(&mut self, power: f64) -> Result<TemperatureField> {
        let ambient = self.ambient();
        if power == 0.0 {
            return Ok(TemperatureField::uniform(self.grid.len(), ambient));
        }
        let source = drain_hotspot_source(&self.grid, &self.device, power, self.options.concentration)?;
        let guess = self.last.as_ref().filter(|(p, _)| *p > 0.0).map(|(p, f)| {
            let s = power / p;
            TemperatureField {
                t: f.t.iter().map(|t| ambient + (t - ambient) * s).collect(),
                ambient,
            }
        });
        let (field, _) =
            self.op
                .solve_from(&source, self.options.solver_tol, self.options.solver_max_iter, guess.as_ref())?;
        self.last = Some((power, field.clone()));
        Ok(field)
    }

    /// Volume-weighted mean channel temperature.
    pub fn channel_temperature(&self, field: &TemperatureField) -> f64 {
        field.mean_over(&self.grid, &self.channel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub vgs: f64,
    pub vds: f64,
    pub id: f64,
    /// Converged mean channel temperature, K.
    pub t_channel: f64,
    /// Peak rise of the converged field, K.
    pub delta_t: f64,
    /// `1 − id / id(ambient)`.
    pub ion_degradation: f64,
    pub power: f64,
    pub iterations: usize,
    /// `|t_new − t_channel|` of every iteration, K.
    pub residuals: Vec<f64>,
    pub field: TemperatureField,
}

/// Runs the damped fixed-point loop at one bias.
pub fn she_operating_point(
    p: &CompactModelParams,
    vgs: f64,
    vds: f64,
    ctx: &mut ThermalContext,
) -> Result<OperatingPoint> {
    let opts = ctx.options;
    let ambient = ctx.ambient();
    let id_iso = drain_current(p, vgs, vds, ambient);
    let mut t = ambient;
    let mut residuals = Vec::new();
    for iteration in 1..=opts.max_iterations {
        let id = drain_current(p, vgs, vds, t);
        let field = ctx.field_for_power((id * vds).abs())?;
        let update = ctx.channel_temperature(&field) - t;
        residuals.push(update.abs());
        t += opts.damping * update;
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::CouplingDivergence {
                iterations: iteration,
                last_update: update,
            });
        }
        if (opts.damping * update).abs() < opts.tolerance {
            let id = drain_current(p, vgs, vds, t);
            let power = (id * vds).abs();
            let field = ctx.field_for_power(power)?;
            let ion_degradation = if id_iso != 0.0 { 1.0 - id / id_iso } else { 0.0 };
            return Ok(OperatingPoint {
                vgs,
                vds,
                id,
                t_channel: t,
                delta_t: delta_t_max(&field),
                ion_degradation,
                power,
                iterations: iteration,
                residuals,
                field,
            });
        }
    }
    Err(Error::CouplingDivergence {
        iterations: opts.max_iterations,
        last_update: residuals.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Isothermal,
    She,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPoint {
    pub vgs: f64,
    pub id: f64,
    pub t_channel: f64,
}

/// `id(vgs)` at fixed `vds`, isothermal at the context ambient (300 K without
/// a context) or self-heated.
pub fn transfer_curve(
    p: &CompactModelParams,
    vds: f64,
    sweep: &[f64],
    mode: Mode,
    mut ctx: Option<&mut ThermalContext>,
) -> Result<Vec<TransferPoint>> {
    let rising = sweep.windows(2).all(|w| w[1] > w[0]);
    let falling = sweep.windows(2).all(|w| w[1] < w[0]);
    if !(rising || falling) {
        return Err(Error::Validation("gate sweep must be strictly monotone".into()));
    }
    let ambient = ctx.as_ref().map_or(300.0, |c| c.ambient());
    sweep
        .iter()
        .map(|&vgs| match mode {
            Mode::Isothermal => Ok(TransferPoint {
                vgs,
                id: drain_current(p, vgs, vds, ambient),
                t_channel: ambient,
            }),
            Mode::She => {
                let ctx = ctx
                    .as_deref_mut()
                    .ok_or_else(|| Error::Validation("self-heating sweep needs a thermal context".into()))?;
                let op = she_operating_point(p, vgs, vds, ctx)?;
                Ok(TransferPoint {
                    vgs,
                    id: op.id,
                    t_channel: op.t_channel,
                })
            }
        })
        .collect()
}

/// CSV with columns `vgs_V,id_A,t_channel_K`.
pub fn transfer_csv(points: &[TransferPoint]) -> String {
    let mut out = String::from("vgs_V,id_A,t_channel_K\n");
    for p in points {
        out.push_str(&format!("{:?},{:?},{:?}\n", p.vgs, p.id, p.t_channel));
    }
    out
}
