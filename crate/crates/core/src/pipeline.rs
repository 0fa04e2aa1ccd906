//! Stages wired from a [`RunConfig`]: device calibration, device-level
//! heating, parasitic extraction and inverter delay.

use std::collections::BTreeMap;

use crate::circuit::{
    electro_thermal_delay, fit_intrinsic_capacitance, inverter_experiment, DeviceHeating, ExperimentResult,
    InverterSetup, Netlist, Stimulus,
};
use crate::config::RunConfig;
use crate::device::{calibrate, Calibration, Targets};
use crate::device::{she_operating_point, ThermalContext};
use crate::device::CompactModelParams;
use crate::error::{Error, Result};
use crate::geometry::{
    build_cfet_stack, build_inverter_cell, voxelize, Design, Polarity, Refinement, StackConfig, VoxelGrid,
    SUBSTRATE,
};
use crate::parasitics::{
    extract_capacitance, extract_resistance, inverter_conductors, inverter_resistance_pairs, to_netlist,
    CapacitanceMatrix, CapacitanceOptions, PruningReport, ResistanceReport,
};
use crate::report::num;
use crate::thermal::{delta_t_max, drain_hotspot_source, EnergyBalance, HeatSource, TemperatureField, ThermalBC};

fn refinement(cfg: &RunConfig) -> Refinement {
    Refinement::new().with(SUBSTRATE, cfg.mesh.substrate_cell)
}

/// Calibrates one device to the configured targets, its on current scaled
/// by `ion_scale`.
pub fn calibrate_device(cfg: &RunConfig, polarity: Polarity, ion_scale: f64) -> Result<Calibration> {
    let t = &cfg.targets;
    let (vth, ion, alpha_mu) = match polarity {
        Polarity::N => (t.vth_n, t.ion_n, t.alpha_mu_n),
        Polarity::P => (t.vth_p, t.ion_p, t.alpha_mu_p),
    };
    let base = CompactModelParams::seed(polarity, &cfg.device);
    let seed = CompactModelParams {
        alpha_mu,
        alpha_vsat: t.alpha_vsat,
        // The threshold magnitude drops as the device warms.
        k_vth: -base.sign() * t.k_vth,
        ..base
    };
    let targets = Targets {
        vdd: cfg.device.vdd,
        vth,
        ss: t.ss,
        ioff: t.ioff,
        ion: ion * ion_scale,
    };
    calibrate(&targets, &seed)
}

/// Calibrated devices for every tier, with the fitted intrinsic
/// capacitances already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSet {
    pub nfet: CompactModelParams,
    pub pfet: CompactModelParams,
    /// Devices of the upper pair of a 4-tier stack.
    pub nfet_top: CompactModelParams,
    pub pfet_top: CompactModelParams,
    /// Factor applied to the geometric intrinsic capacitances.
    pub capacitance_scale: f64,
    pub calibrations: Vec<(String, Calibration)>,
}

impl DeviceSet {
    pub fn for_pair(&self, pair: usize) -> (&CompactModelParams, &CompactModelParams) {
        if pair == 0 {
            (&self.nfet, &self.pfet)
        } else {
            (&self.nfet_top, &self.pfet_top)
        }
    }

    pub fn for_tier(&self, stack: &StackConfig, tier: usize) -> &CompactModelParams {
        let (n, p) = self.for_pair(tier / 2);
        match stack.tiers[tier].polarity {
            Polarity::N => n,
            Polarity::P => p,
        }
    }
}

fn scale_capacitance(p: &CompactModelParams, f: f64) -> CompactModelParams {
    CompactModelParams {
        c_g: p.c_g * f,
        c_gd: p.c_gd * f,
        ..p.clone()
    }
}

/// Calibrates all four devices, then fits one capacitance factor so the
/// isothermal, parasitic-free bottom-pair inverter meets the target delay.
pub fn prepare_devices(cfg: &RunConfig) -> Result<DeviceSet> {
    let t = &cfg.targets;
    let jobs = [
        ("n", Polarity::N, 1.0),
        ("p", Polarity::P, 1.0),
        ("n_top", Polarity::N, t.top_ion_scale_n),
        ("p_top", Polarity::P, t.top_ion_scale_p),
    ];
    let mut calibrations: Vec<(String, Calibration)> = Vec::new();
    for (name, polarity, scale) in jobs {
        // Matched top devices reuse the bottom calibration.
        let reuse = (scale == 1.0).then(|| calibrations.iter().find(|(n, _)| n == &name[..1])).flatten();
        let cal = match reuse {
            Some((_, c)) => c.clone(),
            None => calibrate_device(cfg, polarity, scale)?,
        };
        calibrations.push((name.to_string(), cal));
    }
    let params = |i: usize| calibrations[i].1.params.clone();
    let (n, p, n_top, p_top) = (params(0), params(1), params(2), params(3));
    let capacitance_scale = match cfg.experiment.target_tp {
        Some(target) => {
            // A configured load is scaled along during the fit only.
            fit_intrinsic_capacitance(&with_load(cfg, base_setup(cfg, &n, &p)), target)?
        }
        None => 1.0,
    };
    Ok(DeviceSet {
        nfet: scale_capacitance(&n, capacitance_scale),
        pfet: scale_capacitance(&p, capacitance_scale),
        nfet_top: scale_capacitance(&n_top, capacitance_scale),
        pfet_top: scale_capacitance(&p_top, capacitance_scale),
        capacitance_scale,
        calibrations,
    })
}

fn base_setup(cfg: &RunConfig, n: &CompactModelParams, p: &CompactModelParams) -> InverterSetup {
    let e = &cfg.experiment;
    InverterSetup {
        stimulus: Stimulus {
            vdd: cfg.device.vdd,
            edge: e.edge,
            period: e.period,
            lead: e.lead,
        },
        n_temperature: cfg.thermal.ambient,
        p_temperature: cfg.thermal.ambient,
        dt: e.dt,
        ..InverterSetup::new(n.clone(), p.clone())
    }
}

/// The configured load, or else one fanout inverter.
fn with_load(cfg: &RunConfig, setup: InverterSetup) -> InverterSetup {
    match cfg.experiment.load_c {
        Some(c) => InverterSetup { load_c: c, ..setup },
        None => InverterSetup {
            load_c: crate::circuit::fanout_load(&setup.nfet, &setup.pfet),
            ..setup
        },
    }
}

/// The inverter of `design` at ambient temperature.
pub fn inverter_setup(cfg: &RunConfig, devices: &DeviceSet, design: Design) -> InverterSetup {
    let (n, p) = devices.for_pair(design.wired_pair());
    with_load(cfg, base_setup(cfg, n, p))
}

fn thermal_bc(cfg: &RunConfig) -> ThermalBC {
    ThermalBC::package(cfg.thermal.ambient, cfg.thermal.top_h).with_x_contacts(cfg.thermal.contact_h)
}

/// Voxelized device stack (no interconnect) with `tiers` tiers.
pub fn device_grid(cfg: &RunConfig, tiers: usize) -> Result<VoxelGrid> {
    let stack = cfg.stack.stack(tiers);
    let regions = build_cfet_stack(&cfg.device, &stack)?;
    voxelize(&regions, cfg.mesh.resolution, &refinement(cfg))
}

/// Heat problem of tier `tier` in a `tiers`-tier device stack.
pub fn thermal_context(cfg: &RunConfig, tiers: usize, tier: usize) -> Result<ThermalContext> {
    let grid = device_grid(cfg, tiers)?;
    let mut she = cfg.thermal.she;
    she.solver_tol = cfg.mesh.thermal_tol;
    ThermalContext::new(grid, &cfg.materials, &thermal_bc(cfg), &format!("t{tier}"))?.with_options(she)
}

/// Parses `tier:polarity`, as in `0:p`, and checks it against the stack.
pub fn parse_device(text: &str, stack: &StackConfig) -> Result<usize> {
    let bad = || Error::Config(format!("device `{text}` is not of the form <tier>:<n|p>"));
    let (tier, polarity) = text.split_once(':').ok_or_else(bad)?;
    let tier: usize = tier.trim().parse().map_err(|_| bad())?;
    let polarity: Polarity = polarity.trim().parse()?;
    let Some(t) = stack.tiers.get(tier) else {
        return Err(Error::Config(format!(
            "tier {tier} does not exist in a {}-tier stack",
            stack.tier_count()
        )));
    };
    if t.polarity != polarity {
        return Err(Error::Config(format!("tier {tier} holds a {}FET, not a {polarity}FET", t.polarity)));
    }
    Ok(tier)
}

#[derive(Debug, Clone)]
pub struct ThermalRun {
    pub tier: usize,
    pub polarity: Polarity,
    /// Dissipated power, W.
    pub power: f64,
    pub delta_t_max: f64,
    pub t_channel: f64,
    /// `None` when the power was fixed by the configuration.
    pub ion_degradation: Option<f64>,
    pub she_iterations: usize,
    pub energy: EnergyBalance,
    pub field: TemperatureField,
    pub grid: VoxelGrid,
}

impl ThermalRun {
    /// `key,value` lines.
    pub fn summary_csv(&self) -> String {
        let mut rows = vec![
            ("device", format!("{}:{}", self.tier, self.polarity)),
            ("power_W", num(self.power)),
            ("delta_t_max_K", num(self.delta_t_max)),
            ("t_channel_K", num(self.t_channel)),
        ];
        if let Some(d) = self.ion_degradation {
            rows.push(("ion_degradation", num(d)));
        }
        rows.extend([
            ("she_iterations", self.she_iterations.to_string()),
            ("energy_injected_W", num(self.energy.injected)),
            ("energy_outflow_W", num(self.energy.outflow)),
            ("energy_balance_rel", num(self.energy.relative)),
        ]);
        let mut out = String::from("key,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

/// Steady heating of one device. Without a configured power the device runs
/// at full drive through the self-heating loop.
pub fn thermal_run(cfg: &RunConfig, devices: Option<&DeviceSet>, tier: usize) -> Result<ThermalRun> {
    let stack = cfg.stack.stack(cfg.stack.tiers);
    let polarity = stack
        .tiers
        .get(tier)
        .ok_or_else(|| Error::Config(format!("tier {tier} does not exist")))?
        .polarity;
    let mut ctx = thermal_context(cfg, cfg.stack.tiers, tier)?;
    let (power, field, ion_degradation, she_iterations) = match cfg.thermal.power {
        Some(power) => (power, ctx.field_for_power(power)?, None, 0),
        None => {
            let devices = devices.ok_or_else(|| Error::Validation("self-heating run needs calibrated devices".into()))?;
            let p = devices.for_tier(&stack, tier);
            let v = p.sign() * cfg.device.vdd;
            let op = she_operating_point(p, v, v, &mut ctx)?;
            (op.power, op.field, Some(op.ion_degradation), op.iterations)
        }
    };
    let source = if power > 0.0 {
        drain_hotspot_source(ctx.grid(), ctx.device(), power, cfg.thermal.she.concentration)?
    } else {
        HeatSource::zeros(ctx.grid().len())
    };
    let energy = ctx.operator().energy_balance(&field, &source);
    Ok(ThermalRun {
        tier,
        polarity,
        power,
        delta_t_max: delta_t_max(&field),
        t_channel: ctx.channel_temperature(&field),
        ion_degradation,
        she_iterations,
        energy,
        field,
        grid: ctx.grid().clone(),
    })
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub design: Design,
    pub grid: VoxelGrid,
    pub regions_csv: String,
    pub capacitance: CapacitanceMatrix,
    pub resistance: ResistanceReport,
    pub netlist: Netlist,
    pub pruning: PruningReport,
}

impl Extraction {
    /// Solver convergence and consistency figures, `quantity,item,value`.
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("quantity,item,value\n");
        out.push_str(&format!("cells,grid,{}\n", self.grid.len()));
        for (name, it) in self.capacitance.names.iter().zip(&self.capacitance.iterations) {
            out.push_str(&format!("pcg_iterations,{name},{it}\n"));
        }
        out.push_str(&format!("c_asymmetry,matrix,{}\n", num(self.capacitance.asymmetry)));
        for (a, b) in &self.capacitance.in_contact {
            out.push_str(&format!("in_contact,{a}-{b},1\n"));
        }
        for e in &self.resistance.entries {
            out.push_str(&format!("r_iterations,{}-{},{}\n", e.a, e.b, e.iterations));
            out.push_str(&format!("r_current_mismatch,{}-{},{}\n", e.a, e.b, num(e.current_mismatch)));
        }
        for (a, b, v) in &self.pruning.pruned {
            out.push_str(&format!("pruned,{a}-{b},{}\n", num(*v)));
        }
        out
    }
}

/// Capacitance matrix, rail resistances and the parasitic netlist of one
/// inverter design.
pub fn extract_design(cfg: &RunConfig, design: Design) -> Result<Extraction> {
    let stack = cfg.stack.stack(design.tier_count());
    let cell = build_inverter_cell(&cfg.device, &stack, &cfg.beol, design.wired_pair())?;
    let grid = voxelize(&cell.regions, cfg.mesh.resolution, &refinement(cfg))?;
    let conductors = inverter_conductors(&grid, &cell)?;
    let opts = CapacitanceOptions {
        tol: cfg.mesh.extraction_tol,
        grounded_shield: cfg.mesh.grounded_shield,
        floating_metal_eps: cfg.mesh.floating_metal_eps,
        ..CapacitanceOptions::default()
    };
    let capacitance = extract_capacitance(&grid, &cfg.materials, &conductors, &opts)?;
    let pairs = inverter_resistance_pairs(&grid, &cell)?;
    let resistance = extract_resistance(&grid, &cfg.materials, &pairs, cfg.mesh.extraction_tol)?;
    let (netlist, pruning) = to_netlist(&capacitance, &resistance, &BTreeMap::new(), cfg.experiment.floor)?;
    Ok(Extraction {
        design,
        regions_csv: crate::geometry::regions_csv(&cell.regions),
        grid,
        capacitance,
        resistance,
        netlist,
        pruning,
    })
}

#[derive(Debug, Clone)]
pub struct DelayOutcome {
    pub design: Design,
    pub experiment: ExperimentResult,
    /// Self-heating of the n and p devices when it was enabled.
    pub heating: Option<(DeviceHeating, DeviceHeating)>,
}

impl DelayOutcome {
    /// Header and one row.
    pub fn report_csv(&self) -> String {
        let mut head = String::from("design,tp_without_ps,tp_with_ps,degradation_pct");
        let e = &self.experiment;
        let mut row = format!(
            "{},{},{},{}",
            self.design,
            num(e.tp_without() * 1e12),
            num(e.tp_with() * 1e12),
            num(e.degradation() * 100.0)
        );
        if let Some((n, p)) = &self.heating {
            head.push_str(",n_delta_t_K,p_delta_t_K,n_t_channel_K,p_t_channel_K");
            row.push_str(&format!(
                ",{},{},{},{}",
                num(n.delta_t),
                num(p.delta_t),
                num(n.t_channel),
                num(p.t_channel)
            ));
        }
        format!("{head}\n{row}\n")
    }
}

/// Inverter delay of `design` with and without `parasitics`, optionally at
/// self-heated channel temperatures.
pub fn delay_experiment(
    cfg: &RunConfig,
    devices: &DeviceSet,
    design: Design,
    parasitics: &Netlist,
    she: bool,
) -> Result<DelayOutcome> {
    let setup = inverter_setup(cfg, devices, design);
    if !she {
        return Ok(DelayOutcome {
            design,
            experiment: inverter_experiment(&setup, parasitics)?,
            heating: None,
        });
    }
    let stack = cfg.stack.stack(design.tier_count());
    let pair = design.wired_pair();
    let n_tier = stack.tier_of(pair, Polarity::N);
    let p_tier = stack.tier_of(pair, Polarity::P);
    let mut n_ctx = thermal_context(cfg, design.tier_count(), n_tier)?;
    let mut p_ctx = thermal_context(cfg, design.tier_count(), p_tier)?;
    let r = electro_thermal_delay(&setup, parasitics, &mut n_ctx, &mut p_ctx)?;
    Ok(DelayOutcome {
        design,
        experiment: r.experiment,
        heating: Some((r.nfet, r.pfet)),
    })
}

/// `parameter,n,p,n_top,p_top` table of the calibrated devices.
pub fn devices_csv(d: &DeviceSet) -> String {
    let all = [&d.nfet, &d.pfet, &d.nfet_top, &d.pfet_top];
    let rows: [(&str, fn(&CompactModelParams) -> f64); 14] = [
        ("vth0", |p| p.vth0),
        ("n_ss", |p| p.n_ss),
        ("mu0", |p| p.mu0),
        ("alpha_mu", |p| p.alpha_mu),
        ("vsat0", |p| p.vsat0),
        ("alpha_vsat", |p| p.alpha_vsat),
        ("k_vth", |p| p.k_vth),
        ("i0", |p| p.i0),
        ("theta", |p| p.theta),
        ("leff", |p| p.leff),
        ("weff", |p| p.weff),
        ("cox", |p| p.cox),
        ("c_g", |p| p.c_g),
        ("c_gd", |p| p.c_gd),
    ];
    let mut out = String::from("parameter,n,p,n_top,p_top\n");
    for (name, get) in rows {
        out.push_str(name);
        for p in all {
            out.push(',');
            out.push_str(&num(get(p)));
        }
        out.push('\n');
    }
    out.push_str(&format!("capacitance_scale,{0},{0},{0},{0}\n", num(d.capacitance_scale)));
    out
}
