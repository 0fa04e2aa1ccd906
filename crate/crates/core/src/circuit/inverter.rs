//! CMOS inverter built from two compact transistors, with or without an
//! extracted parasitic network spliced between the rails and the device
//! terminals.

use super::netlist::{Element, Netlist, Pwl, GROUND};
use super::transient::{edge_delays, transient, TransientOptions, TransientResult};
use crate::device::{she_operating_point, CompactModelParams, ThermalContext};
use crate::error::{Error, Result};
use crate::geometry::Polarity;

/// Rail nodes of the inverter cell and the device terminal each one feeds.
pub const RAIL_TERMINALS: [(&str, &str); 4] = [
    ("Input", "Gate"),
    ("Output", "Drain"),
    ("Power", "PSource"),
    ("Ground", "NSource"),
];

/// Input pulse: low, one rising edge, high for half a period, one falling
/// edge, low again.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulus {
    pub vdd: f64,
    /// 0-100% edge time, s.
    pub edge: f64,
    pub period: f64,
    /// Time before the rising edge starts, s.
    pub lead: f64,
}

impl Default for Stimulus {
    fn default() -> Self {
        Self {
            vdd: 0.75,
            edge: 1e-12,
            period: 20e-12,
            lead: 2e-12,
        }
    }
}

impl Stimulus {
    pub fn validate(&self) -> Result<()> {
        if !(self.vdd > 0.0 && self.edge > 0.0 && self.lead >= 0.0 && self.period > 2.0 * self.edge) {
            return Err(Error::Config("stimulus needs vdd, edge > 0 and a period longer than two edges".into()));
        }
        Ok(())
    }

    pub fn wave(&self) -> Pwl {
        let (a, e, h) = (self.lead, self.edge, self.period / 2.0);
        let mut pts = vec![(a, 0.0), (a + e, self.vdd), (a + h, self.vdd), (a + h + e, 0.0)];
        if a > 0.0 {
            pts.insert(0, (0.0, 0.0));
        }
        Pwl::new(pts).expect("stimulus points increase")
    }

    pub fn tstop(&self) -> f64 {
        self.lead + self.period
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverterSetup {
    pub nfet: CompactModelParams,
    pub pfet: CompactModelParams,
    /// Capacitance from the output to ground, F.
    pub load_c: f64,
    pub stimulus: Stimulus,
    /// Channel temperatures, K.
    pub n_temperature: f64,
    pub p_temperature: f64,
    pub dt: f64,
}

impl InverterSetup {
    /// Isothermal at 300 K, loaded by one identical inverter.
    pub fn new(nfet: CompactModelParams, pfet: CompactModelParams) -> Self {
        let load_c = fanout_load(&nfet, &pfet);
        Self {
            nfet,
            pfet,
            load_c,
            stimulus: Stimulus::default(),
            n_temperature: 300.0,
            p_temperature: 300.0,
            dt: 5e-15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stimulus.validate()?;
        if self.nfet.polarity != Polarity::N || self.pfet.polarity != Polarity::P {
            return Err(Error::Validation("inverter needs an n-type and a p-type device".into()));
        }
        self.nfet.validate()?;
        self.pfet.validate()?;
        if !(self.load_c >= 0.0 && self.dt > 0.0) {
            return Err(Error::Validation("load capacitance must be non-negative and dt positive".into()));
        }
        Ok(())
    }

    /// Both devices with intrinsic capacitances multiplied by `factor`; the
    /// fanout load follows.
    pub fn with_capacitance_scale(&self, factor: f64) -> Self {
        let scale = |p: &CompactModelParams| CompactModelParams {
            c_g: p.c_g * factor,
            c_gd: p.c_gd * factor,
            ..p.clone()
        };
        Self {
            nfet: scale(&self.nfet),
            pfet: scale(&self.pfet),
            load_c: self.load_c * factor,
            ..self.clone()
        }
    }
}

/// Input capacitance of one inverter, F.
pub fn fanout_load(nfet: &CompactModelParams, pfet: &CompactModelParams) -> f64 {
    nfet.c_g + pfet.c_g
}

/// The inverter netlist. Device terminals that the parasitic network does not
/// touch are tied straight to their rail.
pub fn inverter_netlist(setup: &InverterSetup, parasitics: Option<&Netlist>) -> Result<Netlist> {
    setup.validate()?;
    let empty = Netlist::new();
    let parasitics = parasitics.unwrap_or(&empty);
    let used = parasitics.nodes();
    let resolve = |node: &str| -> String {
        let rail = RAIL_TERMINALS
            .iter()
            .find(|(_, t)| *t == node && !used.contains(node))
            .map_or(node, |(r, _)| *r);
        if rail == "Ground" {
            GROUND.to_string()
        } else {
            rail.to_string()
        }
    };

    let mut net = Netlist::new();
    let vdd = setup.stimulus.vdd;
    net.source("Vdd", "Power", GROUND, Pwl::dc(vdd))?;
    net.source("Vin", "Input", GROUND, setup.stimulus.wave())?;
    for (name, p, source, t) in [
        ("MN", &setup.nfet, "NSource", setup.n_temperature),
        ("MP", &setup.pfet, "PSource", setup.p_temperature),
    ] {
        net.transistor(name, "Drain", "Gate", source, p, t)?;
        net.capacitor(&format!("C{name}_gs"), "Gate", source, p.c_g - p.c_gd)?;
        net.capacitor(&format!("C{name}_gd"), "Gate", "Drain", p.c_gd)?;
    }
    if setup.load_c > 0.0 {
        net.capacitor("Cload", "Output", GROUND, setup.load_c)?;
    }
    for e in parasitics.elements() {
        match e {
            Element::Resistor { .. } | Element::Capacitor { .. } => net.add(e.clone())?,
            other => {
                return Err(Error::Validation(format!(
                    "parasitic network may only hold resistors and capacitors, found `{}`",
                    other.name()
                )))
            }
        }
    }
    // Parasitic elements name the ground rail `Ground`.
    Ok(net.map_nodes(resolve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayRun {
    pub tp: f64,
    /// Output-falling then output-rising delay, s.
    pub edges: Vec<f64>,
    pub waveforms: TransientResult,
}

/// One transient of the inverter and its propagation delay.
pub fn inverter_delay(setup: &InverterSetup, parasitics: Option<&Netlist>) -> Result<DelayRun> {
    let net = inverter_netlist(setup, parasitics)?;
    let opts = TransientOptions {
        tstop: setup.stimulus.tstop(),
        dt: setup.dt,
        ..Default::default()
    };
    let waveforms = transient(&net, &opts)?;
    let edges = edge_delays(
        &waveforms.waveform("Input")?,
        &waveforms.waveform("Output")?,
        setup.stimulus.vdd,
    )?;
    Ok(DelayRun {
        tp: 0.5 * (edges[0] + edges[1]),
        edges,
        waveforms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub without: DelayRun,
    pub with: DelayRun,
}

impl ExperimentResult {
    pub fn tp_without(&self) -> f64 {
        self.without.tp
    }

    pub fn tp_with(&self) -> f64 {
        self.with.tp
    }

    /// `tp_with / tp_without − 1`.
    pub fn degradation(&self) -> f64 {
        self.with.tp / self.without.tp - 1.0
    }
}

/// Delay without and with the parasitic network.
pub fn inverter_experiment(setup: &InverterSetup, parasitics: &Netlist) -> Result<ExperimentResult> {
    Ok(ExperimentResult {
        without: inverter_delay(setup, None)?,
        with: inverter_delay(setup, Some(parasitics))?,
    })
}

/// Self-heating state of one device at its worst-case bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceHeating {
    pub t_channel: f64,
    pub delta_t: f64,
    pub ion_degradation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectroThermalResult {
    pub experiment: ExperimentResult,
    pub nfet: DeviceHeating,
    pub pfet: DeviceHeating,
}

/// Settles each device's channel temperature with the self-heating loop at
/// full drive (`|vgs| = |vds| = vdd`), then reruns the experiment with the
/// devices held at those temperatures.
pub fn electro_thermal_delay(
    setup: &InverterSetup,
    parasitics: &Netlist,
    n_ctx: &mut ThermalContext,
    p_ctx: &mut ThermalContext,
) -> Result<ElectroThermalResult> {
    let vdd = setup.stimulus.vdd;
    let heat = |p: &CompactModelParams, ctx: &mut ThermalContext| -> Result<DeviceHeating> {
        let v = p.sign() * vdd;
        let op = she_operating_point(p, v, v, ctx)?;
        Ok(DeviceHeating {
            t_channel: op.t_channel,
            delta_t: op.delta_t,
            ion_degradation: op.ion_degradation,
        })
    };
    let nfet = heat(&setup.nfet, n_ctx)?;
    let pfet = heat(&setup.pfet, p_ctx)?;
    let hot = InverterSetup {
        n_temperature: nfet.t_channel,
        p_temperature: pfet.t_channel,
        ..setup.clone()
    };
    Ok(ElectroThermalResult {
        experiment: inverter_experiment(&hot, parasitics)?,
        nfet,
        pfet,
    })
}

/// Common factor on both devices' intrinsic capacitances (and the fanout
/// load) that puts the parasitic-free delay at `target` seconds.
pub fn fit_intrinsic_capacitance(setup: &InverterSetup, target: f64) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::Validation("target delay must be positive".into()));
    }
    // A gate too slow to switch inside the stimulus period counts as slow.
    let slow = |f: f64| match inverter_delay(&setup.with_capacitance_scale(f), None) {
        Ok(r) => Ok(r.tp >= target),
        Err(Error::Measurement(_)) => Ok(true),
        Err(e) => Err(e),
    };
    let (mut lo, mut hi) = (1e-2f64.ln(), 1e3f64.ln());
    if slow(lo.exp())? || !slow(hi.exp())? {
        return Err(Error::Calibration {
            stage: "c_g".into(),
            reason: format!("target delay {target:e} s is outside the reachable range"),
        });
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if !slow(mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-5 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
