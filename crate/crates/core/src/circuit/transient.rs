//! Modified nodal analysis with backward-Euler integration.
//!
//! Unknowns are the non-ground node voltages followed by one branch current
//! per voltage source. Capacitors become a conductance `C/dt` in parallel
//! with a current source carrying the previous voltage. Transistors are
//! linearized by central differences at every Newton iteration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::netlist::{Element, Netlist, GROUND};
use crate::device::drain_current;
use crate::error::{Error, Result};
use crate::report::num;

/// Finite-difference step for transistor derivatives, V.
const FD_STEP: f64 = 1e-6;
/// Largest change of a node voltage in one Newton update, V.
const STEP_LIMIT: f64 = 0.3;
/// Smallest fraction of `dt` tried before giving up.
const MIN_STEP_FRACTION: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    /// Start from the DC operating point at `t = 0`.
    OperatingPoint,
    /// Start with every node at 0 V.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientOptions {
    pub tstop: f64,
    pub dt: f64,
    /// Newton stops when no node moves more than this, V.
    pub abstol: f64,
    pub max_newton: usize,
    /// Conductance from every node to ground, S.
    pub gmin: f64,
    pub initial: InitialState,
}

impl Default for TransientOptions {
    fn default() -> Self {
        Self {
            tstop: 20e-12,
            dt: 5e-15,
            abstol: 1e-6,
            max_newton: 50,
            gmin: 1e-12,
            initial: InitialState::OperatingPoint,
        }
    }
}

/// Sampled voltage, strictly increasing time.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

impl Waveform {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() || t.is_empty() {
            return Err(Error::Validation("waveform needs equally many, and at least one, samples".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("waveform time must increase strictly".into()));
        }
        Ok(Self { t, v })
    }

    /// Times where the waveform crosses `level`, by linear interpolation.
    pub fn crossings(&self, level: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 1..self.t.len() {
            let (a, b) = (self.v[k - 1] - level, self.v[k] - level);
            if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
                let f = a / (a - b);
                out.push(self.t[k - 1] + f * (self.t[k] - self.t[k - 1]));
            }
        }
        out
    }
}

/// Node voltages of a transient run.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    pub time: Vec<f64>,
    pub nodes: BTreeMap<String, Vec<f64>>,
}

impl TransientResult {
    pub fn waveform(&self, node: &str) -> Result<Waveform> {
        let v = if node == GROUND {
            vec![0.0; self.time.len()]
        } else {
            self.nodes
                .get(node)
                .cloned()
                .ok_or_else(|| Error::Lookup(format!("no node `{node}` in the transient result")))?
        };
        Ok(Waveform {
            t: self.time.clone(),
            v,
        })
    }

    /// `t_s` then one column per node, in name order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s");
        for name in self.nodes.keys() {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for (k, t) in self.time.iter().enumerate() {
            out.push_str(&num(*t));
            for v in self.nodes.values() {
                let _ = write!(out, ",{}", num(v[k]));
            }
            out.push('\n');
        }
        out
    }
}

/// Netlist compiled to index form.
struct Circuit<'a> {
    net: &'a Netlist,
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    sources: usize,
}

/// Index of a node, `None` for ground.
type Node = Option<usize>;

impl<'a> Circuit<'a> {
    fn new(net: &'a Netlist) -> Result<Self> {
        let names: Vec<String> = net
            .nodes()
            .into_iter()
            .filter(|n| *n != GROUND)
            .map(str::to_string)
            .collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let sources = net
            .elements()
            .iter()
            .filter(|e| matches!(e, Element::Source { .. }))
            .count();
        for e in net.elements() {
            if let Element::Transistor { params, .. } = e {
                params.validate()?;
            }
        }
        Ok(Self {
            net,
            names,
            index,
            sources,
        })
    }

    fn node(&self, name: &str) -> Node {
        self.index.get(name).copied()
    }

    fn size(&self) -> usize {
        self.names.len() + self.sources
    }
}

fn volt(x: &DVector<f64>, n: Node) -> f64 {
    n.map_or(0.0, |i| x[i])
}

/// Adds `g` between two nodes into the Jacobian.
fn stamp_g(j: &mut DMatrix<f64>, a: Node, b: Node, g: f64) {
    if let Some(a) = a {
        j[(a, a)] += g;
    }
    if let Some(b) = b {
        j[(b, b)] += g;
    }
    if let (Some(a), Some(b)) = (a, b) {
        j[(a, b)] -= g;
        j[(b, a)] -= g;
    }
}

/// Adds current `i` leaving node `a` into node `b` to the residual.
fn stamp_i(f: &mut DVector<f64>, a: Node, b: Node, i: f64) {
    if let Some(a) = a {
        f[a] += i;
    }
    if let Some(b) = b {
        f[b] -= i;
    }
}

/// State of one implicit step: `prev` holds the voltages at the last
/// accepted time, `h = None` means DC (capacitors open).
struct Step<'s> {
    t: f64,
    h: Option<f64>,
    prev: &'s DVector<f64>,
    gmin: f64,
    source_scale: f64,
}

impl Circuit<'_> {
    /// Residual `F(x)` (KCL at each node, source equations) and Jacobian.
    fn residual(&self, x: &DVector<f64>, step: &Step) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.size();
        let nodes = self.names.len();
        let mut f = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, n);
        for k in 0..nodes {
            f[k] += step.gmin * x[k];
            j[(k, k)] += step.gmin;
        }
        let mut src = nodes;
        for e in self.net.elements() {
            match e {
                Element::Resistor { a, b, ohms, .. } => {
                    let (a, b) = (self.node(a), self.node(b));
                    let g = 1.0 / ohms;
                    stamp_i(&mut f, a, b, g * (volt(x, a) - volt(x, b)));
                    stamp_g(&mut j, a, b, g);
                }
                Element::Capacitor { a, b, farads, .. } => {
                    let Some(h) = step.h else { continue };
                    let (a, b) = (self.node(a), self.node(b));
                    let g = farads / h;
                    let dv = (volt(x, a) - volt(x, b)) - (volt(step.prev, a) - volt(step.prev, b));
                    stamp_i(&mut f, a, b, g * dv);
                    stamp_g(&mut j, a, b, g);
                }
                Element::Source { pos, neg, wave, .. } => {
                    let (p, m) = (self.node(pos), self.node(neg));
                    let i = x[src];
                    stamp_i(&mut f, p, m, i);
                    if let Some(p) = p {
                        j[(p, src)] += 1.0;
                        j[(src, p)] += 1.0;
                    }
                    if let Some(m) = m {
                        j[(m, src)] -= 1.0;
                        j[(src, m)] -= 1.0;
                    }
                    f[src] = volt(x, p) - volt(x, m) - step.source_scale * wave.at(step.t);
                    src += 1;
                }
                Element::Transistor {
                    drain,
                    gate,
                    source,
                    params,
                    temperature,
                    ..
                } => {
                    let (d, g, s) = (self.node(drain), self.node(gate), self.node(source));
                    let (vd, vg, vs) = (volt(x, d), volt(x, g), volt(x, s));
                    let id = |vgs: f64, vds: f64| drain_current(params, vgs, vds, *temperature);
                    let (vgs, vds) = (vg - vs, vd - vs);
                    let i0 = id(vgs, vds);
                    let gm = (id(vgs + FD_STEP, vds) - id(vgs - FD_STEP, vds)) / (2.0 * FD_STEP);
                    let gds = (id(vgs, vds + FD_STEP) - id(vgs, vds - FD_STEP)) / (2.0 * FD_STEP);
                    // Drain current leaves the drain node and enters the source.
                    stamp_i(&mut f, d, s, i0);
                    // ∂i/∂vd = gds, ∂i/∂vg = gm, ∂i/∂vs = −gm − gds.
                    let partials = [(d, gds), (g, gm), (s, -gm - gds)];
                    for (col, dv) in partials {
                        let Some(col) = col else { continue };
                        if let Some(d) = d {
                            j[(d, col)] += dv;
                        }
                        if let Some(s) = s {
                            j[(s, col)] -= dv;
                        }
                    }
                }
            }
        }
        (f, j)
    }

    /// Newton iteration from `x`. Returns the converged solution or `None`.
    fn newton(&self, mut x: DVector<f64>, step: &Step, abstol: f64, max_iter: usize) -> Option<DVector<f64>> {
        let nodes = self.names.len();
        for _ in 0..max_iter {
            let (f, j) = self.residual(&x, step);
            let dx = j.lu().solve(&(-f))?;
            let largest = dx.rows(0, nodes).amax();
            if !largest.is_finite() {
                return None;
            }
            let scale = if largest > STEP_LIMIT { STEP_LIMIT / largest } else { 1.0 };
            x += dx * scale;
            if largest < abstol {
                return Some(x);
            }
        }
        None
    }

    fn operating_point(&self, opts: &TransientOptions) -> Result<DVector<f64>> {
        let zero = DVector::zeros(self.size());
        let step = |scale| Step {
            t: 0.0,
            h: None,
            prev: &zero,
            gmin: opts.gmin,
            source_scale: scale,
        };
        if let Some(x) = self.newton(zero.clone(), &step(1.0), opts.abstol, opts.max_newton) {
            return Ok(x);
        }
        // Ramp the sources up from zero.
        let mut x = zero.clone();
        for k in 1..=20 {
            x = self
                .newton(x, &step(k as f64 / 20.0), opts.abstol, opts.max_newton)
                .ok_or_else(|| Error::Transient {
                    time: 0.0,
                    reason: "no DC operating point".into(),
                })?;
        }
        Ok(x)
    }
}

/// Runs backward Euler from 0 to `tstop`, recording every accepted step.
pub fn transient(net: &Netlist, opts: &TransientOptions) -> Result<TransientResult> {
    if !(opts.dt > 0.0 && opts.tstop > 0.0 && opts.abstol > 0.0 && opts.gmin >= 0.0) {
        return Err(Error::Validation("transient needs dt, tstop, abstol > 0 and gmin >= 0".into()));
    }
    let circuit = Circuit::new(net)?;
    let nodes = circuit.names.len();
    let mut x = match opts.initial {
        InitialState::OperatingPoint => circuit.operating_point(opts)?,
        InitialState::Zero => DVector::zeros(circuit.size()),
    };
    let mut time = vec![0.0];
    let mut samples: Vec<Vec<f64>> = (0..nodes).map(|k| vec![x[k]]).collect();
    let steps = (opts.tstop / opts.dt).round().max(1.0) as usize;
    for k in 1..=steps {
        let target = if k == steps { opts.tstop } else { k as f64 * opts.dt };
        let mut t = *time.last().unwrap();
        let mut h = target - t;
        // Sub-steps only when Newton fails at the full step.
        while t < target {
            h = h.min(target - t);
            let step = Step {
                t: t + h,
                h: Some(h),
                prev: &x,
                gmin: opts.gmin,
                source_scale: 1.0,
            };
            match circuit.newton(x.clone(), &step, opts.abstol, opts.max_newton) {
                Some(next) => {
                    x = next;
                    t += h;
                }
                None if h > opts.dt * MIN_STEP_FRACTION * (1.0 + 1e-9) => h /= 2.0,
                None => {
                    return Err(Error::Transient {
                        time: t,
                        reason: format!("Newton did not converge with step {h:.3e} s"),
                    })
                }
            }
        }
        time.push(target);
        for (s, v) in samples.iter_mut().zip(x.iter()) {
            s.push(*v);
        }
    }
    Ok(TransientResult {
        time,
        nodes: circuit.names.into_iter().zip(samples).collect(),
    })
}

/// Delays from each input crossing of `vdd/2` to the next output crossing.
pub fn edge_delays(vin: &Waveform, vout: &Waveform, vdd: f64) -> Result<Vec<f64>> {
    if vin.t.first() != vout.t.first() || vin.t.last() != vout.t.last() {
        return Err(Error::Measurement("input and output cover different time spans".into()));
    }
    let level = vdd / 2.0;
    let inputs = vin.crossings(level);
    if inputs.len() != 2 {
        return Err(Error::Measurement(format!(
            "input crosses {level} V {} times, expected one rising and one falling edge",
            inputs.len()
        )));
    }
    let outputs = vout.crossings(level);
    inputs
        .iter()
        .map(|&ti| {
            outputs
                .iter()
                .find(|&&to| to >= ti)
                .map(|to| to - ti)
                .ok_or_else(|| Error::Measurement(format!("output never crosses {level} V after t = {ti:e} s")))
        })
        .collect()
}

/// Mean of the two edge delays.
pub fn propagation_delay(vin: &Waveform, vout: &Waveform, vdd: f64) -> Result<f64> {
    let d = edge_delays(vin, vout, vdd)?;
    Ok(0.5 * (d[0] + d[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Pwl;
    use proptest::prelude::*;

    fn step_source(net: &mut Netlist, node: &str, t_rise: f64) {
        net.source("V1", node, GROUND, Pwl::new(vec![(0.0, 0.0), (t_rise, 1.0)]).unwrap())
            .unwrap();
    }

    #[test]
    fn single_pole_half_point() {
        let (r, c) = (1e3, 1e-15);
        let tau = r * c;
        let mut net = Netlist::new();
        step_source(&mut net, "in", tau * 1e-6);
        net.resistor("R1", "in", "out", r).unwrap();
        net.capacitor("C1", "out", GROUND, c).unwrap();
        let opts = TransientOptions {
            tstop: 3.0 * tau,
            dt: tau / 100.0,
            gmin: 0.0,
            ..Default::default()
        };
        let res = transient(&net, &opts).unwrap();
        let t50 = res.waveform("out").unwrap().crossings(0.5)[0];
        let ideal = std::f64::consts::LN_2 * tau;
        assert!((t50 - ideal).abs() / ideal < 0.01, "{t50:e} vs {ideal:e}");
    }

    #[test]
    fn quiet_circuit_stays_at_zero() {
        let mut net = Netlist::new();
        net.resistor("R1", "a", "b", 10.0).unwrap();
        net.capacitor("C1", "b", GROUND, 1e-15).unwrap();
        net.resistor("R2", "a", GROUND, 10.0).unwrap();
        let res = transient(&net, &TransientOptions::default()).unwrap();
        assert!(res.nodes.values().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn ladder_tracks_elmore() {
        let (r, c) = (1e3, 1e-15);
        let mut net = Netlist::new();
        step_source(&mut net, "n0", 1e-18);
        for k in 1..=3 {
            net.resistor(&format!("R{k}"), &format!("n{}", k - 1), &format!("n{k}"), r).unwrap();
            net.capacitor(&format!("C{k}"), &format!("n{k}"), GROUND, c).unwrap();
        }
        // Σ R_k · C downstream of R_k, scaled by ln 2 for the 50% point.
        let elmore = std::f64::consts::LN_2 * (r * 3.0 * c + r * 2.0 * c + r * c);
        let opts = TransientOptions {
            tstop: 20.0 * r * c,
            dt: r * c / 200.0,
            gmin: 0.0,
            ..Default::default()
        };
        let res = transient(&net, &opts).unwrap();
        let t50 = res.waveform("n3").unwrap().crossings(0.5)[0];
        assert!((t50 - elmore).abs() / elmore < 0.15, "{t50:e} vs {elmore:e}");
    }

    #[test]
    fn series_capacitors_conserve_charge() {
        let mut net = Netlist::new();
        net.source(
            "V1",
            "a",
            GROUND,
            Pwl::new(vec![(0.0, 0.0), (1e-12, 0.8), (3e-12, -0.3)]).unwrap(),
        )
        .unwrap();
        net.resistor("R1", "a", "b", 500.0).unwrap();
        net.capacitor("C1", "b", "x", 2e-15).unwrap();
        net.capacitor("C2", "x", GROUND, 3e-15).unwrap();
        let opts = TransientOptions {
            tstop: 5e-12,
            dt: 1e-14,
            gmin: 0.0,
            initial: InitialState::Zero,
            ..Default::default()
        };
        let res = transient(&net, &opts).unwrap();
        let b = &res.nodes["b"];
        let x = &res.nodes["x"];
        let q_scale = 2e-15 * 0.8;
        for k in 0..res.time.len() {
            // Charge on the isolated node x.
            let q = 2e-15 * (x[k] - b[k]) + 3e-15 * x[k];
            assert!(q.abs() < 1e-6 * q_scale, "q = {q:e} at step {k}");
        }
    }

    #[test]
    fn shifted_copy_gives_the_shift() {
        let t: Vec<f64> = (0..=400).map(|k| k as f64 * 0.05e-12).collect();
        let pulse = |t: f64| Pwl::new(vec![(2e-12, 0.0), (3e-12, 1.0), (10e-12, 1.0), (11e-12, 0.0)]).unwrap().at(t);
        let tau = 0.73e-12;
        let vin = Waveform::new(t.clone(), t.iter().map(|&s| pulse(s)).collect()).unwrap();
        let vout = Waveform::new(t.clone(), t.iter().map(|&s| pulse(s - tau)).collect()).unwrap();
        let tp = propagation_delay(&vin, &vout, 1.0).unwrap();
        assert!((tp - tau).abs() < 1e-15);
        let flat = Waveform::new(t.clone(), vec![0.2; t.len()]).unwrap();
        assert!(matches!(propagation_delay(&vin, &flat, 1.0), Err(Error::Measurement(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn passive_networks_stay_within_source_range(
            rs in prop::collection::vec(10.0f64..1e4, 4),
            cs in prop::collection::vec(1e-17f64..1e-14, 4),
            v1 in -1.0f64..1.0,
            v2 in -1.0f64..1.0,
            dt_exp in -16.0f64..-12.0,
        ) {
            let mut net = Netlist::new();
            net.source("V1", "s", GROUND, Pwl::new(vec![(0.0, 0.0), (1e-13, v1), (2e-12, v2)]).unwrap()).unwrap();
            net.resistor("R0", "s", "a", rs[0]).unwrap();
            net.resistor("R1", "a", "b", rs[1]).unwrap();
            net.resistor("R2", "b", "c", rs[2]).unwrap();
            net.resistor("R3", "a", "c", rs[3]).unwrap();
            net.capacitor("C0", "a", GROUND, cs[0]).unwrap();
            net.capacitor("C1", "b", "c", cs[1]).unwrap();
            net.capacitor("C2", "c", GROUND, cs[2]).unwrap();
            net.capacitor("C3", "a", "b", cs[3]).unwrap();
            let opts = TransientOptions { tstop: 4e-12, dt: 10f64.powf(dt_exp).min(4e-12), ..Default::default() };
            let res = transient(&net, &opts).unwrap();
            let lo = v1.min(v2).min(0.0) - 1e-9;
            let hi = v1.max(v2).max(0.0) + 1e-9;
            for v in res.nodes.values().flatten() {
                prop_assert!(*v >= lo && *v <= hi);
            }
        }
    }
}
