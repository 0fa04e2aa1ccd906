//! Staged calibration of the compact model against four device targets, in
//! knob order: threshold (`vth0`), subthreshold slope (`n_ss`), off current
//! (`i0`) and on current (`vsat0`).

use super::{drain_current, CompactModelParams, VT300};
use crate::error::{Error, Result};

/// Drain bias of the linear-region threshold extraction, V.
pub const VDS_LIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    /// Supply used for the saturation measurements, V.
    pub vdd: f64,
    /// Threshold (max-gm linear extrapolation at 50 mV), V. Negative for p-type.
    pub vth: f64,
    /// Subthreshold swing at `vdd`, mV/dec.
    pub ss: f64,
    /// |I_D| at `vgs = 0`, `vds = vdd`, A.
    pub ioff: f64,
    /// |I_D| at `vgs = vds = vdd`, A.
    pub ion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: &'static str,
    pub target: f64,
    pub achieved: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub params: CompactModelParams,
    pub stages: Vec<StageReport>,
    pub sweeps: usize,
}

impl Calibration {
    /// One line per stage: `stage,target,achieved,residual`.
    pub fn report(&self) -> String {
        let mut out = String::from("stage,target,achieved,residual\n");
        for s in &self.stages {
            out.push_str(&format!("{},{:?},{:?},{:?}\n", s.stage, s.target, s.achieved, s.residual));
        }
        out
    }
}

/// n-frame current magnitude at 300 K.
fn current(p: &CompactModelParams, vgs: f64, vds: f64) -> f64 {
    drain_current(p, vgs, vds, 300.0)
}

fn gm(p: &CompactModelParams, vgs: f64) -> f64 {
    const H: f64 = 1e-4;
    (current(p, vgs + H, VDS_LIN) - current(p, vgs - H, VDS_LIN)) / (2.0 * H)
}

/// Threshold by linear extrapolation from the point of maximum
/// transconductance at `VDS_LIN` (n-frame).
fn extract_vth(p: &CompactModelParams) -> f64 {
    const STEP: f64 = 0.005;
    let start = p.vth0 - 0.2;
    let (mut best, mut best_gm) = (start, f64::MIN);
    for k in 0..=200 {
        let v = start + k as f64 * STEP;
        let g = gm(p, v);
        if g > best_gm {
            best = v;
            best_gm = g;
        }
    }
    // Golden-section refinement around the best grid point.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best - STEP, best + STEP);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (gm(p, c), gm(p, d));
    for _ in 0..60 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = gm(p, c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = gm(p, d);
        }
    }
    let vm = 0.5 * (a + b);
    vm - current(p, vm, VDS_LIN) / gm(p, vm)
}

fn extract_ss(p: &CompactModelParams, vth: f64, vdd: f64) -> f64 {
    let i1 = current(p, vth - 0.25, vdd);
    let i2 = current(p, vth - 0.15, vdd);
    100.0 / (i2 / i1).log10()
}

/// Measures the four calibration quantities of `p` (300 K).
pub fn extract_targets(p: &CompactModelParams, vdd: f64) -> Targets {
    let q = p.n_frame();
    let vth = extract_vth(&q);
    Targets {
        vdd,
        vth: p.sign() * vth,
        ss: extract_ss(&q, vth, vdd),
        ioff: current(&q, 0.0, vdd),
        ion: current(&q, vdd, vdd),
    }
}

#[derive(Clone, Copy)]
enum Knob {
    Vth0,
    NSs,
    LogI0,
    LogVsat,
}

const STAGES: [(&str, Knob, f64, f64); 4] = [
    ("vth", Knob::Vth0, -1.0, 1.0),
    ("ss", Knob::NSs, 1.0, 5.0),
    ("ioff", Knob::LogI0, -46.051_701_859_880_914, -4.605_170_185_988_091),
    ("ion", Knob::LogVsat, 4.605_170_185_988_091, 20.723_265_836_946_41),
];

fn set(p: &mut CompactModelParams, knob: Knob, x: f64) {
    match knob {
        Knob::Vth0 => p.vth0 = x,
        Knob::NSs => p.n_ss = x,
        Knob::LogI0 => p.i0 = x.exp(),
        Knob::LogVsat => p.vsat0 = x.exp(),
    }
}

fn get(p: &CompactModelParams, knob: Knob) -> f64 {
    match knob {
        Knob::Vth0 => p.vth0,
        Knob::NSs => p.n_ss,
        Knob::LogI0 => p.i0.ln(),
        Knob::LogVsat => p.vsat0.ln(),
    }
}

/// Stage quantity in a scale where it increases with its knob.
fn measure(p: &CompactModelParams, stage: usize, vdd: f64) -> f64 {
    match stage {
        0 => extract_vth(p),
        1 => extract_ss(p, extract_vth(p), vdd),
        2 => current(p, 0.0, vdd).ln(),
        _ => current(p, vdd, vdd).ln(),
    }
}

fn residual(stage: usize, achieved: f64, target: f64) -> f64 {
    match stage {
        0 => (achieved - target).abs() / target.abs().max(1e-3),
        1 => (achieved - target).abs() / target,
        // Log-scale quantities: relative error of the current itself.
        _ => (achieved - target).exp_m1().abs(),
    }
}

/// Fits `vth0`, `n_ss`, `i0` and `vsat0` of `seed` to `targets`, one 1D
/// bisection per knob, repeating the sweep until the coupled fit settles.
/// Every stage must end within 1 % of its target.
pub fn calibrate(targets: &Targets, seed: &CompactModelParams) -> Result<Calibration> {
    let fail = |stage: &str, reason: String| Error::Calibration {
        stage: stage.to_string(),
        reason,
    };
    if !(targets.vdd > 0.0) {
        return Err(fail("targets", "vdd must be positive".into()));
    }
    if !(targets.ioff > 0.0 && targets.ion > targets.ioff) {
        return Err(fail(
            "targets",
            format!("need 0 < ioff < ion (ioff {:e} A, ion {:e} A)", targets.ioff, targets.ion),
        ));
    }
    if !(targets.ss > 0.0) {
        return Err(fail("targets", "ss must be positive".into()));
    }
    seed.validate()?;
    let sign = seed.sign();
    let goal = [sign * targets.vth, targets.ss, targets.ioff.ln(), targets.ion.ln()];
    let mut q = seed.n_frame();
    let vdd = targets.vdd;

    const MAX_SWEEPS: usize = 60;
    let mut sweeps = 0;
    let mut res = [f64::INFINITY; 4];
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        for (stage, &(_, knob, lo, hi)) in STAGES.iter().enumerate() {
            let f = |p: &CompactModelParams| measure(p, stage, vdd) - goal[stage];
            let (mut a, mut b) = (lo, hi);
            let mut pa = q.clone();
            set(&mut pa, knob, a);
            let mut pb = q.clone();
            set(&mut pb, knob, b);
            let (fa, fb) = (f(&pa), f(&pb));
            if fa >= 0.0 || fb <= 0.0 {
                // Not bracketed: park at the nearer bound and let the
                // residual check report it.
                set(&mut q, knob, if fa >= 0.0 { a } else { b });
                continue;
            }
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let mut pm = q.clone();
                set(&mut pm, knob, m);
                if f(&pm) < 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            set(&mut q, knob, 0.5 * (a + b));
        }
        for stage in 0..4 {
            res[stage] = residual(stage, measure(&q, stage, vdd), goal[stage]);
        }
        if res.iter().all(|&r| r < 1e-9) {
            break;
        }
    }

    let achieved: Vec<f64> = (0..4).map(|s| measure(&q, s, vdd)).collect();
    for (stage, &(name, knob, lo, hi)) in STAGES.iter().enumerate() {
        if res[stage] > 0.01 {
            let at_bound = {
                let x = get(&q, knob);
                (x - lo).abs() < 1e-9 || (x - hi).abs() < 1e-9
            };
            return Err(fail(
                name,
                format!(
                    "residual {:.3}% after {sweeps} sweeps{}",
                    res[stage] * 100.0,
                    if at_bound { " (knob pinned at its bound; target unreachable)" } else { "" }
                ),
            ));
        }
    }
    let display = |stage: usize, v: f64| match stage {
        0 => sign * v,
        1 => v,
        _ => v.exp(),
    };
    let stages = STAGES
        .iter()
        .enumerate()
        .map(|(s, &(name, ..))| StageReport {
            stage: name,
            target: display(s, goal[s]),
            achieved: display(s, achieved[s]),
            residual: res[s],
        })
        .collect();
    let params = match seed.polarity {
        crate::geometry::Polarity::N => q,
        crate::geometry::Polarity::P => q.mirrored(),
    };
    Ok(Calibration { params, stages, sweeps })
}

/// Ideal swing for `n_ss = 1`, mV/dec.
pub fn ideal_swing() -> f64 {
    1000.0 * VT300 * std::f64::consts::LN_10
}
