//! Temperature-dependent compact transistor model, calibration and the
//! self-heating operating-point loop.
//!
//! The model is written for an n-type device with `vds ≥ 0`. Reverse bias
//! swaps source and drain; p-type devices are the sign reflection of an
//! n-type device with mirrored threshold parameters.
//!
//! ```text
//! vth(T)  = vth0 + k_vth (T − 300)
//! I_sub   = i0 · σ((vgs − vth) / (n_ss Vt)) · (1 − exp(−vds / Vt))
//! vov     = δ ln(1 + exp((vgs − vth) / δ))                    δ = 10 mV
//! μ       = mu0 (T/300)^−alpha_mu / (1 + θ vov)
//! vsat    = vsat0 (T/300)^−alpha_vsat
//! EsatL   = 2 vsat leff / μ,   vdsat = vov EsatL / (vov + EsatL)
//! vde     = vds / (1 + (vds / vdsat)^4)^(1/4)
//! I_str   = weff cox μ (vov − vde/2) vde / (leff (1 + vde / EsatL))
//! I       = I_sub + I_str
//! ```
//!
//! `Vt` is the thermal voltage at 300 K. Keeping it fixed means every
//! temperature effect goes through the three coefficients `alpha_mu`,
//! `alpha_vsat` and `k_vth`; with all three at zero the current does not
//! depend on temperature.

mod calibrate;
mod she;

pub use calibrate::{calibrate, extract_targets, ideal_swing, Calibration, StageReport, Targets};
pub use she::{she_operating_point, transfer_csv, transfer_curve, Mode, OperatingPoint, SheOptions, ThermalContext, TransferPoint};

use crate::error::{Error, Result};
use crate::geometry::{DeviceSpec, Polarity};
use crate::materials::EPS0;

/// Thermal voltage kT/q at 300 K, V.
pub const VT300: f64 = 1.380_649e-23 * 300.0 / 1.602_176_634e-19;
/// Reference temperature of the model parameters, K.
pub const T_REF: f64 = 300.0;
/// Blending width of the overdrive smoothing, V.
const DELTA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CompactModelParams {
    pub polarity: Polarity,
    /// Threshold at 300 K, V. Negative for p-type.
    pub vth0: f64,
    pub n_ss: f64,
    /// Low-field mobility at 300 K, cm²/(V·s).
    pub mu0: f64,
    pub alpha_mu: f64,
    /// Saturation velocity at 300 K, m/s.
    pub vsat0: f64,
    pub alpha_vsat: f64,
    /// Threshold temperature coefficient, V/K (sign follows `vth0`).
    pub k_vth: f64,
    /// Subthreshold prefactor, A.
    pub i0: f64,
    /// Mobility degradation with overdrive, 1/V.
    pub theta: f64,
    /// Effective channel length, m.
    pub leff: f64,
    /// Effective width (sheet perimeter), m.
    pub weff: f64,
    /// Gate oxide capacitance per area, F/m².
    pub cox: f64,
    /// Total gate capacitance, F.
    pub c_g: f64,
    /// Gate-drain share of `c_g`, F.
    pub c_gd: f64,
}

impl CompactModelParams {
    /// Uncalibrated seed sized from the device geometry.
    pub fn seed(polarity: Polarity, spec: &DeviceSpec) -> Self {
        let leff = spec.gate_length * 1e-9;
        let weff = 2.0 * (spec.sheet_width + spec.sheet_thickness) * 1e-9;
        let cox = 3.9 * EPS0 / (spec.eot * 1e-9);
        let c_g = cox * weff * leff;
        let sign = match polarity {
            Polarity::N => 1.0,
            Polarity::P => -1.0,
        };
        let (mu0, vsat0, alpha_mu) = match polarity {
            Polarity::N => (600.0, 1e6, 1.5),
            Polarity::P => (470.0, 6e5, 1.3),
        };
        Self {
            polarity,
            vth0: sign * 0.25,
            n_ss: 1.2,
            mu0,
            alpha_mu,
            vsat0,
            alpha_vsat: 0.4,
            k_vth: sign * -0.7e-3,
            i0: 1e-7,
            theta: 1.0,
            leff,
            weff,
            cox,
            c_g,
            c_gd: 0.3 * c_g,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("compact model: {what}")));
        if !(self.mu0 > 0.0 && self.vsat0 > 0.0) {
            return bad("mu0 and vsat0 must be positive");
        }
        if !(self.n_ss >= 1.0) {
            return bad("n_ss must be at least 1");
        }
        if !(self.c_g > 0.0 && self.c_gd >= 0.0 && self.c_gd <= self.c_g) {
            return bad("need c_g > 0 and 0 <= c_gd <= c_g");
        }
        // Zero disables the temperature dependence, which the decoupling
        // checks rely on.
        if !(self.alpha_mu >= 0.0) {
            return bad("alpha_mu must be non-negative");
        }
        if !(self.i0 > 0.0 && self.leff > 0.0 && self.weff > 0.0 && self.cox > 0.0 && self.theta >= 0.0) {
            return bad("i0, leff, weff, cox must be positive and theta non-negative");
        }
        if !(self.alpha_vsat >= 0.0) {
            return bad("alpha_vsat must be non-negative");
        }
        Ok(())
    }

    /// The same device in the n-type frame.
    fn n_frame(&self) -> Self {
        match self.polarity {
            Polarity::N => self.clone(),
            Polarity::P => self.mirrored(),
        }
    }

    /// Opposite polarity with reflected threshold parameters.
    pub fn mirrored(&self) -> Self {
        Self {
            polarity: match self.polarity {
                Polarity::N => Polarity::P,
                Polarity::P => Polarity::N,
            },
            vth0: -self.vth0,
            k_vth: -self.k_vth,
            ..self.clone()
        }
    }

    /// +1 for n-type, −1 for p-type.
    pub fn sign(&self) -> f64 {
        match self.polarity {
            Polarity::N => 1.0,
            Polarity::P => -1.0,
        }
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// n-frame current for `vds ≥ 0`.
fn forward(p: &CompactModelParams, vgs: f64, vds: f64, t: f64) -> f64 {
    let ratio = t / T_REF;
    let vth = p.vth0 + p.k_vth * (t - T_REF);
    let i_sub = p.i0 * logistic((vgs - vth) / (p.n_ss * VT300)) * (-(-vds / VT300).exp_m1());
    let vov = DELTA * softplus((vgs - vth) / DELTA);
    if vov <= 0.0 || vds <= 0.0 {
        return i_sub;
    }
    let mu = p.mu0 * 1e-4 * ratio.powf(-p.alpha_mu) / (1.0 + p.theta * vov);
    let vsat = p.vsat0 * ratio.powf(-p.alpha_vsat);
    let esat_l = 2.0 * vsat * p.leff / mu;
    let vdsat = vov * esat_l / (vov + esat_l);
    let vde = vds / (1.0 + (vds / vdsat).powi(4)).powf(0.25);
    let i_str = p.weff * p.cox * mu * (vov - 0.5 * vde) * vde / (p.leff * (1.0 + vde / esat_l));
    i_sub + i_str
}

fn n_current(p: &CompactModelParams, vgs: f64, vds: f64, t: f64) -> f64 {
    if vds >= 0.0 {
        forward(p, vgs, vds, t)
    } else {
        // Source and drain swap roles.
        -forward(p, vgs - vds, -vds, t)
    }
}

/// Drain current (A, positive into the drain) at channel temperature `t`.
pub fn drain_current(p: &CompactModelParams, vgs: f64, vds: f64, t: f64) -> f64 {
    match p.polarity {
        Polarity::N => n_current(p, vgs, vds, t),
        Polarity::P => -n_current(&p.n_frame(), -vgs, -vds, t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nfet() -> CompactModelParams {
        CompactModelParams {
            vsat0: 8e4,
            i0: 3.7e-7,
            ..CompactModelParams::seed(Polarity::N, &DeviceSpec::default())
        }
    }

    #[test]
    fn leakage_matches_closed_form() {
        let p = nfet();
        let vdd = 0.75;
        let u = -p.vth0 / (p.n_ss * VT300);
        let sub = p.i0 * u.exp() / (1.0 + u.exp()) * (1.0 - (-vdd / VT300).exp());
        let id = drain_current(&p, 0.0, vdd, 300.0);
        // The strong-inversion term is below 1e-10 of the total at vgs = 0.
        assert!((id - sub).abs() / sub < 1e-9, "{id} vs {sub}");
    }

    #[test]
    fn zero_coefficients_remove_temperature() {
        let p = CompactModelParams {
            alpha_mu: 0.0,
            alpha_vsat: 0.0,
            k_vth: 0.0,
            ..nfet()
        };
        for (vgs, vds) in [(0.0, 0.75), (0.4, 0.05), (0.75, 0.75)] {
            assert_eq!(drain_current(&p, vgs, vds, 300.0), drain_current(&p, vgs, vds, 400.0));
        }
    }

    #[test]
    fn on_current_drops_with_temperature() {
        let p = nfet();
        let mut last = f64::MAX;
        for t in [300.0, 330.0, 360.0, 400.0, 450.0] {
            let id = drain_current(&p, 0.75, 0.75, t);
            assert!(id < last);
            last = id;
        }
    }

    #[test]
    fn zero_bias_gives_zero_current() {
        let p = nfet();
        assert_eq!(drain_current(&p, 0.5, 0.0, 300.0), 0.0);
        let pp = p.mirrored();
        assert_eq!(drain_current(&pp, -0.5, 0.0, 300.0), 0.0);
    }

    #[test]
    fn reverse_bias_is_antisymmetric() {
        let p = nfet();
        // With the gate referenced to the other terminal the roles swap.
        let fwd = drain_current(&p, 0.6, 0.3, 320.0);
        let rev = drain_current(&p, 0.6 - 0.3, -0.3, 320.0);
        assert!((fwd + rev).abs() < 1e-15);
    }

    #[test]
    fn blend_is_continuous() {
        let p = nfet();
        let h = 1e-9;
        let mut v = -0.2;
        while v < 0.75 {
            let a = drain_current(&p, v, 0.75, 300.0);
            let b = drain_current(&p, v + h, 0.75, 300.0);
            assert!((b - a).abs() <= 1e-6 * a.abs().max(1e-30), "jump at vgs = {v}");
            v += 0.001;
        }
    }

    proptest! {
        #[test]
        fn monotone_in_vgs(vds in 0.0f64..0.9, t in 250.0f64..500.0, a in -0.3f64..0.9, d in 0.0f64..0.3) {
            let p = nfet();
            prop_assert!(drain_current(&p, a + d, vds, t) >= drain_current(&p, a, vds, t));
        }

        #[test]
        fn polarity_reflection(vgs in -0.9f64..0.9, vds in -0.9f64..0.9, t in 250.0f64..500.0) {
            let n = nfet();
            let p = n.mirrored();
            let i_n = drain_current(&n, vgs, vds, t);
            let i_p = drain_current(&p, -vgs, -vds, t);
            prop_assert!((i_n + i_p).abs() <= 1e-12 * i_n.abs().max(1e-30));
        }

        #[test]
        fn continuous_in_bias_and_temperature(vgs in -0.3f64..0.9, vds in -0.9f64..0.9, t in 250.0f64..500.0) {
            let p = nfet();
            let base = drain_current(&p, vgs, vds, t);
            // Near vds = 0 the current itself vanishes; measure steps against
            // the current the same gate bias drives at a small drain bias.
            let scale = base.abs().max(drain_current(&p, vgs, 0.1, t).abs());
            for (dg, dd, dt) in [(1e-9, 0.0, 0.0), (0.0, 1e-9, 0.0), (0.0, 0.0, 1e-7)] {
                let moved = drain_current(&p, vgs + dg, vds + dd, t + dt);
                prop_assert!((moved - base).abs() <= 1e-6 * scale);
            }
        }
    }
}
