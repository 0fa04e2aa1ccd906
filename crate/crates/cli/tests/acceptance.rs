//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! failing checks listed underneath, and exits non-zero if any fails.
//!
//! Every analytic reference is computed here, independently of the solvers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use cfet_core::circuit::{inverter_experiment, inverter_delay, transient, InverterSetup, Netlist, Pwl, TransientOptions, GROUND};
use cfet_core::config::RunConfig;
use cfet_core::device::{calibrate, extract_targets, CompactModelParams};
use cfet_core::geometry::{locate_conductors, voxelize, Aabb, Design, DeviceSpec, Polarity, Refinement, Region};
use cfet_core::materials::{default_library, Material, MaterialLibrary};
use cfet_core::parasitics::{
    extract_capacitance, extract_resistance, CapacitanceOptions, Conductor, Contact, ResistancePair,
};
use cfet_core::pipeline::{delay_experiment, extract_design, prepare_devices, thermal_run};
use cfet_core::thermal::{assemble, solve_steady, BcKind, HeatSource, TemperatureField, ThermalBC};

const EPS0: f64 = 8.854_187_812_8e-12;

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn add(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.0.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfetsim"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Ratio sheet for the published RC elements: (element, bottom vs 2-tier,
/// top vs 2-tier).
const REFERENCE_RATIOS: [(&str, f64, f64); 8] = [
    ("RGround_NSource", 3.15, 7.43),
    ("RPower_PSource", 4.29, 10.60),
    ("RInput_Gate", 13.93, 2.09),
    ("ROutput_Drain", 18.89, 4.86),
    ("CInput_Power", 21.87, 5.28),
    ("CGate_NSource", 1.07, 1.16),
    ("CGate_Drain", 1.13, 1.08),
    ("COutput_Gate", 0.11, 0.07),
];

fn ratio_reproduction(ck: &mut Checks, dir: &Path) {
    for (variant, column) in [("4tier-bottom", 1), ("4tier-top", 2)] {
        let out = dir.join(format!("ratio_{variant}.csv"));
        let status = cli()
            .args(["compare", "--base"])
            .arg(fixture("2tier.sp"))
            .arg("--variant")
            .arg(fixture(&format!("{variant}.sp")))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            ck.add(format!("compare {variant}"), false, String::from_utf8_lossy(&status.stderr));
            continue;
        }
        let text = std::fs::read_to_string(&out).unwrap();
        let got: BTreeMap<&str, f64> = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0], f[3].parse().unwrap())
            })
            .collect();
        for (name, bottom, top) in REFERENCE_RATIOS {
            let want = if column == 1 { bottom } else { top };
            match got.get(name) {
                Some(&r) => ck.add(
                    format!("{name} {variant}"),
                    (r - want).abs() <= 0.01 + 1e-9,
                    format!("{r:.2} vs {want:.2}"),
                ),
                None => ck.add(format!("{name} {variant}"), false, "missing from the ratio table"),
            }
        }
    }
}

fn thermal_oracle(ck: &mut Checks) {
    let (n, len_nm, t0) = (64, 64.0, 300.0);
    let lib = default_library();
    let kappa = lib.get("sio2").unwrap().kappa;
    let h = len_nm / n as f64;
    let slab = Region::new(Aabb::new([0.0; 3], [len_nm, 1.0, 1.0]), "sio2");
    let grid = voxelize(&[slab], h, &Refinement::new().with("sio2", h)).unwrap();
    let mut faces = [BcKind::Adiabatic; 6];
    faces[0] = BcKind::Dirichlet(t0);
    faces[1] = BcKind::Dirichlet(t0);
    let op = assemble(&grid, &lib, &ThermalBC { faces, ambient: t0 }).unwrap();
    let tol = 1e-12;
    let q = 1e18;
    let uniform = HeatSource { q: vec![q; grid.len()] };
    let f = solve_steady(&op, &uniform, tol, None).unwrap();
    let l = len_nm * 1e-9;
    let worst = (0..grid.len())
        .map(|c| {
            let x = grid.center(c)[0] * 1e-9;
            rel(f.t[c] - t0, q * x * (l - x) / (2.0 * kappa))
        })
        .fold(0.0, f64::max);
    ck.add("parabolic profile", worst < 0.01, format!("max relative error {worst:.2e}"));
    let balance = op.energy_balance(&f, &uniform).relative;
    ck.add("energy balance", balance < 1e-6, format!("{balance:.2e}"));

    let rise = |f: &TemperatureField| f.t.iter().map(|t| t - t0).collect::<Vec<_>>();
    let peak = rise(&f).into_iter().fold(0.0, f64::max);
    let spot = HeatSource {
        q: (0..grid.len()).map(|c| if c % 7 == 3 { 4e18 } else { 0.0 }).collect(),
    };
    let both = HeatSource {
        q: uniform.q.iter().zip(&spot.q).map(|(a, b)| a + b).collect(),
    };
    let (a, b, ab) = (
        rise(&f),
        rise(&solve_steady(&op, &spot, tol, None).unwrap()),
        rise(&solve_steady(&op, &both, tol, None).unwrap()),
    );
    let sup = (0..a.len()).map(|c| (a[c] + b[c] - ab[c]).abs()).fold(0.0, f64::max) / peak;
    ck.add("superposition", sup < 1e-8, format!("max deviation {sup:.2e} of the peak"));
    let tripled = rise(&solve_steady(&op, &uniform.scaled(3.0), tol, None).unwrap());
    let sc = (0..a.len()).map(|c| (3.0 * a[c] - tripled[c]).abs()).fold(0.0, f64::max) / (3.0 * peak);
    ck.add("scaling", sc < 1e-8, format!("max deviation {sc:.2e} of the peak"));
}

fn vacuum_library() -> MaterialLibrary {
    default_library().with_material(Material::dielectric("vac", 1.0, 1.0)).unwrap()
}

fn conductors(grid: &cfet_core::geometry::VoxelGrid) -> Vec<Conductor> {
    locate_conductors(grid)
        .unwrap()
        .into_iter()
        .map(|(name, cells)| Conductor { name, cells })
        .collect()
}

fn bar(segments: &[(&str, f64)], side: f64) -> (cfet_core::geometry::VoxelGrid, Vec<usize>) {
    let total: f64 = segments.iter().map(|s| s.1).sum();
    let mut regions = vec![Region::new(
        Aabb::from_ranges((0.0, total), (-side, 2.0 * side), (-side, 2.0 * side)),
        "vac",
    )];
    let mut x = 0.0;
    for (material, len) in segments {
        regions.push(Region::new(Aabb::from_ranges((x, x + len), (0.0, side), (0.0, side)), material));
        x += len;
    }
    let grid = voxelize(&regions, 1.0, &Refinement::new()).unwrap();
    let body = (0..grid.len()).filter(|&c| grid.material(c) != "vac").collect();
    (grid, body)
}

fn end_to_end(segments: &[(&str, f64)], side: f64) -> f64 {
    let (grid, body) = bar(segments, side);
    let pair = ResistancePair {
        a: "left".into(),
        b: "right".into(),
        body,
        contact_a: Contact::Face(0),
        contact_b: Contact::Face(1),
    };
    extract_resistance(&grid, &vacuum_library(), &[pair], 1e-10).unwrap().entries[0].ohms
}

fn extraction_oracles(ck: &mut Checks) {
    // Sense plate inside a guard ring five gaps wide; the guard soaks up the
    // fringing field so the sense coupling approaches εA/d.
    let (w, d, t) = (20.0, 2.0, 1.0);
    let g = 5.0 * d;
    let span = (-g, w + g);
    let regions = [
        Region::new(Aabb::from_ranges((-2.0 * g, w + 2.0 * g), (-2.0 * g, w + 2.0 * g), (-t - g, d + t + g)), "vac"),
        Region::new(Aabb::from_ranges(span, span, (-t, 0.0)), "interconnect_metal").conductor("bottom"),
        Region::new(Aabb::from_ranges(span, span, (d, d + t)), "interconnect_metal").conductor("guard"),
        Region::new(Aabb::from_ranges((0.0, w), (0.0, w), (d, d + t)), "interconnect_metal").conductor("sense"),
    ];
    let grid = voxelize(&regions, 1.0, &Refinement::new()).unwrap();
    let cm = extract_capacitance(&grid, &vacuum_library(), &conductors(&grid), &CapacitanceOptions::default()).unwrap();
    let ideal = EPS0 * w * w * 1e-18 / (d * 1e-9);
    let c = cm.coupling("bottom", "sense").unwrap();
    ck.add("parallel plate", rel(c, ideal) < 0.05, format!("{c:.4e} F vs {ideal:.4e} F"));

    let rho = vacuum_library().get("interconnect_metal").unwrap().rho_e.unwrap();
    let (len, side) = (60.0, 6.0);
    let r = end_to_end(&[("interconnect_metal", len)], side);
    let ideal = rho * len * 1e-9 / (side * side * 1e-18);
    ck.add("uniform bar", rel(r, ideal) < 0.02, format!("{r:.4} Ω vs {ideal:.4} Ω"));

    let ra = end_to_end(&[("interconnect_metal", 30.0)], 4.0);
    let rb = end_to_end(&[("gate_metal", 30.0)], 4.0);
    let rab = end_to_end(&[("interconnect_metal", 30.0), ("gate_metal", 30.0)], 4.0);
    ck.add("series additivity", rel(rab, ra + rb) < 0.02, format!("{rab:.4} Ω vs {:.4} Ω", ra + rb));

    let x = extract_design(&RunConfig::default(), Design::TwoTier).unwrap();
    let cm = &x.capacitance;
    let n = cm.names.len();
    let scale = (0..n).map(|i| cm.c[i][i]).fold(0.0, f64::max);
    let mut worst_sym = 0.0f64;
    let (mut sign_ok, mut dominant) = (true, true);
    for i in 0..n {
        sign_ok &= cm.c[i][i] > 0.0;
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                worst_sym = worst_sym.max((cm.c[i][j] - cm.c[j][i]).abs() / scale);
                sign_ok &= cm.c[i][j] <= 0.0;
                off += cm.c[i][j].abs();
            }
        }
        dominant &= cm.c[i][i] >= off * (1.0 - 1e-6);
    }
    ck.add("matrix symmetry", worst_sym < 1e-9, format!("{worst_sym:.1e}; raw solve asymmetry {:.1e}", cm.asymmetry));
    ck.add("matrix signs", sign_ok, "positive diagonal, non-positive couplings");
    ck.add("diagonal dominance", dominant, format!("{n} conductors"));
}

fn she_ordering(ck: &mut Checks) {
    let mut cfg = RunConfig::default();
    let devices = prepare_devices(&cfg).unwrap();
    let run = |cfg: &RunConfig, tier| thermal_run(cfg, Some(&devices), tier).unwrap();
    let (p, n) = (run(&cfg, 0), run(&cfg, 1));
    ck.add(
        "2-tier pFET hotter than nFET",
        p.delta_t_max > n.delta_t_max,
        format!("{:.2} K vs {:.2} K at a {:.3}x on-current ratio", p.delta_t_max, n.delta_t_max, cfg.targets.ion_p / cfg.targets.ion_n),
    );
    cfg.stack.tiers = 4;
    let runs: Vec<_> = (0..4).map(|t| run(&cfg, t)).collect();
    for (name, bottom, top) in [("pFET", 0, 2), ("nFET", 1, 3)] {
        let (b, t) = (&runs[bottom], &runs[top]);
        ck.add(
            format!("4-tier top {name} hotter than bottom"),
            t.delta_t_max > b.delta_t_max,
            format!("{:.2} K vs {:.2} K", t.delta_t_max, b.delta_t_max),
        );
        let (db, dt) = (b.ion_degradation.unwrap(), t.ion_degradation.unwrap());
        ck.add(
            format!("4-tier {name} on-current degradation"),
            db > 0.0 && dt > db,
            format!("top {:.3}% vs bottom {:.3}%", 100.0 * dt, 100.0 * db),
        );
    }
}

fn delay_suite(ck: &mut Checks) {
    let (r, c) = (2e3, 5e-16);
    let tau = r * c;
    let mut net = Netlist::new();
    net.source("V1", "in", GROUND, Pwl::new(vec![(0.0, 0.0), (tau * 1e-6, 1.0)]).unwrap()).unwrap();
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
    ck.add("single-pole RC", rel(t50, ideal) < 0.01, format!("{t50:.4e} s vs {ideal:.4e} s"));

    let cfg = RunConfig::default();
    let devices = prepare_devices(&cfg).unwrap();
    let mut tp_with = BTreeMap::new();
    for design in Design::ALL {
        let x = extract_design(&cfg, design).unwrap();
        let o = delay_experiment(&cfg, &devices, design, &x.netlist, false).unwrap();
        let e = &o.experiment;
        ck.add(
            format!("{design} parasitics slow the gate"),
            e.tp_with() > e.tp_without(),
            format!("{:.4} ps -> {:.4} ps", e.tp_without() * 1e12, e.tp_with() * 1e12),
        );
        tp_with.insert(design.name(), e.tp_with());
    }
    let setup = cfet_core::pipeline::inverter_setup(&cfg, &devices, Design::TwoTier);
    let empty = inverter_experiment(&setup, &Netlist::new()).unwrap();
    ck.add("empty parasitics", empty.degradation() == 0.0, format!("degradation {:e}", empty.degradation()));
    let coarse = inverter_delay(&setup, None).unwrap().tp;
    let fine = inverter_delay(&InverterSetup { dt: setup.dt / 2.0, ..setup }, None).unwrap().tp;
    ck.add("dt halving", rel(coarse, fine) < 0.01, format!("{:.3}% change", 100.0 * rel(coarse, fine)));
    let (two, top) = (tp_with["2tier"], tp_with["4tier-top"]);
    ck.add(
        "4-tier top at least as slow as 2-tier",
        top >= two,
        format!("{:.4} ps vs {:.4} ps", top * 1e12, two * 1e12),
    );
}

fn calibration_round_trip(ck: &mut Checks) {
    let spec = DeviceSpec::default();
    let known = [
        CompactModelParams {
            vth0: 0.31,
            n_ss: 1.25,
            i0: 2e-7,
            vsat0: 9e4,
            ..CompactModelParams::seed(Polarity::N, &spec)
        },
        CompactModelParams {
            vth0: 0.22,
            n_ss: 1.1,
            i0: 5e-7,
            vsat0: 1.5e5,
            ..CompactModelParams::seed(Polarity::N, &spec)
        },
        CompactModelParams {
            vth0: -0.28,
            n_ss: 1.3,
            i0: 3e-7,
            vsat0: 7e4,
            ..CompactModelParams::seed(Polarity::P, &spec)
        },
    ];
    for (k, p) in known.iter().enumerate() {
        let targets = extract_targets(p, spec.vdd);
        let seed = CompactModelParams::seed(p.polarity, &spec);
        let cal = match calibrate(&targets, &seed) {
            Ok(c) => c,
            Err(e) => {
                ck.add(format!("set {k}"), false, e.to_string());
                continue;
            }
        };
        let got = extract_targets(&cal.params, spec.vdd);
        for (stage, a, b) in [
            ("V_TH", got.vth, targets.vth),
            ("SS", got.ss, targets.ss),
            ("I_OFF", got.ioff, targets.ioff),
            ("I_ON", got.ion, targets.ion),
        ] {
            ck.add(format!("set {k} {stage}"), rel(a, b) < 0.01, format!("{a:.5e} vs {b:.5e}"));
        }
    }
}

fn run_pipeline(dir: &Path, threads: &str) -> Result<(), String> {
    let d = dir.to_str().unwrap();
    let netlist = dir.join("netlist.sp");
    let steps: [Vec<&str>; 4] = [
        vec!["calibrate", "--out", d],
        vec!["thermal", "--device", "0:p", "--out", d],
        vec!["extract", "--design", "2tier", "--out", d],
        vec!["delay", "--design", "2tier", "--she", "on", "--parasitics", netlist.to_str().unwrap(), "--out", d],
    ];
    for args in steps {
        let out = cli().args(&args).env("CFETSIM_THREADS", threads).output().unwrap();
        if !out.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn determinism(ck: &mut Checks, dir: &Path) {
    let (a, b) = (dir.join("first"), dir.join("second"));
    for (d, threads) in [(&a, "1"), (&b, "3")] {
        if let Err(e) = run_pipeline(d, threads) {
            ck.add("pipeline run", false, e);
            return;
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    for name in &names {
        let same = std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap_or_default();
        ck.add(name.clone(), same, if same { "identical" } else { "differs" });
    }
    ck.add("report count", names.len() >= 10, format!("{} CSV reports", names.len()));
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let criteria: [(&str, f64, Box<dyn Fn(&mut Checks)>); 7] = [
        ("ratio reproduction", 1.0, Box::new(|ck| ratio_reproduction(ck, tmp.path()))),
        ("thermal analytic oracle", 5.0, Box::new(thermal_oracle)),
        ("extraction analytic oracles", 60.0, Box::new(extraction_oracles)),
        ("self-heating orderings", 120.0, Box::new(she_ordering)),
        ("delay suite", 60.0, Box::new(delay_suite)),
        ("calibration round trip", 5.0, Box::new(calibration_round_trip)),
        ("determinism", f64::INFINITY, Box::new(|ck| determinism(ck, tmp.path()))),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let mut ck = Checks::default();
        let start = Instant::now();
        run(&mut ck);
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < *budget;
        let bad: Vec<&Check> = ck.0.iter().filter(|c| !c.pass).collect();
        let pass = bad.is_empty() && in_time && !ck.0.is_empty();
        let limit = if budget.is_finite() { format!(", limit {budget} s") } else { String::new() };
        println!(
            "{} criterion {}: {name} ({}/{} checks, {secs:.1} s{limit})",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            ck.0.len() - bad.len(),
            ck.0.len()
        );
        for c in &ck.0 {
            println!("    {} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
        }
        if !in_time {
            println!("    FAIL runtime over the limit");
        }
        failed += usize::from(!pass);
    }
    println!("{} of 7 criteria pass", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
