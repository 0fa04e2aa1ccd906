//! `cfetsim`: thermal, extraction, comparison, delay and calibration runs
//! driven by an INI configuration.
//!
//! Exit codes: 0 success, 2 bad input (usage, configuration, unreadable or
//! malformed files), 3 solver or measurement failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};

use cfet_core::circuit::Netlist;
use cfet_core::config::RunConfig;
use cfet_core::geometry::Design;
use cfet_core::parasitics::compare_tiers;
use cfet_core::pipeline::{
    delay_experiment, devices_csv, extract_design, parse_device, prepare_devices, thermal_run,
    Extraction,
};
use cfet_core::report::{num, write_atomic};
use cfet_core::thermal::{export_heatmap, HeatmapFormat};
use cfet_core::{Error, Result};

/// Environment variable read when `--threads` is not given.
const THREADS_ENV: &str = "CFETSIM_THREADS";

#[derive(Parser)]
#[command(name = "cfetsim", version, about = "Electro-thermal, parasitic and delay analysis of stacked CFET inverters")]
struct Cli {
    /// Worker threads for the field solvers. Falls back to $CFETSIM_THREADS,
    /// then to the number of cores. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady temperature field of one self-heated device.
    Thermal {
        #[command(flatten)]
        common: Common,
        /// Heated device as <tier>:<n|p>, tier 0 at the bottom.
        #[arg(long)]
        device: String,
    },
    /// Capacitance matrix, rail resistances and parasitic netlist of an
    /// inverter design.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Inverter design: 2tier, 4tier-bottom or 4tier-top.
        #[arg(long, value_parser = parse_design)]
        design: Design,
    },
    /// Element-wise ratio of two parasitic netlists.
    Compare {
        /// Reference netlist.
        #[arg(long)]
        base: PathBuf,
        /// Netlist divided by the reference.
        #[arg(long)]
        variant: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Inverter delay with and without parasitics.
    Delay {
        #[command(flatten)]
        common: Common,
        /// Inverter design: 2tier, 4tier-bottom or 4tier-top.
        #[arg(long, value_parser = parse_design)]
        design: Design,
        /// `on` extracts the design, `off` uses no parasitics, anything else
        /// is read as a netlist file.
        #[arg(long, default_value = "on")]
        parasitics: String,
        /// Run the devices at their self-heated channel temperatures.
        #[arg(long, default_value = "off", value_parser = parse_switch, action = ArgAction::Set)]
        she: bool,
    },
    /// Fits both compact models to the configured device targets.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file; every key has a default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created when missing.
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(cfg)
    }
}

fn parse_design(s: &str) -> std::result::Result<Design, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_switch(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on or off, got `{other}`")),
    }
}

fn thread_count(flag: Option<usize>) -> std::result::Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("{THREADS_ENV}=`{v}` is not a thread count")),
        Err(_) => Ok(None),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&dir.join(name), text.as_bytes())
}

fn read_netlist(path: &Path) -> Result<Netlist> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Netlist::parse_spice(&text, &path.display().to_string())
}

fn write_extraction(dir: &Path, x: &Extraction) -> Result<()> {
    let title = format!("parasitic network of the {} inverter", x.design);
    write(dir, "netlist.sp", &x.netlist.to_spice(&title))?;
    write(dir, "capacitance.csv", &x.capacitance.to_csv())?;
    write(dir, "resistance.csv", &x.resistance.to_csv())?;
    write(dir, "diagnostics.csv", &x.diagnostics_csv())?;
    write(dir, "geometry.csv", &x.regions_csv)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Thermal { common, device } => {
            let cfg = common.load()?;
            let tier = parse_device(&device, &cfg.stack.stack(cfg.stack.tiers))?;
            let devices = match cfg.thermal.power {
                Some(_) => None,
                None => Some(prepare_devices(&cfg)?),
            };
            let r = thermal_run(&cfg, devices.as_ref(), tier)?;
            export_heatmap(&r.field, &r.grid, &common.out.join("heatmap.csv"), HeatmapFormat::Csv)?;
            export_heatmap(&r.field, &r.grid, &common.out.join("heatmap.vtk"), HeatmapFormat::VtkLegacy)?;
            write(&common.out, "thermal_summary.csv", &r.summary_csv())?;
            println!(
                "device {}:{} power_W={} delta_t_max_K={} energy_balance_rel={}",
                r.tier,
                r.polarity,
                num(r.power),
                num(r.delta_t_max),
                num(r.energy.relative)
            );
        }
        Command::Extract { common, design } => {
            let cfg = common.load()?;
            let x = extract_design(&cfg, design)?;
            write_extraction(&common.out, &x)?;
            println!(
                "{design}: {} resistors and capacitors, {} couplings under the floor",
                x.netlist.len(),
                x.pruning.pruned.len()
            );
        }
        Command::Compare { base, variant, out } => {
            let table = compare_tiers(&read_netlist(&base)?, &read_netlist(&variant)?)?;
            write_atomic(&out, table.to_csv().as_bytes())?;
            for name in table.only_in_base.iter().chain(&table.only_in_variant) {
                eprintln!("note: {name} is missing from one netlist and was skipped");
            }
            println!("{} ratios written to {}", table.rows.len(), out.display());
        }
        Command::Delay {
            common,
            design,
            parasitics,
            she,
        } => {
            let cfg = common.load()?;
            let net = match parasitics.as_str() {
                "off" => Netlist::new(),
                "on" => {
                    let x = extract_design(&cfg, design)?;
                    write_extraction(&common.out, &x)?;
                    x.netlist
                }
                path => read_netlist(Path::new(path))?,
            };
            let devices = prepare_devices(&cfg)?;
            let o = delay_experiment(&cfg, &devices, design, &net, she)?;
            write(&common.out, "delay_report.csv", &o.report_csv())?;
            write(&common.out, "waveforms_without.csv", &o.experiment.without.waveforms.to_csv())?;
            write(&common.out, "waveforms_with.csv", &o.experiment.with.waveforms.to_csv())?;
            print!("{}", o.report_csv());
        }
        Command::Calibrate { common } => {
            let cfg = common.load()?;
            let devices = prepare_devices(&cfg)?;
            for (name, cal) in &devices.calibrations {
                write(&common.out, &format!("calibration_{name}.csv"), &cal.report())?;
            }
            write(&common.out, "devices.csv", &devices_csv(&devices))?;
            println!("capacitance_scale={}", num(devices.capacitance_scale));
        }
    }
    Ok(())
}

/// Usage of the subcommand named in `args`, or of the program.
fn usage(args: &[String]) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let sub = args.get(1).filter(|a| cmd.find_subcommand(a.as_str()).is_some());
    match sub {
        Some(name) => cmd.find_subcommand_mut(name).unwrap().render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", usage(&args));
            return ExitCode::from(2);
        }
    };
    let threads = match thread_count(cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
