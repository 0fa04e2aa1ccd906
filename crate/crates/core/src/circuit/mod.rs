//! Netlists, transient simulation and inverter delay experiments.

mod inverter;
mod netlist;
mod transient;

pub use inverter::{
    electro_thermal_delay, fanout_load, fit_intrinsic_capacitance, inverter_delay, inverter_experiment,
    inverter_netlist, DelayRun, DeviceHeating, ElectroThermalResult, ExperimentResult, InverterSetup, Stimulus,
    RAIL_TERMINALS,
};
pub use netlist::{Element, Netlist, Pwl, GROUND};
pub use transient::{
    edge_delays, propagation_delay, transient, InitialState, TransientOptions, TransientResult, Waveform,
};
