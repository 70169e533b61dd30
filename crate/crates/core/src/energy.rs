//! Energy and operation-count estimates for a run.
//!
//! The SNN side is `N_spikes·e_spike + n_neurons·T·e_leak`; the GPU side is a
//! power envelope `P_gpu·T_process`. Their ratio is a model, never a
//! measurement, and every report says so.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lif::{activity_stats, SpikeRecord};

pub const CAVEAT: &str = "model-based estimate: the GPU figure is a power-envelope model (P_gpu x T_process), \
not a measurement, and the SNN figure assumes the listed per-spike and per-neuron-step costs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareProfile {
    /// Joules per spike, synaptic delivery included.
    pub e_spike: f64,
    /// Joules per neuron per timestep.
    pub e_leak: f64,
    pub label: String,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        HardwareProfile { e_spike: 23e-12, e_leak: 1e-13, label: "neuromorphic reference (23 pJ/spike, 0.1 pJ/neuron-step)".into() }
    }
}

impl HardwareProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_spike > 0.0 && self.e_leak > 0.0 && self.e_spike.is_finite() && self.e_leak.is_finite()) {
            return Err(Error::params("e_spike and e_leak must be positive"));
        }
        Ok(())
    }
}

/// Where `t_process` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingSource {
    /// Wall time of the classical oracle on this host.
    #[default]
    HostMeasured,
    UserSupplied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuBaseline {
    /// Watts.
    pub p_gpu: f64,
    /// Seconds.
    pub t_process: f64,
    pub timing: TimingSource,
}

impl GpuBaseline {
    pub const DEFAULT_WATTS: f64 = 300.0;

    pub fn new(p_gpu: f64, t_process: f64, timing: TimingSource) -> Result<Self> {
        let b = GpuBaseline { p_gpu, t_process, timing };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_gpu > 0.0 && self.p_gpu.is_finite()) {
            return Err(Error::params("p_gpu must be positive"));
        }
        if !(self.t_process >= 0.0 && self.t_process.is_finite()) {
            return Err(Error::params("t_process must be non-negative"));
        }
        Ok(())
    }
}

/// Integer activity counters. Merging is exact, associative and commutative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub spikes: u64,
    pub neuron_steps: u64,
    pub synaptic_events: u64,
    pub runs: u64,
}

impl EnergyLedger {
    pub fn from_record(record: &SpikeRecord) -> Self {
        EnergyLedger {
            spikes: record.total_spikes(),
            neuron_steps: record.n_neurons as u64 * record.t_sim as u64,
            synaptic_events: record.synaptic_events,
            runs: 1,
        }
    }

    pub fn add_record(&mut self, record: &SpikeRecord) {
        self.merge(&EnergyLedger::from_record(record));
    }

    pub fn merge(&mut self, other: &EnergyLedger) {
        self.spikes += other.spikes;
        self.neuron_steps += other.neuron_steps;
        self.synaptic_events += other.synaptic_events;
        self.runs += other.runs;
    }

    pub fn joules(&self, hw: &HardwareProfile) -> f64 {
        self.spikes as f64 * hw.e_spike + self.neuron_steps as f64 * hw.e_leak
    }
}

/// `N_spikes·e_spike + n_neurons·T·e_leak` from raw counts.
pub fn energy_from_counts(spikes: u64, n_neurons: usize, timesteps: u32, hw: &HardwareProfile) -> f64 {
    spikes as f64 * hw.e_spike + n_neurons as f64 * timesteps as f64 * hw.e_leak
}

pub fn snn_energy(record: &SpikeRecord, n_neurons: usize, timesteps: u32, hw: &HardwareProfile) -> f64 {
    energy_from_counts(record.total_spikes(), n_neurons, timesteps, hw)
}

pub fn gpu_energy(b: &GpuBaseline) -> f64 {
    b.p_gpu * b.t_process
}

/// Counted operations next to the closed-form estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub m: usize,
    pub n: usize,
    pub neurons: usize,
    pub mean_rate_hz: f64,
    pub timesteps: u32,
    pub dt: f64,
    /// Mean synaptic fan-in over all neurons of the run.
    pub mean_fan_in: f64,
    pub spikes_per_neuron: f64,
    /// Spike-synapse propagations the engine actually performed.
    pub op_count_snn: u64,
    /// `neurons · r · T·dt · C`.
    pub op_estimate_snn: f64,
    /// `MN · log2(MN)`, the network-flow comparator.
    pub op_count_classical: f64,
}

impl ComplexityReport {
    /// `synapses` is the number of synapses spikes can travel along in the run.
    pub fn from_record(m: usize, n: usize, record: &SpikeRecord, synapses: usize) -> Self {
        let stats = activity_stats(record);
        let neurons = record.n_neurons;
        let c = if neurons == 0 { 0.0 } else { synapses as f64 / neurons as f64 };
        let seconds = record.t_sim as f64 * record.dt;
        let mn = (m * n) as f64;
        ComplexityReport {
            m,
            n,
            neurons,
            mean_rate_hz: stats.mean_rate_hz,
            timesteps: record.t_sim,
            dt: record.dt,
            mean_fan_in: c,
            spikes_per_neuron: stats.spikes_per_neuron,
            op_count_snn: record.synaptic_events,
            op_estimate_snn: neurons as f64 * stats.mean_rate_hz * seconds * c,
            op_count_classical: if mn > 1.0 { mn * mn.log2() } else { 0.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub snn_joules: f64,
    pub gpu_joules: f64,
    /// `gpu / snn`; absent when the SNN energy is zero.
    pub ratio: Option<f64>,
    pub ratio_unbounded: bool,
    pub caveat: String,
    pub complexity: ComplexityReport,
}

pub fn efficiency_report(snn: f64, gpu: f64, complexity: ComplexityReport) -> EfficiencyReport {
    let unbounded = snn == 0.0;
    EfficiencyReport {
        snn_joules: snn,
        gpu_joules: gpu,
        ratio: if unbounded { None } else { Some(gpu / snn) },
        ratio_unbounded: unbounded,
        caveat: CAVEAT.to_string(),
        complexity,
    }
}

impl EfficiencyReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::params(e.to_string()))
    }
}

impl fmt::Display for EfficiencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.complexity;
        let ratio = match self.ratio {
            Some(r) => format!("{r:.4e}"),
            None => "unbounded (zero SNN energy)".into(),
        };
        writeln!(f, "{:<28} {:>14.6e} J", "SNN energy", self.snn_joules)?;
        writeln!(f, "{:<28} {:>14.6e} J", "GPU energy (model)", self.gpu_joules)?;
        writeln!(f, "{:<28} {:>14}", "GPU / SNN", ratio)?;
        writeln!(f, "{:<28} {:>14}", "grid", format!("{}x{}", c.m, c.n))?;
        writeln!(f, "{:<28} {:>14}", "neurons", c.neurons)?;
        writeln!(f, "{:<28} {:>14.3}", "mean rate (Hz)", c.mean_rate_hz)?;
        writeln!(f, "{:<28} {:>14}", "timesteps", c.timesteps)?;
        writeln!(f, "{:<28} {:>14.3}", "mean fan-in", c.mean_fan_in)?;
        writeln!(f, "{:<28} {:>14.3}", "spikes per neuron", c.spikes_per_neuron)?;
        writeln!(f, "{:<28} {:>14}", "synaptic events (counted)", c.op_count_snn)?;
        writeln!(f, "{:<28} {:>14.0}", "synaptic events (estimate)", c.op_estimate_snn)?;
        writeln!(f, "{:<28} {:>14.0}", "classical ops (MN log MN)", c.op_count_classical)?;
        write!(f, "note: {}", self.caveat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn record(spikes: &[(u32, usize)], n: usize, t: u32) -> SpikeRecord {
        let mut r = SpikeRecord::new(n, t, 1e-3);
        for &(step, neuron) in spikes {
            r.push(step, 0, &[neuron]);
        }
        r
    }

    #[test]
    fn snn_energy_examples() {
        let hw = HardwareProfile::default();
        assert_relative_eq!(energy_from_counts(0, 12288, 200, &hw), 2.4576e-7, max_relative = 1e-12);
        let e = energy_from_counts(1_000_000, 12288, 200, &hw);
        assert_relative_eq!(e, 1e6 * 23e-12 + 2.4576e-7, max_relative = 1e-12);
        assert_eq!(format!("{e:.5e}"), "2.32458e-5");
        let leak = energy_from_counts(0, 12288, 200, &hw);
        let one = energy_from_counts(5000, 12288, 200, &hw) - leak;
        let two = energy_from_counts(10000, 12288, 200, &hw) - leak;
        assert_relative_eq!(two, 2.0 * one, max_relative = 1e-9);
    }

    #[test]
    fn gpu_energy_examples() {
        let g = |w, t| gpu_energy(&GpuBaseline::new(w, t, TimingSource::UserSupplied).unwrap());
        assert_relative_eq!(g(300.0, 0.1), 30.0, max_relative = 1e-15);
        assert_eq!(g(300.0, 0.0), 0.0);
        assert_eq!(g(300.0, 1.0), 300.0);
        assert!(GpuBaseline::new(0.0, 1.0, TimingSource::UserSupplied).is_err());
        assert!(GpuBaseline::new(300.0, -1.0, TimingSource::UserSupplied).is_err());
    }

    #[test]
    fn report_ratio_and_caveat() {
        let r = record(&[], 4, 10);
        let c = ComplexityReport::from_record(2, 2, &r, 0);
        let rep = efficiency_report(2.3e-5, 30.0, c.clone());
        assert_relative_eq!(rep.ratio.unwrap(), 1.304e6, max_relative = 1e-3);
        assert!(!rep.ratio_unbounded);
        let zero = efficiency_report(0.0, 30.0, c);
        assert_eq!(zero.ratio, None);
        assert!(zero.ratio_unbounded);
        for rep in [rep, zero] {
            assert!(rep.to_string().contains(CAVEAT));
            let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
            assert_eq!(json["caveat"], CAVEAT);
            assert!(json["complexity"]["op_count_snn"].is_u64());
        }
    }

    #[test]
    fn ledger_matches_record() {
        let mut r = record(&[(0, 1), (3, 2), (3, 0)], 3, 5);
        r.synaptic_events = 7;
        let l = EnergyLedger::from_record(&r);
        assert_eq!(l, EnergyLedger { spikes: 3, neuron_steps: 15, synaptic_events: 7, runs: 1 });
        let hw = HardwareProfile::default();
        assert_eq!(l.joules(&hw), snn_energy(&r, 3, 5, &hw));
        assert!(HardwareProfile { e_leak: 0.0, ..hw }.validate().is_err());
    }

    proptest! {
        #[test]
        fn ledger_is_additive(a in (0u64..1 << 40, 0u64..1 << 40, 0u64..1 << 40), b in (0u64..1 << 40, 0u64..1 << 40, 0u64..1 << 40)) {
            let la = EnergyLedger { spikes: a.0, neuron_steps: a.1, synaptic_events: a.2, runs: 1 };
            let lb = EnergyLedger { spikes: b.0, neuron_steps: b.1, synaptic_events: b.2, runs: 1 };
            let mut ab = la;
            ab.merge(&lb);
            let mut ba = lb;
            ba.merge(&la);
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(ab.spikes, a.0 + b.0);
            let hw = HardwareProfile::default();
            let sum = la.joules(&hw) + lb.joules(&hw);
            prop_assert!((ab.joules(&hw) - sum).abs() <= 1e-12 * sum.max(1e-30));
        }

        #[test]
        fn energy_monotone(spikes in 0u64..1 << 30, extra in 0u64..1 << 20, t in 1u32..1000, dt in 0u32..100) {
            let hw = HardwareProfile::default();
            prop_assert!(energy_from_counts(spikes + extra, 100, t, &hw) >= energy_from_counts(spikes, 100, t, &hw));
            prop_assert!(energy_from_counts(spikes, 100, t + dt, &hw) >= energy_from_counts(spikes, 100, t, &hw));
        }
    }
}
