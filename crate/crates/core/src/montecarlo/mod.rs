//! Seeded per-pulse simulation of source, tap, loss and detection, and
//! window conditioning on the tap count.
//!
//! Pulses are generated in fixed-size chunks. Chunk `k` draws from the ChaCha
//! stream `k` of the run seed, so serial and parallel runs produce the same
//! records in the same order.

pub mod sampling;

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::{ConditionWindow, ValidatedConfig};
use crate::report::format_value;
pub use sampling::{sample_binomial, sample_geometric, BinomialMethod};

/// Pulses per independently seeded chunk.
pub const CHUNK_PULSES: usize = 4096;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("pulse count must be at least 1")]
    NoPulses,
    #[error("cannot allocate {0} pulse records")]
    Allocation(usize),
    #[error("need at least 2 pulses for tap statistics, have {0}")]
    TooFewPulses(usize),
    #[error("tap standard deviation is zero; window has zero width")]
    ZeroWidthWindow,
}

/// Detected counts of one pump pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PulseRecord {
    pub d_s: u64,
    pub d_i: u64,
    pub n_c: u64,
}

/// Counts with additive read noise; kept alongside, never replacing, the integer counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoisyRecord {
    pub d_s: f64,
    pub d_i: f64,
    pub n_c: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub binomial: BinomialMethod,
    /// Generate every chunk on the calling thread instead of the rayon pool.
    pub serial: bool,
}

/// Simulated pulses of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    records: Vec<PulseRecord>,
    noisy: Option<Vec<NoisyRecord>>,
    /// Index of each record in the run that produced it.
    pulse_index: Vec<u64>,
    config_digest: String,
    seed: u64,
}

/// Per-beam columns as reals, read-noise included when present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Columns {
    pub d_s: Vec<f64>,
    pub d_i: Vec<f64>,
    pub n_c: Vec<f64>,
}

impl Columns {
    pub fn len(&self) -> usize {
        self.d_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_s.is_empty()
    }
}

impl Ensemble {
    /// Assembles an ensemble from records, e.g. ones read back from disk.
    pub fn from_records(records: Vec<PulseRecord>, config_digest: impl Into<String>, seed: u64) -> Self {
        let pulse_index = (0..records.len() as u64).collect();
        Self { records, noisy: None, pulse_index, config_digest: config_digest.into(), seed }
    }

    pub fn records(&self) -> &[PulseRecord] {
        &self.records
    }

    pub fn noisy(&self) -> Option<&[NoisyRecord]> {
        self.noisy.as_deref()
    }

    pub fn pulse_index(&self) -> &[u64] {
        &self.pulse_index
    }

    pub fn pulse_count(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Tap value used for conditioning: the noisy one when read noise is on.
    fn tap_value(&self, k: usize) -> f64 {
        match &self.noisy {
            Some(noisy) => noisy[k].n_c,
            None => self.records[k].n_c as f64,
        }
    }

    pub fn columns(&self) -> Columns {
        match &self.noisy {
            Some(noisy) => Columns {
                d_s: noisy.iter().map(|r| r.d_s).collect(),
                d_i: noisy.iter().map(|r| r.d_i).collect(),
                n_c: noisy.iter().map(|r| r.n_c).collect(),
            },
            None => Columns {
                d_s: self.records.iter().map(|r| r.d_s as f64).collect(),
                d_i: self.records.iter().map(|r| r.d_i as f64).collect(),
                n_c: self.records.iter().map(|r| r.n_c as f64).collect(),
            },
        }
    }

    /// Writes `pulse,d_s,d_i,n_c`, plus noisy columns when present.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["pulse", "d_s", "d_i", "n_c"];
        if self.noisy.is_some() {
            header.extend(["d_s_noisy", "d_i_noisy", "n_c_noisy"]);
        }
        w.write_record(&header)?;
        for (k, r) in self.records.iter().enumerate() {
            let mut row = vec![
                self.pulse_index[k].to_string(),
                r.d_s.to_string(),
                r.d_i.to_string(),
                r.n_c.to_string(),
            ];
            if let Some(noisy) = &self.noisy {
                let n = noisy[k];
                row.extend([format_value(n.d_s), format_value(n.d_i), format_value(n.n_c)]);
            }
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// Draws one pulse through the full chain.
///
/// Matched modes add the same thermal count to both beams; unmatched modes are
/// independent per beam. Each beam is split binomially onto the tap, the tap
/// pool is detected with `eta_tap`, and the transmitted beams with their own
/// efficiencies.
pub fn generate_pulse<R: rand::Rng + ?Sized>(cfg: &ValidatedConfig, method: BinomialMethod, rng: &mut R) -> PulseRecord {
    let src = cfg.source();
    let ch = cfg.channel();
    let lambda = cfg.lambda();
    let mut shared = 0u64;
    for _ in 0..src.matched_modes {
        shared += sample_geometric(lambda, rng);
    }
    let mut own_s = 0u64;
    let mut own_i = 0u64;
    for _ in 0..src.unmatched_modes {
        own_s += sample_geometric(lambda, rng);
        own_i += sample_geometric(lambda, rng);
    }
    let n_s = shared + own_s;
    let n_i = shared + own_i;
    let tap_s = sample_binomial(n_s, ch.tap_ratio, method, rng);
    let tap_i = sample_binomial(n_i, ch.tap_ratio, method, rng);
    let n_c = sample_binomial(tap_s + tap_i, ch.eta_tap, method, rng);
    let d_s = sample_binomial(n_s - tap_s, ch.eta_signal, method, rng);
    let d_i = sample_binomial(n_i - tap_i, ch.eta_idler, method, rng);
    PulseRecord { d_s, d_i, n_c }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

type Chunk = (Vec<PulseRecord>, Vec<NoisyRecord>);

fn run_chunk(cfg: &ValidatedConfig, seed: u64, chunk: usize, len: usize, method: BinomialMethod) -> Chunk {
    let mut rng = chunk_rng(seed, chunk);
    let sd = cfg.channel().read_noise_sd;
    let noise = (sd > 0.0).then(|| Normal::new(0.0, sd).expect("finite read noise"));
    let mut records = Vec::with_capacity(len);
    let mut noisy = Vec::with_capacity(if noise.is_some() { len } else { 0 });
    for _ in 0..len {
        let r = generate_pulse(cfg, method, &mut rng);
        if let Some(normal) = &noise {
            noisy.push(NoisyRecord {
                d_s: r.d_s as f64 + normal.sample(&mut rng),
                d_i: r.d_i as f64 + normal.sample(&mut rng),
                n_c: r.n_c as f64 + normal.sample(&mut rng),
            });
        }
        records.push(r);
    }
    (records, noisy)
}

/// Deterministic ensemble of `pulses` records with default options.
pub fn run_ensemble(cfg: &ValidatedConfig, seed: u64, pulses: usize) -> Result<Ensemble, SimError> {
    run_ensemble_with(cfg, seed, pulses, RunOptions::default())
}

pub fn run_ensemble_with(cfg: &ValidatedConfig, seed: u64, pulses: usize, opts: RunOptions) -> Result<Ensemble, SimError> {
    if pulses == 0 {
        return Err(SimError::NoPulses);
    }
    let mut records: Vec<PulseRecord> = Vec::new();
    records.try_reserve_exact(pulses).map_err(|_| SimError::Allocation(pulses))?;
    let with_noise = cfg.channel().read_noise_sd > 0.0;
    let mut noisy: Vec<NoisyRecord> = Vec::new();
    if with_noise {
        noisy.try_reserve_exact(pulses).map_err(|_| SimError::Allocation(pulses))?;
    }

    let chunks = pulses.div_ceil(CHUNK_PULSES);
    let len_of = |k: usize| CHUNK_PULSES.min(pulses - k * CHUNK_PULSES);
    let parts: Vec<Chunk> = if opts.serial {
        (0..chunks).map(|k| run_chunk(cfg, seed, k, len_of(k), opts.binomial)).collect()
    } else {
        (0..chunks).into_par_iter().map(|k| run_chunk(cfg, seed, k, len_of(k), opts.binomial)).collect()
    };
    for (r, n) in parts {
        records.extend(r);
        noisy.extend(n);
    }
    Ok(Ensemble {
        pulse_index: (0..pulses as u64).collect(),
        records,
        noisy: with_noise.then_some(noisy),
        config_digest: cfg.digest(),
        seed,
    })
}

/// Mean and standard deviation of the tap count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TapSummary {
    pub mean_tap: f64,
    pub sd_tap: f64,
}

/// Sample mean and unbiased standard deviation of the tap count.
pub fn tap_statistics(e: &Ensemble) -> Result<TapSummary, SimError> {
    let n = e.pulse_count();
    if n < 2 {
        return Err(SimError::TooFewPulses(n));
    }
    let mean = (0..n).map(|k| e.tap_value(k)).sum::<f64>() / n as f64;
    let ss = (0..n).map(|k| (e.tap_value(k) - mean).powi(2)).sum::<f64>();
    Ok(TapSummary { mean_tap: mean, sd_tap: (ss / (n - 1) as f64).sqrt() })
}

/// Pulses retained by a window.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioned {
    pub ensemble: Ensemble,
    pub window: ConditionWindow,
    pub bounds: (f64, f64),
    pub total: usize,
}

impl Conditioned {
    pub fn accepted(&self) -> usize {
        self.ensemble.pulse_count()
    }

    pub fn acceptance_ratio(&self) -> f64 {
        self.accepted() as f64 / self.total as f64
    }

    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }
}

/// Keeps the pulses whose tap value lies in the closed window.
pub fn apply_condition(e: &Ensemble, w: &ConditionWindow, tap: &TapSummary) -> Result<Conditioned, SimError> {
    if !(tap.sd_tap > 0.0) {
        return Err(SimError::ZeroWidthWindow);
    }
    let bounds = w.bounds(tap.mean_tap, tap.sd_tap);
    let keep: Vec<usize> = (0..e.pulse_count())
        .filter(|&k| {
            let v = e.tap_value(k);
            bounds.0 <= v && v <= bounds.1
        })
        .collect();
    let ensemble = Ensemble {
        records: keep.iter().map(|&k| e.records[k]).collect(),
        noisy: e.noisy.as_ref().map(|n| keep.iter().map(|&k| n[k]).collect()),
        pulse_index: keep.iter().map(|&k| e.pulse_index[k]).collect(),
        config_digest: e.config_digest.clone(),
        seed: e.seed,
    };
    Ok(Conditioned { ensemble, window: *w, bounds, total: e.pulse_count() })
}
