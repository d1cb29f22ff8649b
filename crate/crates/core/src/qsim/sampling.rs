use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use super::circuit::{Circuit, Gate};
use super::layout::RegisterLayout;
use super::noise::NoiseModel;
use super::state::{evolve, Faults, QuantumState};
use crate::error::{Error, Result};
use crate::{CVector, C64};

/// Measurement counts keyed by basis index; unmeasured qubits read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub counts: BTreeMap<u64, u64>,
    pub shots: u64,
    /// Shots matching the success pattern.
    pub post_selected: u64,
    pub p_succ_hat: f64,
    layout: RegisterLayout,
    measured_mask: u64,
    success: (u64, u64),
}

impl ShotRecord {
    fn assemble(
        counts: BTreeMap<u64, u64>,
        layout: &RegisterLayout,
        measured_mask: u64,
        success: (u64, u64),
    ) -> Self {
        let shots = counts.values().sum();
        let post_selected = counts
            .iter()
            .filter(|(k, _)| *k & success.0 == success.1)
            .map(|(_, c)| c)
            .sum();
        Self {
            counts,
            shots,
            post_selected,
            p_succ_hat: post_selected as f64 / shots as f64,
            layout: layout.clone(),
            measured_mask,
            success,
        }
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn measured_mask(&self) -> u64 {
        self.measured_mask
    }

    /// Binomial standard error of `p_succ_hat`.
    pub fn p_succ_sigma(&self) -> f64 {
        (self.p_succ_hat * (1.0 - self.p_succ_hat) / self.shots as f64).sqrt()
    }

    pub fn count_matching(&self, pattern: &[(&str, u64)]) -> Result<u64> {
        let (mask, value) = self.layout.pattern(pattern)?;
        Ok(self.counts.iter().filter(|(k, _)| *k & mask == value).map(|(_, c)| c).sum())
    }

    /// Counts keyed by bitstring, most significant register first.
    pub fn bitstring_counts(&self) -> BTreeMap<String, u64> {
        self.counts.iter().map(|(k, c)| (self.layout.format_bits(*k), *c)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bitstring,count\n");
        for (b, c) in self.bitstring_counts() {
            let _ = writeln!(s, "{b},{c}");
        }
        s
    }
}

/// Where the signs of estimated amplitudes come from. Counts only give
/// magnitudes; `ExactState` borrows phases from the simulator's state.
#[derive(Debug, Clone, Copy)]
pub enum SignSource<'a> {
    ExactState(&'a CVector),
    AssumeNonnegative,
}

/// Post-selected amplitudes of `register`, `√(count/post_selected)` per value.
pub fn estimate_field(record: &ShotRecord, register: &str, sign: SignSource<'_>) -> Result<CVector> {
    if record.post_selected == 0 {
        return Err(Error::EmptyPostSelection);
    }
    let r = record.layout.register(register)?.clone();
    let mut mags = vec![0u64; 1 << r.size];
    for (k, c) in &record.counts {
        if k & record.success.0 == record.success.1 {
            mags[r.value_of(*k) as usize] += c;
        }
    }
    if let SignSource::ExactState(v) = sign {
        if v.dim() != mags.len() {
            return Err(Error::DimensionMismatch { expected: mags.len(), found: v.dim() });
        }
    }
    let total = record.post_selected as f64;
    let out = mags
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let m = (c as f64 / total).sqrt();
            let phase = match sign {
                SignSource::ExactState(v) if v[i].norm() > 0.0 => v[i] / v[i].norm(),
                _ => C64::new(1.0, 0.0),
            };
            phase * m
        })
        .collect();
    CVector::from_vec(out)
}

/// Independent rare events with a sampler conditioned on at least one firing.
struct RareEvents {
    p: Vec<f64>,
    first_cdf: Vec<f64>,
    p_any: f64,
}

impl RareEvents {
    fn new(p: Vec<f64>) -> Self {
        let mut log_none = 0.0f64;
        let mut first_cdf = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for &pi in &p {
            acc += pi * log_none.exp();
            first_cdf.push(acc);
            log_none += (-pi).ln_1p();
        }
        Self { p, first_cdf, p_any: -log_none.exp_m1() }
    }

    fn sample_nonempty(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let total = *self.first_cdf.last().unwrap_or(&0.0);
        let u = rng.gen::<f64>() * total;
        let first = self.first_cdf.partition_point(|&c| c <= u).min(self.p.len() - 1);
        let mut out = vec![first];
        for (t, &pt) in self.p.iter().enumerate().skip(first + 1) {
            if pt > 0.0 && rng.gen::<f64>() < pt {
                out.push(t);
            }
        }
        out
    }
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Multinomial draw of `n` outcomes by conditional binomials.
fn multinomial(probs: &[f64], n: u64, rng: &mut ChaCha8Rng, out: &mut BTreeMap<u64, u64>) {
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if p <= 0.0 {
            continue;
        }
        let k = if mass <= p { left } else { binomial(left, (p / mass).min(1.0), rng) };
        if k > 0 {
            *out.entry(i as u64).or_default() += k;
        }
        left -= k;
        mass -= p;
    }
    if left > 0 {
        // Rounding left some mass unassigned; give it to the likeliest outcome.
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i as u64)
            .unwrap_or(0);
        *out.entry(best).or_default() += left;
    }
}

fn marginal(amps: &[C64], mask: u64) -> Vec<f64> {
    let mut p = vec![0.0; amps.len()];
    for (i, z) in amps.iter().enumerate() {
        p[i & mask as usize] += z.norm_sqr();
    }
    p
}

fn sample_one(cdf: &[f64], rng: &mut ChaCha8Rng) -> u64 {
    let u = rng.gen::<f64>() * cdf.last().copied().unwrap_or(1.0);
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        })
        .collect()
}

fn bit_positions(mask: u64) -> Vec<usize> {
    (0..64).filter(|b| (mask >> b) & 1 == 1).collect()
}

fn apply_readout_flips(counts: BTreeMap<u64, u64>, mask: u64, p_meas: f64, rng: &mut ChaCha8Rng) -> BTreeMap<u64, u64> {
    if p_meas <= 0.0 {
        return counts;
    }
    let bits = bit_positions(mask);
    let events = RareEvents::new(vec![p_meas; bits.len()]);
    let mut out = BTreeMap::new();
    for (k, c) in counts {
        let flipped = binomial(c, events.p_any, rng);
        if c > flipped {
            *out.entry(k).or_default() += c - flipped;
        }
        for _ in 0..flipped {
            let flip = events.sample_nonempty(rng).iter().fold(0u64, |m, &b| m | (1 << bits[b]));
            *out.entry(k ^ flip).or_default() += 1;
        }
    }
    out
}

/// Samples every qubit of a fixed state; `noise` contributes only readout flips.
pub fn sample(
    state: &QuantumState,
    shots: u64,
    noise: Option<&NoiseModel>,
    seed: u64,
    success: &[(&str, u64)],
) -> Result<ShotRecord> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be at least 1".into()));
    }
    let layout = state.layout();
    let success = layout.pattern(success)?;
    let mask = (layout.dim() - 1) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    multinomial(&state.probabilities(), shots, &mut rng, &mut counts);
    let p_meas = noise.map_or(0.0, |n| n.p_meas);
    let counts = apply_readout_flips(counts, mask, p_meas, &mut rng);
    Ok(ShotRecord::assemble(counts, layout, mask, success))
}

/// Fault sites of a circuit as `((gate, qubit), probability)`.
fn fault_sites(circuit: &Circuit, noise: &NoiseModel) -> Vec<((usize, usize), f64)> {
    let mut out = Vec::new();
    for (g, gate) in circuit.gates().iter().enumerate() {
        match gate {
            Gate::Measure(_) => {}
            Gate::Reset(q) => out.push(((g, *q), noise.p_res)),
            other => out.extend(other.touched().into_iter().map(|q| ((g, q), noise.p_gate))),
        }
    }
    out
}

/// Runs `circuit` on `input` for `shots` noisy executions and reads out the
/// circuit's measured qubits. Deterministic in `noise.rng_seed`.
///
/// Without resets the circuit is simulated once fault-free; only shots that
/// draw at least one fault are re-simulated (one run per distinct fault
/// pattern). Circuits with resets fall back to one trajectory per shot, with
/// the stream for shot `s` seeded by `seed ^ s`.
pub fn sample_circuit(
    input: &QuantumState,
    circuit: &Circuit,
    shots: u64,
    noise: &NoiseModel,
    success: &[(&str, u64)],
) -> Result<ShotRecord> {
    noise.validate()?;
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be at least 1".into()));
    }
    if input.layout() != circuit.layout() {
        return Err(Error::InvalidParameter("state and circuit layouts differ".into()));
    }
    let layout = circuit.layout();
    let n = layout.n_qubits();
    let success = layout.pattern(success)?;
    let mask = circuit.measured_qubits().iter().fold(0u64, |m, q| m | (1 << q));
    let mut rng = noise.rng();

    let counts = if circuit.has_reset() {
        let per_shot: Vec<u64> = (0..shots)
            .into_par_iter()
            .map(|s| -> Result<u64> {
                let mut r = ChaCha8Rng::seed_from_u64(noise.rng_seed ^ s);
                let mut amps = input.amplitudes().to_vec();
                evolve(
                    &mut amps,
                    n,
                    circuit.gates(),
                    Faults::Random { p_gate: noise.p_gate, p_res: noise.p_res, rng: &mut r },
                )?;
                let cdf = cumulative(&marginal(&amps, mask));
                Ok(sample_one(&cdf, &mut r))
            })
            .collect::<Result<_>>()?;
        let mut counts = BTreeMap::new();
        for k in per_shot {
            *counts.entry(k).or_default() += 1;
        }
        counts
    } else {
        let mut clean = input.amplitudes().to_vec();
        evolve(&mut clean, n, circuit.gates(), Faults::None)?;
        let sites = fault_sites(circuit, noise);
        let events = RareEvents::new(sites.iter().map(|s| s.1).collect());
        let faulty = if sites.is_empty() { 0 } else { binomial(shots, events.p_any, &mut rng) };
        let mut counts = BTreeMap::new();
        multinomial(&marginal(&clean, mask), shots - faulty, &mut rng, &mut counts);

        let mut patterns: HashMap<Vec<(usize, usize)>, u64> = HashMap::new();
        for _ in 0..faulty {
            let pat: Vec<(usize, usize)> = events.sample_nonempty(&mut rng).into_iter().map(|i| sites[i].0).collect();
            *patterns.entry(pat).or_default() += 1;
        }
        let mut patterns: Vec<(Vec<(usize, usize)>, u64)> = patterns.into_iter().collect();
        patterns.sort();
        let dists: Vec<Vec<f64>> = patterns
            .par_iter()
            .map(|(pat, _)| -> Result<Vec<f64>> {
                let mut amps = input.amplitudes().to_vec();
                evolve(&mut amps, n, circuit.gates(), Faults::Fixed(pat))?;
                Ok(marginal(&amps, mask))
            })
            .collect::<Result<_>>()?;
        for ((_, c), p) in patterns.iter().zip(&dists) {
            multinomial(p, *c, &mut rng, &mut counts);
        }
        counts
    };
    let counts = apply_readout_flips(counts, mask, noise.p_meas, &mut rng);
    Ok(ShotRecord::assemble(counts, layout, mask, success))
}
