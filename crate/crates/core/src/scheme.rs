//! Interference creation-resurrection over `2K - 1` slots.
//!
//! Phase one (`K` slots): each slot sends the `K` raw symbols of one
//! receiver. That receiver gets a clean combination; every other receiver
//! overhears an interference term it stores as side information.
//!
//! Phase two (`K - 1` slots): slot `K + m` has one receiver `r` without
//! CSIT and perfect CSIT for the rest. The transmitter re-sends
//!
//! * for each perfect receiver `i`, the interference `r` overheard in `i`'s
//!   phase-one slot, beamformed to vanish at every perfect receiver but `i`;
//! * the interference the anchor receiver overheard in `r`'s phase-one slot,
//!   beamformed to vanish at every perfect receiver.
//!
//! Perfect receivers see one new clean combination of their own symbols.
//! Receiver `r` sees its own order-K term plus terms it already holds and
//! cancels them with its stored phase-one observations. After `2K - 1`
//! slots every receiver holds `K` combinations whose rows are, up to
//! scalars, the channel rows of all `K` users at its phase-one slot.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{
    complex_gaussian, icr_pattern, keyed_rng, sample_channel, ChannelError, ChannelRealization, CsitPattern, CsitState,
    IcrLayout, Stream,
};
use crate::linalg::{
    beam_column, null_space_projector, row_times, singular_values, solve, ComplexMatrix, ComplexRow, ComplexVector,
    LinalgError,
};
use rand::Rng;

/// Symbol error bound for a noiseless decode to count as recovered.
pub const DECODE_TOL: f64 = 1e-6;
/// Bound on `||g - c h|| / ||g||` when matching decoding rows to channel rows.
pub const STRUCTURE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("pattern cannot support the transmission: {0}")]
    PatternInfeasible(String),
    #[error("no usable beam column in slot {slot} for the term carrying receiver {carries}")]
    DegenerateBeam { slot: usize, carries: usize },
    #[error("receiver {receiver} holds no observation of slot {slot}")]
    MissingObservation { receiver: usize, slot: usize },
    #[error("out-of-order transmission: {0}")]
    State(String),
    #[error("structural violation: {0}")]
    Structural(String),
}

/// `K x K` data symbols; row `i` belongs to receiver `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    data: ComplexMatrix,
}

impl SymbolBlock {
    pub fn from_matrix(data: ComplexMatrix) -> Result<Self, SchemeError> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(SchemeError::Argument(format!(
                "symbol block must be K x K, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SchemeError::Argument("non-finite symbol".into()));
        }
        Ok(Self { data })
    }

    /// Unit-modulus symbols with uniform phase, keyed by `seed`.
    pub fn random(k: usize, seed: u64) -> Self {
        let mut data = ComplexMatrix::zeros(k, k);
        for i in 0..k {
            let mut rng = keyed_rng(seed, Stream::Symbols, i, 0);
            for j in 0..k {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                data[(i, j)] = Complex64::from_polar(1.0, phase);
            }
        }
        Self { data }
    }

    pub fn k(&self) -> usize {
        self.data.nrows()
    }

    /// Symbols of `receiver` as a column.
    pub fn receiver(&self, receiver: usize) -> ComplexVector {
        self.data.row(receiver).transpose()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.data
    }

    pub fn max_abs_diff(&self, other: &SymbolBlock) -> f64 {
        (&self.data - &other.data).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlotRole {
    /// Phase one: raw symbols of `user`.
    Creation { user: usize },
    /// Phase two: `n_user` has no CSIT; `anchor` sources its order-K term.
    Resurrection { n_user: usize, anchor: usize },
}

/// One beamformed interference term of a phase-two slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    /// Receiver whose symbols the payload combines.
    pub carries: usize,
    /// Receiver that overheard the payload in phase one.
    pub source_user: usize,
    pub source_slot: usize,
    /// Receivers the beam is steered to be invisible at.
    pub nulled_at: Vec<usize>,
    /// Projector column actually used (0 unless the first one degenerated).
    pub basis_column: usize,
    pub amplitude: f64,
    /// `amplitude * projector column`.
    pub direction: ComplexVector,
    /// Noiseless `H_source(source_slot) X(source_slot)`.
    pub payload: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub role: SlotRole,
    pub x: ComplexVector,
    pub beams: Vec<Beam>,
    /// `(user, slot)` channel rows the transmitter read to build `x`.
    pub csit_used: Vec<(usize, usize)>,
}

/// Transmit vectors and per-receiver observations, slot by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRecord {
    k: usize,
    power: f64,
    noise: bool,
    seed: u64,
    slots: Vec<SlotRecord>,
    // [receiver][slot]
    observations: Vec<Vec<Complex64>>,
    noise_samples: Vec<Vec<Complex64>>,
}

impl TransmissionRecord {
    pub fn new(k: usize, power: f64, noise: bool, seed: u64) -> Self {
        Self {
            k,
            power,
            noise,
            seed,
            slots: Vec::new(),
            observations: vec![Vec::new(); k],
            noise_samples: vec![Vec::new(); k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn slots(&self) -> &[SlotRecord] {
        &self.slots
    }

    pub fn slot(&self, t: usize) -> Option<&SlotRecord> {
        self.slots.get(t)
    }

    /// `Y_receiver(slot)` if that slot has been transmitted.
    pub fn observation(&self, receiver: usize, slot: usize) -> Option<Complex64> {
        self.observations.get(receiver)?.get(slot).copied()
    }

    pub fn noise_sample(&self, receiver: usize, slot: usize) -> Option<Complex64> {
        self.noise_samples.get(receiver)?.get(slot).copied()
    }

    /// Appends a slot and records `Y_i(t) = H_i(t) X(t) + N_i(t)` for all receivers.
    pub fn push(&mut self, slot: SlotRecord, channel: &ChannelRealization) -> Result<(), SchemeError> {
        let t = self.slots.len();
        if slot.slot != t {
            return Err(SchemeError::State(format!("slot {} pushed at position {t}", slot.slot)));
        }
        if t >= channel.num_slots() {
            return Err(SchemeError::Argument(format!("channel has only {} slots", channel.num_slots())));
        }
        for i in 0..self.k {
            let n = if self.noise {
                complex_gaussian(&mut keyed_rng(self.seed, Stream::Noise, i, t))
            } else {
                Complex64::new(0.0, 0.0)
            };
            let y = row_times(channel.row(i, t), &slot.x) + n;
            self.observations[i].push(y);
            self.noise_samples[i].push(n);
        }
        self.slots.push(slot);
        Ok(())
    }
}

/// What the transmitter may know at slot `now` under the pattern.
struct TransmitterView<'a> {
    pattern: &'a CsitPattern,
    channel: &'a ChannelRealization,
    now: usize,
    used: Vec<(usize, usize)>,
}

impl<'a> TransmitterView<'a> {
    fn row(&mut self, user: usize, slot: usize) -> Result<&'a ComplexRow, SchemeError> {
        let state = self.pattern.state(user, slot);
        let known = match state {
            CsitState::Perfect => slot <= self.now,
            CsitState::Delayed => slot < self.now,
            CsitState::None => false,
        };
        if !known {
            return Err(SchemeError::PatternInfeasible(format!(
                "H_{}({}) is needed at slot {} but its CSIT state is {}",
                user + 1,
                slot + 1,
                self.now + 1,
                state.symbol()
            )));
        }
        if !self.used.contains(&(user, slot)) {
            self.used.push((user, slot));
        }
        Ok(self.channel.row(user, slot))
    }
}

fn check_dims(k: usize, channel: &ChannelRealization, pattern: &CsitPattern) -> Result<IcrLayout, SchemeError> {
    if k < 2 {
        return Err(SchemeError::Argument(format!("K must be at least 2, got {k}")));
    }
    if channel.users() != k || pattern.users() != k {
        return Err(SchemeError::Argument(format!(
            "K = {k} but channel has {} users and pattern {}",
            channel.users(),
            pattern.users()
        )));
    }
    if channel.num_slots() < pattern.num_slots() {
        return Err(SchemeError::Argument(format!(
            "channel covers {} slots, pattern needs {}",
            channel.num_slots(),
            pattern.num_slots()
        )));
    }
    Ok(pattern.icr_layout()?)
}

/// Phase one: slot `t` sends `sqrt(P/K)` times the symbols of the receiver
/// the pattern leaves without CSIT in that slot.
pub fn phase1_transmit(
    symbols: &SymbolBlock,
    channel: &ChannelRealization,
    pattern: &CsitPattern,
    power: f64,
    noise: bool,
    seed: u64,
) -> Result<TransmissionRecord, SchemeError> {
    let k = symbols.k();
    let layout = check_dims(k, channel, pattern)?;
    if !(power > 0.0) || !power.is_finite() {
        return Err(SchemeError::Argument(format!("power must be positive, got {power}")));
    }
    let amp = (power / k as f64).sqrt();
    let mut record = TransmissionRecord::new(k, power, noise, seed);
    for (t, &user) in layout.phase1_user.iter().enumerate() {
        let slot = SlotRecord {
            slot: t,
            role: SlotRole::Creation { user },
            x: symbols.receiver(user).scale(amp),
            beams: Vec::new(),
            csit_used: Vec::new(),
        };
        record.push(slot, channel)?;
    }
    Ok(record)
}

/// Builds the transmit vector of phase-two slot `K + m` (`m` in `1..K`).
pub fn phase2_beamform(
    m: usize,
    record: &TransmissionRecord,
    channel: &ChannelRealization,
    pattern: &CsitPattern,
    power: f64,
) -> Result<SlotRecord, SchemeError> {
    let k = record.k();
    let layout = check_dims(k, channel, pattern)?;
    if m == 0 || m >= k {
        return Err(SchemeError::Argument(format!("phase-two index {m} outside 1..{}", k - 1)));
    }
    if power != record.power() {
        return Err(SchemeError::Argument(format!(
            "power {power} differs from the phase-one power {}",
            record.power()
        )));
    }
    let t = k + m - 1;
    if record.slots.len() != t {
        return Err(SchemeError::State(format!(
            "slot {} requested after {} transmitted slots",
            t + 1,
            record.slots.len()
        )));
    }
    let r = layout.phase2_user[m - 1];
    let anchor = layout.anchor;
    let perfect: Vec<usize> = (0..k).filter(|&i| i != r).collect();

    // (carries, overheard by, nulled at)
    let mut terms: Vec<(usize, usize, Vec<usize>)> =
        perfect.iter().map(|&i| (i, r, perfect.iter().copied().filter(|&j| j != i).collect())).collect();
    terms.push((r, anchor, perfect.clone()));

    let mut view = TransmitterView { pattern, channel, now: t, used: Vec::new() };
    let mut beams = Vec::with_capacity(terms.len());
    let n_terms = terms.len() as f64;
    for (carries, source_user, nulled_at) in terms {
        let source_slot = layout.phase1_slot[carries];
        let h_src = view.row(source_user, source_slot)?;
        let x_src = &record.slots[source_slot].x;
        let payload = row_times(h_src, x_src);

        let null_rows = nulled_at.iter().map(|&j| view.row(j, t).cloned()).collect::<Result<Vec<_>, _>>()?;
        let projector = null_space_projector(&null_rows, k)?;
        let (basis_column, column) = (0..k)
            .find_map(|c| beam_column(&projector, c).ok().map(|v| (c, v)))
            .ok_or(SchemeError::DegenerateBeam { slot: t, carries })?;

        // |payload| <= ||h_src|| sqrt(P), so each term stays below sqrt(P)/n_terms.
        let amplitude = 1.0 / (n_terms * h_src.norm() * column.norm());
        beams.push(Beam {
            carries,
            source_user,
            source_slot,
            nulled_at,
            basis_column,
            amplitude,
            direction: column.scale(amplitude),
            payload,
        });
    }

    let mut x = ComplexVector::zeros(k);
    for b in &beams {
        x += &b.direction * b.payload;
    }
    Ok(SlotRecord { slot: t, role: SlotRole::Resurrection { n_user: r, anchor }, x, beams, csit_used: view.used })
}

/// One interference-free combination available to a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    pub slot: usize,
    pub value: Complex64,
    /// Coefficients on the receiver's own `K` symbols.
    pub coeffs: ComplexRow,
    /// Noise samples `(slot, weight)` entering `value`.
    pub noise_terms: Vec<(usize, Complex64)>,
    /// `(stored slot, scalar)` pairs subtracted from the raw observation.
    pub cancelled: Vec<(usize, Complex64)>,
}

/// Removes the known terms from the `N` receiver's phase-two observation.
///
/// Every beam not carrying `r`'s own symbols was overheard by `r` in phase
/// one, so `Y_r(t) - sum [H_r(t) beam] Y_r(source)` leaves the order-K term.
pub fn cancel_interference(
    r: usize,
    record: &TransmissionRecord,
    channel: &ChannelRealization,
    pattern: &CsitPattern,
) -> Result<Combination, SchemeError> {
    let k = record.k();
    let layout = check_dims(k, channel, pattern)?;
    if r >= k {
        return Err(SchemeError::Argument(format!("receiver {r} out of range")));
    }
    let m = layout
        .phase2_user
        .iter()
        .position(|&u| u == r)
        .ok_or_else(|| SchemeError::Argument(format!("receiver {} is never N in phase two", r + 1)))?;
    let t = k + m;
    let slot = record.slot(t).ok_or(SchemeError::MissingObservation { receiver: r, slot: t })?;
    let h = channel.row(r, t);
    let amp = (record.power() / k as f64).sqrt();

    let mut value = record.observation(r, t).ok_or(SchemeError::MissingObservation { receiver: r, slot: t })?;
    let mut noise_terms = vec![(t, Complex64::new(1.0, 0.0))];
    let mut cancelled = Vec::new();
    let mut own: Option<ComplexRow> = None;
    for beam in &slot.beams {
        let scalar = row_times(h, &beam.direction);
        if beam.carries == r {
            own = Some(channel.row(beam.source_user, beam.source_slot).scale(amp) * scalar);
            continue;
        }
        if beam.source_user != r {
            return Err(SchemeError::Structural(format!(
                "slot {} carries a term receiver {} never overheard",
                t + 1,
                r + 1
            )));
        }
        let stored = record
            .observation(r, beam.source_slot)
            .ok_or(SchemeError::MissingObservation { receiver: r, slot: beam.source_slot })?;
        value -= scalar * stored;
        noise_terms.push((beam.source_slot, -scalar));
        cancelled.push((beam.source_slot, scalar));
    }
    let coeffs =
        own.ok_or_else(|| SchemeError::Structural(format!("slot {} has no term for receiver {}", t + 1, r + 1)))?;
    Ok(Combination { slot: t, value, coeffs, noise_terms, cancelled })
}

/// The `K` combinations receiver `user` decodes from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverSystem {
    pub user: usize,
    pub combinations: Vec<Combination>,
    /// Actual gain matrix (row `m` = coefficients of combination `m`).
    pub gain: ComplexMatrix,
    pub values: ComplexVector,
    /// Covariance of the noise in `values` for unit-variance receiver noise.
    pub noise_cov: ComplexMatrix,
}

/// Per-receiver decoding systems of one ICR run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodingSystem {
    pub k: usize,
    pub power: f64,
    pub layout: IcrLayout,
    pub channel: ChannelRealization,
    pub receivers: Vec<ReceiverSystem>,
}

impl ReceiverSystem {
    /// Gain divided by `sqrt(P/K)`; independent of the transmit power.
    pub fn normalized_gain(&self, power: f64) -> ComplexMatrix {
        let k = self.gain.ncols() as f64;
        self.gain.unscale((power / k).sqrt())
    }
}

/// Collects the `K` combinations of every receiver.
pub fn assemble(
    record: &TransmissionRecord,
    channel: &ChannelRealization,
    pattern: &CsitPattern,
) -> Result<DecodingSystem, SchemeError> {
    let k = record.k();
    let layout = check_dims(k, channel, pattern)?;
    if record.slots.len() != 2 * k - 1 {
        return Err(SchemeError::State(format!("{} of {} slots transmitted", record.slots.len(), 2 * k - 1)));
    }
    let amp = (record.power() / k as f64).sqrt();
    let mut receivers = Vec::with_capacity(k);
    for i in 0..k {
        let mut combos = Vec::with_capacity(k);
        for slot in &record.slots {
            let t = slot.slot;
            let y = record.observation(i, t).ok_or(SchemeError::MissingObservation { receiver: i, slot: t })?;
            match slot.role {
                SlotRole::Creation { user } if user == i => combos.push(Combination {
                    slot: t,
                    value: y,
                    coeffs: channel.row(i, t).scale(amp),
                    noise_terms: vec![(t, Complex64::new(1.0, 0.0))],
                    cancelled: Vec::new(),
                }),
                SlotRole::Creation { .. } => {}
                SlotRole::Resurrection { n_user, .. } if n_user == i => {
                    combos.push(cancel_interference(i, record, channel, pattern)?);
                }
                SlotRole::Resurrection { .. } => {
                    let beam = slot.beams.iter().find(|b| b.carries == i).ok_or_else(|| {
                        SchemeError::Structural(format!("slot {} has no term for receiver {}", t + 1, i + 1))
                    })?;
                    let scalar = row_times(channel.row(i, t), &beam.direction);
                    combos.push(Combination {
                        slot: t,
                        value: y,
                        coeffs: channel.row(beam.source_user, beam.source_slot).scale(amp) * scalar,
                        noise_terms: vec![(t, Complex64::new(1.0, 0.0))],
                        cancelled: Vec::new(),
                    });
                }
            }
        }
        if combos.len() != k {
            return Err(SchemeError::Structural(format!("receiver {} holds {} combinations", i + 1, combos.len())));
        }
        let n = record.slots.len();
        let gain = ComplexMatrix::from_fn(k, k, |a, b| combos[a].coeffs[b]);
        let values = ComplexVector::from_fn(k, |a, _| combos[a].value);
        let mut weights = ComplexMatrix::zeros(k, n);
        for (a, c) in combos.iter().enumerate() {
            for &(s, w) in &c.noise_terms {
                weights[(a, s)] += w;
            }
        }
        let noise_cov = &weights * weights.adjoint();
        receivers.push(ReceiverSystem { user: i, combinations: combos, gain, values, noise_cov });
    }
    Ok(DecodingSystem { k, power: record.power(), layout, channel: channel.clone(), receivers })
}

/// Row-by-row match of a receiver's gain against channel rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatch {
    /// User `j` such that the row is `scalar * H_j(phase-one slot of the receiver)`.
    pub channel_user: usize,
    pub scalar: Complex64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMatrix {
    pub gain: ComplexMatrix,
    pub rows: Vec<RowMatch>,
}

/// Matches each row of `G_i` to the channel row it is proportional to.
///
/// Succeeds only if every row matches some `H_j(t_i)` within
/// [`STRUCTURE_TOL`] with a nonzero scalar and the matches cover all `K` users.
pub fn effective_decoding_matrix(system: &DecodingSystem, user: usize) -> Result<EffectiveMatrix, SchemeError> {
    let rx =
        system.receivers.get(user).ok_or_else(|| SchemeError::Argument(format!("receiver {user} out of range")))?;
    let gain = rx.normalized_gain(system.power);
    let t = system.layout.phase1_slot[user];
    let mut rows = Vec::with_capacity(system.k);
    for a in 0..system.k {
        let g: ComplexRow = gain.row(a).into_owned();
        let best = (0..system.k)
            .map(|j| {
                let h = system.channel.row(j, t);
                let scalar = h.conjugate().dot(&g) / h.norm_squared();
                let residual = (&g - h * scalar).norm() / g.norm();
                RowMatch { channel_user: j, scalar, residual }
            })
            .min_by(|x, y| x.residual.total_cmp(&y.residual))
            .expect("K >= 1");
        if !(best.residual < STRUCTURE_TOL) || !(best.scalar.norm() > 1e-10) {
            return Err(SchemeError::Structural(format!(
                "receiver {} row {} matches no channel row (best residual {:e})",
                user + 1,
                a + 1,
                best.residual
            )));
        }
        rows.push(best);
    }
    let mut seen = vec![false; system.k];
    for r in &rows {
        if std::mem::replace(&mut seen[r.channel_user], true) {
            return Err(SchemeError::Structural(format!(
                "receiver {} has two rows along H_{}",
                user + 1,
                r.channel_user + 1
            )));
        }
    }
    Ok(EffectiveMatrix { gain, rows })
}

/// CSIT states the transmitter relied on, and the `N` states it did without.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CsitUsage {
    pub perfect: usize,
    pub delayed: usize,
    pub none: usize,
}

/// Serializable per-trial summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialDiagnostics {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub min_singular_value: Vec<f64>,
    pub decode_max_error: Option<f64>,
    pub slots: usize,
    pub symbols: usize,
    pub decoded: bool,
    pub structural_ok: bool,
    pub max_structural_residual: f64,
    /// Largest `|H_j(t) beam payload| / sqrt(P)` over users `j` a beam is nulled at.
    pub max_nulling_leak: f64,
    /// Largest `||X(t)||^2 / P`.
    pub max_power_ratio: f64,
    pub csit_usage: CsitUsage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcrRun {
    pub pattern: CsitPattern,
    pub symbols: SymbolBlock,
    pub record: TransmissionRecord,
    pub system: DecodingSystem,
    /// `None` when some receiver's system was singular.
    pub decoded: Option<SymbolBlock>,
    pub decode_failures: Vec<String>,
    pub diagnostics: TrialDiagnostics,
}

/// Runs ICR under [`icr_pattern`]`(K)` with channel, symbols and noise keyed by `seed`.
pub fn run_icr(k: usize, seed: u64, power: f64, noise: bool) -> Result<IcrRun, SchemeError> {
    if k < 2 {
        return Err(SchemeError::Argument(format!("K must be at least 2, got {k}")));
    }
    run_icr_with_pattern(&icr_pattern(k)?, seed, power, noise)
}

/// Runs ICR under any pattern that admits the ICR slot layout.
pub fn run_icr_with_pattern(pattern: &CsitPattern, seed: u64, power: f64, noise: bool) -> Result<IcrRun, SchemeError> {
    let k = pattern.users();
    let channel = sample_channel(k, pattern.num_slots(), seed)?;
    let symbols = SymbolBlock::random(k, seed);
    run_icr_on(pattern, &channel, &symbols, seed, power, noise)
}

/// Runs ICR on a given channel and symbol block.
pub fn run_icr_on(
    pattern: &CsitPattern,
    channel: &ChannelRealization,
    symbols: &SymbolBlock,
    seed: u64,
    power: f64,
    noise: bool,
) -> Result<IcrRun, SchemeError> {
    let k = symbols.k();
    let mut record = phase1_transmit(symbols, channel, pattern, power, noise, seed)?;
    for m in 1..k {
        let slot = phase2_beamform(m, &record, channel, pattern, power)?;
        record.push(slot, channel)?;
    }
    let system = assemble(&record, channel, pattern)?;

    let mut decoded = ComplexMatrix::zeros(k, k);
    let mut failures = Vec::new();
    let mut min_sv = Vec::with_capacity(k);
    for rx in &system.receivers {
        min_sv.push(singular_values(&rx.normalized_gain(power)).last().copied().unwrap_or(0.0));
        match solve(&rx.gain, &rx.values) {
            Ok(s) => decoded.set_row(rx.user, &s.transpose()),
            Err(e) => failures.push(format!("receiver {}: {e}", rx.user + 1)),
        }
    }
    let decoded = failures.is_empty().then_some(SymbolBlock { data: decoded });
    let decode_max_error = decoded.as_ref().map(|d| d.max_abs_diff(symbols));

    let mut structural_ok = true;
    let mut max_structural_residual: f64 = 0.0;
    for i in 0..k {
        match effective_decoding_matrix(&system, i) {
            Ok(eff) => {
                for r in &eff.rows {
                    max_structural_residual = max_structural_residual.max(r.residual);
                }
            }
            Err(_) => structural_ok = false,
        }
    }

    let mut max_nulling_leak: f64 = 0.0;
    let mut max_power_ratio: f64 = 0.0;
    let mut used = std::collections::BTreeSet::new();
    for slot in record.slots() {
        max_power_ratio = max_power_ratio.max(slot.x.norm_squared() / power);
        for b in &slot.beams {
            for &j in &b.nulled_at {
                let leak = (row_times(channel.row(j, slot.slot), &b.direction) * b.payload).norm();
                max_nulling_leak = max_nulling_leak.max(leak / power.sqrt());
            }
        }
        used.extend(slot.csit_used.iter().copied());
    }
    let count = |s| used.iter().filter(|&&(u, t)| pattern.state(u, t) == s).count();
    let csit_usage = CsitUsage {
        perfect: count(CsitState::Perfect),
        delayed: count(CsitState::Delayed),
        none: pattern.count(CsitState::None),
    };

    let diagnostics = TrialDiagnostics {
        k,
        seed,
        min_singular_value: min_sv,
        decode_max_error,
        slots: record.slots().len(),
        symbols: k * k,
        decoded: decode_max_error.is_some_and(|e| e < DECODE_TOL),
        structural_ok,
        max_structural_residual,
        max_nulling_leak,
        max_power_ratio,
        csit_usage,
    };

    Ok(IcrRun {
        pattern: pattern.clone(),
        symbols: symbols.clone(),
        record,
        system,
        decoded,
        decode_failures: failures,
        diagnostics,
    })
}
