//! CSIT patterns, state accounting and random channel realizations.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::ComplexRow;
use crate::{format_float, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("cannot parse CSIT pattern: {0}")]
    Parse(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("pattern does not admit the ICR schedule: {0}")]
    NotIcr(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// CSIT availability of one user in one slot. Ordered `P < D < N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CsitState {
    Perfect,
    Delayed,
    None,
}

impl CsitState {
    pub const ALL: [CsitState; 3] = [CsitState::Perfect, CsitState::Delayed, CsitState::None];

    pub fn symbol(self) -> char {
        match self {
            CsitState::Perfect => 'P',
            CsitState::Delayed => 'D',
            CsitState::None => 'N',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'P' => Some(CsitState::Perfect),
            'D' => Some(CsitState::Delayed),
            'N' => Some(CsitState::None),
            _ => None,
        }
    }
}

/// A `K x n` grid of CSIT states, stored slot by slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CsitPattern {
    users: usize,
    slots: Vec<Vec<CsitState>>,
}

impl CsitPattern {
    /// Builds a pattern from per-slot state vectors (`slots[t][i]` is user `i` at slot `t`).
    pub fn new(slots: Vec<Vec<CsitState>>) -> Result<Self, ChannelError> {
        let users = slots.first().map(Vec::len).unwrap_or(0);
        if users == 0 {
            return Err(ChannelError::Argument("pattern needs at least one user and one slot".into()));
        }
        if slots.iter().any(|s| s.len() != users) {
            return Err(ChannelError::Argument("ragged pattern: slots list different user counts".into()));
        }
        Ok(Self { users, slots })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// State of `user` at `slot` (both 0-based).
    pub fn state(&self, user: usize, slot: usize) -> CsitState {
        self.slots[slot][user]
    }

    pub fn slot(&self, slot: usize) -> &[CsitState] {
        &self.slots[slot]
    }

    pub fn count(&self, state: CsitState) -> usize {
        self.slots.iter().flatten().filter(|&&s| s == state).count()
    }

    /// Fractions `(lambda_P, lambda_D, lambda_N)` over all `nK` user-slot pairs.
    pub fn state_fractions(&self) -> (Rational, Rational, Rational) {
        let total = (self.users * self.slots.len()) as i128;
        let f = |s| Rational::new(self.count(s) as i128, total);
        (f(CsitState::Perfect), f(CsitState::Delayed), f(CsitState::None))
    }

    /// Fraction of slots in which `user` (0-based) has perfect CSIT.
    pub fn perfect_fraction(&self, user: usize) -> Result<Rational, ChannelError> {
        if user >= self.users {
            return Err(ChannelError::Argument(format!("user index {user} out of range for {} users", self.users)));
        }
        let p = self.slots.iter().filter(|s| s[user] == CsitState::Perfect).count();
        Ok(Rational::new(p as i128, self.slots.len() as i128))
    }

    /// Checks that the pattern supports the ICR schedule and extracts it.
    ///
    /// The first `K` slots must each carry exactly one `N` user with `D`
    /// everywhere else, and together serve every user once. The remaining
    /// `K - 1` slots must each carry one `N` user with `P` elsewhere, with
    /// distinct `N` users. The user never `N` in the second phase is the
    /// anchor whose overheard interference becomes the order-K term.
    pub fn icr_layout(&self) -> Result<IcrLayout, ChannelError> {
        let k = self.users;
        if k < 2 {
            return Err(ChannelError::NotIcr("at least two users are required".into()));
        }
        if self.slots.len() != 2 * k - 1 {
            return Err(ChannelError::NotIcr(format!("{} slots, expected {}", self.slots.len(), 2 * k - 1)));
        }
        let lone_n = |t: usize, other: CsitState| -> Result<usize, ChannelError> {
            let slot = &self.slots[t];
            let ns: Vec<usize> = (0..k).filter(|&i| slot[i] == CsitState::None).collect();
            if ns.len() != 1 || slot.iter().any(|&s| s != CsitState::None && s != other) {
                return Err(ChannelError::NotIcr(format!(
                    "slot {} ({}) must hold one N and {} elsewhere",
                    t + 1,
                    slot_string(slot),
                    other.symbol()
                )));
            }
            Ok(ns[0])
        };

        let mut served_in = vec![usize::MAX; k];
        let mut served_by_slot = Vec::with_capacity(k);
        for t in 0..k {
            let u = lone_n(t, CsitState::Delayed)?;
            if served_in[u] != usize::MAX {
                return Err(ChannelError::NotIcr(format!("user {} is served twice in phase one", u + 1)));
            }
            served_in[u] = t;
            served_by_slot.push(u);
        }

        let mut resurrected = vec![false; k];
        let mut phase2_users = Vec::with_capacity(k - 1);
        for t in k..2 * k - 1 {
            let u = lone_n(t, CsitState::Perfect)?;
            if resurrected[u] {
                return Err(ChannelError::NotIcr(format!("user {} is N in two phase-two slots", u + 1)));
            }
            resurrected[u] = true;
            phase2_users.push(u);
        }
        let anchor = resurrected.iter().position(|&r| !r).expect("K-1 distinct of K users");

        Ok(IcrLayout { k, phase1_user: served_by_slot, phase1_slot: served_in, phase2_user: phase2_users, anchor })
    }

    /// The `(phase-one, phase-two)` halves of a `2K - 1` slot pattern as text.
    pub fn split_phases(&self) -> Option<(String, String)> {
        let k = self.users;
        if self.slots.len() != 2 * k - 1 {
            return None;
        }
        let join =
            |r: std::ops::Range<usize>| self.slots[r].iter().map(|s| slot_string(s)).collect::<Vec<_>>().join(",");
        Some((join(0..k), join(k..2 * k - 1)))
    }
}

fn slot_string(slot: &[CsitState]) -> String {
    slot.iter().map(|s| s.symbol()).collect()
}

impl fmt::Display for CsitPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text: Vec<String> = self.slots.iter().map(|s| slot_string(s)).collect();
        f.write_str(&text.join(","))
    }
}

impl FromStr for CsitPattern {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let slots = s
            .split(',')
            .map(|slot| {
                slot.trim()
                    .chars()
                    .map(|c| {
                        CsitState::from_symbol(c)
                            .ok_or_else(|| ChannelError::Parse(format!("unknown state {c:?} in {s:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(slots).map_err(|e| ChannelError::Parse(e.to_string()))
    }
}

/// Slot roles of an ICR-compatible pattern (all indices 0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcrLayout {
    pub k: usize,
    /// User whose symbols are sent raw in phase-one slot `t`.
    pub phase1_user: Vec<usize>,
    /// Inverse of `phase1_user`.
    pub phase1_slot: Vec<usize>,
    /// The `N` user of phase-two slot `K + m`.
    pub phase2_user: Vec<usize>,
    /// The user with perfect CSIT throughout phase two.
    pub anchor: usize,
}

/// The `(2K - 1)`-slot ICR pattern: phase-one slot `t` leaves user `t`
/// without CSIT, phase-two slot `K + m` leaves user `K + 1 - m` without CSIT
/// (1-based), so user 1 is perfect throughout phase two.
pub fn icr_pattern(k: usize) -> Result<CsitPattern, ChannelError> {
    if k < 2 {
        return Err(ChannelError::Argument(format!("ICR needs K >= 2, got {k}")));
    }
    let mut slots = Vec::with_capacity(2 * k - 1);
    for t in 0..k {
        slots.push((0..k).map(|i| if i == t { CsitState::None } else { CsitState::Delayed }).collect());
    }
    for m in 1..k {
        let n_user = k - m;
        slots.push((0..k).map(|i| if i == n_user { CsitState::None } else { CsitState::Perfect }).collect());
    }
    CsitPattern::new(slots)
}

/// Every 3-user, 5-slot pattern with state counts `(4 P, 6 D, 5 N)` that
/// admits the ICR schedule, in canonical order.
pub fn enumerate_synergistic_patterns(k: usize) -> Result<Vec<CsitPattern>, ChannelError> {
    if k != 3 {
        return Err(ChannelError::Unsupported(format!("exhaustive pattern search is defined for K = 3, got {k}")));
    }
    let n = 2 * k - 1;
    let mut counts = [(k - 1) * (k - 1), k * (k - 1), 2 * k - 1];
    let mut cells = Vec::with_capacity(n * k);
    let mut found = Vec::new();
    fill(&mut counts, &mut cells, n * k, &mut |cells| {
        let slots = cells.chunks(k).map(|c| c.to_vec()).collect();
        let p = CsitPattern::new(slots).expect("non-empty");
        if p.icr_layout().is_ok() {
            found.push(p);
        }
    });
    found.sort();
    Ok(found)
}

// All arrangements of the remaining state multiset.
fn fill(counts: &mut [usize; 3], cells: &mut Vec<CsitState>, total: usize, visit: &mut dyn FnMut(&[CsitState])) {
    if cells.len() == total {
        visit(cells);
        return;
    }
    for (idx, state) in CsitState::ALL.into_iter().enumerate() {
        if counts[idx] == 0 {
            continue;
        }
        counts[idx] -= 1;
        cells.push(state);
        fill(counts, cells, total, visit);
        cells.pop();
        counts[idx] += 1;
    }
}

/// Groups ICR patterns into `(phase-one, phase-two)` rows using the pairing
/// where the phase-two `N` users retrace the last `K - 1` phase-one users in
/// reverse. Rows come out in pattern order.
pub fn grouped_rows(patterns: &[CsitPattern]) -> Vec<(String, String)> {
    patterns
        .iter()
        .filter_map(|p| {
            let layout = p.icr_layout().ok()?;
            let tail: Vec<usize> = layout.phase1_user[1..].iter().rev().copied().collect();
            (tail == layout.phase2_user).then(|| p.split_phases()).flatten()
        })
        .collect()
}

/// Complex channel rows `H_i(t)` for every receiver `i` and slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    users: usize,
    slots: usize,
    seed: u64,
    // rows[t][i]
    rows: Vec<Vec<ComplexRow>>,
}

impl ChannelRealization {
    pub fn from_rows(rows: Vec<Vec<ComplexRow>>, seed: u64) -> Result<Self, ChannelError> {
        let slots = rows.len();
        let users = rows.first().map(Vec::len).unwrap_or(0);
        if slots == 0 || users == 0 {
            return Err(ChannelError::Argument("empty channel".into()));
        }
        if rows.iter().any(|s| s.len() != users || s.iter().any(|r| r.len() != users)) {
            return Err(ChannelError::Argument("channel rows must be K rows of length K per slot".into()));
        }
        Ok(Self { users, slots, seed, rows })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn num_slots(&self) -> usize {
        self.slots
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `H_user(slot)`, 0-based.
    pub fn row(&self, user: usize, slot: usize) -> &ComplexRow {
        &self.rows[slot][user]
    }

    /// Writes `slot,rx,tx,re,im` records (1-based indices).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ChannelError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| ChannelError::Csv(e.to_string());
        w.write_record(["slot", "rx", "tx", "re", "im"]).map_err(err)?;
        for t in 0..self.slots {
            for i in 0..self.users {
                for (j, h) in self.rows[t][i].iter().enumerate() {
                    w.write_record([
                        (t + 1).to_string(),
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        format_float(h.re),
                        format_float(h.im),
                    ])
                    .map_err(err)?;
                }
            }
        }
        w.flush().map_err(|e| ChannelError::Csv(e.to_string()))
    }
}

/// Independent random streams used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel = 0x43,
    Symbols = 0x53,
    Noise = 0x4e,
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A generator keyed by `(seed, stream, a, b)`; draws for different keys never
/// depend on each other or on the order in which keys are visited.
pub fn keyed_rng(seed: u64, stream: Stream, a: usize, b: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(mix64(seed ^ mix64(stream as u64)));
    rng.set_stream(((a as u64) << 32) | b as u64);
    rng
}

/// One draw from `CN(0, 1)`.
pub fn complex_gaussian<R: rand::Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// i.i.d. unit-variance circularly symmetric Gaussian rows for `K` users
/// over `n` slots.
pub fn sample_channel(k: usize, n: usize, seed: u64) -> Result<ChannelRealization, ChannelError> {
    if k == 0 || n == 0 {
        return Err(ChannelError::Argument(format!("need K >= 1 and n >= 1, got K={k}, n={n}")));
    }
    let rows = (0..n)
        .map(|t| {
            (0..k)
                .map(|i| {
                    let mut rng = keyed_rng(seed, Stream::Channel, i, t);
                    ComplexRow::from_fn(k, |_, _| complex_gaussian(&mut rng))
                })
                .collect()
        })
        .collect();
    ChannelRealization::from_rows(rows, seed)
}
