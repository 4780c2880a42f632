//! Problem data: users, their switchable load sectors, on/off state vectors,
//! and the operator's capacity command.
//!
//! Coordinates of a [`StateVector`] are laid out user-major, sector-minor,
//! with users sorted by id. Every comparison between states uses this order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::units::{Megawatts, Utility, Weight};

/// Ordinal user identifier (1-based in scenario files).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Disconnected loads frozen at a virtual MW value.
pub type Clamps = BTreeMap<UserId, Megawatts>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSector {
    pub baseline_mw: Megawatts,
    pub weight: Weight,
}

impl LoadSector {
    pub fn new(baseline_mw: Megawatts, weight: Weight) -> Self {
        LoadSector {
            baseline_mw,
            weight,
        }
    }

    pub fn utility(&self) -> Utility {
        self.weight.times(self.baseline_mw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserLoad {
    #[serde(rename = "id")]
    pub user_id: UserId,
    pub sectors: Vec<LoadSector>,
}

impl UserLoad {
    pub fn new(user_id: u32, sectors: Vec<LoadSector>) -> Self {
        UserLoad {
            user_id: UserId(user_id),
            sectors,
        }
    }

    /// Convenience constructor from whole-MW `(baseline, weight)` pairs.
    pub fn whole(user_id: u32, sectors: &[(i64, i64)]) -> Self {
        let sectors = sectors
            .iter()
            .map(|&(mw, w)| LoadSector::new(Megawatts::from_whole(mw), Weight::from_whole(w)))
            .collect();
        UserLoad::new(user_id, sectors)
    }

    pub fn baseline(&self) -> Megawatts {
        self.sectors.iter().map(|s| s.baseline_mw).sum()
    }
}

/// On/off assignment for every load sector of a coalition, packed 64
/// coordinates per word. Coordinate `k` is bit `k % 64` of word `k / 64`;
/// bits past `len` are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct StateVector {
    len: usize,
    words: Vec<u64>,
}

fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl StateVector {
    pub fn all_off(len: usize) -> Self {
        StateVector {
            len,
            words: vec![0; word_count(len)],
        }
    }

    pub fn all_on(len: usize) -> Self {
        let mut s = StateVector {
            len,
            words: vec![u64::MAX; word_count(len)],
        };
        s.clear_padding();
        s
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut s = StateVector::default();
        for on in bits {
            s.push(on);
        }
        s
    }

    /// Builds a state from little-endian packed bytes; `None` when the byte
    /// count is wrong or a padding bit is set.
    pub fn from_le_bytes(len: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut words = vec![0u64; word_count(len)];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks(8)) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_le_bytes(buf);
        }
        let s = StateVector { len, words };
        let mut clean = s.clone();
        clean.clear_padding();
        (clean == s).then_some(s)
    }

    /// Packs coordinate `k` into bit `k % 8` of byte `k / 8`.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    fn clear_padding(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }

    fn push(&mut self, on: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, on);
    }

    /// Parses `"0 01 1"` style strings; whitespace and parentheses are ignored.
    pub fn parse(text: &str) -> Option<Self> {
        let mut s = StateVector::default();
        for c in text.chars() {
            match c {
                '0' => s.push(false),
                '1' => s.push(true),
                c if c.is_whitespace() || "(),[]".contains(c) => {}
                _ => return None,
            }
        }
        Some(s)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, k: usize) -> bool {
        assert!(k < self.len, "coordinate {k} out of range {}", self.len);
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn set(&mut self, k: usize, on: bool) {
        assert!(k < self.len, "coordinate {k} out of range {}", self.len);
        let bit = 1u64 << (k % 64);
        if on {
            self.words[k / 64] |= bit;
        } else {
            self.words[k / 64] &= !bit;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|k| self.get(k))
    }

    /// Coordinates switched on, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        set_bits(self.words.iter().copied())
    }

    /// Coordinates where `self` and `other` differ, ascending. Both must have
    /// the same length.
    pub fn differences<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = usize> + 'a {
        set_bits(self.words.iter().zip(&other.words).map(|(a, b)| a ^ b))
    }

    pub fn count_on(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Compares two equally long states by the protocol's bit preference: at
    /// the first differing coordinate the state with the sector switched on
    /// ranks higher.
    pub fn cmp_bits(&self, other: &Self) -> Ordering {
        for (a, b) in self.words.iter().zip(&other.words) {
            let diff = a ^ b;
            if diff != 0 {
                let bit = 1u64 << diff.trailing_zeros();
                return if a & bit != 0 {
                    Ordering::Greater
                } else {
                    Ordering::Less
                };
            }
        }
        self.len.cmp(&other.len)
    }
}

fn set_bits(words: impl Iterator<Item = u64>) -> impl Iterator<Item = usize> {
    words.enumerate().flat_map(|(i, mut w)| {
        std::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let t = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(i * 64 + t)
        })
    })
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for StateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Capacity `P_G`, incentive rate `Ic` and event duration broadcast by the
/// system operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorCommand {
    pub capacity_mw: Megawatts,
    pub incentive_rate: f64,
    pub duration_h: f64,
}

impl OperatorCommand {
    pub fn new(capacity_mw: Megawatts, incentive_rate: f64, duration_h: f64) -> Self {
        OperatorCommand {
            capacity_mw,
            incentive_rate,
            duration_h,
        }
    }
}

/// Utility and load of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Assessment {
    pub utility: Utility,
    pub load: Megawatts,
}

/// Ranks two assessed states: higher utility first, then lower load, then
/// [`StateVector::cmp_bits`]. `Greater` means `a` is preferred.
pub fn rank(a: (&Assessment, &StateVector), b: (&Assessment, &StateVector)) -> Ordering {
    a.0.utility
        .cmp(&b.0.utility)
        .then_with(|| b.0.load.cmp(&a.0.load))
        .then_with(|| a.1.cmp_bits(b.1))
}

/// The users of one load-management event with precomputed coordinate data.
#[derive(Debug, Clone, PartialEq)]
pub struct Coalition {
    users: Vec<UserLoad>,
    offsets: Vec<usize>,
    coord_power: Vec<Megawatts>,
    coord_value: Vec<Utility>,
    index: BTreeMap<UserId, usize>,
}

impl Coalition {
    pub fn new(mut users: Vec<UserLoad>) -> Result<Self, ModelError> {
        users.sort_by_key(|u| u.user_id);
        let mut index = BTreeMap::new();
        let mut offsets = Vec::with_capacity(users.len() + 1);
        let mut coord_power = Vec::new();
        let mut coord_value = Vec::new();
        for (i, user) in users.iter().enumerate() {
            if index.insert(user.user_id, i).is_some() {
                return Err(ModelError::InvalidUser {
                    user: user.user_id,
                    reason: "duplicate user id".into(),
                });
            }
            offsets.push(coord_power.len());
            for (k, sector) in user.sectors.iter().enumerate() {
                if sector.baseline_mw <= Megawatts::ZERO {
                    return Err(ModelError::InvalidUser {
                        user: user.user_id,
                        reason: format!("sector {} baseline must be positive", k + 1),
                    });
                }
                if sector.weight < Weight::from_centi(0) {
                    return Err(ModelError::InvalidUser {
                        user: user.user_id,
                        reason: format!("sector {} weight must be non-negative", k + 1),
                    });
                }
                coord_power.push(sector.baseline_mw);
                coord_value.push(sector.utility());
            }
        }
        offsets.push(coord_power.len());
        Ok(Coalition {
            users,
            offsets,
            coord_power,
            coord_value,
            index,
        })
    }

    pub fn users(&self) -> &[UserLoad] {
        &self.users
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Total number of coordinates, `sum(n_i)`.
    pub fn num_sectors(&self) -> usize {
        self.coord_power.len()
    }

    pub fn index_of(&self, user: UserId) -> Option<usize> {
        self.index.get(&user).copied()
    }

    pub fn user_at(&self, idx: usize) -> &UserLoad {
        &self.users[idx]
    }

    /// Coordinate range of the user at position `idx`.
    pub fn block(&self, idx: usize) -> Range<usize> {
        self.offsets[idx]..self.offsets[idx + 1]
    }

    pub fn coord_power(&self) -> &[Megawatts] {
        &self.coord_power
    }

    pub fn coord_value(&self) -> &[Utility] {
        &self.coord_value
    }

    pub fn total_baseline(&self) -> Megawatts {
        self.coord_power.iter().copied().sum()
    }

    pub fn user_baseline(&self, idx: usize) -> Megawatts {
        self.coord_power[self.block(idx)].iter().copied().sum()
    }

    pub fn all_on(&self) -> StateVector {
        StateVector::all_on(self.num_sectors())
    }

    pub fn all_off(&self) -> StateVector {
        StateVector::all_off(self.num_sectors())
    }

    pub fn check_len(&self, state: &StateVector) -> Result<(), ModelError> {
        if state.len() != self.num_sectors() {
            return Err(ModelError::Dimension {
                expected: self.num_sectors(),
                got: state.len(),
            });
        }
        Ok(())
    }

    /// Resolves clamp user ids into positions, rejecting unknown users.
    pub fn clamp_positions(&self, clamps: &Clamps) -> Result<Vec<(usize, Megawatts)>, ModelError> {
        clamps
            .iter()
            .map(|(&user, &mw)| {
                self.index_of(user)
                    .map(|i| (i, mw))
                    .ok_or(ModelError::UnknownUser(user))
            })
            .collect()
    }

    /// Load contributed by the on-bits of a single user's block.
    pub fn block_load(&self, state: &StateVector, idx: usize) -> Megawatts {
        self.block(idx)
            .filter(|&k| state.get(k))
            .map(|k| self.coord_power[k])
            .sum()
    }

    /// Utility and load of `state` with clamped users counted at their clamp
    /// value and zero utility.
    pub fn assess(&self, state: &StateVector, clamps: &Clamps) -> Result<Assessment, ModelError> {
        self.check_len(state)?;
        let clamped = self.clamp_positions(clamps)?;
        let mut out = Assessment::default();
        let mut next = clamped.iter().peekable();
        for idx in 0..self.num_users() {
            if let Some(&&(ci, mw)) = next.peek() {
                if ci == idx {
                    out.load += mw;
                    next.next();
                    continue;
                }
            }
            for k in self.block(idx) {
                if state.get(k) {
                    out.load += self.coord_power[k];
                    out.utility += self.coord_value[k];
                }
            }
        }
        Ok(out)
    }

    /// Sets every clamped user's block to "on", the way clamped loads are reported.
    pub fn normalize_clamped(
        &self,
        state: &mut StateVector,
        clamps: &Clamps,
    ) -> Result<(), ModelError> {
        for (idx, _) in self.clamp_positions(clamps)? {
            for k in self.block(idx) {
                state.set(k, true);
            }
        }
        Ok(())
    }

    pub fn clamped_total(clamps: &Clamps) -> Megawatts {
        clamps.values().copied().sum()
    }
}

/// Total MW of the sectors switched on in `state`.
pub fn evaluate_load(state: &StateVector, users: &Coalition) -> Result<Megawatts, ModelError> {
    users.check_len(state)?;
    Ok(state.ones().map(|k| users.coord_power()[k]).sum())
}

/// `sum(weight * baseline)` over the sectors switched on in `state`.
pub fn evaluate_utility(state: &StateVector, users: &Coalition) -> Result<Utility, ModelError> {
    users.check_len(state)?;
    Ok(state.ones().map(|k| users.coord_value()[k]).sum())
}

/// Whether the load of `state`, with clamped users replaced by their clamp
/// value, fits under `capacity_mw`.
pub fn is_feasible(
    state: &StateVector,
    users: &Coalition,
    capacity_mw: Megawatts,
    clamps: &Clamps,
) -> Result<bool, ModelError> {
    Ok(users.assess(state, clamps)?.load <= capacity_mw)
}
