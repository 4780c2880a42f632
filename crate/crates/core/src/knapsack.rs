//! Exact solvers for the capacity-constrained utility maximization.
//!
//! Every sector is an independent 0-1 item whose weight is its baseline and
//! whose value is `weight * baseline`. All solvers share one total order on
//! solutions: higher utility, then lower load, then the state whose first
//! differing coordinate is switched on (see [`crate::model::rank`]).

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::SolverError;
use crate::model::{rank, Assessment, Clamps, Coalition, StateVector, UserId};
use crate::units::{Megawatts, Utility};

/// Largest coalition [`solve_bruteforce`] will enumerate.
pub const MAX_BRUTEFORCE_SECTORS: usize = 24;
/// Largest user block [`local_block_optimize`] will enumerate.
pub const MAX_BLOCK_SECTORS: usize = 20;
/// Upper bound on back-pointer bits kept by [`solve_centralized`].
pub const MAX_TABLE_BITS: u128 = 1 << 33;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Solution {
    pub state: StateVector,
    pub utility: Utility,
    pub load_mw: Megawatts,
}

impl Solution {
    pub fn assessment(&self) -> Assessment {
        Assessment {
            utility: self.utility,
            load: self.load_mw,
        }
    }

    /// `Greater` when `self` is the preferred solution.
    pub fn rank(&self, other: &Solution) -> Ordering {
        rank(
            (&self.assessment(), &self.state),
            (&other.assessment(), &other.state),
        )
    }
}

/// A capacity together with the clamp set, resolved against one coalition.
#[derive(Debug, Clone)]
pub struct CapacityConstraint<'a> {
    coalition: &'a Coalition,
    capacity: Megawatts,
    clamps: &'a Clamps,
    clamp_at: Vec<Option<Megawatts>>,
    /// Per-coordinate power and value, zero inside clamped blocks.
    power: Vec<Megawatts>,
    value: Vec<Utility>,
    clamped: Vec<usize>,
    clamped_load: Megawatts,
}

impl<'a> CapacityConstraint<'a> {
    pub fn new(
        coalition: &'a Coalition,
        capacity: Megawatts,
        clamps: &'a Clamps,
    ) -> Result<Self, SolverError> {
        let mut clamp_at = vec![None; coalition.num_users()];
        let mut power = coalition.coord_power().to_vec();
        let mut value = coalition.coord_value().to_vec();
        for (idx, mw) in coalition.clamp_positions(clamps)? {
            clamp_at[idx] = Some(mw);
            for k in coalition.block(idx) {
                power[k] = Megawatts::ZERO;
                value[k] = Utility::ZERO;
            }
        }
        let clamped: Vec<usize> = (0..clamp_at.len())
            .filter(|&i| clamp_at[i].is_some())
            .collect();
        let clamped_load = clamp_at.iter().flatten().copied().sum();
        Ok(CapacityConstraint {
            coalition,
            capacity,
            clamps,
            clamp_at,
            power,
            value,
            clamped,
            clamped_load,
        })
    }

    pub fn coalition(&self) -> &'a Coalition {
        self.coalition
    }

    pub fn capacity(&self) -> Megawatts {
        self.capacity
    }

    pub fn clamps(&self) -> &'a Clamps {
        self.clamps
    }

    pub fn is_clamped(&self, idx: usize) -> bool {
        self.clamp_at[idx].is_some()
    }

    pub fn clamped_total(&self) -> Megawatts {
        self.clamped_load
    }

    /// Errors when not even the all-off state fits.
    pub fn check_satisfiable(&self) -> Result<(), SolverError> {
        let clamped = self.clamped_total();
        if self.capacity < clamped {
            return Err(SolverError::Infeasible {
                capacity: self.capacity,
                clamped,
            });
        }
        Ok(())
    }

    /// Switches clamped blocks on in place.
    pub fn normalize(&self, state: &mut StateVector) {
        for &idx in &self.clamped {
            for k in self.coalition.block(idx) {
                state.set(k, true);
            }
        }
    }

    /// Assessment with clamped users at their clamp value; `state` must have
    /// the coalition's length.
    pub fn assess(&self, state: &StateVector) -> Assessment {
        let mut out = Assessment {
            utility: Utility::ZERO,
            load: self.clamped_total(),
        };
        for k in state.ones() {
            out.load += self.power[k];
            out.utility += self.value[k];
        }
        out
    }

    /// Assessment of `to` derived from the known assessment of `from` by
    /// visiting only the coordinates that differ. Exact, and equal to
    /// `assess(to)` whenever `known == assess(from)`.
    pub fn assess_change(
        &self,
        from: &StateVector,
        known: Assessment,
        to: &StateVector,
    ) -> Assessment {
        let mut out = known;
        for k in from.differences(to) {
            if to.get(k) {
                out.load += self.power[k];
                out.utility += self.value[k];
            } else {
                out.load -= self.power[k];
                out.utility -= self.value[k];
            }
        }
        out
    }

    pub fn fits(&self, a: &Assessment) -> bool {
        a.load <= self.capacity
    }

    /// Load of the user's own block as deployed: the clamp value if clamped.
    pub fn own_load(&self, state: &StateVector, idx: usize) -> Megawatts {
        match self.clamp_at[idx] {
            Some(mw) => mw,
            None => self.coalition.block_load(state, idx),
        }
    }

    /// Best feasible setting of block `idx` with every other coordinate of
    /// `base` frozen, or `None` when no setting fits. `base` is normalized
    /// for clamps first. The user must not be clamped.
    pub fn optimize_block(&self, base: &StateVector, idx: usize) -> Option<Solution> {
        let mut state = base.clone();
        self.normalize(&mut state);
        let full = self.assess(&state);
        self.optimize_block_from(state, full, idx)
    }

    /// As [`Self::optimize_block`] for an already normalized state with a
    /// known assessment.
    pub(crate) fn optimize_block_from(
        &self,
        mut state: StateVector,
        full: Assessment,
        idx: usize,
    ) -> Option<Solution> {
        debug_assert!(!self.is_clamped(idx));
        let block = self.coalition.block(idx);
        let power = &self.coalition.coord_power()[block.clone()];
        let value = &self.coalition.coord_value()[block.clone()];
        let mut rest = full;
        for (j, k) in block.clone().enumerate() {
            if state.get(k) {
                rest.load -= power[j];
                rest.utility -= value[j];
            }
        }
        let n = block.len();
        // Bit j of `mask` is coordinate `block.start + j`; reversing bit order
        // makes a numerically larger key mean "earlier coordinate on".
        let key = |m: u32| {
            if n == 0 {
                0
            } else {
                m.reverse_bits() >> (32 - n)
            }
        };
        let mut best: Option<(Assessment, u32)> = None;
        for mask in 0u32..(1u32 << n) {
            let mut a = rest;
            for j in 0..n {
                if mask & (1 << j) != 0 {
                    a.load += power[j];
                    a.utility += value[j];
                }
            }
            if !self.fits(&a) {
                continue;
            }
            let better = match &best {
                None => true,
                Some((b, bkey)) => a
                    .utility
                    .cmp(&b.utility)
                    .then_with(|| b.load.cmp(&a.load))
                    .then_with(|| key(mask).cmp(&key(*bkey)))
                    .is_gt(),
            };
            if better {
                best = Some((a, mask));
            }
        }
        let (a, mask) = best?;
        for (j, k) in block.enumerate() {
            state.set(k, mask & (1 << j) != 0);
        }
        Some(Solution {
            state,
            utility: a.utility,
            load_mw: a.load,
        })
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

/// Exact 0-1 knapsack by dynamic programming over scaled-integer capacity.
///
/// Items are processed from the last coordinate to the first so that the
/// forward reconstruction can honour the shared tie-break at every step.
/// Clamped users are reported switched on, consume their clamp value and
/// add no utility.
pub fn solve_centralized(
    users: &Coalition,
    capacity_mw: Megawatts,
    clamps: &Clamps,
) -> Result<Solution, SolverError> {
    let limit = CapacityConstraint::new(users, capacity_mw, clamps)?;
    limit.check_satisfiable()?;

    let mut items: Vec<usize> = Vec::new();
    for idx in 0..users.num_users() {
        if !limit.is_clamped(idx) {
            items.extend(users.block(idx));
        }
    }
    let power = users.coord_power();
    let value = users.coord_value();

    let budget = (capacity_mw - limit.clamped_total()).centi();
    let total: i64 = items.iter().map(|&k| power[k].centi()).sum();
    let step = items.iter().map(|&k| power[k].centi()).fold(0, gcd).max(1);
    let cells = (budget.min(total) / step) as usize;
    let width = cells + 1;
    let bits = items.len() as u128 * width as u128;
    if bits > MAX_TABLE_BITS {
        return Err(SolverError::TableTooLarge {
            cells: bits,
            limit: MAX_TABLE_BITS,
        });
    }

    // best[c] = (utility, load) of the best suffix selection within c steps.
    let mut best: Vec<(i64, i64)> = vec![(0, 0); width];
    let words = width.div_ceil(64);
    let mut take = vec![0u64; items.len() * words];
    for (pos, &k) in items.iter().enumerate().rev() {
        let w = (power[k].centi() / step) as usize;
        let (v, p) = (value[k].raw(), power[k].centi());
        let row = &mut take[pos * words..(pos + 1) * words];
        for c in (w..width).rev() {
            let (bu, bl) = best[c - w];
            let on = (bu + v, bl + p);
            let cur = best[c];
            if on.0 > cur.0 || (on.0 == cur.0 && on.1 <= cur.1) {
                best[c] = on;
                row[c / 64] |= 1 << (c % 64);
            }
        }
    }

    let mut state = users.all_off();
    limit.normalize(&mut state);
    let mut c = cells;
    for (pos, &k) in items.iter().enumerate() {
        if take[pos * words + c / 64] & (1 << (c % 64)) != 0 {
            state.set(k, true);
            c -= (power[k].centi() / step) as usize;
        }
    }
    let a = limit.assess(&state);
    debug_assert_eq!(a.utility.raw(), best[cells].0);
    Ok(Solution {
        state,
        utility: a.utility,
        load_mw: a.load,
    })
}

/// Exhaustive enumeration of every state; the independent oracle for
/// [`solve_centralized`].
pub fn solve_bruteforce(
    users: &Coalition,
    capacity_mw: Megawatts,
    clamps: &Clamps,
) -> Result<Solution, SolverError> {
    let n = users.num_sectors();
    if n > MAX_BRUTEFORCE_SECTORS {
        return Err(SolverError::TooManySectors {
            count: n,
            max: MAX_BRUTEFORCE_SECTORS,
        });
    }
    let limit = CapacityConstraint::new(users, capacity_mw, clamps)?;
    limit.check_satisfiable()?;

    let mut best: Option<Solution> = None;
    for mask in 0u64..(1u64 << n) {
        let bits = (0..n).map(|k| mask & (1 << k) != 0);
        let mut state = StateVector::from_bits(bits);
        limit.normalize(&mut state);
        let a = limit.assess(&state);
        if !limit.fits(&a) {
            continue;
        }
        let candidate = Solution {
            state,
            utility: a.utility,
            load_mw: a.load,
        };
        if best.as_ref().is_none_or(|b| candidate.rank(b).is_gt()) {
            best = Some(candidate);
        }
    }
    // The all-off state always fits once the clamps do.
    Ok(best.expect("all-off state is feasible"))
}

/// Re-optimizes one user's block with the rest of `base` frozen.
///
/// Returns `Ok(None)` when no setting of the block makes the state feasible.
pub fn local_block_optimize(
    base: &StateVector,
    user_id: UserId,
    users: &Coalition,
    capacity_mw: Megawatts,
    clamps: &Clamps,
) -> Result<Option<Solution>, SolverError> {
    users.check_len(base)?;
    let idx = users
        .index_of(user_id)
        .ok_or(crate::error::ModelError::UnknownUser(user_id))?;
    let limit = CapacityConstraint::new(users, capacity_mw, clamps)?;
    if limit.is_clamped(idx) {
        return Err(SolverError::ClampedUser(user_id));
    }
    let n = users.block(idx).len();
    if n > MAX_BLOCK_SECTORS {
        return Err(SolverError::TooManySectors {
            count: n,
            max: MAX_BLOCK_SECTORS,
        });
    }
    Ok(limit.optimize_block(base, idx))
}
