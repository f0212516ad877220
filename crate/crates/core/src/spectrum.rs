//! Per-arc slot occupancy with guard-band aware block search.
//!
//! Guard-band rule: two distinct allocations sharing an arc must leave at
//! least `gb` free slots between their nearest slots. The ends of the
//! spectrum need no guard. `gb = 0` permits adjacency.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::SpectrumError;
use crate::topology::ArcId;

/// A run of consecutive slots `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotRange {
    pub start: usize,
    pub len: usize,
}

impl SlotRange {
    pub fn new(start: usize, len: usize) -> SlotRange {
        SlotRange { start, len }
    }

    /// One past the last slot.
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    /// Number of free slots strictly between two disjoint ranges, `None` if they overlap.
    pub fn gap_to(&self, other: &SlotRange) -> Option<usize> {
        if self.end() <= other.start {
            Some(other.start - self.end())
        } else if other.end() <= self.start {
            Some(self.start - other.end())
        } else {
            None
        }
    }

    /// True when the two ranges may share an arc under guard band `gb`.
    pub fn compatible(&self, other: &SlotRange, gb: usize) -> bool {
        matches!(self.gap_to(other), Some(g) if g >= gb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AllocId(pub u32);

/// Fixed-width bitset over the slots of one link; bit `i` is slot `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotMask {
    bits: Vec<u64>,
    len: usize,
}

impl SlotMask {
    pub fn new(len: usize) -> SlotMask {
        SlotMask { bits: vec![0; len.div_ceil(64)], len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn set_range(&mut self, r: SlotRange) {
        for i in r.start..r.end().min(self.len) {
            self.set(i);
        }
    }

    fn or_words(&mut self, words: &[u64]) {
        for (a, b) in self.bits.iter_mut().zip(words) {
            *a |= *b;
        }
    }

    pub fn or_assign(&mut self, other: &SlotMask) {
        self.or_words(&other.bits);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.bits.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn shifted_up(&self) -> Vec<u64> {
        let mut out = vec![0; self.bits.len()];
        let mut carry = 0;
        for (o, w) in out.iter_mut().zip(&self.bits) {
            *o = (w << 1) | carry;
            carry = w >> 63;
        }
        out
    }

    fn shifted_down(&self) -> Vec<u64> {
        let mut out = vec![0; self.bits.len()];
        let mut carry = 0;
        for (o, w) in out.iter_mut().zip(&self.bits).rev() {
            *o = (w >> 1) | carry;
            carry = w << 63;
        }
        out
    }

    /// Every set bit spread by `by` positions to both sides.
    pub fn dilate(&self, by: usize) -> SlotMask {
        let mut up = self.clone();
        let mut down = self.clone();
        let mut acc = self.clone();
        for _ in 0..by {
            up.bits = up.shifted_up();
            up.clear_tail();
            down.bits = down.shifted_down();
            acc.or_assign(&up);
            acc.or_assign(&down);
        }
        acc
    }

    fn next_set(&self, from: usize) -> usize {
        self.scan(from, false)
    }

    fn next_clear(&self, from: usize) -> usize {
        self.scan(from, true)
    }

    fn scan(&self, from: usize, invert: bool) -> usize {
        if from >= self.len {
            return self.len;
        }
        let mut w = from / 64;
        let mut word = if invert { !self.bits[w] } else { self.bits[w] } & (!0u64 << (from % 64));
        loop {
            if word != 0 {
                return (w * 64 + word.trailing_zeros() as usize).min(self.len);
            }
            w += 1;
            if w >= self.bits.len() {
                return self.len;
            }
            word = if invert { !self.bits[w] } else { self.bits[w] };
        }
    }

    /// Maximal runs of clear bits, ascending by start.
    pub fn clear_runs(&self) -> Vec<SlotRange> {
        let mut out = Vec::new();
        let mut i = self.next_clear(0);
        while i < self.len {
            let j = self.next_set(i);
            out.push(SlotRange::new(i, j - i));
            i = self.next_clear(j);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub arcs: Vec<ArcId>,
    pub range: SlotRange,
}

/// Occupancy ledger for every directed arc of one network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpectrumState {
    slots: usize,
    words: usize,
    occupied: Vec<u64>,
    owner: Vec<u32>,
    allocs: BTreeMap<AllocId, Allocation>,
    next_id: u32,
}

impl SpectrumState {
    pub fn new(num_arcs: usize, slots: usize) -> SpectrumState {
        let words = slots.div_ceil(64);
        SpectrumState {
            slots,
            words,
            occupied: vec![0; num_arcs * words],
            owner: vec![0; num_arcs * slots],
            allocs: BTreeMap::new(),
            next_id: 1,
        }
    }

    pub fn for_network(net: &crate::topology::Network) -> SpectrumState {
        SpectrumState::new(net.num_arcs(), net.slots_per_link())
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn num_arcs(&self) -> usize {
        self.owner.len() / self.slots.max(1)
    }

    fn arc_words(&self, arc: ArcId) -> &[u64] {
        &self.occupied[arc.0 * self.words..(arc.0 + 1) * self.words]
    }

    pub fn owner(&self, arc: ArcId, slot: usize) -> Option<AllocId> {
        match self.owner[arc.0 * self.slots + slot] {
            0 => None,
            id => Some(AllocId(id)),
        }
    }

    pub fn is_free(&self, arc: ArcId, slot: usize) -> bool {
        self.owner(arc, slot).is_none()
    }

    pub fn occupancy(&self, arc: ArcId) -> SlotMask {
        SlotMask { bits: self.arc_words(arc).to_vec(), len: self.slots }
    }

    pub fn allocation(&self, id: AllocId) -> Option<&Allocation> {
        self.allocs.get(&id)
    }

    pub fn active(&self) -> impl Iterator<Item = (AllocId, &Allocation)> {
        self.allocs.iter().map(|(k, v)| (*k, v))
    }

    pub fn active_count(&self) -> usize {
        self.allocs.len()
    }

    /// True when no slot on any arc is owned.
    pub fn is_clear(&self) -> bool {
        self.allocs.is_empty() && self.occupied.iter().all(|w| *w == 0)
    }

    /// Union of occupied slots along `arcs`, spread by `gb`. A slot is usable
    /// for a new allocation on this path iff its bit is clear.
    pub fn blocked_mask(&self, arcs: &[ArcId], gb: usize) -> SlotMask {
        let mut m = SlotMask::new(self.slots);
        for a in arcs {
            m.or_words(self.arc_words(*a));
        }
        m.dilate(gb)
    }

    /// Maximal slot ranges usable on every arc of `arcs` under guard band `gb`.
    pub fn free_blocks(&self, arcs: &[ArcId], gb: usize) -> Result<Vec<SlotRange>, SpectrumError> {
        if arcs.is_empty() {
            return Err(SpectrumError::EmptyPath);
        }
        Ok(self.blocked_mask(arcs, gb).clear_runs())
    }

    fn check(&self, arcs: &[ArcId], range: SlotRange, gb: usize) -> Result<(), SpectrumError> {
        if arcs.is_empty() {
            return Err(SpectrumError::EmptyPath);
        }
        if range.len == 0 || range.end() > self.slots {
            return Err(SpectrumError::OutOfRange { start: range.start, len: range.len, slots: self.slots });
        }
        let lo = range.start.saturating_sub(gb);
        let hi = (range.end() + gb).min(self.slots);
        for a in arcs {
            for s in lo..hi {
                if let Some(owner) = self.owner(*a, s) {
                    return Err(SpectrumError::Conflict { arc: a.0, slot: s, owner });
                }
            }
        }
        Ok(())
    }

    /// Marks `range` on every arc of the path. Nothing changes on error.
    pub fn allocate(&mut self, arcs: &[ArcId], range: SlotRange, gb: usize) -> Result<AllocId, SpectrumError> {
        self.check(arcs, range, gb)?;
        let id = AllocId(self.next_id);
        self.next_id += 1;
        for a in arcs {
            for s in range.start..range.end() {
                self.owner[a.0 * self.slots + s] = id.0;
                self.occupied[a.0 * self.words + s / 64] |= 1 << (s % 64);
            }
        }
        self.allocs.insert(id, Allocation { arcs: arcs.to_vec(), range });
        Ok(id)
    }

    pub fn release(&mut self, id: AllocId) -> Result<(), SpectrumError> {
        let alloc = self.allocs.remove(&id).ok_or(SpectrumError::UnknownAllocation(id))?;
        for a in &alloc.arcs {
            for s in alloc.range.start..alloc.range.end() {
                self.owner[a.0 * self.slots + s] = 0;
                self.occupied[a.0 * self.words + s / 64] &= !(1 << (s % 64));
            }
        }
        Ok(())
    }

    /// One line per arc, `1` for an occupied slot.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity(self.owner.len() + self.num_arcs());
        for arc in 0..self.num_arcs() {
            for s in 0..self.slots {
                out.push(if self.is_free(ArcId(arc), s) { '0' } else { '1' });
            }
            out.push('\n');
        }
        out
    }

    /// Verifies ledger consistency and guard-band separation. Slow.
    pub fn audit(&self, gb: usize) -> Result<(), String> {
        let mut err = String::new();
        for arc in 0..self.num_arcs() {
            let arc = ArcId(arc);
            let mut last: Option<(usize, u32)> = None;
            for s in 0..self.slots {
                let o = self.owner[arc.0 * self.slots + s];
                let bit = self.occupied[arc.0 * self.words + s / 64] >> (s % 64) & 1 == 1;
                if bit != (o != 0) {
                    let _ = writeln!(err, "arc {} slot {s}: bitset and owner table disagree", arc.0);
                }
                if o == 0 {
                    continue;
                }
                match self.allocs.get(&AllocId(o)) {
                    Some(a) if a.arcs.contains(&arc) && s >= a.range.start && s < a.range.end() => {}
                    _ => {
                        let _ = writeln!(err, "arc {} slot {s}: owner {o} has no matching allocation", arc.0);
                    }
                }
                if let Some((ls, lo)) = last {
                    if lo != o && s - ls - 1 < gb {
                        let _ = writeln!(err, "arc {}: allocations {lo} and {o} only {} slots apart", arc.0, s - ls - 1);
                    }
                }
                last = Some((s, o));
            }
        }
        for (id, a) in &self.allocs {
            for arc in &a.arcs {
                for s in a.range.start..a.range.end() {
                    if self.owner[arc.0 * self.slots + s] != id.0 {
                        let _ = writeln!(err, "allocation {} missing slot {s} on arc {}", id.0, arc.0);
                    }
                }
            }
        }
        if err.is_empty() { Ok(()) } else { Err(err) }
    }
}
