//! Fixed-capacity episodic memory of sensorimotor samples.
//!
//! Until full, samples are appended. Once full, every insert sweeps the
//! whole memory and overwrites each element with the new sample with
//! probability `p_em`; when the sweep overwrites nothing, one uniformly
//! chosen element is overwritten instead, so each new sample enters.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::SensorimotorSample;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MemoryUpdateReport {
    pub replaced_indices: Vec<usize>,
    pub was_full: bool,
    pub appended: bool,
    /// The sweep replaced nothing and one random slot was overwritten.
    pub forced: bool,
    /// Copies of the new sample beyond the first.
    pub duplicates_created: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory {
    capacity_batches: usize,
    batch_len: usize,
    elements: Vec<SensorimotorSample>,
    inserted: u64,
    replaced: u64,
    forced_replacements: u64,
}

fn check_probability(p_em: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_em) {
        return Err(Error::Config(format!("p_em must lie in [0, 1], got {p_em}")));
    }
    Ok(())
}

impl EpisodicMemory {
    /// `capacity_batches = 0` gives a memory that never stores anything.
    pub fn new(capacity_batches: usize, batch_len: usize) -> Result<Self> {
        if batch_len == 0 {
            return Err(Error::Config("memory batch length must be at least 1".into()));
        }
        Ok(Self {
            capacity_batches,
            batch_len,
            elements: Vec::with_capacity(capacity_batches * batch_len),
            inserted: 0,
            replaced: 0,
            forced_replacements: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity_batches * self.batch_len
    }

    pub fn capacity_batches(&self) -> usize {
        self.capacity_batches
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.elements.len() >= self.capacity()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn replaced(&self) -> u64 {
        self.replaced
    }

    pub fn forced_replacements(&self) -> u64 {
        self.forced_replacements
    }

    pub fn samples(&self) -> &[SensorimotorSample] {
        &self.elements
    }

    pub fn all_samples(&self) -> Vec<SensorimotorSample> {
        self.elements.clone()
    }

    /// Distinct samples over stored samples; 1.0 when empty.
    pub fn diversity(&self) -> f64 {
        if self.elements.is_empty() {
            return 1.0;
        }
        let distinct: HashSet<u64> = self.elements.iter().map(|s| s.id).collect();
        distinct.len() as f64 / self.elements.len() as f64
    }

    pub fn insert<R: Rng + ?Sized>(
        &mut self,
        sample: &SensorimotorSample,
        p_em: f64,
        rng: &mut R,
    ) -> Result<MemoryUpdateReport> {
        check_probability(p_em)?;
        if self.capacity() == 0 {
            return Ok(MemoryUpdateReport::default());
        }
        self.inserted += 1;
        if !self.is_full() {
            self.elements.push(sample.clone());
            return Ok(MemoryUpdateReport {
                appended: true,
                ..MemoryUpdateReport::default()
            });
        }
        Ok(self.sweep(|_| sample, p_em, rng))
    }

    /// Batch-granular update: appends while there is room, then a single
    /// sweep in which each overwritten slot takes a uniformly chosen sample
    /// from what is left of `samples`.
    pub fn insert_batch<R: Rng + ?Sized>(
        &mut self,
        samples: &[SensorimotorSample],
        p_em: f64,
        rng: &mut R,
    ) -> Result<MemoryUpdateReport> {
        check_probability(p_em)?;
        if self.capacity() == 0 || samples.is_empty() {
            return Ok(MemoryUpdateReport::default());
        }
        self.inserted += samples.len() as u64;
        let room = self.capacity() - self.elements.len();
        let take = room.min(samples.len());
        self.elements.extend_from_slice(&samples[..take]);
        let rest = &samples[take..];
        if rest.is_empty() {
            return Ok(MemoryUpdateReport {
                appended: true,
                ..MemoryUpdateReport::default()
            });
        }
        let mut report = self.sweep(|rng| &rest[rng.random_range(0..rest.len())], p_em, rng);
        report.appended = take > 0;
        Ok(report)
    }

    fn sweep<'s, R: Rng + ?Sized>(
        &mut self,
        mut pick: impl FnMut(&mut R) -> &'s SensorimotorSample,
        p_em: f64,
        rng: &mut R,
    ) -> MemoryUpdateReport {
        let mut replaced_indices = Vec::new();
        for i in 0..self.elements.len() {
            if rng.random::<f64>() < p_em {
                self.elements[i] = pick(rng).clone();
                replaced_indices.push(i);
            }
        }
        let forced = replaced_indices.is_empty();
        if forced {
            let i = rng.random_range(0..self.elements.len());
            self.elements[i] = pick(rng).clone();
            replaced_indices.push(i);
            self.forced_replacements += 1;
        }
        self.replaced += replaced_indices.len() as u64;
        MemoryUpdateReport {
            duplicates_created: replaced_indices.len() - 1,
            replaced_indices,
            was_full: true,
            appended: false,
            forced,
        }
    }
}
