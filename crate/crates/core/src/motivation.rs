//! Goal bookkeeping and learning-progress-driven goal selection.
//!
//! Each goal tracks its last prediction error; learning progress is
//! `tanh(|PE_now - PE_prev|)`, decayed every iteration. Selection is
//! argmax-LP with an epsilon chance of a uniformly random goal, and motor
//! commands are replaced by uniform random ones with a fixed probability.

use rand::seq::index;
use rand::Rng;

use crate::encoder::{Autoencoder, LatentCode};
use crate::error::{Error, Result};
use crate::models::InverseModel;
use crate::world::{GridIndex, MotorCommand, WorldDataset};

/// Largest f64 below 1.
pub const LP_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub id: usize,
    pub cell: GridIndex,
    /// Standardized code of the goal image.
    pub code: LatentCode,
    /// Ground-truth position of the goal image; only used for logging.
    pub truth_motor: MotorCommand,
    pub last_pe: f64,
    pub lp: f64,
    pub visits: u64,
}

impl Goal {
    pub fn new(id: usize, cell: GridIndex, code: LatentCode, truth_motor: MotorCommand) -> Self {
        Self {
            id,
            cell,
            code,
            truth_motor,
            last_pe: 0.0,
            lp: 0.0,
            visits: 0,
        }
    }

    /// `lp <- tanh(|pe_now - last_pe|)`, then remembers `pe_now`.
    pub fn update_lp(&mut self, pe_now: f64) -> Result<()> {
        if !(pe_now >= 0.0) || !pe_now.is_finite() {
            return Err(Error::Config(format!("prediction error must be finite and >= 0, got {pe_now}")));
        }
        // f64 tanh reaches exactly 1.0 for arguments above ~19
        self.lp = (pe_now - self.last_pe).abs().tanh().min(LP_MAX);
        self.last_pe = pe_now;
        self.visits += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    /// Per-iteration multiplicative LP decay.
    pub decay: f64,
    pub epsilon_goal: f64,
    pub p_random_move: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            decay: 0.99,
            epsilon_goal: 0.15,
            p_random_move: 0.30,
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        for (name, p) in [("epsilon_goal", self.epsilon_goal), ("p_random_move", self.p_random_move)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalSet {
    goals: Vec<Goal>,
    policy: SelectionPolicy,
    selections: u64,
}

/// Euclidean distance between two codes.
pub fn compute_pe(predicted: &LatentCode, observed: &LatentCode) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::Dimension(format!(
            "codes of length {} and {}",
            predicted.len(),
            observed.len()
        )));
    }
    Ok(predicted.distance(observed))
}

/// `n` goals at distinct grid cells, sampled without replacement.
pub fn init_goals<R: Rng + ?Sized>(
    world: &WorldDataset,
    ae: &Autoencoder,
    n: usize,
    policy: SelectionPolicy,
    rng: &mut R,
) -> Result<GoalSet> {
    if n > world.cell_count() {
        return Err(Error::Config(format!(
            "{n} goals requested from {} cells",
            world.cell_count()
        )));
    }
    let cells: Vec<GridIndex> = index::sample(rng, world.cell_count(), n)
        .into_iter()
        .map(|flat| world.cell(flat))
        .collect();
    let goals = cells
        .into_iter()
        .enumerate()
        .map(|(id, cell)| {
            let code = ae.encode_standardized(world.image(cell))?;
            Ok(Goal::new(id, cell, code, world.cell_position(cell)))
        })
        .collect::<Result<Vec<_>>>()?;
    GoalSet::new(goals, policy)
}

impl GoalSet {
    pub fn new(goals: Vec<Goal>, policy: SelectionPolicy) -> Result<Self> {
        policy.validate()?;
        if goals.is_empty() {
            return Err(Error::Empty("goal set"));
        }
        if goals.iter().enumerate().any(|(i, g)| g.id != i) {
            return Err(Error::Config("goal ids must be 0..n in order".into()));
        }
        Ok(Self {
            goals,
            policy,
            selections: 0,
        })
    }

    pub fn goals(&self) -> &[Goal] {
        &self.goals
    }

    pub fn goal(&self, id: usize) -> &Goal {
        &self.goals[id]
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn policy(&self) -> SelectionPolicy {
        self.policy
    }

    pub fn lps(&self) -> Vec<f64> {
        self.goals.iter().map(|g| g.lp).collect()
    }

    pub fn update_lp(&mut self, id: usize, pe_now: f64) -> Result<()> {
        let n = self.goals.len();
        self.goals
            .get_mut(id)
            .ok_or_else(|| Error::Config(format!("goal {id} out of range (n = {n})")))?
            .update_lp(pe_now)
    }

    pub fn decay_all(&mut self) {
        let gamma = self.policy.decay;
        for g in &mut self.goals {
            g.lp *= gamma;
        }
    }

    /// Uniform on the first call of a run or with probability `epsilon_goal`;
    /// otherwise the highest-LP goal, ties broken uniformly.
    pub fn select_goal<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let first = self.selections == 0;
        self.selections += 1;
        let n = self.goals.len();
        if first || rng.random::<f64>() < self.policy.epsilon_goal {
            return rng.random_range(0..n);
        }
        let best = self.goals.iter().map(|g| g.lp).fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = self
            .goals
            .iter()
            .filter(|g| g.lp == best)
            .map(|g| g.id)
            .collect();
        if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.random_range(0..tied.len())]
        }
    }

    /// Inverse-model command for `goal_code`, or with probability
    /// `p_random_move` a uniform random command. The flag reports the latter.
    pub fn choose_command<R: Rng + ?Sized>(
        &self,
        im: &InverseModel,
        goal_code: &LatentCode,
        rng: &mut R,
    ) -> Result<(MotorCommand, bool)> {
        if rng.random::<f64>() < self.policy.p_random_move {
            let x = rng.random::<f64>();
            let y = rng.random::<f64>();
            return Ok((MotorCommand::new(x, y), true));
        }
        Ok((im.predict(goal_code)?, false))
    }
}
