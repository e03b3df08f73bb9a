//! Multi-seed experiment grids over memory size and `p_em`, with mean and
//! standard deviation curves per grid cell.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agent::{run_with_env, Environment, EvalRecord, RunConfig, RunLog};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::stats::{mean, std_pop};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub mem_batches: usize,
    pub p_em: f64,
}

impl GridCell {
    pub fn label(&self) -> String {
        format!("mem{}_pem{}", self.mem_batches, self.p_em)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub mem_batches_values: Vec<usize>,
    pub p_em_values: Vec<f64>,
    pub runs_per_cell: usize,
    /// Shared settings; its `seed` is the base seed runs derive theirs from.
    pub base: RunConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            mem_batches_values: vec![0, 10, 20],
            p_em_values: vec![0.1, 0.01],
            runs_per_cell: 5,
            base: RunConfig::default(),
        }
    }
}

impl GridConfig {
    /// Reads `grid.mem_batches`, `grid.p_em` and `grid.runs` (comma lists)
    /// on top of the usual run keys.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut cfg = Self::default();
        for key in kv.keys() {
            if key.starts_with("grid.") && !matches!(key, "grid.mem_batches" | "grid.p_em" | "grid.runs") {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        cfg.base.apply_kv(kv, &["grid."])?;
        if let Some(v) = kv.get_list("grid.mem_batches")? {
            cfg.mem_batches_values = v;
        }
        if let Some(v) = kv.get_list("grid.p_em")? {
            cfg.p_em_values = v;
        }
        if let Some(v) = kv.get("grid.runs")? {
            cfg.runs_per_cell = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = self.base.to_kv();
        kv.set_list("grid.mem_batches", &self.mem_batches_values);
        kv.set_list("grid.p_em", &self.p_em_values);
        kv.set("grid.runs", self.runs_per_cell);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.mem_batches_values.is_empty() || self.p_em_values.is_empty() {
            return Err(Error::Config("grid value lists must be non-empty".into()));
        }
        if self.runs_per_cell == 0 {
            return Err(Error::Config("grid.runs must be at least 1".into()));
        }
        self.base.validate()?;
        for c in self.cells() {
            RunConfig {
                mem_batches: c.mem_batches,
                p_em: c.p_em,
                ..self.base.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    /// Every (mem, p_em) pair, memory size major.
    pub fn cells(&self) -> Vec<GridCell> {
        self.mem_batches_values
            .iter()
            .flat_map(|&m| self.p_em_values.iter().map(move |&p| GridCell { mem_batches: m, p_em: p }))
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run` in cell `(mem_batches, p_em)`; depends on nothing else,
/// so adding cells or runs leaves existing seeds unchanged.
pub fn derive_seed(base_seed: u64, mem_batches: usize, p_em: f64, run: usize) -> u64 {
    [mem_batches as u64, p_em.to_bits(), run as u64]
        .into_iter()
        .fold(splitmix64(base_seed), |h, v| splitmix64(h ^ v))
}

/// Mean and population standard deviation across runs at each evaluation tick.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub label: String,
    pub runs: usize,
    pub ticks: Vec<usize>,
    pub fwd_mean: Vec<f64>,
    pub fwd_std: Vec<f64>,
    pub inv_mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn aggregate(label: &str, runs: &[&[EvalRecord]]) -> Result<AggregateCurve> {
    let first = runs.first().ok_or(Error::Empty("no runs to aggregate"))?;
    let ticks: Vec<usize> = first.iter().map(|r| r.iteration).collect();
    for r in runs {
        if r.iter().map(|e| e.iteration).ne(ticks.iter().copied()) {
            return Err(Error::Config(format!("runs of {label} were evaluated at different iterations")));
        }
    }
    let column = |i: usize, f: fn(&EvalRecord) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&r[i])).collect() };
    let mut curve = AggregateCurve {
        label: label.to_string(),
        runs: runs.len(),
        ticks: ticks.clone(),
        fwd_mean: Vec::new(),
        fwd_std: Vec::new(),
        inv_mean: Vec::new(),
        inv_std: Vec::new(),
    };
    for i in 0..ticks.len() {
        let fwd = column(i, |e| e.fwd_mse);
        let inv = column(i, |e| e.inv_mse);
        curve.fwd_mean.push(mean(&fwd));
        curve.fwd_std.push(std_pop(&fwd));
        curve.inv_mean.push(mean(&inv));
        curve.inv_std.push(std_pop(&inv));
    }
    Ok(curve)
}

impl AggregateCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "fwd_mean", "fwd_std", "inv_mean", "inv_std"])?;
        for i in 0..self.ticks.len() {
            w.write_record([
                self.ticks[i].to_string(),
                self.fwd_mean[i].to_string(),
                self.fwd_std[i].to_string(),
                self.inv_mean[i].to_string(),
                self.inv_std[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: GridCell,
    pub seeds: Vec<u64>,
    pub logs: Vec<RunLog>,
    pub curve: AggregateCurve,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub cells: Vec<CellResult>,
    pub environment: Environment,
}

impl GridResult {
    pub fn cell(&self, mem_batches: usize, p_em: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.cell.mem_batches == mem_batches && c.cell.p_em == p_em)
    }
}

pub fn run_dir(out: &Path, cell: GridCell, run: usize) -> PathBuf {
    out.join(cell.label()).join(format!("run{run}"))
}

/// Runs every cell of `cfg` with `parallelism` worker threads. Results and
/// files do not depend on `parallelism`. With `out`, each run writes its logs
/// to `out/<cell>/run<i>/` and the aggregates go to `out/aggregate/`.
pub fn run_grid(cfg: &GridConfig, parallelism: usize, out: Option<&Path>) -> Result<GridResult> {
    cfg.validate()?;
    let env = Environment::build(&cfg.base)?;
    run_grid_with_env(cfg, env, parallelism, out)
}

pub fn run_grid_with_env(cfg: &GridConfig, env: Environment, parallelism: usize, out: Option<&Path>) -> Result<GridResult> {
    cfg.validate()?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        cfg.to_kv().save(dir.join("grid.txt"))?;
    }
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.runs_per_cell).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunLog>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                let cell = cells[c];
                let run_cfg = RunConfig {
                    mem_batches: cell.mem_batches,
                    p_em: cell.p_em,
                    seed: derive_seed(cfg.base.seed, cell.mem_batches, cell.p_em, r),
                    ..cfg.base.clone()
                };
                let dir = out.map(|o| run_dir(o, cell, r));
                log::info!("starting {} run {r} (seed {})", cell.label(), run_cfg.seed);
                run_with_env(&run_cfg, env.clone(), dir.as_deref()).map_err(|e| {
                    let log = dir.clone().unwrap_or_else(|| PathBuf::from(cell.label()));
                    if let Some(d) = &dir {
                        let _ = std::fs::create_dir_all(d).and_then(|_| std::fs::write(d.join("error.log"), format!("{e}\n")));
                    }
                    Error::Run {
                        cell: format!("{} run {r}", cell.label()),
                        log: log.join("error.log"),
                        source: Box::new(e),
                    }
                })
            })
            .collect()
    });
    let mut logs = results.into_iter();
    let mut out_cells = Vec::with_capacity(cells.len());
    for cell in cells {
        let cell_logs = logs.by_ref().take(cfg.runs_per_cell).collect::<Result<Vec<RunLog>>>()?;
        let evals: Vec<&[EvalRecord]> = cell_logs.iter().map(|l| l.mse.as_slice()).collect();
        let curve = aggregate(&cell.label(), &evals)?;
        out_cells.push(CellResult {
            cell,
            seeds: cell_logs.iter().map(|l| l.config.seed).collect(),
            logs: cell_logs,
            curve,
        });
    }
    if let Some(dir) = out {
        write_aggregates(&out_cells, &dir.join("aggregate"))?;
    }
    Ok(GridResult {
        cells: out_cells,
        environment: env,
    })
}

fn write_aggregates(cells: &[CellResult], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "cell",
        "mem_batches",
        "p_em",
        "runs",
        "final_fwd_mean",
        "final_fwd_std",
        "final_inv_mean",
        "final_inv_std",
    ])?;
    for c in cells {
        c.curve.write_csv(&dir.join(format!("{}.csv", c.cell.label())))?;
        let last = c.curve.ticks.len().checked_sub(1);
        let at = |v: &[f64]| last.map_or(f64::NAN, |i| v[i]).to_string();
        w.write_record([
            c.cell.label(),
            c.cell.mem_batches.to_string(),
            c.cell.p_em.to_string(),
            c.curve.runs.to_string(),
            at(&c.curve.fwd_mean),
            at(&c.curve.fwd_std),
            at(&c.curve.inv_mean),
            at(&c.curve.inv_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_grid_has_thirty_runs() {
        let g = GridConfig::default();
        assert_eq!(g.cells().len() * g.runs_per_cell, 30);
        assert_eq!(g.cells()[0].label(), "mem0_pem0.1");
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let g = GridConfig::default();
        let seeds: HashSet<u64> = g
            .cells()
            .iter()
            .flat_map(|c| (0..g.runs_per_cell).map(move |r| derive_seed(7, c.mem_batches, c.p_em, r)))
            .collect();
        assert_eq!(seeds.len(), 30);
        assert_eq!(derive_seed(7, 10, 0.1, 2), derive_seed(7, 10, 0.1, 2));
        assert_ne!(derive_seed(7, 10, 0.1, 2), derive_seed(8, 10, 0.1, 2));
    }

    #[test]
    fn single_run_has_zero_std() {
        let e = [
            EvalRecord { iteration: 50, fwd_mse: 0.5, inv_mse: 0.1 },
            EvalRecord { iteration: 100, fwd_mse: 0.4, inv_mse: 0.05 },
        ];
        let c = aggregate("x", &[&e]).unwrap();
        assert_eq!(c.fwd_std, vec![0.0, 0.0]);
        assert_eq!(c.inv_mean, vec![0.1, 0.05]);
        assert!(aggregate("x", &[&e, &e[..1]]).is_err());
    }

    #[test]
    fn grid_kv() {
        let kv = KvFile::parse("grid.mem_batches = 0, 20\ngrid.p_em = 0.1\ngrid.runs = 2\nloop.iterations = 64\n", Path::new("g")).unwrap();
        let g = GridConfig::from_kv(&kv).unwrap();
        assert_eq!(g.cells().len(), 2);
        assert_eq!(g.base.iterations, 64);
        assert_eq!(GridConfig::from_kv(&g.to_kv()).unwrap(), g);
        let bad = KvFile::parse("grid.runz = 2\n", Path::new("g")).unwrap();
        assert!(GridConfig::from_kv(&bad).is_err());
    }
}
