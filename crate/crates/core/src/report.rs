//! Post-hoc reports from run directories: MSE bands per cell and across
//! cells, LP dynamics, goal predictions and exploration scatter with hulls.
//! Every SVG gets a CSV of the same name holding the plotted numbers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{EvalRecord, ExploreRecord, GoalRecord, LpRecord};
use crate::analysis::{convex_hull, disk_union_fraction, explored_points, goal_concentration, ConcentrationMode, Point};
use crate::error::{Error, Result};
use crate::experiment::{aggregate, AggregateCurve};
use crate::kv::KvFile;
use crate::svg::{color, LineChart, Polygon, ScatterChart, ScatterGroup, Series};
use crate::world::MotorCommand;

/// Radius used for the goal concentration columns of the summary.
pub const CONCENTRATION_RADIUS: f64 = 0.1;
const BASELINE_SAMPLES: usize = 200_000;

/// Logs of one run read back from disk.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
    pub explore: Vec<ExploreRecord>,
    pub mse: Vec<EvalRecord>,
    pub goals: Vec<GoalRecord>,
    pub lp: Vec<LpRecord>,
    pub config: Option<KvFile>,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::Reader::from_path(path)?)
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::format(path, format!("row has no column {i}")))?;
    raw.parse()
        .map_err(|_| Error::format(path, format!("cannot parse `{raw}` in column {i}")))
}

impl RunFiles {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("explore.csv");
        let mut explore = Vec::new();
        for rec in reader(&p)?.records() {
            let rec = rec?;
            explore.push(ExploreRecord {
                iteration: field(&p, &rec, 0)?,
                goal_id: field(&p, &rec, 1)?,
                was_random: field::<u8>(&p, &rec, 2)? == 1,
                cmd: MotorCommand::new(field(&p, &rec, 3)?, field(&p, &rec, 4)?),
                exec: MotorCommand::new(field(&p, &rec, 5)?, field(&p, &rec, 6)?),
                pe: field(&p, &rec, 7)?,
                lp_selected: field(&p, &rec, 8)?,
            });
        }
        let p = dir.join("mse.csv");
        let mut mse = Vec::new();
        for rec in reader(&p)?.records() {
            let rec = rec?;
            mse.push(EvalRecord {
                iteration: field(&p, &rec, 0)?,
                fwd_mse: field(&p, &rec, 1)?,
                inv_mse: field(&p, &rec, 2)?,
            });
        }
        let p = dir.join("goals.csv");
        let mut goals = Vec::new();
        for rec in reader(&p)?.records() {
            let rec = rec?;
            goals.push(GoalRecord {
                iteration: field(&p, &rec, 0)?,
                goal_id: field(&p, &rec, 1)?,
                pred: MotorCommand::new(field(&p, &rec, 2)?, field(&p, &rec, 3)?),
                truth: MotorCommand::new(field(&p, &rec, 4)?, field(&p, &rec, 5)?),
            });
        }
        let p = dir.join("lp.csv");
        let mut lp = Vec::new();
        for rec in reader(&p)?.records() {
            let rec = rec?;
            let lps = (2..rec.len()).map(|i| field(&p, &rec, i)).collect::<Result<Vec<f64>>>()?;
            lp.push(LpRecord {
                iteration: field(&p, &rec, 0)?,
                selected_goal: field(&p, &rec, 1)?,
                lps,
            });
        }
        let cfg_path = dir.join("config.txt");
        let config = if cfg_path.exists() { Some(KvFile::load(&cfg_path)?) } else { None };
        Ok(Self {
            dir: dir.to_path_buf(),
            explore,
            mse,
            goals,
            lp,
            config,
        })
    }

    /// Ground-truth goal positions, indexed by goal id.
    pub fn goal_truth(&self) -> Vec<MotorCommand> {
        let mut truth: BTreeMap<usize, MotorCommand> = BTreeMap::new();
        for g in &self.goals {
            truth.entry(g.goal_id).or_insert(g.truth);
        }
        truth.into_values().collect()
    }
}

fn is_run_dir(dir: &Path) -> bool {
    ["explore.csv", "mse.csv", "goals.csv", "lp.csv"].iter().all(|f| dir.join(f).is_file())
}

/// Run directories under `root` (or `root` itself), sorted by path.
pub fn find_run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if is_run_dir(&dir) {
            found.push(dir);
            continue;
        }
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Per-run numbers written to `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub group: String,
    pub run: String,
    pub final_fwd: f64,
    pub final_inv: f64,
    pub hull_all: f64,
    pub hull_directed: f64,
    pub concentration_selected: Vec<f64>,
    pub concentration_any: Vec<f64>,
    pub uniform_baseline: f64,
}

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub runs: Vec<RunSummary>,
    pub curves: Vec<AggregateCurve>,
    pub files: Vec<PathBuf>,
}

struct Emitter {
    out: PathBuf,
    files: Vec<PathBuf>,
}

impl Emitter {
    fn write(&mut self, name: &str, svg: String, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let svg_path = self.out.join(format!("{name}.svg"));
        std::fs::write(&svg_path, svg)?;
        let csv_path = self.out.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        self.files.push(svg_path);
        self.files.push(csv_path);
        Ok(())
    }
}

fn band_series(name: &str, ticks: &[usize], mean: &[f64], std: &[f64]) -> Series {
    Series {
        name: name.to_string(),
        points: ticks.iter().zip(mean).map(|(&t, &m)| [t as f64, m]).collect(),
        band: Some(mean.iter().zip(std).map(|(m, s)| (m - s, m + s)).collect()),
    }
}

fn fmt_row(values: impl IntoIterator<Item = f64>) -> Vec<String> {
    values.into_iter().map(|v| v.to_string()).collect()
}

/// Reads every run under `input` and writes charts, their CSVs and
/// `summary.csv` into `out`. Runs are grouped by their parent directory.
pub fn emit_reports(input: &Path, out: &Path) -> Result<ReportSummary> {
    let dirs = find_run_dirs(input)?;
    if dirs.is_empty() {
        return Err(Error::Empty("no run directories found"));
    }
    std::fs::create_dir_all(out)?;
    let mut groups: BTreeMap<String, Vec<(String, RunFiles)>> = BTreeMap::new();
    for dir in &dirs {
        let run_name = dir.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
        let group = if dir == input {
            "run".to_string()
        } else {
            dir.parent()
                .filter(|p| *p != input)
                .and_then(|p| p.file_name())
                .map_or("runs".into(), |n| n.to_string_lossy().into_owned())
        };
        groups.entry(group).or_default().push((run_name, RunFiles::load(dir)?));
    }

    let mut em = Emitter {
        out: out.to_path_buf(),
        files: Vec::new(),
    };
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    for (group, runs) in &groups {
        let evals: Vec<&[EvalRecord]> = runs.iter().map(|(_, r)| r.mse.as_slice()).collect();
        let curve = aggregate(group, &evals)?;
        for (metric, mean, std) in [("fwd", &curve.fwd_mean, &curve.fwd_std), ("inv", &curve.inv_mean, &curve.inv_std)] {
            let chart = LineChart {
                title: format!("{group}: {metric} MSE (mean and std over {} runs)", curve.runs),
                x_label: "iteration".into(),
                y_label: format!("{metric} MSE"),
                series: vec![band_series(metric, &curve.ticks, mean, std)],
            };
            let rows = (0..curve.ticks.len())
                .map(|i| vec![curve.ticks[i].to_string(), mean[i].to_string(), std[i].to_string()])
                .collect();
            em.write(&format!("{group}_{metric}_mse"), chart.render(), &["iteration", "mean", "std"], rows)?;
        }
        for (run, files) in runs {
            summaries.push(emit_run(&mut em, group, run, files)?);
        }
        curves.push(curve);
    }

    if curves.len() > 1 {
        for metric in ["fwd", "inv"] {
            let pick = |c: &AggregateCurve| -> (Vec<f64>, Vec<f64>) {
                if metric == "fwd" {
                    (c.fwd_mean.clone(), c.fwd_std.clone())
                } else {
                    (c.inv_mean.clone(), c.inv_std.clone())
                }
            };
            let series = curves
                .iter()
                .map(|c| {
                    let (m, s) = pick(c);
                    band_series(&c.label, &c.ticks, &m, &s)
                })
                .collect();
            let chart = LineChart {
                title: format!("{metric} MSE by grid cell"),
                x_label: "iteration".into(),
                y_label: format!("{metric} MSE"),
                series,
            };
            let mut rows = Vec::new();
            for c in &curves {
                let (m, s) = pick(c);
                for i in 0..c.ticks.len() {
                    rows.push(vec![c.label.clone(), c.ticks[i].to_string(), m[i].to_string(), s[i].to_string()]);
                }
            }
            em.write(&format!("compare_{metric}_mse"), chart.render(), &["cell", "iteration", "mean", "std"], rows)?;
        }
    }

    let summary_path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    let mut header = vec![
        "group".to_string(),
        "run".to_string(),
        "final_fwd_mse".to_string(),
        "final_inv_mse".to_string(),
        "hull_area_all".to_string(),
        "hull_area_directed".to_string(),
    ];
    header.extend((1..=5).map(|q| format!("conc_selected_q{q}")));
    header.extend((1..=5).map(|q| format!("conc_any_q{q}")));
    header.push("uniform_baseline".into());
    w.write_record(&header)?;
    for s in &summaries {
        let mut row = vec![s.group.clone(), s.run.clone()];
        row.extend(fmt_row([s.final_fwd, s.final_inv, s.hull_all, s.hull_directed]));
        row.extend(fmt_row(s.concentration_selected.iter().copied()));
        row.extend(fmt_row(s.concentration_any.iter().copied()));
        row.push(s.uniform_baseline.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    em.files.push(summary_path);

    Ok(ReportSummary {
        runs: summaries,
        curves,
        files: em.files,
    })
}

fn emit_run(em: &mut Emitter, group: &str, run: &str, files: &RunFiles) -> Result<RunSummary> {
    let prefix = format!("{group}_{run}");
    let truth = files.goal_truth();

    // LP dynamics
    let n_goals = files.lp.first().map_or(0, |r| r.lps.len());
    let series = (0..n_goals)
        .map(|g| Series {
            name: format!("goal {g}"),
            points: files.lp.iter().map(|r| [r.iteration as f64, r.lps[g]]).collect(),
            band: None,
        })
        .collect();
    let chart = LineChart {
        title: format!("{prefix}: learning progress per goal"),
        x_label: "iteration".into(),
        y_label: "LP".into(),
        series,
    };
    let mut header = vec!["iteration".to_string(), "selected_goal".to_string()];
    header.extend((0..n_goals).map(|g| format!("lp_{g}")));
    let rows = files
        .lp
        .iter()
        .map(|r| {
            let mut row = vec![r.iteration.to_string(), r.selected_goal.to_string()];
            row.extend(fmt_row(r.lps.iter().copied()));
            row
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    em.write(&format!("{prefix}_lp"), chart.render(), &header_ref, rows)?;

    // Goal predictions against ground truth
    let mut groups = Vec::new();
    for (g, t) in truth.iter().enumerate() {
        let preds: Vec<Point> = files.goals.iter().filter(|r| r.goal_id == g).map(|r| [r.pred.x, r.pred.y]).collect();
        groups.push(ScatterGroup {
            name: format!("goal {g}"),
            points: preds,
            radius: 2.0,
            color: color(g),
        });
        groups.push(ScatterGroup {
            name: format!("goal {g} truth"),
            points: vec![[t.x, t.y]],
            radius: 6.0,
            color: color(g),
        });
    }
    let chart = ScatterChart {
        title: format!("{prefix}: inverse-model goal predictions"),
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
        groups,
        polygons: Vec::new(),
    };
    let rows = files
        .goals
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.goal_id.to_string(),
                r.pred.x.to_string(),
                r.pred.y.to_string(),
                r.truth.x.to_string(),
                r.truth.y.to_string(),
            ]
        })
        .collect();
    em.write(
        &format!("{prefix}_goals"),
        chart.render(),
        &["iteration", "goal_id", "pred_x", "pred_y", "true_x", "true_y"],
        rows,
    )?;

    // Exploration scatter with hull overlays
    let all = explored_points(&files.explore, true);
    let directed = explored_points(&files.explore, false);
    let random: Vec<Point> = files.explore.iter().filter(|r| r.was_random).map(|r| [r.exec.x, r.exec.y]).collect();
    let (hull_all, area_all) = convex_hull(&all);
    let (hull_dir, area_dir) = convex_hull(&directed);
    let goal_points: Vec<Point> = truth.iter().map(|t| [t.x, t.y]).collect();
    let chart = ScatterChart {
        title: format!("{prefix}: explored positions"),
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
        groups: vec![
            ScatterGroup {
                name: "goal-directed".into(),
                points: directed.clone(),
                radius: 1.5,
                color: color(0),
            },
            ScatterGroup {
                name: "random".into(),
                points: random.clone(),
                radius: 1.5,
                color: color(7),
            },
            ScatterGroup {
                name: "goals".into(),
                points: goal_points.clone(),
                radius: 5.0,
                color: color(1),
            },
        ],
        polygons: vec![
            Polygon {
                name: "hull (all)".into(),
                vertices: hull_all.clone(),
                color: color(2),
                dashed: false,
            },
            Polygon {
                name: "hull (goal-directed)".into(),
                vertices: hull_dir.clone(),
                color: color(3),
                dashed: true,
            },
        ],
    };
    let tag = |kind: &str, pts: &[Point]| -> Vec<Vec<String>> {
        pts.iter().map(|p| vec![kind.to_string(), p[0].to_string(), p[1].to_string()]).collect()
    };
    let mut rows = tag("directed", &directed);
    rows.extend(tag("random", &random));
    rows.extend(tag("goal", &goal_points));
    rows.extend(tag("hull_all", &hull_all));
    rows.extend(tag("hull_directed", &hull_dir));
    em.write(&format!("{prefix}_explore"), chart.render(), &["kind", "x", "y"], rows)?;

    let (concentration_selected, concentration_any, uniform_baseline) = if truth.is_empty() {
        (vec![f64::NAN; 5], vec![f64::NAN; 5], f64::NAN)
    } else {
        let sel = goal_concentration(&files.explore, &truth, CONCENTRATION_RADIUS, ConcentrationMode::Selected)
            .unwrap_or_else(|_| vec![f64::NAN; 5]);
        let any = goal_concentration(&files.explore, &truth, CONCENTRATION_RADIUS, ConcentrationMode::AnyGoal)
            .unwrap_or_else(|_| vec![f64::NAN; 5]);
        let base = disk_union_fraction(&truth, CONCENTRATION_RADIUS, BASELINE_SAMPLES, &mut ChaCha8Rng::seed_from_u64(0));
        (sel, any, base)
    };
    let last = files.mse.last();
    Ok(RunSummary {
        group: group.to_string(),
        run: run.to_string(),
        final_fwd: last.map_or(f64::NAN, |e| e.fwd_mse),
        final_inv: last.map_or(f64::NAN, |e| e.inv_mse),
        hull_all: area_all,
        hull_directed: area_dir,
        concentration_selected,
        concentration_any,
        uniform_baseline,
    })
}
