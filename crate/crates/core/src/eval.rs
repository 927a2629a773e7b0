//! Human-judgment harness: judging tasks, the point scheme, per-table
//! tallies that define gold labels, and accuracy/F1 of recommendations.
//!
//! Points per answer:
//!
//! | points | chart-comparison rating | fraction estimate `e` vs truth `y` |
//! |--------|-------------------------|------------------------------------|
//! | 2      | easiest                 | `|e - y| <= 0.2 y`                 |
//! | 1      | doable                  | `|e - y| <= 0.4 y`                 |
//! | 0      | impossible              | otherwise                          |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::image_id;
use crate::select::{Candidates, Scoring, DEFAULT_EPS};
use crate::stats::{column_stats, FeatureVector};
use crate::table::{DataTable, PlotType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Easiest,
    Doable,
    Impossible,
}

pub fn score_csi(rating: Rating) -> u32 {
    match rating {
        Rating::Easiest => 2,
        Rating::Doable => 1,
        Rating::Impossible => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const ALL: [Axis; 2] = [Axis::X, Axis::Y];

    fn column(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

/// Fraction of rows whose value on `axis` is strictly above 0.5.
pub fn true_fraction(t: &DataTable, axis: Axis) -> Result<f64> {
    let col = t
        .column(axis.column())
        .ok_or(Error::WrongArity { found: t.num_columns() })?;
    if col.values.is_empty() {
        return Err(Error::EmptySequence);
    }
    let above = col.values.iter().filter(|&&v| v > 0.5).count();
    Ok(above as f64 / col.values.len() as f64)
}

/// Points for a fraction estimate. With a true fraction of 0 both
/// tolerances collapse to 0, so only an exact 0 scores (2 points).
pub fn score_ft(estimate: f64, truth: f64) -> u32 {
    let err = (estimate - truth).abs();
    if err <= 0.2 * truth {
        2
    } else if err <= 0.4 * truth {
        1
    } else {
        0
    }
}

/// Column means and standard deviations shown alongside a comparison task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShownStats {
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_y: f64,
    pub std_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskKind {
    /// Rate all three charts of one table for reading the shown statistics.
    Csi {
        images: BTreeMap<PlotType, String>,
        shown: ShownStats,
    },
    /// Estimate the fraction of points above 0.5 on one axis of one chart.
    Ft {
        image: String,
        plot_type: PlotType,
        axis: Axis,
        /// Hidden from judges; see [`Task::public`].
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truth: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub table_id: String,
    #[serde(flatten)]
    pub kind: TaskKind,
}

impl Task {
    /// The task as shown to judges, without the true fraction.
    pub fn public(&self) -> Task {
        let mut t = self.clone();
        if let TaskKind::Ft { truth, .. } = &mut t.kind {
            *truth = None;
        }
        t
    }

    /// Image ids this task displays.
    pub fn image_ids(&self) -> Vec<&str> {
        match &self.kind {
            TaskKind::Csi { images, .. } => images.values().map(String::as_str).collect(),
            TaskKind::Ft { image, .. } => vec![image.as_str()],
        }
    }
}

/// Which tasks to create per table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub csi: bool,
    pub ft_plot_types: Vec<PlotType>,
    pub ft_axes: Vec<Axis>,
}

impl Default for TaskPlan {
    /// One comparison task plus a fraction task for every chart and axis:
    /// seven tasks per table.
    fn default() -> Self {
        TaskPlan {
            csi: true,
            ft_plot_types: PlotType::ALL.to_vec(),
            ft_axes: Axis::ALL.to_vec(),
        }
    }
}

/// Builds the judging tasks for normalized two-column tables.
pub fn generate_tasks(tables: &[DataTable], plan: &TaskPlan) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for t in tables {
        if t.num_columns() != 2 {
            return Err(Error::WrongArity { found: t.num_columns() });
        }
        if plan.csi {
            let sx = column_stats(&t.columns()[0].values)?;
            let sy = column_stats(&t.columns()[1].values)?;
            tasks.push(Task {
                id: format!("{}:csi", t.id),
                table_id: t.id.clone(),
                kind: TaskKind::Csi {
                    images: PlotType::ALL.iter().map(|&p| (p, image_id(&t.id, p))).collect(),
                    shown: ShownStats {
                        mean_x: sx.mean,
                        std_x: sx.std,
                        mean_y: sy.mean,
                        std_y: sy.std,
                    },
                },
            });
        }
        for &p in &plan.ft_plot_types {
            for &axis in &plan.ft_axes {
                tasks.push(Task {
                    id: format!("{}:ft:{p}:{axis}", t.id),
                    table_id: t.id.clone(),
                    kind: TaskKind::Ft {
                        image: image_id(&t.id, p),
                        plot_type: p,
                        axis,
                        truth: Some(true_fraction(t, axis)?),
                    },
                });
            }
        }
    }
    Ok(tasks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Csi { ratings: BTreeMap<PlotType, Rating> },
    Ft { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub task_id: String,
    pub judge_id: String,
    /// Milliseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: u64,
    #[serde(flatten)]
    pub answer: Answer,
}

impl JudgmentRecord {
    /// Checks the answer against its task: a rating for every chart, or a
    /// fraction in `[0, 1]`.
    pub fn validate(&self, task: &Task) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidJudgment(m));
        if self.judge_id.trim().is_empty() {
            return bad("empty judge_id".into());
        }
        match (&task.kind, &self.answer) {
            (TaskKind::Csi { .. }, Answer::Csi { ratings }) => {
                if ratings.len() != PlotType::ALL.len() {
                    return bad(format!("expected a rating for each of scatter, line and density, got {}", ratings.len()));
                }
            }
            (TaskKind::Ft { .. }, Answer::Ft { fraction }) => {
                if !(0.0..=1.0).contains(fraction) {
                    return bad(format!("fraction {fraction} outside [0, 1]"));
                }
            }
            (TaskKind::Csi { .. }, _) => return bad(format!("task {} expects ratings", task.id)),
            (TaskKind::Ft { .. }, _) => return bad(format!("task {} expects a fraction", task.id)),
        }
        Ok(())
    }

    /// Points credited per plot type.
    pub fn points(&self, task: &Task) -> Result<BTreeMap<PlotType, u32>> {
        self.validate(task)?;
        Ok(match (&task.kind, &self.answer) {
            (TaskKind::Csi { .. }, Answer::Csi { ratings }) => {
                ratings.iter().map(|(p, r)| (*p, score_csi(*r))).collect()
            }
            (TaskKind::Ft { plot_type, truth, .. }, Answer::Ft { fraction }) => {
                let truth = truth.ok_or_else(|| Error::InvalidJudgment(format!("task {} has no true fraction", task.id)))?;
                [(*plot_type, score_ft(*fraction, truth))].into()
            }
            _ => unreachable!("validated"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointsTally {
    pub table_id: String,
    pub points: BTreeMap<PlotType, u32>,
    /// Plot types with the most points, ties retained, in canonical order.
    pub preferred: Vec<PlotType>,
}

/// Sums points per table and plot type. At most one judgment per
/// `(judge_id, task_id)` counts: the earliest, with ties broken by content,
/// so the result does not depend on input order.
pub fn aggregate_tally(judgments: &[JudgmentRecord], tasks: &[Task]) -> Result<Vec<PointsTally>> {
    let by_id: BTreeMap<&str, &Task> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut unique: BTreeMap<(&str, &str), (&JudgmentRecord, String)> = BTreeMap::new();
    for j in judgments {
        let key = serde_json::to_string(j).expect("record serializes");
        let slot = unique.entry((j.judge_id.as_str(), j.task_id.as_str()));
        match slot {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert((j, key));
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let (cur, cur_key) = o.get();
                if (j.timestamp, &key) < (cur.timestamp, cur_key) {
                    o.insert((j, key));
                }
            }
        }
    }
    let mut totals: BTreeMap<&str, BTreeMap<PlotType, u32>> = BTreeMap::new();
    for (j, _) in unique.values() {
        let task = by_id
            .get(j.task_id.as_str())
            .ok_or_else(|| Error::UnknownTask(j.task_id.clone()))?;
        let entry = totals
            .entry(task.table_id.as_str())
            .or_insert_with(|| PlotType::ALL.iter().map(|&p| (p, 0)).collect());
        for (p, pts) in j.points(task)? {
            *entry.get_mut(&p).expect("all types present") += pts;
        }
    }
    Ok(totals
        .into_iter()
        .map(|(table_id, points)| {
            let best = *points.values().max().expect("three entries");
            let preferred = points.iter().filter(|(_, &v)| v == best).map(|(p, _)| *p).collect();
            PointsTally {
                table_id: table_id.to_string(),
                points,
                preferred,
            }
        })
        .collect())
}

/// Gold label sets from tallies.
pub fn crowd_gold(tallies: &[PointsTally]) -> BTreeMap<String, BTreeSet<PlotType>> {
    tallies
        .iter()
        .map(|t| (t.table_id.clone(), t.preferred.iter().copied().collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tables: usize,
    pub accuracy: f64,
    pub f1: BTreeMap<PlotType, f64>,
    pub weighted_f1: f64,
    /// `confusion[gold][predicted]`, indexed in canonical plot-type order.
    pub confusion: [[usize; 3]; 3],
    pub support: BTreeMap<PlotType, usize>,
}

/// Accuracy counts a prediction as correct when it is in the gold set. For
/// F1 a tied gold set is resolved to the prediction when it contains it,
/// and to its canonically first member otherwise. A class with neither
/// support nor predictions gets F1 = 0.
pub fn metrics(preds: &BTreeMap<String, PlotType>, golds: &BTreeMap<String, BTreeSet<PlotType>>) -> Result<Metrics> {
    if preds.len() != golds.len() || preds.keys().zip(golds.keys()).any(|(a, b)| a != b) {
        let missing: Vec<_> = preds.keys().filter(|k| !golds.contains_key(*k)).chain(golds.keys().filter(|k| !preds.contains_key(*k))).take(5).collect();
        return Err(Error::KeyMismatch(format!("tables not in both sets: {missing:?}")));
    }
    if preds.is_empty() {
        return Err(Error::KeyMismatch("no tables to evaluate".into()));
    }
    let mut confusion = [[0usize; 3]; 3];
    let mut correct = 0;
    for (id, &pred) in preds {
        let gold = &golds[id];
        let resolved = if gold.contains(&pred) {
            correct += 1;
            pred
        } else {
            *gold
                .first()
                .ok_or_else(|| Error::KeyMismatch(format!("empty gold set for {id}")))?
        };
        confusion[resolved.index()][pred.index()] += 1;
    }
    let mut f1 = BTreeMap::new();
    let mut support = BTreeMap::new();
    let mut weighted = 0.0;
    for p in PlotType::ALL {
        let c = p.index();
        let tp = confusion[c][c];
        let fp: usize = (0..3).map(|g| confusion[g][c]).sum::<usize>() - tp;
        let fn_: usize = confusion[c].iter().sum::<usize>() - tp;
        let denom = 2 * tp + fp + fn_;
        let score = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
        let sup = tp + fn_;
        weighted += sup as f64 * score;
        f1.insert(p, score);
        support.insert(p, sup);
    }
    Ok(Metrics {
        tables: preds.len(),
        accuracy: correct as f64 / preds.len() as f64,
        f1,
        weighted_f1: weighted / preds.len() as f64,
        confusion,
        support,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub scoring: Scoring,
    pub metrics: Metrics,
}

/// Extraction model x scoring kind grid of metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    /// Scores every model's candidates under every scoring kind. Only
    /// tables present in `golds` are counted.
    pub fn evaluate(
        models: &[(String, &FeatureVector, &[Candidates])],
        golds: &BTreeMap<String, BTreeSet<PlotType>>,
        scorings: &[Scoring],
    ) -> Result<Report> {
        let mut rows = Vec::new();
        for (name, t_bar, cands) in models {
            for &scoring in scorings {
                let preds = cands
                    .iter()
                    .filter(|c| golds.contains_key(&c.table_id))
                    .map(|c| Ok((c.table_id.clone(), c.recommend(t_bar, scoring, DEFAULT_EPS)?.chosen)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                rows.push(ReportRow {
                    model: name.clone(),
                    scoring,
                    metrics: metrics(&preds, golds)?,
                });
            }
        }
        Ok(Report { rows })
    }

    /// Plain-text table, one row per model and scoring kind.
    pub fn to_text(&self) -> String {
        let headers = [
            "Extraction Model",
            "Selection",
            "Accuracy",
            "F1(Scatter)",
            "F1(Density)",
            "F1(Line)",
            "Weighted F1",
        ];
        let cells: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                let m = &r.metrics;
                [
                    r.model.clone(),
                    r.scoring.label(),
                    format!("{:.2}", m.accuracy),
                    format!("{:.2}", m.f1[&PlotType::Scatter]),
                    format!("{:.2}", m.f1[&PlotType::Density]),
                    format!("{:.2}", m.f1[&PlotType::Line]),
                    format!("{:.2}", m.weighted_f1),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..7)
            .map(|i| cells.iter().map(|c| c[i].len()).chain([headers[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |out: &mut String, row: &[&str]| {
            let parts: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
        };
        let mut out = String::new();
        line(&mut out, &headers);
        let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        let mut last_model: Option<&str> = None;
        for (r, c) in self.rows.iter().zip(&cells) {
            let model = if last_model == Some(r.model.as_str()) { "" } else { c[0].as_str() };
            last_model = Some(r.model.as_str());
            let row: Vec<&str> = std::iter::once(model).chain(c[1..].iter().map(String::as_str)).collect();
            line(&mut out, &row);
        }
        out
    }
}

/// Reads a JSON-lines judgment log. A missing file is an empty log.
pub fn read_judgment_log(path: impl AsRef<Path>) -> Result<Vec<JudgmentRecord>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::MalformedInput(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

/// Append-only JSON-lines writer. Every append is flushed and synced before
/// returning.
#[derive(Debug)]
pub struct JudgmentLog {
    path: PathBuf,
    file: File,
}

impl JudgmentLog {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(JudgmentLog { path, file })
    }

    pub fn append(&mut self, record: &JudgmentRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let io = |e| Error::io(&self.path, e);
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.flush().map_err(io)?;
        self.file.sync_data().map_err(io)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl FromStr for Rating {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easiest" => Ok(Rating::Easiest),
            "doable" => Ok(Rating::Doable),
            "impossible" => Ok(Rating::Impossible),
            other => Err(format!("unknown rating {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PlotType::*;

    #[test]
    fn csi_points() {
        assert_eq!(score_csi(Rating::Easiest), 2);
        assert_eq!(score_csi(Rating::Doable), 1);
        assert_eq!(score_csi(Rating::Impossible), 0);
    }

    #[test]
    fn ft_points() {
        assert_eq!(score_ft(0.55, 0.5), 2);
        assert_eq!(score_ft(0.68, 0.5), 1);
        assert_eq!(score_ft(0.75, 0.5), 0);
        assert_eq!(score_ft(0.0, 0.0), 2);
        assert_eq!(score_ft(0.01, 0.0), 0);
    }

    #[test]
    fn fractions() {
        let t = DataTable::xy("t", vec![0.5; 5], vec![0.2, 0.6, 0.8, 0.4, 0.1]).unwrap();
        assert_eq!(true_fraction(&t, Axis::Y).unwrap(), 0.4);
        assert_eq!(true_fraction(&t, Axis::X).unwrap(), 0.0);
        let t = DataTable::xy("t", vec![1.0; 5], vec![1.0; 5]).unwrap();
        assert_eq!(true_fraction(&t, Axis::X).unwrap(), 1.0);
    }

    fn table(id: &str) -> DataTable {
        DataTable::xy(id, vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![0.9, 0.1, 0.6, 0.7, 0.0]).unwrap()
    }

    fn csi(task: &str, judge: &str, s: Rating, l: Rating, d: Rating) -> JudgmentRecord {
        JudgmentRecord {
            task_id: task.into(),
            judge_id: judge.into(),
            timestamp: 1,
            answer: Answer::Csi { ratings: [(Scatter, s), (Line, l), (Density, d)].into() },
        }
    }

    fn ft(task: &str, judge: &str, fraction: f64) -> JudgmentRecord {
        JudgmentRecord { task_id: task.into(), judge_id: judge.into(), timestamp: 1, answer: Answer::Ft { fraction } }
    }

    #[test]
    fn default_plan_has_seven_tasks_per_table() {
        let tasks = generate_tasks(&[table("a"), table("b")], &TaskPlan::default()).unwrap();
        assert_eq!(tasks.len(), 14);
        assert_eq!(tasks[0].id, "a:csi");
        assert_eq!(tasks[0].image_ids(), ["a-scatter", "a-line", "a-density"]);
        assert_eq!(tasks[6].id, "a:ft:density:y");
        let TaskKind::Ft { truth, .. } = &tasks[2].kind else { panic!() };
        assert_eq!(*truth, Some(0.6)); // y: 0.9, 0.6, 0.7 above 0.5
        let TaskKind::Csi { shown, .. } = &tasks[0].kind else { panic!() };
        assert_eq!(shown.mean_x, 0.5);
    }

    #[test]
    fn public_view_hides_truth() {
        let tasks = generate_tasks(&[table("a")], &TaskPlan::default()).unwrap();
        let json = serde_json::to_value(tasks[1].public()).unwrap();
        assert_eq!(json["kind"], "ft");
        assert!(json.get("truth").is_none());
        assert!(serde_json::to_value(&tasks[1]).unwrap().get("truth").is_some());
    }

    #[test]
    fn judgment_json_shapes() {
        let r = csi("a:csi", "j", Rating::Easiest, Rating::Doable, Rating::Impossible);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"task_id":"a:csi","judge_id":"j","timestamp":1,"ratings":{"scatter":"easiest","line":"doable","density":"impossible"}}"#);
        assert_eq!(serde_json::from_str::<JudgmentRecord>(&s).unwrap(), r);
        let f: JudgmentRecord = serde_json::from_str(r#"{"task_id":"a:ft:line:x","judge_id":"j","fraction":0.4}"#).unwrap();
        assert_eq!(f.answer, Answer::Ft { fraction: 0.4 });
    }

    #[test]
    fn validation() {
        let tasks = generate_tasks(&[table("a")], &TaskPlan::default()).unwrap();
        assert!(ft("a:ft:line:x", "j", 1.3).validate(&tasks[3]).is_err());
        assert!(ft("a:ft:line:x", "j", 0.3).validate(&tasks[3]).is_ok());
        assert!(ft("a:csi", "j", 0.3).validate(&tasks[0]).is_err());
        let mut partial = csi("a:csi", "j", Rating::Easiest, Rating::Easiest, Rating::Easiest);
        if let Answer::Csi { ratings } = &mut partial.answer {
            ratings.remove(&Line);
        }
        assert!(partial.validate(&tasks[0]).is_err());
    }

    #[test]
    fn tie_retained_and_uniform_case() {
        let tasks = generate_tasks(&[table("a")], &TaskPlan::default()).unwrap();
        let all = csi("a:csi", "j", Rating::Easiest, Rating::Easiest, Rating::Easiest);
        let t = aggregate_tally(&[all], &tasks).unwrap();
        assert_eq!(t[0].points, [(Scatter, 2), (Line, 2), (Density, 2)].into());
        assert_eq!(t[0].preferred, [Scatter, Line, Density]);

        let j = [
            csi("a:csi", "j1", Rating::Easiest, Rating::Easiest, Rating::Doable),
            csi("a:csi", "j2", Rating::Easiest, Rating::Easiest, Rating::Doable),
        ];
        let t = aggregate_tally(&j, &tasks).unwrap();
        assert_eq!(t[0].points, [(Scatter, 4), (Line, 4), (Density, 2)].into());
        assert_eq!(t[0].preferred, [Scatter, Line]);
    }

    #[test]
    fn three_judges_by_hand() {
        // y fraction of table a is 0.6, x fraction is 0.4 (0.75, 1.0 above 0.5)
        let tasks = generate_tasks(&[table("a")], &TaskPlan::default()).unwrap();
        let j = vec![
            csi("a:csi", "j1", Rating::Easiest, Rating::Doable, Rating::Impossible), // s2 l1 d0
            csi("a:csi", "j2", Rating::Doable, Rating::Impossible, Rating::Easiest), // s1 l0 d2
            csi("a:csi", "j3", Rating::Easiest, Rating::Doable, Rating::Doable),     // s2 l1 d1
            ft("a:ft:scatter:y", "j1", 0.65),  // |0.05| <= 0.12 -> 2 scatter
            ft("a:ft:line:y", "j2", 0.80),     // 0.20 <= 0.24 -> 1 line
            ft("a:ft:density:x", "j3", 0.10),  // 0.30 > 0.16 -> 0 density
            ft("a:ft:density:y", "j1", 0.60),  // exact -> 2 density
            ft("a:ft:scatter:x", "j2", 0.48),  // 0.08 <= 0.08 -> 2 scatter
        ];
        let t = aggregate_tally(&j, &tasks).unwrap();
        assert_eq!(t[0].points, [(Scatter, 9), (Line, 3), (Density, 5)].into());
        assert_eq!(t[0].preferred, [Scatter]);
    }

    #[test]
    fn duplicates_and_unknown_tasks() {
        let tasks = generate_tasks(&[table("a")], &TaskPlan::default()).unwrap();
        let mut later = csi("a:csi", "j", Rating::Impossible, Rating::Impossible, Rating::Impossible);
        later.timestamp = 5;
        let first = csi("a:csi", "j", Rating::Easiest, Rating::Easiest, Rating::Easiest);
        let t1 = aggregate_tally(&[later.clone(), first.clone()], &tasks).unwrap();
        let t2 = aggregate_tally(&[first, later], &tasks).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1[0].points[&Scatter], 2);
        let err = aggregate_tally(&[ft("zzz", "j", 0.1)], &tasks).unwrap_err();
        assert!(matches!(err, Error::UnknownTask(_)));
    }

    fn golds(sets: &[&[PlotType]]) -> BTreeMap<String, BTreeSet<PlotType>> {
        sets.iter().enumerate().map(|(i, s)| (format!("t{i}"), s.iter().copied().collect())).collect()
    }

    fn preds(ps: &[PlotType]) -> BTreeMap<String, PlotType> {
        ps.iter().enumerate().map(|(i, p)| (format!("t{i}"), *p)).collect()
    }

    #[test]
    fn accuracy_counts_membership() {
        let m = metrics(&preds(&[Scatter, Scatter, Line]), &golds(&[&[Scatter], &[Density], &[Line]])).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let m = metrics(&preds(&[Scatter, Line, Density]), &golds(&[&[Scatter], &[Line], &[Density]])).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.f1.values().all(|&f| f == 1.0));
        assert_eq!(m.weighted_f1, 1.0);
    }

    #[test]
    fn six_table_confusion_by_hand() {
        // gold (resolved) vs pred:
        // t0 S/S, t1 S/L, t2 L/L, t3 {L,D}/D -> D/D, t4 D/S, t5 {S,L}/D -> S/D
        // scatter: tp1 fp1 fn2 -> 2/5; line: tp1 fp1 fn0 -> 2/3;
        // density: tp1 fp1 fn1 -> 1/2. supports S3 L1 D2.
        let p = preds(&[Scatter, Line, Line, Density, Scatter, Density]);
        let g = golds(&[&[Scatter], &[Scatter], &[Line], &[Line, Density], &[Density], &[Scatter, Line]]);
        let m = metrics(&p, &g).unwrap();
        assert!((m.accuracy - 0.5).abs() < 1e-15);
        assert!((m.f1[&Scatter] - 0.4).abs() < 1e-15);
        assert!((m.f1[&Line] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1[&Density] - 0.5).abs() < 1e-15);
        assert_eq!(m.support, [(Scatter, 3), (Line, 1), (Density, 2)].into());
        let weighted = (3.0 * 0.4 + 2.0 / 3.0 + 2.0 * 0.5) / 6.0;
        assert!((m.weighted_f1 - weighted).abs() < 1e-15);
        assert_eq!(m.confusion, [[1, 1, 1], [0, 1, 0], [1, 0, 1]]);
    }

    #[test]
    fn mismatched_keys() {
        let err = metrics(&preds(&[Scatter]), &golds(&[&[Scatter], &[Line]])).unwrap_err();
        assert!(matches!(err, Error::KeyMismatch(_)));
    }

    #[test]
    fn report_text_layout() {
        let m = |acc: f64, s: f64, d: f64, l: f64, w: f64| Metrics {
            tables: 39,
            accuracy: acc,
            f1: [(Scatter, s), (Line, l), (Density, d)].into(),
            weighted_f1: w,
            confusion: [[0; 3]; 3],
            support: BTreeMap::new(),
        };
        let report = Report {
            rows: vec![
                ReportRow { model: "ensemble".into(), scoring: Scoring::L1, metrics: m(0.66, 0.70, 0.61, 0.43, 0.63) },
                ReportRow { model: "ensemble".into(), scoring: Scoring::TopK(5), metrics: m(0.80, 0.86, 0.67, 0.55, 0.75) },
            ],
        };
        let text = report.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("Extraction Model | Selection"));
        assert!(lines[2].starts_with("ensemble         | L1-Loss"));
        assert!(lines[3].starts_with("                 | Top-5 Closest Loss | 0.80     | 0.86"));
        assert!(lines[3].ends_with("| 0.75"));
    }

    #[test]
    fn log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        assert!(read_judgment_log(&path).unwrap().is_empty());
        let recs = [ft("a", "j", 0.25), csi("b", "j", Rating::Doable, Rating::Easiest, Rating::Impossible)];
        {
            let mut log = JudgmentLog::open(&path).unwrap();
            for r in &recs {
                log.append(r).unwrap();
            }
        }
        let mut log = JudgmentLog::open(&path).unwrap();
        log.append(&recs[0]).unwrap();
        let back = read_judgment_log(&path).unwrap();
        assert_eq!(back, [recs[0].clone(), recs[1].clone(), recs[0].clone()]);
    }

    proptest! {
        #[test]
        fn ft_points_fall_with_error(truth in 0.01f64..=1.0, e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let (near, far) = if (e1 - truth).abs() <= (e2 - truth).abs() { (e1, e2) } else { (e2, e1) };
            prop_assert!(score_ft(near, truth) >= score_ft(far, truth));
        }

        #[test]
        fn tally_ignores_order(answers in prop::collection::vec((0usize..7, 0usize..3, 0.0f64..=1.0, 0u8..3, 0u8..3, 0u8..3), 1..30), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let tasks = generate_tasks(&[table("a")], &TaskPlan::default()).unwrap();
            let rating = |i: u8| [Rating::Easiest, Rating::Doable, Rating::Impossible][i as usize];
            let records: Vec<JudgmentRecord> = answers.iter().map(|&(t, j, f, a, b, c)| {
                let task = &tasks[t];
                let judge = format!("j{j}");
                match task.kind {
                    TaskKind::Csi { .. } => csi(&task.id, &judge, rating(a), rating(b), rating(c)),
                    TaskKind::Ft { .. } => ft(&task.id, &judge, f),
                }
            }).collect();
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = aggregate_tally(&records, &tasks).unwrap();
            prop_assert_eq!(&a, &aggregate_tally(&shuffled, &tasks).unwrap());
            for t in &a {
                prop_assert!(!t.preferred.is_empty());
            }
        }

        #[test]
        fn accuracy_is_one_when_every_pred_is_gold(sets in prop::collection::vec((0u8..3, 1u8..8), 1..40)) {
            let mut p = BTreeMap::new();
            let mut g = BTreeMap::new();
            for (i, (pick, mask)) in sets.iter().enumerate() {
                let set: BTreeSet<PlotType> = PlotType::ALL.into_iter().filter(|t| mask & (1 << t.index()) != 0).collect();
                let members: Vec<_> = set.iter().copied().collect();
                p.insert(format!("t{i}"), members[*pick as usize % members.len()]);
                g.insert(format!("t{i}"), set);
            }
            let m = metrics(&p, &g).unwrap();
            prop_assert_eq!(m.accuracy, 1.0);
            prop_assert!((0.0..=1.0).contains(&m.weighted_f1));
        }
    }
}
