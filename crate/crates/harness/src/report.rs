//! Report rendering over a finished run directory. Output goes to
//! `<run>/report/` and depends only on the persisted artifacts, so rendering
//! twice gives identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use ser_probe_core::probe::RatioMatrix;
use ser_probe_core::stats::percentile_sorted;
use ser_probe_core::suitegen::{Category, Polarity};
use ser_probe_core::{Dimension, ModelVariant};

use crate::error::{HarnessError, Result};
use crate::pipeline::{comparisons_tsv, groups_tsv, CasePrediction, CccCell, Comparison, Condition, GroupSummary};
use crate::run::{load_record, RunStatus, RUN_RECORD, STAGE_PROBING1, STAGE_PROBING2, STAGE_PROBING3};

pub const REPORT_DIR: &str = "report";

fn rerun(stage: &str) -> String {
    format!("ser-probe run-{stage}")
}

fn artifact(run: &Path, stage: &str, rel: &str) -> Result<PathBuf> {
    let p = run.join(rel);
    if p.is_file() {
        Ok(p)
    } else {
        Err(HarnessError::MissingArtifact {
            stage: rerun(stage),
            path: p,
        })
    }
}

fn read_json<T: DeserializeOwned>(run: &Path, stage: &str, rel: &str) -> Result<T> {
    let p = artifact(run, stage, rel)?;
    let text = fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Invalid(format!("{}: {e}", p.display())))
}

fn read_jsonl<T: DeserializeOwned>(run: &Path, stage: &str, rel: &str) -> Result<Vec<T>> {
    let p = artifact(run, stage, rel)?;
    let text = fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Invalid(format!("{}:{}: {e}", p.display(), i + 1)))
        })
        .collect()
}

struct Out {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Out {
    fn put(&mut self, name: &str, contents: String) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, contents).map_err(|e| HarnessError::io(&p, e))?;
        self.written.push(p);
        Ok(())
    }
}

/// Renders the report for whichever stage produced `run`; returns the files
/// written.
pub fn render_report(run: &Path) -> Result<Vec<PathBuf>> {
    let record_path = run.join(RUN_RECORD);
    if !record_path.is_file() {
        return Err(HarnessError::MissingArtifact {
            stage: "ser-probe run-probing1|run-probing2|run-probing3".into(),
            path: record_path,
        });
    }
    let record = load_record(run)?;
    if record.status == RunStatus::Aborted {
        return Err(HarnessError::Invalid(format!(
            "run {} was aborted by the failure budget; see flagged.tsv and re-run `{}`",
            record.run_id,
            rerun(&record.stage)
        )));
    }
    let dir = run.join(REPORT_DIR);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut out = Out { dir, written: Vec::new() };
    match record.stage.as_str() {
        STAGE_PROBING1 => report_probing1(run, &mut out)?,
        STAGE_PROBING2 => report_probing2(run, &mut out)?,
        STAGE_PROBING3 => report_probing3(run, &mut out)?,
        other => return Err(HarnessError::Invalid(format!("no report for stage {other:?}"))),
    }
    Ok(out.written)
}

fn report_probing1(run: &Path, out: &mut Out) -> Result<()> {
    let cells: Vec<CccCell> = read_json(run, STAGE_PROBING1, "ccc.json")?;
    let mut rows: BTreeMap<(Condition, ModelVariant), BTreeMap<Dimension, &CccCell>> = BTreeMap::new();
    for c in &cells {
        rows.entry((c.condition, c.variant)).or_default().insert(c.dimension, c);
    }
    let mut s = String::from("condition\tvariant\tn\tarousal\tvalence\tdominance\n");
    for ((cond, v), dims) in &rows {
        let n = dims.values().next().map(|c| c.n).unwrap_or(0);
        let _ = write!(s, "{}\t{v}\t{n}", cond.as_str());
        for d in Dimension::ALL {
            match dims.get(&d) {
                Some(c) => {
                    let _ = write!(s, "\t{:.4}", c.ccc);
                }
                None => s.push_str("\tNA"),
            }
        }
        s.push('\n');
    }
    out.put("ccc_table.tsv", s)
}

fn report_probing2(run: &Path, out: &mut Out) -> Result<()> {
    let cases: Vec<CasePrediction> = read_jsonl(run, STAGE_PROBING2, "case_predictions.jsonl")?;
    let groups: Vec<GroupSummary> = read_json(run, STAGE_PROBING2, "groups.json")?;
    let comparisons: Vec<Comparison> = read_json(run, STAGE_PROBING2, "comparisons.json")?;
    out.put("groups.tsv", groups_tsv(&groups))?;
    out.put("comparisons.tsv", comparisons_tsv(&comparisons))?;
    let mut by_variant: BTreeMap<ModelVariant, Vec<&CasePrediction>> = BTreeMap::new();
    for c in &cases {
        by_variant.entry(c.variant).or_default().push(c);
    }
    for (v, rows) in by_variant {
        out.put(&format!("boxplot_{v}.svg"), boxplot_svg(v, &rows))?;
    }
    Ok(())
}

fn report_probing3(run: &Path, out: &mut Out) -> Result<()> {
    #[derive(serde::Deserialize)]
    struct RatioFile {
        matrix: RatioMatrix,
    }
    let r: RatioFile = read_json(run, STAGE_PROBING3, "ratio.json")?;
    out.put("ratio.tsv", r.matrix.to_tsv())?;
    out.put("ratio_heatmap.svg", heatmap_svg(&r.matrix))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn polarity_color(p: Polarity) -> &'static str {
    match p {
        Polarity::Negative => "#d62728",
        Polarity::Neutral => "#7f7f7f",
        Polarity::Positive => "#2ca02c",
    }
}

/// Five-number summary: min, q1, median, q3, max.
fn five(values: &mut [f64]) -> [f64; 5] {
    values.sort_by(f64::total_cmp);
    [
        values[0],
        percentile_sorted(values, 25.0),
        percentile_sorted(values, 50.0),
        percentile_sorted(values, 75.0),
        values[values.len() - 1],
    ]
}

const PANEL_W: f64 = 200.0;
const PANEL_H: f64 = 160.0;
const LEFT: f64 = 120.0;
const TOP: f64 = 50.0;
const GAP: f64 = 20.0;

/// Category rows × dimension columns, one box per polarity in
/// negative / neutral / positive order. The value axis spans [0, 1].
pub fn boxplot_svg(variant: ModelVariant, cases: &[&CasePrediction]) -> String {
    let mut cells: BTreeMap<(Category, Polarity), Vec<&CasePrediction>> = BTreeMap::new();
    for c in cases {
        cells.entry((c.category, c.polarity)).or_default().push(c);
    }
    let cats: Vec<Category> = Category::ALL
        .into_iter()
        .filter(|k| cells.keys().any(|(c, _)| c == k))
        .collect();
    let width = LEFT + 3.0 * (PANEL_W + GAP) + GAP;
    let height = TOP + cats.len() as f64 * (PANEL_H + GAP) + GAP;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>Predictions by category and polarity ({variant})</title>"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (j, d) in Dimension::ALL.iter().enumerate() {
        let x = LEFT + j as f64 * (PANEL_W + GAP) + PANEL_W / 2.0;
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="13">{d}</text>"#, TOP - 20.0);
    }
    for (i, cat) in cats.iter().enumerate() {
        let y0 = TOP + i as f64 * (PANEL_H + GAP);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="12">{cat}</text>"#,
            LEFT - 28.0,
            y0 + PANEL_H / 2.0
        );
        let pols: Vec<Polarity> = Polarity::ALL.into_iter().filter(|p| cells.contains_key(&(*cat, *p))).collect();
        for (j, dim) in Dimension::ALL.iter().enumerate() {
            let x0 = LEFT + j as f64 * (PANEL_W + GAP);
            let yv = |v: f64| y0 + PANEL_H * (1.0 - v.clamp(0.0, 1.0));
            let _ = writeln!(
                s,
                r##"<g class="panel" data-category="{cat}" data-dimension="{dim}"><rect x="{x0:.2}" y="{y0:.2}" width="{PANEL_W:.2}" height="{PANEL_H:.2}" fill="none" stroke="#999"/>"##
            );
            for tick in [0.0, 0.5, 1.0] {
                let _ = writeln!(
                    s,
                    r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#999"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="9">{tick:.1}</text>"##,
                    x0 - 4.0,
                    x0 - 6.0,
                    yv(tick) + 3.0,
                    y = yv(tick)
                );
            }
            let slot = PANEL_W / pols.len().max(1) as f64;
            for (k, p) in pols.iter().enumerate() {
                let mut vals: Vec<f64> = cells[&(*cat, *p)].iter().map(|c| c.prediction.get(*dim)).collect();
                let [lo, q1, med, q3, hi] = five(&mut vals);
                let cx = x0 + slot * (k as f64 + 0.5);
                let bw = slot * 0.5;
                let color = polarity_color(*p);
                let _ = writeln!(
                    s,
                    r#"<g class="box" data-category="{cat}" data-dimension="{dim}" data-polarity="{p}" data-n="{}">"#,
                    vals.len()
                );
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    yv(hi),
                    yv(q3)
                );
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    yv(q1),
                    yv(lo)
                );
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
                    cx - bw / 2.0,
                    yv(q3),
                    (yv(q1) - yv(q3)).max(0.5)
                );
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                    cx - bw / 2.0,
                    yv(med),
                    cx + bw / 2.0,
                    yv(med)
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="9">{}</text></g>"#,
                    y0 + PANEL_H + 12.0,
                    &p.as_str()[..3]
                );
            }
            s.push_str("</g>\n");
        }
    }
    s.push_str("</svg>\n");
    s
}

fn ratio_color(r: Option<f64>) -> String {
    let Some(r) = r else { return "#cccccc".into() };
    let t = ((r - 100.0) / 100.0).clamp(-1.0, 1.0);
    // white at 100%, blue below, red above
    let (tr, tg, tb) = if t < 0.0 { (33.0, 102.0, 172.0) } else { (178.0, 24.0, 43.0) };
    let a = t.abs();
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(tr), mix(tg), mix(tb))
}

const CELL_W: f64 = 56.0;
const CELL_H: f64 = 26.0;

/// Feature rows × layer columns, colour-coded around 100%.
pub fn heatmap_svg(m: &RatioMatrix) -> String {
    let left = 150.0;
    let top = 40.0;
    let width = left + m.layers.len() as f64 * CELL_W + 20.0;
    let height = top + m.features.len() as f64 * CELL_H + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<title>RMSE ratio ft/frz (%)</title>");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (j, l) in m.layers.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{l}</text>"#,
            left + (j as f64 + 0.5) * CELL_W,
            top - 8.0
        );
    }
    for (i, f) in m.features.iter().enumerate() {
        let y = top + i as f64 * CELL_H;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + CELL_H / 2.0 + 4.0,
            esc(f)
        );
        for (j, l) in m.layers.iter().enumerate() {
            let x = left + j as f64 * CELL_W;
            let r = m.get(*l, f).and_then(|c| c.ratio_pct);
            let label = r.map(|r| format!("{r:.0}")).unwrap_or_else(|| "NA".into());
            let data = r.map(|r| format!("{r:.4}")).unwrap_or_else(|| "NA".into());
            let _ = writeln!(
                s,
                r#"<g class="cell" data-feature="{}" data-layer="{l}" data-ratio="{data}"><rect x="{x:.2}" y="{y:.2}" width="{CELL_W:.2}" height="{CELL_H:.2}" fill="{}" stroke="white"/><text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text></g>"#,
                esc(f),
                ratio_color(r),
                x + CELL_W / 2.0,
                y + CELL_H / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
