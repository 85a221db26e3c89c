//! Error-versus-J curves, per-band tables, feature ablation and report files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::{N_BANDS, OCTAVE_BANDS, RT60_OFFSET, ABSORPTION_OFFSET};
use crate::neural::ArchConfig;

use super::plot::{render, Panel, Series, PALETTE};
use super::{seeded_ci, subset_average, ParamGroup, RoomPredictions};

/// Published MAE at J = 5 after full-scale training on 20k rooms, in group
/// order ᾱ, RT60 (s), S (m²), V (m³).
pub const REFERENCE_MAE: [f64; 4] = [0.052, 0.18, 42.0, 54.0];

/// Per-band table header.
pub const BAND_TABLE_HEADER: [&str; 5] = ["band", "ᾱ (1 pos)", "RT60 (1 pos)", "ᾱ (5 pos)", "RT60 (5 pos)"];

/// Feature-ablation table header.
pub const ABLATION_HEADER: [&str; 6] = ["Input", "Feature", "ᾱ", "RT60 (s)", "S (m²)", "V (m³)"];

/// Errors after fusing `j` positions, averaged over all position subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub j: usize,
    /// Per target, physical units.
    pub target_mae: Vec<f64>,
    /// Band-averaged for ᾱ and RT60.
    pub group_mae: [f64; 4],
    /// 95% percentile-bootstrap interval over rooms.
    pub group_ci: [(f64, f64); 4],
}

impl CurvePoint {
    pub fn half_width(&self, g: usize) -> f64 {
        (self.group_ci[g].1 - self.group_ci[g].0) / 2.0
    }
}

/// Mean fused variance per target for `j = 1..=j_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomVariance {
    pub room_id: u64,
    pub var: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Input description, e.g. `2mic, 1sig`.
    pub input: String,
    /// Feature description, `SC` or `SC+IC`.
    pub feature: String,
    pub n_rooms: usize,
    pub j_max: usize,
    pub curve: Vec<CurvePoint>,
    pub room_variance: Vec<RoomVariance>,
}

impl EvalReport {
    pub fn point(&self, j: usize) -> Option<&CurvePoint> {
        self.curve.iter().find(|p| p.j == j)
    }

    /// Per-band table rows: band label, ᾱ and RT60 at J = 1 and at `j_max`.
    pub fn band_rows(&self) -> Vec<[String; 5]> {
        let (first, last) = (&self.curve[0], &self.curve[self.curve.len() - 1]);
        (0..N_BANDS)
            .map(|b| {
                [
                    band_label(b),
                    format!("{:.3}", first.target_mae[ABSORPTION_OFFSET + b]),
                    format!("{:.3}", first.target_mae[RT60_OFFSET + b]),
                    format!("{:.3}", last.target_mae[ABSORPTION_OFFSET + b]),
                    format!("{:.3}", last.target_mae[RT60_OFFSET + b]),
                ]
            })
            .collect()
    }
}

fn band_label(b: usize) -> String {
    let f = OCTAVE_BANDS[b];
    if f >= 1000.0 {
        format!("{} kHz", f / 1000.0)
    } else {
        format!("{f} Hz")
    }
}

/// Input and feature labels for a model variant.
pub fn variant_labels(arch: &ArchConfig) -> (String, String) {
    if arch.use_ic {
        ("2mic, 1sig".into(), "SC+IC".into())
    } else {
        ("1mic, 1sig".into(), "SC".into())
    }
}

/// Error curves for J = 1..=`j_max`. Rooms are processed in parallel and
/// intervals use bootstrap streams derived from `seed`.
pub fn evaluate(rooms: &[RoomPredictions], j_max: usize, arch: &ArchConfig, seed: u64) -> Result<EvalReport> {
    if rooms.len() < 2 {
        return Err(domain(format!("evaluation needs at least 2 rooms, got {}", rooms.len())));
    }
    if j_max == 0 {
        return Err(domain("j_max must be positive"));
    }
    if let Some(r) = rooms.iter().find(|r| r.positions.len() < j_max) {
        return Err(domain(format!("room {} has {} positions, fewer than J = {j_max}", r.room_id, r.positions.len())));
    }
    let per_room: Vec<Vec<(Vec<f64>, Vec<f64>)>> = rooms
        .par_iter()
        .map(|r| (1..=j_max).map(|j| subset_average(r, j)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let n = rooms.len() as f64;
    let d = rooms[0].truth.len();
    let mut curve = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let errs: Vec<&Vec<f64>> = per_room.iter().map(|r| &r[j - 1].0).collect();
        let target_mae: Vec<f64> = (0..d).map(|i| errs.iter().map(|e| e[i]).sum::<f64>() / n).collect();
        let mut group_mae = [0.0; 4];
        let mut group_ci = [(0.0, 0.0); 4];
        for (g, group) in ParamGroup::ALL.iter().enumerate() {
            let idx = group.indices();
            let room_err: Vec<f64> =
                errs.iter().map(|e| idx.clone().map(|i| e[i]).sum::<f64>() / idx.len() as f64).collect();
            group_mae[g] = room_err.iter().sum::<f64>() / n;
            group_ci[g] = seeded_ci(&room_err, seed, &[j as u64, g as u64])?;
        }
        curve.push(CurvePoint { j, target_mae, group_mae, group_ci });
    }
    let room_variance = rooms
        .iter()
        .zip(&per_room)
        .map(|(r, v)| RoomVariance { room_id: r.room_id, var: v.iter().map(|(_, var)| var.clone()).collect() })
        .collect();
    let (input, feature) = variant_labels(arch);
    Ok(EvalReport { input, feature, n_rooms: rooms.len(), j_max, curve, room_variance })
}

/// One line of the feature-ablation table: single-position MAE per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub input: String,
    pub feature: String,
    pub mae: [f64; 4],
    pub half_width: [f64; 4],
}

impl AblationRow {
    pub fn from_report(r: &EvalReport) -> AblationRow {
        let p = &r.curve[0];
        AblationRow {
            input: r.input.clone(),
            feature: r.feature.clone(),
            mae: p.group_mae,
            half_width: [0, 1, 2, 3].map(|g| p.half_width(g)),
        }
    }

    /// Cells in table order, with ± half-widths.
    pub fn cells(&self) -> [String; 6] {
        let v = |g: usize| format!("{} ± {}", fmt_group(g, self.mae[g]), fmt_group(g, self.half_width[g]));
        [self.input.clone(), self.feature.clone(), v(0), v(1), v(2), v(3)]
    }
}

fn fmt_group(g: usize, v: f64) -> String {
    if g < 2 {
        format!("{v:.3}")
    } else {
        format!("{v:.1}")
    }
}

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn md_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = md_row(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    s += &md_row(&vec!["---".to_string(); header.len()]);
    for r in rows {
        s += &md_row(r);
    }
    s
}

fn reference_footer() -> String {
    format!(
        "Reference MAE at J = 5 after full-scale training (20k rooms): ᾱ {}, RT60 {} s, S {} m², V {} m³.\n",
        REFERENCE_MAE[0], REFERENCE_MAE[1], REFERENCE_MAE[2], REFERENCE_MAE[3]
    )
}

/// Human-readable report. `reports[0]` drives the per-band table; the
/// ablation table appears when more than one variant is given.
pub fn render_markdown(reports: &[EvalReport]) -> String {
    let main = &reports[0];
    let mut s = String::from("# Room parameter estimation report\n\n");
    let _ = writeln!(s, "Test rooms: {}. Positions fused: 1 to {}.\n", main.n_rooms, main.j_max);
    for r in reports {
        let _ = writeln!(s, "## MAE versus number of fused positions ({}, {})\n", r.input, r.feature);
        let mut header = vec!["J"];
        header.extend(ParamGroup::ALL.iter().map(|g| g.label()));
        let rows: Vec<Vec<String>> = r
            .curve
            .iter()
            .map(|p| {
                let mut row = vec![p.j.to_string()];
                row.extend((0..4).map(|g| format!("{} ± {}", fmt_group(g, p.group_mae[g]), fmt_group(g, p.half_width(g)))));
                row
            })
            .collect();
        s += &md_table(&header, &rows);
        s.push('\n');
    }
    if reports.len() > 1 {
        s += "## Single-position feature ablation\n\n";
        let rows: Vec<Vec<String>> = reports.iter().map(|r| AblationRow::from_report(r).cells().to_vec()).collect();
        s += &md_table(&ABLATION_HEADER, &rows);
        s.push('\n');
    }
    let _ = writeln!(s, "## Per-band MAE ({}, {})\n", main.input, main.feature);
    if main.j_max != 5 {
        let _ = writeln!(s, "The \"5 pos\" columns hold J = {}.\n", main.j_max);
    }
    let rows: Vec<Vec<String>> = main.band_rows().into_iter().map(|r| r.to_vec()).collect();
    s += &md_table(&BAND_TABLE_HEADER, &rows);
    s.push('\n');
    s += &reference_footer();
    s
}

fn csv_line(cells: &[String]) -> String {
    let quoted: Vec<String> = cells
        .iter()
        .map(|c| if c.contains([',', '"']) { format!("\"{}\"", c.replace('"', "\"\"")) } else { c.clone() })
        .collect();
    quoted.join(",") + "\n"
}

fn target_keys() -> Vec<String> {
    let mut keys: Vec<String> = OCTAVE_BANDS.iter().map(|f| format!("alpha_{f}")).collect();
    keys.extend(OCTAVE_BANDS.iter().map(|f| format!("rt60_{f}")));
    keys.push("surface".into());
    keys.push("volume".into());
    keys
}

fn curve_panels(reports: &[EvalReport]) -> Vec<Panel> {
    ParamGroup::ALL
        .iter()
        .enumerate()
        .map(|(g, group)| Panel {
            title: group.label().to_string(),
            x_label: "positions fused (J)".into(),
            y_label: "MAE".into(),
            x_names: None,
            series: reports
                .iter()
                .enumerate()
                .map(|(k, r)| Series {
                    name: format!("{} {}", r.input, r.feature),
                    color: PALETTE[k % PALETTE.len()].into(),
                    points: r.curve.iter().map(|p| (p.j as f64, p.group_mae[g])).collect(),
                    band: Some(r.curve.iter().map(|p| p.group_ci[g]).collect()),
                })
                .collect(),
        })
        .collect()
}

fn band_panels(r: &EvalReport) -> Vec<Panel> {
    let names: Vec<String> = (0..N_BANDS).map(band_label).collect();
    [(ParamGroup::Absorption, ABSORPTION_OFFSET), (ParamGroup::Rt60, RT60_OFFSET)]
        .iter()
        .map(|(group, off)| Panel {
            title: group.label().to_string(),
            x_label: "octave band".into(),
            y_label: "MAE".into(),
            x_names: Some(names.clone()),
            series: [(0usize, "1 pos".to_string()), (r.curve.len() - 1, format!("{} pos", r.j_max))]
                .iter()
                .enumerate()
                .map(|(k, (ci, name))| Series {
                    name: name.clone(),
                    color: PALETTE[k].into(),
                    points: (0..N_BANDS).map(|b| ((b + 1) as f64, r.curve[*ci].target_mae[off + b])).collect(),
                    band: None,
                })
                .collect(),
        })
        .collect()
}

/// Writes CSV tables, SVG plots, `report.md` and `report.json` into `dir`.
/// Returns the paths written.
pub fn write_report(dir: &Path, reports: &[EvalReport]) -> Result<Vec<PathBuf>> {
    let main = reports.first().ok_or_else(|| domain("no evaluation to report"))?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };

    let mut curve = csv_line(&["input", "feature", "j", "group", "mae", "ci_low", "ci_high", "half_width"].map(String::from));
    for r in reports {
        for p in &r.curve {
            for (g, group) in ParamGroup::ALL.iter().enumerate() {
                curve += &csv_line(&[
                    r.input.clone(),
                    r.feature.clone(),
                    p.j.to_string(),
                    group.key().into(),
                    p.group_mae[g].to_string(),
                    p.group_ci[g].0.to_string(),
                    p.group_ci[g].1.to_string(),
                    p.half_width(g).to_string(),
                ]);
            }
        }
    }
    put("mae_vs_j.csv", curve)?;

    let mut bands = csv_line(&BAND_TABLE_HEADER.map(String::from));
    for row in main.band_rows() {
        bands += &csv_line(&row);
    }
    put("octave_bands.csv", bands)?;

    let mut var = csv_line(&[vec!["room_id".to_string(), "j".to_string()], target_keys()].concat());
    for rv in &main.room_variance {
        for (j, v) in rv.var.iter().enumerate() {
            let mut row = vec![rv.room_id.to_string(), (j + 1).to_string()];
            row.extend(v.iter().map(|x| x.to_string()));
            var += &csv_line(&row);
        }
    }
    put("fused_variance.csv", var)?;

    if reports.len() > 1 {
        let mut header: Vec<String> = vec!["input".into(), "feature".into()];
        header.extend(ParamGroup::ALL.iter().map(|g| g.key().to_string()));
        header.extend(ParamGroup::ALL.iter().map(|g| format!("{}_half_width", g.key())));
        let mut t = csv_line(&header);
        for r in reports {
            let a = AblationRow::from_report(r);
            let mut row = vec![a.input, a.feature];
            row.extend(a.mae.iter().map(|v| v.to_string()));
            row.extend(a.half_width.iter().map(|v| v.to_string()));
            t += &csv_line(&row);
        }
        put("ablation.csv", t)?;
    }

    put("mae_vs_j.svg", render(&curve_panels(reports), 2))?;
    put("octave_bands.svg", render(&band_panels(main), 2))?;
    put("report.md", render_markdown(reports))?;
    put("report.json", serde_json::to_string_pretty(reports)?)?;
    Ok(written)
}
