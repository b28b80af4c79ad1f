//! CSV and aligned text tables for scenes, evaluation results, sweeps and
//! oracle breakdowns. Floats use Rust's shortest round-trip formatting, so
//! identical inputs give identical bytes.

use serde::Serialize;

use crate::eval::EvalResult;
use crate::scene_sim::Scene;
use crate::trend::{OracleTable, TrendReport};

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> String {
    let mut writer = ::csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("in-memory CSV write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

#[derive(Serialize)]
struct SceneRow<'a> {
    frame: u64,
    seed: u64,
    delta_h: f64,
    index: usize,
    class: &'a str,
    x: f64,
    y: f64,
    z: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
}

/// One row per box, in world coordinates of the training-height camera.
pub fn scenes_csv(scenes: &[Scene]) -> String {
    let header = "frame,seed,delta_h,index,class,x,y,z,l,w,h,yaw\n";
    let rows = scenes.iter().flat_map(|s| {
        s.boxes.iter().enumerate().map(move |(index, b)| SceneRow {
            frame: s.frame_id,
            seed: s.seed,
            delta_h: s.delta_h,
            index,
            class: &b.class,
            x: b.x,
            y: b.y,
            z: b.z,
            l: b.l,
            w: b.w,
            h: b.h,
            yaw: b.yaw,
        })
    });
    let body = to_csv(rows);
    if body.is_empty() {
        header.to_string()
    } else {
        body
    }
}

#[derive(Serialize)]
struct EvalRow {
    delta_h: String,
    ap3d_70: f64,
    ap3d_50: f64,
    mde: String,
    matched: usize,
    missed: usize,
}

pub fn eval_csv(results: &[EvalResult]) -> String {
    to_csv(results.iter().map(|r| EvalRow {
        delta_h: opt(r.delta_h),
        ap3d_70: r.ap3d_70,
        ap3d_50: r.ap3d_50,
        mde: opt(r.mde),
        matched: r.matched,
        missed: r.missed,
    }))
}

pub fn eval_table(results: &[EvalResult]) -> String {
    let mut out = format!("{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "dH", "AP3D70", "AP3D50", "MDE", "matched", "missed");
    for r in results {
        out.push_str(&format!(
            "{:>8} {:>8.2} {:>8.2} {:>8} {:>8} {:>8}\n",
            r.delta_h.map_or("-".to_string(), |d| format!("{d:+.2}")),
            r.ap3d_70,
            r.ap3d_50,
            r.mde.map_or("NA".to_string(), |m| format!("{m:+.2}")),
            r.matched,
            r.missed
        ));
    }
    out
}

#[derive(Serialize)]
struct TrendCsvRow {
    model: &'static str,
    delta_h: f64,
    empirical_mde: String,
    predicted_mde: String,
    ap3d_70: f64,
    ap3d_50: f64,
    matched: usize,
    missed: usize,
}

pub fn trend_csv(report: &TrendReport) -> String {
    to_csv(report.models.iter().flat_map(|m| {
        m.rows.iter().map(move |r| TrendCsvRow {
            model: m.kind.name(),
            delta_h: r.delta_h,
            empirical_mde: opt(r.empirical_mde),
            predicted_mde: opt(r.predicted_mde),
            ap3d_70: r.ap3d_70,
            ap3d_50: r.ap3d_50,
            matched: r.matched,
            missed: r.missed,
        })
    }))
}

pub fn trend_table(report: &TrendReport) -> String {
    let mut out = String::new();
    for m in &report.models {
        out.push_str(&format!(
            "[{}] slope {} m/m\n",
            m.kind,
            m.slope.map_or("undefined".to_string(), |s| format!("{s:+.3}"))
        ));
        out.push_str(&format!("{:>8} {:>10} {:>10} {:>8} {:>8}\n", "dH", "MDE", "predicted", "AP3D70", "AP3D50"));
        for r in &m.rows {
            let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:+.3}"));
            out.push_str(&format!(
                "{:>+8.2} {:>10} {:>10} {:>8.2} {:>8.2}\n",
                r.delta_h,
                f(r.empirical_mde),
                f(r.predicted_mde),
                r.ap3d_70,
                r.ap3d_50
            ));
        }
    }
    out
}

#[derive(Serialize)]
struct OracleCsvRow {
    model: &'static str,
    mask: String,
    delta_h: f64,
    ap3d_70: f64,
    ap3d_50: f64,
    mde: String,
    matched_mde: String,
    oracle_matched: usize,
    predictions: usize,
}

pub fn oracle_csv(table: &OracleTable) -> String {
    to_csv(table.rows.iter().flat_map(|row| {
        row.cells.iter().map(move |c| OracleCsvRow {
            model: table.model.name(),
            mask: row.mask.to_string(),
            delta_h: c.delta_h,
            ap3d_70: c.ap3d_70,
            ap3d_50: c.ap3d_50,
            mde: opt(c.mde),
            matched_mde: opt(c.matched_mde),
            oracle_matched: c.oracle_matched,
            predictions: c.predictions,
        })
    }))
}

/// AP3D70 / AP3D50 / MDE per mask (rows) and height change (columns).
pub fn oracle_table(table: &OracleTable) -> String {
    let mut out = format!("{:<9}", "mask");
    if let Some(first) = table.rows.first() {
        for c in &first.cells {
            out.push_str(&format!(" | {:^22}", format!("dH {:+.2}", c.delta_h)));
        }
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&format!("{:<9}", row.mask.to_string()));
        for c in &row.cells {
            let mde = c.mde.map_or("NA".to_string(), |m| format!("{m:+.2}"));
            out.push_str(&format!(" | {:>6.2} {:>6.2} {:>8}", c.ap3d_70, c.ap3d_50, mde));
        }
        out.push('\n');
    }
    out
}
