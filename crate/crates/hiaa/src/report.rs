//! Evaluation bundle and its plain-text rendering. The table lays the twelve
//! dimensions out in four groups (facial, general appearance, environment,
//! overall), followed by the overall score over every sample.

use std::collections::BTreeMap;
use std::fmt::Write;

use hiaa_core::metrics::{MetricsReport, MetricsRow, OVERALL_ROW};
use hiaa_core::Dimension;
use serde::{Deserialize, Serialize};

/// Reports for every head over one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBundle {
    pub provenance: BTreeMap<String, String>,
    pub reports: Vec<MetricsReport>,
}

const GROUPS: [(&str, usize); 4] = [("Facial", 6), ("General appearance", 4), ("Environ.", 1), ("Overall", 1)];

fn short_name(d: Dimension) -> &'static str {
    match d {
        Dimension::FacialBrightness => "bright",
        Dimension::FacialFeatureClarity => "clarity",
        Dimension::FacialSkinTone => "skin",
        Dimension::FacialStructure => "struct",
        Dimension::FacialContourClarity => "contour",
        Dimension::FacialAesthetic => "facial",
        Dimension::Outfit => "outfit",
        Dimension::BodyShape => "body",
        Dimension::Looks => "looks",
        Dimension::GeneralAppearanceAesthetic => "general",
        Dimension::Environment => "env",
        Dimension::OverallAesthetic => "overall",
    }
}

const METRICS: [&str; 9] = ["mse", "mae", "plcc", "srcc", "krcc", "acc", "prec", "recall", "f1"];

fn metric(row: &MetricsRow, i: usize) -> Option<f64> {
    match i {
        0 => Some(row.mse),
        1 => Some(row.mae),
        2 => row.plcc,
        3 => row.srcc,
        4 => row.krcc,
        5 => Some(row.accuracy),
        6 => Some(row.precision_macro),
        7 => Some(row.recall_macro),
        _ => Some(row.f1_macro),
    }
}

const LABEL_W: usize = 8;
const COL_W: usize = 9;

pub fn render_report(report: &MetricsReport) -> String {
    let mut s = String::new();
    let dim_n = report.rows.iter().find(|r| r.target != OVERALL_ROW).map_or(0, |r| r.n);
    let _ = writeln!(
        s,
        "head {}  n={}  twelve-dimension n={}  levels: {}",
        report.head.as_str(),
        report.n,
        dim_n,
        report.level_source
    );

    let mut groups = format!("{:LABEL_W$}", "");
    for (name, span) in GROUPS {
        let width = span * COL_W;
        let _ = write!(groups, " |{:^width$}", truncate(name, width));
    }
    let _ = write!(groups, " |{:^COL_W$}", "all");
    let _ = writeln!(s, "{}", groups.trim_end());

    let mut header = format!("{:LABEL_W$}", "metric");
    let mut dims = Dimension::ALL.iter();
    for (_, span) in GROUPS {
        header.push_str(" |");
        for d in dims.by_ref().take(span) {
            let _ = write!(header, "{:>COL_W$}", short_name(*d));
        }
    }
    let _ = write!(header, " |{:>COL_W$}", "samples");
    let _ = writeln!(s, "{header}");
    let _ = writeln!(s, "{}", "-".repeat(header.len()));

    for (i, name) in METRICS.iter().enumerate() {
        let mut line = format!("{name:LABEL_W$}");
        let mut dims = Dimension::ALL.iter();
        for (_, span) in GROUPS {
            line.push_str(" |");
            for d in dims.by_ref().take(span) {
                line.push_str(&cell(report.row(d.as_str()), i));
            }
        }
        line.push_str(" |");
        line.push_str(&cell(report.row(OVERALL_ROW), i));
        let _ = writeln!(s, "{line}");
    }
    s
}

pub fn render_bundle(bundle: &EvalBundle) -> String {
    let mut s = String::new();
    for (i, r) in bundle.reports.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        s.push_str(&render_report(r));
    }
    s
}

fn cell(row: Option<&MetricsRow>, i: usize) -> String {
    match row {
        None => format!("{:>COL_W$}", "-"),
        Some(r) => match metric(r, i) {
            Some(v) => format!("{v:>COL_W$.4}"),
            None => format!("{:>COL_W$}", "undef"),
        },
    }
}

fn truncate(s: &str, width: usize) -> &str {
    &s[..s.len().min(width)]
}
