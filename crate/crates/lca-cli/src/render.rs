//! Plain-text rendering of reports: aligned tables for terminal use.
//! The JSON form is the machine-readable artifact; text output rounds
//! for legibility and never feeds back into another command.

use std::fmt::Write as _;

use crate::report::{
    ComparisonSection, DiagnosticsSection, GeneratorSection, ModelSection, Report, SummarySection,
};

pub fn render(report: &Report) -> String {
    let mut out = String::new();
    if let Some(model) = &report.model {
        out.push_str(&render_model(model));
    }
    if let Some(comparison) = &report.comparison {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&render_comparison(comparison));
    }
    if let Some(diagnostics) = &report.diagnostics {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&render_diagnostics(diagnostics));
    }
    if let Some(generator) = &report.generator {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&render_generator(generator));
    }
    out
}

/// First column left-aligned, the rest right-aligned; two spaces
/// between columns; trailing blanks trimmed.
fn aligned(rows: &[Vec<String>]) -> String {
    let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; n_cols];
    for row in rows {
        for (c, cell) in row.iter().enumerate() {
            widths[c] = widths[c].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<width$}", width = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>width$}", width = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn opt_f2(x: Option<f64>) -> String {
    x.map(f2).unwrap_or_else(|| "-".into())
}

fn p_value(p: f64) -> String {
    if p < 5e-5 {
        "<0.0001".into()
    } else {
        format!("{p:.4}")
    }
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else if word.ends_with('s') {
        format!("{n} {word}es")
    } else {
        format!("{n} {word}s")
    }
}

fn class_labels_for(section: &ModelSection) -> Vec<String> {
    match section.conditional_table() {
        Ok((table, _)) => table.class_labels(),
        Err(_) => (1..=section.n_classes).map(|r| format!("Class {r}")).collect(),
    }
}

fn render_model(s: &ModelSection) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Latent class model: {}, {}, n = {}{}",
        plural(s.n_classes, "class"),
        plural(s.indicators.len(), "indicator"),
        s.n_rows,
        if s.rows_dropped > 0 {
            format!(" ({} dropped)", plural(s.rows_dropped, "row"))
        } else {
            String::new()
        }
    );
    if !s.formula.is_empty() {
        let _ = writeln!(out, "Membership formula: {}", s.formula);
    }
    let _ = writeln!(
        out,
        "Converged: {} ({}, restart {})",
        if s.converged { "yes" } else { "NO" },
        plural(s.n_iterations, "iteration"),
        s.restart_index
    );
    out.push('\n');

    let stats = vec![
        vec!["log-likelihood".into(), f2(s.log_likelihood)],
        vec!["parameters".into(), s.n_parameters.to_string()],
        vec!["residual df".into(), s.residual_df.to_string()],
        vec!["AIC".into(), f2(s.aic)],
        vec!["BIC".into(), f2(s.bic)],
        vec!["chi-square".into(), opt_f2(s.chi_square)],
        vec!["G-square".into(), opt_f2(s.g_square)],
    ];
    out.push_str(&aligned(&stats));
    out.push('\n');

    let labels = class_labels_for(s);
    let mut shares = vec![vec!["class".to_string(), "estimated".into(), "modal".into()]];
    for (r, label) in labels.iter().enumerate() {
        shares.push(vec![
            label.clone(),
            f4(s.estimated_shares[r]),
            s.modal_shares.get(r).map(|&m| f4(m)).unwrap_or_else(|| "-".into()),
        ]);
    }
    out.push_str("Class shares\n");
    out.push_str(&aligned(&shares));

    if let Some(contrasts) = &s.coefficients {
        out.push('\n');
        out.push_str("Membership coefficients (log-odds against class 1)\n");
        for contrast in contrasts {
            let label = labels
                .get(contrast.class - 1)
                .cloned()
                .unwrap_or_else(|| format!("Class {}", contrast.class));
            let _ = writeln!(out, "class {} ({label}):", contrast.class);
            let mut rows = vec![vec![
                "term".to_string(),
                "estimate".into(),
                "std.error".into(),
                "t".into(),
                "p".into(),
            ]];
            for r in &contrast.rows {
                rows.push(vec![
                    r.term.clone(),
                    format!("{:.3}", r.coefficient),
                    format!("{:.3}", r.std_error),
                    f2(r.t_value),
                    p_value(r.p_value),
                ]);
            }
            out.push_str(&aligned(&rows));
        }
    }

    if !s.warnings.is_empty() {
        out.push('\n');
        out.push_str("Warnings\n");
        for w in &s.warnings {
            let _ = writeln!(out, "  - {w}");
        }
    }
    out
}

fn render_comparison(c: &ComparisonSection) -> String {
    let mut out = String::new();
    out.push_str("Model comparison\n");

    let mut header = vec!["".to_string()];
    for (i, s) in c.summaries.iter().enumerate() {
        let mut label = s.label.clone();
        // Column markers: `*` BIC choice, `+` AIC choice.
        if i == c.best_bic {
            label.push('*');
        }
        if i == c.best_aic {
            label.push('+');
        }
        header.push(label);
    }

    let metric = |name: &str, values: Vec<String>| {
        let mut row = vec![name.to_string()];
        row.extend(values);
        row
    };
    let share_row = |name: String, pick: fn(&SummarySection) -> &[f64], r: usize| {
        metric(
            &name,
            c.summaries
                .iter()
                .map(|s| pick(s).get(r).map(|&v| f4(v)).unwrap_or_else(|| "-".into()))
                .collect(),
        )
    };

    // Row order mirrors the usual goodness-of-fit table: shares, modal
    // shares, n, parameters, residual df, log-likelihood, AIC, BIC, fit
    // statistics.
    let max_classes = c.summaries.iter().map(|s| s.n_classes).max().unwrap_or(0);
    let mut rows = vec![header];
    for r in 0..max_classes {
        rows.push(share_row(
            format!("estimated share {}", r + 1),
            |s| &s.estimated_shares,
            r,
        ));
    }
    for r in 0..max_classes {
        rows.push(share_row(format!("modal share {}", r + 1), |s| &s.modal_shares, r));
    }
    rows.extend([
        metric("n", c.summaries.iter().map(|s| s.n.to_string()).collect()),
        metric(
            "parameters",
            c.summaries.iter().map(|s| s.n_parameters.to_string()).collect(),
        ),
        metric(
            "residual df",
            c.summaries.iter().map(|s| s.residual_df.to_string()).collect(),
        ),
        metric(
            "log-likelihood",
            c.summaries.iter().map(|s| f2(s.log_likelihood)).collect(),
        ),
        metric("AIC", c.summaries.iter().map(|s| f2(s.aic)).collect()),
        metric("BIC", c.summaries.iter().map(|s| f2(s.bic)).collect()),
        metric(
            "chi-square",
            c.summaries.iter().map(|s| opt_f2(s.chi_square)).collect(),
        ),
        metric(
            "G-square",
            c.summaries.iter().map(|s| opt_f2(s.g_square)).collect(),
        ),
        metric(
            "converged",
            c.summaries
                .iter()
                .map(|s| if s.converged { "yes".into() } else { "NO".into() })
                .collect(),
        ),
    ]);
    out.push_str(&aligned(&rows));

    let _ = writeln!(out, "*  best by BIC: {}", c.summaries[c.best_bic].label);
    let _ = writeln!(out, "+  best by AIC: {}", c.summaries[c.best_aic].label);
    if c.best_bic != c.best_aic {
        out.push_str("note: AIC and BIC disagree; both candidates deserve a look\n");
    }
    out
}

fn render_diagnostics(d: &DiagnosticsSection) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Response consistency (flag when p_consistent < {} or p_extreme_misclass > {})",
        f2(d.min_consistent),
        f2(d.max_misclass)
    );
    let share_line = d
        .class_labels
        .iter()
        .zip(&d.shares)
        .map(|(label, &s)| format!("{label} {}", f4(s)))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "Class shares: {share_line}");
    out.push('\n');

    let mut rows = vec![vec![
        "indicator".to_string(),
        "p_consistent".into(),
        "p_extreme_misclass".into(),
        "extreme FP".into(),
        "extreme FN".into(),
        "flag".into(),
    ]];
    for r in &d.records {
        rows.push(vec![
            r.indicator.clone(),
            f4(r.p_consistent),
            f4(r.p_extreme_misclass),
            f4(r.extreme_false_positive),
            f4(r.extreme_false_negative),
            r.flag.clone(),
        ]);
    }
    rows.push(vec![
        "average".to_string(),
        f4(d.average_consistent),
        f4(d.average_misclass),
        String::new(),
        String::new(),
        String::new(),
    ]);
    out.push_str(&aligned(&rows));

    if let Some(tables) = &d.tables {
        for table in tables {
            out.push('\n');
            let _ = writeln!(out, "Item response probabilities: {}", table.indicator);
            let n_categories = table.rows.first().map(Vec::len).unwrap_or(0);
            let mut grid = vec![{
                let mut h = vec!["class".to_string()];
                h.extend((1..=n_categories).map(|k| format!("cat {k}")));
                h
            }];
            let last_class = table.rows.len() - 1;
            for (r, probs) in table.rows.iter().enumerate() {
                let mut row =
                    vec![d.class_labels.get(r).cloned().unwrap_or_else(|| format!("Class {}", r + 1))];
                for (k, &p) in probs.iter().enumerate() {
                    let mut cell = f4(p);
                    if r == last_class && k == 0 {
                        cell.push_str("**");
                    }
                    if r == 0 && k == n_categories - 1 {
                        cell.push('*');
                    }
                    row.push(cell);
                }
                grid.push(row);
            }
            out.push_str(&aligned(&grid));
        }
        out.push('\n');
        out.push_str("*  extreme false negative rate  ** extreme false positive rate\n");
    }
    out
}

fn render_generator(g: &GeneratorSection) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Simulated {} from a {}-class model ({}), seed {}",
        plural(g.n, "respondent"),
        g.n_classes,
        plural(g.indicators.len(), "indicator"),
        g.seed
    );
    let _ = writeln!(out, "Membership formula: {}", g.formula);
    if let Some(covariates) = &g.covariates {
        let _ = writeln!(out, "Covariates: {covariates}");
    }
    let _ = writeln!(out, "Data written to {}", g.data_path);
    let _ = writeln!(out, "True labels written to {}", g.labels_path);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{ConsistencyRowSection, TableSection};

    fn summary(label: &str, aic: f64, bic: f64) -> SummarySection {
        SummarySection {
            label: label.into(),
            n_classes: 2,
            n: 100,
            n_parameters: 5,
            residual_df: 2,
            log_likelihood: -50.0,
            aic,
            bic,
            chi_square: None,
            g_square: None,
            estimated_shares: vec![0.5, 0.5],
            modal_shares: vec![0.5, 0.5],
            converged: true,
        }
    }

    #[test]
    fn comparison_marks_both_winners_and_flags_disagreement() {
        let section = ComparisonSection {
            summaries: vec![summary("2 classes", 110.0, 120.0), summary("3 classes", 100.0, 130.0)],
            best_bic: 0,
            best_aic: 1,
        };
        let text = render_comparison(&section);
        assert!(text.contains("2 classes*"));
        assert!(text.contains("3 classes+"));
        assert!(text.contains("best by BIC: 2 classes"));
        assert!(text.contains("AIC and BIC disagree"));
    }

    #[test]
    fn diagnostics_tables_carry_corner_markers() {
        let section = DiagnosticsSection {
            min_consistent: 0.4,
            max_misclass: 0.2,
            shares: vec![0.6, 0.4],
            class_labels: vec!["Class 1".into(), "Class 2".into()],
            records: vec![ConsistencyRowSection {
                indicator: "A".into(),
                p_consistent: 0.8,
                p_extreme_misclass: 0.05,
                extreme_false_positive: 0.1,
                extreme_false_negative: 0.05,
                flag: "ok".into(),
            }],
            average_consistent: 0.8,
            average_misclass: 0.05,
            tables: Some(vec![TableSection {
                indicator: "A".into(),
                rows: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            }]),
        };
        let text = render_diagnostics(&section);
        // Bottom-left corner: extreme false positive; top-right: false negative.
        assert!(text.contains("0.2000**"));
        assert!(text.contains("0.1000*"));
        assert!(text.contains("extreme false positive rate"));
    }

    #[test]
    fn small_p_values_render_as_a_bound() {
        assert_eq!(p_value(1e-12), "<0.0001");
        assert_eq!(p_value(0.0704), "0.0704");
    }

    #[test]
    fn aligned_right_justifies_numeric_columns() {
        let rows = vec![
            vec!["name".to_string(), "value".into()],
            vec!["x".to_string(), "1.5".into()],
        ];
        let text = aligned(&rows);
        assert_eq!(text, "name  value\nx       1.5\n");
    }
}
