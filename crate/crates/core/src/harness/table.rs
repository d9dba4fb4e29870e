//! Results-table rendering: architectures down the rows, algorithms across
//! the columns, mean test error in the cells.

use crate::rules::Algo;

/// Architecture row label, e.g. 2 hidden layers of width 400 -> "2×400".
pub fn arch_label(hidden_layers: usize, hidden_width: usize) -> String {
    format!("{hidden_layers}\u{00d7}{hidden_width}")
}

/// One grid cell: a (row label, algorithm) pair with its mean test error.
#[derive(Debug, Clone)]
pub struct TableCell {
    pub label: String,
    pub algo: Algo,
    pub value: Option<f64>,
}

/// Render the grid as an aligned text table and a CSV, cells to two
/// decimals. Missing cells render as an em dash and emit a warning on
/// stderr.
pub fn emit_results_table(cells: &[TableCell], algos: &[Algo]) -> (String, String) {
    let mut labels: Vec<&str> = Vec::new();
    for cell in cells {
        if !labels.contains(&cell.label.as_str()) {
            labels.push(&cell.label);
        }
    }

    let lookup = |label: &str, algo: Algo| -> Option<f64> {
        cells
            .iter()
            .find(|c| c.label == label && c.algo == algo)
            .and_then(|c| c.value)
    };

    let label_width = labels
        .iter()
        .map(|l| l.chars().count())
        .max()
        .unwrap_or(5)
        .max(5);
    let col_width = 6;

    let mut table = String::new();
    table.push_str(&format!("{:<label_width$}", "Model"));
    for algo in algos {
        table.push_str(&format!(" | {:>col_width$}", algo.name().to_uppercase()));
    }
    table.push('\n');
    table.push_str(&"-".repeat(label_width + algos.len() * (col_width + 3)));
    table.push('\n');

    let mut csv = String::from("model");
    for algo in algos {
        csv.push(',');
        csv.push_str(algo.name());
    }
    csv.push('\n');

    for label in &labels {
        table.push_str(&format!("{label:<label_width$}"));
        csv.push_str(label);
        for &algo in algos {
            match lookup(label, algo) {
                Some(v) => {
                    table.push_str(&format!(" | {:>col_width$.2}", v));
                    csv.push_str(&format!(",{v:.2}"));
                }
                None => {
                    eprintln!("warning: no result for model {label}, algorithm {algo}");
                    table.push_str(&format!(" | {:>col_width$}", "\u{2014}"));
                    csv.push_str(",\u{2014}");
                }
            }
        }
        table.push('\n');
        csv.push('\n');
    }
    (table, csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_format() {
        assert_eq!(arch_label(2, 400), "2\u{00d7}400");
        assert_eq!(arch_label(1, 800), "1\u{00d7}800");
    }

    #[test]
    fn single_cell_table() {
        let cells = vec![TableCell {
            label: arch_label(1, 400),
            algo: Algo::Bp,
            value: Some(1.95),
        }];
        let (table, csv) = emit_results_table(&cells, &[Algo::Bp]);
        assert!(table.contains("1.95"));
        assert_eq!(csv.lines().nth(1).unwrap(), "1\u{00d7}400,1.95");
    }

    #[test]
    fn mean_formats_to_two_decimals() {
        let cells = vec![TableCell {
            label: "1\u{00d7}400".into(),
            algo: Algo::Fa,
            value: Some(2.5),
        }];
        let (table, csv) = emit_results_table(&cells, &[Algo::Fa]);
        assert!(table.contains("2.50"));
        assert!(csv.contains("2.50"));
    }

    #[test]
    fn missing_cell_renders_dash() {
        let cells = vec![TableCell {
            label: "1\u{00d7}400".into(),
            algo: Algo::Bp,
            value: Some(2.0),
        }];
        let (table, csv) = emit_results_table(&cells, &[Algo::Bp, Algo::Fa]);
        assert!(table.contains('\u{2014}'));
        assert!(csv.contains('\u{2014}'));
    }

    #[test]
    fn cells_agree_between_table_and_csv() {
        let cells = vec![
            TableCell {
                label: "1\u{00d7}400".into(),
                algo: Algo::Bp,
                value: Some(1.951),
            },
            TableCell {
                label: "1\u{00d7}400".into(),
                algo: Algo::Fa,
                value: Some(3.749),
            },
            TableCell {
                label: "2\u{00d7}400".into(),
                algo: Algo::Bp,
                value: Some(1.713),
            },
            TableCell {
                label: "2\u{00d7}400".into(),
                algo: Algo::Fa,
                value: Some(4.25),
            },
        ];
        let (table, csv) = emit_results_table(&cells, &[Algo::Bp, Algo::Fa]);
        for want in ["1.95", "3.75", "1.71", "4.25"] {
            assert!(table.contains(want), "table missing {want}:\n{table}");
            assert!(csv.contains(want), "csv missing {want}:\n{csv}");
        }
    }
}
