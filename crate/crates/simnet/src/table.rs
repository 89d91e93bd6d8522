//! Demurrage table of idle participants, next to the published figures.

use std::fmt::Write as _;

use witnet_core::reputation::{apply_demurrage, DecayRate, ReputationScore};

pub const START_SCORES: [u64; 5] = [1, 10, 100, 1000, 10000];

/// Epoch columns: 0, 1, then every 25 up to 500.
pub fn epoch_columns() -> Vec<u32> {
    let mut cols = vec![0, 1];
    cols.extend((1..=20).map(|k| k * 25));
    cols
}

/// Published values, one row per starting score, aligned with
/// [`epoch_columns`].
pub const PUBLISHED: [[f64; 22]; 5] = [
    [1.0; 22],
    [
        10.0, 9.90, 7.87, 6.36, 5.25, 4.42, 3.79, 3.30, 2.91, 2.61, 2.36, 2.16, 1.99, 1.85, 1.74, 1.64, 1.56, 1.49,
        1.43, 1.37, 1.33, 1.29,
    ],
    [
        100.0, 98.01, 62.06, 40.46, 27.58, 19.56, 14.37, 10.90, 8.51, 6.82, 5.59, 4.67, 3.98, 3.45, 3.03, 2.70, 2.44,
        2.22, 2.04, 1.90, 1.77, 1.67,
    ],
    [
        1000.0, 970.29, 480.99, 257.42, 144.85, 86.51, 54.50, 36.01, 24.84, 17.81, 13.21, 10.11, 7.96, 6.42, 5.29,
        4.45, 3.81, 3.32, 2.93, 2.62, 2.37, 2.17,
    ],
    [
        10000.0, 9605.26, 3851.53, 1637.54, 760.72, 382.61, 206.63, 118.95, 72.50, 46.52, 31.25, 21.87, 15.89, 11.93,
        9.23, 7.33, 5.96, 4.95, 4.20, 3.61, 3.16, 2.81,
    ],
];

/// Published total divisors over 500 epochs.
pub const PUBLISHED_DIVISORS: [u64; 5] = [1, 8, 60, 461, 3559];

/// Per-cell tolerance, relative.
pub const TOLERANCE: f64 = 0.005;

/// Cells compared but not held to the tolerance: (row, column).
pub const EXEMPT: [(usize, usize); 1] = [(4, 1)];

/// Scores of idle participants at each column epoch.
pub fn demurrage_table(decay: DecayRate) -> Vec<Vec<ReputationScore>> {
    let cols = epoch_columns();
    let last = *cols.last().expect("columns");
    START_SCORES
        .iter()
        .map(|&s| {
            let mut score = ReputationScore::from_points(s);
            let mut row = Vec::with_capacity(cols.len());
            for e in 0..=last {
                if cols.contains(&e) {
                    row.push(score);
                }
                score = apply_demurrage(score, decay);
            }
            row
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellDeviation {
    pub start: u64,
    pub epoch: u32,
    pub computed: f64,
    /// `computed` truncated to two decimals, the form the published table uses.
    pub printed: f64,
    pub published: f64,
    pub relative: f64,
    pub exempt: bool,
}

/// Every cell whose printed value deviates from the published one by more
/// than the tolerance, plus every exempt cell.
pub fn deviations(table: &[Vec<ReputationScore>]) -> Vec<CellDeviation> {
    let cols = epoch_columns();
    let mut out = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let computed = cell.to_f64();
            let printed = truncate2(computed);
            let published = PUBLISHED[i][j];
            let relative = (printed - published).abs() / published;
            let exempt = EXEMPT.contains(&(i, j));
            if relative > TOLERANCE || exempt {
                out.push(CellDeviation {
                    start: START_SCORES[i],
                    epoch: cols[j],
                    computed,
                    printed,
                    published,
                    relative,
                    exempt,
                });
            }
        }
    }
    out
}

fn truncate2(x: f64) -> f64 {
    (x * 100.0 + 1e-9).floor() / 100.0
}

/// Values are printed truncated to two decimals, as in the published table.
fn truncated(x: f64) -> String {
    format!("{:.2}", truncate2(x))
}

pub fn render(decay: DecayRate) -> String {
    let table = demurrage_table(decay);
    let cols = epoch_columns();
    let mut out = String::new();
    let _ = writeln!(out, "demurrage of idle participants, decay {}", decay.get());
    let _ = write!(out, "{:>8}", "start");
    for c in &cols {
        let _ = write!(out, " {:>9}", c);
    }
    out.push('\n');
    for (i, row) in table.iter().enumerate() {
        let _ = write!(out, "{:>8}", START_SCORES[i]);
        for cell in row {
            let _ = write!(out, " {:>9}", truncated(cell.to_f64()));
        }
        let divisor = START_SCORES[i] as f64 / row.last().expect("cells").to_f64();
        let _ = writeln!(out, "   divisor {:.0}", divisor);
    }
    if decay == DecayRate::DEFAULT {
        let devs = deviations(&table);
        if devs.is_empty() {
            let _ = writeln!(out, "all cells within {}% of the published table", TOLERANCE * 100.0);
        }
        for d in devs {
            let _ = writeln!(
                out,
                "{} start {} epoch {}: computed {:.4} (printed {:.2}), published {:.2}, off by {:.3}%",
                if d.exempt { "EXEMPT" } else { "DEVIATION" },
                d.start,
                d.epoch,
                d.computed,
                d.printed,
                d.published,
                d.relative * 100.0
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_and_shape() {
        let cols = epoch_columns();
        assert_eq!(cols.len(), 22);
        assert_eq!(cols[2], 25);
        assert_eq!(*cols.last().unwrap(), 500);
        let t = demurrage_table(DecayRate::DEFAULT);
        assert_eq!(t.len(), 5);
        assert!(t.iter().all(|r| r.len() == 22));
    }

    #[test]
    fn only_one_cell_misses_the_published_table() {
        let devs = deviations(&demurrage_table(DecayRate::DEFAULT));
        let off: Vec<_> = devs.iter().filter(|d| !d.exempt).map(|d| (d.start, d.epoch)).collect();
        assert_eq!(off, [(1000, 25)]);
        let exempt = devs.iter().find(|d| d.exempt).unwrap();
        assert!((exempt.computed - 9605.96).abs() < 0.01);
    }

    #[test]
    fn truncation_matches_published_style() {
        assert_eq!(truncated(970.2999), "970.29");
        assert_eq!(truncated(98.01), "98.01");
    }
}
