//! Relative gain of the rejection policy (M/M/1/1) over the accept-all policy
//! (M/M/1), and sweeps of that gain over market potential and lead-time
//! sensitivity.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{solve_p1, solve_p2, Solution};
use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::numeric::{solve_mm1_baseline, SolverConfig};
use crate::scalar::Scalar;

/// Percentage gain `(reject - accept) / accept * 100`.
pub fn relative_gain<T: Scalar>(profit_reject: T, profit_accept: T) -> Result<T> {
    if !(profit_accept > T::zero()) {
        return Err(Error::UndefinedGain(profit_accept.as_f64()));
    }
    Ok((profit_reject - profit_accept) / profit_accept * T::lit(100.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GainCell<T = f64> {
    pub a: T,
    pub b2: T,
    /// Percentage gain; `None` when undefined (see `flag`).
    pub gain: Option<T>,
    pub flag: Option<String>,
    pub reject: Solution<T>,
    pub accept: Solution<T>,
}

/// Gains over an `(a, b2)` grid. Rows run over `b2_values` in descending
/// order, columns over `a_values` ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GainTable<T = f64> {
    pub a_values: Vec<T>,
    pub b2_values: Vec<T>,
    pub base: MarketParams<T>,
    pub costs_on: bool,
    /// `cells[row][col]`.
    pub cells: Vec<Vec<GainCell<T>>>,
}

pub fn compare_cell<T: Scalar>(
    params: &MarketParams<T>,
    costs_on: bool,
    config: &SolverConfig<T>,
) -> Result<GainCell<T>> {
    let (reject, accept) = if costs_on {
        (solve_p2(params)?, solve_mm1_baseline(params, true, config)?)
    } else {
        let bare = params.without_costs();
        (solve_p1(&bare)?, solve_mm1_baseline(&bare, false, config)?)
    };
    let (gain, flag) = if !accept.feasible {
        (None, Some("accept-all policy infeasible".to_string()))
    } else if !reject.feasible {
        (None, Some("rejection policy infeasible".to_string()))
    } else {
        match relative_gain(reject.profit, accept.profit) {
            Ok(g) => (Some(g), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    Ok(GainCell {
        a: params.market_potential,
        b2: params.lead_time_sensitivity,
        gain,
        flag,
        reject,
        accept,
    })
}

/// Solves both policies on every `(a, b2)` pair of the grid.
///
/// `base` supplies every other parameter; its capacity is forced to 1.
pub fn sweep<T: Scalar>(
    base: &MarketParams<T>,
    a_values: &[T],
    b2_values: &[T],
    costs_on: bool,
    config: &SolverConfig<T>,
) -> Result<GainTable<T>> {
    if a_values.is_empty() || b2_values.is_empty() {
        return Err(Error::InvalidParams("sweep grids must be non-empty".into()));
    }
    let mut a_sorted = a_values.to_vec();
    a_sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite market potentials"));
    let mut b2_sorted = b2_values.to_vec();
    b2_sorted.sort_by(|x, y| y.partial_cmp(x).expect("finite sensitivities"));

    let base = base.with_capacity(1);
    let coords: Vec<(usize, usize)> = (0..b2_sorted.len())
        .flat_map(|r| (0..a_sorted.len()).map(move |c| (r, c)))
        .collect();
    let flat: Vec<GainCell<T>> = coords
        .par_iter()
        .map(|&(r, c)| {
            let mut params = base;
            params.market_potential = a_sorted[c];
            params.lead_time_sensitivity = b2_sorted[r];
            compare_cell(&params, costs_on, config)
        })
        .collect::<Result<_>>()?;
    let cells = flat
        .chunks(a_sorted.len())
        .map(|row| row.to_vec())
        .collect();
    Ok(GainTable {
        a_values: a_sorted,
        b2_values: b2_sorted,
        base,
        costs_on,
        cells,
    })
}

impl<T: Scalar> GainTable<T> {
    pub fn cell(&self, a: T, b2: T) -> Option<&GainCell<T>> {
        let r = self.b2_values.iter().position(|&v| v == b2)?;
        let c = self.a_values.iter().position(|&v| v == a)?;
        Some(&self.cells[r][c])
    }

    pub fn gain(&self, a: T, b2: T) -> Option<T> {
        self.cell(a, b2).and_then(|c| c.gain)
    }

    pub fn positive_cells(&self) -> usize {
        self.cells
            .iter()
            .flatten()
            .filter(|c| c.gain.is_some_and(|g| g > T::zero()))
            .count()
    }

    pub fn flagged_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.gain.is_none()).count()
    }

    /// Writes the table with a header of `a` values and a leading `b2`
    /// column; gains are printed with two decimals, undefined cells as `n/a`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["b2".to_string()];
        header.extend(self.a_values.iter().map(|a| format_axis(*a)));
        w.write_record(&header)?;
        for (b2, row) in self.b2_values.iter().zip(&self.cells) {
            let mut record = vec![format_axis(*b2)];
            record.extend(row.iter().map(|cell| match cell.gain {
                Some(g) => format!("{:.2}", g.as_f64()),
                None => "n/a".to_string(),
            }));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn format_axis<T: Scalar>(v: T) -> String {
    let f = v.as_f64();
    if f.fract() == 0.0 {
        format!("{f:.0}")
    } else {
        format!("{f}")
    }
}
