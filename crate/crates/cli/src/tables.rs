//! Plot-ready CSV dumps.

use std::fmt::Write as _;

use nsfde_core::process::AdaptedProcess;
use nsfde_core::two_param::TwoParamProcess;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `level,node,component,value` for every stored level.
pub fn process_csv(p: &AdaptedProcess) -> String {
    let mut out = String::from("level,node,component,value\n");
    let dim = p.dim();
    for level in p.lo()..=p.hi() {
        for (node, chunk) in p.level(level).chunks(dim).enumerate() {
            for (c, v) in chunk.iter().enumerate() {
                let _ = writeln!(out, "{level},{node},{c},{}", num(*v));
            }
        }
    }
    out
}

/// `i,j,node,component,value` for the selected rows of `Z`.
pub fn z_slices_csv(z: &TwoParamProcess, rows: &[usize]) -> String {
    let mut out = String::from("i,j,node,component,value\n");
    let dim = z.dim();
    for &i in rows.iter().filter(|i| **i < z.row_count()) {
        let row = z.row(i);
        for j in row.lo()..=row.hi() {
            for (node, chunk) in row.level(j).chunks(dim).enumerate() {
                for (c, v) in chunk.iter().enumerate() {
                    let _ = writeln!(out, "{i},{j},{node},{c},{}", num(*v));
                }
            }
        }
    }
    out
}

/// `iteration,cost`.
pub fn costs_csv(costs: &[f64]) -> String {
    let mut out = String::from("iteration,cost\n");
    for (k, c) in costs.iter().enumerate() {
        let _ = writeln!(out, "{k},{}", num(*c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn process_rows_are_level_major() {
        let mut p = AdaptedProcess::zeros(1, 2, -1, 1, 1);
        p.level_mut(1).copy_from_slice(&[1.0, 2.0]);
        let csv = process_csv(&p);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 1 + 1 + 2);
        assert_eq!(lines[4], "1,1,0,2.0000000000000000e0");
    }
}
