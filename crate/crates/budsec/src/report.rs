//! CSV rendering. Every rational metric is written twice: a plain decimal
//! with 12 significant digits for plotting, and the exact `num/den` text in
//! a paired `*_exact` column.

use budsec_core::rational::{decimal_sig, format_rat, Rat};

pub const SIG_DIGITS: u32 = 12;

pub fn rat_cells(r: &Rat) -> (String, String) {
    (decimal_sig(r, SIG_DIGITS), format_rat(r))
}

/// A float cell (confidence half-widths only).
pub fn f64_cell(x: f64) -> String {
    format!("{x:.12e}")
}

pub struct CsvBuilder {
    out: String,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        let mut out = String::new();
        out.push_str(&header.join(","));
        out.push('\n');
        Self { out }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}
