use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row per iteration.
///
/// `sigma_sq`, `v` and `delta_sq` are the noise inputs that sized this
/// iteration's batches: `sigma^2_{k-1}`, `v^max_{k-1}` and `delta_k^2`.
/// `l_hat` is `L_hat_{k-1}`, the bound the stepsize `eta_k` is checked against.
/// The `*_exact` columns carry exact values next to estimated ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub k: usize,
    pub gap: Option<f64>,
    pub eta: f64,
    pub l_bar: f64,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub calls_total: u64,
    pub sigma_sq: f64,
    pub v: f64,
    pub red_grad: Option<f64>,
    pub wall_ms: f64,
    pub delta_sq: f64,
    pub l_hat: f64,
    /// Smoothness variance at `(x_{k-1}, x_k)` (estimated for variant C).
    pub v_k: f64,
    pub sigma_sq_exact: Option<f64>,
    pub delta_sq_exact: Option<f64>,
    pub v_k_exact: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 18] = [
    "k",
    "gap",
    "eta",
    "l_bar",
    "m",
    "n",
    "r",
    "calls_total",
    "sigma_sq",
    "v",
    "red_grad",
    "wall_ms",
    "delta_sq",
    "l_hat",
    "v_k",
    "sigma_sq_exact",
    "delta_sq_exact",
    "v_k_exact",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl TrajectoryRecord {
    /// Field values in `CSV_COLUMNS` order; absent values are empty.
    pub fn csv_fields(&self) -> [String; 18] {
        [
            self.k.to_string(),
            fmt_opt(self.gap),
            fmt_f64(self.eta),
            fmt_f64(self.l_bar),
            self.m.to_string(),
            self.n.to_string(),
            self.r.to_string(),
            self.calls_total.to_string(),
            fmt_f64(self.sigma_sq),
            fmt_f64(self.v),
            fmt_opt(self.red_grad),
            fmt_f64(self.wall_ms),
            fmt_f64(self.delta_sq),
            fmt_f64(self.l_hat),
            fmt_f64(self.v_k),
            fmt_opt(self.sigma_sq_exact),
            fmt_opt(self.delta_sq_exact),
            fmt_opt(self.v_k_exact),
        ]
    }
}

pub fn write_records_csv<W: Write>(records: &[TrajectoryRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in records {
        out.write_record(r.csv_fields())?;
    }
    out.flush()?;
    Ok(())
}

pub fn records_to_csv_string(records: &[TrajectoryRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_records_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ascii"))
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<TrajectoryRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Contract(format!("unexpected record columns {header:?}")));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let s = |i: usize| row.get(i).unwrap_or("");
        let bad = |i: usize| Error::Contract(format!("bad value {:?} in column {}", s(i), CSV_COLUMNS[i]));
        let f = |i: usize| s(i).parse::<f64>().map_err(|_| bad(i));
        let u = |i: usize| s(i).parse::<u64>().map_err(|_| bad(i));
        let o = |i: usize| -> Result<Option<f64>> {
            if s(i).is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        out.push(TrajectoryRecord {
            k: u(0)? as usize,
            gap: o(1)?,
            eta: f(2)?,
            l_bar: f(3)?,
            m: u(4)? as usize,
            n: u(5)? as usize,
            r: u(6)? as usize,
            calls_total: u(7)?,
            sigma_sq: f(8)?,
            v: f(9)?,
            red_grad: o(10)?,
            wall_ms: f(11)?,
            delta_sq: f(12)?,
            l_hat: f(13)?,
            v_k: f(14)?,
            sigma_sq_exact: o(15)?,
            delta_sq_exact: o(16)?,
            v_k_exact: o(17)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
    }
}
