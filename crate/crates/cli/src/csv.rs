//! Plain CSV emission. Floats carry 17 significant digits so that every value
//! round-trips exactly.

use std::io::{self, Write};

use quartic_core::stats::SampleSummary;

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per `(replicate, t)`: columns `replicate, t, value`.
pub fn write_long(mut w: impl Write, times: &[f64], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(w, "replicate,t,value")?;
    for (m, row) in rows.iter().enumerate() {
        for (t, v) in times.iter().zip(row) {
            writeln!(w, "{m},{},{}", fmt_float(*t), fmt_float(*v))?;
        }
    }
    w.flush()
}

/// One row per `t`: columns `t, count, mean, std_dev, std_error`.
pub fn write_aggregate(mut w: impl Write, times: &[f64], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(w, "t,count,mean,std_dev,std_error")?;
    for (i, t) in times.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        let s = SampleSummary::from_slice(&col);
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_float(*t),
            s.count(),
            fmt_float(s.mean()),
            fmt_float(s.std_dev()),
            fmt_float(s.se_mean())
        )?;
    }
    w.flush()
}
