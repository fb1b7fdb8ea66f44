//! Run traces and their CSV serialization.
//!
//! Schemas (documented in the README):
//!   trace.csv   -> run,iter,t,dt,loss,<metric columns>
//!   samples.csv -> run,particle,x0..x{d-1}
//! Floats are written with 17 significant digits so every value
//! round-trips exactly. The trace ends with a wall-clock comment line,
//! which is why byte-identity across repeated runs is promised for
//! samples.csv only.

use std::io::Write;

use ndarray::Array2;

/// 17 significant digits; round-trip exact for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone)]
pub struct RecordRow {
    pub iter: u64,
    pub t: f64,
    pub dt: f64,
    pub loss: f64,
    pub metrics: Vec<f64>,
}

/// Per-iteration trace of one sampler run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Run identifier (the seed).
    pub run: u64,
    pub metric_names: Vec<String>,
    pub rows: Vec<RecordRow>,
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn new(run: u64, metric_names: Vec<String>) -> Self {
        Self {
            run,
            metric_names,
            rows: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn push(&mut self, iter: u64, t: f64, dt: f64, loss: f64, metrics: Vec<f64>) {
        debug_assert_eq!(metrics.len(), self.metric_names.len());
        if let Some(last) = self.rows.last() {
            debug_assert!(t >= last.t, "trace time went backwards");
        }
        self.rows.push(RecordRow {
            iter,
            t,
            dt,
            loss,
            metrics,
        });
    }

    /// Total particle-moving iterations recorded so far.
    pub fn iterations(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.iter)
    }

    pub fn final_metric(&self, name: &str) -> Option<f64> {
        let idx = self.metric_names.iter().position(|n| n == name)?;
        self.rows.last().map(|r| r.metrics[idx])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "run,iter,t,dt,loss")?;
        for name in &self.metric_names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for row in &self.rows {
            write!(
                w,
                "{},{},{},{},{}",
                self.run,
                row.iter,
                fmt_f64(row.t),
                fmt_f64(row.dt),
                fmt_f64(row.loss)
            )?;
            for m in &row.metrics {
                write!(w, ",{}", fmt_f64(*m))?;
            }
            writeln!(w)?;
        }
        writeln!(w, "# wall_clock_seconds,{}", fmt_f64(self.wall_seconds))?;
        Ok(())
    }
}

/// Final particle positions, one row per particle.
pub fn write_samples_csv<W: Write>(mut w: W, run: u64, positions: &Array2<f64>) -> std::io::Result<()> {
    write!(w, "run,particle")?;
    for j in 0..positions.ncols() {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;
    for i in 0..positions.nrows() {
        write!(w, "{run},{i}")?;
        for j in 0..positions.ncols() {
            write!(w, ",{}", fmt_f64(positions[[i, j]]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 12345.678e-9, -2.0f64.powi(-40), f64::MAX] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{s}");
        }
    }

    #[test]
    fn trace_csv_shape() {
        let mut rec = RunRecord::new(7, vec!["score1".into()]);
        rec.push(1, 0.1, 0.1, 2.0, vec![0.25]);
        rec.push(2, 0.3, 0.2, 1.0, vec![0.5]);
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "run,iter,t,dt,loss,score1");
        assert!(lines.next().unwrap().starts_with("7,1,"));
        assert!(text.trim_end().ends_with(&fmt_f64(0.0)));
        assert!(text.contains("# wall_clock_seconds"));
    }

    #[test]
    fn samples_csv_shape() {
        let positions = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, 3, &positions).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "run,particle,x0,x1");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("3,0,"));
    }
}
