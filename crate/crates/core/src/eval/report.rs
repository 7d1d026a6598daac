use std::collections::HashMap;
use std::fmt::Write;

use crate::error::{Error, Result};

/// Pixel-wise MSE broken down by horizon and by tile.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub predictor: String,
    pub points: usize,
    /// Indexed by horizon (0 is t+1).
    pub horizon_mse: Vec<f64>,
    pub horizon_count: Vec<u64>,
    /// Indexed `[row][col]`.
    pub tile_mse: Vec<Vec<f64>>,
    pub tile_count: Vec<Vec<u64>>,
    pub overall_mse: f64,
    pub count: u64,
}

impl EvalReport {
    /// Builds the report from squared-error sums `sums[h][row][col]` and the
    /// matching value counts.
    pub fn from_sums(predictor: &str, points: usize, sums: &[Vec<Vec<f64>>], counts: &[Vec<Vec<u64>>]) -> Self {
        let ratio = |s: f64, n: u64| if n == 0 { 0.0 } else { s / n as f64 };
        let rows = sums.first().map_or(0, Vec::len);
        let cols = sums.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut horizon_mse = Vec::new();
        let mut horizon_count = Vec::new();
        let mut tile_sum = vec![vec![0.0; cols]; rows];
        let mut tile_count = vec![vec![0u64; cols]; rows];
        let (mut total, mut count) = (0.0, 0u64);
        for (hs, hc) in sums.iter().zip(counts) {
            let (mut s, mut n) = (0.0, 0u64);
            for i in 0..rows {
                for j in 0..cols {
                    s += hs[i][j];
                    n += hc[i][j];
                    tile_sum[i][j] += hs[i][j];
                    tile_count[i][j] += hc[i][j];
                }
            }
            horizon_mse.push(ratio(s, n));
            horizon_count.push(n);
            total += s;
            count += n;
        }
        let tile_mse = tile_sum
            .iter()
            .zip(&tile_count)
            .map(|(s, n)| s.iter().zip(n).map(|(&s, &n)| ratio(s, n)).collect())
            .collect();
        EvalReport {
            predictor: predictor.to_string(),
            points,
            horizon_mse,
            horizon_count,
            tile_mse,
            tile_count,
            overall_mse: ratio(total, count),
            count,
        }
    }

    /// Human-readable table followed by a `[values]` block of `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "predictor: {}", self.predictor);
        let _ = writeln!(s, "predicting points: {}", self.points);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<8} {:>14} {:>12}", "horizon", "mse", "values");
        for (h, (m, n)) in self.horizon_mse.iter().zip(&self.horizon_count).enumerate() {
            let _ = writeln!(s, "{:<8} {:>14.8} {:>12}", format!("t+{}", h + 1), m, n);
        }
        let _ = writeln!(s, "{:<8} {:>14.8} {:>12}", "overall", self.overall_mse, self.count);
        let _ = writeln!(s);
        let _ = writeln!(s, "per-tile mse:");
        for row in &self.tile_mse {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(s, "  {}", cells.join(" "));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[values]");
        let _ = writeln!(s, "predictor={}", self.predictor);
        let _ = writeln!(s, "points={}", self.points);
        let _ = writeln!(s, "horizons={}", self.horizon_mse.len());
        let _ = writeln!(s, "rows={}", self.tile_mse.len());
        let _ = writeln!(s, "cols={}", self.tile_mse.first().map_or(0, Vec::len));
        for (h, (m, n)) in self.horizon_mse.iter().zip(&self.horizon_count).enumerate() {
            let _ = writeln!(s, "horizon.{}.mse={m:?}", h + 1);
            let _ = writeln!(s, "horizon.{}.count={n}", h + 1);
        }
        for (i, (row, counts)) in self.tile_mse.iter().zip(&self.tile_count).enumerate() {
            for (j, (m, n)) in row.iter().zip(counts).enumerate() {
                let _ = writeln!(s, "tile.{i}.{j}.mse={m:?}");
                let _ = writeln!(s, "tile.{i}.{j}.count={n}");
            }
        }
        let _ = writeln!(s, "overall.mse={:?}", self.overall_mse);
        let _ = writeln!(s, "overall.count={}", self.count);
        s
    }

    /// Reads the `[values]` block written by [`EvalReport::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        let block = text
            .split_once("[values]")
            .ok_or_else(|| Error::Malformed("report has no [values] block".into()))?
            .1;
        let kv: HashMap<&str, &str> = block
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Malformed(format!("report is missing {k}")));
        fn num<N: std::str::FromStr>(k: &str, v: &str) -> Result<N> {
            v.parse().map_err(|_| Error::Malformed(format!("report value {k}={v} is not a number")))
        }
        let horizons: usize = num("horizons", get("horizons")?)?;
        let rows: usize = num("rows", get("rows")?)?;
        let cols: usize = num("cols", get("cols")?)?;
        let mut horizon_mse = Vec::with_capacity(horizons);
        let mut horizon_count = Vec::with_capacity(horizons);
        for h in 1..=horizons {
            let k = format!("horizon.{h}.mse");
            horizon_mse.push(num(&k, get(&k)?)?);
            let k = format!("horizon.{h}.count");
            horizon_count.push(num(&k, get(&k)?)?);
        }
        let mut tile_mse = vec![vec![0.0; cols]; rows];
        let mut tile_count = vec![vec![0; cols]; rows];
        for i in 0..rows {
            for j in 0..cols {
                let k = format!("tile.{i}.{j}.mse");
                tile_mse[i][j] = num(&k, get(&k)?)?;
                let k = format!("tile.{i}.{j}.count");
                tile_count[i][j] = num(&k, get(&k)?)?;
            }
        }
        Ok(EvalReport {
            predictor: get("predictor")?.to_string(),
            points: num("points", get("points")?)?,
            horizon_mse,
            horizon_count,
            tile_mse,
            tile_count,
            overall_mse: num("overall.mse", get("overall.mse")?)?,
            count: num("overall.count", get("overall.count")?)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_and_text_round_trip() {
        let sums = vec![vec![vec![1.0, 2.0]], vec![vec![0.5, 0.0]]];
        let counts = vec![vec![vec![10, 20]], vec![vec![10, 20]]];
        let r = EvalReport::from_sums("x", 2, &sums, &counts);
        assert_eq!(r.horizon_mse, vec![0.1, 0.5 / 30.0]);
        assert_eq!(r.tile_mse, vec![vec![1.5 / 20.0, 2.0 / 40.0]]);
        assert_eq!(r.overall_mse, 3.5 / 60.0);
        assert_eq!(r.count, 60);
        let text = r.to_text();
        assert!(text.contains("t+2"));
        assert_eq!(EvalReport::parse(&text).unwrap(), r);
    }

    #[test]
    fn missing_block_is_malformed() {
        assert!(matches!(EvalReport::parse("nothing"), Err(Error::Malformed(_))));
    }
}
