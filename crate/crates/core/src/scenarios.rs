//! Gap scenarios, RMSE scoring and naive baselines.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ts::TimeSeries;

/// Default MCAR block length.
pub const MCAR_BLOCK_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Blackout,
    Mcar,
    TsNbr,
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blackout" => Ok(ScenarioKind::Blackout),
            "mcar" => Ok(ScenarioKind::Mcar),
            "tsnbr" | "ts-nbr" => Ok(ScenarioKind::TsNbr),
            _ => Err(Error::invalid(format!(
                "unknown scenario '{s}', expected blackout, mcar or tsnbr"
            ))),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Blackout => "blackout",
            ScenarioKind::Mcar => "mcar",
            ScenarioKind::TsNbr => "tsnbr",
        })
    }
}

/// Cells removed by a generator, coordinate-major like [`TimeSeries`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapMask {
    n: usize,
    d: usize,
    removed: Vec<bool>,
}

impl GapMask {
    pub fn new(n: usize, d: usize) -> Self {
        GapMask {
            n,
            d,
            removed: vec![false; n * d],
        }
    }

    /// Mask of every missing cell of `ts`.
    pub fn missing_of(ts: &TimeSeries) -> Self {
        let mut mask = GapMask::new(ts.n(), ts.d());
        for j in 0..ts.d() {
            for i in 0..ts.n() {
                if !ts.is_observed(i, j) {
                    mask.insert(i, j);
                }
            }
        }
        mask
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        self.removed[j * self.n + i] = true;
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.removed[j * self.n + i]
    }

    pub fn count(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// 0-based `(row, col)` cells in row-major order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.d {
                if self.contains(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn check(&self, ts: &TimeSeries) -> Result<()> {
        if self.n != ts.n() || self.d != ts.d() {
            return Err(Error::shape(format!(
                "mask is {}x{}, series is {}x{}",
                self.n,
                self.d,
                ts.n(),
                ts.d()
            )));
        }
        Ok(())
    }

    /// CSV with header `row,col`, both 1-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["row", "col"])?;
        for (i, j) in self.cells() {
            out.write_record([(i + 1).to_string(), (j + 1).to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, n: usize, d: usize) -> Result<Self> {
        let mut mask = GapMask::new(n, d);
        let mut rdr = csv::Reader::from_reader(r);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<usize> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<usize>().ok())
                    .ok_or_else(|| Error::invalid(format!("mask line {}: bad cell", line + 2)))
            };
            let (row, col) = (parse(0)?, parse(1)?);
            if row == 0 || row > n || col == 0 || col > d {
                return Err(Error::invalid(format!(
                    "mask line {}: cell ({row}, {col}) outside {n}x{d}",
                    line + 2
                )));
            }
            mask.insert(row - 1, col - 1);
        }
        Ok(mask)
    }
}

fn observed_run_starts(ts: &TimeSeries, coords: &[usize], len: usize) -> Vec<usize> {
    let n = ts.n();
    let mut starts = Vec::new();
    let mut run = 0;
    for i in 0..n {
        if coords.iter().all(|&j| ts.is_observed(i, j)) {
            run += 1;
        } else {
            run = 0;
        }
        if run >= len {
            starts.push(i + 1 - len);
        }
    }
    starts
}

fn check_gap_len(ts: &TimeSeries, gap_len: usize) -> Result<()> {
    if gap_len == 0 || gap_len >= ts.n() {
        return Err(Error::invalid(format!(
            "gap length {gap_len} must be in 1..{} for a series of length {}",
            ts.n(),
            ts.n()
        )));
    }
    Ok(())
}

fn remove_block(ts: &mut TimeSeries, mask: &mut GapMask, start: usize, len: usize, coords: &[usize]) {
    for i in start..start + len {
        for &j in coords {
            ts.remove(i, j);
            mask.insert(i, j);
        }
    }
}

/// One block of `gap_len` steps removed from every coordinate at a seeded
/// start where all cells are observed.
pub fn gen_blackout(ts: &TimeSeries, gap_len: usize, seed: u64) -> Result<(TimeSeries, GapMask)> {
    check_gap_len(ts, gap_len)?;
    let coords: Vec<usize> = (0..ts.d()).collect();
    let starts = observed_run_starts(ts, &coords, gap_len);
    if starts.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no fully observed stretch of {gap_len} steps"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = starts[rng.random_range(0..starts.len())];
    let mut out = ts.clone();
    let mut mask = GapMask::new(ts.n(), ts.d());
    remove_block(&mut out, &mut mask, start, gap_len, &coords);
    Ok((out, mask))
}

/// Removes observed blocks of `block_len` from randomly chosen coordinates
/// until the missing fraction reaches `rate`.
pub fn gen_mcar(ts: &TimeSeries, rate: f64, block_len: usize, seed: u64) -> Result<(TimeSeries, GapMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("missing rate {rate} outside [0, 1)")));
    }
    if block_len == 0 || block_len > ts.n() {
        return Err(Error::invalid(format!(
            "block length {block_len} must be in 1..={}",
            ts.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ts.clone();
    let mut mask = GapMask::new(ts.n(), ts.d());
    let mut open: Vec<usize> = (0..ts.d()).collect();
    while out.missing_fraction() < rate {
        if open.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no observed block of {block_len} left at missing fraction {:.4}",
                out.missing_fraction()
            )));
        }
        let pick = rng.random_range(0..open.len());
        let j = open[pick];
        let starts = observed_run_starts(&out, &[j], block_len);
        if starts.is_empty() {
            open.remove(pick);
            continue;
        }
        let start = starts[rng.random_range(0..starts.len())];
        remove_block(&mut out, &mut mask, start, block_len, &[j]);
    }
    Ok((out, mask))
}

/// Default TS-NBR gap: a tenth of the series.
pub fn default_ts_nbr_gap(n: usize) -> usize {
    n / 10
}

/// One block of `gap_len` steps removed from coordinate `coord` (0-based).
pub fn gen_ts_nbr(ts: &TimeSeries, coord: usize, gap_len: usize, seed: u64) -> Result<(TimeSeries, GapMask)> {
    if coord >= ts.d() {
        return Err(Error::invalid(format!(
            "coordinate {} out of range 1..={}",
            coord + 1,
            ts.d()
        )));
    }
    check_gap_len(ts, gap_len)?;
    let starts = observed_run_starts(ts, &[coord], gap_len);
    if starts.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no observed stretch of {gap_len} steps in coordinate {}",
            coord + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = starts[rng.random_range(0..starts.len())];
    let mut out = ts.clone();
    let mut mask = GapMask::new(ts.n(), ts.d());
    remove_block(&mut out, &mut mask, start, gap_len, &[coord]);
    Ok((out, mask))
}

/// Root mean squared error over paired values.
pub fn rmse_values(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::shape(format!(
            "{} truth values vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("nothing to score"));
    }
    let sum: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sum / truth.len() as f64).sqrt())
}

fn masked_pairs(truth: &TimeSeries, pred: &TimeSeries, mask: &GapMask, coord: Option<usize>) -> Result<(Vec<f64>, Vec<f64>)> {
    truth.same_shape(pred)?;
    mask.check(truth)?;
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for j in coord.map_or(0..truth.d(), |c| c..c + 1) {
        for i in 0..truth.n() {
            if !mask.contains(i, j) {
                continue;
            }
            match (truth.get(i, j), pred.get(i, j)) {
                (Some(a), Some(b)) => {
                    t.push(a);
                    p.push(b);
                }
                (None, _) => {
                    return Err(Error::invalid(format!(
                        "truth missing at row {}, col {}",
                        i + 1,
                        j + 1
                    )))
                }
                (_, None) => {
                    return Err(Error::invalid(format!(
                        "prediction missing at row {}, col {}",
                        i + 1,
                        j + 1
                    )))
                }
            }
        }
    }
    Ok((t, p))
}

/// RMSE over the cells of `mask`.
pub fn rmse(truth: &TimeSeries, pred: &TimeSeries, mask: &GapMask) -> Result<f64> {
    let (t, p) = masked_pairs(truth, pred, mask, None)?;
    rmse_values(&t, &p)
}

/// Per-coordinate RMSE over the cells of `mask`; `None` where a coordinate
/// has no masked cell.
pub fn rmse_per_coord(truth: &TimeSeries, pred: &TimeSeries, mask: &GapMask) -> Result<Vec<Option<f64>>> {
    (0..truth.d())
        .map(|j| {
            let (t, p) = masked_pairs(truth, pred, mask, Some(j))?;
            if t.is_empty() {
                Ok(None)
            } else {
                rmse_values(&t, &p).map(Some)
            }
        })
        .collect()
}

/// Fills each gap with the coordinate's observed mean.
pub fn baseline_mean(ts: &TimeSeries) -> Result<TimeSeries> {
    let mut out = ts.clone();
    for j in 0..ts.d() {
        let observed: Vec<f64> = ts.coord(j).iter().copied().filter(|v| v.is_finite()).collect();
        if observed.is_empty() {
            return Err(Error::EmptyCoordinate(j));
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for i in 0..ts.n() {
            if !ts.is_observed(i, j) {
                out.set(i, j, mean);
            }
        }
    }
    Ok(out)
}

/// Linear interpolation between the nearest observed neighbors, flat beyond
/// the first and last observation.
pub fn baseline_linear(ts: &TimeSeries) -> Result<TimeSeries> {
    let mut out = ts.clone();
    for j in 0..ts.d() {
        let col = ts.coord(j);
        let known: Vec<usize> = (0..ts.n()).filter(|&i| col[i].is_finite()).collect();
        if known.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "coordinate {} needs two observed points for linear interpolation",
                j + 1
            )));
        }
        let (first, last) = (known[0], known[known.len() - 1]);
        for i in 0..first {
            out.set(i, j, col[first]);
        }
        for i in last + 1..ts.n() {
            out.set(i, j, col[last]);
        }
        for w in known.windows(2) {
            let (a, b) = (w[0], w[1]);
            let span = (b - a) as f64;
            for i in a + 1..b {
                let t = (i - a) as f64 / span;
                out.set(i, j, col[a] + t * (col[b] - col[a]));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(cols: Vec<Vec<f64>>) -> TimeSeries {
        TimeSeries::from_unnamed(cols).unwrap()
    }

    #[test]
    fn linear_and_mean_examples() {
        let nan = f64::NAN;
        let ts = series(vec![vec![1.0, nan, 3.0]]);
        assert_eq!(baseline_linear(&ts).unwrap().coord(0), &[1.0, 2.0, 3.0]);
        let ts = series(vec![vec![nan, 5.0, 6.0]]);
        assert_eq!(baseline_linear(&ts).unwrap().coord(0), &[5.0, 5.0, 6.0]);
        let ts = series(vec![vec![4.0, nan, 4.0, 4.0]]);
        assert_eq!(baseline_mean(&ts).unwrap().get(1, 0), Some(4.0));
        assert!(baseline_linear(&series(vec![vec![nan, 1.0, nan]])).is_err());
    }

    #[test]
    fn scenario_names_parse() {
        assert_eq!("Blackout".parse::<ScenarioKind>().unwrap(), ScenarioKind::Blackout);
        assert_eq!("ts-nbr".parse::<ScenarioKind>().unwrap(), ScenarioKind::TsNbr);
        assert!("random".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn mask_csv_round_trip() {
        let mut mask = GapMask::new(4, 2);
        mask.insert(0, 1);
        mask.insert(3, 0);
        let mut buf = Vec::new();
        mask.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "row,col\n1,2\n4,1\n");
        assert_eq!(GapMask::read_csv(&buf[..], 4, 2).unwrap(), mask);
        assert!(GapMask::read_csv(&b"row,col\n5,1\n"[..], 4, 2).is_err());
    }
}
